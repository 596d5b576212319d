#pragma once

#include "claimver/core.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace claimver {

/// One accepted line of a dataset file, with fields mapped onto the canonical schema.
struct DatasetRecord {
    std::size_t line{};  ///< 1-based line number in the source file
    std::string id;      ///< caller-supplied id, empty when the file carries none
    std::string claim_text;
    std::vector<std::string> evidence_texts;
    std::string gold_label_raw;  ///< empty when the row is unlabeled (custom datasets only)
    std::optional<VerdictLabel> gold_label;
    DatasetKind dataset{DatasetKind::Custom};
};

struct Rejection {
    std::size_t line{};
    std::string reason;
};

/// Per-label counts indexed by `index_of(VerdictLabel)`.
using ClassCounts = std::array<std::size_t, kNumLabels>;

/// Case-insensitive lookup in the dataset's label vocabulary.
/// Throws DataError naming the offending value when it is not in the vocabulary.
[[nodiscard]] VerdictLabel normalize_label(std::string_view raw, DatasetKind dataset);

/// Streaming reader over a line-delimited JSON file. Blank lines are skipped and
/// do not count as records; every other line is either accepted or rejected.
class DatasetReader {
  public:
    /// Throws DataError when the file cannot be opened.
    DatasetReader(const std::filesystem::path &path, DatasetKind dataset);

    /// Next accepted record, or nullopt at end of file. Rejected lines are
    /// recorded in `rejections()` and skipped.
    [[nodiscard]] std::optional<DatasetRecord> next();

    [[nodiscard]] const std::vector<Rejection> &rejections() const noexcept { return rejections_; }
    [[nodiscard]] std::size_t accepted() const noexcept { return accepted_; }
    [[nodiscard]] std::size_t total_lines() const noexcept { return accepted_ + rejections_.size(); }

  private:
    std::ifstream in_;
    DatasetKind dataset_;
    std::size_t line_no_{0};
    std::size_t accepted_{0};
    std::vector<Rejection> rejections_;
};

struct LoadResult {
    std::vector<DatasetRecord> records;
    std::vector<Rejection> rejections;
    std::size_t total_lines{};
};

[[nodiscard]] LoadResult load_dataset(const std::filesystem::path &path, DatasetKind dataset);

/// Parses a single line; exposed for tests. Throws DataError on any problem.
[[nodiscard]] DatasetRecord parse_record(std::string_view line, DatasetKind dataset, std::size_t line_no = 0);

[[nodiscard]] ClassCounts class_distribution(const std::vector<DatasetRecord> &records) noexcept;

/// Published class counts of the two reference snapshots; nullopt for custom data.
[[nodiscard]] std::optional<ClassCounts> reference_distribution(DatasetKind dataset) noexcept;

struct DistributionCheck {
    ClassCounts observed{};
    std::optional<ClassCounts> expected;
    [[nodiscard]] bool matches() const noexcept { return !expected || observed == *expected; }
};

[[nodiscard]] DistributionCheck check_distribution(const std::vector<DatasetRecord> &records, DatasetKind dataset);

/// Builds the claim and its evidence passages (ids `<claim>:e<k>`) from a record.
[[nodiscard]] std::pair<Claim, std::vector<EvidencePassage>> to_claim(const DatasetRecord &record);

}  // namespace claimver
