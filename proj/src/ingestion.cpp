#include "claimver/ingestion.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <utility>

namespace claimver {

namespace {

using json = nlohmann::json;

struct VocabularyEntry {
    std::string_view name;  // lower-case
    VerdictLabel label;
};

constexpr VocabularyEntry kFeverVocabulary[] = {
    {"entailment", VerdictLabel::Supported},
    {"contradiction", VerdictLabel::Refuted},
    {"neutral", VerdictLabel::NotEnoughInfo},
};

constexpr VocabularyEntry kClimateVocabulary[] = {
    {"supports", VerdictLabel::Supported},
    {"refutes", VerdictLabel::Refuted},
    {"not_enough_info", VerdictLabel::NotEnoughInfo},
};

constexpr VocabularyEntry kCanonicalVocabulary[] = {
    {"supported", VerdictLabel::Supported},
    {"refuted", VerdictLabel::Refuted},
    {"not_enough_info", VerdictLabel::NotEnoughInfo},
    {"nei", VerdictLabel::NotEnoughInfo},
};

// Field-name aliases: the canonical name first, then the snapshot-native names.
struct FieldAliases {
    std::initializer_list<std::string_view> id;
    std::initializer_list<std::string_view> claim;
    std::initializer_list<std::string_view> evidence;
    std::initializer_list<std::string_view> label;
};

const FieldAliases &aliases_for(DatasetKind dataset) {
    static const FieldAliases fever{{"id"}, {"claim", "hypothesis"}, {"evidence", "premise"}, {"label"}};
    static const FieldAliases climate{{"id", "claim_id"}, {"claim"}, {"evidence", "evidences"}, {"label", "claim_label"}};
    static const FieldAliases custom{{"id"}, {"claim"}, {"evidence"}, {"label"}};
    switch (dataset) {
        case DatasetKind::Fever: return fever;
        case DatasetKind::ClimateFever: return climate;
        case DatasetKind::Custom: return custom;
    }
    return custom;
}

const json *find_field(const json &object, std::initializer_list<std::string_view> names) {
    for (const std::string_view name : names) {
        const auto it = object.find(name);
        if (it != object.end() && !it->is_null()) {
            return &*it;
        }
    }
    return nullptr;
}

std::string evidence_entry_text(const json &entry, std::size_t k) {
    if (entry.is_string()) {
        return entry.get<std::string>();
    }
    if (entry.is_object()) {
        for (const char *key : {"evidence", "text"}) {
            const auto it = entry.find(key);
            if (it != entry.end() && it->is_string()) {
                return it->get<std::string>();
            }
        }
    }
    throw DataError("evidence entry " + std::to_string(k) + " is neither a string nor an object with an 'evidence' field");
}

}  // namespace

VerdictLabel normalize_label(std::string_view raw, DatasetKind dataset) {
    const std::string lowered = to_lower_ascii(trim(raw));
    const auto lookup = [&](auto &&vocabulary) -> std::optional<VerdictLabel> {
        for (const auto &entry : vocabulary) {
            if (entry.name == lowered) {
                return entry.label;
            }
        }
        return std::nullopt;
    };
    std::optional<VerdictLabel> label;
    switch (dataset) {
        case DatasetKind::Fever: label = lookup(kFeverVocabulary); break;
        case DatasetKind::ClimateFever: label = lookup(kClimateVocabulary); break;
        case DatasetKind::Custom:
            label = lookup(kCanonicalVocabulary);
            if (!label) label = lookup(kFeverVocabulary);
            if (!label) label = lookup(kClimateVocabulary);
            break;
    }
    if (!label) {
        throw DataError("unknown label '" + std::string(raw) + "' for dataset " + std::string(to_string(dataset)));
    }
    return *label;
}

DatasetRecord parse_record(std::string_view line, DatasetKind dataset, std::size_t line_no) {
    json object;
    try {
        object = json::parse(line);
    } catch (const json::parse_error &e) {
        throw DataError(std::string("malformed JSON: ") + e.what());
    }
    if (!object.is_object()) {
        throw DataError("record is not a JSON object");
    }
    const FieldAliases &names = aliases_for(dataset);

    DatasetRecord record;
    record.line = line_no;
    record.dataset = dataset;

    if (const json *id = find_field(object, names.id)) {
        record.id = id->is_string() ? id->get<std::string>() : id->dump();
    }

    const json *claim = find_field(object, names.claim);
    if (claim == nullptr || !claim->is_string()) {
        throw DataError("missing string field 'claim'");
    }
    record.claim_text = claim->get<std::string>();
    if (trim(record.claim_text).empty()) {
        throw DataError("claim text is empty");
    }

    if (const json *evidence = find_field(object, names.evidence)) {
        if (evidence->is_array()) {
            std::size_t k = 0;
            for (const json &entry : *evidence) {
                record.evidence_texts.push_back(evidence_entry_text(entry, k++));
            }
        } else {
            record.evidence_texts.push_back(evidence_entry_text(*evidence, 0));
        }
        for (std::size_t k = 0; k < record.evidence_texts.size(); ++k) {
            if (trim(record.evidence_texts[k]).empty()) {
                throw DataError("evidence entry " + std::to_string(k) + " is empty");
            }
        }
    }

    const json *label = find_field(object, names.label);
    if (label == nullptr) {
        if (dataset != DatasetKind::Custom) {
            throw DataError("missing field 'label'");
        }
    } else {
        if (!label->is_string()) {
            throw DataError("label " + label->dump() + " is not a string; numeric class ids are not accepted");
        }
        record.gold_label_raw = label->get<std::string>();
        record.gold_label = normalize_label(record.gold_label_raw, dataset);
    }
    return record;
}

DatasetReader::DatasetReader(const std::filesystem::path &path, DatasetKind dataset) : in_(path), dataset_(dataset) {
    if (!in_) {
        throw DataError("cannot open dataset file '" + path.string() + "'");
    }
}

std::optional<DatasetRecord> DatasetReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (trim(line).empty()) {
            continue;
        }
        try {
            DatasetRecord record = parse_record(line, dataset_, line_no_);
            ++accepted_;
            return record;
        } catch (const DataError &e) {
            rejections_.push_back({line_no_, e.what()});
        }
    }
    if (in_.bad()) {
        throw DataError("read error at line " + std::to_string(line_no_ + 1));
    }
    return std::nullopt;
}

LoadResult load_dataset(const std::filesystem::path &path, DatasetKind dataset) {
    DatasetReader reader(path, dataset);
    LoadResult result;
    while (auto record = reader.next()) {
        result.records.push_back(std::move(*record));
    }
    result.rejections = reader.rejections();
    result.total_lines = reader.total_lines();
    return result;
}

ClassCounts class_distribution(const std::vector<DatasetRecord> &records) noexcept {
    ClassCounts counts{};
    for (const DatasetRecord &record : records) {
        if (record.gold_label) {
            ++counts[index_of(*record.gold_label)];
        }
    }
    return counts;
}

std::optional<ClassCounts> reference_distribution(DatasetKind dataset) noexcept {
    switch (dataset) {
        case DatasetKind::Fever: return ClassCounts{792, 812, 683};
        case DatasetKind::ClimateFever: return ClassCounts{375, 164, 996};
        case DatasetKind::Custom: return std::nullopt;
    }
    return std::nullopt;
}

DistributionCheck check_distribution(const std::vector<DatasetRecord> &records, DatasetKind dataset) {
    return DistributionCheck{class_distribution(records), reference_distribution(dataset)};
}

std::pair<Claim, std::vector<EvidencePassage>> to_claim(const DatasetRecord &record) {
    Claim claim = Claim::make(record.id, record.claim_text, record.gold_label, record.dataset);
    std::vector<EvidencePassage> passages;
    passages.reserve(record.evidence_texts.size());
    for (std::size_t k = 0; k < record.evidence_texts.size(); ++k) {
        passages.push_back(EvidencePassage::make(claim.id + ":e" + std::to_string(k), record.evidence_texts[k]));
    }
    return {std::move(claim), std::move(passages)};
}

}  // namespace claimver
