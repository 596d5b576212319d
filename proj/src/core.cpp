#include "claimver/core.hpp"

#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>

#include <algorithm>
#include <cctype>
#include <cmath>

namespace claimver {

std::string_view to_string(VerdictLabel label) noexcept {
    switch (label) {
        case VerdictLabel::Supported: return "SUPPORTED";
        case VerdictLabel::Refuted: return "REFUTED";
        case VerdictLabel::NotEnoughInfo: return "NOT_ENOUGH_INFO";
    }
    return "NOT_ENOUGH_INFO";
}

std::string_view to_string(NLILabel label) noexcept {
    switch (label) {
        case NLILabel::Entailment: return "ENTAILMENT";
        case NLILabel::Contradiction: return "CONTRADICTION";
        case NLILabel::Neutral: return "NEUTRAL";
    }
    return "NEUTRAL";
}

std::optional<VerdictLabel> parse_verdict_label(std::string_view name) noexcept {
    for (const VerdictLabel label : kVerdictLabels) {
        if (to_string(label) == name) {
            return label;
        }
    }
    return std::nullopt;
}

std::string_view to_string(DatasetKind kind) noexcept {
    switch (kind) {
        case DatasetKind::Fever: return "fever";
        case DatasetKind::ClimateFever: return "climate-fever";
        case DatasetKind::Custom: return "custom";
    }
    return "custom";
}

std::optional<DatasetKind> parse_dataset_kind(std::string_view name) noexcept {
    for (const DatasetKind kind : {DatasetKind::Fever, DatasetKind::ClimateFever, DatasetKind::Custom}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    return std::nullopt;
}

std::string_view trim(std::string_view text) noexcept {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && is_space(text.front())) {
        text.remove_prefix(1);
    }
    while (!text.empty() && is_space(text.back())) {
        text.remove_suffix(1);
    }
    return text;
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string nfc_normalize(std::string_view text) {
    UErrorCode status = U_ZERO_ERROR;
    int32_t length = 0;
    // preflight: rejects ill-formed UTF-8 instead of substituting U+FFFD
    u_strFromUTF8(nullptr, 0, &length, text.data(), static_cast<int32_t>(text.size()), &status);
    if (status != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(status)) {
        return std::string(text);
    }
    status = U_ZERO_ERROR;
    const icu::Normalizer2 *nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) {
        return std::string(text);
    }
    const icu::UnicodeString source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    if (nfc->isNormalized(source, status) && U_SUCCESS(status)) {
        return std::string(text);
    }
    status = U_ZERO_ERROR;
    const icu::UnicodeString normalized = nfc->normalize(source, status);
    if (U_FAILURE(status)) {
        return std::string(text);
    }
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int digest_len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &digest_len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * digest_len);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0x0F]);
    }
    return out;
}

std::string derive_claim_id(DatasetKind dataset, std::string_view text) {
    std::string material(to_string(dataset));
    material.push_back('\x1f');
    material.append(nfc_normalize(text));
    return sha256_hex(material).substr(0, 16);
}

Claim Claim::make(std::string id, std::string text, std::optional<VerdictLabel> gold, DatasetKind dataset) {
    if (trim(text).empty()) {
        throw InvalidArgument("claim text is empty");
    }
    if (id.empty()) {
        id = derive_claim_id(dataset, text);
    }
    return Claim{std::move(id), std::move(text), gold, dataset};
}

EvidencePassage EvidencePassage::make(std::string id, std::string text, std::optional<std::string> source_doc) {
    if (trim(text).empty()) {
        throw InvalidArgument("evidence passage '" + id + "' has empty text");
    }
    return EvidencePassage{std::move(id), std::move(text), std::move(source_doc)};
}

bool is_normalized(const Eigen::Vector3d &values, double tolerance) noexcept {
    if (!values.allFinite()) {
        return false;
    }
    if ((values.array() < 0.0).any() || (values.array() > 1.0).any()) {
        return false;
    }
    return std::abs(values.sum() - 1.0) <= tolerance;
}

ProbabilityVector::ProbabilityVector() : values_(Eigen::Vector3d::Constant(1.0 / 3.0)) {}

ProbabilityVector ProbabilityVector::from_verdict_order(const Eigen::Vector3d &values) {
    if (!is_normalized(values)) {
        throw InvalidArgument("not a probability distribution: (" + std::to_string(values[0]) + ", " +
                              std::to_string(values[1]) + ", " + std::to_string(values[2]) + ")");
    }
    return ProbabilityVector(values);
}

ProbabilityVector ProbabilityVector::from_verdict_order(double supported, double refuted, double nei) {
    return from_verdict_order(Eigen::Vector3d(supported, refuted, nei));
}

ProbabilityVector ProbabilityVector::from_nli_order(const Eigen::Vector3d &values) {
    Eigen::Vector3d reordered;
    for (const NLILabel label : kNLILabels) {
        reordered[static_cast<Eigen::Index>(index_of(map_nli_to_verdict(label)))] =
            values[static_cast<Eigen::Index>(index_of(label))];
    }
    return from_verdict_order(reordered);
}

ProbabilityVector ProbabilityVector::one_hot(VerdictLabel label) {
    Eigen::Vector3d values = Eigen::Vector3d::Zero();
    values[static_cast<Eigen::Index>(index_of(label))] = 1.0;
    return ProbabilityVector(values);
}

VerdictLabel ProbabilityVector::argmax() const noexcept {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < 3; ++i) {
        if (values_[i] > values_[best]) {
            best = i;
        }
    }
    return kVerdictLabels[static_cast<std::size_t>(best)];
}

}  // namespace claimver
