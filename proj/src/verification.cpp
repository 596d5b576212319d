#include "claimver/verification.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace claimver {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::size_t count_words(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (const char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words;
}

BackendError annotate(const BackendError &e, const std::string &claim_id, const std::string &evidence_id) {
    return BackendError("verification of claim '" + claim_id + "' against evidence '" + evidence_id + "' failed: " + e.what(),
                        e.retryable());
}

}  // namespace

RawVerdict RawVerdict::from_probs(std::string claim_id, std::string evidence_id, const ProbabilityVector &probs,
                                  std::string model_id, bool truncated) {
    return RawVerdict{std::move(claim_id), std::move(evidence_id), probs.argmax(), probs.max(), probs, std::move(model_id), truncated};
}

std::string format_input(const Claim &claim, const AttributedEvidence &item, std::string_view separator) {
    std::string out = claim.text;
    out.push_back(' ');
    if (!separator.empty()) {
        out.append(separator);
        out.push_back(' ');
    }
    out.append(item.verification_text());
    return out;
}

TruncatedEvidence truncate_evidence(std::string_view claim_text, std::string_view evidence, std::size_t max_words) {
    const std::size_t claim_words = count_words(claim_text);
    const std::size_t budget = max_words > claim_words + 1 ? max_words - claim_words : 1;
    if (count_words(evidence) <= budget) {
        return {std::string(evidence), false};
    }
    std::size_t words = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        if (is_space(evidence[i])) {
            if (in_word && words == budget) {
                return {std::string(evidence.substr(0, i)), true};
            }
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return {std::string(evidence), false};
}

PreparedInput make_input(const Claim &claim, const AttributedEvidence &item, const NLIClassifier &classifier) {
    TruncatedEvidence evidence = truncate_evidence(claim.text, item.verification_text(), classifier.max_length());
    PreparedInput prepared;
    prepared.truncated = evidence.truncated;
    prepared.input.hypothesis = claim.text;
    prepared.input.joined = claim.text + " ";
    if (const std::string separator = classifier.separator(); !separator.empty()) {
        prepared.input.joined += separator + " ";
    }
    prepared.input.joined += evidence.text;
    prepared.input.premise = std::move(evidence.text);
    return prepared;
}

RawVerdict verify_pair(const Claim &claim, const AttributedEvidence &item, NLIClassifier &classifier) {
    Verifier verifier(classifier);
    const VerificationRequest request{&claim, &item};
    return verifier.verify(std::span<const VerificationRequest>(&request, 1)).front();
}

Verifier::Verifier(NLIClassifier &classifier, VerdictCache *cache, std::size_t batch_size)
    : classifier_(classifier), cache_(cache), batch_size_(batch_size == 0 ? classifier.max_in_flight() : batch_size) {
    batch_size_ = std::max<std::size_t>(1, std::min(batch_size_, classifier.max_in_flight()));
}

std::vector<RawVerdict> Verifier::verify(std::span<const VerificationRequest> requests) {
    const std::string model_id = classifier_.model_id();
    const std::string policy = std::string(kTruncationPolicyVersion) + "/" + std::to_string(classifier_.max_length());
    std::vector<std::optional<RawVerdict>> results(requests.size());
    std::vector<std::size_t> pending;
    std::vector<PreparedInput> prepared;
    std::vector<std::string> keys(requests.size());
    prepared.reserve(requests.size());

    for (std::size_t i = 0; i < requests.size(); ++i) {
        const Claim &claim = *requests[i].claim;
        const AttributedEvidence &item = *requests[i].item;
        if (trim(claim.text).empty() || trim(item.verification_text()).empty()) {
            throw InvalidArgument("empty verifier input for claim '" + claim.id + "', evidence '" + item.passage.id + "'");
        }
        prepared.push_back(make_input(claim, item, classifier_));
        if (cache_ != nullptr) {
            keys[i] = cache_key(model_id, item.verification_text(), claim.text, policy);
            if (const auto hit = cache_->get(keys[i])) {
                hits_.fetch_add(1);
                results[i] = RawVerdict::from_probs(claim.id, item.passage.id, hit->probs, model_id, hit->truncated);
                continue;
            }
            misses_.fetch_add(1);
        }
        pending.push_back(i);
    }

    for (std::size_t begin = 0; begin < pending.size(); begin += batch_size_) {
        const std::size_t end = std::min(pending.size(), begin + batch_size_);
        std::vector<NLIInput> batch;
        batch.reserve(end - begin);
        for (std::size_t j = begin; j < end; ++j) {
            batch.push_back(prepared[pending[j]].input);
        }
        const VerificationRequest &first = requests[pending[begin]];
        std::vector<Eigen::Vector3d> outputs;
        try {
            outputs = classifier_.classify_batch(batch);
        } catch (const BackendError &e) {
            throw annotate(e, first.claim->id, first.item->passage.id);
        } catch (const std::exception &e) {
            throw annotate(BackendError(e.what(), false), first.claim->id, first.item->passage.id);
        }
        if (outputs.size() != batch.size()) {
            throw annotate(BackendError("classifier returned " + std::to_string(outputs.size()) + " results for " +
                                            std::to_string(batch.size()) + " inputs",
                                        false),
                           first.claim->id, first.item->passage.id);
        }
        for (std::size_t j = begin; j < end; ++j) {
            const std::size_t i = pending[j];
            const VerificationRequest &request = requests[i];
            ProbabilityVector probs;
            try {
                probs = validate_nli_output(std::span<const double>(outputs[j - begin].data(), 3));
            } catch (const BackendError &e) {
                throw annotate(e, request.claim->id, request.item->passage.id);
            }
            if (cache_ != nullptr) {
                cache_->put(keys[i], CacheValue{probs, prepared[i].truncated});
            }
            results[i] = RawVerdict::from_probs(request.claim->id, request.item->passage.id, probs, model_id, prepared[i].truncated);
        }
    }

    std::vector<RawVerdict> out;
    out.reserve(results.size());
    for (auto &result : results) {
        out.push_back(std::move(*result));
    }
    return out;
}

}  // namespace claimver
