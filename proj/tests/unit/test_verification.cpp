#include "claimver/verification.hpp"

#include "temp_dir.hpp"

#include <doctest.h>

#include <random>

using namespace claimver;

namespace {

const char *const kKennedyBio =
    "Caroline Bouvier Kennedy (born November 27, 1957) is an American author, attorney, and diplomat who served as "
    "the United States Ambassador to Australia.";

AttributedEvidence full_item(const Claim &claim, std::string id, std::string text) {
    const std::vector<EvidencePassage> passages{EvidencePassage::make(std::move(id), std::move(text))};
    return attribute_full(claim, passages).front();
}

// Records batch sizes and fails on request.
class CountingClassifier final : public NLIClassifier {
  public:
    std::vector<std::size_t> batches;
    bool fail = false;
    bool retryable = true;
    [[nodiscard]] std::string model_id() const override { return "counting"; }
    [[nodiscard]] std::size_t max_in_flight() const override { return 3; }
    [[nodiscard]] std::vector<Eigen::Vector3d> classify_batch(std::span<const NLIInput> inputs) override {
        if (fail) throw BackendError("socket closed", retryable);
        batches.push_back(inputs.size());
        std::vector<Eigen::Vector3d> out;
        for (const NLIInput &input : inputs) {
            const double e = static_cast<double>(input.premise.size() % 7) / 10.0;
            out.emplace_back(e, 0.9 - e, 0.1);
        }
        return out;
    }
};

}  // namespace

TEST_CASE("input formatting") {
    const Claim claim = Claim::make("", "Caroline Kennedy is American.", VerdictLabel::Supported, DatasetKind::Custom);
    const AttributedEvidence item = full_item(claim, "e0", kKennedyBio);
    CHECK(format_input(claim, item, "[SEP]") ==
          std::string("Caroline Kennedy is American. [SEP] ") + kKennedyBio);
    CHECK(format_input(claim, item, "") == std::string("Caroline Kennedy is American. ") + kKennedyBio);

    AttributedEvidence span = item;
    span.mode = AttributionMode::Span;
    span.span_text = "an American author";
    CHECK(format_input(claim, span, "</s>") == "Caroline Kennedy is American. </s> an American author");

    StubClassifier stub(0, "stub", 512, "");
    const PreparedInput prepared = make_input(claim, item, stub);
    CHECK(prepared.input.premise == kKennedyBio);
    CHECK(prepared.input.hypothesis == "Caroline Kennedy is American.");
    CHECK_FALSE(prepared.truncated);
}

TEST_CASE("raw verdict is the argmax with first-listed tie winner") {
    const Claim claim = Claim::make("c1", "claim", std::nullopt, DatasetKind::Custom);
    const AttributedEvidence item = full_item(claim, "e1", "evidence");
    StubClassifier stub;
    stub.set_override("evidence", "claim", Eigen::Vector3d(0.2, 0.3, 0.5));
    const RawVerdict nei = verify_pair(claim, item, stub);
    CHECK(nei.label == VerdictLabel::NotEnoughInfo);
    CHECK(nei.confidence == 0.5);
    CHECK(nei.claim_id == "c1");
    CHECK(nei.evidence_id == "e1");
    CHECK(nei.model_id == "stub-nli");

    stub.set_override("evidence", "claim", Eigen::Vector3d::Constant(1.0 / 3.0));
    const RawVerdict uniform = verify_pair(claim, item, stub);
    CHECK(uniform.label == VerdictLabel::Supported);
    CHECK(uniform.confidence == doctest::Approx(1.0 / 3.0));

    // NLI order is (entailment, contradiction, neutral)
    stub.set_override("evidence", "claim", Eigen::Vector3d(0.1, 0.8, 0.1));
    CHECK(verify_pair(claim, item, stub).label == VerdictLabel::Refuted);
}

TEST_CASE("truncation cuts evidence from the right and never the claim") {
    const TruncatedEvidence fits = truncate_evidence("a b", "c d e", 5);
    CHECK(fits.text == "c d e");
    CHECK_FALSE(fits.truncated);

    const TruncatedEvidence cut = truncate_evidence("a b", "c  d e f", 4);
    CHECK(cut.text == "c  d");
    CHECK(cut.truncated);

    const TruncatedEvidence minimal = truncate_evidence("a b c d e", "x y z", 3);
    CHECK(minimal.text == "x");
    CHECK(minimal.truncated);

    const Claim claim = Claim::make("", "one two three", std::nullopt, DatasetKind::Custom);
    std::string long_evidence;
    for (int i = 0; i < 600; ++i) long_evidence += "w" + std::to_string(i) + " ";
    const AttributedEvidence item = full_item(claim, "e", long_evidence);
    StubClassifier stub(0, "stub", 10);
    const PreparedInput prepared = make_input(claim, item, stub);
    CHECK(prepared.truncated);
    CHECK(prepared.input.premise == "w0 w1 w2 w3 w4 w5 w6");
    CHECK(prepared.input.hypothesis == "one two three");
    const RawVerdict r = verify_pair(claim, item, stub);
    CHECK(r.truncated);
}

TEST_CASE("batching does not change results and respects the in-flight cap") {
    std::vector<Claim> claims;
    std::vector<AttributedEvidence> items;
    for (int i = 0; i < 10; ++i) claims.push_back(Claim::make("c" + std::to_string(i), "claim " + std::to_string(i), std::nullopt, DatasetKind::Custom));
    for (int i = 0; i < 10; ++i) items.push_back(full_item(claims[static_cast<std::size_t>(i)], "e", std::string(static_cast<std::size_t>(i + 1), 'x')));
    std::vector<VerificationRequest> requests;
    for (std::size_t i = 0; i < 10; ++i) requests.push_back({&claims[i], &items[i]});

    CountingClassifier counting;
    Verifier capped(counting, nullptr, 100);
    const auto batched = capped.verify(requests);
    CHECK(counting.batches == std::vector<std::size_t>{3, 3, 3, 1});

    CountingClassifier single;
    Verifier one(single, nullptr, 1);
    const auto unbatched = one.verify(requests);
    CHECK(single.batches.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(batched[i].probs == unbatched[i].probs);
        CHECK(batched[i].claim_id == claims[i].id);
    }
}

TEST_CASE("cached pairs never reach the classifier") {
    TempDir dir;
    VerdictCache cache(dir.path());
    const Claim claim = Claim::make("c", "claim", std::nullopt, DatasetKind::Custom);
    const AttributedEvidence a = full_item(claim, "a", "first passage");
    const AttributedEvidence b = full_item(claim, "b", "second passage");
    const std::vector<VerificationRequest> requests{{&claim, &a}, {&claim, &b}};

    StubClassifier stub(9);
    Verifier cold(stub, &cache);
    const auto first = cold.verify(requests);
    CHECK(stub.calls() == 2);
    CHECK(cold.cache_misses() == 2);

    stub.reset_calls();
    Verifier warm(stub, &cache);
    const auto second = warm.verify(requests);
    CHECK(stub.calls() == 0);
    CHECK(warm.cache_hits() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(first[i].probs == second[i].probs);
        CHECK(first[i].label == second[i].label);
    }

    StubClassifier other_model(9, "another-model");
    Verifier separate(other_model, &cache);
    (void)separate.verify(requests);
    CHECK(other_model.calls() == 2);
}

TEST_CASE("classifier failures carry claim and evidence ids") {
    const Claim claim = Claim::make("claim-7", "claim", std::nullopt, DatasetKind::Custom);
    const AttributedEvidence item = full_item(claim, "evidence-3", "text");
    CountingClassifier failing;
    failing.fail = true;
    try {
        (void)verify_pair(claim, item, failing);
        FAIL("expected an error");
    } catch (const BackendError &e) {
        const std::string what = e.what();
        CHECK(what.find("claim-7") != std::string::npos);
        CHECK(what.find("evidence-3") != std::string::npos);
        CHECK(e.retryable());
    }
    failing.retryable = false;
    try {
        (void)verify_pair(claim, item, failing);
        FAIL("expected an error");
    } catch (const BackendError &e) {
        CHECK_FALSE(e.retryable());
    }
}
