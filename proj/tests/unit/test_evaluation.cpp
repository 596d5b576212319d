#include "claimver/evaluation.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace claimver;

namespace {

// Plain-loop reference for per-class P/R/F1 and both averages.
struct OracleReport {
    double p[3], r[3], f[3];
    std::size_t support[3];
    double macro_p, macro_r, macro_f, w_p, w_r, w_f, acc;
};

OracleReport oracle(const std::vector<VerdictLabel> &pred, const std::vector<VerdictLabel> &gold) {
    OracleReport o{};
    const std::size_t n = pred.size();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == gold[i] ? 1 : 0;
    o.acc = static_cast<double>(correct) / static_cast<double>(n);
    for (int c = 0; c < 3; ++c) {
        const VerdictLabel label = kVerdictLabels[static_cast<std::size_t>(c)];
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pred[i] == label && gold[i] == label) tp += 1;
            if (pred[i] == label && gold[i] != label) fp += 1;
            if (pred[i] != label && gold[i] == label) fn += 1;
        }
        o.p[c] = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        o.r[c] = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        o.f[c] = o.p[c] + o.r[c] > 0 ? 2 * o.p[c] * o.r[c] / (o.p[c] + o.r[c]) : 0.0;
        o.support[c] = static_cast<std::size_t>(tp + fn);
    }
    for (int c = 0; c < 3; ++c) {
        o.macro_p += o.p[c] / 3;
        o.macro_r += o.r[c] / 3;
        o.macro_f += o.f[c] / 3;
        const double share = static_cast<double>(o.support[c]) / static_cast<double>(n);
        o.w_p += share * o.p[c];
        o.w_r += share * o.r[c];
        o.w_f += share * o.f[c];
    }
    return o;
}

std::vector<VerdictLabel> random_labels(std::mt19937_64 &rng, std::size_t n, int skew) {
    std::discrete_distribution<int> d{1.0, 1.0 + skew, 2.0};
    std::vector<VerdictLabel> out(n);
    for (auto &l : out) l = kVerdictLabels[static_cast<std::size_t>(d(rng))];
    return out;
}

ClaimVerdicts claim(std::string id, VerdictLabel gold, std::vector<std::array<double, 3>> probs) {
    ClaimVerdicts c{std::move(id), gold, {}, {}};
    for (const auto &p : probs) {
        c.raws.push_back(RawVerdict::from_probs(c.claim_id, "e", ProbabilityVector::from_verdict_order(p[0], p[1], p[2]), "m"));
        c.weights.push_back(1.0);
    }
    return c;
}

}  // namespace

TEST_CASE("worked example") {
    using enum VerdictLabel;
    const std::vector<VerdictLabel> gold{Supported, Supported, Refuted, NotEnoughInfo};
    const std::vector<VerdictLabel> pred{Supported, NotEnoughInfo, Refuted, NotEnoughInfo};
    const EvaluationReport r = compute_metrics(pred, gold);
    CHECK(r.n == 4);
    CHECK(r.accuracy == doctest::Approx(0.75));
    CHECK(r[Supported].precision == doctest::Approx(1.0));
    CHECK(r[Supported].recall == doctest::Approx(0.5));
    CHECK(r[Supported].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(r[NotEnoughInfo].precision == doctest::Approx(0.5));
    CHECK(r[NotEnoughInfo].recall == doctest::Approx(1.0));
    CHECK(r.macro_avg.f1 == doctest::Approx((2.0 / 3.0 + 1.0 + 2.0 / 3.0) / 3.0));
    CHECK(r.weighted_avg.recall == doctest::Approx(r.accuracy));
    CHECK(r.confusion(0, 2) == 1);
    CHECK(r.predicted_counts() == std::array<std::size_t, 3>{1, 1, 2});
}

TEST_CASE("absent classes count as zero without errors") {
    using enum VerdictLabel;
    const std::vector<VerdictLabel> gold{Supported, Supported};
    const std::vector<VerdictLabel> pred{Supported, Supported};
    const EvaluationReport r = compute_metrics(pred, gold);
    CHECK(r[Refuted].precision == 0.0);
    CHECK(r[Refuted].recall == 0.0);
    CHECK(r[Refuted].f1 == 0.0);
    CHECK(r.zero_division[index_of(Refuted)] == 2);
    CHECK(r.macro_avg.f1 == doctest::Approx(1.0 / 3.0));
    CHECK(r.weighted_avg.f1 == doctest::Approx(1.0));
}

TEST_CASE("input validation") {
    const std::vector<VerdictLabel> one{VerdictLabel::Supported};
    const std::vector<VerdictLabel> two{VerdictLabel::Supported, VerdictLabel::Refuted};
    CHECK_THROWS_AS((void)compute_metrics(one, two), InvalidArgument);
    CHECK_THROWS_AS((void)compute_metrics({}, {}), InvalidArgument);
}

TEST_CASE("property: metrics agree with a brute-force oracle") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 37) * 3;
        const auto gold = random_labels(rng, n, trial % 4);
        auto pred = random_labels(rng, n, (trial + 2) % 4);
        // Mix in correct predictions so precision/recall are not all near chance.
        for (std::size_t i = 0; i < n; i += 2) pred[i] = gold[i];
        const EvaluationReport r = compute_metrics(pred, gold);
        const OracleReport o = oracle(pred, gold);
        for (int c = 0; c < 3; ++c) {
            const auto &m = r.per_class[static_cast<std::size_t>(c)];
            CHECK(std::abs(m.precision - o.p[c]) < 1e-9);
            CHECK(std::abs(m.recall - o.r[c]) < 1e-9);
            CHECK(std::abs(m.f1 - o.f[c]) < 1e-9);
            CHECK(m.support == o.support[c]);
        }
        CHECK(std::abs(r.macro_avg.precision - o.macro_p) < 1e-9);
        CHECK(std::abs(r.macro_avg.recall - o.macro_r) < 1e-9);
        CHECK(std::abs(r.macro_avg.f1 - o.macro_f) < 1e-9);
        CHECK(std::abs(r.weighted_avg.precision - o.w_p) < 1e-9);
        CHECK(std::abs(r.weighted_avg.recall - o.w_r) < 1e-9);
        CHECK(std::abs(r.weighted_avg.f1 - o.w_f) < 1e-9);
        CHECK(std::abs(r.accuracy - o.acc) < 1e-9);
        CHECK(std::abs(r.weighted_avg.recall - r.accuracy) < 1e-9);
        CHECK(r.confusion.sum() == static_cast<std::int64_t>(n));
    }
}

TEST_CASE("property: permuting prediction/gold pairs jointly changes nothing") {
    std::mt19937_64 rng(102);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + static_cast<std::size_t>(trial);
        const auto gold = random_labels(rng, n, 1);
        const auto pred = random_labels(rng, n, 2);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<VerdictLabel> pp, pg;
        for (const std::size_t i : order) {
            pp.push_back(pred[i]);
            pg.push_back(gold[i]);
        }
        const EvaluationReport a = compute_metrics(pred, gold);
        const EvaluationReport b = compute_metrics(pp, pg);
        CHECK(a.confusion == b.confusion);
        CHECK(std::abs(a.macro_avg.f1 - b.macro_avg.f1) < 1e-12);
        CHECK(std::abs(a.weighted_avg.f1 - b.weighted_avg.f1) < 1e-12);
    }
}

TEST_CASE("json round trip and rendering") {
    using enum VerdictLabel;
    const std::vector<VerdictLabel> gold{Supported, Refuted, NotEnoughInfo, NotEnoughInfo, Refuted};
    const std::vector<VerdictLabel> pred{Supported, NotEnoughInfo, NotEnoughInfo, Refuted, Refuted};
    EvaluationReport r = compute_metrics(pred, gold);
    r.config_fingerprint = "abc123";
    const nlohmann::ordered_json j = to_json(r);
    CHECK(j["weighted_avg_basis"] == "gold_support");
    const EvaluationReport back = report_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.macro_avg.f1 == r.macro_avg.f1);
    CHECK(back.weighted_avg.precision == r.weighted_avg.precision);
    CHECK(back.per_class[1].recall == r.per_class[1].recall);
    CHECK(back.confusion == r.confusion);
    CHECK(back.config_fingerprint == "abc123");
    CHECK_THROWS_AS((void)report_from_json(nlohmann::json::object()), DataError);

    const std::string md = render(r, ReportFormat::Markdown);
    CHECK(md.find("weighted by gold support") != std::string::npos);
    CHECK(md.find("0.60") != std::string::npos);
    const std::string csv = render(r, ReportFormat::Csv);
    CHECK(csv.find("SUPPORTED") != std::string::npos);
    CHECK(parse_report_format("md") == ReportFormat::Markdown);
    CHECK_FALSE(parse_report_format("html").has_value());
}

TEST_CASE("decide applies the threshold before aggregating") {
    const ClaimVerdicts c = claim("a", VerdictLabel::Supported, {{0.65, 0.2, 0.15}, {0.7, 0.2, 0.1}});
    CHECK(decide(c, 0.6, AggregationMethod::Majority).label == VerdictLabel::Supported);
    CHECK(decide(c, 0.68, AggregationMethod::Majority).label == VerdictLabel::NotEnoughInfo);
    CHECK(decide(c, 0.68, AggregationMethod::Weighted).label == VerdictLabel::NotEnoughInfo);
    CHECK(decide(c, 0.75, AggregationMethod::Weighted).label == VerdictLabel::NotEnoughInfo);

    const ClaimVerdicts empty{"b", VerdictLabel::Refuted, {}, {}};
    const FinalVerdict f = decide(empty, 0.6, AggregationMethod::Weighted);
    CHECK(f.label == VerdictLabel::NotEnoughInfo);
    CHECK(f.confidence == 0.0);
}

TEST_CASE("sweep equals independent runs at each threshold") {
    std::mt19937_64 rng(5);
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<ClaimVerdicts> claims;
    for (int i = 0; i < 60; ++i) {
        std::vector<std::array<double, 3>> probs;
        for (int k = 0; k < 1 + i % 3; ++k) {
            std::array<double, 3> p{g(rng), g(rng), g(rng)};
            const double s = p[0] + p[1] + p[2];
            for (double &x : p) x /= s;
            probs.push_back(p);
        }
        claims.push_back(claim("c" + std::to_string(i), kVerdictLabels[static_cast<std::size_t>(i % 3)], probs));
    }
    const std::vector<double> taus{0.9, 0.6, 0.75};
    for (const AggregationMethod method : {AggregationMethod::Majority, AggregationMethod::Weighted}) {
        const auto points = sweep_thresholds(claims, taus, method);
        REQUIRE(points.size() == 3);
        CHECK(points[0].tau == 0.6);
        CHECK(points[2].tau == 0.9);
        for (const SweepPoint &p : points) {
            std::vector<VerdictLabel> pred, gold;
            for (const auto &c : claims) {
                pred.push_back(decide(c, p.tau, method).label);
                gold.push_back(*c.gold);
            }
            const EvaluationReport direct = compute_metrics(pred, gold);
            CHECK(direct.macro_avg.f1 == p.report.macro_avg.f1);
            CHECK(direct.accuracy == p.report.accuracy);
        }
    }
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS((void)sweep_thresholds(claims, bad, AggregationMethod::Majority), InvalidArgument);
    claims[0].gold.reset();
    CHECK_THROWS_AS((void)sweep_thresholds(claims, taus, AggregationMethod::Majority), InvalidArgument);
}

TEST_CASE("run comparison reports deltas against the first run") {
    using enum VerdictLabel;
    const std::vector<VerdictLabel> gold{Supported, Refuted, NotEnoughInfo, Supported};
    const std::vector<VerdictLabel> a{Supported, NotEnoughInfo, NotEnoughInfo, NotEnoughInfo};
    const std::vector<VerdictLabel> b{Supported, Refuted, NotEnoughInfo, NotEnoughInfo};
    const std::vector<NamedReport> reports{{"full", compute_metrics(a, gold)}, {"span", compute_metrics(b, gold)}};
    const ComparisonTable t = compare_runs(reports);
    CHECK(t.names == std::vector<std::string>{"full", "span"});
    const ComparisonRow &acc = t.row("accuracy");
    CHECK(acc.values[0] == doctest::Approx(0.5));
    CHECK(acc.values[1] == doctest::Approx(0.75));
    CHECK(acc.deltas[0] == 0.0);
    CHECK(acc.deltas[1] == doctest::Approx(0.25));
    CHECK_NOTHROW((void)t.row("REFUTED_f1"));
    CHECK_NOTHROW((void)t.row("weighted_f1"));
    CHECK_THROWS((void)t.row("nonsense"));
    CHECK(render(t, ReportFormat::Markdown).find("span") != std::string::npos);
    const std::vector<NamedReport> single{reports[0]};
    CHECK_THROWS_AS((void)compare_runs(single), InvalidArgument);
}
