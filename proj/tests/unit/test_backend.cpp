#include "claimver/backend.hpp"

#include "temp_dir.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace claimver;
using nlohmann::json;

namespace {

// Serves the inference protocol on an ephemeral port for the lifetime of the object.
class FakeServer {
  public:
    FakeServer() {
        server_.Post("/classify", [this](const httplib::Request &req, httplib::Response &res) {
            if (status_ != 200) {
                res.status = status_;
                res.set_content("boom", "text/plain");
                return;
            }
            const json body = json::parse(req.body);
            last_classify_ = body;
            json probs = json::array();
            for (std::size_t i = 0; i < body["pairs"].size(); ++i) probs.push_back(row_);
            res.set_content(json{{"probs", probs}}.dump(), "application/json");
        });
        server_.Post("/extract", [](const httplib::Request &req, httplib::Response &res) {
            const json body = json::parse(req.body);
            const std::string context = body["context"];
            res.set_content(json{{"start", 0}, {"end", context.find(' ')}, {"score", 0.75}}.dump(), "application/json");
        });
        server_.Post("/embed", [](const httplib::Request &, httplib::Response &res) {
            res.set_content(R"({"vectors":[[3.0,4.0]]})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] EndpointConfig endpoint() const { return EndpointConfig{"127.0.0.1", port_, 10}; }
    json row_ = json::array({0.7, 0.2, 0.1});
    int status_ = 200;
    json last_classify_;

  private:
    httplib::Server server_;
    int port_{};
    std::thread thread_;
};

int unused_port() {
    httplib::Server probe;
    const int port = probe.bind_to_any_port("127.0.0.1");
    return port;
}

}  // namespace

TEST_CASE("classifier output validation") {
    const std::vector<double> ok{0.7, 0.2, 0.1};
    const ProbabilityVector p = validate_nli_output(ok);
    CHECK(p.supported() == 0.7);
    CHECK(p.refuted() == 0.2);

    const std::vector<double> within{0.7, 0.2, 0.1 + 5e-7};
    CHECK_NOTHROW((void)validate_nli_output(within));

    const std::vector<double> off{0.7, 0.2, 0.11};
    try {
        (void)validate_nli_output(off);
        FAIL("expected an error");
    } catch (const BackendError &e) {
        CHECK_FALSE(e.retryable());
        CHECK(std::string(e.what()).find("0.11") != std::string::npos);
    }
    const std::vector<double> two{0.5, 0.5};
    CHECK_THROWS_AS((void)validate_nli_output(two), BackendError);
}

TEST_CASE("stub classifier is seed-stable") {
    StubClassifier a(42);
    StubClassifier b(42);
    StubClassifier c(43);
    const ProbabilityVector pa = classify(a, "The sky is blue.", "The sky has a color.");
    CHECK(pa == classify(b, "The sky is blue.", "The sky has a color."));
    CHECK_FALSE(pa == classify(c, "The sky is blue.", "The sky has a color."));
    CHECK_FALSE(pa == classify(a, "The sky is green.", "The sky has a color."));
    CHECK(is_normalized(pa.values()));
    CHECK(a.calls() == 2);

    // Pinned so that a change in the derivation is noticed; the vector must not
    // depend on the process, platform or run.
    const ProbabilityVector pinned = classify(a, "premise", "hypothesis");
    StubClassifier fresh(42);
    CHECK(classify(fresh, "premise", "hypothesis") == pinned);
    const std::string digest = sha256_hex(std::string("42\x1fstub-nli\x1fpremise\x1fhypothesis"));
    Eigen::Vector3d logits;
    for (int i = 0; i < 3; ++i) {
        logits[i] = 4.0 * static_cast<double>(std::stoul(digest.substr(static_cast<std::size_t>(8 * i), 8), nullptr, 16)) / 4294967296.0;
    }
    const Eigen::Vector3d expected = (logits.array() - logits.maxCoeff()).exp() / (logits.array() - logits.maxCoeff()).exp().sum();
    const ProbabilityVector oracle = ProbabilityVector::from_nli_order(expected);
    CHECK(pinned.supported() == doctest::Approx(oracle.supported()).epsilon(1e-15));
    CHECK(pinned.nei() == doctest::Approx(oracle.nei()).epsilon(1e-15));

    a.set_override("p", "h", Eigen::Vector3d(0.2, 0.3, 0.5));
    const ProbabilityVector overridden = classify(a, "p", "h");
    CHECK(overridden.supported() == 0.2);
    CHECK(overridden.refuted() == 0.3);
    CHECK(overridden.argmax() == VerdictLabel::NotEnoughInfo);
}

TEST_CASE("stub embedder is deterministic with the declared dimension") {
    StubEmbedder e(16);
    const Eigen::VectorXd v = e.embed("Glaciers are retreating");
    CHECK(v.size() == 16);
    CHECK(v == e.embed("glaciers ARE retreating"));
    CHECK(v.sum() == 3.0);
}

TEST_CASE("stub extractor offsets index into the context") {
    StubSpanExtractor x(3);
    const std::string context = "Paris is the capital of France and its largest city.";
    const ExtractedSpan s = x.extract("What is the capital of France?", context);
    CHECK(s.start < s.end);
    CHECK(s.end <= context.size());
    CHECK(context.substr(s.start, s.end - s.start).find("France") != std::string::npos);
    const ExtractedSpan none = x.extract("Unrelated words", context);
    CHECK(none.start == none.end);
}

TEST_CASE("cache keys canonicalize Unicode and separate fields") {
    CHECK(cache_key("m", "caf\xC3\xA9", "h") == cache_key("m", "cafe\xCC\x81", "h"));
    CHECK(cache_key("m", "ab", "c") != cache_key("m", "a", "bc"));
    CHECK(cache_key("m", "p", "h") != cache_key("m2", "p", "h"));
    CHECK(cache_key("m", "p", "h", "v1") != cache_key("m", "p", "h", "v2"));
    CHECK(cache_key("m", "p", "h").size() == 64);
}

TEST_CASE("cache round trip, cold miss and persistence") {
    TempDir dir;
    const std::string key = cache_key("m", "p", "h");
    const CacheValue value{ProbabilityVector::from_verdict_order(0.1, 0.2, 0.7), true};
    {
        VerdictCache cache(dir.path());
        CHECK_FALSE(cache.get(key).has_value());
        cache.put(key, value);
        const auto got = cache.get(key);
        REQUIRE(got.has_value());
        CHECK(got->probs == value.probs);
        CHECK(got->truncated);
    }
    VerdictCache reopened(dir.path());
    const auto got = reopened.get(key);
    REQUIRE(got.has_value());
    CHECK(got->probs == value.probs);
    CHECK_FALSE(reopened.get(cache_key("m", "p", "other")).has_value());
}

TEST_CASE("odd doubles survive the cache exactly") {
    TempDir dir;
    const double s = 1.0 / 3.0;
    const double r = 0.1 + 0.2;
    const ProbabilityVector p = ProbabilityVector::from_verdict_order(s, r, 1.0 - s - r);
    const std::string key = cache_key("m", "x", "y");
    VerdictCache(dir.path()).put(key, {p, false});
    CHECK(VerdictCache(dir.path()).get(key)->probs == p);
}

TEST_CASE("corrupt cache lines are quarantined and treated as misses") {
    TempDir dir;
    const std::string key = cache_key("m", "p", "h");
    const std::string shard = std::string("shard-") + key[0] + ".jsonl";
    dir.write(shard, "{not json\n{\"key\":\"" + key + "\",\"probs\":[0.5,0.5,0.5],\"truncated\":false}\n");
    VerdictCache cache(dir.path());
    CHECK_FALSE(cache.get(key).has_value());
    CHECK(cache.quarantined() == 2);
    const std::string quarantine = read_file(dir / "quarantine.jsonl");
    CHECK(quarantine.find("{not json") != std::string::npos);
    cache.put(key, {ProbabilityVector(), false});
    CHECK(cache.get(key).has_value());
}

TEST_CASE("concurrent cache use") {
    TempDir dir;
    VerdictCache cache(dir.path());
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&cache, t] {
            for (int i = 0; i < 50; ++i) {
                const std::string key = cache_key("m", std::to_string(t), std::to_string(i));
                cache.put(key, {ProbabilityVector::one_hot(kVerdictLabels[static_cast<std::size_t>(i % 3)]), false});
                (void)cache.get(cache_key("m", std::to_string((t + 1) % 4), std::to_string(i)));
            }
        });
    }
    for (auto &th : threads) th.join();
    VerdictCache reopened(dir.path());
    for (int t = 0; t < 4; ++t) {
        for (int i = 0; i < 50; ++i) {
            const auto got = reopened.get(cache_key("m", std::to_string(t), std::to_string(i)));
            REQUIRE(got.has_value());
            CHECK(got->probs.argmax() == kVerdictLabels[static_cast<std::size_t>(i % 3)]);
        }
    }
    CHECK(reopened.quarantined() == 0);
}

TEST_CASE("endpoint parsing") {
    const EndpointConfig a = EndpointConfig::parse("http://localhost:9000/");
    CHECK(a.host == "localhost");
    CHECK(a.port == 9000);
    CHECK(EndpointConfig::parse("10.0.0.2:81").port == 81);
    CHECK_THROWS_AS((void)EndpointConfig::parse("https://x:1"), InvalidArgument);
    CHECK_THROWS_AS((void)EndpointConfig::parse("http://x:port"), InvalidArgument);
}

TEST_CASE("http backends speak the JSON protocol") {
    FakeServer server;
    HttpClassifier classifier(server.endpoint(), "some/model");
    const ProbabilityVector p = classify(classifier, "Evidence text.", "Claim text.");
    CHECK(p.supported() == 0.7);
    CHECK(server.last_classify_["model"] == "some/model");
    CHECK(server.last_classify_["pairs"][0]["premise"] == "Evidence text.");
    CHECK(server.last_classify_["pairs"][0]["hypothesis"] == "Claim text.");
    CHECK(server.last_classify_["pairs"][0]["joined"] == "Claim text. [SEP] Evidence text.");

    HttpSpanExtractor extractor(server.endpoint(), "qa");
    const ExtractedSpan s = extractor.extract("q", "hello world");
    CHECK(s.start == 0);
    CHECK(s.end == 5);
    CHECK(s.score == 0.75);

    HttpEmbedder embedder(server.endpoint(), "emb", 2);
    CHECK(embedder.embed("x") == Eigen::Vector2d(3, 4));
    HttpEmbedder wrong_dim(server.endpoint(), "emb", 3);
    CHECK_THROWS_AS((void)wrong_dim.embed("x"), BackendError);

    server.row_ = json::array({0.5, 0.2, 0.2});
    try {
        (void)classify(classifier, "a", "b");
        FAIL("expected an error");
    } catch (const BackendError &e) {
        CHECK_FALSE(e.retryable());
    }

    server.status_ = 503;
    try {
        (void)classify(classifier, "a", "b");
        FAIL("expected an error");
    } catch (const BackendError &e) {
        CHECK(e.retryable());
    }
    server.status_ = 400;
    try {
        (void)classify(classifier, "a", "b");
        FAIL("expected an error");
    } catch (const BackendError &e) {
        CHECK_FALSE(e.retryable());
    }
}

TEST_CASE("an unreachable endpoint is a retryable error") {
    HttpClassifier classifier(EndpointConfig{"127.0.0.1", unused_port(), 2}, "m");
    try {
        (void)classify(classifier, "a", "b");
        FAIL("expected an error");
    } catch (const BackendError &e) {
        CHECK(e.retryable());
    }
}
