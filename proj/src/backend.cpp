#include "claimver/backend.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace claimver {

namespace {

using json = nlohmann::json;

std::string dump_payload(std::span<const double> values) {
    std::ostringstream out;
    out.precision(17);
    out << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        out << (i ? ", " : "") << values[i];
    }
    out << ']';
    return out.str();
}

struct Word {
    std::size_t start;
    std::size_t end;
    std::string normalized;
};

// Alphanumeric runs (bytes >= 0x80 count as word characters so UTF-8 stays intact).
std::vector<Word> split_words(std::string_view text) {
    const auto is_word = [](unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; };
    std::vector<Word> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && is_word(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) {
            words.push_back({start, i, to_lower_ascii(text.substr(start, i - start))});
        }
    }
    return words;
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

json post_json(const EndpointConfig &endpoint, const std::string &path, const json &body) {
    httplib::Client client(endpoint.host, endpoint.port);
    client.set_connection_timeout(10);
    client.set_read_timeout(endpoint.timeout_seconds);
    client.set_write_timeout(endpoint.timeout_seconds);
    const auto result = client.Post(path, body.dump(), "application/json");
    if (!result) {
        throw BackendError("endpoint " + endpoint.host + ":" + std::to_string(endpoint.port) + path +
                               " unavailable: " + httplib::to_string(result.error()),
                           true);
    }
    if (result->status != 200) {
        throw BackendError("endpoint " + path + " returned HTTP " + std::to_string(result->status) + ": " + result->body,
                           result->status >= 500);
    }
    try {
        return json::parse(result->body);
    } catch (const json::parse_error &) {
        throw BackendError("malformed response from " + path + ": " + result->body, false);
    }
}

}  // namespace

ProbabilityVector validate_nli_output(std::span<const double> nli_order_scores) {
    if (nli_order_scores.size() != kNumLabels) {
        throw BackendError("classifier returned " + std::to_string(nli_order_scores.size()) +
                               " scores, expected 3; payload " + dump_payload(nli_order_scores),
                           false);
    }
    const Eigen::Vector3d values(nli_order_scores[0], nli_order_scores[1], nli_order_scores[2]);
    if (!is_normalized(values, kBackendSumTolerance)) {
        throw BackendError("classifier returned a non-normalized distribution; payload " + dump_payload(nli_order_scores),
                           false);
    }
    return ProbabilityVector::from_nli_order(values);
}

ProbabilityVector classify(NLIClassifier &classifier, const std::string &premise, const std::string &hypothesis) {
    const NLIInput input{premise, hypothesis, hypothesis + " " + classifier.separator() + " " + premise};
    const auto outputs = classifier.classify_batch(std::span<const NLIInput>(&input, 1));
    if (outputs.size() != 1) {
        throw BackendError("classifier returned " + std::to_string(outputs.size()) + " results for 1 input", false);
    }
    return validate_nli_output(std::span<const double>(outputs.front().data(), 3));
}

// ---------------------------------------------------------------------------

StubClassifier::StubClassifier(std::uint64_t seed, std::string model_id, std::size_t max_length, std::string separator,
                               std::size_t max_in_flight)
    : seed_(seed),
      model_id_(std::move(model_id)),
      max_length_(max_length),
      separator_(std::move(separator)),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

void StubClassifier::set_override(const std::string &premise, const std::string &hypothesis, const Eigen::Vector3d &nli_scores) {
    overrides_[{premise, hypothesis}] = nli_scores;
}

Eigen::Vector3d StubClassifier::score(const NLIInput &input) const {
    if (const auto it = overrides_.find({input.premise, input.hypothesis}); it != overrides_.end()) {
        return it->second;
    }
    std::string material = std::to_string(seed_);
    for (const std::string *part : {&model_id_, &input.premise, &input.hypothesis}) {
        material.push_back('\x1f');
        material.append(*part);
    }
    const std::string digest = sha256_hex(material);
    Eigen::Vector3d logits;
    for (Eigen::Index i = 0; i < 3; ++i) {
        const auto word = std::stoul(digest.substr(static_cast<std::size_t>(8 * i), 8), nullptr, 16);
        logits[i] = 4.0 * static_cast<double>(word) / 4294967296.0;
    }
    const Eigen::Vector3d exps = (logits.array() - logits.maxCoeff()).exp();
    return exps / exps.sum();
}

std::vector<Eigen::Vector3d> StubClassifier::classify_batch(std::span<const NLIInput> inputs) {
    std::vector<Eigen::Vector3d> outputs;
    outputs.reserve(inputs.size());
    for (const NLIInput &input : inputs) {
        outputs.push_back(score(input));
    }
    calls_.fetch_add(inputs.size());
    return outputs;
}

ExtractedSpan StubSpanExtractor::extract(std::string_view question, std::string_view context) {
    const std::vector<Word> claim_words = split_words(question);
    const std::vector<Word> words = split_words(context);
    // Position of the last claim word equal to `w`, if any.
    const auto claim_position = [&](const Word &w) -> std::optional<std::size_t> {
        for (std::size_t k = claim_words.size(); k-- > 0;) {
            if (claim_words[k].normalized == w.normalized) {
                return k;
            }
        }
        return std::nullopt;
    };
    const auto in_claim = [&](const Word &w) { return claim_position(w).has_value(); };

    std::optional<std::size_t> anchor;
    std::size_t anchor_rank = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto rank = claim_position(words[i]);
        if (rank && (!anchor || *rank > anchor_rank)) {
            anchor = i;
            anchor_rank = *rank;
        }
    }
    if (!anchor || window_ == 0) {
        return ExtractedSpan{0, 0, 0.0};
    }
    const std::size_t first = *anchor >= window_ / 2 ? *anchor - window_ / 2 : 0;
    const std::size_t last = std::min(words.size(), first + window_) - 1;
    std::size_t matched = 0;
    for (std::size_t i = first; i <= last; ++i) {
        matched += in_claim(words[i]) ? 1 : 0;
    }
    const double score = claim_words.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(claim_words.size());
    return ExtractedSpan{words[first].start, words[last].end, std::min(1.0, score)};
}

Eigen::VectorXd StubEmbedder::embed(std::string_view text) {
    Eigen::VectorXd vector = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
    for (const Word &word : split_words(text)) {
        vector[static_cast<Eigen::Index>(fnv1a(word.normalized) % dimension_)] += 1.0;
    }
    return vector;
}

// ---------------------------------------------------------------------------

EndpointConfig EndpointConfig::parse(std::string_view url) {
    std::string_view rest = url;
    if (rest.starts_with("http://")) {
        rest.remove_prefix(7);
    } else if (rest.find("://") != std::string_view::npos) {
        throw InvalidArgument("unsupported endpoint scheme in '" + std::string(url) + "'");
    }
    while (!rest.empty() && rest.back() == '/') {
        rest.remove_suffix(1);
    }
    EndpointConfig config;
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) {
        config.host = std::string(rest);
        config.port = 80;
    } else {
        config.host = std::string(rest.substr(0, colon));
        try {
            config.port = std::stoi(std::string(rest.substr(colon + 1)));
        } catch (const std::exception &) {
            throw InvalidArgument("invalid port in endpoint '" + std::string(url) + "'");
        }
    }
    if (config.host.empty()) {
        throw InvalidArgument("endpoint '" + std::string(url) + "' has no host");
    }
    return config;
}

HttpClassifier::HttpClassifier(EndpointConfig endpoint, std::string model_id, std::size_t max_length, std::string separator,
                               std::size_t max_in_flight)
    : endpoint_(std::move(endpoint)),
      model_id_(std::move(model_id)),
      max_length_(max_length),
      separator_(std::move(separator)),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

std::vector<Eigen::Vector3d> HttpClassifier::classify_batch(std::span<const NLIInput> inputs) {
    json body{{"model", model_id_}, {"pairs", json::array()}};
    for (const NLIInput &input : inputs) {
        body["pairs"].push_back({{"premise", input.premise}, {"hypothesis", input.hypothesis}, {"joined", input.joined}});
    }
    const json response = post_json(endpoint_, "/classify", body);
    const auto probs = response.find("probs");
    if (probs == response.end() || !probs->is_array() || probs->size() != inputs.size()) {
        throw BackendError("malformed /classify response: " + response.dump(), false);
    }
    std::vector<Eigen::Vector3d> outputs;
    for (const json &row : *probs) {
        std::vector<double> values;
        try {
            values = row.get<std::vector<double>>();
        } catch (const json::exception &) {
            throw BackendError("malformed /classify row: " + row.dump(), false);
        }
        (void)validate_nli_output(values);
        outputs.emplace_back(values[0], values[1], values[2]);
    }
    return outputs;
}

ExtractedSpan HttpSpanExtractor::extract(std::string_view question, std::string_view context) {
    const json response = post_json(endpoint_, "/extract", {{"model", model_id_}, {"question", question}, {"context", context}});
    try {
        return ExtractedSpan{response.at("start").get<std::size_t>(), response.at("end").get<std::size_t>(),
                             response.value("score", 0.0)};
    } catch (const json::exception &) {
        throw BackendError("malformed /extract response: " + response.dump(), false);
    }
}

Eigen::VectorXd HttpEmbedder::embed(std::string_view text) {
    const json response = post_json(endpoint_, "/embed", {{"model", model_id_}, {"texts", json::array({text})}});
    std::vector<double> values;
    try {
        values = response.at("vectors").at(0).get<std::vector<double>>();
    } catch (const json::exception &) {
        throw BackendError("malformed /embed response: " + response.dump(), false);
    }
    if (values.size() != dimension_) {
        throw BackendError("embedder returned dimension " + std::to_string(values.size()) + ", declared " +
                               std::to_string(dimension_),
                           false);
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// ---------------------------------------------------------------------------

std::string cache_key(std::string_view model_id, std::string_view premise, std::string_view hypothesis,
                      std::string_view policy_version) {
    std::string material;
    for (const std::string &part : {nfc_normalize(model_id), nfc_normalize(premise), nfc_normalize(hypothesis),
                                    std::string(policy_version)}) {
        // length-prefixed so field boundaries are unambiguous
        material.append(std::to_string(part.size()));
        material.push_back(':');
        material.append(part);
    }
    return sha256_hex(material);
}

VerdictCache::VerdictCache(std::filesystem::path directory) : directory_(std::move(directory)) {
    std::error_code ec;
    std::filesystem::create_directories(directory_, ec);
    if (ec) {
        throw Error("cannot create cache directory '" + directory_.string() + "': " + ec.message());
    }
}

std::filesystem::path VerdictCache::shard_path(std::size_t shard) const {
    static constexpr char hex[] = "0123456789abcdef";
    return directory_ / (std::string("shard-") + hex[shard] + ".jsonl");
}

void VerdictCache::quarantine(const std::string &line, const std::string &reason) {
    std::cerr << "warning: quarantining corrupt cache entry in " << directory_.string() << ": " << reason << '\n';
    std::ofstream out(directory_ / "quarantine.jsonl", std::ios::app);
    out << line << '\n';
    quarantined_.fetch_add(1);
}

void VerdictCache::ensure_loaded(std::size_t shard) {
    Shard &target = shards_[shard];
    if (target.loaded) {
        return;
    }
    target.loaded = true;
    std::ifstream in(shard_path(shard));
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        try {
            const json entry = json::parse(line);
            const auto probs = entry.at("probs").get<std::vector<double>>();
            if (probs.size() != kNumLabels || !is_normalized(Eigen::Vector3d(probs[0], probs[1], probs[2]))) {
                throw InvalidArgument("invalid probability vector");
            }
            target.entries.insert_or_assign(
                entry.at("key").get<std::string>(),
                CacheValue{ProbabilityVector::from_verdict_order(probs[0], probs[1], probs[2]), entry.at("truncated").get<bool>()});
        } catch (const std::exception &e) {
            quarantine(line, e.what());
        }
    }
}

std::optional<CacheValue> VerdictCache::get(const std::string &key) {
    if (key.empty() || !std::isxdigit(static_cast<unsigned char>(key.front()))) {
        return std::nullopt;
    }
    const std::size_t shard = std::stoul(key.substr(0, 1), nullptr, 16);
    {
        std::shared_lock lock(mutex_);
        if (shards_[shard].loaded) {
            const auto &entries = shards_[shard].entries;
            const auto it = entries.find(key);
            return it == entries.end() ? std::nullopt : std::optional<CacheValue>(it->second);
        }
    }
    std::unique_lock lock(mutex_);
    ensure_loaded(shard);
    const auto &entries = shards_[shard].entries;
    const auto it = entries.find(key);
    return it == entries.end() ? std::nullopt : std::optional<CacheValue>(it->second);
}

void VerdictCache::put(const std::string &key, const CacheValue &value) {
    if (key.empty() || !std::isxdigit(static_cast<unsigned char>(key.front()))) {
        throw InvalidArgument("cache key must be a hex digest");
    }
    const std::size_t shard = std::stoul(key.substr(0, 1), nullptr, 16);
    std::unique_lock lock(mutex_);
    ensure_loaded(shard);
    shards_[shard].entries.insert_or_assign(key, value);
    const json entry{{"key", key},
                     {"probs", {value.probs.supported(), value.probs.refuted(), value.probs.nei()}},
                     {"truncated", value.truncated},
                     {"created_at", utc_timestamp()}};
    std::ofstream out(shard_path(shard), std::ios::app);
    out << entry.dump() << '\n';
    if (!out) {
        throw Error("cannot write cache shard " + shard_path(shard).string());
    }
}

std::filesystem::path default_cache_dir(const std::filesystem::path &fallback) {
    if (const char *env = std::getenv("CLAIMVER_CACHE_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return fallback;
}

}  // namespace claimver
