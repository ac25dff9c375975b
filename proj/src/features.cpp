#include "toxpipe/features.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "ngram_iter.hpp"
#include "toxpipe/errors.hpp"
#include "toxpipe/rng.hpp"

namespace toxpipe::features {

using nlohmann::json;

std::string to_string(NgramKind k) { return k == NgramKind::word ? "word" : "char"; }

NgramKind ngram_kind_from_string(const std::string& text) {
    if (text == "word") return NgramKind::word;
    if (text == "char") return NgramKind::character;
    throw Error(errc::config, "unknown ngram kind: " + text);
}

std::string to_string(Weighting w) { return w == Weighting::count ? "count" : "binary"; }

Weighting weighting_from_string(const std::string& text) {
    if (text == "count") return Weighting::count;
    if (text == "binary") return Weighting::binary;
    throw Error(errc::config, "unknown weighting: " + text);
}

void FeatureSpec::validate() const {
    if (n_min == 0 || n_min > n_max) {
        throw Error(errc::config, "feature spec requires 1 <= n_min <= n_max");
    }
    if (max_features == 0) throw Error(errc::config, "max_features must be positive");
}

FeatureSpec default_word_spec() {
    FeatureSpec spec;
    spec.kind = NgramKind::word;
    spec.n_min = 1;
    spec.n_max = 2;
    return spec;
}

FeatureSpec default_char_spec() {
    FeatureSpec spec;
    spec.kind = NgramKind::character;
    spec.n_min = 1;
    spec.n_max = 5;
    return spec;
}

double SparseVector::sum() const {
    double total = 0.0;
    for (const auto& [idx, value] : entries) total += value;
    return total;
}

Vocabulary::Vocabulary(FeatureSpec spec, std::vector<std::string> ngrams,
                       std::uint64_t built_from)
    : spec_(spec), ngrams_(std::move(ngrams)), built_from_(built_from) {
    spec_.validate();
    build_lookup();
}

void Vocabulary::build_lookup() {
    std::size_t capacity = 16;
    while (capacity < ngrams_.size() * 2) capacity <<= 1;
    table_.assign(capacity, {0, -1});
    mask_ = capacity - 1;
    for (std::size_t i = 0; i < ngrams_.size(); ++i) {
        const std::uint64_t h = rng::fnv1a64(ngrams_[i]);
        std::size_t slot = h & mask_;
        while (table_[slot].second >= 0) slot = (slot + 1) & mask_;
        table_[slot] = {h, static_cast<std::int64_t>(i)};
    }
}

std::int64_t Vocabulary::index_of(std::string_view gram) const {
    if (ngrams_.empty()) return -1;
    const std::uint64_t h = rng::fnv1a64(gram);
    std::size_t slot = h & mask_;
    while (true) {
        const auto& [hash, idx] = table_[slot];
        if (idx < 0) return -1;
        if (hash == h && ngrams_[static_cast<std::size_t>(idx)] == gram) return idx;
        slot = (slot + 1) & mask_;
    }
}

namespace {

json spec_to_json(const FeatureSpec& spec) {
    return json{{"ngram_kind", to_string(spec.kind)},
                {"n_min", spec.n_min},
                {"n_max", spec.n_max},
                {"max_features", spec.max_features},
                {"weighting", to_string(spec.weighting)},
                {"lowercase", spec.lowercase},
                {"l1_normalize", spec.l1_normalize}};
}

FeatureSpec spec_from_json(const json& j) {
    FeatureSpec spec;
    spec.kind = ngram_kind_from_string(j.at("ngram_kind").get<std::string>());
    spec.n_min = j.at("n_min").get<std::size_t>();
    spec.n_max = j.at("n_max").get<std::size_t>();
    spec.max_features = j.at("max_features").get<std::size_t>();
    spec.weighting = weighting_from_string(j.at("weighting").get<std::string>());
    spec.lowercase = j.at("lowercase").get<bool>();
    spec.l1_normalize = j.value("l1_normalize", false);
    spec.validate();
    return spec;
}

}  // namespace

std::string Vocabulary::to_json() const {
    json j;
    j["version"] = 1;
    j["spec"] = spec_to_json(spec_);
    j["built_from"] = std::to_string(built_from_);
    j["ngrams"] = ngrams_;
    return j.dump();
}

Vocabulary Vocabulary::from_json_text(const std::string& text, const std::string& name) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(errc::format, "bad vocabulary file " + name + ": " + e.what());
    }
    try {
        if (j.at("version").get<int>() != 1) {
            throw Error(errc::version, "unsupported vocabulary version in " + name);
        }
        return Vocabulary(spec_from_json(j.at("spec")),
                          j.at("ngrams").get<std::vector<std::string>>(),
                          std::stoull(j.at("built_from").get<std::string>()));
    } catch (const json::exception& e) {
        throw Error(errc::format, "bad vocabulary file " + name + ": " + e.what());
    }
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write vocabulary: " + path);
    out << to_json() << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::io, "cannot open vocabulary: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, path);
}

Vocabulary build_vocab(const std::vector<std::string>& texts, const FeatureSpec& spec) {
    spec.validate();
    if (texts.empty()) throw Error(errc::size, "cannot build vocabulary from an empty corpus");
    struct SvHash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const {
            return std::hash<std::string_view>{}(s);
        }
    };
    struct SvEq {
        using is_transparent = void;
        bool operator()(std::string_view a, std::string_view b) const { return a == b; }
    };
    std::unordered_map<std::string, std::uint64_t, SvHash, SvEq> counts;
    std::string lower_buf;
    std::vector<std::size_t> offsets;
    std::vector<std::string> join_bufs;
    std::uint64_t fingerprint = 0xcbf29ce484222325ULL;
    for (const std::string& text : texts) {
        fingerprint = rng::fnv1a64(text, fingerprint);
        fingerprint = rng::fnv1a64(std::string_view("\x1e", 1), fingerprint);
        detail::enumerate_ngrams(text, spec, lower_buf, offsets, join_bufs,
                                 [&counts](std::string_view gram) {
                                     auto it = counts.find(gram);
                                     if (it == counts.end()) {
                                         counts.emplace(std::string(gram), 1);
                                     } else {
                                         ++it->second;
                                     }
                                 });
    }
    std::vector<std::pair<std::string_view, std::uint64_t>> ranked;
    ranked.reserve(counts.size());
    for (const auto& [gram, count] : counts) ranked.emplace_back(gram, count);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > spec.max_features) ranked.resize(spec.max_features);
    std::vector<std::string> ngrams;
    ngrams.reserve(ranked.size());
    for (const auto& [gram, count] : ranked) ngrams.emplace_back(gram);
    return Vocabulary(spec, std::move(ngrams), fingerprint);
}

Vectorizer::Vectorizer(const Vocabulary& vocab) : vocab_(&vocab) {
    accum_.assign(vocab.size(), 0.0);
}

SparseVector Vectorizer::vectorize(std::string_view text) const {
    const FeatureSpec& spec = vocab_->spec();
    SparseVector out;
    out.dim = vocab_->size();
    if (text.empty() || vocab_->size() == 0) return out;
    const bool binary = spec.weighting == Weighting::binary;
    detail::enumerate_ngrams(text, spec, lower_buf_, offsets_, token_buf_,
                             [this, binary](std::string_view gram) {
                                 const std::int64_t idx = vocab_->index_of(gram);
                                 if (idx < 0) return;
                                 double& slot = accum_[static_cast<std::size_t>(idx)];
                                 if (slot == 0.0) {
                                     touched_.push_back(static_cast<std::uint32_t>(idx));
                                     slot = 1.0;
                                 } else if (!binary) {
                                     slot += 1.0;
                                 }
                             });
    std::sort(touched_.begin(), touched_.end());
    out.entries.reserve(touched_.size());
    for (const std::uint32_t idx : touched_) {
        out.entries.emplace_back(idx, accum_[idx]);
        accum_[idx] = 0.0;
    }
    touched_.clear();
    if (spec.l1_normalize && !out.entries.empty()) {
        const double total = out.sum();
        if (total > 0.0) {
            for (auto& [idx, value] : out.entries) value /= total;
        }
    }
    return out;
}

SparseVector vectorize(std::string_view text, const Vocabulary& vocab) {
    return Vectorizer(vocab).vectorize(text);
}

void for_each_ngram(std::string_view text, const FeatureSpec& spec, std::string& lower_buf,
                    std::vector<std::size_t>& offsets, std::vector<std::string>& token_buf,
                    const std::function<void(std::string_view)>& fn) {
    detail::enumerate_ngrams(text, spec, lower_buf, offsets, token_buf, fn);
}

}  // namespace toxpipe::features
