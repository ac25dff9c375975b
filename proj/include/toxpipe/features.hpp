#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace toxpipe::features {

enum class NgramKind { word, character };
enum class Weighting { count, binary };

std::string to_string(NgramKind k);
NgramKind ngram_kind_from_string(const std::string& text);
std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& text);

struct FeatureSpec {
    NgramKind kind = NgramKind::character;
    std::size_t n_min = 1;
    std::size_t n_max = 5;  // word grams default to 1..2
    std::size_t max_features = 30000;
    Weighting weighting = Weighting::count;
    bool lowercase = true;
    bool l1_normalize = false;  // divide values by their sum

    void validate() const;
    bool operator==(const FeatureSpec&) const = default;
};

FeatureSpec default_word_spec();
FeatureSpec default_char_spec();

// Dense strictly-increasing indices, all below `dim`.
struct SparseVector {
    std::size_t dim = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;

    double sum() const;
};

// Top-max_features n-grams of the training texts by corpus frequency, ties
// broken lexicographically (byte order). Index order is selection order, so
// the serialized form is deterministic for a given corpus and spec.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(FeatureSpec spec, std::vector<std::string> ngrams, std::uint64_t built_from);

    const FeatureSpec& spec() const { return spec_; }
    const std::vector<std::string>& ngrams() const { return ngrams_; }
    std::uint64_t built_from() const { return built_from_; }
    std::size_t size() const { return ngrams_.size(); }

    // -1 when the gram is out of vocabulary.
    std::int64_t index_of(std::string_view gram) const;

    std::string to_json() const;
    static Vocabulary from_json_text(const std::string& text, const std::string& name);
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    void build_lookup();

    FeatureSpec spec_;
    std::vector<std::string> ngrams_;
    std::uint64_t built_from_ = 0;

    // Open-addressed table of (hash, index) pairs sized to a power of two;
    // bulk scoring does a few thousand probes per comment.
    std::vector<std::pair<std::uint64_t, std::int64_t>> table_;
    std::uint64_t mask_ = 0;
};

Vocabulary build_vocab(const std::vector<std::string>& texts, const FeatureSpec& spec);

// Reusable scratch space so bulk vectorization does not allocate per comment.
class Vectorizer {
public:
    explicit Vectorizer(const Vocabulary& vocab);

    SparseVector vectorize(std::string_view text) const;

    const Vocabulary& vocab() const { return *vocab_; }

private:
    const Vocabulary* vocab_;
    mutable std::string lower_buf_;
    mutable std::vector<std::size_t> offsets_;
    mutable std::vector<double> accum_;
    mutable std::vector<std::uint32_t> touched_;
    mutable std::vector<std::string> token_buf_;
};

SparseVector vectorize(std::string_view text, const Vocabulary& vocab);

// Enumerates the spec's n-grams of one text in reading order. Exposed for the
// vocabulary builder and tests.
void for_each_ngram(std::string_view text, const FeatureSpec& spec, std::string& lower_buf,
                    std::vector<std::size_t>& offsets, std::vector<std::string>& token_buf,
                    const std::function<void(std::string_view)>& fn);

}  // namespace toxpipe::features
