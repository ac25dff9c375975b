#pragma once

// Internal n-gram enumeration shared by the vocabulary builder and the bulk
// vectorizer. Templated on the sink so the hot scoring loop inlines it.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "toxpipe/features.hpp"

namespace toxpipe::features::detail {

inline void ascii_lower_into(std::string_view text, std::string& out) {
    out.assign(text);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
}

// Start offset of every UTF-8 code point; bytes that do not begin a valid
// sequence count as single code points.
inline void codepoint_offsets(std::string_view text, std::vector<std::size_t>& offsets) {
    offsets.clear();
    std::size_t i = 0;
    while (i < text.size()) {
        offsets.push_back(i);
        const unsigned char c = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if (c >= 0xF0)
            len = 4;
        else if (c >= 0xE0)
            len = 3;
        else if (c >= 0xC0)
            len = 2;
        if (i + len > text.size()) len = 1;
        i += len;
    }
    offsets.push_back(text.size());
}

inline std::uint32_t decode_codepoint(std::string_view text, std::size_t begin, std::size_t end) {
    const std::size_t len = end - begin;
    const unsigned char c0 = static_cast<unsigned char>(text[begin]);
    if (len == 1) return c0;
    std::uint32_t cp = c0 & (0x7F >> (len + 1));
    for (std::size_t i = 1; i < len; ++i) {
        cp = (cp << 6) | (static_cast<unsigned char>(text[begin + i]) & 0x3F);
    }
    return cp;
}

inline bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_ascii_punct(unsigned char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

struct TokenSpan {
    std::size_t begin;
    std::size_t end;
};

// Unicode-whitespace split with ASCII punctuation stripped from token edges.
inline void word_tokens(std::string_view text, std::vector<std::size_t>& offsets,
                        std::vector<TokenSpan>& tokens) {
    codepoint_offsets(text, offsets);
    tokens.clear();
    const std::size_t n_cp = offsets.size() - 1;
    std::size_t i = 0;
    while (i < n_cp) {
        while (i < n_cp && is_unicode_space(decode_codepoint(text, offsets[i], offsets[i + 1]))) {
            ++i;
        }
        if (i >= n_cp) break;
        std::size_t j = i;
        while (j < n_cp && !is_unicode_space(decode_codepoint(text, offsets[j], offsets[j + 1]))) {
            ++j;
        }
        std::size_t b = offsets[i];
        std::size_t e = offsets[j];
        while (b < e && is_ascii_punct(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && is_ascii_punct(static_cast<unsigned char>(text[e - 1]))) --e;
        if (b < e) tokens.push_back({b, e});
        i = j;
    }
}

// Calls fn(gram) for every spec n-gram of `text` in reading order. The caller
// provides scratch buffers; emitted views stay valid until the next call that
// reuses them (consume immediately).
template <typename Fn>
void enumerate_ngrams(std::string_view text, const FeatureSpec& spec, std::string& lower_buf,
                      std::vector<std::size_t>& offsets, std::vector<std::string>& join_bufs,
                      Fn&& fn) {
    std::string_view src = text;
    if (spec.lowercase) {
        ascii_lower_into(text, lower_buf);
        src = lower_buf;
    }
    if (spec.kind == NgramKind::character) {
        codepoint_offsets(src, offsets);
        const std::size_t n_cp = offsets.size() - 1;
        for (std::size_t n = spec.n_min; n <= spec.n_max; ++n) {
            if (n_cp < n) break;
            for (std::size_t i = 0; i + n <= n_cp; ++i) {
                fn(src.substr(offsets[i], offsets[i + n] - offsets[i]));
            }
        }
        return;
    }
    static thread_local std::vector<TokenSpan> tokens;
    word_tokens(src, offsets, tokens);
    if (join_bufs.size() < spec.n_max + 1) join_bufs.resize(spec.n_max + 1);
    for (std::size_t n = spec.n_min; n <= spec.n_max; ++n) {
        if (tokens.size() < n) break;
        if (n == 1) {
            for (const TokenSpan& t : tokens) fn(src.substr(t.begin, t.end - t.begin));
            continue;
        }
        std::string& join = join_bufs[n];
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            join.clear();
            for (std::size_t k = 0; k < n; ++k) {
                if (k > 0) join.push_back(' ');
                join.append(src, tokens[i + k].begin, tokens[i + k].end - tokens[i + k].begin);
            }
            fn(std::string_view(join));
        }
    }
}

}  // namespace toxpipe::features::detail
