#include "toxpipe/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <unordered_map>
#include <unordered_set>

#include "toxpipe/errors.hpp"
#include "toxpipe/iso8601.hpp"

namespace toxpipe::corpus {

std::string to_string(Namespace ns) {
    return ns == Namespace::user_talk ? "user_talk" : "article_talk";
}

Namespace namespace_from_string(std::string_view text) {
    if (text == "user_talk") return Namespace::user_talk;
    if (text == "article_talk") return Namespace::article_talk;
    throw Error(errc::format, "unknown namespace: " + std::string(text));
}

std::string to_string(EventKind k) { return k == EventKind::warn ? "warn" : "block"; }

EventKind event_kind_from_string(std::string_view text) {
    if (text == "warn") return EventKind::warn;
    if (text == "block") return EventKind::block;
    throw Error(errc::format, "unknown moderation event kind: " + std::string(text));
}

namespace {

bool is_space_byte(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Byte offsets of token starts; tokens partition the input exactly.
// Word mode: a token is a run of non-whitespace plus its trailing whitespace
// (a leading whitespace run forms its own token). Character mode: one token
// per UTF-8 code point, with each invalid byte kept as its own token.
std::vector<std::size_t> token_starts(std::string_view text, TokenMode mode) {
    std::vector<std::size_t> starts;
    std::size_t i = 0;
    const std::size_t n = text.size();
    if (mode == TokenMode::word) {
        while (i < n) {
            starts.push_back(i);
            if (is_space_byte(text[i])) {
                while (i < n && is_space_byte(text[i])) ++i;
                continue;
            }
            while (i < n && !is_space_byte(text[i])) ++i;
            while (i < n && is_space_byte(text[i])) ++i;
        }
    } else {
        while (i < n) {
            starts.push_back(i);
            const unsigned char c = static_cast<unsigned char>(text[i]);
            std::size_t len = 1;
            if (c >= 0xF0)
                len = 4;
            else if (c >= 0xE0)
                len = 3;
            else if (c >= 0xC0)
                len = 2;
            // Truncated multibyte sequences fall back to single bytes.
            if (i + len > n) len = 1;
            i += len;
        }
    }
    return starts;
}

struct TokenSeq {
    std::string_view text;
    std::vector<std::size_t> starts;  // plus implicit end sentinel text.size()

    std::size_t count() const { return starts.size(); }
    std::string_view token(std::size_t i) const {
        const std::size_t begin = starts[i];
        const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : text.size();
        return text.substr(begin, end - begin);
    }
    std::size_t byte_begin(std::size_t i) const { return starts[i]; }
    std::size_t byte_end(std::size_t i) const {
        return i + 1 < starts.size() ? starts[i + 1] : text.size();
    }
};

struct Interned {
    std::vector<int> prev;
    std::vector<int> next;
};

Interned intern_tokens(const TokenSeq& prev, const TokenSeq& next) {
    Interned out;
    std::unordered_map<std::string_view, int> ids;
    ids.reserve(prev.count() + next.count());
    auto id_of = [&ids](std::string_view tok) {
        auto [it, inserted] = ids.emplace(tok, static_cast<int>(ids.size()));
        return it->second;
    };
    out.prev.reserve(prev.count());
    for (std::size_t i = 0; i < prev.count(); ++i) out.prev.push_back(id_of(prev.token(i)));
    out.next.reserve(next.count());
    for (std::size_t i = 0; i < next.count(); ++i) out.next.push_back(id_of(next.token(i)));
    return out;
}

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct Match {
    std::size_t prev_start = 0;
    std::size_t next_start = 0;
    std::size_t length = 0;
};

// Longest common contiguous run between the two id ranges. Two-row DP; on
// equal lengths the run starting earliest in `next`, then earliest in `prev`,
// wins.
Match longest_common_run(const std::vector<int>& a, std::size_t ab, std::size_t ae,
                         const std::vector<int>& b, std::size_t bb, std::size_t be) {
    Match best;
    const std::size_t m = be - bb;
    std::vector<std::size_t> cur(m + 1, 0), prev_row(m + 1, 0);
    for (std::size_t i = ab; i < ae; ++i) {
        for (std::size_t j = bb; j < be; ++j) {
            const std::size_t col = j - bb + 1;
            if (a[i] == b[j]) {
                const std::size_t len = prev_row[col - 1] + 1;
                cur[col] = len;
                const std::size_t ps = i + 1 - len;
                const std::size_t ns = j + 1 - len;
                if (len > best.length ||
                    (len == best.length &&
                     (ns < best.next_start ||
                      (ns == best.next_start && ps < best.prev_start)))) {
                    best = {ps, ns, len};
                }
            } else {
                cur[col] = 0;
            }
        }
        std::swap(cur, prev_row);
    }
    return best;
}

// Explicit work stack instead of recursion; long pages can split thousands
// of times.
void align(const std::vector<int>& a, const std::vector<int>& b, std::size_t min_match,
           std::vector<Span>& matched) {
    struct Region {
        std::size_t ab, ae, bb, be;
    };
    std::vector<Region> work = {{0, a.size(), 0, b.size()}};
    while (!work.empty()) {
        const Region r = work.back();
        work.pop_back();
        if (r.ae - r.ab < min_match || r.be - r.bb < min_match) continue;
        const Match m = longest_common_run(a, r.ab, r.ae, b, r.bb, r.be);
        if (m.length < min_match) continue;
        matched.push_back({m.next_start, m.next_start + m.length});
        work.push_back({r.ab, m.prev_start, r.bb, m.next_start});
        work.push_back({m.prev_start + m.length, r.ae, m.next_start + m.length, r.be});
    }
    std::sort(matched.begin(), matched.end(),
              [](const Span& x, const Span& y) { return x.begin < y.begin; });
}

// Matched spans in `next` token coordinates, ordered and disjoint.
std::vector<Span> matched_spans(std::string_view prev, std::string_view next,
                                const DiffOptions& options) {
    const TokenSeq pseq{prev, token_starts(prev, options.mode)};
    const TokenSeq nseq{next, token_starts(next, options.mode)};
    std::vector<Span> matched;
    if (pseq.count() == 0 || nseq.count() == 0) return matched;
    const Interned ids = intern_tokens(pseq, nseq);
    if (ids.prev == ids.next) {
        matched.push_back({0, nseq.count()});
        return matched;
    }
    const std::size_t min_match = std::max<std::size_t>(1, options.min_match);
    align(ids.prev, ids.next, min_match, matched);
    return matched;
}

}  // namespace

std::vector<std::string> diff_added_text(std::string_view prev, std::string_view next,
                                         const DiffOptions& options) {
    std::vector<std::string> segments;
    if (next.empty()) return segments;
    const TokenSeq nseq{next, token_starts(next, options.mode)};
    const std::vector<Span> matched = matched_spans(prev, next, options);
    std::size_t cursor = 0;
    auto emit = [&](std::size_t tok_begin, std::size_t tok_end) {
        if (tok_begin >= tok_end) return;
        const std::size_t b = nseq.byte_begin(tok_begin);
        const std::size_t e = nseq.byte_end(tok_end - 1);
        segments.emplace_back(next.substr(b, e - b));
    };
    for (const Span& span : matched) {
        emit(cursor, span.begin);
        cursor = span.end;
    }
    emit(cursor, nseq.count());
    return segments;
}

std::size_t diff_matched_bytes(std::string_view prev, std::string_view next,
                               const DiffOptions& options) {
    const TokenSeq nseq{next, token_starts(next, options.mode)};
    std::size_t bytes = 0;
    for (const Span& span : matched_spans(prev, next, options)) {
        bytes += nseq.byte_end(span.end - 1) - nseq.byte_begin(span.begin);
    }
    return bytes;
}

// ---------------------------------------------------------------------------
// Markup stripping

namespace {

bool remove_templates(std::string& s) {
    // Innermost first: the last "{{" before the first "}}".
    const std::size_t close = s.find("}}");
    if (close == std::string::npos) return false;
    const std::size_t open = s.rfind("{{", close);
    if (open == std::string::npos) return false;
    s.erase(open, close + 2 - open);
    return true;
}

bool remove_html_comments(std::string& s) {
    const std::size_t open = s.find("<!--");
    if (open == std::string::npos) return false;
    const std::size_t close = s.find("-->", open + 4);
    if (close == std::string::npos) {
        s.erase(open);
    } else {
        s.erase(open, close + 3 - open);
    }
    return true;
}

bool remove_html_tags(std::string& s) {
    std::size_t pos = 0;
    while ((pos = s.find('<', pos)) != std::string::npos) {
        if (pos + 1 >= s.size()) return false;
        const char c = s[pos + 1];
        if (!(std::isalpha(static_cast<unsigned char>(c)) || c == '/')) {
            ++pos;
            continue;
        }
        const std::size_t close = s.find('>', pos + 1);
        if (close == std::string::npos) return false;
        s.erase(pos, close + 1 - pos);
        return true;
    }
    return false;
}

bool reduce_wiki_links(std::string& s) {
    // Innermost first, same scheme as templates. Display text is the part
    // after the last pipe.
    const std::size_t close = s.find("]]");
    if (close == std::string::npos) return false;
    const std::size_t open = s.rfind("[[", close);
    if (open == std::string::npos) return false;
    std::string inner = s.substr(open + 2, close - open - 2);
    const std::size_t pipe = inner.rfind('|');
    if (pipe != std::string::npos) inner = inner.substr(pipe + 1);
    s.replace(open, close + 2 - open, inner);
    return true;
}

bool reduce_external_links(std::string& s) {
    std::size_t pos = 0;
    while ((pos = s.find('[', pos)) != std::string::npos) {
        if (pos + 1 < s.size() && s[pos + 1] == '[') {
            pos += 2;
            continue;
        }
        if (s.compare(pos + 1, 7, "http://") != 0 && s.compare(pos + 1, 8, "https://") != 0) {
            ++pos;
            continue;
        }
        const std::size_t close = s.find(']', pos + 1);
        if (close == std::string::npos) return false;
        const std::string inner = s.substr(pos + 1, close - pos - 1);
        const std::size_t space = inner.find(' ');
        const std::string label = space == std::string::npos ? "" : inner.substr(space + 1);
        s.replace(pos, close + 1 - pos, label);
        return true;
    }
    return false;
}

bool remove_quote_runs(std::string& s) {
    // Emphasis markers are runs of two or more apostrophes.
    std::size_t pos = 0;
    while ((pos = s.find("''", pos)) != std::string::npos) {
        std::size_t end = pos;
        while (end < s.size() && s[end] == '\'') ++end;
        s.erase(pos, end - pos);
        return true;
    }
    return false;
}

bool remove_signatures(std::string& s) {
    std::size_t pos = 0;
    while ((pos = s.find("~~~", pos)) != std::string::npos) {
        std::size_t end = pos;
        while (end < s.size() && s[end] == '~') ++end;
        s.erase(pos, end - pos);
        return true;
    }
    return false;
}

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (is_space_byte(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::string strip_markup(std::string_view wikitext) {
    std::string s(wikitext);
    // Each rule removes at most one construct per call; loop until stable.
    // The pass bound guards against adversarial inputs.
    for (int pass = 0; pass < 64; ++pass) {
        bool changed = false;
        while (remove_templates(s)) changed = true;
        while (remove_html_comments(s)) changed = true;
        while (remove_html_tags(s)) changed = true;
        while (reduce_wiki_links(s)) changed = true;
        while (reduce_external_links(s)) changed = true;
        while (remove_quote_runs(s)) changed = true;
        while (remove_signatures(s)) changed = true;
        if (!changed) break;
    }
    return collapse_whitespace(s);
}

// ---------------------------------------------------------------------------
// Extraction

std::optional<Comment> PageExtractor::push(const Revision& revision) {
    if (has_last_) {
        if (revision.page_id != page_id_) {
            throw Error(errc::ordering, "revision stream mixes pages: expected page " +
                                            page_id_ + ", got " + revision.page_id +
                                            " at rev " + revision.rev_id);
        }
        const bool out_of_order =
            revision.timestamp < last_timestamp_ ||
            (revision.timestamp == last_timestamp_ && revision.rev_id <= last_rev_id_);
        if (out_of_order) {
            throw Error(errc::ordering, "out-of-order revision stream for page " +
                                            revision.page_id + " at rev " + revision.rev_id);
        }
    }
    const std::vector<std::string> added = diff_added_text(prev_text_, revision.text, options_);
    prev_text_ = revision.text;
    page_id_ = revision.page_id;
    last_timestamp_ = revision.timestamp;
    last_rev_id_ = revision.rev_id;
    has_last_ = true;
    if (added.empty()) return std::nullopt;
    Comment c;
    c.comment_id = revision.page_id + ":" + revision.rev_id;
    c.page_id = revision.page_id;
    c.ns = revision.ns;
    c.timestamp = revision.timestamp;
    c.author_id = revision.author_id;
    c.author_registered = revision.author_registered;
    for (const std::string& seg : added) c.raw_markup += seg;
    c.clean_text = strip_markup(c.raw_markup);
    return c;
}

void PageExtractor::reset() {
    prev_text_.clear();
    page_id_.clear();
    last_timestamp_ = 0;
    last_rev_id_.clear();
    has_last_ = false;
}

std::vector<Comment> extract_comments(const std::vector<Revision>& page_revisions,
                                      const DiffOptions& options) {
    std::vector<Comment> comments;
    PageExtractor extractor(options);
    for (const Revision& rev : page_revisions) {
        if (auto comment = extractor.push(rev)) comments.push_back(std::move(*comment));
    }
    return comments;
}

// ---------------------------------------------------------------------------
// Filtering

CompiledFilterRules compile_rules(const FilterRules& rules) {
    CompiledFilterRules out;
    auto compile = [](const std::string& pattern) {
        try {
            return std::regex(pattern, std::regex::ECMAScript | std::regex::optimize);
        } catch (const std::regex_error& e) {
            throw Error(errc::config, "bad filter pattern '" + pattern + "': " + e.what());
        }
    };
    for (const std::string& p : rules.bot_author_patterns) out.bot.push_back(compile(p));
    for (const std::string& p : rules.admin_template_patterns) out.admin.push_back(compile(p));
    return out;
}

namespace {

bool matches_any(const std::string& text, const std::vector<std::regex>& patterns) {
    for (const std::regex& re : patterns) {
        if (std::regex_search(text, re)) return true;
    }
    return false;
}

}  // namespace

FilterVerdict filter_verdict(const Comment& comment, const CompiledFilterRules& rules) {
    if (matches_any(comment.author_id, rules.bot)) return FilterVerdict::bot;
    if (matches_any(comment.raw_markup, rules.admin)) return FilterVerdict::admin;
    return FilterVerdict::kept;
}

FilterVerdict filter_one(const Comment& comment, const CompiledFilterRules& rules,
                         FilterStats& stats) {
    StageCounts& ns_counts = stats.by_namespace[to_string(comment.ns)];
    ++ns_counts.all;
    ++stats.totals.all;
    const FilterVerdict verdict = filter_verdict(comment, rules);
    if (verdict == FilterVerdict::bot) return verdict;
    ++ns_counts.no_bot;
    ++stats.totals.no_bot;
    if (verdict == FilterVerdict::admin) return verdict;
    ++ns_counts.no_bot_admin;
    ++stats.totals.no_bot_admin;
    return verdict;
}

FilterResult filter_comments(std::vector<Comment> comments, const CompiledFilterRules& rules) {
    FilterResult result;
    result.comments.reserve(comments.size());
    for (Comment& c : comments) {
        if (filter_one(c, rules, result.stats) == FilterVerdict::kept) {
            result.comments.push_back(std::move(c));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Blocked-sample selection

std::vector<Comment> sample_around_blocks(const std::vector<Comment>& comments,
                                          const std::vector<BlockEvent>& events,
                                          std::size_t k) {
    if (k == 0) throw Error(errc::config, "sample_around_blocks requires k >= 1");
    std::unordered_map<std::string, std::vector<const Comment*>> by_user;
    for (const Comment& c : comments) by_user[c.author_id].push_back(&c);
    for (auto& [user, list] : by_user) {
        std::sort(list.begin(), list.end(), [](const Comment* a, const Comment* b) {
            if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
            return a->comment_id < b->comment_id;
        });
    }

    std::unordered_set<std::string> seen;
    std::vector<const Comment*> picked;
    for (const BlockEvent& ev : events) {
        auto it = by_user.find(ev.user_id);
        if (it == by_user.end()) continue;
        const std::vector<const Comment*>& list = it->second;
        std::vector<const Comment*> nearest(list);
        std::stable_sort(nearest.begin(), nearest.end(),
                         [&ev](const Comment* a, const Comment* b) {
                             const auto da = std::llabs(a->timestamp - ev.timestamp);
                             const auto db = std::llabs(b->timestamp - ev.timestamp);
                             if (da != db) return da < db;
                             if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
                             return a->comment_id < b->comment_id;
                         });
        for (std::size_t i = 0; i < nearest.size() && i < k; ++i) {
            if (seen.insert(nearest[i]->comment_id).second) picked.push_back(nearest[i]);
        }
    }
    std::sort(picked.begin(), picked.end(), [](const Comment* a, const Comment* b) {
        if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
        return a->comment_id < b->comment_id;
    });
    std::vector<Comment> out;
    out.reserve(picked.size());
    for (const Comment* c : picked) out.push_back(*c);
    return out;
}

}  // namespace toxpipe::corpus
