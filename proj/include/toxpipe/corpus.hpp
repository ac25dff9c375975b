#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace toxpipe::corpus {

enum class Namespace { user_talk, article_talk };

std::string to_string(Namespace ns);
Namespace namespace_from_string(std::string_view text);

// One state of a page after an edit. Within a page, revisions are ordered by
// (timestamp, rev_id); `text` is the full wikitext after the edit.
struct Revision {
    std::string page_id;
    Namespace ns = Namespace::user_talk;
    std::string rev_id;
    std::int64_t timestamp = 0;
    std::string author_id;
    bool author_registered = false;
    std::string text;
};

// One talk-page contribution: the markup added by a single edit.
struct Comment {
    std::string comment_id;  // "{page_id}:{rev_id}"
    std::string page_id;
    Namespace ns = Namespace::user_talk;
    std::int64_t timestamp = 0;
    std::string author_id;
    bool author_registered = false;
    std::string raw_markup;
    std::string clean_text;
};

enum class EventKind { warn, block };

struct BlockEvent {
    std::string user_id;
    std::int64_t timestamp = 0;
    EventKind kind = EventKind::block;
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(std::string_view text);

// ---------------------------------------------------------------------------
// Diff

enum class TokenMode { word, character };

struct DiffOptions {
    TokenMode mode = TokenMode::word;
    // Common runs shorter than this many tokens are not treated as matches;
    // they would fragment added comments around incidental overlaps.
    std::size_t min_match = 2;
};

// Maximal runs of text in `next` left unmatched by a recursive
// longest-common-substring alignment against `prev`. Word tokens keep their
// trailing whitespace so segments concatenate back to exact source text.
// Ties between equally long common runs resolve to the earliest position in
// `next`, then the earliest in `prev`. Identical inputs match fully even when
// shorter than min_match.
std::vector<std::string> diff_added_text(std::string_view prev, std::string_view next,
                                         const DiffOptions& options = {});

// Bytes of `next` covered by the alignment; diff segments account for the rest.
std::size_t diff_matched_bytes(std::string_view prev, std::string_view next,
                               const DiffOptions& options = {});

// ---------------------------------------------------------------------------
// Markup stripping

// Fixed ordered rule table: {{...}} templates dropped whole, HTML comments and
// tags removed, [[target|shown]] and [[target]] links reduced to display text,
// bracketed URLs reduced to their label, ''/''' emphasis removed, signature
// tildes removed, whitespace collapsed. Applied until fixpoint, so the result
// is idempotent even on pathological nesting. Never throws.
std::string strip_markup(std::string_view wikitext);

// ---------------------------------------------------------------------------
// Extraction

// Diffs successive revisions of one page (first revision against empty text)
// and emits a Comment per revision that added anything. Revisions must arrive
// in page order: non-decreasing timestamp, lexicographic rev_id on ties.
std::vector<Comment> extract_comments(const std::vector<Revision>& page_revisions,
                                      const DiffOptions& options = {});

// Incremental form: feed revisions one at a time; memory stays bounded by a
// single revision text. reset() starts the next page.
class PageExtractor {
public:
    explicit PageExtractor(const DiffOptions& options = {}) : options_(options) {}

    std::optional<Comment> push(const Revision& revision);
    void reset();

private:
    DiffOptions options_;
    std::string prev_text_;
    std::string page_id_;
    std::int64_t last_timestamp_ = 0;
    std::string last_rev_id_;
    bool has_last_ = false;
};

// ---------------------------------------------------------------------------
// Filtering

struct FilterRules {
    std::vector<std::string> bot_author_patterns;
    std::vector<std::string> admin_template_patterns;
};

struct CompiledFilterRules {
    std::vector<std::regex> bot;
    std::vector<std::regex> admin;
};

CompiledFilterRules compile_rules(const FilterRules& rules);

struct StageCounts {
    std::size_t all = 0;
    std::size_t no_bot = 0;
    std::size_t no_bot_admin = 0;
};

// Counts per namespace after each filter stage, plus totals.
struct FilterStats {
    std::map<std::string, StageCounts> by_namespace;
    StageCounts totals;
};

struct FilterResult {
    std::vector<Comment> comments;
    FilterStats stats;
};

enum class FilterVerdict { kept, bot, admin };

// Bot-author matches are removed first, then admin-template matches on the
// remaining comments' raw markup.
FilterVerdict filter_verdict(const Comment& comment, const CompiledFilterRules& rules);

FilterResult filter_comments(std::vector<Comment> comments, const CompiledFilterRules& rules);

// Streaming form: applies one verdict and updates the stage counts.
FilterVerdict filter_one(const Comment& comment, const CompiledFilterRules& rules,
                         FilterStats& stats);

// ---------------------------------------------------------------------------
// Blocked-sample selection

// For each event, the k comments by that user closest to the event timestamp
// (ties toward the earlier comment), deduplicated across events. Output is
// sorted by (timestamp, comment_id).
std::vector<Comment> sample_around_blocks(const std::vector<Comment>& comments,
                                          const std::vector<BlockEvent>& events,
                                          std::size_t k = 5);

}  // namespace toxpipe::corpus
