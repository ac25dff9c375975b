#include <doctest.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "toxpipe/corpus.hpp"
#include "toxpipe/errors.hpp"
#include "toxpipe/rng.hpp"

using namespace toxpipe;
using corpus::Comment;
using corpus::DiffOptions;
using corpus::Revision;
using corpus::TokenMode;

namespace {

DiffOptions char_diff() { return {TokenMode::character, 2}; }

std::string random_string(std::mt19937_64& eng, std::size_t max_len,
                          std::string_view alphabet) {
    const std::size_t len = rng::bounded(eng, max_len + 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        s.push_back(alphabet[rng::bounded(eng, alphabet.size())]);
    }
    return s;
}

Revision make_rev(const std::string& page, const std::string& rev, std::int64_t ts,
                  const std::string& text) {
    Revision r;
    r.page_id = page;
    r.ns = corpus::Namespace::user_talk;
    r.rev_id = rev;
    r.timestamp = ts;
    r.author_id = "alice";
    r.author_registered = true;
    r.text = text;
    return r;
}

Comment make_comment(const std::string& id, const std::string& author, std::int64_t ts,
                     const std::string& raw = "text",
                     corpus::Namespace ns = corpus::Namespace::user_talk) {
    Comment c;
    c.comment_id = id;
    c.page_id = "p";
    c.ns = ns;
    c.timestamp = ts;
    c.author_id = author;
    c.author_registered = true;
    c.raw_markup = raw;
    c.clean_text = raw;
    return c;
}

}  // namespace

TEST_CASE("diff_added_text basics") {
    CHECK(corpus::diff_added_text("", "abc", char_diff()) == std::vector<std::string>{"abc"});
    CHECK(corpus::diff_added_text("abc", "abc", char_diff()).empty());
    CHECK(corpus::diff_added_text("a", "a", char_diff()).empty());
    CHECK(corpus::diff_added_text("abc", "", char_diff()).empty());
    CHECK(corpus::diff_added_text("Hello world", "Hello cruel world", char_diff()) ==
          std::vector<std::string>{"cruel "});
}

TEST_CASE("diff_added_text word tokens keep trailing whitespace") {
    const DiffOptions word{TokenMode::word, 2};
    const auto segments =
        corpus::diff_added_text("one two three four", "one two NEW WORDS three four", word);
    CHECK(segments == std::vector<std::string>{"NEW WORDS "});
    // Appending is the common talk-page edit; the old final token gains
    // trailing whitespace, so it re-counts as added.
    const auto appended = corpus::diff_added_text("a b c d", "a b c d e f", word);
    CHECK(appended == std::vector<std::string>{"d e f"});
}

TEST_CASE("diff_added_text matches the DP oracle on random pairs") {
    auto eng = rng::engine(42);
    for (int trial = 0; trial < 500; ++trial) {
        const std::string prev = random_string(eng, 60, "abcd");
        const std::string next = random_string(eng, 60, "abcd");
        const auto expected = oracles::diff_added_chars(prev, next);
        const auto actual = corpus::diff_added_text(prev, next, char_diff());
        REQUIRE_MESSAGE(actual == expected, "prev=", prev, " next=", next);

        // Length conservation against the reported matched bytes.
        std::size_t added = 0;
        for (const std::string& s : actual) added += s.size();
        CHECK(added == next.size() - corpus::diff_matched_bytes(prev, next, char_diff()));
    }
}

TEST_CASE("diff identity properties") {
    auto eng = rng::engine(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::string a = random_string(eng, 40, "xyz w");
        CHECK(corpus::diff_added_text(a, a, char_diff()).empty());
        if (!a.empty()) {
            CHECK(corpus::diff_added_text("", a, char_diff()) ==
                  std::vector<std::string>{a});
        }
    }
}

TEST_CASE("strip_markup rule table") {
    CHECK(corpus::strip_markup("plain words") == "plain words");
    CHECK(corpus::strip_markup("[[Page|shown]]") == "shown");
    CHECK(corpus::strip_markup("[[Target]]") == "Target");
    CHECK(corpus::strip_markup("<b>hi</b> ~~~~") == "hi");
    CHECK(corpus::strip_markup("''italic'' and '''bold'''") == "italic and bold");
    CHECK(corpus::strip_markup("{{warn|level=1}}text") == "text");
    CHECK(corpus::strip_markup("{{outer{{inner}}}}kept") == "kept");
    CHECK(corpus::strip_markup("see [https://example.org the docs] now") == "see the docs now");
    CHECK(corpus::strip_markup("bare [https://example.org] link") == "bare link");
    CHECK(corpus::strip_markup("a  \n\t b") == "a b");
    CHECK(corpus::strip_markup("<!-- hidden -->shown") == "shown");
    CHECK(corpus::strip_markup("x < y and y > z") == "x < y and y > z");
    CHECK(corpus::strip_markup("[[File:pic.png|thumb|the caption]]") == "the caption");
}

TEST_CASE("strip_markup is idempotent on fuzzed markup") {
    auto eng = rng::engine(99);
    const std::string alphabet = "ab []{}<>'|~=/-!r.\n";
    for (int trial = 0; trial < 300; ++trial) {
        const std::string raw = random_string(eng, 50, alphabet);
        const std::string once = corpus::strip_markup(raw);
        CHECK(corpus::strip_markup(once) == once);
    }
}

TEST_CASE("extract_comments emits one comment per adding revision") {
    SUBCASE("single revision from empty page") {
        const auto comments = corpus::extract_comments({make_rev("p1", "r1", 100, "hi")});
        REQUIRE(comments.size() == 1);
        CHECK(comments[0].comment_id == "p1:r1");
        CHECK(comments[0].raw_markup == "hi");
        CHECK(comments[0].clean_text == "hi");
    }
    SUBCASE("identical consecutive revisions add nothing") {
        const auto comments = corpus::extract_comments(
            {make_rev("p1", "r1", 100, "same text"), make_rev("p1", "r2", 200, "same text")});
        REQUIRE(comments.size() == 1);
        CHECK(comments[0].comment_id == "p1:r1");
    }
    SUBCASE("three appended sentences") {
        // Separators stay with the earlier sentence so each append leaves the
        // previous tokens untouched.
        const std::string s1 = "First sentence here. ";
        const std::string s2 = "Second sentence follows. ";
        const std::string s3 = "Third one closes.";
        const auto comments = corpus::extract_comments({
            make_rev("p1", "r1", 100, s1),
            make_rev("p1", "r2", 200, s1 + s2),
            make_rev("p1", "r3", 300, s1 + s2 + s3),
        });
        REQUIRE(comments.size() == 3);
        CHECK(comments[0].raw_markup == s1);
        CHECK(comments[1].raw_markup == s2);
        CHECK(comments[2].raw_markup == s3);
    }
    SUBCASE("out-of-order stream is rejected with ids") {
        try {
            corpus::extract_comments(
                {make_rev("p9", "r2", 200, "a"), make_rev("p9", "r1", 100, "b")});
            FAIL("expected ordering error");
        } catch (const Error& e) {
            CHECK(e.code() == errc::ordering);
            CHECK(std::string(e.what()).find("p9") != std::string::npos);
            CHECK(std::string(e.what()).find("r1") != std::string::npos);
        }
    }
    SUBCASE("output never exceeds revision count") {
        auto eng = rng::engine(5);
        std::vector<Revision> revs;
        std::string text;
        for (int i = 0; i < 20; ++i) {
            if (rng::bounded(eng, 3) != 0) text += random_string(eng, 12, "word ");
            revs.push_back(make_rev("p1", "r" + std::to_string(10 + i), 100 * (i + 1), text));
        }
        CHECK(corpus::extract_comments(revs).size() <= revs.size());
    }
}

TEST_CASE("filter_comments applies bot rules then admin rules") {
    corpus::FilterRules rules;
    rules.bot_author_patterns = {"Bot$"};
    rules.admin_template_patterns = {"\\{\\{admin"};
    const auto compiled = corpus::compile_rules(rules);

    SUBCASE("bot author removed") {
        std::vector<Comment> comments = {make_comment("c1", "alice", 1),
                                         make_comment("c2", "ExampleBot", 2),
                                         make_comment("c3", "bob", 3)};
        const auto result = corpus::filter_comments(comments, compiled);
        CHECK(result.comments.size() == 2);
        CHECK(result.stats.totals.all == 3);
        CHECK(result.stats.totals.no_bot == 2);
        CHECK(result.stats.totals.no_bot_admin == 2);
    }
    SUBCASE("empty rules keep everything") {
        const auto none = corpus::compile_rules({});
        std::vector<Comment> comments = {make_comment("c1", "alice", 1),
                                         make_comment("c2", "bob", 2)};
        const auto result = corpus::filter_comments(comments, none);
        CHECK(result.comments.size() == 2);
        CHECK(result.stats.totals.all == result.stats.totals.no_bot);
        CHECK(result.stats.totals.no_bot == result.stats.totals.no_bot_admin);
    }
    SUBCASE("mixed corpus of 10 with 2 bots and 3 admin templates") {
        std::vector<Comment> comments;
        for (int i = 0; i < 5; ++i) {
            comments.push_back(
                make_comment("h" + std::to_string(i), "user" + std::to_string(i), i));
        }
        comments.push_back(make_comment("b1", "CleanupBot", 10));
        comments.push_back(make_comment("b2", "ArchiveBot", 11));
        comments.push_back(make_comment("a1", "carol", 12, "{{admin-notice}} hello"));
        comments.push_back(make_comment("a2", "dan", 13, "{{admin-warning}}"));
        comments.push_back(make_comment("a3", "erin", 14, "note {{admin}} here"));
        const auto result = corpus::filter_comments(comments, compiled);
        CHECK(result.comments.size() == 5);
        CHECK(result.stats.totals.all == 10);
        CHECK(result.stats.totals.no_bot == 8);
        CHECK(result.stats.totals.no_bot_admin == 5);
        for (const auto& [ns, counts] : result.stats.by_namespace) {
            CHECK(counts.all >= counts.no_bot);
            CHECK(counts.no_bot >= counts.no_bot_admin);
        }
    }
}

TEST_CASE("filter rules that do not compile are rejected by name") {
    corpus::FilterRules rules;
    rules.bot_author_patterns = {"[unclosed"};
    try {
        corpus::compile_rules(rules);
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.code() == errc::config);
        CHECK(std::string(e.what()).find("[unclosed") != std::string::npos);
    }
}

TEST_CASE("sample_around_blocks picks nearest comments per event") {
    std::vector<Comment> comments;
    for (int i = 0; i < 10; ++i) {
        comments.push_back(make_comment("c" + std::to_string(i), "mallory", 1000 + 100 * i));
    }
    corpus::BlockEvent event{"mallory", 1450, corpus::EventKind::block};

    SUBCASE("user with exactly k comments returns them all") {
        std::vector<Comment> five(comments.begin(), comments.begin() + 5);
        const auto picked = corpus::sample_around_blocks(five, {event}, 5);
        CHECK(picked.size() == 5);
    }
    SUBCASE("ten comments, k=5 takes the nearest in time") {
        const auto picked = corpus::sample_around_blocks(comments, {event}, 5);
        REQUIRE(picked.size() == 5);
        // Distances from 1450: c4=50, then the 150/250 ties resolve to the
        // earlier comment.
        std::vector<std::string> ids;
        for (const Comment& c : picked) ids.push_back(c.comment_id);
        CHECK(ids == std::vector<std::string>{"c2", "c3", "c4", "c5", "c6"});
    }
    SUBCASE("overlapping events deduplicate") {
        corpus::BlockEvent other{"mallory", 1550, corpus::EventKind::block};
        const auto picked = corpus::sample_around_blocks(comments, {event, other}, 5);
        std::vector<std::string> ids;
        for (const Comment& c : picked) ids.push_back(c.comment_id);
        auto unique_ids = ids;
        std::sort(unique_ids.begin(), unique_ids.end());
        unique_ids.erase(std::unique(unique_ids.begin(), unique_ids.end()), unique_ids.end());
        CHECK(unique_ids.size() == ids.size());
        CHECK(picked.size() <= 2 * 5);
    }
    SUBCASE("user with no comments contributes nothing") {
        corpus::BlockEvent stranger{"nobody", 1450, corpus::EventKind::block};
        CHECK(corpus::sample_around_blocks(comments, {stranger}, 5).empty());
    }
}
