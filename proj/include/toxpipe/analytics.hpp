#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toxpipe/corpus.hpp"
#include "toxpipe/features.hpp"
#include "toxpipe/model.hpp"

namespace toxpipe::analytics {

struct ScoredComment {
    corpus::Comment comment;
    double attack_score = 0.0;
    bool is_attack = false;
};

struct ScoreStats {
    std::size_t n_scored = 0;
    double seconds = 0.0;
    double comments_per_second = 0.0;
};

// Scores every comment once against threshold t; work is sliced over threads
// with results written back by index, so thread count never changes output.
std::vector<ScoredComment> score_corpus(const model::AttackModel& model,
                                        const features::Vocabulary& vocab,
                                        const std::vector<corpus::Comment>& comments, double t,
                                        unsigned threads, ScoreStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Prevalence with bootstrap confidence intervals

// Percentile interval of B seeded resample means; positions interpolate
// linearly at q*(B-1) over the sorted means.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values, std::size_t B,
                                       double level, std::uint64_t seed);

struct GroupPrevalence {
    std::string key;
    std::size_t n_comments = 0;
    std::size_t n_attacks = 0;
    double prevalence = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct Grouping {
    std::string name;
    std::function<std::string(const ScoredComment&)> key_of;
};

Grouping group_by_anonymity();
Grouping group_by_namespace();
Grouping group_by_year();
// Buckets users by comment count over the scored set's analysis year.
Grouping group_by_activity_bucket(const std::vector<ScoredComment>& scored, int year,
                                  const std::vector<std::size_t>& bucket_edges);
// Case-insensitive substring containment on the clean text.
Grouping group_by_contains_ngram(const std::string& gram);

// Groups are emitted in key order; each CI seed derives from the group key so
// parallel evaluation cannot change results.
std::vector<GroupPrevalence> prevalence_by_group(const std::vector<ScoredComment>& scored,
                                                 const Grouping& grouping, std::size_t B,
                                                 double level, std::uint64_t seed);

// Welch two-sample t on binary indicators with a two-sided normal p-value.
// Degenerate variance reports no value unless the means agree exactly.
struct MeanDiffTest {
    std::optional<double> t;
    std::optional<double> p_value;
    double mean_a = 0.0;
    double mean_b = 0.0;
};

MeanDiffTest diff_of_means_test(const std::vector<int>& group_a, const std::vector<int>& group_b);

// ---------------------------------------------------------------------------
// User-level analyses

struct UserYearStats {
    std::string author_id;
    bool registered = false;
    std::size_t activity_level = 0;  // comments in the analysis year
    std::size_t toxicity_level = 0;  // attacks in the analysis year
};

std::vector<UserYearStats> user_year_stats(const std::vector<ScoredComment>& scored, int year);

struct HistogramBucket {
    std::string label;
    std::size_t lo = 0;  // inclusive
    std::size_t hi = 0;  // inclusive; SIZE_MAX for the open top bucket
    double pct_comments = 0.0;
    double pct_attacks = 0.0;
    double pct_attacks_registered = 0.0;
};

// Activity buckets from edges {5, 20, 100}: [1,5], (5,20], (20,100], (100,inf).
std::vector<HistogramBucket> activity_histogram(const std::vector<ScoredComment>& scored,
                                                int year,
                                                const std::vector<std::size_t>& bucket_edges);

struct ToxicityBucket {
    std::string label;
    std::size_t lo = 0;
    std::size_t hi = 0;
    double pct_attacks = 0.0;
    std::size_t n_users = 0;
};

// Toxicity buckets from edges {1, 4, 20}: level 1, 2-4, 5-20, >20; only users
// with at least one attack appear.
std::vector<ToxicityBucket> toxicity_concentration(const std::vector<ScoredComment>& scored,
                                                   int year,
                                                   const std::vector<std::size_t>& bucket_edges);

// ---------------------------------------------------------------------------
// Moderation analyses

struct ModerationReport {
    std::size_t n_attacks = 0;
    double warned = 0.0;  // fraction of attacks followed by a warning
    double blocked = 0.0;
    double either = 0.0;
    double warned_normalized = 0.0;  // raw / precision
    double blocked_normalized = 0.0;
    double either_normalized = 0.0;
    std::int64_t window_seconds = 0;
};

// An attack counts as followed when the same author has an event of that kind
// in (attack_time, attack_time + window]; events at the attack instant do not
// count.
ModerationReport moderation_followup(const std::vector<ScoredComment>& scored,
                                     const std::vector<corpus::BlockEvent>& events,
                                     std::int64_t window_seconds, double precision);

struct CurvePoint {
    std::size_t x = 0;  // attack count (first family) or prior blocks (second)
    std::size_t n = 0;  // sample size behind the estimate
    double p = 0.0;
};

struct ModerationCurves {
    // P(warned | user made k attacks), P(blocked | k attacks): a user counts
    // as moderated when an event of the kind falls after their first attack.
    std::vector<CurvePoint> warn_given_attacks;
    std::vector<CurvePoint> block_given_attacks;
    // P(block within window after an attack | j prior blocks before it).
    std::vector<CurvePoint> block_given_prior_blocks;
};

ModerationCurves moderation_conditional_curves(const std::vector<ScoredComment>& scored,
                                               const std::vector<corpus::BlockEvent>& events,
                                               std::int64_t window_seconds);

// ---------------------------------------------------------------------------
// Neighboring attack fraction

struct NafReport {
    std::size_t n = 0;  // neighborhood radius
    double mean_attacking = 0.0;
    double mean_non_attacking = 0.0;
    std::size_t n_attacking = 0;
    std::size_t n_non_attacking = 0;
    std::optional<double> t_statistic;
};

// Neighborhood of a comment: up to n predecessors and n successors on the
// same page, ordered by (timestamp, comment_id). Comments with an empty
// neighborhood are excluded; truncated page-boundary neighborhoods count
// as-is.
NafReport neighboring_attack_fraction(const std::vector<ScoredComment>& scored, std::size_t n);

}  // namespace toxpipe::analytics
