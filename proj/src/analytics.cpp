#include "toxpipe/analytics.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <thread>
#include <unordered_map>

#include "toxpipe/errors.hpp"
#include "toxpipe/iso8601.hpp"
#include "toxpipe/rng.hpp"

namespace toxpipe::analytics {

std::vector<ScoredComment> score_corpus(const model::AttackModel& model,
                                        const features::Vocabulary& vocab,
                                        const std::vector<corpus::Comment>& comments, double t,
                                        unsigned threads, ScoreStats* stats) {
    if (t < 0.0 || t > 1.0) throw Error(errc::config, "threshold must lie in [0, 1]");
    if (vocab.built_from() != model.vocab_fingerprint) {
        throw Error(errc::dependency, "vocabulary fingerprint does not match the model");
    }
    if (threads == 0) threads = 1;
    const auto start = std::chrono::steady_clock::now();
    std::vector<ScoredComment> out(comments.size());
    auto worker = [&](std::size_t begin, std::size_t end) {
        features::Vectorizer vectorizer(vocab);
        for (std::size_t i = begin; i < end; ++i) {
            const double score =
                model::attack_score(model, vectorizer.vectorize(comments[i].clean_text));
            out[i] = {comments[i], score, score > t};
        }
    };
    if (threads == 1 || comments.size() < 2 * threads) {
        worker(0, comments.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (comments.size() + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(comments.size(), begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (std::thread& th : pool) th.join();
    }
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    if (stats) {
        stats->n_scored = comments.size();
        stats->seconds = elapsed.count();
        stats->comments_per_second =
            elapsed.count() > 0.0 ? static_cast<double>(comments.size()) / elapsed.count() : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bootstrap

std::pair<double, double> bootstrap_ci(const std::vector<double>& values, std::size_t B,
                                       double level, std::uint64_t seed) {
    if (values.empty()) throw Error(errc::size, "bootstrap_ci: empty sample");
    if (B == 0) throw Error(errc::config, "bootstrap_ci: B must be >= 1");
    if (level <= 0.0 || level >= 1.0) {
        throw Error(errc::config, "bootstrap_ci: level must lie in (0, 1)");
    }
    const std::size_t n = values.size();
    std::vector<double> means(B);
    for (std::size_t b = 0; b < B; ++b) {
        auto eng = rng::engine(rng::derive_seed(seed, b));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += values[rng::bounded(eng, n)];
        means[b] = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&means](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, means.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    return {quantile((1.0 - level) / 2.0), quantile((1.0 + level) / 2.0)};
}

// ---------------------------------------------------------------------------
// Groupings

Grouping group_by_anonymity() {
    return {"anonymity", [](const ScoredComment& c) {
                return c.comment.author_registered ? std::string("registered")
                                                   : std::string("anonymous");
            }};
}

Grouping group_by_namespace() {
    return {"namespace",
            [](const ScoredComment& c) { return corpus::to_string(c.comment.ns); }};
}

Grouping group_by_year() {
    return {"year",
            [](const ScoredComment& c) { return std::to_string(utc_year(c.comment.timestamp)); }};
}

namespace {

std::string user_key(const corpus::Comment& c) {
    return (c.author_registered ? "r:" : "a:") + c.author_id;
}

std::string bucket_label(std::size_t lo, std::size_t hi) {
    if (hi == SIZE_MAX) return ">" + std::to_string(lo - 1);
    if (lo == hi) return std::to_string(lo);
    return std::to_string(lo) + "-" + std::to_string(hi);
}

struct BucketRange {
    std::size_t lo;
    std::size_t hi;  // inclusive, SIZE_MAX open
};

std::vector<BucketRange> bucket_ranges(const std::vector<std::size_t>& edges) {
    if (edges.empty()) throw Error(errc::config, "bucket edges must be non-empty");
    std::vector<BucketRange> ranges;
    std::size_t lo = 1;
    for (const std::size_t edge : edges) {
        if (edge < lo) throw Error(errc::config, "bucket edges must be increasing");
        ranges.push_back({lo, edge});
        lo = edge + 1;
    }
    ranges.push_back({lo, SIZE_MAX});
    return ranges;
}

std::size_t bucket_of(const std::vector<BucketRange>& ranges, std::size_t value) {
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        if (value >= ranges[i].lo && value <= ranges[i].hi) return i;
    }
    return ranges.size() - 1;
}

std::string ascii_lower(std::string s) {
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    return s;
}

}  // namespace

Grouping group_by_activity_bucket(const std::vector<ScoredComment>& scored, int year,
                                  const std::vector<std::size_t>& bucket_edges) {
    const auto ranges = bucket_ranges(bucket_edges);
    auto counts = std::make_shared<std::unordered_map<std::string, std::size_t>>();
    for (const ScoredComment& c : scored) {
        if (utc_year(c.comment.timestamp) != year) continue;
        ++(*counts)[user_key(c.comment)];
    }
    return {"activity_bucket", [counts, ranges](const ScoredComment& c) {
                auto it = counts->find(user_key(c.comment));
                const std::size_t activity = it == counts->end() ? 0 : it->second;
                if (activity == 0) return std::string("outside_year");
                const BucketRange& r = ranges[bucket_of(ranges, activity)];
                return bucket_label(r.lo, r.hi);
            }};
}

Grouping group_by_contains_ngram(const std::string& gram) {
    const std::string needle = ascii_lower(gram);
    return {"contains_ngram:" + needle, [needle](const ScoredComment& c) {
                const bool hit = ascii_lower(c.comment.clean_text).find(needle) !=
                                 std::string::npos;
                return hit ? "contains:" + needle : "absent:" + needle;
            }};
}

std::vector<GroupPrevalence> prevalence_by_group(const std::vector<ScoredComment>& scored,
                                                 const Grouping& grouping, std::size_t B,
                                                 double level, std::uint64_t seed) {
    std::map<std::string, std::vector<double>> flags;
    for (const ScoredComment& c : scored) {
        flags[grouping.key_of(c)].push_back(c.is_attack ? 1.0 : 0.0);
    }
    std::vector<GroupPrevalence> out;
    out.reserve(flags.size());
    for (const auto& [key, values] : flags) {
        GroupPrevalence g;
        g.key = key;
        g.n_comments = values.size();
        g.n_attacks = static_cast<std::size_t>(
            std::count(values.begin(), values.end(), 1.0));
        g.prevalence = static_cast<double>(g.n_attacks) / static_cast<double>(g.n_comments);
        const auto [lo, hi] =
            bootstrap_ci(values, B, level, rng::derive_seed(seed, rng::fnv1a64(key)));
        g.ci_low = lo;
        g.ci_high = hi;
        out.push_back(std::move(g));
    }
    return out;
}

MeanDiffTest diff_of_means_test(const std::vector<int>& group_a,
                                const std::vector<int>& group_b) {
    if (group_a.empty() || group_b.empty()) {
        throw Error(errc::size, "diff_of_means_test: both groups must be non-empty");
    }
    MeanDiffTest result;
    const double na = static_cast<double>(group_a.size());
    const double nb = static_cast<double>(group_b.size());
    double ma = 0.0, mb = 0.0;
    for (const int v : group_a) ma += v != 0 ? 1.0 : 0.0;
    for (const int v : group_b) mb += v != 0 ? 1.0 : 0.0;
    ma /= na;
    mb /= nb;
    result.mean_a = ma;
    result.mean_b = mb;
    double va = 0.0, vb = 0.0;
    for (const int v : group_a) va += ((v != 0 ? 1.0 : 0.0) - ma) * ((v != 0 ? 1.0 : 0.0) - ma);
    for (const int v : group_b) vb += ((v != 0 ? 1.0 : 0.0) - mb) * ((v != 0 ? 1.0 : 0.0) - mb);
    va = group_a.size() > 1 ? va / (na - 1.0) : 0.0;
    vb = group_b.size() > 1 ? vb / (nb - 1.0) : 0.0;
    if (group_a.size() < 2 || group_b.size() < 2) return result;  // undefined
    const double denom = std::sqrt(va / na + vb / nb);
    if (denom == 0.0) {
        // Degenerate variance: equal means are a null result, differing means
        // an unbounded separation.
        result.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity() * (ma > mb ? 1 : -1);
        result.p_value = ma == mb ? 1.0 : 0.0;
        return result;
    }
    const double t = (ma - mb) / denom;
    result.t = t;
    result.p_value = std::erfc(std::abs(t) / std::sqrt(2.0));
    return result;
}

// ---------------------------------------------------------------------------
// User-level analyses

std::vector<UserYearStats> user_year_stats(const std::vector<ScoredComment>& scored, int year) {
    std::map<std::string, UserYearStats> users;
    for (const ScoredComment& c : scored) {
        if (utc_year(c.comment.timestamp) != year) continue;
        UserYearStats& u = users[user_key(c.comment)];
        if (u.activity_level == 0) {
            u.author_id = c.comment.author_id;
            u.registered = c.comment.author_registered;
        }
        ++u.activity_level;
        if (c.is_attack) ++u.toxicity_level;
    }
    std::vector<UserYearStats> out;
    out.reserve(users.size());
    for (auto& [key, u] : users) out.push_back(std::move(u));
    return out;
}

std::vector<HistogramBucket> activity_histogram(const std::vector<ScoredComment>& scored,
                                                int year,
                                                const std::vector<std::size_t>& bucket_edges) {
    const auto ranges = bucket_ranges(bucket_edges);
    const std::vector<UserYearStats> users = user_year_stats(scored, year);
    std::unordered_map<std::string, std::size_t> user_bucket;
    for (const UserYearStats& u : users) {
        user_bucket[(u.registered ? "r:" : "a:") + u.author_id] =
            bucket_of(ranges, u.activity_level);
    }
    std::vector<HistogramBucket> buckets;
    for (const BucketRange& r : ranges) {
        HistogramBucket b;
        b.label = bucket_label(r.lo, r.hi);
        b.lo = r.lo;
        b.hi = r.hi;
        buckets.push_back(b);
    }
    std::size_t total_comments = 0, total_attacks = 0;
    std::vector<std::size_t> comments(buckets.size(), 0), attacks(buckets.size(), 0),
        attacks_registered(buckets.size(), 0);
    for (const ScoredComment& c : scored) {
        if (utc_year(c.comment.timestamp) != year) continue;
        const std::size_t bucket = user_bucket.at(user_key(c.comment));
        ++total_comments;
        ++comments[bucket];
        if (c.is_attack) {
            ++total_attacks;
            ++attacks[bucket];
            if (c.comment.author_registered) ++attacks_registered[bucket];
        }
    }
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        if (total_comments > 0) {
            buckets[i].pct_comments =
                100.0 * static_cast<double>(comments[i]) / static_cast<double>(total_comments);
        }
        if (total_attacks > 0) {
            buckets[i].pct_attacks =
                100.0 * static_cast<double>(attacks[i]) / static_cast<double>(total_attacks);
            buckets[i].pct_attacks_registered =
                100.0 * static_cast<double>(attacks_registered[i]) /
                static_cast<double>(total_attacks);
        }
    }
    return buckets;
}

std::vector<ToxicityBucket> toxicity_concentration(const std::vector<ScoredComment>& scored,
                                                   int year,
                                                   const std::vector<std::size_t>& bucket_edges) {
    const auto ranges = bucket_ranges(bucket_edges);
    const std::vector<UserYearStats> users = user_year_stats(scored, year);
    std::vector<ToxicityBucket> buckets;
    for (const BucketRange& r : ranges) {
        ToxicityBucket b;
        b.label = bucket_label(r.lo, r.hi);
        b.lo = r.lo;
        b.hi = r.hi;
        buckets.push_back(b);
    }
    std::size_t total_attacks = 0;
    std::vector<std::size_t> attacks(buckets.size(), 0);
    for (const UserYearStats& u : users) {
        if (u.toxicity_level == 0) continue;
        const std::size_t bucket = bucket_of(ranges, u.toxicity_level);
        ++buckets[bucket].n_users;
        attacks[bucket] += u.toxicity_level;
        total_attacks += u.toxicity_level;
    }
    if (total_attacks > 0) {
        for (std::size_t i = 0; i < buckets.size(); ++i) {
            buckets[i].pct_attacks =
                100.0 * static_cast<double>(attacks[i]) / static_cast<double>(total_attacks);
        }
    }
    return buckets;
}

// ---------------------------------------------------------------------------
// Moderation analyses

namespace {

struct UserEvents {
    std::vector<std::int64_t> warns;
    std::vector<std::int64_t> blocks;
};

std::unordered_map<std::string, UserEvents> index_events(
    const std::vector<corpus::BlockEvent>& events) {
    std::unordered_map<std::string, UserEvents> by_user;
    for (const corpus::BlockEvent& ev : events) {
        UserEvents& u = by_user[ev.user_id];
        (ev.kind == corpus::EventKind::warn ? u.warns : u.blocks).push_back(ev.timestamp);
    }
    for (auto& [user, u] : by_user) {
        std::sort(u.warns.begin(), u.warns.end());
        std::sort(u.blocks.begin(), u.blocks.end());
    }
    return by_user;
}

// Any event in (t, t + window].
bool followed_within(const std::vector<std::int64_t>& times, std::int64_t t,
                     std::int64_t window) {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return it != times.end() && *it <= t + window;
}

}  // namespace

ModerationReport moderation_followup(const std::vector<ScoredComment>& scored,
                                     const std::vector<corpus::BlockEvent>& events,
                                     std::int64_t window_seconds, double precision) {
    if (precision <= 0.0 || precision > 1.0) {
        throw Error(errc::config, "moderation_followup: precision must lie in (0, 1]");
    }
    const auto by_user = index_events(events);
    ModerationReport report;
    report.window_seconds = window_seconds;
    std::size_t warned = 0, blocked = 0, either = 0;
    for (const ScoredComment& c : scored) {
        if (!c.is_attack) continue;
        ++report.n_attacks;
        auto it = by_user.find(c.comment.author_id);
        if (it == by_user.end()) continue;
        const bool w = followed_within(it->second.warns, c.comment.timestamp, window_seconds);
        const bool b = followed_within(it->second.blocks, c.comment.timestamp, window_seconds);
        warned += w;
        blocked += b;
        either += w || b;
    }
    if (report.n_attacks > 0) {
        const double n = static_cast<double>(report.n_attacks);
        report.warned = static_cast<double>(warned) / n;
        report.blocked = static_cast<double>(blocked) / n;
        report.either = static_cast<double>(either) / n;
    }
    report.warned_normalized = report.warned / precision;
    report.blocked_normalized = report.blocked / precision;
    report.either_normalized = report.either / precision;
    return report;
}

ModerationCurves moderation_conditional_curves(const std::vector<ScoredComment>& scored,
                                               const std::vector<corpus::BlockEvent>& events,
                                               std::int64_t window_seconds) {
    const auto by_user = index_events(events);

    struct UserTimeline {
        std::vector<std::int64_t> attack_times;
    };
    std::unordered_map<std::string, UserTimeline> users;
    for (const ScoredComment& c : scored) {
        if (!c.is_attack) continue;
        users[c.comment.author_id].attack_times.push_back(c.comment.timestamp);
    }

    // Family 1: per-user attack count vs having any event after the first
    // attack.
    std::map<std::size_t, std::array<std::size_t, 3>> by_count;  // users, warned, blocked
    for (auto& [user, timeline] : users) {
        std::sort(timeline.attack_times.begin(), timeline.attack_times.end());
        const std::size_t k = timeline.attack_times.size();
        auto& [n_users, n_warned, n_blocked] = by_count[k];
        ++n_users;
        auto it = by_user.find(user);
        if (it == by_user.end()) continue;
        const std::int64_t first_attack = timeline.attack_times.front();
        const auto after = [first_attack](const std::vector<std::int64_t>& times) {
            auto pos = std::upper_bound(times.begin(), times.end(), first_attack);
            return pos != times.end();
        };
        if (after(it->second.warns)) ++n_warned;
        if (after(it->second.blocks)) ++n_blocked;
    }

    ModerationCurves curves;
    for (const auto& [k, counts] : by_count) {
        const auto& [n_users, n_warned, n_blocked] = counts;
        const double denom = static_cast<double>(n_users);
        curves.warn_given_attacks.push_back({k, n_users, static_cast<double>(n_warned) / denom});
        curves.block_given_attacks.push_back(
            {k, n_users, static_cast<double>(n_blocked) / denom});
    }

    // Family 2: per attack, prior block count vs a block within the window.
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> by_prior;  // attacks, blocked
    for (const auto& [user, timeline] : users) {
        auto it = by_user.find(user);
        const std::vector<std::int64_t>* blocks =
            it == by_user.end() ? nullptr : &it->second.blocks;
        for (const std::int64_t t : timeline.attack_times) {
            std::size_t prior = 0;
            bool followed = false;
            if (blocks) {
                prior = static_cast<std::size_t>(
                    std::lower_bound(blocks->begin(), blocks->end(), t) - blocks->begin());
                followed = followed_within(*blocks, t, window_seconds);
            }
            auto& [n_attacks, n_followed] = by_prior[prior];
            ++n_attacks;
            n_followed += followed;
        }
    }
    for (const auto& [j, counts] : by_prior) {
        curves.block_given_prior_blocks.push_back(
            {j, counts.first,
             static_cast<double>(counts.second) / static_cast<double>(counts.first)});
    }
    return curves;
}

// ---------------------------------------------------------------------------
// Neighboring attack fraction

NafReport neighboring_attack_fraction(const std::vector<ScoredComment>& scored, std::size_t n) {
    if (n == 0) throw Error(errc::config, "neighboring_attack_fraction needs n >= 1");
    std::map<std::string, std::vector<const ScoredComment*>> pages;
    for (const ScoredComment& c : scored) pages[c.comment.page_id].push_back(&c);

    std::vector<double> naf_attacking, naf_non_attacking;
    for (auto& [page, list] : pages) {
        std::sort(list.begin(), list.end(), [](const ScoredComment* a, const ScoredComment* b) {
            if (a->comment.timestamp != b->comment.timestamp) {
                return a->comment.timestamp < b->comment.timestamp;
            }
            return a->comment.comment_id < b->comment.comment_id;
        });
        // Prefix sums of attack flags for O(1) window counts.
        std::vector<std::size_t> prefix(list.size() + 1, 0);
        for (std::size_t i = 0; i < list.size(); ++i) {
            prefix[i + 1] = prefix[i] + (list[i]->is_attack ? 1 : 0);
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::size_t lo = i >= n ? i - n : 0;
            const std::size_t hi = std::min(list.size(), i + n + 1);
            const std::size_t size = hi - lo - 1;  // excluding the center
            if (size == 0) continue;
            std::size_t attacks = prefix[hi] - prefix[lo];
            if (list[i]->is_attack) --attacks;
            const double naf = static_cast<double>(attacks) / static_cast<double>(size);
            (list[i]->is_attack ? naf_attacking : naf_non_attacking).push_back(naf);
        }
    }

    NafReport report;
    report.n = n;
    report.n_attacking = naf_attacking.size();
    report.n_non_attacking = naf_non_attacking.size();
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (const double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    report.mean_attacking = mean(naf_attacking);
    report.mean_non_attacking = mean(naf_non_attacking);
    if (!naf_attacking.empty() && !naf_non_attacking.empty()) {
        // Welch t on the per-comment NAF values of the two classes.
        auto variance = [&mean](const std::vector<double>& v) {
            if (v.size() < 2) return 0.0;
            const double m = mean(v);
            double sq = 0.0;
            for (const double x : v) sq += (x - m) * (x - m);
            return sq / static_cast<double>(v.size() - 1);
        };
        const double va = variance(naf_attacking) / static_cast<double>(naf_attacking.size());
        const double vb =
            variance(naf_non_attacking) / static_cast<double>(naf_non_attacking.size());
        const double denom = std::sqrt(va + vb);
        if (denom > 0.0) {
            report.t_statistic = (report.mean_attacking - report.mean_non_attacking) / denom;
        } else if (report.mean_attacking == report.mean_non_attacking) {
            report.t_statistic = 0.0;
        }
    }
    return report;
}

}  // namespace toxpipe::analytics
