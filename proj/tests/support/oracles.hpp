#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (full DP tables, all-pairs counting, explicit matrices)
// and must not share code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace oracles {

// ---------------------------------------------------------------------------
// Recursive longest-common-substring diff over character tokens, full DP
// table with explicit reconstruction. Tie-break: longest run, then earliest
// start in `next`, then earliest in `prev`.

struct DiffMatch {
    std::size_t prev_start, next_start, length;
};

inline DiffMatch lcs_full_table(std::string_view a, std::string_view b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> dp(n + 1, std::vector<std::size_t>(m + 1, 0));
    DiffMatch best{0, 0, 0};
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            if (a[i - 1] != b[j - 1]) continue;
            dp[i][j] = dp[i - 1][j - 1] + 1;
            const std::size_t len = dp[i][j];
            const std::size_t ps = i - len, ns = j - len;
            if (len > best.length ||
                (len == best.length &&
                 (ns < best.next_start || (ns == best.next_start && ps < best.prev_start)))) {
                best = {ps, ns, len};
            }
        }
    }
    return best;
}

inline void diff_recurse(std::string_view a, std::string_view b, std::size_t b_offset,
                         std::size_t min_match,
                         std::vector<std::pair<std::size_t, std::size_t>>& matched) {
    if (a.size() < min_match || b.size() < min_match) return;
    const DiffMatch m = lcs_full_table(a, b);
    if (m.length < min_match) return;
    diff_recurse(a.substr(0, m.prev_start), b.substr(0, m.next_start), b_offset, min_match,
                 matched);
    matched.emplace_back(b_offset + m.next_start, b_offset + m.next_start + m.length);
    diff_recurse(a.substr(m.prev_start + m.length), b.substr(m.next_start + m.length),
                 b_offset + m.next_start + m.length, min_match, matched);
}

inline std::vector<std::string> diff_added_chars(std::string_view prev, std::string_view next,
                                                 std::size_t min_match = 2) {
    std::vector<std::pair<std::size_t, std::size_t>> matched;
    if (prev == next && !next.empty()) {
        matched.emplace_back(0, next.size());
    } else {
        diff_recurse(prev, next, 0, min_match, matched);
    }
    std::vector<std::string> segments;
    std::size_t cursor = 0;
    for (const auto& [begin, end] : matched) {
        if (cursor < begin) segments.emplace_back(next.substr(cursor, begin - cursor));
        cursor = end;
    }
    if (cursor < next.size()) segments.emplace_back(next.substr(cursor));
    return segments;
}

// ---------------------------------------------------------------------------
// Krippendorff alpha straight from the coincidence matrix: every ordered pair
// of values inside a unit adds 1/(m_u - 1) to its cell.

struct AlphaTable {
    // one vector of binary values per unit
    std::vector<std::vector<int>> units;
};

inline std::pair<bool, double> alpha_coincidence(const AlphaTable& table) {
    double o[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    for (const auto& unit : table.units) {
        const std::size_t m = unit.size();
        if (m < 2) continue;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                o[unit[i]][unit[j]] += 1.0 / static_cast<double>(m - 1);
            }
        }
    }
    const double n0 = o[0][0] + o[0][1];
    const double n1 = o[1][0] + o[1][1];
    const double n = n0 + n1;
    const double expected = n0 * n1 + n1 * n0;
    if (expected == 0.0) return {false, 0.0};
    const double d_o = (o[0][1] + o[1][0]) / n;
    const double d_e = expected / (n * (n - 1.0));
    return {true, 1.0 - d_o / d_e};
}

// ---------------------------------------------------------------------------
// Metric oracles

inline double auc_all_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        }
        i = j + 1;
    }
    return ranks;
}

inline double spearman_rank_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

// ---------------------------------------------------------------------------
// Exhaustive equal-error threshold scan. Returns the minimum |FP - FN| over
// every candidate threshold.

struct ScanPoint {
    double t;
    std::size_t fp, fn, tp, tn;
};

inline std::vector<ScanPoint> threshold_scan(const std::vector<double>& scores,
                                             const std::vector<int>& labels) {
    std::vector<double> distinct(scores);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> candidates = {0.0, 1.0};
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        candidates.push_back((distinct[i] + distinct[i + 1]) / 2.0);
    }
    std::vector<ScanPoint> points;
    for (const double t : candidates) {
        ScanPoint p{t, 0, 0, 0, 0};
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool predicted = scores[i] > t;
            if (predicted && labels[i] != 0)
                ++p.tp;
            else if (predicted)
                ++p.fp;
            else if (labels[i] != 0)
                ++p.fn;
            else
                ++p.tn;
        }
        points.push_back(p);
    }
    return points;
}

// ---------------------------------------------------------------------------
// Welch t statistic

inline double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
    double va = 0.0, vb = 0.0;
    for (const double x : a) va += (x - ma) * (x - ma);
    for (const double x : b) vb += (x - mb) * (x - mb);
    va /= na - 1.0;
    vb /= nb - 1.0;
    return (ma - mb) / std::sqrt(va / na + vb / nb);
}

}  // namespace oracles
