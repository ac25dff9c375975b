#include "toxpipe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "toxpipe/errors.hpp"
#include "toxpipe/rng.hpp"

namespace toxpipe::eval {

namespace {

// Average ranks (1-based); ties share the midrank.
std::vector<double> midranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = static_cast<double>(i + j + 2) / 2.0;  // 1-based midrank
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw Error(errc::size, "auc: scores and labels must align");
    }
    std::size_t n_pos = 0;
    for (const int y : labels) n_pos += y != 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw Error(errc::undefined_metric, "auc undefined: labels contain a single class");
    }
    const std::vector<double> ranks = midranks(scores);
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0) rank_sum_pos += ranks[i];
    }
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error(errc::size, "spearman: inputs must align");
    if (a.size() < 2) throw Error(errc::size, "spearman needs at least 2 observations");
    const std::vector<double> ra = midranks(a);
    const std::vector<double> rb = midranks(b);
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) {
        throw Error(errc::undefined_metric, "spearman undefined: constant input");
    }
    return cov / std::sqrt(var_a * var_b);
}

ConfusionCounts confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                             double t) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > t;
        const bool actual = labels[i] != 0;
        if (predicted && actual)
            ++c.tp;
        else if (predicted && !actual)
            ++c.fp;
        else if (!predicted && actual)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

namespace {

Metrics metrics_from_counts(const ConfusionCounts& c) {
    Metrics m;
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn > 0) {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (c.fp + c.tn > 0) {
        m.false_positive_rate = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    }
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0) {
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    }
    return m;
}

}  // namespace

Metrics classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                               double t) {
    if (scores.size() != labels.size()) {
        throw Error(errc::size, "classification_metrics: scores and labels must align");
    }
    return metrics_from_counts(confusion_at(scores, labels, t));
}

ThresholdReport equal_error_threshold(const std::vector<double>& scores,
                                      const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw Error(errc::size, "equal_error_threshold: scores and labels must align");
    }
    std::size_t n_pos = 0;
    for (const int y : labels) n_pos += y != 0;
    if (n_pos == 0 || n_pos == labels.size()) {
        throw Error(errc::undefined_metric,
                    "equal_error_threshold: calibration set has a single class");
    }

    std::vector<double> distinct(scores);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> candidates = {0.0, 1.0};
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        candidates.push_back((distinct[i] + distinct[i + 1]) / 2.0);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // Sorted score lists per class let each candidate evaluate in O(log n).
    std::vector<double> pos_scores, neg_scores;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (labels[i] != 0 ? pos_scores : neg_scores).push_back(scores[i]);
    }
    std::sort(pos_scores.begin(), pos_scores.end());
    std::sort(neg_scores.begin(), neg_scores.end());

    bool have_best = false;
    std::size_t best_gap = 0;
    double best_f1 = -1.0;
    double best_t = 0.0;
    ConfusionCounts best_counts;
    for (const double t : candidates) {
        const std::size_t pos_above =
            pos_scores.end() - std::upper_bound(pos_scores.begin(), pos_scores.end(), t);
        const std::size_t neg_above =
            neg_scores.end() - std::upper_bound(neg_scores.begin(), neg_scores.end(), t);
        ConfusionCounts c;
        c.tp = pos_above;
        c.fn = pos_scores.size() - pos_above;
        c.fp = neg_above;
        c.tn = neg_scores.size() - neg_above;
        const std::size_t gap = c.fp > c.fn ? c.fp - c.fn : c.fn - c.fp;
        const Metrics m = metrics_from_counts(c);
        const double f1 = m.f1.value_or(-1.0);
        const bool better =
            !have_best || gap < best_gap ||
            (gap == best_gap && (f1 > best_f1 || (f1 == best_f1 && t < best_t)));
        if (better) {
            have_best = true;
            best_gap = gap;
            best_f1 = f1;
            best_t = t;
            best_counts = c;
        }
    }

    const Metrics m = metrics_from_counts(best_counts);
    ThresholdReport report;
    report.t = best_t;
    report.precision = m.precision;
    report.recall = m.recall;
    report.false_positive_rate = m.false_positive_rate;
    report.f1 = m.f1;
    report.fp = best_counts.fp;
    report.fn = best_counts.fn;
    return report;
}

// ---------------------------------------------------------------------------
// Annotator-ensemble baselining

namespace {

struct RunningStats {
    std::vector<double> samples;

    void add(double v) { samples.push_back(v); }
    double mean() const {
        double s = 0.0;
        for (const double v : samples) s += v;
        return s / static_cast<double>(samples.size());
    }
    double standard_error() const {
        const std::size_t n = samples.size();
        if (n < 2) return 0.0;
        const double m = mean();
        double sq = 0.0;
        for (const double v : samples) sq += (v - m) * (v - m);
        return std::sqrt(sq / static_cast<double>(n - 1)) /
               std::sqrt(static_cast<double>(n));
    }
};

}  // namespace

EnsembleBaselineReport ensemble_baseline(
    const std::map<std::string, std::vector<int>>& annotations,
    const std::map<std::string, double>& model_scores, const EnsembleBaselineConfig& config) {
    if (annotations.empty()) throw Error(errc::size, "ensemble_baseline: no annotations");
    if (config.n_p_values.empty() || config.runs == 0 || config.n_t == 0) {
        throw Error(errc::config, "ensemble_baseline: bad configuration");
    }
    std::vector<std::size_t> n_p_values(config.n_p_values);
    std::sort(n_p_values.begin(), n_p_values.end());
    const std::size_t max_n_p = n_p_values.back();

    // Pinned comment order and pinned (value-sorted) base annotation order;
    // the per-run shuffle provides all the randomness.
    std::vector<std::pair<std::string, std::vector<int>>> units;
    units.reserve(annotations.size());
    for (const auto& [comment, values] : annotations) {
        if (values.size() < config.n_t + max_n_p) {
            throw Error(errc::size, "comment " + comment + " has " +
                                        std::to_string(values.size()) +
                                        " annotations; ensemble baseline needs " +
                                        std::to_string(config.n_t + max_n_p));
        }
        std::vector<int> sorted_values(values);
        std::sort(sorted_values.begin(), sorted_values.end());
        units.emplace_back(comment, std::move(sorted_values));
    }

    std::vector<RunningStats> auc_stats(n_p_values.size()), sp_stats(n_p_values.size());
    RunningStats model_auc, model_sp;
    std::vector<int> shuffled;
    for (std::size_t run = 0; run < config.runs; ++run) {
        auto eng = rng::engine(rng::derive_seed(config.seed, run));
        std::vector<int> y_oh(units.size());
        std::vector<double> y_ed(units.size());
        std::vector<std::vector<double>> yhat_ae(n_p_values.size(),
                                                 std::vector<double>(units.size()));
        std::vector<double> yhat_ml(units.size());
        for (std::size_t u = 0; u < units.size(); ++u) {
            shuffled = units[u].second;
            rng::shuffle(shuffled, eng);
            std::size_t truth_attacks = 0;
            for (std::size_t i = 0; i < config.n_t; ++i) truth_attacks += shuffled[i] != 0;
            y_oh[u] = 2 * truth_attacks > config.n_t ? 1 : 0;
            y_ed[u] = static_cast<double>(truth_attacks) / static_cast<double>(config.n_t);
            std::size_t pred_attacks = 0;
            std::size_t taken = 0;
            std::size_t row = 0;
            for (const std::size_t n_p : n_p_values) {
                while (taken < n_p) {
                    pred_attacks += shuffled[config.n_t + taken] != 0;
                    ++taken;
                }
                yhat_ae[row][u] =
                    static_cast<double>(pred_attacks) / static_cast<double>(n_p);
                ++row;
            }
            auto it = model_scores.find(units[u].first);
            if (it == model_scores.end()) {
                throw Error(errc::size, "no model score for comment " + units[u].first);
            }
            yhat_ml[u] = it->second;
        }
        for (std::size_t row = 0; row < n_p_values.size(); ++row) {
            auc_stats[row].add(auc(yhat_ae[row], y_oh));
            sp_stats[row].add(spearman(yhat_ae[row], y_ed));
        }
        model_auc.add(auc(yhat_ml, y_oh));
        model_sp.add(spearman(yhat_ml, y_ed));
    }

    EnsembleBaselineReport report;
    report.n_comments = units.size();
    report.runs = config.runs;
    report.seed = config.seed;
    for (std::size_t row = 0; row < n_p_values.size(); ++row) {
        report.ensemble_rows.push_back({n_p_values[row], auc_stats[row].mean(),
                                        auc_stats[row].standard_error(), sp_stats[row].mean(),
                                        sp_stats[row].standard_error()});
    }
    report.model_row = {0, model_auc.mean(), model_auc.standard_error(), model_sp.mean(),
                        model_sp.standard_error()};
    return report;
}

}  // namespace toxpipe::eval
