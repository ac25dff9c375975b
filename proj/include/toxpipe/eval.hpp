#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace toxpipe::eval {

// Mann-Whitney AUC: probability a random positive outscores a random
// negative, score ties counted one half. Computed from midranks so it matches
// all-pairs counting exactly. Throws `undefined_metric` unless both classes
// are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Pearson correlation of midranked values. Throws `undefined_metric` when
// either input is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
    double auc = 0.0;
    double spearman = 0.0;
    std::size_t n_comments = 0;
    std::string split;
};

// ---------------------------------------------------------------------------
// Thresholding

// Decision rule everywhere: attack iff score > t.
struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

ConfusionCounts confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                             double t);

// Division-by-zero cases surface as absent fields rather than silent zeros.
struct Metrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> false_positive_rate;
    std::optional<double> f1;
};

Metrics classification_metrics(const std::vector<double>& scores,
                               const std::vector<int>& labels, double t);

struct ThresholdReport {
    double t = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> false_positive_rate;
    std::optional<double> f1;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::string calibration_split;
};

// Candidate thresholds are the midpoints between adjacent distinct scores
// plus 0 and 1; the winner minimizes |FP - FN|, ties toward larger F1 and
// then smaller t. When FP equals FN the machine-labeled attack rate equals
// the human-labeled one.
ThresholdReport equal_error_threshold(const std::vector<double>& scores,
                                      const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Annotator-ensemble baselining

struct EnsembleBaselineConfig {
    std::size_t n_t = 10;                      // truth-group size
    std::vector<std::size_t> n_p_values = {1, 3, 5, 7, 9, 10};
    std::size_t runs = 25;
    std::uint64_t seed = 0;
};

struct EnsembleRow {
    std::size_t n_p = 0;       // 0 marks the model row
    double mean_auc = 0.0;
    double se_auc = 0.0;
    double mean_spearman = 0.0;
    double se_spearman = 0.0;
};

struct EnsembleBaselineReport {
    std::vector<EnsembleRow> ensemble_rows;  // one per n_p, ascending
    EnsembleRow model_row;
    std::size_t n_comments = 0;
    std::size_t runs = 0;
    std::uint64_t seed = 0;
};

// Per comment the (value-sorted) annotations are shuffled once per run with
// the run's derived seed; the first n_t are the truth group and the next n_p
// the prediction group, nested across the configured n_p values. Truth labels
// are strict-majority for AUC and the mean fraction for Spearman; the model
// row scores against the same per-run truth labels. Standard error is the
// sample standard deviation over runs divided by sqrt(runs).
EnsembleBaselineReport ensemble_baseline(
    const std::map<std::string, std::vector<int>>& annotations,
    const std::map<std::string, double>& model_scores, const EnsembleBaselineConfig& config);

}  // namespace toxpipe::eval
