#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toxpipe/corpus.hpp"
#include "toxpipe/eval.hpp"
#include "toxpipe/features.hpp"
#include "toxpipe/model.hpp"

namespace toxpipe::config {

// One key-value file drives every stage; sections mirror the module names.
// Defaults are embedded here and printed by `toxpipe config --defaults`.
struct PipelineConfig {
    // [paths]
    std::string revisions;
    std::string annotations;
    std::string gold;
    std::string moderation;
    std::string bot_rules;
    std::string admin_rules;
    std::string out_dir = "out";

    // [corpus]
    corpus::TokenMode diff_token_mode = corpus::TokenMode::word;
    std::size_t diff_min_match = 2;
    std::size_t blocked_sample_k = 5;

    // [features]
    features::FeatureSpec feature_spec = features::default_char_spec();

    // [labels]
    double min_worker_accuracy = 0.7;
    std::string alpha_basis = "cleaned";  // or "raw"

    // [train]
    model::ModelKind model_kind = model::ModelKind::LR;
    labels::LabelType label_type = labels::LabelType::ED;
    model::Hyperparams hyperparams;

    // [tune]
    model::SearchSpace search;
    std::vector<std::size_t> max_features_grid = {10000, 30000, 100000};
    std::vector<features::Weighting> weighting_grid = {features::Weighting::count,
                                                       features::Weighting::binary};
    std::vector<bool> normalize_grid = {false};
    model::Objective objective = model::Objective::AUC;

    // [evaluate]
    std::string eval_split = "dev";

    // [calibrate]
    std::vector<std::string> calibration_splits = {"dev", "test"};

    // [baseline]
    eval::EnsembleBaselineConfig baseline;

    // [analysis]
    int analysis_year = 2015;
    std::vector<std::size_t> activity_buckets = {5, 20, 100};
    std::vector<std::size_t> toxicity_buckets = {1, 4, 20};
    std::size_t bootstrap_samples = 1000;
    double bootstrap_level = 0.95;
    std::vector<std::size_t> naf_radii = {1, 3, 5};
    std::int64_t moderation_window_days = 7;
    std::string contains_ngram = "thank";

    // [seeds]
    std::uint64_t master_seed = 20160113;

    unsigned threads = 4;

    std::uint64_t stage_seed(const std::string& stage) const;
    std::string artifact(const std::string& name) const;  // under out_dir
};

PipelineConfig load_config(const std::string& path);

// The embedded defaults rendered as a complete config file.
std::string default_config_text();

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
};

void apply_overrides(PipelineConfig& cfg, const Overrides& overrides);

}  // namespace toxpipe::config
