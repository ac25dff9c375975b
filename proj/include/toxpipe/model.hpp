#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toxpipe/features.hpp"
#include "toxpipe/labels.hpp"

namespace toxpipe::model {

// Training target as a two-class probability pair (p_not_attack, p_attack).
// ED labels carry the annotator fraction, OH labels are one-hot.
struct TrainingExample {
    features::SparseVector x;
    std::array<double, 2> y = {1.0, 0.0};
};

TrainingExample make_example(features::SparseVector x, const labels::LabelDistribution& label,
                             labels::LabelType type);

// -sum_i y_i log(yhat_i); log arguments are clamped below at 1e-12 and
// zero-weight terms contribute exactly zero, so a matched one-hot pair
// evaluates to exactly 0.
double cross_entropy(const std::array<double, 2>& y, const std::array<double, 2>& yhat);

enum class ModelKind { LR, MLP };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& text);

struct Hyperparams {
    double learning_rate = 0.1;
    double l2 = 0.0;  // strength of the (l2/2)*||W||^2 penalty, biases excluded
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    std::vector<std::size_t> hidden_sizes;  // empty for LR
};

// Dense layer weights, row-major [out][in], rectifier on hidden layers and a
// softmax head. LR is the no-hidden-layer case.
struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;
    std::vector<double> b;
};

struct AttackModel {
    ModelKind kind = ModelKind::LR;
    labels::LabelType label_type = labels::LabelType::ED;
    features::FeatureSpec feature_spec;
    std::uint64_t vocab_fingerprint = 0;
    Hyperparams hp;
    std::uint64_t seed = 0;
    double final_training_loss = 0.0;
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().in; }
};

// Seeded init and epoch shuffles come from one derived mt19937_64 stream, so
// identical seed and data reproduce the parameters bit for bit. Mini-batch
// SGD on mean cross-entropy plus the L2 penalty; throws `diverged` (naming
// the learning rate) if the loss or parameters leave the finite range.
AttackModel train(const std::vector<TrainingExample>& examples, ModelKind kind,
                  const Hyperparams& hp, std::uint64_t seed,
                  labels::LabelType label_type = labels::LabelType::ED,
                  const features::FeatureSpec& feature_spec = {},
                  std::uint64_t vocab_fingerprint = 0);

std::array<double, 2> predict_proba(const AttackModel& model, const features::SparseVector& x);

// Second softmax component: the attack probability / predicted annotator
// fraction used everywhere downstream.
double attack_score(const AttackModel& model, const features::SparseVector& x);

// Full-batch objective and its analytic gradient at the model's current
// parameters; the finite-difference tests drive training through this.
double batch_loss(const AttackModel& model, std::span<const TrainingExample> batch);
double batch_loss_and_gradient(const AttackModel& model,
                               std::span<const TrainingExample> batch,
                               std::vector<Layer>& gradient);

std::string model_to_json(const AttackModel& model);
AttackModel model_from_json_text(const std::string& text, const std::string& name);
void save_model(const AttackModel& model, const std::string& path);
AttackModel load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Random search

struct SearchSpace {
    std::vector<double> learning_rates = {0.1, 0.03, 0.01};
    std::vector<std::size_t> batch_sizes = {32, 128};
    std::vector<std::size_t> epochs = {5, 20};
    std::vector<double> l2 = {0.0, 1e-5, 1e-4};
    std::vector<std::size_t> hidden_sizes = {64, 256};  // MLP only
    std::vector<std::size_t> depths = {1, 2};           // MLP only
    std::size_t n_iter = 15;
    std::uint64_t seed = 0;

    void validate(ModelKind kind) const;
};

enum class Objective { AUC, Spearman };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& text);

struct DevTarget {
    double attack_fraction = 0.0;
    int oh_label = 0;
};

struct Trial {
    std::size_t index = 0;
    Hyperparams hp;
    std::string status;  // "ok" or "diverged"
    std::optional<double> score;
    double final_loss = 0.0;
};

struct SearchResult {
    AttackModel best;
    std::size_t best_index = 0;
    std::vector<Trial> trials;
};

double score_objective(const AttackModel& model, const std::vector<features::SparseVector>& xs,
                       const std::vector<DevTarget>& targets, Objective objective);

// Samples n_iter combinations with replacement (one derived draw stream, axes
// in declaration order), trains each on the train set with its own derived
// seed, scores on dev, and returns the argmax with the full trial log. Trials
// that diverge are logged and skipped; if every trial diverges the error
// message carries the log.
SearchResult random_search(const SearchSpace& space, ModelKind kind,
                           labels::LabelType label_type,
                           const std::vector<TrainingExample>& train_set,
                           const std::vector<features::SparseVector>& dev_x,
                           const std::vector<DevTarget>& dev_y, Objective objective,
                           const features::FeatureSpec& feature_spec = {},
                           std::uint64_t vocab_fingerprint = 0);

}  // namespace toxpipe::model
