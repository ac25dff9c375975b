#include "toxpipe/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "toxpipe/errors.hpp"
#include "toxpipe/eval.hpp"
#include "toxpipe/rng.hpp"

namespace toxpipe::model {

using nlohmann::json;

TrainingExample make_example(features::SparseVector x, const labels::LabelDistribution& label,
                             labels::LabelType type) {
    TrainingExample ex;
    ex.x = std::move(x);
    if (type == labels::LabelType::ED) {
        ex.y = {1.0 - label.attack_fraction, label.attack_fraction};
    } else {
        ex.y = label.oh_label == 1 ? std::array<double, 2>{0.0, 1.0}
                                   : std::array<double, 2>{1.0, 0.0};
    }
    return ex;
}

double cross_entropy(const std::array<double, 2>& y, const std::array<double, 2>& yhat) {
    constexpr double kEps = 1e-12;
    double h = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        if (y[i] == 0.0) continue;
        h -= y[i] * std::log(std::max(yhat[i], kEps));
    }
    return h;
}

std::string to_string(ModelKind k) { return k == ModelKind::LR ? "lr" : "mlp"; }

ModelKind model_kind_from_string(const std::string& text) {
    if (text == "lr" || text == "LR") return ModelKind::LR;
    if (text == "mlp" || text == "MLP") return ModelKind::MLP;
    throw Error(errc::config, "unknown model kind: " + text);
}

namespace {

constexpr std::size_t kClasses = 2;

std::vector<Layer> make_layers(std::size_t input_dim, const std::vector<std::size_t>& hidden) {
    std::vector<Layer> layers;
    std::size_t in = input_dim;
    for (const std::size_t h : hidden) {
        layers.push_back({in, h, std::vector<double>(in * h, 0.0),
                          std::vector<double>(h, 0.0)});
        in = h;
    }
    layers.push_back({in, kClasses, std::vector<double>(in * kClasses, 0.0),
                      std::vector<double>(kClasses, 0.0)});
    return layers;
}

void init_layers(std::vector<Layer>& layers, std::mt19937_64& eng) {
    for (Layer& layer : layers) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& w : layer.w) w = rng::uniform_symmetric(eng, scale);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
}

std::array<double, 2> softmax2(double z0, double z1) {
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m);
    const double e1 = std::exp(z1 - m);
    const double denom = e0 + e1;
    return {e0 / denom, e1 / denom};
}

// Activations per layer boundary: act[0] is unused for the sparse input,
// act[k] (k >= 1) is the post-rectifier output of hidden layer k (or the
// softmax output for the head).
struct Forward {
    std::vector<std::vector<double>> act;
    std::array<double, 2> yhat;
};

void forward_pass(const std::vector<Layer>& layers, const features::SparseVector& x,
                  Forward& f) {
    const std::size_t n_layers = layers.size();
    f.act.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Layer& layer = layers[l];
        std::vector<double>& out = f.act[l];
        out.assign(layer.out, 0.0);
        if (l == 0) {
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double* row = layer.w.data() + o * layer.in;
                double acc = layer.b[o];
                for (const auto& [idx, value] : x.entries) acc += row[idx] * value;
                out[o] = acc;
            }
        } else {
            const std::vector<double>& prev = f.act[l - 1];
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double* row = layer.w.data() + o * layer.in;
                double acc = layer.b[o];
                for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * prev[i];
                out[o] = acc;
            }
        }
        if (l + 1 < n_layers) {
            for (double& v : out) v = v > 0.0 ? v : 0.0;  // rectifier
        }
    }
    f.yhat = softmax2(f.act[n_layers - 1][0], f.act[n_layers - 1][1]);
}

void zero_like(const std::vector<Layer>& layers, std::vector<Layer>& grad) {
    grad.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        grad[l].in = layers[l].in;
        grad[l].out = layers[l].out;
        grad[l].w.assign(layers[l].w.size(), 0.0);
        grad[l].b.assign(layers[l].b.size(), 0.0);
    }
}

double l2_penalty(const std::vector<Layer>& layers, double l2) {
    if (l2 == 0.0) return 0.0;
    double sq = 0.0;
    for (const Layer& layer : layers) {
        for (const double w : layer.w) sq += w * w;
    }
    return 0.5 * l2 * sq;
}

// Mean cross-entropy over the batch plus the L2 penalty; accumulates the
// analytic gradient into `grad` (already zeroed).
double accumulate_batch(const std::vector<Layer>& layers, double l2,
                        std::span<const TrainingExample> batch, std::vector<Layer>& grad) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const std::size_t n_layers = layers.size();
    double loss = 0.0;
    Forward f;
    std::vector<double> delta, delta_prev;
    for (const TrainingExample& ex : batch) {
        forward_pass(layers, ex.x, f);
        loss += cross_entropy(ex.y, f.yhat) * inv_b;
        // Softmax + cross-entropy head: delta = yhat - y.
        delta.assign(kClasses, 0.0);
        for (std::size_t c = 0; c < kClasses; ++c) delta[c] = (f.yhat[c] - ex.y[c]) * inv_b;
        for (std::size_t l = n_layers; l-- > 0;) {
            const Layer& layer = layers[l];
            Layer& g = grad[l];
            if (l > 0) {
                const std::vector<double>& act_in = f.act[l - 1];
                for (std::size_t o = 0; o < layer.out; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    double* grow = g.w.data() + o * layer.in;
                    for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * act_in[i];
                    g.b[o] += d;
                }
                delta_prev.assign(layer.in, 0.0);
                for (std::size_t o = 0; o < layer.out; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    const double* row = layer.w.data() + o * layer.in;
                    for (std::size_t i = 0; i < layer.in; ++i) delta_prev[i] += d * row[i];
                }
                // Rectifier derivative of the producing layer.
                for (std::size_t i = 0; i < layer.in; ++i) {
                    if (f.act[l - 1][i] <= 0.0) delta_prev[i] = 0.0;
                }
                delta = delta_prev;
            } else {
                for (std::size_t o = 0; o < layer.out; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    double* grow = g.w.data() + o * layer.in;
                    for (const auto& [idx, value] : ex.x.entries) grow[idx] += d * value;
                    g.b[o] += d;
                }
            }
        }
    }
    if (l2 != 0.0) {
        for (std::size_t l = 0; l < n_layers; ++l) {
            const std::vector<double>& w = layers[l].w;
            std::vector<double>& gw = grad[l].w;
            for (std::size_t i = 0; i < w.size(); ++i) gw[i] += l2 * w[i];
        }
        loss += l2_penalty(layers, l2);
    }
    return loss;
}

bool layers_finite(const std::vector<Layer>& layers) {
    for (const Layer& layer : layers) {
        for (const double w : layer.w) {
            if (!std::isfinite(w)) return false;
        }
        for (const double b : layer.b) {
            if (!std::isfinite(b)) return false;
        }
    }
    return true;
}

}  // namespace

double batch_loss(const AttackModel& model, std::span<const TrainingExample> batch) {
    double loss = 0.0;
    Forward f;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const TrainingExample& ex : batch) {
        forward_pass(model.layers, ex.x, f);
        loss += cross_entropy(ex.y, f.yhat) * inv_b;
    }
    return loss + l2_penalty(model.layers, model.hp.l2);
}

double batch_loss_and_gradient(const AttackModel& model,
                               std::span<const TrainingExample> batch,
                               std::vector<Layer>& gradient) {
    zero_like(model.layers, gradient);
    return accumulate_batch(model.layers, model.hp.l2, batch, gradient);
}

AttackModel train(const std::vector<TrainingExample>& examples, ModelKind kind,
                  const Hyperparams& hp, std::uint64_t seed, labels::LabelType label_type,
                  const features::FeatureSpec& feature_spec, std::uint64_t vocab_fingerprint) {
    if (examples.empty()) throw Error(errc::size, "train requires at least one example");
    const std::size_t dim = examples.front().x.dim;
    for (const TrainingExample& ex : examples) {
        if (ex.x.dim != dim) {
            throw Error(errc::dimension, "inconsistent example dimensions: expected " +
                                             std::to_string(dim) + ", got " +
                                             std::to_string(ex.x.dim));
        }
    }
    if (kind == ModelKind::MLP && hp.hidden_sizes.empty()) {
        throw Error(errc::config, "MLP requires at least one hidden layer size");
    }
    if (hp.batch_size == 0 || hp.epochs == 0) {
        throw Error(errc::config, "batch_size and epochs must be positive");
    }

    AttackModel model;
    model.kind = kind;
    model.label_type = label_type;
    model.feature_spec = feature_spec;
    model.vocab_fingerprint = vocab_fingerprint;
    model.hp = hp;
    if (kind == ModelKind::LR) model.hp.hidden_sizes.clear();
    model.seed = seed;
    model.layers = make_layers(dim, model.hp.hidden_sizes);

    auto eng = rng::engine(rng::derive_seed(seed, 0));
    init_layers(model.layers, eng);

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Layer> grad;
    std::vector<TrainingExample> batch;
    const auto diverged = [&hp]() {
        std::ostringstream msg;
        msg << "training diverged (non-finite loss or parameters); learning_rate="
            << hp.learning_rate;
        return Error(errc::diverged, msg.str());
    };
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        rng::shuffle(order, eng);
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start + hp.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
            zero_like(model.layers, grad);
            const double loss = accumulate_batch(model.layers, hp.l2, batch, grad);
            if (!std::isfinite(loss)) throw diverged();
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                Layer& layer = model.layers[l];
                const Layer& g = grad[l];
                for (std::size_t i = 0; i < layer.w.size(); ++i) {
                    layer.w[i] -= hp.learning_rate * g.w[i];
                }
                for (std::size_t i = 0; i < layer.b.size(); ++i) {
                    layer.b[i] -= hp.learning_rate * g.b[i];
                }
            }
        }
        if (!layers_finite(model.layers)) throw diverged();
    }
    model.final_training_loss = batch_loss(model, examples);
    if (!std::isfinite(model.final_training_loss)) throw diverged();
    return model;
}

std::array<double, 2> predict_proba(const AttackModel& model, const features::SparseVector& x) {
    if (x.dim != model.input_dim()) {
        throw Error(errc::dimension,
                    "feature dimension mismatch: model expects V=" +
                        std::to_string(model.input_dim()) + ", input has V=" +
                        std::to_string(x.dim));
    }
    Forward f;
    forward_pass(model.layers, x, f);
    return f.yhat;
}

double attack_score(const AttackModel& model, const features::SparseVector& x) {
    return predict_proba(model, x)[1];
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json spec_to_json(const features::FeatureSpec& spec) {
    return json{{"ngram_kind", to_string(spec.kind)},
                {"n_min", spec.n_min},
                {"n_max", spec.n_max},
                {"max_features", spec.max_features},
                {"weighting", to_string(spec.weighting)},
                {"lowercase", spec.lowercase},
                {"l1_normalize", spec.l1_normalize}};
}

features::FeatureSpec spec_from_json(const json& j) {
    features::FeatureSpec spec;
    spec.kind = features::ngram_kind_from_string(j.at("ngram_kind").get<std::string>());
    spec.n_min = j.at("n_min").get<std::size_t>();
    spec.n_max = j.at("n_max").get<std::size_t>();
    spec.max_features = j.at("max_features").get<std::size_t>();
    spec.weighting = features::weighting_from_string(j.at("weighting").get<std::string>());
    spec.lowercase = j.at("lowercase").get<bool>();
    spec.l1_normalize = j.value("l1_normalize", false);
    return spec;
}

}  // namespace

std::string model_to_json(const AttackModel& model) {
    json j;
    j["version"] = 1;
    j["kind"] = to_string(model.kind);
    j["label_type"] = labels::to_string(model.label_type);
    j["feature_spec"] = spec_to_json(model.feature_spec);
    j["vocab_fingerprint"] = std::to_string(model.vocab_fingerprint);
    j["hyperparameters"] = json{{"learning_rate", model.hp.learning_rate},
                                {"l2", model.hp.l2},
                                {"epochs", model.hp.epochs},
                                {"batch_size", model.hp.batch_size},
                                {"hidden_sizes", model.hp.hidden_sizes}};
    j["seed"] = std::to_string(model.seed);
    j["final_training_loss"] = model.final_training_loss;
    json layers = json::array();
    for (const Layer& layer : model.layers) {
        layers.push_back(json{{"in", layer.in},
                              {"out", layer.out},
                              {"weights", layer.w},
                              {"biases", layer.b}});
    }
    j["parameters"] = std::move(layers);
    return j.dump();
}

AttackModel model_from_json_text(const std::string& text, const std::string& name) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(errc::format, "bad model file " + name + ": " + e.what());
    }
    try {
        if (!j.contains("version") || !j.at("version").is_number_integer() ||
            j.at("version").get<int>() != 1) {
            throw Error(errc::version, "unsupported model version in " + name);
        }
        AttackModel model;
        model.kind = model_kind_from_string(j.at("kind").get<std::string>());
        model.label_type = labels::label_type_from_string(j.at("label_type").get<std::string>());
        model.feature_spec = spec_from_json(j.at("feature_spec"));
        model.vocab_fingerprint = std::stoull(j.at("vocab_fingerprint").get<std::string>());
        const json& hp = j.at("hyperparameters");
        model.hp.learning_rate = hp.at("learning_rate").get<double>();
        model.hp.l2 = hp.at("l2").get<double>();
        model.hp.epochs = hp.at("epochs").get<std::size_t>();
        model.hp.batch_size = hp.at("batch_size").get<std::size_t>();
        model.hp.hidden_sizes = hp.at("hidden_sizes").get<std::vector<std::size_t>>();
        model.seed = std::stoull(j.at("seed").get<std::string>());
        model.final_training_loss = j.at("final_training_loss").get<double>();
        for (const json& jl : j.at("parameters")) {
            Layer layer;
            layer.in = jl.at("in").get<std::size_t>();
            layer.out = jl.at("out").get<std::size_t>();
            layer.w = jl.at("weights").get<std::vector<double>>();
            layer.b = jl.at("biases").get<std::vector<double>>();
            if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out) {
                throw Error(errc::format, "inconsistent layer shape in " + name);
            }
            model.layers.push_back(std::move(layer));
        }
        if (model.layers.empty() || model.layers.back().out != kClasses) {
            throw Error(errc::format, "model in " + name + " lacks a two-class head");
        }
        return model;
    } catch (const json::exception& e) {
        throw Error(errc::format, "bad model file " + name + ": " + e.what());
    }
}

void save_model(const AttackModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write model: " + path);
    out << model_to_json(model) << "\n";
}

AttackModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::io, "cannot open model: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json_text(text, path);
}

// ---------------------------------------------------------------------------
// Random search

void SearchSpace::validate(ModelKind kind) const {
    if (n_iter == 0) throw Error(errc::config, "random search needs n_iter >= 1");
    if (learning_rates.empty() || batch_sizes.empty() || epochs.empty() || l2.empty()) {
        throw Error(errc::config, "random search grids must be non-empty");
    }
    if (kind == ModelKind::MLP && (hidden_sizes.empty() || depths.empty())) {
        throw Error(errc::config, "MLP search needs hidden size and depth grids");
    }
}

std::string to_string(Objective o) { return o == Objective::AUC ? "auc" : "spearman"; }

Objective objective_from_string(const std::string& text) {
    if (text == "auc" || text == "AUC") return Objective::AUC;
    if (text == "spearman" || text == "Spearman") return Objective::Spearman;
    throw Error(errc::config, "unknown objective: " + text);
}

double score_objective(const AttackModel& model, const std::vector<features::SparseVector>& xs,
                       const std::vector<DevTarget>& targets, Objective objective) {
    std::vector<double> scores;
    scores.reserve(xs.size());
    for (const features::SparseVector& x : xs) scores.push_back(attack_score(model, x));
    if (objective == Objective::AUC) {
        std::vector<int> oh;
        oh.reserve(targets.size());
        for (const DevTarget& t : targets) oh.push_back(t.oh_label);
        return eval::auc(scores, oh);
    }
    std::vector<double> fractions;
    fractions.reserve(targets.size());
    for (const DevTarget& t : targets) fractions.push_back(t.attack_fraction);
    return eval::spearman(scores, fractions);
}

SearchResult random_search(const SearchSpace& space, ModelKind kind,
                           labels::LabelType label_type,
                           const std::vector<TrainingExample>& train_set,
                           const std::vector<features::SparseVector>& dev_x,
                           const std::vector<DevTarget>& dev_y, Objective objective,
                           const features::FeatureSpec& feature_spec,
                           std::uint64_t vocab_fingerprint) {
    space.validate(kind);
    if (dev_x.size() != dev_y.size()) {
        throw Error(errc::size, "dev features and targets must align");
    }
    auto combo_eng = rng::engine(rng::derive_seed(space.seed, 0));
    SearchResult result;
    bool have_best = false;
    double best_score = 0.0;
    for (std::size_t i = 0; i < space.n_iter; ++i) {
        Trial trial;
        trial.index = i;
        Hyperparams hp;
        hp.learning_rate = space.learning_rates[rng::bounded(combo_eng, space.learning_rates.size())];
        hp.batch_size = space.batch_sizes[rng::bounded(combo_eng, space.batch_sizes.size())];
        hp.epochs = space.epochs[rng::bounded(combo_eng, space.epochs.size())];
        hp.l2 = space.l2[rng::bounded(combo_eng, space.l2.size())];
        if (kind == ModelKind::MLP) {
            const std::size_t depth = space.depths[rng::bounded(combo_eng, space.depths.size())];
            const std::size_t width =
                space.hidden_sizes[rng::bounded(combo_eng, space.hidden_sizes.size())];
            hp.hidden_sizes.assign(depth, width);
        }
        trial.hp = hp;
        const std::uint64_t trial_seed = rng::derive_seed(space.seed, i + 1);
        try {
            AttackModel candidate = train(train_set, kind, hp, trial_seed, label_type,
                                          feature_spec, vocab_fingerprint);
            trial.final_loss = candidate.final_training_loss;
            trial.score = score_objective(candidate, dev_x, dev_y, objective);
            trial.status = "ok";
            if (!have_best || *trial.score > best_score) {
                have_best = true;
                best_score = *trial.score;
                result.best = std::move(candidate);
                result.best_index = i;
            }
        } catch (const Error& e) {
            if (e.code() != errc::diverged) throw;
            trial.status = "diverged";
        }
        result.trials.push_back(std::move(trial));
    }
    if (!have_best) {
        std::ostringstream msg;
        msg << "all " << space.n_iter << " random-search trials diverged;";
        for (const Trial& t : result.trials) {
            msg << " trial " << t.index << " lr=" << t.hp.learning_rate << " -> " << t.status
                << ";";
        }
        throw Error(errc::diverged, msg.str());
    }
    return result;
}

}  // namespace toxpipe::model
