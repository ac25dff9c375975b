#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "toxpipe/analytics.hpp"
#include "toxpipe/corpus.hpp"
#include "toxpipe/errors.hpp"
#include "toxpipe/eval.hpp"
#include "toxpipe/features.hpp"
#include "toxpipe/labels.hpp"
#include "toxpipe/model.hpp"
#include "toxpipe/version.hpp"

namespace py = pybind11;
using namespace toxpipe;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Attack-comment pipeline core: revision diffing, label aggregation, "
              "n-gram classifiers, and evaluation metrics.";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "ToxpipeError");

    // corpus
    m.def(
        "diff_added_text",
        [](const std::string& prev, const std::string& next, const std::string& mode,
           std::size_t min_match) {
            corpus::DiffOptions options;
            options.mode =
                mode == "char" ? corpus::TokenMode::character : corpus::TokenMode::word;
            options.min_match = min_match;
            return corpus::diff_added_text(prev, next, options);
        },
        py::arg("prev"), py::arg("next"), py::arg("mode") = "word", py::arg("min_match") = 2,
        "Added text segments of `next` relative to `prev`.");
    m.def("strip_markup", &corpus::strip_markup, py::arg("wikitext"),
          "Best-effort wiki/HTML markup removal.");

    // labels
    m.def(
        "aggregate_labels",
        [](const std::vector<std::tuple<std::string, std::string, bool>>& annotations) {
            std::vector<labels::AnnotationRecord> records;
            records.reserve(annotations.size());
            for (const auto& [comment, worker, attack] : annotations) {
                records.push_back({comment, worker, attack, false});
            }
            std::vector<std::tuple<std::string, std::size_t, double, int>> out;
            for (const labels::LabelDistribution& d : labels::aggregate_labels(records)) {
                out.emplace_back(d.comment_id, d.n, d.attack_fraction, d.oh_label);
            }
            return out;
        },
        py::arg("annotations"),
        "(comment_id, worker_id, is_attack) triples -> (comment_id, n, attack_fraction, "
        "oh_label) rows.");
    m.def(
        "krippendorff_alpha",
        [](const std::vector<std::tuple<std::string, std::string, bool>>& annotations)
            -> py::object {
            std::vector<labels::AnnotationRecord> records;
            records.reserve(annotations.size());
            for (const auto& [comment, worker, attack] : annotations) {
                records.push_back({comment, worker, attack, false});
            }
            const auto alpha = labels::krippendorff_alpha(records);
            if (!alpha) return py::none();
            return py::float_(*alpha);
        },
        py::arg("annotations"),
        "Inter-annotator agreement; None when expected disagreement is zero.");

    // metrics
    m.def("auc", &eval::auc, py::arg("scores"), py::arg("labels"),
          "Mann-Whitney AUC with ties counted one half.");
    m.def("spearman", &eval::spearman, py::arg("a"), py::arg("b"),
          "Rank correlation with average-rank ties.");
    m.def(
        "equal_error_threshold",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            const eval::ThresholdReport r = eval::equal_error_threshold(scores, labels);
            py::dict out;
            out["t"] = r.t;
            out["precision"] = r.precision ? py::object(py::float_(*r.precision)) : py::none();
            out["recall"] = r.recall ? py::object(py::float_(*r.recall)) : py::none();
            out["false_positive_rate"] = r.false_positive_rate
                                             ? py::object(py::float_(*r.false_positive_rate))
                                             : py::none();
            out["f1"] = r.f1 ? py::object(py::float_(*r.f1)) : py::none();
            out["fp"] = r.fp;
            out["fn"] = r.fn;
            return out;
        },
        py::arg("scores"), py::arg("labels"),
        "Equal-error decision threshold with its operating metrics.");
    m.def(
        "bootstrap_ci",
        [](const std::vector<double>& values, std::size_t B, double level, std::uint64_t seed) {
            return analytics::bootstrap_ci(values, B, level, seed);
        },
        py::arg("values"), py::arg("B") = 1000, py::arg("level") = 0.95, py::arg("seed") = 0,
        "Seeded percentile bootstrap interval for the mean.");

    // features + model
    py::class_<features::Vocabulary>(m, "Vocabulary")
        .def_property_readonly("ngrams", &features::Vocabulary::ngrams)
        .def("__len__", &features::Vocabulary::size);

    m.def(
        "build_vocab",
        [](const std::vector<std::string>& texts, const std::string& kind, std::size_t n_min,
           std::size_t n_max, std::size_t max_features, bool lowercase) {
            features::FeatureSpec spec;
            spec.kind = features::ngram_kind_from_string(kind);
            spec.n_min = n_min;
            spec.n_max = n_max;
            spec.max_features = max_features;
            spec.lowercase = lowercase;
            return features::build_vocab(texts, spec);
        },
        py::arg("texts"), py::arg("kind") = "char", py::arg("n_min") = 1, py::arg("n_max") = 5,
        py::arg("max_features") = 30000, py::arg("lowercase") = true);

    py::class_<model::AttackModel>(m, "AttackModel")
        .def_property_readonly("kind",
                               [](const model::AttackModel& m_) { return to_string(m_.kind); })
        .def_property_readonly("final_training_loss",
                               [](const model::AttackModel& m_) {
                                   return m_.final_training_loss;
                               });

    m.def(
        "train_classifier",
        [](const features::Vocabulary& vocab, const std::vector<std::string>& texts,
           const std::vector<double>& attack_fractions, const std::string& label_type,
           double learning_rate, double l2, std::size_t epochs, std::size_t batch_size,
           std::uint64_t seed) {
            if (texts.size() != attack_fractions.size()) {
                throw Error(errc::size, "texts and attack_fractions must align");
            }
            const labels::LabelType type = labels::label_type_from_string(label_type);
            features::Vectorizer vectorizer(vocab);
            std::vector<model::TrainingExample> examples;
            examples.reserve(texts.size());
            for (std::size_t i = 0; i < texts.size(); ++i) {
                labels::LabelDistribution d;
                d.attack_fraction = attack_fractions[i];
                d.oh_label = attack_fractions[i] > 0.5 ? 1 : 0;
                examples.push_back(
                    model::make_example(vectorizer.vectorize(texts[i]), d, type));
            }
            model::Hyperparams hp;
            hp.learning_rate = learning_rate;
            hp.l2 = l2;
            hp.epochs = epochs;
            hp.batch_size = batch_size;
            return model::train(examples, model::ModelKind::LR, hp, seed, type, vocab.spec(),
                                vocab.built_from());
        },
        py::arg("vocab"), py::arg("texts"), py::arg("attack_fractions"),
        py::arg("label_type") = "ed", py::arg("learning_rate") = 0.1, py::arg("l2") = 0.0,
        py::arg("epochs") = 5, py::arg("batch_size") = 32, py::arg("seed") = 0,
        "Train a logistic-regression attack classifier on raw texts.");

    m.def(
        "attack_scores",
        [](const model::AttackModel& classifier, const features::Vocabulary& vocab,
           const std::vector<std::string>& texts) {
            features::Vectorizer vectorizer(vocab);
            std::vector<double> out;
            out.reserve(texts.size());
            for (const std::string& text : texts) {
                out.push_back(model::attack_score(classifier, vectorizer.vectorize(text)));
            }
            return out;
        },
        py::arg("classifier"), py::arg("vocab"), py::arg("texts"),
        "Attack probability per text.");

    m.def("save_model", &model::save_model, py::arg("classifier"), py::arg("path"));
    m.def("load_model", &model::load_model, py::arg("path"));
}
