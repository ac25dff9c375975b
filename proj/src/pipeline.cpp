#include "toxpipe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "toxpipe/analytics.hpp"
#include "toxpipe/corpus.hpp"
#include "toxpipe/errors.hpp"
#include "toxpipe/eval.hpp"
#include "toxpipe/iso8601.hpp"
#include "toxpipe/jsonl.hpp"
#include "toxpipe/labels.hpp"
#include "toxpipe/model.hpp"
#include "toxpipe/rng.hpp"
#include "toxpipe/version.hpp"

namespace toxpipe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using config::PipelineConfig;

namespace {

std::uint64_t file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::io, "cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = rng::fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + path);
    out << text;
}

// Collects the run manifest while a stage executes.
class StageRun {
public:
    StageRun(const PipelineConfig& cfg, std::string stage)
        : cfg_(cfg), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(cfg.out_dir);
        fs::create_directories(cfg.out_dir + "/manifests");
        manifest_["stage"] = stage_;
        manifest_["tool_version"] = kVersion;
        manifest_["master_seed"] = std::to_string(cfg.master_seed);
        manifest_["inputs"] = json::object();
        manifest_["outputs"] = json::array();
        manifest_["seeds"] = json::object();
    }

    // Config-supplied input path; empty key means "not configured".
    std::string config_input(const std::string& value, const std::string& key) {
        if (value.empty()) {
            throw Error(errc::config,
                        "missing config key: " + key + " (required by " + stage_ + ")");
        }
        if (!fs::exists(value)) throw Error(errc::io, "input file not found: " + value);
        manifest_["inputs"][value] = std::to_string(file_fingerprint(value));
        return value;
    }

    // Upstream artifact; names the producing stage when absent.
    std::string dependency(const std::string& artifact, const std::string& producer) {
        if (!fs::exists(artifact)) {
            throw Error(errc::dependency,
                        "missing artifact " + artifact + "; run `" + producer + "` first");
        }
        manifest_["inputs"][artifact] = std::to_string(file_fingerprint(artifact));
        return artifact;
    }

    std::string output(const std::string& artifact) {
        manifest_["outputs"].push_back(artifact);
        return artifact;
    }

    void seed(const std::string& name, std::uint64_t value) {
        manifest_["seeds"][name] = std::to_string(value);
    }

    void note(const std::string& key, json value) { manifest_[key] = std::move(value); }

    void finish() {
        const auto elapsed =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_);
        manifest_["wall_time_ms"] = elapsed.count();
        write_text(cfg_.out_dir + "/manifests/" + stage_ + ".json", manifest_.dump(2) + "\n");
    }

private:
    const PipelineConfig& cfg_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
    json manifest_;
};

corpus::DiffOptions diff_options(const PipelineConfig& cfg) {
    return {cfg.diff_token_mode, cfg.diff_min_match};
}

// Filtered corpus once `filter` has run, otherwise the raw extraction.
std::string comments_artifact(const PipelineConfig& cfg, StageRun& run) {
    const std::string filtered = cfg.artifact("comments_filtered.jsonl");
    if (fs::exists(filtered)) return run.dependency(filtered, "filter");
    return run.dependency(cfg.artifact("comments.jsonl"), "extract");
}

struct LabeledComment {
    std::string id;
    std::string text;
    labels::LabelDistribution dist;
    labels::Split split;
};

// Joins comments, labels, and the split assignment; comments without a label
// or split are ignored (they were never annotated). The corpus is streamed
// and only annotated texts are retained.
std::vector<LabeledComment> load_labeled(const PipelineConfig& cfg, StageRun& run) {
    const std::string comments_path = comments_artifact(cfg, run);
    const std::string labels_path = run.dependency(cfg.artifact("labels.jsonl"), "aggregate");
    const std::string split_path = run.dependency(cfg.artifact("split.jsonl"), "split");

    std::unordered_map<std::string, labels::LabelDistribution> dists;
    for (labels::LabelDistribution& d : jsonl::read_labels(labels_path)) {
        std::string key = d.comment_id;
        dists.emplace(std::move(key), std::move(d));
    }
    const auto split = jsonl::read_split(split_path);
    std::vector<LabeledComment> out;
    jsonl::for_each_comment(comments_path, [&](corpus::Comment&& c) {
        auto d = dists.find(c.comment_id);
        auto s = split.find(c.comment_id);
        if (d == dists.end() || s == split.end()) return;
        out.push_back({c.comment_id, std::move(c.clean_text), d->second, s->second});
    });
    if (out.empty()) {
        throw Error(errc::size, "no labeled comments join the corpus and split artifacts");
    }
    std::sort(out.begin(), out.end(),
              [](const LabeledComment& a, const LabeledComment& b) { return a.id < b.id; });
    return out;
}

std::vector<const LabeledComment*> select_split(const std::vector<LabeledComment>& data,
                                                labels::Split which) {
    std::vector<const LabeledComment*> out;
    for (const LabeledComment& c : data) {
        if (c.split == which) out.push_back(&c);
    }
    return out;
}

json hyperparams_json(const model::Hyperparams& hp) {
    return json{{"learning_rate", hp.learning_rate},
                {"l2", hp.l2},
                {"epochs", hp.epochs},
                {"batch_size", hp.batch_size},
                {"hidden_sizes", hp.hidden_sizes}};
}

json spec_json(const features::FeatureSpec& spec) {
    return json{{"ngram_kind", features::to_string(spec.kind)},
                {"n_min", spec.n_min},
                {"n_max", spec.n_max},
                {"max_features", spec.max_features},
                {"weighting", features::to_string(spec.weighting)},
                {"lowercase", spec.lowercase},
                {"l1_normalize", spec.l1_normalize}};
}

std::vector<labels::AnnotationRecord> read_clean_annotations(const PipelineConfig& cfg,
                                                             StageRun& run) {
    const std::string path =
        run.dependency(cfg.artifact("annotations_clean.csv"), "ingest");
    labels::IngestResult ingested = labels::ingest_annotations(path);
    for (const labels::RowIssue& issue : ingested.issues) {
        if (!issue.is_warning) {
            throw Error(errc::format, path + ":" + std::to_string(issue.line) + ": " +
                                          issue.message);
        }
    }
    return std::move(ingested.records);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

std::string fmt(double v, int digits = 6) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------

void run_extract(const PipelineConfig& cfg) {
    StageRun run(cfg, "extract");
    const std::string input = run.config_input(cfg.revisions, "paths.revisions");
    const std::string out_path = run.output(cfg.artifact("comments.jsonl"));

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + out_path);
    std::size_t n_pages = 0, n_comments = 0;
    jsonl::ReadStats stats;
    corpus::PageExtractor extractor(diff_options(cfg));
    std::string current_page;
    jsonl::for_each_revision(
        input,
        [&](corpus::Revision&& rev) {
            if (rev.page_id != current_page) {
                extractor.reset();
                current_page = rev.page_id;
                ++n_pages;
            }
            if (const auto comment = extractor.push(rev)) {
                out << jsonl::comment_to_line(*comment) << "\n";
                ++n_comments;
            }
        },
        &stats);
    run.note("pages", n_pages);
    run.note("comments", n_comments);
    run.note("malformed_lines", stats.issues.size());
    run.finish();
}

void run_filter(const PipelineConfig& cfg) {
    StageRun run(cfg, "filter");
    const std::string input = run.dependency(cfg.artifact("comments.jsonl"), "extract");

    corpus::FilterRules rules;
    if (!cfg.bot_rules.empty()) {
        rules.bot_author_patterns =
            jsonl::read_pattern_file(run.config_input(cfg.bot_rules, "paths.bot_rules"));
    }
    if (!cfg.admin_rules.empty()) {
        rules.admin_template_patterns =
            jsonl::read_pattern_file(run.config_input(cfg.admin_rules, "paths.admin_rules"));
    }
    const corpus::CompiledFilterRules compiled = corpus::compile_rules(rules);

    // Blocked-sample selection only needs comments by blocked users; the
    // stream keeps those and counts, nothing else stays in memory.
    std::vector<corpus::BlockEvent> blocks;
    std::set<std::string> blocked_users;
    const bool want_sample = !cfg.moderation.empty() && cfg.blocked_sample_k > 0;
    if (want_sample) {
        const std::string mod_path = run.config_input(cfg.moderation, "paths.moderation");
        for (corpus::BlockEvent& ev : jsonl::read_moderation(mod_path)) {
            if (ev.kind != corpus::EventKind::block) continue;
            blocked_users.insert(ev.user_id);
            blocks.push_back(std::move(ev));
        }
    }

    const std::string out_path = run.output(cfg.artifact("comments_filtered.jsonl"));
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + out_path);
    corpus::FilterStats stats;
    std::vector<corpus::Comment> blocked_user_comments;
    jsonl::ReadStats read_stats;
    jsonl::for_each_comment(
        input,
        [&](corpus::Comment&& c) {
            if (corpus::filter_one(c, compiled, stats) != corpus::FilterVerdict::kept) return;
            out << jsonl::comment_to_line(c) << "\n";
            if (want_sample && blocked_users.count(c.author_id)) {
                blocked_user_comments.push_back(std::move(c));
            }
        },
        &read_stats);
    out.close();

    json stats_json;
    stats_json["master_seed"] = std::to_string(cfg.master_seed);
    stats_json["totals"] = {{"all", stats.totals.all},
                            {"no_bot", stats.totals.no_bot},
                            {"no_bot_admin", stats.totals.no_bot_admin}};
    stats_json["by_namespace"] = json::object();
    for (const auto& [ns, counts] : stats.by_namespace) {
        stats_json["by_namespace"][ns] = {{"all", counts.all},
                                          {"no_bot", counts.no_bot},
                                          {"no_bot_admin", counts.no_bot_admin}};
    }
    write_text(run.output(cfg.artifact("filter_stats.json")), stats_json.dump(2) + "\n");
    run.note("malformed_lines", read_stats.issues.size());

    if (want_sample) {
        const auto sample = corpus::sample_around_blocks(blocked_user_comments, blocks,
                                                         cfg.blocked_sample_k);
        jsonl::write_comments(run.output(cfg.artifact("blocked_sample.jsonl")), sample);
        run.note("blocked_sample_size", sample.size());
    }
    run.finish();
}

void run_ingest(const PipelineConfig& cfg) {
    StageRun run(cfg, "ingest");
    const std::string input = run.config_input(cfg.annotations, "paths.annotations");

    labels::IngestResult ingested = labels::ingest_annotations(input);
    labels::CleanStats clean_stats;
    std::vector<labels::AnnotationRecord> records =
        labels::clean_annotations(ingested.records, &clean_stats);

    json report;
    report["master_seed"] = std::to_string(cfg.master_seed);
    report["rows_ingested"] = ingested.records.size();
    json issues = json::array();
    for (const labels::RowIssue& issue : ingested.issues) {
        issues.push_back({{"line", issue.line},
                          {"message", issue.message},
                          {"warning", issue.is_warning}});
    }
    report["row_issues"] = std::move(issues);
    report["clean"] = {{"contradictions_removed", clean_stats.contradictions_removed},
                       {"non_english_comments", clean_stats.non_english_comments},
                       {"records_in", clean_stats.records_in},
                       {"records_out", clean_stats.records_out}};

    if (!cfg.gold.empty()) {
        const std::string gold_path = run.config_input(cfg.gold, "paths.gold");
        const labels::GateResult gate =
            labels::gate_workers(records, labels::load_gold(gold_path), cfg.min_worker_accuracy);
        records = labels::apply_gate(records, gate);
        json workers = json::array();
        for (const labels::WorkerAccuracy& w : gate.table) {
            workers.push_back({{"worker_id", w.worker_id},
                               {"n_gold", w.n_gold},
                               {"n_correct", w.n_correct},
                               {"accuracy", w.accuracy ? json(*w.accuracy) : json()},
                               {"retained", w.retained},
                               {"flagged_no_gold", w.flagged_no_gold}});
        }
        report["worker_gate"] = {{"min_accuracy", cfg.min_worker_accuracy},
                                 {"retained", gate.retained.size()},
                                 {"workers", std::move(workers)}};
    }
    report["records_final"] = records.size();

    const std::string out_path = run.output(cfg.artifact("annotations_clean.csv"));
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + out_path);
    out << "comment_id,worker_id,is_attack,not_english\n";
    for (const labels::AnnotationRecord& r : records) {
        out << r.comment_id << "," << r.worker_id << "," << (r.is_attack ? 1 : 0) << ","
            << (r.not_english ? 1 : 0) << "\n";
    }
    write_text(run.output(cfg.artifact("ingest_report.json")), report.dump(2) + "\n");
    run.finish();
}

void run_aggregate(const PipelineConfig& cfg) {
    StageRun run(cfg, "aggregate");
    const std::vector<labels::AnnotationRecord> records = read_clean_annotations(cfg, run);
    jsonl::write_labels(run.output(cfg.artifact("labels.jsonl")),
                        labels::aggregate_labels(records));

    std::optional<double> alpha;
    if (cfg.alpha_basis == "raw") {
        const std::string raw_path = run.config_input(cfg.annotations, "paths.annotations");
        alpha = labels::krippendorff_alpha(labels::ingest_annotations(raw_path).records);
    } else {
        alpha = labels::krippendorff_alpha(records);
    }
    json agreement;
    agreement["master_seed"] = std::to_string(cfg.master_seed);
    agreement["krippendorff_alpha"] = alpha ? json(*alpha) : json();
    agreement["basis"] = cfg.alpha_basis;
    agreement["n_records"] = records.size();
    write_text(run.output(cfg.artifact("agreement.json")), agreement.dump(2) + "\n");
    run.note("krippendorff_alpha", alpha ? json(*alpha) : json());
    run.finish();
}

void run_split(const PipelineConfig& cfg) {
    StageRun run(cfg, "split");
    const std::string labels_path = run.dependency(cfg.artifact("labels.jsonl"), "aggregate");
    std::vector<std::string> ids;
    std::map<std::string, std::string> by_label;
    for (const labels::LabelDistribution& d : jsonl::read_labels(labels_path)) {
        ids.push_back(d.comment_id);
        by_label[d.comment_id] = d.oh_label == 1 ? "attack" : "other";
    }
    const std::uint64_t seed = cfg.stage_seed("split");
    run.seed("split", seed);
    // Stratified by the hard label so both classes reach every split even on
    // small labeled sets.
    jsonl::write_split(run.output(cfg.artifact("split.jsonl")),
                       labels::split_dataset(ids, seed, &by_label));
    run.finish();
}

namespace {

struct VectorizedSplits {
    features::Vocabulary vocab;
    std::vector<model::TrainingExample> train;
    std::vector<features::SparseVector> dev_x;
    std::vector<model::DevTarget> dev_y;
    std::vector<features::SparseVector> test_x;
    std::vector<model::DevTarget> test_y;
};

VectorizedSplits vectorize_splits(const std::vector<LabeledComment>& data,
                                  const features::FeatureSpec& spec,
                                  labels::LabelType label_type) {
    const auto train_set = select_split(data, labels::Split::train);
    if (train_set.empty()) throw Error(errc::size, "train split is empty");
    std::vector<std::string> train_texts;
    train_texts.reserve(train_set.size());
    for (const LabeledComment* c : train_set) train_texts.push_back(c->text);

    VectorizedSplits out;
    out.vocab = features::build_vocab(train_texts, spec);
    features::Vectorizer vectorizer(out.vocab);
    for (const LabeledComment* c : train_set) {
        out.train.push_back(
            model::make_example(vectorizer.vectorize(c->text), c->dist, label_type));
    }
    for (const LabeledComment* c : select_split(data, labels::Split::dev)) {
        out.dev_x.push_back(vectorizer.vectorize(c->text));
        out.dev_y.push_back({c->dist.attack_fraction, c->dist.oh_label});
    }
    for (const LabeledComment* c : select_split(data, labels::Split::test)) {
        out.test_x.push_back(vectorizer.vectorize(c->text));
        out.test_y.push_back({c->dist.attack_fraction, c->dist.oh_label});
    }
    return out;
}

}  // namespace

void run_train(const PipelineConfig& cfg) {
    StageRun run(cfg, "train");
    const std::vector<LabeledComment> data = load_labeled(cfg, run);
    const std::uint64_t seed = cfg.stage_seed("train");
    run.seed("train", seed);

    VectorizedSplits v = vectorize_splits(data, cfg.feature_spec, cfg.label_type);
    const model::AttackModel trained =
        model::train(v.train, cfg.model_kind, cfg.hyperparams, seed, cfg.label_type,
                     cfg.feature_spec, v.vocab.built_from());

    v.vocab.save(run.output(cfg.artifact("vocab.json")));
    model::save_model(trained, run.output(cfg.artifact("model.json")));
    run.note("final_training_loss", trained.final_training_loss);
    run.note("train_examples", v.train.size());
    run.finish();
}

void run_tune(const PipelineConfig& cfg) {
    StageRun run(cfg, "tune");
    const std::vector<LabeledComment> data = load_labeled(cfg, run);
    const std::uint64_t tune_seed = cfg.stage_seed("tune");
    run.seed("tune", tune_seed);

    model::SearchSpace space = cfg.search;
    space.seed = tune_seed;
    space.validate(cfg.model_kind);
    if (cfg.max_features_grid.empty() || cfg.weighting_grid.empty() ||
        cfg.normalize_grid.empty()) {
        throw Error(errc::config, "tune feature grids must be non-empty");
    }

    // Joint search over model and feature axes: per trial the draw order is
    // learning rate, batch, epochs, l2, (depth, width), max_features,
    // weighting, normalize, all from one derived stream. Vectorizations are
    // cached per distinct feature spec.
    auto combo_eng = rng::engine(rng::derive_seed(tune_seed, 0));
    std::vector<VectorizedSplits> cache;
    std::vector<features::FeatureSpec> cache_specs;
    auto splits_for = [&](const features::FeatureSpec& spec) -> VectorizedSplits& {
        for (std::size_t i = 0; i < cache_specs.size(); ++i) {
            if (cache_specs[i] == spec) return cache[i];
        }
        cache_specs.push_back(spec);
        cache.push_back(vectorize_splits(data, spec, cfg.label_type));
        return cache.back();
    };

    std::ofstream trials_out(run.output(cfg.artifact("tune_trials.jsonl")), std::ios::binary);
    bool have_best = false;
    double best_score = 0.0;
    model::AttackModel best_model;
    features::Vocabulary best_vocab;
    json best_trial;
    for (std::size_t i = 0; i < space.n_iter; ++i) {
        model::Hyperparams hp;
        hp.learning_rate =
            space.learning_rates[rng::bounded(combo_eng, space.learning_rates.size())];
        hp.batch_size = space.batch_sizes[rng::bounded(combo_eng, space.batch_sizes.size())];
        hp.epochs = space.epochs[rng::bounded(combo_eng, space.epochs.size())];
        hp.l2 = space.l2[rng::bounded(combo_eng, space.l2.size())];
        if (cfg.model_kind == model::ModelKind::MLP) {
            const std::size_t depth = space.depths[rng::bounded(combo_eng, space.depths.size())];
            const std::size_t width =
                space.hidden_sizes[rng::bounded(combo_eng, space.hidden_sizes.size())];
            hp.hidden_sizes.assign(depth, width);
        }
        features::FeatureSpec spec = cfg.feature_spec;
        spec.max_features =
            cfg.max_features_grid[rng::bounded(combo_eng, cfg.max_features_grid.size())];
        spec.weighting = cfg.weighting_grid[rng::bounded(combo_eng, cfg.weighting_grid.size())];
        spec.l1_normalize =
            cfg.normalize_grid[rng::bounded(combo_eng, cfg.normalize_grid.size())];

        json trial;
        trial["index"] = i;
        trial["hyperparameters"] = hyperparams_json(hp);
        trial["feature_spec"] = spec_json(spec);
        const std::uint64_t trial_seed = rng::derive_seed(tune_seed, i + 1);
        try {
            VectorizedSplits& v = splits_for(spec);
            model::AttackModel candidate = model::train(
                v.train, cfg.model_kind, hp, trial_seed, cfg.label_type, spec,
                v.vocab.built_from());
            const double score =
                model::score_objective(candidate, v.dev_x, v.dev_y, cfg.objective);
            trial["status"] = "ok";
            trial["score"] = score;
            trial["final_training_loss"] = candidate.final_training_loss;
            if (!have_best || score > best_score) {
                have_best = true;
                best_score = score;
                best_model = std::move(candidate);
                best_vocab = v.vocab;
                best_trial = trial;
            }
        } catch (const Error& e) {
            if (e.code() != errc::diverged) throw;
            trial["status"] = "diverged";
        }
        trials_out << trial.dump() << "\n";
    }
    if (!have_best) {
        throw Error(errc::diverged, "all " + std::to_string(space.n_iter) +
                                        " tune trials diverged; see tune_trials.jsonl");
    }

    best_vocab.save(run.output(cfg.artifact("vocab.json")));
    model::save_model(best_model, run.output(cfg.artifact("model.json")));
    json report;
    report["master_seed"] = std::to_string(cfg.master_seed);
    report["objective"] = model::to_string(cfg.objective);
    report["n_iter"] = space.n_iter;
    report["best"] = best_trial;
    write_text(run.output(cfg.artifact("tune_report.json")), report.dump(2) + "\n");
    run.note("best_score", best_score);
    run.finish();
}

namespace {

struct LoadedModel {
    model::AttackModel model;
    features::Vocabulary vocab;
};

LoadedModel load_model_artifacts(const PipelineConfig& cfg, StageRun& run) {
    LoadedModel out;
    out.model = model::load_model(run.dependency(cfg.artifact("model.json"), "tune"));
    out.vocab = features::Vocabulary::load(run.dependency(cfg.artifact("vocab.json"), "tune"));
    if (out.vocab.built_from() != out.model.vocab_fingerprint) {
        throw Error(errc::dependency,
                    "vocab.json fingerprint does not match model.json; re-run `tune`");
    }
    return out;
}

std::vector<double> score_texts(const LoadedModel& lm,
                                const std::vector<const LabeledComment*>& items) {
    features::Vectorizer vectorizer(lm.vocab);
    std::vector<double> scores;
    scores.reserve(items.size());
    for (const LabeledComment* c : items) {
        scores.push_back(model::attack_score(lm.model, vectorizer.vectorize(c->text)));
    }
    return scores;
}

}  // namespace

void run_evaluate(const PipelineConfig& cfg) {
    StageRun run(cfg, "evaluate");
    const LoadedModel lm = load_model_artifacts(cfg, run);
    const std::vector<LabeledComment> data = load_labeled(cfg, run);
    const labels::Split which = labels::split_from_string(cfg.eval_split);
    const auto items = select_split(data, which);
    if (items.empty()) throw Error(errc::size, "evaluation split is empty: " + cfg.eval_split);

    const std::vector<double> scores = score_texts(lm, items);
    std::vector<int> oh;
    std::vector<double> fractions;
    for (const LabeledComment* c : items) {
        oh.push_back(c->dist.oh_label);
        fractions.push_back(c->dist.attack_fraction);
    }
    eval::EvalReport report;
    report.auc = eval::auc(scores, oh);
    report.spearman = eval::spearman(scores, fractions);
    report.n_comments = items.size();
    report.split = cfg.eval_split;

    json j;
    j["master_seed"] = std::to_string(cfg.master_seed);
    j["auc"] = report.auc;
    j["spearman"] = report.spearman;
    j["n_comments"] = report.n_comments;
    j["split"] = report.split;
    j["model"] = {{"kind", model::to_string(lm.model.kind)},
                  {"ngram_kind", features::to_string(lm.model.feature_spec.kind)},
                  {"label_type", labels::to_string(lm.model.label_type)}};
    write_text(run.output(cfg.artifact("eval_report.json")), j.dump(2) + "\n");

    // Row layout mirrors the model-grid table: metrics scaled to percentages.
    std::ostringstream table;
    table << "Model  N-Gram  Label  AUC     Spearman\n";
    table << (lm.model.kind == model::ModelKind::LR ? "LR  " : "MLP ") << "   "
          << (lm.model.feature_spec.kind == features::NgramKind::word ? "word" : "char")
          << "    " << labels::to_string(lm.model.label_type) << "     " << fmt(100.0 * report.auc, 2)
          << "   " << fmt(100.0 * report.spearman, 2) << "\n";
    write_text(run.output(cfg.artifact("eval_report.txt")), table.str());
    run.note("auc", report.auc);
    run.note("spearman", report.spearman);
    run.finish();
}

void run_baseline(const PipelineConfig& cfg) {
    StageRun run(cfg, "baseline");
    const LoadedModel lm = load_model_artifacts(cfg, run);
    const std::vector<labels::AnnotationRecord> records = read_clean_annotations(cfg, run);
    const std::string comments_path = comments_artifact(cfg, run);

    eval::EnsembleBaselineConfig bcfg = cfg.baseline;
    bcfg.seed = cfg.stage_seed("baseline");
    run.seed("baseline", bcfg.seed);

    std::map<std::string, std::vector<int>> annotations;
    for (const labels::AnnotationRecord& r : records) {
        annotations[r.comment_id].push_back(r.is_attack ? 1 : 0);
    }
    const std::size_t needed =
        bcfg.n_t + *std::max_element(bcfg.n_p_values.begin(), bcfg.n_p_values.end());
    for (auto it = annotations.begin(); it != annotations.end();) {
        if (it->second.size() < needed) {
            it = annotations.erase(it);
        } else {
            ++it;
        }
    }
    if (annotations.empty()) {
        throw Error(errc::size, "no comments carry the " + std::to_string(needed) +
                                    " annotations the baseline needs");
    }

    // Stream the corpus; only baseline comments are scored.
    features::Vectorizer vectorizer(lm.vocab);
    std::map<std::string, double> model_scores;
    jsonl::for_each_comment(comments_path, [&](corpus::Comment&& c) {
        if (!annotations.count(c.comment_id)) return;
        model_scores[c.comment_id] =
            model::attack_score(lm.model, vectorizer.vectorize(c.clean_text));
    });
    for (const auto& [comment_id, values] : annotations) {
        if (!model_scores.count(comment_id)) {
            throw Error(errc::dependency,
                        "baseline comment " + comment_id + " missing from the corpus");
        }
    }

    const eval::EnsembleBaselineReport report =
        eval::ensemble_baseline(annotations, model_scores, bcfg);

    json j;
    j["master_seed"] = std::to_string(cfg.master_seed);
    j["n_comments"] = report.n_comments;
    j["runs"] = report.runs;
    j["n_t"] = bcfg.n_t;
    j["seed"] = std::to_string(report.seed);
    json rows = json::array();
    for (const eval::EnsembleRow& row : report.ensemble_rows) {
        rows.push_back({{"n_p", row.n_p},
                        {"auc_mean", row.mean_auc},
                        {"auc_se", row.se_auc},
                        {"spearman_mean", row.mean_spearman},
                        {"spearman_se", row.se_spearman}});
    }
    j["ensemble_rows"] = std::move(rows);
    j["model_row"] = {{"auc_mean", report.model_row.mean_auc},
                      {"auc_se", report.model_row.se_auc},
                      {"spearman_mean", report.model_row.mean_spearman},
                      {"spearman_se", report.model_row.se_spearman}};
    write_text(run.output(cfg.artifact("baseline_report.json")), j.dump(2) + "\n");

    std::ostringstream table;
    table << "n_p     AUC              Spearman\n";
    for (const eval::EnsembleRow& row : report.ensemble_rows) {
        table << row.n_p << (row.n_p >= 10 ? "      " : "       ")
              << fmt(100.0 * row.mean_auc, 2) << " (" << fmt(100.0 * row.se_auc, 2) << ")   "
              << fmt(100.0 * row.mean_spearman, 2) << " (" << fmt(100.0 * row.se_spearman, 2)
              << ")\n";
    }
    table << "Model:  " << fmt(100.0 * report.model_row.mean_auc, 2) << " ("
          << fmt(100.0 * report.model_row.se_auc, 2) << ")   "
          << fmt(100.0 * report.model_row.mean_spearman, 2) << " ("
          << fmt(100.0 * report.model_row.se_spearman, 2) << ")\n";
    write_text(run.output(cfg.artifact("baseline_report.txt")), table.str());
    run.finish();
}

void run_calibrate(const PipelineConfig& cfg) {
    StageRun run(cfg, "calibrate");
    const LoadedModel lm = load_model_artifacts(cfg, run);
    const std::vector<LabeledComment> data = load_labeled(cfg, run);

    std::set<labels::Split> wanted;
    for (const std::string& name : cfg.calibration_splits) {
        wanted.insert(labels::split_from_string(name));
    }
    std::vector<const LabeledComment*> items;
    for (const LabeledComment& c : data) {
        if (wanted.count(c.split)) items.push_back(&c);
    }
    if (items.empty()) throw Error(errc::size, "calibration split selection is empty");

    const std::vector<double> scores = score_texts(lm, items);
    std::vector<int> oh;
    for (const LabeledComment* c : items) oh.push_back(c->dist.oh_label);
    eval::ThresholdReport report = eval::equal_error_threshold(scores, oh);
    std::string split_name;
    for (const std::string& name : cfg.calibration_splits) {
        split_name += (split_name.empty() ? "" : "+") + name;
    }
    report.calibration_split = split_name;

    json j;
    j["master_seed"] = std::to_string(cfg.master_seed);
    j["t"] = report.t;
    j["precision"] = report.precision ? json(*report.precision) : json();
    j["recall"] = report.recall ? json(*report.recall) : json();
    j["false_positive_rate"] =
        report.false_positive_rate ? json(*report.false_positive_rate) : json();
    j["f1"] = report.f1 ? json(*report.f1) : json();
    j["fp"] = report.fp;
    j["fn"] = report.fn;
    j["calibration_split"] = report.calibration_split;
    j["n_comments"] = items.size();
    write_text(run.output(cfg.artifact("threshold.json")), j.dump(2) + "\n");
    run.note("t", report.t);
    run.finish();
}

namespace {

double load_threshold(const PipelineConfig& cfg, StageRun& run, double* precision = nullptr) {
    const std::string path = run.dependency(cfg.artifact("threshold.json"), "calibrate");
    std::ifstream in(path);
    json j;
    try {
        in >> j;
        if (precision) {
            *precision = j.at("precision").is_null() ? 1.0 : j.at("precision").get<double>();
        }
        return j.at("t").get<double>();
    } catch (const json::exception& e) {
        throw Error(errc::format, "bad threshold file " + path + ": " + e.what());
    }
}

}  // namespace

void run_score(const PipelineConfig& cfg) {
    StageRun run(cfg, "score");
    const LoadedModel lm = load_model_artifacts(cfg, run);
    const double t = load_threshold(cfg, run);
    const std::string comments_path = comments_artifact(cfg, run);

    // Bounded-memory bulk scoring: fixed-size chunks through the thread pool,
    // results written in input order.
    const std::string out_path = run.output(cfg.artifact("scored.jsonl"));
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + out_path);
    constexpr std::size_t kChunk = 8192;
    std::vector<corpus::Comment> chunk;
    chunk.reserve(kChunk);
    jsonl::ReadStats read_stats;
    std::size_t n_scored = 0;
    double scoring_seconds = 0.0;
    auto flush = [&]() {
        if (chunk.empty()) return;
        analytics::ScoreStats stats;
        const auto scored =
            analytics::score_corpus(lm.model, lm.vocab, chunk, t, cfg.threads, &stats);
        scoring_seconds += stats.seconds;
        n_scored += scored.size();
        for (const analytics::ScoredComment& s : scored) {
            json j = json::parse(jsonl::comment_to_line(s.comment));
            j["attack_score"] = s.attack_score;
            j["is_attack"] = s.is_attack;
            j["threshold"] = t;
            out << j.dump() << "\n";
        }
        chunk.clear();
    };
    jsonl::for_each_comment(
        comments_path,
        [&](corpus::Comment&& c) {
            chunk.push_back(std::move(c));
            if (chunk.size() >= kChunk) flush();
        },
        &read_stats);
    flush();

    run.note("threshold", t);
    run.note("n_scored", n_scored);
    run.note("malformed_lines", read_stats.issues.size());
    run.note("comments_per_second",
             scoring_seconds > 0.0 ? static_cast<double>(n_scored) / scoring_seconds : 0.0);
    run.note("threads", cfg.threads);
    run.finish();
}

void run_analyze(const PipelineConfig& cfg) {
    StageRun run(cfg, "analyze");
    double precision = 1.0;
    const double threshold = load_threshold(cfg, run, &precision);
    const std::string scored_path = run.dependency(cfg.artifact("scored.jsonl"), "score");

    // Texts are dropped at parse time; the substring grouping is evaluated on
    // the fly so the in-memory records stay small at corpus scale.
    auto lower = [](std::string s) {
        for (char& c : s) {
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
        }
        return s;
    };
    const std::string needle = lower(cfg.contains_ngram);
    auto contains_flag = std::make_shared<std::unordered_map<std::string, bool>>();
    std::vector<analytics::ScoredComment> scored;
    jsonl::for_each_scored(scored_path, [&](analytics::ScoredComment&& s) {
        (*contains_flag)[s.comment.comment_id] =
            lower(s.comment.clean_text).find(needle) != std::string::npos;
        s.comment.clean_text = std::string();
        s.comment.raw_markup = std::string();
        scored.push_back(std::move(s));
    });
    std::vector<corpus::BlockEvent> events;
    if (!cfg.moderation.empty()) {
        events = jsonl::read_moderation(run.config_input(cfg.moderation, "paths.moderation"));
    }

    const std::string dir = cfg.artifact("analysis");
    fs::create_directories(dir);
    const std::uint64_t analysis_seed = cfg.stage_seed("analysis");
    run.seed("analysis", analysis_seed);
    json summary;
    summary["master_seed"] = std::to_string(cfg.master_seed);
    summary["threshold"] = threshold;
    summary["precision"] = precision;
    summary["year"] = cfg.analysis_year;
    summary["n_comments"] = scored.size();

    // Prevalence tables with bootstrap intervals, one per grouping.
    const analytics::Grouping ngram_grouping{
        "contains_ngram:" + needle,
        [contains_flag, needle](const analytics::ScoredComment& c) {
            return contains_flag->at(c.comment.comment_id) ? "contains:" + needle
                                                           : "absent:" + needle;
        }};
    const std::vector<analytics::Grouping> groupings = {
        analytics::group_by_anonymity(), analytics::group_by_namespace(),
        analytics::group_by_year(),
        analytics::group_by_activity_bucket(scored, cfg.analysis_year, cfg.activity_buckets),
        ngram_grouping};
    for (const analytics::Grouping& grouping : groupings) {
        const auto groups = analytics::prevalence_by_group(
            scored, grouping, cfg.bootstrap_samples, cfg.bootstrap_level,
            rng::derive_seed(analysis_seed, rng::fnv1a64(grouping.name)));
        json rows = json::array();
        std::vector<std::vector<std::string>> csv_rows;
        for (const analytics::GroupPrevalence& g : groups) {
            rows.push_back({{"group", g.key},
                            {"n_comments", g.n_comments},
                            {"n_attacks", g.n_attacks},
                            {"prevalence", g.prevalence},
                            {"ci_low", g.ci_low},
                            {"ci_high", g.ci_high}});
            csv_rows.push_back({g.key, std::to_string(g.n_comments),
                                std::to_string(g.n_attacks), fmt(g.prevalence),
                                fmt(g.ci_low), fmt(g.ci_high)});
        }
        std::string name = grouping.name;
        if (const std::size_t colon = name.find(':'); colon != std::string::npos) {
            name = name.substr(0, colon);
        }
        write_text(dir + "/prevalence_" + name + ".json", json(rows).dump(2) + "\n");
        write_csv(dir + "/prevalence_" + name + ".csv",
                  {"group", "n_comments", "n_attacks", "prevalence", "ci_low", "ci_high"},
                  csv_rows);
        run.output(dir + "/prevalence_" + name + ".json");
        run.output(dir + "/prevalence_" + name + ".csv");
    }

    // Anonymity difference-of-means test.
    {
        std::vector<int> anon, registered;
        for (const analytics::ScoredComment& c : scored) {
            (c.comment.author_registered ? registered : anon).push_back(c.is_attack ? 1 : 0);
        }
        json j;
        if (!anon.empty() && !registered.empty()) {
            const analytics::MeanDiffTest test = analytics::diff_of_means_test(anon, registered);
            j["t"] = test.t ? json(*test.t) : json();
            j["p_value"] = test.p_value ? json(*test.p_value) : json();
            j["mean_anonymous"] = test.mean_a;
            j["mean_registered"] = test.mean_b;
        }
        write_text(dir + "/anonymity_test.json", j.dump(2) + "\n");
        run.output(dir + "/anonymity_test.json");
    }

    // Activity histogram.
    {
        const auto buckets =
            analytics::activity_histogram(scored, cfg.analysis_year, cfg.activity_buckets);
        json rows = json::array();
        std::vector<std::vector<std::string>> csv_rows;
        for (const analytics::HistogramBucket& b : buckets) {
            rows.push_back({{"bucket", b.label},
                            {"pct_comments", b.pct_comments},
                            {"pct_attacks", b.pct_attacks},
                            {"pct_attacks_registered", b.pct_attacks_registered}});
            csv_rows.push_back({b.label, fmt(b.pct_comments), fmt(b.pct_attacks),
                                fmt(b.pct_attacks_registered)});
        }
        write_text(dir + "/activity_histogram.json", json(rows).dump(2) + "\n");
        write_csv(dir + "/activity_histogram.csv",
                  {"bucket", "pct_comments", "pct_attacks", "pct_attacks_registered"}, csv_rows);
        run.output(dir + "/activity_histogram.json");
        run.output(dir + "/activity_histogram.csv");
    }

    // Toxicity concentration.
    {
        const auto buckets =
            analytics::toxicity_concentration(scored, cfg.analysis_year, cfg.toxicity_buckets);
        json rows = json::array();
        std::vector<std::vector<std::string>> csv_rows;
        for (const analytics::ToxicityBucket& b : buckets) {
            rows.push_back(
                {{"bucket", b.label}, {"pct_attacks", b.pct_attacks}, {"n_users", b.n_users}});
            csv_rows.push_back({b.label, fmt(b.pct_attacks), std::to_string(b.n_users)});
        }
        write_text(dir + "/toxicity.json", json(rows).dump(2) + "\n");
        write_csv(dir + "/toxicity.csv", {"bucket", "pct_attacks", "n_users"}, csv_rows);
        run.output(dir + "/toxicity.json");
        run.output(dir + "/toxicity.csv");
    }

    const std::int64_t window = cfg.moderation_window_days * 86400;
    // Moderation follow-up and conditional curves.
    {
        const analytics::ModerationReport report =
            analytics::moderation_followup(scored, events, window, precision);
        json j;
        j["n_attacks"] = report.n_attacks;
        j["window_days"] = cfg.moderation_window_days;
        j["warned"] = report.warned;
        j["blocked"] = report.blocked;
        j["either"] = report.either;
        j["warned_normalized"] = report.warned_normalized;
        j["blocked_normalized"] = report.blocked_normalized;
        j["either_normalized"] = report.either_normalized;
        write_text(dir + "/moderation.json", j.dump(2) + "\n");
        run.output(dir + "/moderation.json");

        const analytics::ModerationCurves curves =
            analytics::moderation_conditional_curves(scored, events, window);
        json cj;
        auto curve_json = [](const std::vector<analytics::CurvePoint>& points) {
            json rows = json::array();
            for (const analytics::CurvePoint& p : points) {
                rows.push_back({{"x", p.x}, {"n", p.n}, {"p", p.p}});
            }
            return rows;
        };
        cj["warn_given_attacks"] = curve_json(curves.warn_given_attacks);
        cj["block_given_attacks"] = curve_json(curves.block_given_attacks);
        cj["block_given_prior_blocks"] = curve_json(curves.block_given_prior_blocks);
        write_text(dir + "/moderation_curves.json", cj.dump(2) + "\n");
        run.output(dir + "/moderation_curves.json");
        std::vector<std::vector<std::string>> csv_rows;
        for (const analytics::CurvePoint& p : curves.warn_given_attacks) {
            csv_rows.push_back({"warn_given_attacks", std::to_string(p.x), std::to_string(p.n),
                                fmt(p.p)});
        }
        for (const analytics::CurvePoint& p : curves.block_given_attacks) {
            csv_rows.push_back({"block_given_attacks", std::to_string(p.x), std::to_string(p.n),
                                fmt(p.p)});
        }
        for (const analytics::CurvePoint& p : curves.block_given_prior_blocks) {
            csv_rows.push_back({"block_given_prior_blocks", std::to_string(p.x),
                                std::to_string(p.n), fmt(p.p)});
        }
        write_csv(dir + "/moderation_curves.csv", {"curve", "x", "n", "p"}, csv_rows);
        run.output(dir + "/moderation_curves.csv");
    }

    // Neighboring attack fraction per configured radius.
    {
        json rows = json::array();
        std::vector<std::vector<std::string>> csv_rows;
        for (const std::size_t n : cfg.naf_radii) {
            const analytics::NafReport report = analytics::neighboring_attack_fraction(scored, n);
            rows.push_back({{"n", report.n},
                            {"mean_attacking", report.mean_attacking},
                            {"mean_non_attacking", report.mean_non_attacking},
                            {"n_attacking", report.n_attacking},
                            {"n_non_attacking", report.n_non_attacking},
                            {"t", report.t_statistic ? json(*report.t_statistic) : json()}});
            csv_rows.push_back({std::to_string(report.n), fmt(report.mean_attacking),
                                fmt(report.mean_non_attacking),
                                std::to_string(report.n_attacking),
                                std::to_string(report.n_non_attacking),
                                report.t_statistic ? fmt(*report.t_statistic) : ""});
        }
        write_text(dir + "/naf.json", json(rows).dump(2) + "\n");
        write_csv(dir + "/naf.csv",
                  {"n", "mean_attacking", "mean_non_attacking", "n_attacking",
                   "n_non_attacking", "t"},
                  csv_rows);
        run.output(dir + "/naf.json");
        run.output(dir + "/naf.csv");
    }

    write_text(run.output(cfg.artifact("analysis_report.json")), summary.dump(2) + "\n");
    run.finish();
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> kStages = {
        "extract", "filter",   "ingest",   "aggregate", "split", "train",
        "tune",    "evaluate", "baseline", "calibrate", "score", "analyze"};
    return kStages;
}

void run_stage(const std::string& stage, const PipelineConfig& cfg) {
    if (stage == "extract") return run_extract(cfg);
    if (stage == "filter") return run_filter(cfg);
    if (stage == "ingest") return run_ingest(cfg);
    if (stage == "aggregate") return run_aggregate(cfg);
    if (stage == "split") return run_split(cfg);
    if (stage == "train") return run_train(cfg);
    if (stage == "tune") return run_tune(cfg);
    if (stage == "evaluate") return run_evaluate(cfg);
    if (stage == "baseline") return run_baseline(cfg);
    if (stage == "calibrate") return run_calibrate(cfg);
    if (stage == "score") return run_score(cfg);
    if (stage == "analyze") return run_analyze(cfg);
    throw Error(errc::config, "unknown stage: " + stage);
}

}  // namespace toxpipe::pipeline
