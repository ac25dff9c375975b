// End-to-end pipeline checks on the synthetic fixture: every stage in order
// through the library API, byte-identical reruns, and the installed CLI
// binary driving the same flow.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/synth.hpp"
#include "toxpipe/config.hpp"
#include "toxpipe/errors.hpp"
#include "toxpipe/jsonl.hpp"
#include "toxpipe/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace toxpipe;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    if (!ok) {
        ++failures;
        std::cerr << "FAIL: " << what << "\n";
    }
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

json parse_file(const std::string& path) { return json::parse(slurp(path)); }

config::PipelineConfig load_cfg(const std::string& dir, const synth::Options& opt,
                                std::uint64_t seed) {
    const std::string cfg_path = dir + "/pipeline.ini";
    std::ofstream out(cfg_path);
    out << synth::config_text(dir, opt, seed);
    out.close();
    return config::load_config(cfg_path);
}

// Artifact bytes, manifests excluded (they carry wall times).
std::map<std::string, std::string> artifact_bytes(const std::string& out_dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), out_dir).string();
        if (rel.rfind("manifests/", 0) == 0) continue;
        files[rel] = slurp(entry.path().string());
    }
    return files;
}

void run_all_stages(const config::PipelineConfig& cfg) {
    for (const std::string& stage : pipeline::stage_names()) {
        pipeline::run_stage(stage, cfg);
    }
}

void library_end_to_end() {
    const std::string dir = "it_library";
    fs::remove_all(dir);
    synth::Options opt;
    opt.n_pages = 100;
    opt.comments_per_page = 5;
    opt.n_attacks = 25;
    opt.n_labeled = 300;
    opt.baseline_labeled = 60;
    opt.seed = 11;
    const synth::GroundTruth truth = synth::write_corpus(dir, opt);
    check(truth.n_human_comments == 500, "fixture has 500 human comments");

    const config::PipelineConfig cfg = load_cfg(dir, opt, 424242);
    run_all_stages(cfg);

    // Every documented artifact exists.
    for (const std::string& name :
         {"comments.jsonl", "comments_filtered.jsonl", "filter_stats.json",
          "blocked_sample.jsonl", "annotations_clean.csv", "ingest_report.json",
          "labels.jsonl", "agreement.json", "split.jsonl", "vocab.json", "model.json",
          "tune_trials.jsonl", "tune_report.json", "eval_report.json", "eval_report.txt",
          "baseline_report.json", "baseline_report.txt", "threshold.json", "scored.jsonl",
          "analysis_report.json"}) {
        check(fs::exists(cfg.artifact(name)), std::string("artifact exists: ") + name);
    }
    for (const std::string& name :
         {"prevalence_anonymity.json", "prevalence_namespace.csv", "prevalence_year.json",
          "prevalence_activity_bucket.csv", "prevalence_contains_ngram.json",
          "activity_histogram.csv", "toxicity.csv", "moderation.json",
          "moderation_curves.csv", "naf.csv", "anonymity_test.json"}) {
        check(fs::exists(cfg.artifact("analysis/" + name)),
              std::string("analysis artifact exists: ") + name);
    }
    for (const std::string& stage : pipeline::stage_names()) {
        check(fs::exists(cfg.out_dir + "/manifests/" + stage + ".json"),
              "manifest exists: " + stage);
    }

    // Filter: bots and admin templates are gone, humans stay.
    const json filter_stats = parse_file(cfg.artifact("filter_stats.json"));
    check(filter_stats["totals"]["no_bot_admin"].get<std::size_t>() == 500,
          "filter keeps exactly the human comments");
    check(filter_stats["totals"]["all"].get<std::size_t>() ==
              500 + opt.n_bot_comments + opt.n_admin_comments,
          "filter sees all extracted comments");

    // Labels join the annotated subset (not-English comments removed).
    const auto labels_rows = jsonl::read_labels(cfg.artifact("labels.jsonl"));
    check(labels_rows.size() >= opt.n_labeled - opt.n_not_english - 1 &&
              labels_rows.size() <= opt.n_labeled,
          "aggregate keeps roughly the labeled subset, minus not-English bait");

    // Agreement is high: only 10% annotator noise.
    const json agreement = parse_file(cfg.artifact("agreement.json"));
    check(agreement["krippendorff_alpha"].is_number(), "alpha is defined");
    check(agreement["krippendorff_alpha"].get<double>() > 0.3, "alpha reflects agreement");

    // The tuned model separates the planted vocabulary. (Quantitative bars
    // live in the acceptance suite's full-size corpus; this fixture is small.)
    const json eval_report = parse_file(cfg.artifact("eval_report.json"));
    check(eval_report["auc"].get<double>() > 0.8, "test-split AUC above 0.8");

    // Threshold lands inside [0, 1] with sane metrics.
    const json threshold = parse_file(cfg.artifact("threshold.json"));
    const double t = threshold["t"].get<double>();
    check(t >= 0.0 && t <= 1.0, "threshold in range");

    // Scored corpus covers the filtered corpus.
    double stored_t = -1.0;
    const auto scored = jsonl::read_scored(cfg.artifact("scored.jsonl"), &stored_t);
    check(scored.size() == 500, "scored corpus covers the filtered comments");
    check(stored_t == t, "scored.jsonl records the calibrated threshold");

    // Baseline report has one row per n_p plus the model row.
    const json baseline = parse_file(cfg.artifact("baseline_report.json"));
    check(baseline["ensemble_rows"].size() == 2, "baseline rows per n_p");
    check(baseline["model_row"].contains("auc_mean"), "baseline model row present");

    // The labeled set here is attack-enriched, so the thresholded estimate
    // sits between the corpus rate and the labeled rate; it must stay sane.
    std::size_t predicted = 0;
    for (const auto& s : scored) predicted += s.is_attack ? 1 : 0;
    const double estimate = static_cast<double>(predicted) / static_cast<double>(scored.size());
    check(estimate >= 0.02 && estimate <= 0.12,
          "prevalence estimate stays within the enrichment envelope");
}

void rerun_is_byte_identical() {
    synth::Options opt;
    opt.n_pages = 80;
    opt.comments_per_page = 5;
    opt.n_attacks = 20;
    opt.n_labeled = 240;
    opt.baseline_labeled = 40;
    opt.seed = 21;

    const std::string dir_a = "it_rerun_a";
    const std::string dir_b = "it_rerun_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    synth::write_corpus(dir_a, opt);
    synth::write_corpus(dir_b, opt);
    check(slurp(dir_a + "/revisions.jsonl") == slurp(dir_b + "/revisions.jsonl"),
          "fixture generation is deterministic");

    run_all_stages(load_cfg(dir_a, opt, 777));
    run_all_stages(load_cfg(dir_b, opt, 777));
    const auto a = artifact_bytes(dir_a + "/out");
    const auto b = artifact_bytes(dir_b + "/out");
    check(!a.empty(), "rerun produced artifacts");
    check(a.size() == b.size(), "rerun produced the same artifact set");
    for (const auto& [name, bytes] : a) {
        auto it = b.find(name);
        check(it != b.end() && it->second == bytes, "byte-identical artifact: " + name);
    }

    // A different master seed must change seeded artifacts.
    const std::string dir_c = "it_rerun_c";
    fs::remove_all(dir_c);
    synth::write_corpus(dir_c, opt);
    run_all_stages(load_cfg(dir_c, opt, 778));
    const auto c = artifact_bytes(dir_c + "/out");
    check(c.at("split.jsonl") != a.at("split.jsonl"), "different seed changes the split");
}

int run_cli(const std::string& cli, const std::string& args, std::string* err_line = nullptr) {
    const std::string stderr_path = "cli_stderr.txt";
    const int rc = std::system((cli + " " + args + " 2>" + stderr_path).c_str());
    if (err_line) *err_line = slurp(stderr_path);
    return rc;
}

void cli_end_to_end(const std::string& cli) {
    const std::string dir = "it_cli";
    fs::remove_all(dir);
    synth::Options opt;
    opt.n_pages = 80;
    opt.comments_per_page = 5;
    opt.n_attacks = 20;
    opt.n_labeled = 240;
    opt.baseline_labeled = 40;
    opt.seed = 31;
    synth::write_corpus(dir, opt);
    std::ofstream(dir + "/pipeline.ini") << synth::config_text(dir, opt, 999);
    const std::string cfg_arg = "--config " + dir + "/pipeline.ini";

    // Dependency ordering: calibrate before tune names the producer.
    std::string err;
    const int rc_bad = run_cli(cli, "calibrate " + cfg_arg, &err);
    check(rc_bad != 0, "calibrate before tune fails");
    check(err.find("code=dependency") != std::string::npos, "dependency error code emitted");
    check(err.find("tune") != std::string::npos, "dependency error names the producer stage");

    for (const std::string& stage : pipeline::stage_names()) {
        const int rc = run_cli(cli, stage + " " + cfg_arg, &err);
        check(rc == 0, "cli stage succeeds: " + stage + " (" + err + ")");
    }
    check(fs::exists(dir + "/out/analysis_report.json"), "cli pipeline completed");

    // config --defaults prints a loadable config.
    const int rc_defaults = std::system((cli + " config --defaults > " + dir +
                                         "/defaults.ini 2>/dev/null")
                                            .c_str());
    check(rc_defaults == 0, "config --defaults exits zero");
    check(config::load_config(dir + "/defaults.ini").master_seed ==
              config::PipelineConfig{}.master_seed,
          "printed defaults parse back");

    // Seed override propagates into the manifests.
    const int rc_seed = run_cli(cli, "split " + cfg_arg + " --seed 1717", &err);
    check(rc_seed == 0, "seed override accepted");
    const json manifest = parse_file(dir + "/out/manifests/split.json");
    check(manifest["master_seed"].get<std::string>() == "1717",
          "seed override recorded in the manifest");
}

}  // namespace

int main() {
    try {
        library_end_to_end();
        rerun_is_byte_identical();
        const char* cli = std::getenv("TOXPIPE_CLI");
        if (cli != nullptr && *cli != '\0') {
            cli_end_to_end(cli);
        } else {
            std::cerr << "TOXPIPE_CLI not set; skipping the CLI subprocess checks\n";
        }
    } catch (const Error& e) {
        std::cerr << "FAIL: unexpected pipeline error code=" << e.code() << ": " << e.what()
                  << "\n";
        ++failures;
    } catch (const std::exception& e) {
        std::cerr << "FAIL: unexpected exception: " << e.what() << "\n";
        ++failures;
    }
    if (failures == 0) {
        std::cout << "pipeline integration: ok\n";
        return 0;
    }
    std::cout << "pipeline integration: " << failures << " failure(s)\n";
    return 1;
}
