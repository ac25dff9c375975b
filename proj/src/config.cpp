#include "toxpipe/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "toxpipe/errors.hpp"
#include "toxpipe/rng.hpp"

namespace toxpipe::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::io, "cannot open config file: " + path);
    SectionMap sections;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            sections[section];
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(errc::config, path + ":" + std::to_string(line_no) +
                                          ": expected key = value, got: " + t);
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) {
            throw Error(errc::config, path + ":" + std::to_string(line_no) + ": empty key");
        }
        sections[section][key] = trim(t.substr(eq + 1));
    }
    return sections;
}

class Reader {
public:
    explicit Reader(SectionMap sections) : sections_(std::move(sections)) {}

    std::optional<std::string> get(const std::string& section, const std::string& key) {
        auto sit = sections_.find(section);
        if (sit == sections_.end()) return std::nullopt;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return std::nullopt;
        consumed_.insert(section + "." + key);
        return kit->second;
    }

    template <typename T, typename Fn>
    void set(const std::string& section, const std::string& key, T& target, Fn&& convert) {
        const auto value = get(section, key);
        if (!value) return;
        try {
            target = convert(*value);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(errc::config, "bad value for " + section + "." + key + ": '" + *value +
                                          "' (" + e.what() + ")");
        }
    }

    void check_unknown() const {
        for (const auto& [section, kv] : sections_) {
            for (const auto& [key, value] : kv) {
                if (!consumed_.count(section + "." + key)) {
                    throw Error(errc::config, "unknown config key: [" + section + "] " + key);
                }
            }
        }
    }

private:
    SectionMap sections_;
    std::set<std::string> consumed_;
};

std::string identity(const std::string& s) { return s; }

std::uint64_t to_u64(const std::string& s) { return std::stoull(s); }
std::size_t to_size(const std::string& s) { return std::stoull(s); }
double to_double(const std::string& s) { return std::stod(s); }
int to_int(const std::string& s) { return std::stoi(s); }

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error(errc::config, "expected boolean, got: " + s);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T, typename Fn>
std::vector<T> to_list(const std::string& s, Fn&& convert) {
    std::vector<T> out;
    for (const std::string& item : split_list(s)) out.push_back(convert(item));
    if (out.empty()) throw Error(errc::config, "expected a non-empty list, got: " + s);
    return out;
}

}  // namespace

std::uint64_t PipelineConfig::stage_seed(const std::string& stage) const {
    return rng::derive_seed(master_seed, rng::fnv1a64(stage));
}

std::string PipelineConfig::artifact(const std::string& name) const {
    return out_dir + "/" + name;
}

PipelineConfig load_config(const std::string& path) {
    Reader reader(parse_ini(path));
    PipelineConfig cfg;

    reader.set("paths", "revisions", cfg.revisions, identity);
    reader.set("paths", "annotations", cfg.annotations, identity);
    reader.set("paths", "gold", cfg.gold, identity);
    reader.set("paths", "moderation", cfg.moderation, identity);
    reader.set("paths", "bot_rules", cfg.bot_rules, identity);
    reader.set("paths", "admin_rules", cfg.admin_rules, identity);
    reader.set("paths", "out_dir", cfg.out_dir, identity);

    reader.set("corpus", "diff_token_mode", cfg.diff_token_mode, [](const std::string& s) {
        if (s == "word") return corpus::TokenMode::word;
        if (s == "char") return corpus::TokenMode::character;
        throw Error(errc::config, "diff_token_mode must be word or char, got: " + s);
    });
    reader.set("corpus", "diff_min_match", cfg.diff_min_match, to_size);
    reader.set("corpus", "blocked_sample_k", cfg.blocked_sample_k, to_size);

    reader.set("features", "ngram_kind", cfg.feature_spec.kind, [&cfg](const std::string& s) {
        const auto kind = features::ngram_kind_from_string(s);
        // Switching kinds adopts the paper's default range for that kind.
        cfg.feature_spec = kind == features::NgramKind::word ? features::default_word_spec()
                                                             : features::default_char_spec();
        return kind;
    });
    reader.set("features", "n_min", cfg.feature_spec.n_min, to_size);
    reader.set("features", "n_max", cfg.feature_spec.n_max, to_size);
    reader.set("features", "max_features", cfg.feature_spec.max_features, to_size);
    reader.set("features", "weighting", cfg.feature_spec.weighting,
               features::weighting_from_string);
    reader.set("features", "lowercase", cfg.feature_spec.lowercase, to_bool);
    reader.set("features", "l1_normalize", cfg.feature_spec.l1_normalize, to_bool);
    cfg.feature_spec.validate();

    reader.set("labels", "min_worker_accuracy", cfg.min_worker_accuracy, to_double);
    reader.set("labels", "alpha_basis", cfg.alpha_basis, [](const std::string& s) {
        if (s != "cleaned" && s != "raw") {
            throw Error(errc::config, "alpha_basis must be cleaned or raw, got: " + s);
        }
        return s;
    });

    reader.set("train", "kind", cfg.model_kind, model::model_kind_from_string);
    reader.set("train", "label_type", cfg.label_type, labels::label_type_from_string);
    reader.set("train", "learning_rate", cfg.hyperparams.learning_rate, to_double);
    reader.set("train", "l2", cfg.hyperparams.l2, to_double);
    reader.set("train", "epochs", cfg.hyperparams.epochs, to_size);
    reader.set("train", "batch_size", cfg.hyperparams.batch_size, to_size);
    reader.set("train", "hidden_sizes", cfg.hyperparams.hidden_sizes,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });

    reader.set("tune", "n_iter", cfg.search.n_iter, to_size);
    reader.set("tune", "learning_rates", cfg.search.learning_rates,
               [](const std::string& s) { return to_list<double>(s, to_double); });
    reader.set("tune", "batch_sizes", cfg.search.batch_sizes,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("tune", "epochs", cfg.search.epochs,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("tune", "l2", cfg.search.l2,
               [](const std::string& s) { return to_list<double>(s, to_double); });
    reader.set("tune", "hidden_sizes", cfg.search.hidden_sizes,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("tune", "depths", cfg.search.depths,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("tune", "max_features_grid", cfg.max_features_grid,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("tune", "weighting_grid", cfg.weighting_grid, [](const std::string& s) {
        return to_list<features::Weighting>(s, features::weighting_from_string);
    });
    reader.set("tune", "normalize_grid", cfg.normalize_grid,
               [](const std::string& s) { return to_list<bool>(s, to_bool); });
    reader.set("tune", "objective", cfg.objective, model::objective_from_string);

    reader.set("evaluate", "split", cfg.eval_split, identity);
    reader.set("calibrate", "splits", cfg.calibration_splits, split_list);

    reader.set("baseline", "n_t", cfg.baseline.n_t, to_size);
    reader.set("baseline", "n_p", cfg.baseline.n_p_values,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("baseline", "runs", cfg.baseline.runs, to_size);

    reader.set("analysis", "year", cfg.analysis_year, to_int);
    reader.set("analysis", "activity_buckets", cfg.activity_buckets,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("analysis", "toxicity_buckets", cfg.toxicity_buckets,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("analysis", "bootstrap_samples", cfg.bootstrap_samples, to_size);
    reader.set("analysis", "bootstrap_level", cfg.bootstrap_level, to_double);
    reader.set("analysis", "naf_radii", cfg.naf_radii,
               [](const std::string& s) { return to_list<std::size_t>(s, to_size); });
    reader.set("analysis", "moderation_window_days", cfg.moderation_window_days,
               [](const std::string& s) { return static_cast<std::int64_t>(std::stoll(s)); });
    reader.set("analysis", "contains_ngram", cfg.contains_ngram, identity);

    reader.set("seeds", "master", cfg.master_seed, to_u64);
    reader.set("run", "threads", cfg.threads,
               [](const std::string& s) { return static_cast<unsigned>(std::stoul(s)); });

    reader.check_unknown();
    return cfg;
}

std::string default_config_text() {
    const PipelineConfig d;
    std::ostringstream out;
    out << "# toxpipe pipeline configuration (all values shown are the defaults)\n"
        << "\n[paths]\n"
        << "revisions = \nannotations = \ngold = \nmoderation = \n"
        << "bot_rules = \nadmin_rules = \nout_dir = " << d.out_dir << "\n"
        << "\n[corpus]\n"
        << "diff_token_mode = word\n"
        << "diff_min_match = " << d.diff_min_match << "\n"
        << "blocked_sample_k = " << d.blocked_sample_k << "\n"
        << "\n[features]\n"
        << "ngram_kind = char\n"
        << "n_min = " << d.feature_spec.n_min << "\nn_max = " << d.feature_spec.n_max << "\n"
        << "max_features = " << d.feature_spec.max_features << "\n"
        << "weighting = count\nlowercase = true\nl1_normalize = false\n"
        << "\n[labels]\n"
        << "min_worker_accuracy = 0.7\nalpha_basis = cleaned\n"
        << "\n[train]\n"
        << "kind = lr\nlabel_type = ed\nlearning_rate = 0.1\nl2 = 0\n"
        << "epochs = 5\nbatch_size = 32\n"
        << "\n[tune]\n"
        << "n_iter = 15\nlearning_rates = 0.1, 0.03, 0.01\nbatch_sizes = 32, 128\n"
        << "epochs = 5, 20\nl2 = 0, 1e-5, 1e-4\nhidden_sizes = 64, 256\ndepths = 1, 2\n"
        << "max_features_grid = 10000, 30000, 100000\nweighting_grid = count, binary\n"
        << "normalize_grid = false\nobjective = auc\n"
        << "\n[evaluate]\n"
        << "split = dev\n"
        << "\n[calibrate]\n"
        << "splits = dev, test\n"
        << "\n[baseline]\n"
        << "n_t = 10\nn_p = 1, 3, 5, 7, 9, 10\nruns = 25\n"
        << "\n[analysis]\n"
        << "year = " << d.analysis_year << "\n"
        << "activity_buckets = 5, 20, 100\ntoxicity_buckets = 1, 4, 20\n"
        << "bootstrap_samples = 1000\nbootstrap_level = 0.95\nnaf_radii = 1, 3, 5\n"
        << "moderation_window_days = 7\ncontains_ngram = thank\n"
        << "\n[seeds]\n"
        << "master = " << d.master_seed << "\n"
        << "\n[run]\n"
        << "threads = " << d.threads << "\n";
    return out.str();
}

void apply_overrides(PipelineConfig& cfg, const Overrides& overrides) {
    if (overrides.seed) cfg.master_seed = *overrides.seed;
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
    if (overrides.threads) cfg.threads = *overrides.threads;
}

}  // namespace toxpipe::config
