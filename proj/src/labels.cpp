#include "toxpipe/labels.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "toxpipe/errors.hpp"
#include "toxpipe/rng.hpp"

namespace toxpipe::labels {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

std::optional<bool> parse_flag(const std::string& s) {
    if (s == "0") return false;
    if (s == "1") return true;
    return std::nullopt;
}

}  // namespace

IngestResult ingest_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::io, "cannot open annotations file: " + path);
    return ingest_annotations(in, path);
}

IngestResult ingest_annotations(std::istream& in, const std::string& name) {
    IngestResult result;
    std::string line;
    if (!std::getline(in, line)) throw Error(errc::format, "empty annotations file: " + name);
    if (strip_cr(line) != "comment_id,worker_id,is_attack,not_english") {
        throw Error(errc::format, "bad annotations header in " + name + ": " + line);
    }
    // Key: comment \x1f worker \x1f attack-flag. Exact repeats are warnings.
    std::unordered_set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 4) {
            result.issues.push_back({line_no, "expected 4 fields, got " +
                                                  std::to_string(fields.size())});
            continue;
        }
        if (fields[0].empty() || fields[1].empty()) {
            result.issues.push_back({line_no, "empty comment_id or worker_id"});
            continue;
        }
        const std::optional<bool> attack = parse_flag(fields[2]);
        const std::optional<bool> not_english = parse_flag(fields[3]);
        if (!attack || !not_english) {
            result.issues.push_back({line_no, "flags must be 0 or 1"});
            continue;
        }
        std::string key = fields[0] + "\x1f" + fields[1] + "\x1f" + fields[2];
        if (!seen.insert(std::move(key)).second) {
            result.issues.push_back({line_no, "duplicate annotation row", true});
            continue;
        }
        result.records.push_back({fields[0], fields[1], *attack, *not_english});
    }
    return result;
}

GoldSet load_gold(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::io, "cannot open gold file: " + path);
    GoldSet gold;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        if (line_no == 1 && line == "comment_id,is_attack") continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw Error(errc::format,
                        "bad gold row at line " + std::to_string(line_no) + " in " + path);
        }
        const std::optional<bool> flag = parse_flag(fields[1]);
        if (!flag) {
            throw Error(errc::format,
                        "bad gold flag at line " + std::to_string(line_no) + " in " + path);
        }
        gold[fields[0]] = *flag;
    }
    return gold;
}

std::vector<AnnotationRecord> clean_annotations(const std::vector<AnnotationRecord>& records,
                                                CleanStats* stats) {
    CleanStats local;
    local.records_in = records.size();

    // Pass 1: (comment, worker) pairs with contradictory attack flags.
    std::unordered_map<std::string, std::array<bool, 2>> pair_values;
    for (const AnnotationRecord& r : records) {
        auto& vals = pair_values[r.comment_id + "\x1f" + r.worker_id];
        vals[r.is_attack ? 1 : 0] = true;
    }
    std::vector<AnnotationRecord> kept;
    kept.reserve(records.size());
    for (const AnnotationRecord& r : records) {
        const auto& vals = pair_values[r.comment_id + "\x1f" + r.worker_id];
        if (vals[0] && vals[1]) {
            ++local.contradictions_removed;
            continue;
        }
        kept.push_back(r);
    }

    // Pass 2: comments where a strict majority of remaining workers flagged
    // not-English.
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> flag_counts;
    for (const AnnotationRecord& r : kept) {
        auto& [flagged, total] = flag_counts[r.comment_id];
        ++total;
        if (r.not_english) ++flagged;
    }
    std::unordered_set<std::string> drop;
    for (const auto& [comment, counts] : flag_counts) {
        if (2 * counts.first > counts.second) drop.insert(comment);
    }
    local.non_english_comments = drop.size();

    std::vector<AnnotationRecord> out;
    out.reserve(kept.size());
    for (AnnotationRecord& r : kept) {
        if (drop.count(r.comment_id)) continue;
        out.push_back(std::move(r));
    }
    local.records_out = out.size();
    if (stats) *stats = local;
    return out;
}

GateResult gate_workers(const std::vector<AnnotationRecord>& records, const GoldSet& gold,
                        double min_accuracy) {
    if (gold.empty()) throw Error(errc::config, "worker gating requested with empty gold set");
    std::map<std::string, WorkerAccuracy> table;
    for (const AnnotationRecord& r : records) {
        WorkerAccuracy& w = table[r.worker_id];
        w.worker_id = r.worker_id;
        auto it = gold.find(r.comment_id);
        if (it == gold.end()) continue;
        ++w.n_gold;
        if (r.is_attack == it->second) ++w.n_correct;
    }
    GateResult result;
    for (auto& [id, w] : table) {
        if (w.n_gold == 0) {
            w.flagged_no_gold = true;
            w.retained = true;
        } else {
            w.accuracy = static_cast<double>(w.n_correct) / static_cast<double>(w.n_gold);
            w.retained = *w.accuracy >= min_accuracy;
        }
        if (w.retained) result.retained.insert(id);
        result.table.push_back(w);
    }
    return result;
}

std::vector<AnnotationRecord> apply_gate(const std::vector<AnnotationRecord>& records,
                                         const GateResult& gate) {
    std::vector<AnnotationRecord> out;
    out.reserve(records.size());
    for (const AnnotationRecord& r : records) {
        if (gate.retained.count(r.worker_id)) out.push_back(r);
    }
    return out;
}

std::string to_string(LabelType t) { return t == LabelType::OH ? "oh" : "ed"; }

LabelType label_type_from_string(const std::string& text) {
    if (text == "oh" || text == "OH") return LabelType::OH;
    if (text == "ed" || text == "ED") return LabelType::ED;
    throw Error(errc::config, "unknown label type: " + text);
}

std::vector<LabelDistribution> aggregate_labels(const std::vector<AnnotationRecord>& records) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // attacks, total
    for (const AnnotationRecord& r : records) {
        auto& [attacks, total] = counts[r.comment_id];
        ++total;
        if (r.is_attack) ++attacks;
    }
    std::vector<LabelDistribution> out;
    out.reserve(counts.size());
    for (const auto& [comment, c] : counts) {
        LabelDistribution d;
        d.comment_id = comment;
        d.n = c.second;
        d.attack_fraction = static_cast<double>(c.first) / static_cast<double>(c.second);
        d.oh_label = 2 * c.first > c.second ? 1 : 0;
        out.push_back(std::move(d));
    }
    return out;
}

std::optional<double> krippendorff_alpha(const std::vector<AnnotationRecord>& records) {
    // Units are comments; values are the binary attack flags. Units with a
    // single annotation cannot produce coincidences and are excluded.
    std::unordered_map<std::string, std::array<std::size_t, 2>> units;
    for (const AnnotationRecord& r : records) {
        ++units[r.comment_id][r.is_attack ? 1 : 0];
    }
    std::size_t usable = 0;
    double o_disagree = 0.0;  // off-diagonal coincidence mass
    std::array<double, 2> marginal = {0.0, 0.0};
    for (const auto& [comment, counts] : units) {
        const std::size_t m = counts[0] + counts[1];
        if (m < 2) continue;
        ++usable;
        const double denom = static_cast<double>(m - 1);
        // Ordered disagreeing pairs within the unit: 2 * n0 * n1.
        o_disagree += 2.0 * static_cast<double>(counts[0]) *
                      static_cast<double>(counts[1]) / denom;
        marginal[0] += static_cast<double>(counts[0]);
        marginal[1] += static_cast<double>(counts[1]);
    }
    if (usable < 2) {
        throw Error(errc::size,
                    "krippendorff_alpha needs at least 2 comments with >= 2 annotations");
    }
    const double n = marginal[0] + marginal[1];
    const double expected_pairs = 2.0 * marginal[0] * marginal[1];  // sum_{c!=k} n_c n_k
    if (expected_pairs == 0.0) return std::nullopt;
    const double d_o = o_disagree / n;
    const double d_e = expected_pairs / (n * (n - 1.0));
    return 1.0 - d_o / d_e;
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        default: return "test";
    }
}

Split split_from_string(const std::string& text) {
    if (text == "train") return Split::train;
    if (text == "dev") return Split::dev;
    if (text == "test") return Split::test;
    throw Error(errc::format, "unknown split name: " + text);
}

namespace {

// Largest-remainder apportionment of n into the 3:1:1 ratio; ties go to the
// earlier of train, dev, test.
std::array<std::size_t, 3> apportion_311(std::size_t n) {
    static constexpr std::array<double, 3> kWeights = {3.0 / 5.0, 1.0 / 5.0, 1.0 / 5.0};
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> fractions{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = kWeights[i] * static_cast<double>(n);
        sizes[i] = static_cast<std::size_t>(exact);
        fractions[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fractions[a] > fractions[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
    return sizes;
}

}  // namespace

SplitAssignment split_dataset(const std::vector<std::string>& comment_ids, std::uint64_t seed,
                              const std::map<std::string, std::string>* stratify_by) {
    if (comment_ids.size() < 5) {
        throw Error(errc::size, "split_dataset needs at least 5 comments, got " +
                                    std::to_string(comment_ids.size()));
    }
    std::map<std::string, std::vector<std::string>> strata;
    for (const std::string& id : comment_ids) {
        std::string key;
        if (stratify_by) {
            auto it = stratify_by->find(id);
            if (it == stratify_by->end()) {
                throw Error(errc::config, "no stratum for comment " + id);
            }
            key = it->second;
        }
        strata[key].push_back(id);
    }
    SplitAssignment result;
    result.seed = seed;
    for (auto& [key, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        auto eng = rng::engine(rng::derive_seed(seed, rng::fnv1a64(key)));
        rng::shuffle(ids, eng);
        const auto sizes = apportion_311(ids.size());
        std::size_t idx = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            for (std::size_t i = 0; i < sizes[s]; ++i, ++idx) {
                result.assignment.emplace(ids[idx], static_cast<Split>(s));
            }
        }
    }
    return result;
}

}  // namespace toxpipe::labels
