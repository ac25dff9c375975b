#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace toxpipe::labels {

// One worker's judgment of one comment.
struct AnnotationRecord {
    std::string comment_id;
    std::string worker_id;
    bool is_attack = false;
    bool not_english = false;
};

// Per-comment aggregate. attack_fraction always has denominator n, and the
// hard label requires a strict majority.
struct LabelDistribution {
    std::string comment_id;
    std::size_t n = 0;
    double attack_fraction = 0.0;
    int oh_label = 0;
};

using GoldSet = std::map<std::string, bool>;  // comment_id -> gold attack label

// ---------------------------------------------------------------------------
// Ingest

struct RowIssue {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string message;
    bool is_warning = false;  // warnings (e.g. exact duplicates) keep the row
};

struct IngestResult {
    std::vector<AnnotationRecord> records;
    std::vector<RowIssue> issues;
};

// CSV with header comment_id,worker_id,is_attack,not_english and {0,1} flags.
// Malformed rows become issues with their line number; exact duplicate
// (comment, worker, value) rows are deduplicated with a warning.
IngestResult ingest_annotations(const std::string& path);
IngestResult ingest_annotations(std::istream& in, const std::string& name);

GoldSet load_gold(const std::string& path);

// ---------------------------------------------------------------------------
// Cleaning and worker gating

struct CleanStats {
    std::size_t contradictions_removed = 0;   // records dropped for self-contradiction
    std::size_t non_english_comments = 0;     // comments removed by not-English majority
    std::size_t records_in = 0;
    std::size_t records_out = 0;
};

// First drops every record of a (comment, worker) pair whose is_attack values
// contradict each other, then drops whole comments where a strict majority of
// the remaining workers flagged not-English.
std::vector<AnnotationRecord> clean_annotations(const std::vector<AnnotationRecord>& records,
                                                CleanStats* stats = nullptr);

struct WorkerAccuracy {
    std::string worker_id;
    std::size_t n_gold = 0;
    std::size_t n_correct = 0;
    std::optional<double> accuracy;  // empty when the worker saw no gold questions
    bool retained = true;
    bool flagged_no_gold = false;
};

struct GateResult {
    std::set<std::string> retained;
    std::vector<WorkerAccuracy> table;  // sorted by worker_id
};

// Workers stay iff their accuracy on gold comments is >= min_accuracy
// (boundary inclusive). Workers who never saw a gold question stay, flagged.
GateResult gate_workers(const std::vector<AnnotationRecord>& records, const GoldSet& gold,
                        double min_accuracy = 0.7);

std::vector<AnnotationRecord> apply_gate(const std::vector<AnnotationRecord>& records,
                                         const GateResult& gate);

// ---------------------------------------------------------------------------
// Aggregation

enum class LabelType { OH, ED };

std::string to_string(LabelType t);
LabelType label_type_from_string(const std::string& text);

// Both the empirical attack fraction and the strict-majority hard label are
// always computed; LabelType only selects what training consumes downstream.
// Output is sorted by comment_id.
std::vector<LabelDistribution> aggregate_labels(const std::vector<AnnotationRecord>& records);

// ---------------------------------------------------------------------------
// Agreement

// Krippendorff's alpha for binary nominal data, coincidence-matrix form,
// over comments with at least two annotations. Returns nullopt when expected
// disagreement is zero (all pairable values identical).
std::optional<double> krippendorff_alpha(const std::vector<AnnotationRecord>& records);

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, dev, test };

std::string to_string(Split s);
Split split_from_string(const std::string& text);

struct SplitAssignment {
    std::map<std::string, Split> assignment;
    std::uint64_t seed = 0;
};

// Deterministic seeded 3:1:1 partition; within every stratum the three sizes
// are a largest-remainder apportionment, so each is within one comment of the
// exact ratio.
SplitAssignment split_dataset(const std::vector<std::string>& comment_ids, std::uint64_t seed,
                              const std::map<std::string, std::string>* stratify_by = nullptr);

}  // namespace toxpipe::labels
