#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "toxpipe/analytics.hpp"
#include "toxpipe/corpus.hpp"
#include "toxpipe/labels.hpp"

namespace toxpipe::jsonl {

// Line-oriented readers report malformed lines instead of aborting bulk runs.
struct LineIssue {
    std::size_t line = 0;
    std::string message;
};

struct ReadStats {
    std::size_t lines = 0;
    std::vector<LineIssue> issues;
};

// revisions.jsonl, grouped per page in file order. The callback receives each
// page's revision list once the page is complete; revisions of one page must
// be contiguous in the file.
void read_revisions_by_page(const std::string& path,
                            const std::function<void(std::vector<corpus::Revision>&&)>& on_page,
                            ReadStats* stats = nullptr);

// One revision at a time; memory stays bounded by a single revision.
void for_each_revision(const std::string& path,
                       const std::function<void(corpus::Revision&&)>& fn,
                       ReadStats* stats = nullptr);

std::vector<corpus::Comment> read_comments(const std::string& path, ReadStats* stats = nullptr);
void write_comments(const std::string& path, const std::vector<corpus::Comment>& comments);

// Streaming variants; corpus-scale stages never hold the full file.
void for_each_comment(const std::string& path,
                      const std::function<void(corpus::Comment&&)>& fn,
                      ReadStats* stats = nullptr);
std::string comment_to_line(const corpus::Comment& comment);

void for_each_scored(const std::string& path,
                     const std::function<void(analytics::ScoredComment&&)>& fn,
                     ReadStats* stats = nullptr);

std::vector<corpus::BlockEvent> read_moderation(const std::string& path,
                                                ReadStats* stats = nullptr);
void write_moderation(const std::string& path, const std::vector<corpus::BlockEvent>& events);

std::vector<labels::LabelDistribution> read_labels(const std::string& path,
                                                   ReadStats* stats = nullptr);
void write_labels(const std::string& path, const std::vector<labels::LabelDistribution>& labels);

std::map<std::string, labels::Split> read_split(const std::string& path,
                                                ReadStats* stats = nullptr);
void write_split(const std::string& path, const labels::SplitAssignment& assignment);

std::vector<analytics::ScoredComment> read_scored(const std::string& path, double* threshold,
                                                  ReadStats* stats = nullptr);
void write_scored(const std::string& path, const std::vector<analytics::ScoredComment>& scored,
                  double threshold);

// One regular expression per line; blank lines and '#' comments are skipped.
std::vector<std::string> read_pattern_file(const std::string& path);

}  // namespace toxpipe::jsonl
