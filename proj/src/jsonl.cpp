#include "toxpipe/jsonl.hpp"

#include <fstream>

#include <json.hpp>

#include "toxpipe/errors.hpp"
#include "toxpipe/iso8601.hpp"

namespace toxpipe::jsonl {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::io, "cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::io, "cannot write " + path);
    return out;
}

// Applies `parse` per non-empty line; malformed lines become issues.
template <typename Fn>
void for_each_line(const std::string& path, ReadStats* stats, Fn&& parse) {
    std::ifstream in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    ReadStats local;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++local.lines;
        try {
            parse(json::parse(line));
        } catch (const json::exception& e) {
            local.issues.push_back({line_no, e.what()});
        } catch (const Error& e) {
            local.issues.push_back({line_no, e.what()});
        }
    }
    if (stats) *stats = std::move(local);
}

json comment_to_json(const corpus::Comment& c) {
    return json{{"comment_id", c.comment_id},
                {"page_id", c.page_id},
                {"namespace", corpus::to_string(c.ns)},
                {"timestamp", format_utc(c.timestamp)},
                {"author_id", c.author_id},
                {"author_registered", c.author_registered},
                {"raw_markup", c.raw_markup},
                {"clean_text", c.clean_text}};
}

corpus::Comment comment_from_json(const json& j) {
    corpus::Comment c;
    c.comment_id = j.at("comment_id").get<std::string>();
    c.page_id = j.at("page_id").get<std::string>();
    c.ns = corpus::namespace_from_string(j.at("namespace").get<std::string>());
    c.timestamp = parse_utc(j.at("timestamp").get<std::string>());
    c.author_id = j.at("author_id").get<std::string>();
    c.author_registered = j.at("author_registered").get<bool>();
    c.raw_markup = j.at("raw_markup").get<std::string>();
    c.clean_text = j.at("clean_text").get<std::string>();
    return c;
}

}  // namespace

namespace {

corpus::Revision revision_from_json(const json& j) {
    corpus::Revision rev;
    rev.page_id = j.at("page_id").get<std::string>();
    rev.ns = corpus::namespace_from_string(j.at("namespace").get<std::string>());
    rev.rev_id = j.at("rev_id").get<std::string>();
    rev.timestamp = parse_utc(j.at("timestamp").get<std::string>());
    rev.author_id = j.at("author_id").get<std::string>();
    rev.author_registered = j.at("author_registered").get<bool>();
    rev.text = j.at("text").get<std::string>();
    return rev;
}

}  // namespace

void read_revisions_by_page(const std::string& path,
                            const std::function<void(std::vector<corpus::Revision>&&)>& on_page,
                            ReadStats* stats) {
    std::vector<corpus::Revision> page;
    for_each_line(path, stats, [&](const json& j) {
        corpus::Revision rev = revision_from_json(j);
        if (!page.empty() && page.back().page_id != rev.page_id) {
            on_page(std::move(page));
            page.clear();
        }
        page.push_back(std::move(rev));
    });
    if (!page.empty()) on_page(std::move(page));
}

void for_each_revision(const std::string& path,
                       const std::function<void(corpus::Revision&&)>& fn, ReadStats* stats) {
    for_each_line(path, stats, [&fn](const json& j) { fn(revision_from_json(j)); });
}

std::vector<corpus::Comment> read_comments(const std::string& path, ReadStats* stats) {
    std::vector<corpus::Comment> comments;
    for_each_line(path, stats, [&](const json& j) { comments.push_back(comment_from_json(j)); });
    return comments;
}

void write_comments(const std::string& path, const std::vector<corpus::Comment>& comments) {
    std::ofstream out = open_out(path);
    for (const corpus::Comment& c : comments) out << comment_to_json(c).dump() << "\n";
}

void for_each_comment(const std::string& path,
                      const std::function<void(corpus::Comment&&)>& fn, ReadStats* stats) {
    for_each_line(path, stats, [&fn](const json& j) { fn(comment_from_json(j)); });
}

std::string comment_to_line(const corpus::Comment& comment) {
    return comment_to_json(comment).dump();
}

void for_each_scored(const std::string& path,
                     const std::function<void(analytics::ScoredComment&&)>& fn,
                     ReadStats* stats) {
    for_each_line(path, stats, [&fn](const json& j) {
        analytics::ScoredComment s;
        s.comment = comment_from_json(j);
        s.attack_score = j.at("attack_score").get<double>();
        s.is_attack = j.at("is_attack").get<bool>();
        fn(std::move(s));
    });
}

std::vector<corpus::BlockEvent> read_moderation(const std::string& path, ReadStats* stats) {
    std::vector<corpus::BlockEvent> events;
    for_each_line(path, stats, [&](const json& j) {
        corpus::BlockEvent ev;
        ev.user_id = j.at("user_id").get<std::string>();
        ev.timestamp = parse_utc(j.at("timestamp").get<std::string>());
        ev.kind = corpus::event_kind_from_string(j.at("kind").get<std::string>());
        events.push_back(std::move(ev));
    });
    return events;
}

void write_moderation(const std::string& path, const std::vector<corpus::BlockEvent>& events) {
    std::ofstream out = open_out(path);
    for (const corpus::BlockEvent& ev : events) {
        out << json{{"user_id", ev.user_id},
                    {"timestamp", format_utc(ev.timestamp)},
                    {"kind", corpus::to_string(ev.kind)}}
                   .dump()
            << "\n";
    }
}

std::vector<labels::LabelDistribution> read_labels(const std::string& path, ReadStats* stats) {
    std::vector<labels::LabelDistribution> out;
    for_each_line(path, stats, [&](const json& j) {
        labels::LabelDistribution d;
        d.comment_id = j.at("comment_id").get<std::string>();
        d.n = j.at("n").get<std::size_t>();
        d.attack_fraction = j.at("attack_fraction").get<double>();
        d.oh_label = j.at("oh_label").get<int>();
        out.push_back(std::move(d));
    });
    return out;
}

void write_labels(const std::string& path, const std::vector<labels::LabelDistribution>& labels) {
    std::ofstream out = open_out(path);
    for (const labels::LabelDistribution& d : labels) {
        out << json{{"comment_id", d.comment_id},
                    {"n", d.n},
                    {"attack_fraction", d.attack_fraction},
                    {"oh_label", d.oh_label}}
                   .dump()
            << "\n";
    }
}

std::map<std::string, labels::Split> read_split(const std::string& path, ReadStats* stats) {
    std::map<std::string, labels::Split> out;
    for_each_line(path, stats, [&](const json& j) {
        out[j.at("comment_id").get<std::string>()] =
            labels::split_from_string(j.at("split").get<std::string>());
    });
    return out;
}

void write_split(const std::string& path, const labels::SplitAssignment& assignment) {
    std::ofstream out = open_out(path);
    for (const auto& [comment_id, split] : assignment.assignment) {
        out << json{{"comment_id", comment_id}, {"split", labels::to_string(split)}}.dump()
            << "\n";
    }
}

std::vector<analytics::ScoredComment> read_scored(const std::string& path, double* threshold,
                                                  ReadStats* stats) {
    std::vector<analytics::ScoredComment> out;
    for_each_line(path, stats, [&](const json& j) {
        analytics::ScoredComment s;
        s.comment = comment_from_json(j);
        s.attack_score = j.at("attack_score").get<double>();
        s.is_attack = j.at("is_attack").get<bool>();
        if (threshold) *threshold = j.at("threshold").get<double>();
        out.push_back(std::move(s));
    });
    return out;
}

void write_scored(const std::string& path, const std::vector<analytics::ScoredComment>& scored,
                  double threshold) {
    std::ofstream out = open_out(path);
    for (const analytics::ScoredComment& s : scored) {
        json j = comment_to_json(s.comment);
        j["attack_score"] = s.attack_score;
        j["is_attack"] = s.is_attack;
        j["threshold"] = threshold;
        out << j.dump() << "\n";
    }
}

std::vector<std::string> read_pattern_file(const std::string& path) {
    std::ifstream in = open_in(path);
    std::vector<std::string> patterns;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        patterns.push_back(line);
    }
    return patterns;
}

}  // namespace toxpipe::jsonl
