#include "merf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace merf {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(std::move(cur));
    }
    return lines;
}

double parse_double(const std::string& s, const std::string& what, std::size_t row) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw std::runtime_error("row " + std::to_string(row) + ": non-numeric " + what + " '" + s + "'");
    return v;
}

int parse_visit(const std::string& s, std::size_t row) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 0)
        throw std::runtime_error("row " + std::to_string(row) + ": invalid visit '" + s + "'");
    return v;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<ClusterMeta> parse_meta_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines[0] != "cluster_id,screen_score")
        throw std::runtime_error("malformed metadata header: expected 'cluster_id,screen_score'");
    std::vector<ClusterMeta> meta;
    std::set<std::string> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto f = split_fields(lines[r]);
        if (f.size() != 2)
            throw std::runtime_error("metadata row " + std::to_string(r) + ": expected 2 fields");
        if (!seen.insert(f[0]).second)
            throw std::runtime_error("metadata: duplicate cluster_id '" + f[0] + "'");
        ClusterMeta m;
        m.cluster_id = f[0];
        if (!f[1].empty() && f[1] != "NA") m.screen_score = parse_double(f[1], "screen_score", r);
        meta.push_back(std::move(m));
    }
    return meta;
}

}  // namespace

void LongitudinalDataset::validate() const {
    for (const auto& o : observations) {
        if (o.features.size() != p)
            throw std::runtime_error("dataset: observation in cluster '" + o.cluster_id +
                                     "' has " + std::to_string(o.features.size()) +
                                     " features, expected " + std::to_string(p));
        if (o.visit_index < 0) throw std::runtime_error("dataset: negative visit_index");
        if (target_range && o.target &&
            (*o.target < target_range->first || *o.target > target_range->second))
            throw std::runtime_error("dataset: target " + format_double(*o.target) +
                                     " outside declared range");
    }
    // visit uniqueness per cluster
    std::set<std::pair<std::string, int>> seen;
    for (const auto& o : observations) {
        if (!seen.insert({o.cluster_id, o.visit_index}).second)
            throw std::runtime_error("dataset: duplicate visit " + std::to_string(o.visit_index) +
                                     " in cluster '" + o.cluster_id + "'");
    }
    if (!cluster_meta.empty()) {
        std::set<std::string> meta_ids;
        for (const auto& m : cluster_meta) {
            if (!meta_ids.insert(m.cluster_id).second)
                throw std::runtime_error("dataset: duplicate cluster_id '" + m.cluster_id +
                                         "' in metadata");
        }
        for (const auto& o : observations) {
            if (!meta_ids.count(o.cluster_id))
                throw std::runtime_error("dataset: cluster '" + o.cluster_id +
                                         "' missing from metadata");
        }
    }
}

std::optional<double> LongitudinalDataset::screen_score_for(const std::string& cluster_id) const {
    for (const auto& m : cluster_meta)
        if (m.cluster_id == cluster_id) return m.screen_score;
    return std::nullopt;
}

LongitudinalDataset parse_csv(const std::string& obs_text,
                              const std::optional<std::string>& meta_text) {
    const auto lines = split_lines(obs_text);
    if (lines.empty()) throw std::runtime_error("malformed header: empty file");
    const auto header = split_fields(lines[0]);
    if (header.size() < 4 || header[0] != "cluster_id" || header[1] != "visit" ||
        header[2] != "target")
        throw std::runtime_error(
            "malformed header: expected 'cluster_id,visit,target,f0,...'");
    const std::size_t p = header.size() - 3;
    for (std::size_t j = 0; j < p; ++j) {
        if (header[3 + j] != "f" + std::to_string(j))
            throw std::runtime_error("malformed header: feature column " + std::to_string(j) +
                                     " must be named f" + std::to_string(j));
    }

    LongitudinalDataset ds;
    ds.p = p;
    std::size_t row = 0;  // 1-based data row number, header excluded
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        ++row;
        const auto f = split_fields(lines[li]);
        if (f.size() != header.size())
            throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                                     std::to_string(p) + " features");
        Observation o;
        o.cluster_id = f[0];
        o.visit_index = parse_visit(f[1], row);
        if (!f[2].empty()) o.target = parse_double(f[2], "target", row);
        o.features.reserve(p);
        for (std::size_t j = 0; j < p; ++j) {
            const std::string& cell = f[3 + j];
            if (cell.empty() || cell == "NA")
                o.features.emplace_back(std::nullopt);
            else
                o.features.emplace_back(parse_double(cell, "feature f" + std::to_string(j), row));
        }
        ds.observations.push_back(std::move(o));
    }

    if (meta_text) ds.cluster_meta = parse_meta_csv(*meta_text);
    ds.validate();
    return ds;
}

LongitudinalDataset load_csv(const std::string& obs_path,
                             const std::optional<std::string>& meta_path) {
    std::optional<std::string> meta_text;
    if (meta_path) meta_text = read_file(*meta_path);
    return parse_csv(read_file(obs_path), meta_text);
}

std::string to_csv(const LongitudinalDataset& ds) {
    std::string out = "cluster_id,visit,target";
    for (std::size_t j = 0; j < ds.p; ++j) out += ",f" + std::to_string(j);
    out += '\n';
    for (const auto& o : ds.observations) {
        out += o.cluster_id;
        out += ',';
        out += std::to_string(o.visit_index);
        out += ',';
        if (o.target) out += format_double(*o.target);
        for (const auto& cell : o.features) {
            out += ',';
            if (cell) out += format_double(*cell);
        }
        out += '\n';
    }
    return out;
}

std::string meta_to_csv(const LongitudinalDataset& ds) {
    std::string out = "cluster_id,screen_score\n";
    for (const auto& m : ds.cluster_meta) {
        out += m.cluster_id;
        out += ',';
        if (m.screen_score) out += format_double(*m.screen_score);
        out += '\n';
    }
    return out;
}

void save_csv(const LongitudinalDataset& ds, const std::string& obs_path,
              const std::optional<std::string>& meta_path) {
    {
        std::ofstream out(obs_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write file: " + obs_path);
        out << to_csv(ds);
    }
    if (meta_path) {
        std::ofstream out(*meta_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write file: " + *meta_path);
        out << meta_to_csv(ds);
    }
}

LongitudinalDataset impute_missing(LongitudinalDataset ds, double sentinel) {
    for (auto& o : ds.observations)
        for (auto& cell : o.features)
            if (!cell) cell = sentinel;
    return ds;
}

LongitudinalDataset filter_labeled(const LongitudinalDataset& ds) {
    LongitudinalDataset out;
    out.p = ds.p;
    out.cluster_meta = ds.cluster_meta;
    out.target_range = ds.target_range;
    for (const auto& o : ds.observations)
        if (o.target) out.observations.push_back(o);
    if (out.observations.empty()) throw std::runtime_error("no labelled observations");
    return out;
}

std::map<std::string, std::vector<std::size_t>> group_by_cluster(const LongitudinalDataset& ds) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.observations.size(); ++i)
        groups[ds.observations[i].cluster_id].push_back(i);
    for (auto& [id, idx] : groups) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return ds.observations[a].visit_index < ds.observations[b].visit_index;
        });
        for (std::size_t k = 1; k < idx.size(); ++k) {
            if (ds.observations[idx[k]].visit_index == ds.observations[idx[k - 1]].visit_index)
                throw std::runtime_error("duplicate visit " +
                                         std::to_string(ds.observations[idx[k]].visit_index) +
                                         " in cluster '" + id + "'");
        }
    }
    return groups;
}

LongitudinalDataset subset(const LongitudinalDataset& ds, const std::vector<std::size_t>& indices) {
    LongitudinalDataset out;
    out.p = ds.p;
    out.cluster_meta = ds.cluster_meta;
    out.target_range = ds.target_range;
    out.observations.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= ds.observations.size()) throw std::invalid_argument("subset: index out of range");
        out.observations.push_back(ds.observations[i]);
    }
    return out;
}

Matrix feature_matrix(const LongitudinalDataset& ds) {
    Matrix x(ds.observations.size(), ds.p);
    for (std::size_t i = 0; i < ds.observations.size(); ++i) {
        const auto& o = ds.observations[i];
        for (std::size_t j = 0; j < ds.p; ++j) {
            if (!o.features[j])
                throw std::runtime_error(
                    "feature_matrix: missing feature cells present; run impute_missing first");
            x(i, j) = *o.features[j];
        }
    }
    return x;
}

DesignData to_design(const LongitudinalDataset& ds) {
    DesignData d;
    d.x = feature_matrix(ds);
    d.y.reserve(ds.observations.size());
    for (const auto& o : ds.observations) {
        if (!o.target)
            throw std::runtime_error("to_design: unlabelled rows present; run filter_labeled first");
        d.y.push_back(*o.target);
        d.cluster_ids.push_back(o.cluster_id);
        d.visits.push_back(o.visit_index);
    }
    return d;
}

}  // namespace merf
