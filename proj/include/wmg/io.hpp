#pragma once

#include "wmg/graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace wmg {

using json = nlohmann::json;

struct GraphFile {
    WeightedMarkovGraph graph;
    std::optional<Vector> mu;
    std::vector<int> destinations;
};

namespace detail {

inline WeightKind parse_kind(const std::string& s, const std::string& locus) {
    if (s == "deterministic") return WeightKind::deterministic;
    if (s == "lognormal") return WeightKind::lognormal;
    if (s == "gamma") return WeightKind::gamma;
    throw ParseError(locus, "unknown dist \"" + s + "\"");
}

inline double number_field(const json& obj, const char* key, const std::string& locus) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(locus, std::string("missing field \"") + key + "\"");
    if (!it->is_number()) throw ParseError(locus, std::string("field \"") + key + "\" must be a number");
    return it->get<double>();
}

inline int int_field(const json& obj, const char* key, const std::string& locus) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(locus, std::string("missing field \"") + key + "\"");
    if (!it->is_number_integer()) throw ParseError(locus, std::string("field \"") + key + "\" must be an integer");
    return it->get<int>();
}

inline WeightDistributionTag make_tag(double cv, std::optional<WeightKind> kind,
                                      const std::string& locus) {
    if (cv < 0.0) throw ParseError(locus, "cv must be nonnegative");
    // A positive cv without an explicit law is sampled as lognormal.
    WeightKind k = kind.value_or(cv > 0.0 ? WeightKind::lognormal : WeightKind::deterministic);
    WeightDistributionTag t{k, cv};
    if (auto err = t.check()) throw ParseError(locus, *err);
    return t;
}

inline void throw_if_invalid(const WeightedMarkovGraph& g) {
    auto report = validate(g);
    if (!report.ok()) throw ValidationError(report.violations);
}

} // namespace detail

/// Parses the JSON graph schema. Throws ParseError (with a locus such as
/// "edges[3]") on schema problems and ValidationError when the graph is not
/// admissible.
inline GraphFile parse_graph_json(const json& doc) {
    if (!doc.is_object()) throw ParseError("", "graph document must be a JSON object");
    const int n = detail::int_field(doc, "n", "");
    if (n < 1) throw ParseError("n", "must be positive");
    auto eit = doc.find("edges");
    if (eit == doc.end() || !eit->is_array()) throw ParseError("edges", "missing edge array");

    std::vector<EdgeSpec> specs;
    for (std::size_t k = 0; k < eit->size(); ++k) {
        const json& e = (*eit)[k];
        std::string locus = "edges[" + std::to_string(k) + "]";
        if (!e.is_object()) throw ParseError(locus, "edge must be an object");
        EdgeSpec s;
        s.from = detail::int_field(e, "from", locus);
        s.to = detail::int_field(e, "to", locus);
        locus += " (" + std::to_string(s.from) + "->" + std::to_string(s.to) + ")";
        if (s.from < 0 || s.from >= n || s.to < 0 || s.to >= n)
            throw ParseError(locus, "node index out of range");
        s.p = detail::number_field(e, "p", locus);
        s.w_mean = detail::number_field(e, "w_mean", locus);
        double cv = e.contains("cv") ? detail::number_field(e, "cv", locus) : 0.0;
        std::optional<WeightKind> kind;
        if (e.contains("dist")) {
            if (!e["dist"].is_string()) throw ParseError(locus, "field \"dist\" must be a string");
            kind = detail::parse_kind(e["dist"].get<std::string>(), locus);
        }
        s.tag = detail::make_tag(cv, kind, locus);
        if (e.contains("w2")) s.w2 = detail::number_field(e, "w2", locus);
        specs.push_back(s);
    }

    GraphFile out;
    try {
        out.graph = make_graph(n, specs);
    } catch (const ParseError&) {
        throw;
    } catch (const Error& ex) {
        throw ParseError("edges", ex.what());
    }
    detail::throw_if_invalid(out.graph);

    if (auto mit = doc.find("mu"); mit != doc.end()) {
        if (!mit->is_array() || static_cast<int>(mit->size()) != n)
            throw ParseError("mu", "must be an array of length n");
        Vector mu(n);
        for (int i = 0; i < n; ++i) {
            if (!(*mit)[i].is_number()) throw ParseError("mu[" + std::to_string(i) + "]", "must be a number");
            mu(i) = (*mit)[i].get<double>();
        }
        out.mu = mu;
    }
    if (auto dit = doc.find("destinations"); dit != doc.end()) {
        if (!dit->is_array()) throw ParseError("destinations", "must be an array");
        for (std::size_t k = 0; k < dit->size(); ++k) {
            const std::string locus = "destinations[" + std::to_string(k) + "]";
            if (!(*dit)[k].is_number_integer()) throw ParseError(locus, "must be an integer");
            const int d = (*dit)[k].get<int>();
            if (d < 0 || d >= n) throw ParseError(locus, "node index out of range");
            out.destinations.push_back(d);
        }
    }
    return out;
}

/// CSV edge list with header `from,to,p,w_mean,cv`; n is the largest index + 1.
inline GraphFile parse_graph_csv(std::istream& in) {
    std::string line;
    int lineno = 0;
    auto locus = [&] { return "line " + std::to_string(lineno); };
    if (!std::getline(in, line)) throw ParseError("line 1", "empty CSV");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "from,to,p,w_mean,cv" && line != "from,to,p,w_mean")
        throw ParseError(locus(), "expected header from,to,p,w_mean,cv");
    std::vector<EdgeSpec> specs;
    int n = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 4 || cells.size() > 5) throw ParseError(locus(), "expected 4 or 5 fields");
        EdgeSpec s;
        try {
            std::size_t used = 0;
            s.from = std::stoi(cells[0], &used);
            s.to = std::stoi(cells[1]);
            s.p = std::stod(cells[2]);
            s.w_mean = std::stod(cells[3]);
            const double cv = cells.size() == 5 && !cells[4].empty() ? std::stod(cells[4]) : 0.0;
            s.tag = detail::make_tag(cv, std::nullopt, locus());
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError(locus(), "malformed number");
        }
        if (s.from < 0 || s.to < 0) throw ParseError(locus(), "negative node index");
        n = std::max({n, s.from + 1, s.to + 1});
        specs.push_back(s);
    }
    GraphFile out;
    try {
        out.graph = make_graph(std::max(n, 1), specs);
    } catch (const Error& ex) {
        throw ParseError("csv", ex.what());
    }
    detail::throw_if_invalid(out.graph);
    return out;
}

inline GraphFile load_graph_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open file");
    if (path.extension() == ".csv") return parse_graph_csv(in);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ParseError(path.string() + " byte " + std::to_string(ex.byte), ex.what());
    }
    return parse_graph_json(doc);
}

inline WeightedMarkovGraph load_graph(const std::filesystem::path& path) {
    return load_graph_file(path).graph;
}

inline json graph_to_json(const WeightedMarkovGraph& g, const std::optional<Vector>& mu = std::nullopt,
                          const std::vector<int>& destinations = {}) {
    json doc;
    doc["n"] = g.n();
    json edges = json::array();
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        const auto [i, j] = g.edges()[k];
        const auto& t = g.tags()[k];
        json e;
        e["from"] = i;
        e["to"] = j;
        e["p"] = g.P()(i, j);
        e["w_mean"] = g.W()(i, j);
        e["cv"] = t.cv;
        e["dist"] = to_string(t.kind);
        e["w2"] = g.W2()(i, j);
        edges.push_back(std::move(e));
    }
    doc["edges"] = std::move(edges);
    if (mu) doc["mu"] = std::vector<double>(mu->data(), mu->data() + mu->size());
    if (!destinations.empty()) doc["destinations"] = destinations;
    return doc;
}

/// Writes to a temporary sibling and renames into place, so readers never
/// observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void save_graph(const std::filesystem::path& path, const WeightedMarkovGraph& g,
                       const std::optional<Vector>& mu = std::nullopt,
                       const std::vector<int>& destinations = {}) {
    write_file_atomic(path, graph_to_json(g, mu, destinations).dump(2) + "\n");
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json vector_to_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

} // namespace wmg
