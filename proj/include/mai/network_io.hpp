#pragma once

// Reading and writing network-description files (JSON) and sampled
// frequency-response CSV files.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mai/network.hpp"

namespace mai {

/// One row of a response CSV: frequency and an m x m complex matrix.
struct MatrixSample {
    double omega = 0.0;
    CMatrix value;
};

namespace detail {

using nlohmann::json;

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw InputError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw InputError(where + ": unknown field '" + it.key() + "'");
    }
}

inline const json& need(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw InputError(where + ": missing field '" + key + "'");
    return *it;
}

inline double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw InputError(where + ": expected a number");
    return v.get<double>();
}

inline int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw InputError(where + ": expected an integer");
    return v.get<int>();
}

inline std::string as_string(const json& v, const std::string& where) {
    if (!v.is_string()) throw InputError(where + ": expected a string");
    return v.get<std::string>();
}

/// Row-major nested array -> matrix. `[]` is accepted as an empty matrix with
/// `empty_rows` rows (so a 2 x 0 output matrix can be written as `[]`).
inline RMatrix as_matrix(const json& v, const std::string& where, Eigen::Index empty_rows = 0) {
    if (!v.is_array()) throw InputError(where + ": expected an array of rows");
    if (v.empty()) return RMatrix(empty_rows, 0);
    const auto rows = static_cast<Eigen::Index>(v.size());
    Eigen::Index cols = -1;
    RMatrix m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = v[static_cast<std::size_t>(r)];
        if (!row.is_array()) throw InputError(where + ": expected an array of rows");
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(row.size());
            m.resize(rows, cols);
        } else if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw InputError(where + ": ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = as_number(row[static_cast<std::size_t>(c)],
                                where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    return m;
}

inline std::vector<double> as_coeffs(const json& v, const std::string& where) {
    if (!v.is_array()) throw InputError(where + ": expected an array of coefficients");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

inline json matrix_json(const RMatrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline bool parse_double(const std::string& text, double& out) {
    std::size_t pos = 0;
    auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos) return false;
    try {
        out = std::stod(text.substr(first), &pos);
    } catch (const std::exception&) {
        return false;
    }
    auto rest = text.substr(first + pos);
    return rest.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

/// Parses a response CSV: `omega, re(e11), im(e11), re(e12), ...` with the
/// matrix entries row-major. A leading non-numeric header line and `#`
/// comment lines are skipped. The matrix size m is inferred from the column
/// count (1 + 2 m^2).
inline std::vector<MatrixSample> read_response_csv(std::istream& in, const std::string& source) {
    std::vector<MatrixSample> out;
    std::string line;
    std::size_t lineno = 0;
    Eigen::Index m = -1;
    bool first_data = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = detail::split_csv_line(line);
        double omega = 0.0;
        if (!detail::parse_double(cells[0], omega)) {
            if (first_data) {
                first_data = false;
                continue;  // header
            }
            throw InputError(source + ":" + std::to_string(lineno) + ": non-numeric frequency");
        }
        first_data = false;
        const auto entries = (static_cast<Eigen::Index>(cells.size()) - 1) / 2;
        const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(double(entries))));
        if ((cells.size() - 1) % 2 != 0 || side * side != entries || side == 0)
            throw InputError(source + ":" + std::to_string(lineno) +
                             ": expected 1 + 2*m^2 columns, got " + std::to_string(cells.size()));
        if (m < 0) m = side;
        if (side != m)
            throw InputError(source + ":" + std::to_string(lineno) + ": inconsistent column count");
        MatrixSample s{omega, CMatrix(m, m)};
        for (Eigen::Index e = 0; e < entries; ++e) {
            double re = 0.0, im = 0.0;
            if (!detail::parse_double(cells[1 + 2 * e], re) ||
                !detail::parse_double(cells[2 + 2 * e], im))
                throw InputError(source + ":" + std::to_string(lineno) + ": bad number in column " +
                                 std::to_string(2 + 2 * e));
            s.value(e / m, e % m) = cdouble(re, im);
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<MatrixSample> read_response_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open response file " + path.string());
    return read_response_csv(in, path.string());
}

inline void write_response_csv(std::ostream& out, const std::vector<MatrixSample>& samples) {
    if (samples.empty()) return;
    const auto m = samples.front().value.rows();
    out << "omega";
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c < m; ++c)
            out << ",re_" << r + 1 << "_" << c + 1 << ",im_" << r + 1 << "_" << c + 1;
    out << '\n' << std::setprecision(17);
    for (const auto& s : samples) {
        out << s.omega;
        for (Eigen::Index r = 0; r < m; ++r)
            for (Eigen::Index c = 0; c < m; ++c)
                out << ',' << s.value(r, c).real() << ',' << s.value(r, c).imag();
        out << '\n';
    }
}

namespace detail {

inline ApparatusModel parse_model(const json& j, const std::string& where,
                                  const std::filesystem::path& base_dir) {
    const auto kind = as_string(need(j, "kind", where), where + ".kind");
    if (kind == "state_space") {
        check_keys(j, where, {"kind", "A", "B", "C", "D"});
        StateSpaceRealization ss;
        ss.A = as_matrix(need(j, "A", where), where + ".A");
        ss.B = as_matrix(need(j, "B", where), where + ".B", ss.A.rows());
        ss.C = as_matrix(need(j, "C", where), where + ".C", 2);
        if (ss.C.cols() == 0 && ss.C.rows() == 0) ss.C.resize(2, 0);
        ss.D = as_matrix(need(j, "D", where), where + ".D");
        if (ss.B.rows() == 0 && ss.A.rows() == 0) ss.B.resize(0, 2);
        return ss;
    }
    if (kind == "rational") {
        check_keys(j, where, {"kind", "entries"});
        const auto& e = need(j, "entries", where);
        if (!e.is_array() || e.size() != 2 || !e[0].is_array() || e[0].size() != 2 ||
            !e[1].is_array() || e[1].size() != 2)
            throw InputError(where + ".entries: expected a 2x2 array");
        RationalMatrix rm;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                const auto w = where + ".entries[" + std::to_string(r) + "][" + std::to_string(c) + "]";
                const auto& cell = e[r][c];
                check_keys(cell, w, {"num", "den"});
                rm.entries[r][c].num = as_coeffs(need(cell, "num", w), w + ".num");
                rm.entries[r][c].den = as_coeffs(need(cell, "den", w), w + ".den");
            }
        return rm;
    }
    if (kind == "samples") {
        check_keys(j, where, {"kind", "path"});
        SampledResponse sr;
        sr.path = as_string(need(j, "path", where), where + ".path");
        std::filesystem::path p(sr.path);
        if (p.is_relative()) p = base_dir / p;
        for (auto& s : read_response_csv(p)) {
            if (s.value.rows() != 2)
                throw InputError(where + ": sample file must hold 2x2 blocks");
            sr.samples.push_back({s.omega, DqBlock(s.value)});
        }
        return sr;
    }
    throw InputError(where + ".kind: unknown model kind '" + kind + "'");
}

}  // namespace detail

/// Parses and validates a network description. Relative sample paths are
/// resolved against `base_dir`.
inline NetworkDescription parse_network(const std::string& text,
                                        const std::filesystem::path& base_dir = {}) {
    using detail::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError("syntax error at " + detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1) +
                         ": " + e.what());
    }
    detail::check_keys(doc, "network", {"n_buses", "omega0", "branches", "shunts", "apparatus"});
    NetworkDescription net;
    net.n_buses = detail::as_int(detail::need(doc, "n_buses", "network"), "n_buses");
    net.omega0 = detail::as_number(detail::need(doc, "omega0", "network"), "omega0");

    auto array_of = [&](const char* key) -> json {
        auto it = doc.find(key);
        if (it == doc.end()) return json::array();
        if (!it->is_array()) throw InputError(std::string(key) + ": expected an array");
        return *it;
    };

    const auto branches = array_of("branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto w = "branches[" + std::to_string(i) + "]";
        const auto& b = branches[i];
        detail::check_keys(b, w, {"kind", "from", "to", "R", "L", "ratio", "name"});
        SeriesBranch br;
        const auto kind = detail::as_string(detail::need(b, "kind", w), w + ".kind");
        if (kind == "line")
            br.kind = BranchKind::line;
        else if (kind == "transformer")
            br.kind = BranchKind::transformer;
        else
            throw InputError(w + ".kind: unknown branch kind '" + kind + "'");
        br.from = detail::as_int(detail::need(b, "from", w), w + ".from");
        br.to = detail::as_int(detail::need(b, "to", w), w + ".to");
        br.R = detail::as_number(detail::need(b, "R", w), w + ".R");
        br.L = detail::as_number(detail::need(b, "L", w), w + ".L");
        if (b.contains("ratio")) {
            if (br.kind == BranchKind::line)
                throw InputError(w + ": 'ratio' is only allowed on transformer branches");
            br.ratio = detail::as_number(b["ratio"], w + ".ratio");
        } else if (br.kind == BranchKind::transformer) {
            throw InputError(w + ": transformer branch needs 'ratio'");
        }
        if (b.contains("name")) br.name = detail::as_string(b["name"], w + ".name");
        net.branches.push_back(br);
    }

    const auto shunts = array_of("shunts");
    for (std::size_t i = 0; i < shunts.size(); ++i) {
        const auto w = "shunts[" + std::to_string(i) + "]";
        const auto& s = shunts[i];
        detail::check_keys(s, w, {"bus", "kind", "value", "name"});
        ShuntElement sh;
        sh.bus = detail::as_int(detail::need(s, "bus", w), w + ".bus");
        const auto kind = detail::as_string(detail::need(s, "kind", w), w + ".kind");
        if (kind == "resistive")
            sh.kind = ShuntKind::resistive;
        else if (kind == "inductive")
            sh.kind = ShuntKind::inductive;
        else if (kind == "capacitive")
            sh.kind = ShuntKind::capacitive;
        else
            throw InputError(w + ".kind: unknown shunt kind '" + kind + "'");
        sh.value = detail::as_number(detail::need(s, "value", w), w + ".value");
        if (s.contains("name")) sh.name = detail::as_string(s["name"], w + ".name");
        net.shunts.push_back(sh);
    }

    const auto apparatus = array_of("apparatus");
    for (std::size_t i = 0; i < apparatus.size(); ++i) {
        const auto w = "apparatus[" + std::to_string(i) + "]";
        const auto& a = apparatus[i];
        detail::check_keys(a, w, {"bus", "theta", "model", "name"});
        ApparatusAttachment att;
        att.bus = detail::as_int(detail::need(a, "bus", w), w + ".bus");
        att.theta = a.contains("theta") ? detail::as_number(a["theta"], w + ".theta") : 0.0;
        att.model = detail::parse_model(detail::need(a, "model", w), w + ".model", base_dir);
        if (a.contains("name")) att.name = detail::as_string(a["name"], w + ".name");
        net.apparatus.push_back(std::move(att));
    }

    require_valid(net);
    return net;
}

inline NetworkDescription load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open network file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str(), path.parent_path());
}

/// Writes a description back to JSON text. Sampled models keep their path.
inline std::string serialize_network(const NetworkDescription& net) {
    using detail::json;
    json doc;
    doc["n_buses"] = net.n_buses;
    doc["omega0"] = net.omega0;
    doc["branches"] = json::array();
    for (const auto& b : net.branches) {
        json j{{"kind", to_string(b.kind)}, {"from", b.from}, {"to", b.to}, {"R", b.R}, {"L", b.L}};
        if (b.kind == BranchKind::transformer) j["ratio"] = b.ratio;
        if (!b.name.empty()) j["name"] = b.name;
        doc["branches"].push_back(j);
    }
    doc["shunts"] = json::array();
    for (const auto& s : net.shunts) {
        json j{{"bus", s.bus}, {"kind", to_string(s.kind)}, {"value", s.value}};
        if (!s.name.empty()) j["name"] = s.name;
        doc["shunts"].push_back(j);
    }
    doc["apparatus"] = json::array();
    for (const auto& a : net.apparatus) {
        json j{{"bus", a.bus}, {"theta", a.theta}};
        if (const auto* ss = std::get_if<StateSpaceRealization>(&a.model)) {
            j["model"] = json{{"kind", "state_space"},
                              {"A", detail::matrix_json(ss->A)},
                              {"B", detail::matrix_json(ss->B)},
                              {"C", detail::matrix_json(ss->C)},
                              {"D", detail::matrix_json(ss->D)}};
        } else if (const auto* rm = std::get_if<RationalMatrix>(&a.model)) {
            json entries = json::array();
            for (int r = 0; r < 2; ++r) {
                json row = json::array();
                for (int c = 0; c < 2; ++c)
                    row.push_back(json{{"num", rm->entries[r][c].num}, {"den", rm->entries[r][c].den}});
                entries.push_back(row);
            }
            j["model"] = json{{"kind", "rational"}, {"entries", entries}};
        } else {
            j["model"] = json{{"kind", "samples"}, {"path", std::get<SampledResponse>(a.model).path}};
        }
        if (!a.name.empty()) j["name"] = a.name;
        doc["apparatus"].push_back(j);
    }
    return doc.dump(2);
}

}  // namespace mai
