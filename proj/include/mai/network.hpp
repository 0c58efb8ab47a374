#pragma once

// Network description: buses, series branches, shunts and apparatus
// attachments. All bus numbers are 1-based as they appear in the input file.

#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mai/types.hpp"

namespace mai {

enum class BranchKind { line, transformer };
enum class ShuntKind { resistive, inductive, capacitive };

struct SeriesBranch {
    BranchKind kind = BranchKind::line;
    int from = 0;
    int to = 0;
    double R = 0.0;
    double L = 0.0;
    /// Off-nominal ratio on the from-bus side. Lines always carry 1.
    double ratio = 1.0;
    std::string name;

    bool operator==(const SeriesBranch&) const = default;
};

struct ShuntElement {
    int bus = 0;
    ShuntKind kind = ShuntKind::capacitive;
    double value = 0.0;
    std::string name;

    bool operator==(const ShuntElement&) const = default;
};

/// Linearized apparatus in its local frame: input dq terminal voltage,
/// output dq current drawn from the bus.
struct StateSpaceRealization {
    RMatrix A;
    RMatrix B;
    RMatrix C;
    RMatrix D;

    bool operator==(const StateSpaceRealization& o) const {
        auto same = [](const RMatrix& a, const RMatrix& b) {
            return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
        };
        return same(A, o.A) && same(B, o.B) && same(C, o.C) && same(D, o.D);
    }
};

/// Polynomial coefficients in descending powers of s.
struct RationalEntry {
    std::vector<double> num;
    std::vector<double> den;

    bool operator==(const RationalEntry&) const = default;
};

struct RationalMatrix {
    RationalEntry entries[2][2];

    bool operator==(const RationalMatrix& o) const {
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                if (!(entries[r][c] == o.entries[r][c])) return false;
        return true;
    }
};

struct ResponseSample {
    double omega = 0.0;
    DqBlock value = DqBlock::Zero();

    bool operator==(const ResponseSample&) const = default;
};

struct SampledResponse {
    /// Path as written in the network file (kept for serialization).
    std::string path;
    std::vector<ResponseSample> samples;

    bool operator==(const SampledResponse&) const = default;
};

using ApparatusModel = std::variant<StateSpaceRealization, RationalMatrix, SampledResponse>;

struct ApparatusAttachment {
    int bus = 0;
    double theta = 0.0;
    ApparatusModel model;
    std::string name;

    bool operator==(const ApparatusAttachment&) const = default;
};

struct NetworkDescription {
    int n_buses = 0;
    double omega0 = 0.0;
    std::vector<SeriesBranch> branches;
    std::vector<ShuntElement> shunts;
    std::vector<ApparatusAttachment> apparatus;

    bool operator==(const NetworkDescription&) const = default;

    /// Apparatus attached at `bus`, if any.
    const ApparatusAttachment* apparatus_at(int bus) const {
        for (const auto& a : apparatus)
            if (a.bus == bus) return &a;
        return nullptr;
    }
};

struct Violation {
    std::string element;
    std::string message;

    bool operator==(const Violation&) const = default;
};

inline std::string to_string(BranchKind k) { return k == BranchKind::line ? "line" : "transformer"; }

inline std::string to_string(ShuntKind k) {
    switch (k) {
    case ShuntKind::resistive: return "resistive";
    case ShuntKind::inductive: return "inductive";
    case ShuntKind::capacitive: return "capacitive";
    }
    return "?";
}

inline std::string branch_label(const NetworkDescription& net, std::size_t idx) {
    const auto& b = net.branches[idx];
    return b.name.empty() ? "branches[" + std::to_string(idx) + "]" : b.name;
}

inline std::string shunt_label(const NetworkDescription& net, std::size_t idx) {
    const auto& s = net.shunts[idx];
    return s.name.empty() ? "shunts[" + std::to_string(idx) + "]" : s.name;
}

inline std::string apparatus_label(const NetworkDescription& net, std::size_t idx) {
    const auto& a = net.apparatus[idx];
    return a.name.empty() ? "apparatus[" + std::to_string(idx) + "]" : a.name;
}

namespace detail {

inline void check_model(const ApparatusModel& model, const std::string& who,
                        std::vector<Violation>& out) {
    if (const auto* ss = std::get_if<StateSpaceRealization>(&model)) {
        const auto nx = ss->A.rows();
        if (ss->A.cols() != nx)
            out.push_back({who, "state-space A must be square"});
        if (ss->B.rows() != nx || ss->B.cols() != 2)
            out.push_back({who, "state-space B must be n_x by 2"});
        if (ss->C.rows() != 2 || ss->C.cols() != nx)
            out.push_back({who, "state-space C must be 2 by n_x"});
        if (ss->D.rows() != 2 || ss->D.cols() != 2)
            out.push_back({who, "state-space D must be 2 by 2"});
        auto finite = [](const RMatrix& m) { return m.size() == 0 || m.allFinite(); };
        if (!finite(ss->A) || !finite(ss->B) || !finite(ss->C) || !finite(ss->D))
            out.push_back({who, "state-space matrices must be finite"});
    } else if (const auto* rm = std::get_if<RationalMatrix>(&model)) {
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                const auto& e = rm->entries[r][c];
                bool den_zero = true;
                for (double v : e.den) den_zero = den_zero && v == 0.0;
                if (e.num.empty() || e.den.empty() || den_zero)
                    out.push_back({who, "rational entry (" + std::to_string(r + 1) + "," +
                                            std::to_string(c + 1) +
                                            ") needs a numerator and a nonzero denominator"});
            }
    } else {
        const auto& sr = std::get<SampledResponse>(model);
        if (sr.samples.size() < 2)
            out.push_back({who, "sampled response needs at least 2 samples"});
        for (std::size_t k = 1; k < sr.samples.size(); ++k)
            if (!(sr.samples[k].omega > sr.samples[k - 1].omega)) {
                out.push_back({who, "sample frequencies must be strictly increasing"});
                break;
            }
    }
}

}  // namespace detail

/// Checks every structural invariant. Violations are returned, never thrown.
inline std::vector<Violation> validate(const NetworkDescription& net) {
    std::vector<Violation> out;
    if (net.n_buses < 1) out.push_back({"network", "n_buses must be positive"});
    if (!(net.omega0 > 0.0) || !std::isfinite(net.omega0))
        out.push_back({"network", "omega0 must be positive"});

    auto in_range = [&](int b) { return b >= 1 && b <= net.n_buses; };
    std::vector<int> touched(static_cast<std::size_t>(std::max(net.n_buses, 0)) + 1, 0);

    for (std::size_t i = 0; i < net.branches.size(); ++i) {
        const auto& b = net.branches[i];
        const auto who = branch_label(net, i);
        if (!in_range(b.from) || !in_range(b.to)) {
            out.push_back({who, "bus index out of range [1, " + std::to_string(net.n_buses) + "]"});
        } else {
            touched[b.from] = touched[b.to] = 1;
        }
        if (b.from == b.to) out.push_back({who, "from and to buses must differ"});
        if (!(b.R >= 0.0) || !std::isfinite(b.R)) out.push_back({who, "R must be >= 0"});
        if (!(b.L > 0.0) || !std::isfinite(b.L)) out.push_back({who, "L must be > 0"});
        if (b.ratio == 0.0 || !std::isfinite(b.ratio))
            out.push_back({who, "transformer ratio must be finite and nonzero"});
        if (b.kind == BranchKind::line && b.ratio != 1.0)
            out.push_back({who, "a line has ratio 1; use kind transformer"});
    }
    for (std::size_t i = 0; i < net.shunts.size(); ++i) {
        const auto& s = net.shunts[i];
        const auto who = shunt_label(net, i);
        if (!in_range(s.bus))
            out.push_back({who, "bus index out of range [1, " + std::to_string(net.n_buses) + "]"});
        else
            touched[s.bus] = 1;
        if (!(s.value > 0.0) || !std::isfinite(s.value)) out.push_back({who, "value must be > 0"});
    }
    std::set<int> seen;
    for (std::size_t i = 0; i < net.apparatus.size(); ++i) {
        const auto& a = net.apparatus[i];
        const auto who = apparatus_label(net, i);
        if (!in_range(a.bus))
            out.push_back({who, "bus index out of range [1, " + std::to_string(net.n_buses) + "]"});
        if (!seen.insert(a.bus).second)
            out.push_back({who, "bus " + std::to_string(a.bus) +
                                    " already has an apparatus; the apparatus admittance "
                                    "matrix is block diagonal with one block per bus"});
        if (!(a.theta > -std::numbers::pi && a.theta <= std::numbers::pi))
            out.push_back({who, "theta must lie in (-pi, pi]"});
        detail::check_model(a.model, who, out);
    }
    for (int b = 1; b <= net.n_buses; ++b)
        if (!touched[b])
            out.push_back({"bus " + std::to_string(b), "isolated: no branch or shunt attached"});
    return out;
}

/// Throws InputError listing every violation.
inline void require_valid(const NetworkDescription& net) {
    auto v = validate(net);
    if (v.empty()) return;
    std::string msg = "invalid network:";
    for (const auto& x : v) msg += "\n  " + x.element + ": " + x.message;
    throw InputError(msg);
}

}  // namespace mai
