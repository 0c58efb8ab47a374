#pragma once

// dq-frame element stamps and the whole-system admittance / impedance
// matrices. Matrix ordering is bus-major with (d, q) inside each bus, so the
// block of bus pair (i, j) sits at rows 2(i-1).., columns 2(j-1)...

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mai/network.hpp"

namespace mai {

/// Series RL impedance in the dq frame: (R + sL) I + omega0 L J.
inline DqBlock dq_series_impedance(double R, double L, double omega0, cdouble s) {
    DqBlock z;
    z << R + s * L, -omega0 * L, omega0 * L, R + s * L;
    return z;
}

struct TransformerStamp {
    DqBlock ii, ij, ji, jj;
};

/// Contribution of a branch with series admittance y behind an ideal
/// transformer of ratio k on the from side.
inline TransformerStamp transformer_stamp(const DqBlock& y, double k) {
    if (k == 0.0 || !std::isfinite(k)) throw InputError("degenerate transformer ratio k = 0");
    return {y / (k * k), -y / k, -y / k, y};
}

inline void add_block(CMatrix& m, int bus_i, int bus_j, const DqBlock& b) {
    m.block<2, 2>(2 * (bus_i - 1), 2 * (bus_j - 1)) += b;
}

inline DqBlock get_block(const CMatrix& m, int bus_i, int bus_j) {
    if (bus_i == 0 || bus_j == 0) return DqBlock::Zero();  // ground
    return m.block<2, 2>(2 * (bus_i - 1), 2 * (bus_j - 1));
}

namespace detail {

inline cdouble polyval(const std::vector<double>& c, cdouble s) {
    cdouble acc = 0.0;
    for (double v : c) acc = acc * s + v;
    return acc;
}

inline cdouble polyder_val(const std::vector<double>& c, cdouble s) {
    cdouble acc = 0.0;
    const auto n = c.size();
    for (std::size_t i = 0; i + 1 < n; ++i) acc = acc * s + c[i] * double(n - 1 - i);
    return acc;
}

inline DqBlock rotate(const DqBlock& local, double theta) {
    const DqBlock t = frame_rotation(theta).cast<cdouble>();
    return t * local * t.transpose();
}

inline DqBlock sampled_value(const SampledResponse& sr, cdouble s) {
    const double tol = 1e-12 * std::max(1.0, std::abs(s));
    if (std::abs(s.real()) > tol)
        throw ExtrapolationError("sampled apparatus response can only be evaluated on the imaginary axis");
    double w = s.imag();
    const bool mirror = w < 0.0;
    w = std::abs(w);
    const auto& v = sr.samples;
    if (v.empty() || w < v.front().omega || w > v.back().omega)
        throw ExtrapolationError("frequency " + std::to_string(w) + " rad/s outside sampled range [" +
                                 std::to_string(v.empty() ? 0.0 : v.front().omega) + ", " +
                                 std::to_string(v.empty() ? 0.0 : v.back().omega) + "]");
    auto hi = std::lower_bound(v.begin(), v.end(), w,
                               [](const ResponseSample& a, double x) { return a.omega < x; });
    DqBlock out;
    if (hi->omega == w) {
        out = hi->value;
    } else {
        auto lo = hi - 1;
        const double t = (w - lo->omega) / (hi->omega - lo->omega);
        out = (1.0 - t) * lo->value + t * hi->value;
    }
    return mirror ? DqBlock(out.conjugate()) : out;
}

}  // namespace detail

/// Apparatus admittance in the global frame at complex frequency s.
inline DqBlock apparatus_admittance(const ApparatusModel& model, cdouble s, double theta) {
    DqBlock local;
    if (const auto* ss = std::get_if<StateSpaceRealization>(&model)) {
        local = ss->D.cast<cdouble>();
        if (ss->A.rows() > 0) {
            const auto n = ss->A.rows();
            CMatrix m = s * CMatrix::Identity(n, n) - ss->A.cast<cdouble>();
            Eigen::PartialPivLU<CMatrix> lu(m);
            if (!(lu.rcond() > 1e-14))
                throw NumericalError("apparatus resonance: (sI - A) singular at s = (" +
                                     std::to_string(s.real()) + ", " + std::to_string(s.imag()) + ")");
            local += ss->C.cast<cdouble>() * lu.solve(ss->B.cast<cdouble>());
        }
    } else if (const auto* rm = std::get_if<RationalMatrix>(&model)) {
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                const auto den = detail::polyval(rm->entries[r][c].den, s);
                if (den == 0.0) throw NumericalError("apparatus resonance: rational denominator vanishes");
                local(r, c) = detail::polyval(rm->entries[r][c].num, s) / den;
            }
    } else {
        local = detail::sampled_value(std::get<SampledResponse>(model), s);
    }
    return theta == 0.0 ? local : detail::rotate(local, theta);
}

/// d/ds of apparatus_admittance. Not available for sampled models.
inline DqBlock apparatus_admittance_derivative(const ApparatusModel& model, cdouble s, double theta) {
    DqBlock local = DqBlock::Zero();
    if (const auto* ss = std::get_if<StateSpaceRealization>(&model)) {
        if (ss->A.rows() > 0) {
            const auto n = ss->A.rows();
            Eigen::PartialPivLU<CMatrix> lu(s * CMatrix::Identity(n, n) - ss->A.cast<cdouble>());
            const CMatrix x = lu.solve(ss->B.cast<cdouble>());
            local = -ss->C.cast<cdouble>() * lu.solve(x);
        }
    } else if (const auto* rm = std::get_if<RationalMatrix>(&model)) {
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                const auto& e = rm->entries[r][c];
                const auto n = detail::polyval(e.num, s), d = detail::polyval(e.den, s);
                const auto dn = detail::polyder_val(e.num, s), dd = detail::polyder_val(e.den, s);
                local(r, c) = (dn * d - n * dd) / (d * d);
            }
    } else {
        throw ExtrapolationError("sampled apparatus response has no derivative off the sample grid");
    }
    return theta == 0.0 ? local : detail::rotate(local, theta);
}

inline DqBlock shunt_admittance(const ShuntElement& sh, double omega0, cdouble s) {
    const DqBlock j = dq_rotation_generator();
    switch (sh.kind) {
    case ShuntKind::resistive: return DqBlock::Identity() / sh.value;
    case ShuntKind::capacitive: return sh.value * (s * DqBlock::Identity() + omega0 * j);
    case ShuntKind::inductive: return (sh.value * (s * DqBlock::Identity() + omega0 * j)).inverse();
    }
    return DqBlock::Zero();
}

inline DqBlock shunt_admittance_derivative(const ShuntElement& sh, double omega0, cdouble s) {
    switch (sh.kind) {
    case ShuntKind::resistive: return DqBlock::Zero();
    case ShuntKind::capacitive: return sh.value * DqBlock::Identity();
    case ShuntKind::inductive: {
        const DqBlock y = shunt_admittance(sh, omega0, s);
        return -sh.value * y * y;
    }
    }
    return DqBlock::Zero();
}

/// Series admittance of a branch (secondary side for transformers).
inline DqBlock branch_admittance(const SeriesBranch& b, double omega0, cdouble s) {
    return dq_series_impedance(b.R, b.L, omega0, s).inverse();
}

inline DqBlock branch_admittance_derivative(const SeriesBranch& b, double omega0, cdouble s) {
    const DqBlock y = branch_admittance(b, omega0, s);
    return -b.L * y * y;
}

/// Y_N(s): all branch stamps plus shunt admittances on the diagonal.
inline CMatrix assemble_nodal_admittance(const NetworkDescription& net, cdouble s) {
    const auto dim = 2 * net.n_buses;
    CMatrix y = CMatrix::Zero(dim, dim);
    for (std::size_t i = 0; i < net.branches.size(); ++i) {
        const auto& b = net.branches[i];
        TransformerStamp st;
        try {
            st = transformer_stamp(branch_admittance(b, net.omega0, s), b.ratio);
        } catch (const std::exception& e) {
            throw InputError(branch_label(net, i) + ": " + e.what());
        }
        add_block(y, b.from, b.from, st.ii);
        add_block(y, b.from, b.to, st.ij);
        add_block(y, b.to, b.from, st.ji);
        add_block(y, b.to, b.to, st.jj);
    }
    for (const auto& sh : net.shunts) add_block(y, sh.bus, sh.bus, shunt_admittance(sh, net.omega0, s));
    return y;
}

enum class ElementKind { apparatus, shunt, branch };

/// Handle to one element of a network (index into the matching list).
struct ElementRef {
    ElementKind kind = ElementKind::branch;
    std::size_t index = 0;

    bool operator==(const ElementRef&) const = default;
};

/// Where an element sits in the admittance matrix. Bus 0 denotes ground.
struct Location {
    enum class Kind { node, branch, transformer };
    Kind kind = Kind::node;
    int i = 0;
    int j = 0;
    double k = 1.0;
};

inline std::vector<ElementRef> network_elements(const NetworkDescription& net) {
    std::vector<ElementRef> out;
    for (std::size_t i = 0; i < net.apparatus.size(); ++i) out.push_back({ElementKind::apparatus, i});
    for (std::size_t i = 0; i < net.shunts.size(); ++i) out.push_back({ElementKind::shunt, i});
    for (std::size_t i = 0; i < net.branches.size(); ++i) out.push_back({ElementKind::branch, i});
    return out;
}

inline std::string element_label(const NetworkDescription& net, ElementRef e) {
    switch (e.kind) {
    case ElementKind::apparatus: return apparatus_label(net, e.index);
    case ElementKind::shunt: return shunt_label(net, e.index);
    case ElementKind::branch: return branch_label(net, e.index);
    }
    return "?";
}

inline Location element_location(const NetworkDescription& net, ElementRef e) {
    switch (e.kind) {
    case ElementKind::apparatus: return {Location::Kind::node, net.apparatus.at(e.index).bus, 0, 1.0};
    case ElementKind::shunt: return {Location::Kind::node, net.shunts.at(e.index).bus, 0, 1.0};
    case ElementKind::branch: {
        const auto& b = net.branches.at(e.index);
        if (b.kind == BranchKind::transformer)
            return {Location::Kind::transformer, b.from, b.to, b.ratio};
        return {Location::Kind::branch, b.from, b.to, 1.0};
    }
    }
    return {};
}

struct SystemMatrices {
    CMatrix Y;
    CMatrix Z;
};

/// Evaluator for Y_N(s), Y_G(s), Y(s) and Z(s) of one network. Optional
/// per-element admittance multipliers support perturbation re-solves.
class WholeSystemModel {
public:
    explicit WholeSystemModel(NetworkDescription net) : net_(std::move(net)) {
        require_valid(net_);
        apparatus_scale_.assign(net_.apparatus.size(), 1.0);
        shunt_scale_.assign(net_.shunts.size(), 1.0);
        branch_scale_.assign(net_.branches.size(), 1.0);
    }

    const NetworkDescription& network() const { return net_; }
    Eigen::Index dimension() const { return 2 * net_.n_buses; }

    bool off_axis_capable() const {
        return std::none_of(net_.apparatus.begin(), net_.apparatus.end(), [](const auto& a) {
            return std::holds_alternative<SampledResponse>(a.model);
        });
    }

    std::vector<ElementRef> elements() const { return network_elements(net_); }

    /// Copy with one element's admittance multiplied by `factor`.
    WholeSystemModel with_scale(ElementRef e, double factor) const {
        WholeSystemModel out = *this;
        out.scale_of(e) *= factor;
        return out;
    }

    /// Admittance block of a single element (unscaled, series admittance for branches).
    DqBlock element_admittance(ElementRef e, cdouble s) const {
        switch (e.kind) {
        case ElementKind::apparatus: {
            const auto& a = net_.apparatus.at(e.index);
            return apparatus_admittance(a.model, s, a.theta);
        }
        case ElementKind::shunt: return shunt_admittance(net_.shunts.at(e.index), net_.omega0, s);
        case ElementKind::branch: return branch_admittance(net_.branches.at(e.index), net_.omega0, s);
        }
        return DqBlock::Zero();
    }

    CMatrix nodal_admittance(cdouble s) const { return assemble(s, false, true); }
    CMatrix apparatus_admittance_matrix(cdouble s) const { return assemble(s, true, false); }
    CMatrix admittance(cdouble s) const { return assemble(s, true, true); }

    /// d Y / d s, analytic for every element kind except sampled apparatus.
    CMatrix admittance_derivative(cdouble s) const {
        CMatrix d = CMatrix::Zero(dimension(), dimension());
        for (std::size_t i = 0; i < net_.apparatus.size(); ++i) {
            const auto& a = net_.apparatus[i];
            add_block(d, a.bus, a.bus, apparatus_scale_[i] * apparatus_admittance_derivative(a.model, s, a.theta));
        }
        for (std::size_t i = 0; i < net_.shunts.size(); ++i) {
            const auto& sh = net_.shunts[i];
            add_block(d, sh.bus, sh.bus, shunt_scale_[i] * shunt_admittance_derivative(sh, net_.omega0, s));
        }
        for (std::size_t i = 0; i < net_.branches.size(); ++i) {
            const auto& b = net_.branches[i];
            stamp_branch(d, b, branch_scale_[i] * branch_admittance_derivative(b, net_.omega0, s));
        }
        return d;
    }

    /// Z(s) = Y(s)^{-1}; throws SingularMatrixError at (or numerically at) a mode.
    CMatrix impedance(cdouble s) const { return invert(admittance(s)); }

    /// Z(s) through the closed-loop form (I + Z_N Y_G)^{-1} Z_N.
    CMatrix impedance_closed_loop(cdouble s) const {
        const CMatrix zn = invert(nodal_admittance(s));
        const CMatrix loop = CMatrix::Identity(dimension(), dimension()) + zn * apparatus_admittance_matrix(s);
        return invert(loop) * zn;
    }

    /// 2-norm condition number of Y(s).
    double condition_number(cdouble s) const {
        SquareSvd svd(admittance(s));
        const auto& sv = svd.singularValues();
        return sv(sv.size() - 1) == 0.0 ? std::numeric_limits<double>::infinity()
                                        : sv(0) / sv(sv.size() - 1);
    }

    static CMatrix invert(const CMatrix& m) {
        Eigen::PartialPivLU<CMatrix> lu(m);
        const double rc = lu.rcond();
        if (!(rc > 1e-13)) throw SingularMatrixError("whole-system admittance is singular", rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity());
        return lu.inverse();
    }

private:
    double& scale_of(ElementRef e) {
        switch (e.kind) {
        case ElementKind::apparatus: return apparatus_scale_.at(e.index);
        case ElementKind::shunt: return shunt_scale_.at(e.index);
        case ElementKind::branch: break;
        }
        return branch_scale_.at(e.index);
    }

    static void stamp_branch(CMatrix& m, const SeriesBranch& b, const DqBlock& y) {
        const auto st = transformer_stamp(y, b.ratio);
        add_block(m, b.from, b.from, st.ii);
        add_block(m, b.from, b.to, st.ij);
        add_block(m, b.to, b.from, st.ji);
        add_block(m, b.to, b.to, st.jj);
    }

    CMatrix assemble(cdouble s, bool with_apparatus, bool with_network) const {
        CMatrix y = CMatrix::Zero(dimension(), dimension());
        if (with_apparatus)
            for (std::size_t i = 0; i < net_.apparatus.size(); ++i) {
                const auto& a = net_.apparatus[i];
                add_block(y, a.bus, a.bus, apparatus_scale_[i] * apparatus_admittance(a.model, s, a.theta));
            }
        if (with_network) {
            for (std::size_t i = 0; i < net_.shunts.size(); ++i) {
                const auto& sh = net_.shunts[i];
                add_block(y, sh.bus, sh.bus, shunt_scale_[i] * shunt_admittance(sh, net_.omega0, s));
            }
            for (std::size_t i = 0; i < net_.branches.size(); ++i) {
                const auto& b = net_.branches[i];
                stamp_branch(y, b, branch_scale_[i] * branch_admittance(b, net_.omega0, s));
            }
        }
        return y;
    }

    NetworkDescription net_;
    std::vector<double> apparatus_scale_;
    std::vector<double> shunt_scale_;
    std::vector<double> branch_scale_;
};

/// Y(s) = Y_G(s) + Y_N(s) and Z(s) = Y(s)^{-1}.
inline SystemMatrices whole_system_matrices(const NetworkDescription& net, cdouble s) {
    WholeSystemModel m(net);
    SystemMatrices out;
    out.Y = m.admittance(s);
    out.Z = WholeSystemModel::invert(out.Y);
    return out;
}

}  // namespace mai
