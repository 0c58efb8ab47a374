#pragma once

// State-space modal analysis: eigen-structure, participation factors,
// eigenvalue sensitivities, resolvent residues, and the interconnection of a
// network whose elements all carry realizations. This is the reference the
// impedance-based results are checked against.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "mai/assembly.hpp"

namespace mai {

struct StateSpaceModel {
    RMatrix A, B, C, D;
    std::vector<std::string> state_names;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;

    Eigen::Index n_states() const { return A.rows(); }
    Eigen::Index n_inputs() const { return B.cols(); }
    Eigen::Index n_outputs() const { return C.rows(); }

    void check() const {
        const auto n = A.rows();
        if (A.cols() != n || B.rows() != n || C.cols() != n || D.rows() != C.rows() ||
            D.cols() != B.cols())
            throw InputError("state-space model dimensions are inconsistent");
        auto unique = [](const std::vector<std::string>& v) {
            return std::set<std::string>(v.begin(), v.end()).size() == v.size();
        };
        if (!unique(state_names) || !unique(input_names) || !unique(output_names))
            throw InputError("state-space name lists must be unique");
    }
};

/// Eigenvalues with right eigenvectors (columns of phi) and left
/// eigenvectors (rows of psi = phi^{-1}).
struct EigenStructure {
    CVector values;
    CMatrix phi;
    CMatrix psi;
    double matrix_norm = 0.0;

    Eigen::Index size() const { return values.size(); }
};

struct PortSelection {
    std::vector<Eigen::Index> inputs;   // columns of B
    std::vector<Eigen::Index> outputs;  // rows of C
};

inline EigenStructure eigendecompose(const RMatrix& A) {
    if (A.rows() != A.cols()) throw InputError("eigendecompose: matrix must be square");
    EigenStructure out;
    out.matrix_norm = A.norm();
    if (A.rows() == 0) return out;
    Eigen::EigenSolver<RMatrix> es(A, true);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecompose: eigen solver failed");
    out.values = es.eigenvalues();
    out.phi = es.eigenvectors();
    for (Eigen::Index c = 0; c < out.phi.cols(); ++c) out.phi.col(c).normalize();
    SquareSvd svd(out.phi);
    const auto& sv = svd.singularValues();
    const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                 : std::numeric_limits<double>::infinity();
    if (!(cond <= 1e12))
        throw DefectiveMatrixError("eigendecompose: eigenvector matrix condition number " +
                                   std::to_string(cond) + " exceeds 1e12 (matrix is defective)");
    out.psi = out.phi.inverse();
    return out;
}

/// Throws unless eigenvalue `i` is separated from all others by 1e-8 ||A||.
inline void require_simple(const EigenStructure& eig, Eigen::Index i) {
    if (i < 0 || i >= eig.size()) throw InputError("eigenvalue index out of range");
    const double tol = 1e-8 * std::max(eig.matrix_norm, 1e-300);
    for (Eigen::Index k = 0; k < eig.size(); ++k)
        if (k != i && std::abs(eig.values(k) - eig.values(i)) < tol)
            throw DefectiveMatrixError("eigenvalue " + std::to_string(i) + " is not simple");
}

/// P(k, i) = phi_ki psi_ik: participation of state k in mode i.
inline CMatrix participation_matrix(const EigenStructure& eig) {
    return eig.phi.cwiseProduct(eig.psi.transpose());
}

/// d lambda_i / d A, entry (k, j) = psi_ik phi_ji, i.e. (phi_i psi_i)^T.
inline CMatrix eigenvalue_sensitivity_matrix(const EigenStructure& eig, Eigen::Index i) {
    require_simple(eig, i);
    return (eig.phi.col(i) * eig.psi.row(i)).transpose();
}

/// Residue of (sI - A)^{-1} at a simple eigenvalue, computed from the null
/// vectors of (lambda I - A) rather than from a full eigendecomposition.
inline CMatrix resolvent_residue(const CMatrix& A, cdouble lambda) {
    const auto n = A.rows();
    const CMatrix m = lambda * CMatrix::Identity(n, n) - A;
    SquareSvd svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double scale = std::max(1.0, A.norm());
    if (sv(n - 1) > 1e-8 * scale)
        throw InputError("resolvent_residue: lambda is not an eigenvalue");
    if (n > 1 && sv(n - 2) < 1e-8 * scale)
        throw DefectiveMatrixError("resolvent_residue: repeated eigenvalue");
    const CVector v = svd.matrixV().col(n - 1);
    const CVector w = svd.matrixU().col(n - 1).conjugate();
    const cdouble denom = w.transpose() * v;
    if (std::abs(denom) < 1e-10)
        throw DefectiveMatrixError("resolvent_residue: repeated eigenvalue (defective)");
    return v * w.transpose() / denom;
}

inline CMatrix resolvent_residue(const RMatrix& A, cdouble lambda) {
    return resolvent_residue(CMatrix(A.cast<cdouble>()), lambda);
}

struct ParameterSensitivity {
    cdouble derivative;
    cdouble shift(double delta_rho) const { return derivative * delta_rho; }
};

/// d lambda_i / d rho = tr(phi_i psi_i dA/drho) = psi_i (dA/drho) phi_i.
inline ParameterSensitivity parameter_sensitivity_ss(const EigenStructure& eig, Eigen::Index i,
                                                     const RMatrix& dA_drho) {
    require_simple(eig, i);
    if (dA_drho.rows() != eig.size() || dA_drho.cols() != eig.size())
        throw InputError("parameter_sensitivity_ss: dA/drho dimension mismatch");
    const cdouble d = eig.psi.row(i) * dA_drho.cast<cdouble>() * eig.phi.col(i);
    return {d};
}

inline void check_selection(const StateSpaceModel& model, const PortSelection& sel) {
    auto ok = [](const std::vector<Eigen::Index>& idx, Eigen::Index n) {
        std::set<Eigen::Index> seen;
        for (auto i : idx)
            if (i < 0 || i >= n || !seen.insert(i).second) return false;
        return true;
    };
    if (!ok(sel.inputs, model.n_inputs()) || !ok(sel.outputs, model.n_outputs()))
        throw InputError("invalid port selection: indices out of range or duplicated");
}

inline PortSelection all_ports(const StateSpaceModel& model) {
    PortSelection sel;
    for (Eigen::Index i = 0; i < model.n_inputs(); ++i) sel.inputs.push_back(i);
    for (Eigen::Index i = 0; i < model.n_outputs(); ++i) sel.outputs.push_back(i);
    return sel;
}

/// C1 (sI - A)^{-1} B1 + D1 for the selected inputs/outputs.
inline CMatrix extract_port_transfer(const StateSpaceModel& model, const PortSelection& sel, cdouble s) {
    check_selection(model, sel);
    const auto n = model.n_states();
    const auto ni = static_cast<Eigen::Index>(sel.inputs.size());
    const auto no = static_cast<Eigen::Index>(sel.outputs.size());
    CMatrix b1(n, ni), d1(no, ni);
    CMatrix c1(no, n);
    for (Eigen::Index c = 0; c < ni; ++c) b1.col(c) = model.B.col(sel.inputs[c]).cast<cdouble>();
    for (Eigen::Index r = 0; r < no; ++r) {
        c1.row(r) = model.C.row(sel.outputs[r]).cast<cdouble>();
        for (Eigen::Index c = 0; c < ni; ++c) d1(r, c) = model.D(sel.outputs[r], sel.inputs[c]);
    }
    if (n == 0) return d1;
    Eigen::PartialPivLU<CMatrix> lu(s * CMatrix::Identity(n, n) - model.A.cast<cdouble>());
    if (!(lu.rcond() > 1e-15)) throw SingularMatrixError("extract_port_transfer: (sI - A) singular", 1.0 / lu.rcond());
    return c1 * lu.solve(b1) + d1;
}

/// Residue of the selected transfer at a simple eigenvalue of A:
/// C1 phi_i psi_i B1.
inline CMatrix port_residue(const StateSpaceModel& model, const PortSelection& sel,
                            const EigenStructure& eig, Eigen::Index i) {
    check_selection(model, sel);
    require_simple(eig, i);
    const CVector c1phi = [&] {
        CVector v(static_cast<Eigen::Index>(sel.outputs.size()));
        const CVector cphi = model.C.cast<cdouble>() * eig.phi.col(i);
        for (std::size_t r = 0; r < sel.outputs.size(); ++r) v(r) = cphi(sel.outputs[r]);
        return v;
    }();
    const Eigen::RowVectorXcd psib_full = eig.psi.row(i) * model.B.cast<cdouble>();
    Eigen::RowVectorXcd psib(static_cast<Eigen::Index>(sel.inputs.size()));
    for (std::size_t c = 0; c < sel.inputs.size(); ++c) psib(c) = psib_full(sel.inputs[c]);
    return c1phi * psib;
}

/// Closed state-space model of a network whose elements all carry
/// realizations. Inputs are dq current injections per bus, outputs dq bus
/// voltages, so the full transfer equals Z(s). States: branch and inductive
/// shunt dq currents, apparatus states, and dq voltages of buses with
/// capacitive shunts. Buses without capacitance are eliminated algebraically
/// and need an invertible static admittance (resistive shunt or apparatus D).
inline StateSpaceModel interconnect(const NetworkDescription& net) {
    require_valid(net);
    const int n = net.n_buses;
    const Eigen::Index dim_u = 2 * n;
    const Eigen::Matrix2d J = (Eigen::Matrix2d() << 0.0, -1.0, 1.0, 0.0).finished();
    const Eigen::Matrix2d I2 = Eigen::Matrix2d::Identity();
    auto at = [](int bus) { return Eigen::Index(2 * (bus - 1)); };

    Eigen::Index nel = 0;
    for (const auto& a : net.apparatus) {
        const auto* ss = std::get_if<StateSpaceRealization>(&a.model);
        if (!ss)
            throw UnsupportedForOracleError("apparatus at bus " + std::to_string(a.bus) +
                                            " has no state-space realization");
        nel += ss->A.rows();
    }
    for (const auto& sh : net.shunts)
        if (sh.kind == ShuntKind::inductive) nel += 2;
    nel += 2 * static_cast<Eigen::Index>(net.branches.size());

    RMatrix Ael = RMatrix::Zero(nel, nel), Bel = RMatrix::Zero(nel, dim_u);
    RMatrix Cx = RMatrix::Zero(dim_u, nel), Dn = RMatrix::Zero(dim_u, dim_u);
    RVector cap = RVector::Zero(n);
    std::vector<std::string> names;

    Eigen::Index x = 0;
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        const auto& b = net.branches[e];
        Ael.block<2, 2>(x, x) = -(b.R / b.L) * I2 - net.omega0 * J;
        Bel.block<2, 2>(x, at(b.from)) += I2 / (b.L * b.ratio);
        Bel.block<2, 2>(x, at(b.to)) -= I2 / b.L;
        Cx.block<2, 2>(at(b.from), x) += I2 / b.ratio;
        Cx.block<2, 2>(at(b.to), x) -= I2;
        names.push_back(branch_label(net, e) + ".id");
        names.push_back(branch_label(net, e) + ".iq");
        x += 2;
    }
    for (std::size_t e = 0; e < net.shunts.size(); ++e) {
        const auto& sh = net.shunts[e];
        switch (sh.kind) {
        case ShuntKind::capacitive: cap(sh.bus - 1) += sh.value; break;
        case ShuntKind::resistive: Dn.block<2, 2>(at(sh.bus), at(sh.bus)) += I2 / sh.value; break;
        case ShuntKind::inductive:
            Ael.block<2, 2>(x, x) = -net.omega0 * J;
            Bel.block<2, 2>(x, at(sh.bus)) += I2 / sh.value;
            Cx.block<2, 2>(at(sh.bus), x) += I2;
            names.push_back(shunt_label(net, e) + ".id");
            names.push_back(shunt_label(net, e) + ".iq");
            x += 2;
            break;
        }
    }
    for (std::size_t e = 0; e < net.apparatus.size(); ++e) {
        const auto& a = net.apparatus[e];
        const auto& ss = std::get<StateSpaceRealization>(a.model);
        const Eigen::Matrix2d T = frame_rotation(a.theta);
        const auto nx = ss.A.rows();
        if (nx > 0) {
            Ael.block(x, x, nx, nx) = ss.A;
            Bel.block(x, at(a.bus), nx, 2) += ss.B * T.transpose();
            Cx.block(at(a.bus), x, 2, nx) += T * ss.C;
        }
        Dn.block<2, 2>(at(a.bus), at(a.bus)) += T * ss.D * T.transpose();
        for (Eigen::Index k = 0; k < nx; ++k)
            names.push_back(apparatus_label(net, e) + ".x" + std::to_string(k + 1));
        x += nx;
    }

    std::vector<int> cap_buses, alg_buses;
    for (int b = 1; b <= n; ++b) (cap(b - 1) > 0.0 ? cap_buses : alg_buses).push_back(b);
    const auto ns = Eigen::Index(2 * cap_buses.size()), na = Eigen::Index(2 * alg_buses.size());
    RMatrix Ps = RMatrix::Zero(dim_u, ns), Pa = RMatrix::Zero(dim_u, na);
    for (std::size_t k = 0; k < cap_buses.size(); ++k) Ps.block<2, 2>(at(cap_buses[k]), 2 * k) = I2;
    for (std::size_t k = 0; k < alg_buses.size(); ++k) Pa.block<2, 2>(at(alg_buses[k]), 2 * k) = I2;

    // U = Gx x + Gs Us + GI I
    RMatrix Gx = RMatrix::Zero(dim_u, nel), Gs = Ps, GI = RMatrix::Zero(dim_u, dim_u);
    if (na > 0) {
        const RMatrix Daa = Pa.transpose() * Dn * Pa;
        Eigen::FullPivLU<RMatrix> lu(Daa);
        if (!lu.isInvertible()) {
            std::string list;
            for (int b : alg_buses) list += " " + std::to_string(b);
            throw UnsupportedForOracleError(
                "buses without capacitive shunt need an invertible static admittance; offending buses:" + list);
        }
        const RMatrix M = lu.inverse();
        Gx = -Pa * M * Pa.transpose() * Cx;
        Gs = Ps - Pa * M * Pa.transpose() * Dn * Ps;
        GI = Pa * M * Pa.transpose();
    }

    RMatrix Cinv = RMatrix::Zero(ns, ns), Ws = RMatrix::Zero(ns, ns);
    for (std::size_t k = 0; k < cap_buses.size(); ++k) {
        const double c = cap(cap_buses[k] - 1);
        Cinv.block<2, 2>(2 * k, 2 * k) = I2 / c;
        Ws.block<2, 2>(2 * k, 2 * k) = net.omega0 * c * J;
    }
    const RMatrix Es = Ps.transpose();

    StateSpaceModel out;
    const auto nx = nel + ns;
    out.A.resize(nx, nx);
    out.A.topLeftCorner(nel, nel) = Ael + Bel * Gx;
    out.A.topRightCorner(nel, ns) = Bel * Gs;
    out.A.bottomLeftCorner(ns, nel) = Cinv * (-Es * Cx - Es * Dn * Gx);
    out.A.bottomRightCorner(ns, ns) = Cinv * (-Es * Dn * Gs - Ws);
    out.B.resize(nx, dim_u);
    out.B.topRows(nel) = Bel * GI;
    out.B.bottomRows(ns) = Cinv * (Es - Es * Dn * GI);
    out.C.resize(dim_u, nx);
    out.C << Gx, Gs;
    out.D = GI;

    out.state_names = names;
    for (int b : cap_buses) {
        out.state_names.push_back("U" + std::to_string(b) + "d");
        out.state_names.push_back("U" + std::to_string(b) + "q");
    }
    for (int b = 1; b <= n; ++b) {
        out.input_names.push_back("I" + std::to_string(b) + "d");
        out.input_names.push_back("I" + std::to_string(b) + "q");
        out.output_names.push_back("U" + std::to_string(b) + "d");
        out.output_names.push_back("U" + std::to_string(b) + "q");
    }
    return out;
}

/// True when every apparatus carries a realization (interconnect may still
/// reject algebraic buses).
inline bool oracle_capable(const NetworkDescription& net) {
    return std::all_of(net.apparatus.begin(), net.apparatus.end(), [](const auto& a) {
        return std::holds_alternative<StateSpaceRealization>(a.model);
    });
}

}  // namespace mai
