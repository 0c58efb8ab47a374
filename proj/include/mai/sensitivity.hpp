#pragma once

// Impedance-model participation analysis. All sensitivities derive from the
// residue of the whole-system impedance matrix at a simple mode:
//
//   d lambda = -tr(Res_lambda Z * dY)
//
// Element sensitivity factors s = (d lambda / d y)^H pair with admittance
// perturbations through the Frobenius inner product <X, Y> = sum conj(X) Y,
// so that <s, dy> = tr((d lambda / d y) dy).

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mai/modes.hpp"

namespace mai {

struct SensitivityRecord {
    std::string element;
    Location location;
    DqBlock dlambda_dy;  // d lambda / d y
    DqBlock s_factor;    // (d lambda / d y)^H
};

/// <X, Y> = sum_pq conj(X_pq) Y_pq.
inline cdouble frobenius_inner(const DqBlock& x, const DqBlock& y) { return (x.conjugate().cwiseProduct(y)).sum(); }

inline SensitivityRecord make_record(std::string element, Location loc, const DqBlock& dlambda_dy) {
    return {std::move(element), loc, dlambda_dy, dlambda_dy.adjoint()};
}

/// Node i: -Res Z_ii.  Branch ij: -Res(Z_ii + Z_jj - Z_ij - Z_ji), bus 0 = ground.
/// A transformer location is treated as a plain branch here (ratio ignored);
/// use transformer_admittance_sensitivity or element_sensitivity for the
/// ratio-corrected form.
inline SensitivityRecord admittance_sensitivity(const CMatrix& res, const Location& loc, std::string element = {}) {
    const int nb = static_cast<int>(res.rows() / 2);
    auto check = [&](int b, bool allow_ground) {
        if (b < (allow_ground ? 0 : 1) || b > nb)
            throw InputError("admittance_sensitivity: location references bus " + std::to_string(b) +
                             " outside the system");
    };
    if (loc.kind == Location::Kind::node) {
        check(loc.i, false);
        return make_record(std::move(element), loc, -get_block(res, loc.i, loc.i));
    }
    check(loc.i, true);
    check(loc.j, true);
    const DqBlock m = get_block(res, loc.i, loc.i) + get_block(res, loc.j, loc.j) - get_block(res, loc.i, loc.j) -
                      get_block(res, loc.j, loc.i);
    return make_record(std::move(element), loc, -m);
}

/// Ratio-corrected branch sensitivity for a transformer with ratio k on the
/// i side: -Res(Z_ii / k^2 + Z_jj - Z_ij / k - Z_ji / k).
inline SensitivityRecord transformer_admittance_sensitivity(const CMatrix& res, int i, int j, double k,
                                                            std::string element = {}) {
    if (k == 0.0 || !std::isfinite(k)) throw InputError("transformer_admittance_sensitivity: ratio k = 0");
    const int nb = static_cast<int>(res.rows() / 2);
    if (i < 0 || j < 0 || i > nb || j > nb) throw InputError("transformer_admittance_sensitivity: bus out of range");
    const DqBlock m = get_block(res, i, i) / (k * k) + get_block(res, j, j) - get_block(res, i, j) / k -
                      get_block(res, j, i) / k;
    return make_record(std::move(element), {Location::Kind::transformer, i, j, k}, -m);
}

/// Sensitivity of an element, ratio-corrected for transformers.
inline SensitivityRecord element_sensitivity(const CMatrix& res, const Location& loc, std::string element = {}) {
    if (loc.kind == Location::Kind::transformer)
        return transformer_admittance_sensitivity(res, loc.i, loc.j, loc.k, std::move(element));
    return admittance_sensitivity(res, loc, std::move(element));
}

/// First-order mode shift <s, dy>.
inline cdouble predict_mode_shift(const DqBlock& s_factor, const DqBlock& dy) { return frobenius_inner(s_factor, dy); }

/// Cauchy bound eps ||s|| ||y|| on |d lambda| for dy = eps y.
inline double layer1_cauchy(const DqBlock& s_factor, const DqBlock& y, double eps) {
    if (!(eps > 0.0)) throw InputError("layer1_cauchy: epsilon must be positive");
    return eps * s_factor.norm() * y.norm();
}

/// sigma2 + j omega2 = <s, y>.
inline cdouble layer2(const DqBlock& s_factor, const DqBlock& y) { return frobenius_inner(s_factor, y); }

/// sqrt(sigma2^2 + omega2^2).
inline double enhanced_layer1(double sigma2, double omega2) { return std::hypot(sigma2, omega2); }

struct ParameterFactor {
    cdouble s_rho;
    cdouble shift(double delta_rho) const { return s_rho * delta_rho; }
};

/// s_{lambda,rho} = <s, dy/drho>.
inline ParameterFactor layer3(const DqBlock& s_factor, const DqBlock& dy_drho) {
    return {frobenius_inner(s_factor, dy_drho)};
}

struct LayerReport {
    double layer1_cauchy = 0.0;  // ||s|| ||y||, scale by epsilon for a bound
    cdouble layer2;
    double layer1_enhanced = 0.0;
    std::map<std::string, cdouble> layer3;
    double epsilon = 0.05;
};

inline LayerReport layer_report(const DqBlock& s_factor, const DqBlock& y, double eps) {
    LayerReport r;
    r.epsilon = eps;
    r.layer1_cauchy = s_factor.norm() * y.norm();
    r.layer2 = layer2(s_factor, y);
    r.layer1_enhanced = enhanced_layer1(r.layer2.real(), r.layer2.imag());
    return r;
}

/// Series branch split at a virtual node f: inductive part z1 next to the
/// from bus, resistive part z2 next to the to bus, both evaluated at s = lambda.
struct SplitBranch {
    DqBlock z1;
    DqBlock z2;
    double R = 0.0;
    double L = 0.0;
    bool resistive_degenerate = false;  // R == 0, z2 singular
};

inline DqBlock inductive_pattern(cdouble lambda, double omega0) {
    DqBlock g;
    g << lambda, -omega0, omega0, lambda;
    return g;
}

inline SplitBranch split_branch(double R, double L, double omega0, cdouble lambda) {
    if (!(L > 0.0)) throw InputError("split_branch: L must be positive");
    SplitBranch sb;
    sb.R = R;
    sb.L = L;
    sb.z1 = L * inductive_pattern(lambda, omega0);
    sb.z2 = R * DqBlock::Identity();
    sb.resistive_degenerate = R == 0.0;
    return sb;
}

struct SplitNodeImpedances {
    DqBlock Z_fi, Z_if, Z_jf, Z_kf, Z_ff;
};

/// Blocks of the impedance matrix augmented with the split node f, computed
/// from the original Z alone. Branch (j, k) has admittance y = (z1 + z2)^{-1}
/// with z1 adjacent to j. With `homogeneous` the constant identity term of
/// Z_ff is dropped, which is what applying the same map to a residue needs.
inline SplitNodeImpedances split_node_impedances(const CMatrix& Z, int i, int j, int k, const DqBlock& z1,
                                                 const DqBlock& z2, const DqBlock& y, bool homogeneous = false) {
    Eigen::FullPivLU<DqBlock> lu1(z1), lu2(z2);
    if (!lu1.isInvertible() || !lu2.isInvertible())
        throw NumericalError("split_node_impedances: degenerate split (z1 or z2 singular); use the unsplit branch formula");
    const DqBlock y1 = lu1.inverse(), y2 = lu2.inverse();
    const DqBlock ysum_inv = (y1 + y2).inverse();
    auto Zb = [&](int a, int b) { return get_block(Z, a, b); };
    SplitNodeImpedances out;
    out.Z_fi = Zb(j, i) - z1 * y * (Zb(j, i) - Zb(k, i));
    out.Z_if = (Zb(i, j) * y1 + Zb(i, k) * y2) * ysum_inv;
    out.Z_jf = (Zb(j, j) * y1 + Zb(j, k) * y2) * ysum_inv;
    out.Z_kf = (Zb(k, j) * y1 + Zb(k, k) * y2) * ysum_inv;
    const DqBlock constant = homogeneous ? DqBlock(DqBlock::Zero()) : DqBlock(DqBlock::Identity());
    out.Z_ff = ysum_inv * (constant + y1 * out.Z_jf + y2 * out.Z_kf);
    return out;
}

struct SplitDerivatives {
    DqBlock dy1_dL;
    DqBlock dy2_dR;
};

/// dy1/dL = -z1^{-1} (dz1/dL) z1^{-1},  dy2/dR = -z2^{-1} z2^{-1}.
inline SplitDerivatives split_parameter_derivatives(const SplitBranch& split, cdouble lambda, double omega0) {
    Eigen::FullPivLU<DqBlock> lu1(split.z1);
    if (!lu1.isInvertible()) throw NumericalError("split_parameter_derivatives: z1 singular");
    const DqBlock y1 = lu1.inverse();
    SplitDerivatives d;
    d.dy1_dL = -y1 * inductive_pattern(lambda, omega0) * y1;
    if (split.resistive_degenerate) {
        d.dy2_dR = DqBlock::Zero();
    } else {
        const DqBlock y2 = split.z2.inverse();
        d.dy2_dR = -y2 * y2;
    }
    return d;
}

enum class BranchParameter { L, R };

inline std::string to_string(BranchParameter p) { return p == BranchParameter::L ? "L" : "R"; }

/// d lambda / d rho for a series branch parameter by the unsplit chain rule:
/// dy/drho = -y (dz/drho) y with the ratio-corrected sensitivity.
inline cdouble branch_parameter_sensitivity(const CMatrix& res, const SeriesBranch& b, double omega0, cdouble lambda,
                                            BranchParameter p) {
    const DqBlock y = branch_admittance(b, omega0, lambda);
    const DqBlock dz = p == BranchParameter::L ? inductive_pattern(lambda, omega0) : DqBlock(DqBlock::Identity());
    const DqBlock dy = -y * dz * y;
    const auto rec = b.kind == BranchKind::transformer ? transformer_admittance_sensitivity(res, b.from, b.to, b.ratio)
                                                       : admittance_sensitivity(res, {Location::Kind::branch, b.from, b.to, 1.0});
    return layer3(rec.s_factor, dy).s_rho;
}

/// d lambda / d rho through the split-node construction (lines only). The
/// inductive part is the branch (j, f), the resistive part (f, k); their
/// sensitivities come from residues of the augmented impedance matrix.
/// A zero-resistance branch falls back to the unsplit formula.
inline cdouble split_parameter_sensitivity(const CMatrix& res, const SeriesBranch& b, double omega0, cdouble lambda,
                                           BranchParameter p) {
    if (b.kind == BranchKind::transformer)
        throw InputError("split_parameter_sensitivity: splitting applies to lines; use branch_parameter_sensitivity");
    const auto split = split_branch(b.R, b.L, omega0, lambda);
    if (split.resistive_degenerate) return branch_parameter_sensitivity(res, b, omega0, lambda, p);
    const DqBlock y = (split.z1 + split.z2).inverse();
    const int j = b.from, k = b.to;
    const auto at_j = split_node_impedances(res, j, j, k, split.z1, split.z2, y, true);
    const auto at_k = split_node_impedances(res, k, j, k, split.z1, split.z2, y, true);
    const auto d = split_parameter_derivatives(split, lambda, omega0);
    const DqBlock Rjj = get_block(res, j, j), Rkk = get_block(res, k, k);
    const DqBlock Rff = at_j.Z_ff;
    if (p == BranchParameter::L) {
        // branch (j, f): Z_jj + Z_ff - Z_jf - Z_fj
        const DqBlock g = -(Rjj + Rff - at_j.Z_jf - at_j.Z_fi);
        return layer3(DqBlock(g.adjoint()), d.dy1_dL).s_rho;
    }
    // branch (f, k): Z_ff + Z_kk - Z_fk - Z_kf
    const DqBlock g = -(Rff + Rkk - at_k.Z_fi - at_k.Z_if);
    return layer3(DqBlock(g.adjoint()), d.dy2_dR).s_rho;
}

struct ValidationRecord {
    cdouble predicted;
    cdouble actual;
    double error = 0.0;
    bool defined = true;
};

/// |predicted - actual| / |predicted|; undefined for a zero prediction.
inline ValidationRecord validate_prediction(cdouble predicted, cdouble actual) {
    ValidationRecord r{predicted, actual, 0.0, true};
    if (std::abs(predicted) == 0.0) {
        r.defined = false;
        r.error = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.error = std::abs(predicted - actual) / std::abs(predicted);
    return r;
}

/// Re-solves the mode on a perturbed model by Newton from the predicted
/// location and accepts it only if it stays within 0.3 times the distance
/// from the original mode to its nearest neighbour.
inline cdouble track_mode(const WholeSystemModel& perturbed, cdouble original, cdouble predicted,
                          const std::vector<cdouble>& neighbours) {
    double dmin = std::numeric_limits<double>::infinity();
    for (auto m : neighbours)
        if (!same_mode(m, original)) dmin = std::min(dmin, std::abs(m - original));
    const auto r = refine_mode(perturbed, predicted);
    if (std::abs(r.lambda - predicted) > 0.3 * dmin)
        throw ConvergenceError("mode tracking lost the branch near (" + std::to_string(original.real()) + ", " +
                               std::to_string(original.imag()) + ")");
    return r.lambda;
}

/// Per-element participation of one mode.
struct ElementResult {
    ElementRef element;
    std::string label;
    SensitivityRecord sensitivity;
    /// Plain branch formula (ratio ignored); equals `sensitivity` for non-transformers.
    SensitivityRecord uncorrected;
    DqBlock y_at_lambda;
    LayerReport layers;
};

inline std::vector<ElementResult> element_participation(const WholeSystemModel& model, const ModeRecord& mode,
                                                        double eps = 0.05) {
    const auto& net = model.network();
    std::vector<ElementResult> out;
    for (auto e : model.elements()) {
        ElementResult r;
        r.element = e;
        r.label = element_label(net, e);
        const auto loc = element_location(net, e);
        r.sensitivity = element_sensitivity(mode.residue, loc, r.label);
        r.uncorrected = admittance_sensitivity(mode.residue, loc, r.label);
        r.y_at_lambda = model.element_admittance(e, mode.lambda);
        r.layers = layer_report(r.sensitivity.s_factor, r.y_at_lambda, eps);
        if (e.kind == ElementKind::branch) {
            const auto& b = net.branches[e.index];
            for (auto p : {BranchParameter::L, BranchParameter::R})
                r.layers.layer3[to_string(p)] = branch_parameter_sensitivity(mode.residue, b, net.omega0, mode.lambda, p);
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline NetworkDescription with_branch_parameter(NetworkDescription net, std::size_t branch, BranchParameter p,
                                                double value) {
    auto& b = net.branches.at(branch);
    (p == BranchParameter::L ? b.L : b.R) = value;
    return net;
}

struct SweepPoint {
    int step = 0;
    double rho = 0.0;
    cdouble predicted;
    cdouble actual;
    cdouble previous;
    ValidationRecord validation;
};

/// Repeatedly multiplies one branch parameter by `factor`. Each step predicts
/// the new mode from the previous actual mode with the parameter sensitivity
/// and re-solves the actual mode by Newton continuation.
inline std::vector<SweepPoint> parameter_sweep(const NetworkDescription& net, std::size_t branch, BranchParameter p,
                                               double factor, int n_steps, cdouble seed) {
    if (branch >= net.branches.size()) throw InputError("parameter_sweep: branch index out of range");
    if (!(factor > 0.0)) throw InputError("parameter_sweep: factor must be positive");
    WholeSystemModel model(net);
    cdouble lambda = refine_mode(model, seed).lambda;
    double rho = p == BranchParameter::L ? net.branches[branch].L : net.branches[branch].R;
    std::vector<SweepPoint> out;
    for (int step = 1; step <= n_steps; ++step) {
        const CMatrix res = residue_at_mode(model, lambda);
        const auto& b = model.network().branches[branch];
        const cdouble slope = branch_parameter_sensitivity(res, b, net.omega0, lambda, p);
        const double next_rho = rho * factor;
        const cdouble predicted = lambda + slope * (next_rho - rho);
        WholeSystemModel next(with_branch_parameter(model.network(), branch, p, next_rho));
        cdouble actual = lambda;
        if (factor != 1.0) {
            const auto r = refine_mode(next, predicted);
            actual = r.lambda;
            // Continuation sanity: the step must not jump further than the
            // predicted move plus the prediction error allowance.
            if (std::abs(actual - predicted) > 0.3 * std::abs(predicted - lambda) + 1e-9 * (1.0 + std::abs(lambda))) {
                const auto from_prev = refine_mode(next, lambda);
                if (!same_mode(from_prev.lambda, actual))
                    throw ConvergenceError("parameter_sweep: mode tracking lost the branch at step " + std::to_string(step));
            }
        }
        SweepPoint pt;
        pt.step = step;
        pt.rho = next_rho;
        pt.predicted = predicted;
        pt.actual = actual;
        pt.previous = lambda;
        pt.validation = validate_prediction(predicted - lambda, actual - lambda);
        out.push_back(pt);
        lambda = actual;
        rho = next_rho;
        model = std::move(next);
    }
    return out;
}

}  // namespace mai
