#pragma once

// Mode location on the whole-system admittance: Newton refinement of zeros
// of det Y(s) through its smallest eigenvalue, critical resonance vectors,
// and residue matrices Res_lambda Z from every supported source.

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mai/rational_fit.hpp"
#include "mai/state_space.hpp"

namespace mai {

using MatrixFunction = std::function<CMatrix(cdouble)>;

struct EigenPair {
    cdouble value;
    CVector vector;
};

struct CriticalResonance {
    cdouble eigenvalue;
    CVector vector;       // right eigenvector
    CVector left_vector;  // left eigenvector, w^T v = 1
    /// Other eigenpairs whose magnitude is within 1e-9 ||Y||_F of the minimum.
    std::vector<EigenPair> ties;
};

/// Eigenpair of Y with the smallest |eigenvalue|.
inline CriticalResonance critical_resonance_mode(const CMatrix& y_at_lambda) {
    Eigen::ComplexEigenSolver<CMatrix> es(y_at_lambda, true);
    if (es.info() != Eigen::Success) throw NumericalError("critical_resonance_mode: eigen solver failed");
    const auto& vals = es.eigenvalues();
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < vals.size(); ++k)
        if (std::abs(vals(k)) < std::abs(vals(best))) best = k;
    CriticalResonance out;
    out.eigenvalue = vals(best);
    out.vector = es.eigenvectors().col(best).normalized();
    Eigen::FullPivLU<CMatrix> lu(es.eigenvectors());
    if (lu.isInvertible()) {
        const CMatrix inv = lu.inverse();
        CVector w = inv.row(best).transpose();
        const cdouble wv = w.transpose() * out.vector;
        out.left_vector = w / wv;
    }
    const double tie_tol = 1e-9 * y_at_lambda.norm();
    for (Eigen::Index k = 0; k < vals.size(); ++k)
        if (k != best && std::abs(vals(k)) - std::abs(vals(best)) <= tie_tol)
            out.ties.push_back({vals(k), es.eigenvectors().col(k).normalized()});
    return out;
}

struct RefineOptions {
    int max_iterations = 60;
    double tolerance = 1e-10;
    /// Previously found modes; a converged result near one is flagged.
    std::vector<cdouble> known_modes;
};

struct RefineResult {
    cdouble lambda;
    int iterations = 0;
    /// |smallest eigenvalue of Y(lambda)| / ||Y(lambda)||_F.
    double residual = 0.0;
    std::optional<std::size_t> duplicate_of;
};

inline bool same_mode(cdouble a, cdouble b) { return std::abs(a - b) <= 1e-6 * (1.0 + std::abs(a)); }

namespace detail {

struct SmallestEigen {
    cdouble mu;
    cdouble dmu;
    double ynorm;
};

inline SmallestEigen smallest_eigen(const MatrixFunction& yfun, const MatrixFunction& dyfun, cdouble s) {
    const CMatrix y = yfun(s);
    const auto cr = critical_resonance_mode(y);
    SmallestEigen out{cr.eigenvalue, 0.0, y.norm()};
    if (cr.left_vector.size() == 0) throw NumericalError("refine_mode: eigenvectors of Y(s) are degenerate");
    CMatrix dy;
    if (dyfun) {
        dy = dyfun(s);
    } else {
        const double h = 1e-6 * (1.0 + std::abs(s));
        dy = (yfun(s + h) - yfun(s - h)) / (2.0 * h);
    }
    out.dmu = cr.left_vector.transpose() * dy * cr.vector;
    return out;
}

}  // namespace detail

/// Newton iteration on the smallest-magnitude eigenvalue of Y(s). `dyfun`
/// may be empty, in which case central differences supply dY/ds.
inline RefineResult refine_mode(const MatrixFunction& yfun, const MatrixFunction& dyfun, cdouble seed,
                                const RefineOptions& opt = {}) {
    RefineResult out;
    cdouble s = seed;
    for (int it = 0;; ++it) {
        const auto se = detail::smallest_eigen(yfun, dyfun, s);
        out.residual = std::abs(se.mu) / std::max(se.ynorm, 1e-300);
        out.lambda = s;
        out.iterations = it;
        if (out.residual <= opt.tolerance) {
            // One polishing step when it does not hurt.
            if (std::abs(se.dmu) > 0.0) {
                const cdouble s2 = s - se.mu / se.dmu;
                try {
                    const auto se2 = detail::smallest_eigen(yfun, dyfun, s2);
                    const double r2 = std::abs(se2.mu) / std::max(se2.ynorm, 1e-300);
                    if (r2 < out.residual && std::abs(s2 - s) < 1e-6 * (1.0 + std::abs(s))) {
                        out.lambda = s2;
                        out.residual = r2;
                    }
                } catch (const NumericalError&) {
                }
            }
            break;
        }
        if (it >= opt.max_iterations)
            throw ConvergenceError("refine_mode: no convergence from seed (" + std::to_string(seed.real()) + ", " +
                                   std::to_string(seed.imag()) + ") after " + std::to_string(it) + " iterations");
        if (!(std::abs(se.dmu) > 1e-300) || !std::isfinite(std::abs(se.dmu)))
            throw ConvergenceError("refine_mode: flat smallest eigenvalue, Newton step undefined");
        const cdouble step = se.mu / se.dmu;
        if (!std::isfinite(std::abs(step)) || std::abs(step) > 1e6 * (1.0 + std::abs(seed)))
            throw ConvergenceError("refine_mode: Newton iteration diverged");
        s -= step;
    }
    for (std::size_t k = 0; k < opt.known_modes.size(); ++k)
        if (same_mode(opt.known_modes[k], out.lambda)) {
            out.duplicate_of = k;
            break;
        }
    return out;
}

inline RefineResult refine_mode(const WholeSystemModel& model, cdouble seed, const RefineOptions& opt = {}) {
    return refine_mode([&](cdouble s) { return model.admittance(s); },
                       [&](cdouble s) { return model.admittance_derivative(s); }, seed, opt);
}

/// Res_lambda Z = v w^T / (w^T Y'(lambda) v) with v, w the right and left
/// null vectors of Y(lambda).
inline CMatrix residue_from_admittance(const CMatrix& y_at_lambda, const CMatrix& dy_at_lambda) {
    const auto n = y_at_lambda.rows();
    SquareSvd svd(y_at_lambda, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const CVector v = svd.matrixV().col(n - 1);
    const CVector w = svd.matrixU().col(n - 1).conjugate();
    const cdouble denom = w.transpose() * dy_at_lambda * v;
    if (std::abs(denom) == 0.0) throw NumericalError("residue: dY/ds annihilates the null space (multiple pole)");
    return v * w.transpose() / denom;
}

enum class Provenance { state_space, vector_fit, newton_refined };

inline std::string to_string(Provenance p) {
    switch (p) {
    case Provenance::state_space: return "state-space";
    case Provenance::vector_fit: return "vector-fit";
    case Provenance::newton_refined: return "newton-refined";
    }
    return "?";
}

struct ModeRecord {
    cdouble lambda;
    CMatrix residue;
    CVector critical_vector;
    Provenance provenance = Provenance::newton_refined;
};

/// Partial-fraction coefficient of a rational model at lambda.
inline CMatrix residue_at_mode(const RationalModel& model, cdouble lambda) {
    Eigen::Index best = -1;
    double dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index n = 0; n < model.poles.size(); ++n)
        if (std::abs(model.poles(n) - lambda) < dist) {
            dist = std::abs(model.poles(n) - lambda);
            best = n;
        }
    if (best < 0 || dist > 1e-6 * (1.0 + std::abs(lambda))) throw InputError("residue_at_mode: lambda is not a pole of the rational model");
    return model.residues[best];
}

/// C1 phi psi B1 at the eigenvalue of A nearest lambda.
inline CMatrix residue_at_mode(const StateSpaceModel& model, const PortSelection& sel, cdouble lambda) {
    const auto eig = eigendecompose(model.A);
    Eigen::Index best = -1;
    double dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index n = 0; n < eig.size(); ++n)
        if (std::abs(eig.values(n) - lambda) < dist) {
            dist = std::abs(eig.values(n) - lambda);
            best = n;
        }
    if (best < 0 || dist > 1e-6 * (1.0 + std::abs(lambda))) throw InputError("residue_at_mode: lambda is not an eigenvalue of A");
    return port_residue(model, sel, eig, best);
}

/// Null-vector residue of the evaluator at a refined mode.
inline CMatrix residue_at_mode(const WholeSystemModel& model, cdouble lambda) {
    const CMatrix y = model.admittance(lambda);
    const auto cr = critical_resonance_mode(y);
    if (std::abs(cr.eigenvalue) > 1e-6 * y.norm()) throw InputError("residue_at_mode: lambda is not a mode of the system");
    return residue_from_admittance(y, model.admittance_derivative(lambda));
}

inline ModeRecord make_mode_record(const WholeSystemModel& model, cdouble lambda) {
    const CMatrix y = model.admittance(lambda);
    ModeRecord rec;
    rec.lambda = lambda;
    rec.critical_vector = critical_resonance_mode(y).vector;
    rec.residue = residue_from_admittance(y, model.admittance_derivative(lambda));
    rec.provenance = Provenance::newton_refined;
    return rec;
}

struct ModeSearchOptions {
    double w_min = 1.0;
    double w_max = 1e4;
    std::size_t points = 400;
    int order = 30;
    int iterations = 15;
};

struct ModeSearchResult {
    std::vector<ModeRecord> modes;
    VectorFitResult fit;
    std::vector<double> grid;
};

namespace detail {

inline std::vector<double> densify(const std::vector<double>& grid, const CVector& poles, double w_min, double w_max) {
    std::vector<double> out = grid;
    const double step = std::log10(w_max / w_min) / double(std::max<std::size_t>(grid.size() - 1, 1));
    for (Eigen::Index n = 0; n < poles.size(); ++n) {
        const double wc = poles(n).imag();
        if (wc < w_min || wc > w_max) continue;
        // four times the base density within +-10 base steps of the resonance
        const double lc = std::log10(wc);
        for (int k = -40; k <= 40; ++k) {
            const double w = std::pow(10.0, lc + k * step / 4.0);
            if (w > w_min && w < w_max) out.push_back(w);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12 * b; }), out.end());
    return out;
}

}  // namespace detail

/// Finds oscillatory modes with imaginary part in [w_min, w_max]: vector fit
/// of Z(jw) on a log grid (refit on a grid densified near the candidate
/// resonances), then Newton refinement seeded from the fitted poles and from
/// local minima of the smallest singular value along the axis. Sampled
/// apparatus models cannot be refined, so their modes come from the fit.
inline ModeSearchResult find_modes(const WholeSystemModel& model, const ModeSearchOptions& opt) {
    ModeSearchResult out;
    out.grid = log_grid(opt.w_min, opt.w_max, opt.points);
    VectorFitOptions vf;
    vf.order = opt.order;
    vf.iterations = opt.iterations;
    auto samples = sample_response(model, out.grid);
    out.fit = vector_fit(samples, vf);
    out.grid = detail::densify(out.grid, out.fit.model.poles, opt.w_min, opt.w_max);
    // Relocation may have discarded far poles, so the refit order follows
    // the surviving pole count.
    if (out.fit.model.poles.size() > 0) {
        samples = sample_response(model, out.grid);
        vf.initial_poles = out.fit.model.poles;
        vf.order = static_cast<int>(out.fit.model.poles.size());
        out.fit = vector_fit(samples, vf);
    }

    auto in_band = [&](cdouble p) { return p.imag() >= opt.w_min && p.imag() <= opt.w_max; };
    std::vector<cdouble> seeds;
    for (Eigen::Index n = 0; n < out.fit.model.poles.size(); ++n)
        if (in_band(out.fit.model.poles(n))) seeds.push_back(out.fit.model.poles(n));

    if (!model.off_axis_capable()) {
        for (auto p : seeds) {
            ModeRecord rec;
            rec.lambda = p;
            rec.residue = residue_at_mode(out.fit.model, p);
            rec.provenance = Provenance::vector_fit;
            Eigen::ComplexEigenSolver<CMatrix> es(rec.residue);
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < es.eigenvalues().size(); ++k)
                if (std::abs(es.eigenvalues()(k)) > std::abs(es.eigenvalues()(best))) best = k;
            rec.critical_vector = es.eigenvectors().col(best).normalized();
            out.modes.push_back(std::move(rec));
        }
        return out;
    }

    // Local minima of sigma_min(Y(jw)) / ||Y|| on the base grid.
    const auto coarse = log_grid(opt.w_min, opt.w_max, opt.points);
    std::vector<double> smin(coarse.size());
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        const CMatrix y = model.admittance(cdouble(0.0, coarse[k]));
        SquareSvd svd(y);
        smin[k] = svd.singularValues().tail(1)(0) / y.norm();
    }
    for (std::size_t k = 1; k + 1 < coarse.size(); ++k)
        if (smin[k] < smin[k - 1] && smin[k] < smin[k + 1] && smin[k] < 1e-2)
            seeds.emplace_back(-1e-3 * coarse[k], coarse[k]);

    std::vector<cdouble> found;
    for (auto seed : seeds) {
        RefineOptions ro;
        ro.known_modes = found;
        RefineResult r;
        try {
            r = refine_mode(model, seed, ro);
        } catch (const NumericalError&) {
            continue;
        }
        if (r.duplicate_of || !in_band(r.lambda)) continue;
        found.push_back(r.lambda);
    }
    std::sort(found.begin(), found.end(), [](cdouble a, cdouble b) {
        return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
    });
    for (auto lambda : found) out.modes.push_back(make_mode_record(model, lambda));
    return out;
}

}  // namespace mai
