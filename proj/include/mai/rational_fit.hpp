#pragma once

// Frequency-domain sampling of Z(jw) and vector fitting with common poles
// (pole relocation with relaxed non-triviality constraint, real-coefficient
// basis so complex poles always come in conjugate pairs).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mai/assembly.hpp"
#include "mai/network_io.hpp"

namespace mai {

/// Partial-fraction model  H(s) = sum_n R_n / (s - p_n) + D + s E.
struct RationalModel {
    CVector poles;
    std::vector<CMatrix> residues;
    CMatrix d;
    CMatrix e;

    Eigen::Index size() const { return d.rows(); }

    CMatrix evaluate(cdouble s) const {
        CMatrix h = d + s * e;
        for (Eigen::Index n = 0; n < poles.size(); ++n) h += residues[n] / (s - poles(n));
        return h;
    }
};

/// Z(jw) on a strictly increasing grid.
inline std::vector<MatrixSample> sample_response(const WholeSystemModel& model,
                                                 const std::vector<double>& grid) {
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw InputError("sample_response: grid must be strictly increasing");
    std::vector<MatrixSample> out;
    out.reserve(grid.size());
    for (double w : grid) {
        try {
            out.push_back({w, model.impedance(cdouble(0.0, w))});
        } catch (const SingularMatrixError& e) {
            throw SingularMatrixError("sample_response: Y(jw) singular at w = " + std::to_string(w) +
                                          " rad/s",
                                      e.condition());
        }
    }
    return out;
}

inline std::vector<double> log_grid(double w_min, double w_max, std::size_t points) {
    if (!(w_min > 0.0) || !(w_max > w_min)) throw InputError("log_grid: need 0 < w_min < w_max");
    std::vector<double> g(points);
    if (points == 1) {
        g[0] = std::sqrt(w_min * w_max);
        return g;
    }
    const double a = std::log10(w_min), b = std::log10(w_max);
    for (std::size_t k = 0; k < points; ++k) g[k] = std::pow(10.0, a + (b - a) * double(k) / double(points - 1));
    return g;
}

enum class Asymptote { none, constant, linear };
enum class FitStatus { ok, warning };

struct VectorFitOptions {
    int order = 10;
    int iterations = 10;
    Asymptote asymptote = Asymptote::constant;
    /// RMS relative error above which the result carries a warning.
    double tolerance = 1e-4;
    /// Optional starting poles; conjugate pairs must both be present.
    CVector initial_poles;
};

struct VectorFitResult {
    RationalModel model;
    double rms_relative = 0.0;
    double max_relative = 0.0;
    int iterations_run = 0;
    bool converged = false;
    FitStatus status = FitStatus::ok;
    std::string message;
};

namespace detail {

/// Poles ordered so that each complex pair occupies consecutive slots with
/// the positive-imaginary member first.
inline CVector canonical_poles(const CVector& raw) {
    std::vector<cdouble> real, upper;
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const auto p = raw(i);
        if (p.imag() == 0.0)
            real.emplace_back(p.real(), 0.0);
        else if (p.imag() > 0)
            upper.push_back(p);
    }
    auto by_mag = [](cdouble a, cdouble b) { return std::abs(a) < std::abs(b); };
    std::sort(real.begin(), real.end(), by_mag);
    std::sort(upper.begin(), upper.end(), by_mag);
    CVector out(static_cast<Eigen::Index>(real.size() + 2 * upper.size()));
    Eigen::Index k = 0;
    for (auto p : real) out(k++) = p;
    for (auto p : upper) {
        out(k++) = p;
        out(k++) = std::conj(p);
    }
    return out;
}

inline bool is_pair_head(const CVector& poles, Eigen::Index n) {
    return poles(n).imag() > 0.0;
}

/// Real-coefficient basis: 1/(s-a) for real a; for a pair (a, conj a) the two
/// functions 1/(s-a) + 1/(s-conj a) and j/(s-a) - j/(s-conj a).
inline CMatrix basis(const CVector& poles, const std::vector<cdouble>& s) {
    const auto N = poles.size();
    CMatrix phi(static_cast<Eigen::Index>(s.size()), N);
    for (std::size_t k = 0; k < s.size(); ++k) {
        for (Eigen::Index n = 0; n < N;) {
            if (is_pair_head(poles, n)) {
                const cdouble a = 1.0 / (s[k] - poles(n)), b = 1.0 / (s[k] - std::conj(poles(n)));
                phi(k, n) = a + b;
                phi(k, n + 1) = kJ * a - kJ * b;
                n += 2;
            } else {
                phi(k, n) = 1.0 / (s[k] - poles(n));
                n += 1;
            }
        }
    }
    return phi;
}

/// Stacks real and imaginary parts of complex rows.
inline RMatrix realify(const CMatrix& m) {
    RMatrix out(2 * m.rows(), m.cols());
    out.topRows(m.rows()) = m.real();
    out.bottomRows(m.rows()) = m.imag();
    return out;
}

inline RVector realify(const CVector& v) {
    RVector out(2 * v.size());
    out.head(v.size()) = v.real();
    out.tail(v.size()) = v.imag();
    return out;
}

/// Least squares with column normalization and a conditioning gate.
inline RVector solve_ls(const RMatrix& a, const RVector& b, const char* what, bool gate = true) {
    RVector scale(a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double nrm = a.col(c).norm();
        scale(c) = nrm > 0.0 ? 1.0 / nrm : 1.0;
    }
    if (a.rows() < a.cols()) throw InputError(std::string("vector_fit: underdetermined ") + what);
    const RMatrix as = a * scale.asDiagonal();
    // Singular values of the tall matrix equal those of its triangular factor.
    Eigen::HouseholderQR<RMatrix> qr(as);
    const auto n = as.cols();
    const RMatrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const RVector qtb = (qr.householderQ().transpose() * b).head(n);
    Eigen::JacobiSVD<RMatrix, Eigen::NoQRPreconditioner> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (!gate) svd.setThreshold(1e-13);
    const auto& sv = svd.singularValues();
    const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
    if (gate && !(cond < 1e14))
        throw NumericalError(std::string("vector_fit: ill-conditioned least squares in ") + what +
                             " (condition " + std::to_string(cond) + ")");
    return scale.asDiagonal() * svd.solve(qtb);
}

/// The reduced (shared-unknown) rows of one entry's QR factorization.
struct ReducedRows {
    RMatrix r;
    RVector rhs;
};

inline ReducedRows reduce_entry(const RMatrix& a, const RVector& b, Eigen::Index n_local) {
    Eigen::HouseholderQR<RMatrix> qr(a);
    const auto cols = a.cols();
    const RMatrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    const RVector qtb = (qr.householderQ().transpose() * b).head(cols);
    const auto ns = cols - n_local;
    return {r.bottomRightCorner(ns, ns), qtb.tail(ns)};
}

inline RVector entry_weights(const std::vector<MatrixSample>& samples, Eigen::Index m) {
    RVector w(m * m);
    for (Eigen::Index e = 0; e < m * m; ++e) {
        double acc = 0.0;
        for (const auto& s : samples) acc += std::norm(s.value(e / m, e % m));
        acc = std::sqrt(acc / double(samples.size()));
        w(e) = acc > 0.0 ? 1.0 / acc : 1.0;
    }
    return w;
}

inline CVector initial_poles(int order, double w_min, double w_max) {
    CVector p(order);
    const int pairs = order / 2;
    Eigen::Index k = 0;
    if (order % 2 == 1) p(k++) = cdouble(-std::sqrt(w_min * w_max), 0.0);
    const auto betas = pairs > 0 ? log_grid(w_min, w_max, static_cast<std::size_t>(pairs)) : std::vector<double>{};
    for (double beta : betas) {
        p(k++) = cdouble(-beta / 100.0, beta);
        p(k++) = cdouble(-beta / 100.0, -beta);
    }
    return p;
}

}  // namespace detail

/// Fits a rational matrix model with common poles to sampled responses of a
/// real-coefficient system (H(-jw) = conj H(jw)).
inline VectorFitResult vector_fit(const std::vector<MatrixSample>& samples, const VectorFitOptions& opt) {
    using namespace detail;
    if (opt.order < 1) throw InputError("vector_fit: order must be >= 1");
    if (samples.size() < 2 * static_cast<std::size_t>(opt.order))
        throw InputError("vector_fit: need at least 2*order samples");
    for (std::size_t k = 1; k < samples.size(); ++k)
        if (!(samples[k].omega > samples[k - 1].omega))
            throw InputError("vector_fit: sample frequencies must be strictly increasing");

    const Eigen::Index m = samples.front().value.rows();
    const Eigen::Index ne = m * m;
    const auto K = static_cast<Eigen::Index>(samples.size());
    std::vector<cdouble> s(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) s[k] = cdouble(0.0, samples[k].omega);
    const Eigen::Index n_asym = opt.asymptote == Asymptote::none ? 0 : opt.asymptote == Asymptote::constant ? 1 : 2;
    const RVector weight = entry_weights(samples, m);

    CVector poles;
    if (opt.initial_poles.size() > 0) {
        poles = canonical_poles(opt.initial_poles);
        if (poles.size() != opt.order) throw InputError("vector_fit: initial poles must match order and pair up");
    } else {
        const double lo = std::max(samples.front().omega, samples.back().omega * 1e-6);
        poles = canonical_poles(initial_poles(opt.order, lo, samples.back().omega));
    }
    const Eigen::Index N = poles.size();

    auto entry_column = [&](Eigen::Index e) {
        CVector h(K);
        for (Eigen::Index k = 0; k < K; ++k) h(k) = samples[k].value(e / m, e % m) * weight(e);
        return h;
    };

    VectorFitResult result;
    double change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.iterations; ++it) {
        const CMatrix phi = basis(poles, s);
        const Eigen::Index n_local = N + n_asym;

        auto local_block = [&](CMatrix& a) {
            a.leftCols(N) = phi;
            if (n_asym >= 1) a.col(N) = CVector::Ones(K);
            if (n_asym >= 2)
                for (Eigen::Index k = 0; k < K; ++k) a(k, N + 1) = s[k];
        };

        // Relaxed pole identification: shared unknowns (c~, d~).
        RMatrix stacked(ne * (N + 1) + 1, N + 1);
        RVector rhs = RVector::Zero(stacked.rows());
        double energy = 0.0;
        for (Eigen::Index e = 0; e < ne; ++e) {
            const CVector h = entry_column(e);
            energy += h.squaredNorm();
            CMatrix a(K, n_local + N + 1);
            local_block(a);
            for (Eigen::Index n = 0; n < N; ++n) a.col(n_local + n) = -h.cwiseProduct(phi.col(n));
            a.col(n_local + N) = -h;
            const auto red = reduce_entry(realify(a), RVector::Zero(2 * K), n_local);
            stacked.middleRows(e * (N + 1), N + 1) = red.r;
        }
        const double cscale = std::sqrt(energy) / double(K);
        for (Eigen::Index n = 0; n < N; ++n) stacked(ne * (N + 1), n) = cscale * phi.col(n).real().sum();
        stacked(ne * (N + 1), N) = cscale * double(K);
        rhs(ne * (N + 1)) = cscale * double(K);
        RVector sigma = solve_ls(stacked, rhs, "pole identification", false);
        double d_tilde = sigma(N);
        RVector c_tilde = sigma.head(N);

        if (std::abs(d_tilde) < 1e-8) {
            // Fall back to the classic formulation with d~ = 1.
            RMatrix st2(ne * N, N);
            RVector rhs2(ne * N);
            for (Eigen::Index e = 0; e < ne; ++e) {
                const CVector h = entry_column(e);
                CMatrix a(K, n_local + N);
                local_block(a);
                for (Eigen::Index n = 0; n < N; ++n) a.col(n_local + n) = -h.cwiseProduct(phi.col(n));
                const auto red = reduce_entry(realify(a), realify(h), n_local);
                st2.middleRows(e * N, N) = red.r;
                rhs2.segment(e * N, N) = red.rhs;
            }
            c_tilde = solve_ls(st2, rhs2, "pole identification", false);
            d_tilde = 1.0;
        }

        // Zeros of sigma(s) become the new poles.
        RMatrix lam = RMatrix::Zero(N, N);
        RVector bvec = RVector::Zero(N);
        for (Eigen::Index n = 0; n < N;) {
            if (is_pair_head(poles, n)) {
                const double re = poles(n).real(), im = poles(n).imag();
                lam(n, n) = re;
                lam(n, n + 1) = im;
                lam(n + 1, n) = -im;
                lam(n + 1, n + 1) = re;
                bvec(n) = 2.0;
                n += 2;
            } else {
                lam(n, n) = poles(n).real();
                bvec(n) = 1.0;
                n += 1;
            }
        }
        const RMatrix h = lam - bvec * c_tilde.transpose() / d_tilde;
        Eigen::EigenSolver<RMatrix> es(h, false);
        CVector new_poles = canonical_poles(es.eigenvalues());
        if (new_poles.size() != N) throw NumericalError("vector_fit: pole relocation lost conjugate pairing");

        change = 0.0;
        if (new_poles.size() == poles.size()) {
            const double ref = std::max(poles.cwiseAbs().maxCoeff(), 1e-300);
            for (Eigen::Index n = 0; n < N; ++n) {
                double best = std::numeric_limits<double>::infinity();
                for (Eigen::Index k = 0; k < N; ++k) best = std::min(best, std::abs(new_poles(n) - poles(k)));
                change = std::max(change, best / ref);
            }
        }
        poles = new_poles;
        result.iterations_run = it + 1;
        if (change < 1e-13) break;
    }
    result.converged = change < 1e-8;

    // Poles far above the band act as constants and would make the residue
    // problem rank deficient against the asymptote column.
    {
        const double far = 1e4 * samples.back().omega;
        std::vector<cdouble> kept;
        for (Eigen::Index n = 0; n < poles.size(); ++n)
            if (std::abs(poles(n)) <= far) kept.push_back(poles(n));
        if (static_cast<Eigen::Index>(kept.size()) < poles.size()) {
            result.message = std::to_string(poles.size() - static_cast<Eigen::Index>(kept.size())) +
                             " pole(s) beyond 1e4 * max(omega) discarded";
            poles = Eigen::Map<CVector>(kept.data(), static_cast<Eigen::Index>(kept.size()));
        }
    }

    // Residue identification with the final poles.
    const Eigen::Index Nf = poles.size();
    const CMatrix phi = basis(poles, s);
    const Eigen::Index n_local = Nf + n_asym;
    CMatrix a(K, n_local);
    a.leftCols(Nf) = phi;
    if (n_asym >= 1) a.col(Nf) = CVector::Ones(K);
    if (n_asym >= 2)
        for (Eigen::Index k = 0; k < K; ++k) a(k, Nf + 1) = s[k];
    const RMatrix ar = realify(a);

    RationalModel& model = result.model;
    model.poles = poles;
    model.residues.assign(static_cast<std::size_t>(Nf), CMatrix::Zero(m, m));
    model.d = CMatrix::Zero(m, m);
    model.e = CMatrix::Zero(m, m);
    for (Eigen::Index e = 0; e < ne; ++e) {
        const CVector h = entry_column(e) / weight(e);
        const RVector x = solve_ls(ar, realify(h), "residue identification");
        const Eigen::Index r = e / m, c = e % m;
        for (Eigen::Index n = 0; n < Nf;) {
            if (is_pair_head(poles, n)) {
                model.residues[n](r, c) = cdouble(x(n), x(n + 1));
                model.residues[n + 1](r, c) = cdouble(x(n), -x(n + 1));
                n += 2;
            } else {
                model.residues[n](r, c) = x(n);
                n += 1;
            }
        }
        if (n_asym >= 1) model.d(r, c) = x(Nf);
        if (n_asym >= 2) model.e(r, c) = x(Nf + 1);
    }

    double err2 = 0.0, ref2 = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const CMatrix diff = model.evaluate(s[k]) - samples[k].value;
        err2 += diff.squaredNorm();
        ref2 += samples[k].value.squaredNorm();
        const double nrm = samples[k].value.norm();
        worst = std::max(worst, nrm > 0.0 ? diff.norm() / nrm : diff.norm());
    }
    result.rms_relative = ref2 > 0.0 ? std::sqrt(err2 / ref2) : std::sqrt(err2);
    result.max_relative = worst;
    if (!result.converged) {
        result.status = FitStatus::warning;
        if (!result.message.empty()) result.message += "; ";
        result.message += "pole relocation did not converge within " + std::to_string(opt.iterations) + " iterations";
    }
    if (result.rms_relative > opt.tolerance) {
        result.status = FitStatus::warning;
        if (!result.message.empty()) result.message += "; ";
        result.message += "rms relative error " + std::to_string(result.rms_relative) + " above tolerance";
    }
    return result;
}

/// Replaces each pair's residues by their conjugate-symmetric average.
inline RationalModel enforce_conjugate_pairs(RationalModel model) {
    for (Eigen::Index n = 0; n + 1 < model.poles.size(); ++n) {
        if (model.poles(n).imag() > 0.0 && std::abs(model.poles(n + 1) - std::conj(model.poles(n))) == 0.0) {
            const CMatrix avg = 0.5 * (model.residues[n] + model.residues[n + 1].conjugate());
            model.residues[n] = avg;
            model.residues[n + 1] = avg.conjugate();
            ++n;
        }
    }
    return model;
}

}  // namespace mai
