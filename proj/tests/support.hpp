#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls the stamping or residue code under test.

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mai/mai.hpp"

namespace mai::testkit {

inline std::string network_path(const std::string& name) { return std::string(MAI_NETWORKS_DIR) + "/" + name; }

inline double rel_err(cdouble a, cdouble b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Builds Y_N column by column from KCL: apply a unit voltage on one
/// coordinate and sum the element currents leaving every bus.
inline CMatrix kcl_nodal_admittance(const NetworkDescription& net, cdouble s) {
    const Eigen::Index dim = 2 * net.n_buses;
    const double w0 = net.omega0;
    auto series_y = [&](double R, double L) {
        DqBlock z;
        z << R + s * L, -w0 * L, w0 * L, R + s * L;
        return DqBlock(z.inverse());
    };
    CMatrix y = CMatrix::Zero(dim, dim);
    for (Eigen::Index col = 0; col < dim; ++col) {
        CVector v = CVector::Zero(dim);
        v(col) = 1.0;
        CVector i = CVector::Zero(dim);
        auto volt = [&](int bus) { return Eigen::Vector2cd(v.segment<2>(2 * (bus - 1))); };
        auto inject = [&](int bus, const Eigen::Vector2cd& c) { i.segment<2>(2 * (bus - 1)) += c; };
        for (const auto& b : net.branches) {
            // Ideal transformer on the from side: the series element sees
            // v_from / k and its current is reflected as current / k.
            const Eigen::Vector2cd through = series_y(b.R, b.L) * (volt(b.from) / b.ratio - volt(b.to));
            inject(b.from, through / b.ratio);
            inject(b.to, -through);
        }
        for (const auto& sh : net.shunts) {
            DqBlock ysh;
            DqBlock m;
            m << s, -w0, w0, s;
            switch (sh.kind) {
            case ShuntKind::resistive: ysh = DqBlock::Identity() / sh.value; break;
            case ShuntKind::capacitive: ysh = sh.value * m; break;
            case ShuntKind::inductive: ysh = (sh.value * m).inverse(); break;
            }
            inject(sh.bus, ysh * volt(sh.bus));
        }
        y.col(col) = i;
    }
    return y;
}

/// Random connected RL network with 3-6 buses, resistive and capacitive
/// shunts at every bus and no apparatus.
inline NetworkDescription random_rl_network(std::mt19937& rng) {
    std::uniform_int_distribution<int> nb(3, 6);
    std::uniform_real_distribution<double> r(0.01, 0.2), l(1e-4, 1e-3), c(5e-5, 5e-4), g(5.0, 50.0);
    NetworkDescription net;
    net.n_buses = nb(rng);
    net.omega0 = 100.0 * std::numbers::pi;
    for (int b = 2; b <= net.n_buses; ++b) {
        std::uniform_int_distribution<int> parent(1, b - 1);
        net.branches.push_back({BranchKind::line, parent(rng), b, r(rng), l(rng), 1.0, {}});
    }
    net.branches.push_back({BranchKind::line, 1, net.n_buses, r(rng), l(rng), 1.0, {}});
    for (int b = 1; b <= net.n_buses; ++b) {
        net.shunts.push_back({b, ShuntKind::capacitive, c(rng), {}});
        net.shunts.push_back({b, ShuntKind::resistive, g(rng), {}});
    }
    return net;
}

/// Whole-system impedance with the series branch (j, k) replaced by z1
/// between j and a new bus f = n + 1 and z2 between f and k, obtained by
/// explicit inversion of the augmented admittance matrix.
inline CMatrix augmented_split_impedance(const CMatrix& y, int j, int k, const DqBlock& z1, const DqBlock& z2) {
    const Eigen::Index n2 = y.rows();
    const int f = static_cast<int>(n2 / 2) + 1;
    const DqBlock y_branch = (z1 + z2).inverse();
    const DqBlock y1 = z1.inverse(), y2 = z2.inverse();
    CMatrix a = CMatrix::Zero(n2 + 2, n2 + 2);
    a.topLeftCorner(n2, n2) = y;
    auto add = [&](int p, int q, const DqBlock& blk) { a.block<2, 2>(2 * (p - 1), 2 * (q - 1)) += blk; };
    // remove the original branch
    add(j, j, -y_branch);
    add(k, k, -y_branch);
    add(j, k, y_branch);
    add(k, j, y_branch);
    // z1 between j and f, z2 between f and k
    add(j, j, y1);
    add(f, f, y1);
    add(j, f, -y1);
    add(f, j, -y1);
    add(f, f, y2);
    add(k, k, y2);
    add(f, k, -y2);
    add(k, f, -y2);
    return a.inverse();
}

inline DqBlock block_of(const CMatrix& m, int p, int q) { return m.block<2, 2>(2 * (p - 1), 2 * (q - 1)); }

/// Random real matrix with prescribed, well separated eigenvalues.
inline RMatrix random_diagonalizable(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    RMatrix d = RMatrix::Zero(n, n);
    int i = 0;
    while (i < n) {
        if (i + 1 < n && u(rng) > 0.0) {
            const double re = -1.0 - 2.0 * (u(rng) + 1.0) - 0.7 * i, im = 1.0 + 3.0 * (u(rng) + 1.0) + 0.9 * i;
            d(i, i) = re;
            d(i, i + 1) = im;
            d(i + 1, i) = -im;
            d(i + 1, i + 1) = re;
            i += 2;
        } else {
            d(i, i) = -0.5 - 1.3 * i + 0.2 * u(rng);
            i += 1;
        }
    }
    RMatrix t(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) t(r, c) = u(rng) + (r == c ? 3.0 : 0.0);
    return t * d * t.inverse();
}

/// dq RL admittance y = ((R + sL) I + w0 L J)^{-1} sampled on a log grid.
inline std::vector<MatrixSample> rl_admittance_samples(double R, double L, double w0, double wmin, double wmax,
                                                       std::size_t points) {
    std::vector<MatrixSample> out;
    for (double w : log_grid(wmin, wmax, points)) {
        const cdouble s(0.0, w);
        out.push_back({w, CMatrix(dq_series_impedance(R, L, w0, s).inverse())});
    }
    return out;
}

}  // namespace mai::testkit
