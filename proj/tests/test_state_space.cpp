#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"

using namespace mai;

namespace {

RMatrix companion() {
    RMatrix a(2, 2);
    a << 0.0, 1.0, -2.0, -3.0;
    return a;
}

Eigen::Index index_of(const EigenStructure& eig, cdouble lambda) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < eig.size(); ++i)
        if (std::abs(eig.values(i) - lambda) < std::abs(eig.values(best) - lambda)) best = i;
    return best;
}

}  // namespace

TEST(Interconnect, SingleCapacitorBus) {
    NetworkDescription net{1, 100.0, {}, {{1, ShuntKind::capacitive, 0.01, {}}}, {}};
    const auto ss = interconnect(net);
    ASSERT_EQ(ss.n_states(), 2);
    RMatrix expect(2, 2);
    expect << 0.0, 100.0, -100.0, 0.0;
    EXPECT_LT((ss.A - expect).norm(), 1e-12);
    EXPECT_LT((ss.B - RMatrix::Identity(2, 2) * 100.0).norm(), 1e-12);
}

TEST(Interconnect, LineBetweenCapacitorsMatchesImpedancePoles) {
    NetworkDescription net{2, 100.0 * std::numbers::pi, {{BranchKind::line, 1, 2, 0.2, 1e-3, 1.0, {}}},
                           {{1, ShuntKind::capacitive, 2e-4, {}}, {2, ShuntKind::capacitive, 3e-4, {}}}, {}};
    const auto ss = interconnect(net);
    ASSERT_EQ(ss.n_states(), 6);
    const auto eig = eigendecompose(ss.A);
    const WholeSystemModel model(net);
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
        const CMatrix y = model.admittance(eig.values(i));
        SquareSvd svd(y);
        const auto& sv = svd.singularValues();
        EXPECT_LT(sv(sv.size() - 1) / sv(0), 1e-10) << eig.values(i);
    }
}

TEST(Interconnect, TransferEqualsImpedance) {
    for (const char* name : {"two_bus.json", "three_bus.json"}) {
        const auto net = load_network(testkit::network_path(name));
        const auto ss = interconnect(net);
        const WholeSystemModel model(net);
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> re(-50.0, 50.0), im(1.0, 8000.0);
        for (int k = 0; k < 5; ++k) {
            const cdouble s(re(rng), im(rng));
            const CMatrix z = model.impedance(s);
            EXPECT_LT((extract_port_transfer(ss, all_ports(ss), s) - z).norm(), 1e-10 * z.norm()) << name << s;
        }
    }
}

TEST(Interconnect, SampledApparatusUnsupported) {
    NetworkDescription net{1, 1.0, {}, {{1, ShuntKind::resistive, 1.0, {}}}, {}};
    SampledResponse sr;
    sr.samples = {{1.0, DqBlock::Identity()}, {2.0, DqBlock::Identity()}};
    net.apparatus.push_back({1, 0.0, sr, {}});
    EXPECT_THROW(interconnect(net), UnsupportedForOracleError);
    EXPECT_FALSE(oracle_capable(net));
}

TEST(Interconnect, AlgebraicBusNeedsStaticAdmittance) {
    NetworkDescription net{2, 100.0, {{BranchKind::line, 1, 2, 0.1, 1e-3, 1.0, {}}},
                           {{1, ShuntKind::capacitive, 1e-3, {}}}, {}};
    EXPECT_THROW(interconnect(net), UnsupportedForOracleError);
    net.shunts.push_back({2, ShuntKind::resistive, 5.0, {}});
    const auto ss = interconnect(net);
    EXPECT_EQ(ss.n_states(), 4);
    const WholeSystemModel model(net);
    const cdouble s(0, 250.0);
    EXPECT_LT((extract_port_transfer(ss, all_ports(ss), s) - model.impedance(s)).norm(), 1e-10 * model.impedance(s).norm());
}

TEST(Eigendecompose, Companion) {
    const auto eig = eigendecompose(companion());
    const auto i1 = index_of(eig, -1.0), i2 = index_of(eig, -2.0);
    EXPECT_NEAR(std::abs(eig.values(i1) + 1.0), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(eig.values(i2) + 2.0), 0.0, 1e-14);
    const CVector p1 = eig.phi.col(i1), p2 = eig.phi.col(i2);
    EXPECT_NEAR(std::abs(p1(1) / p1(0) + 1.0), 0.0, 1e-13);
    EXPECT_NEAR(std::abs(p2(1) / p2(0) + 2.0), 0.0, 1e-13);
    EXPECT_LT((eig.psi * eig.phi - CMatrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(Eigendecompose, Diagonal) {
    RMatrix a = RMatrix::Zero(3, 3);
    a.diagonal() << -1.0, -4.0, 2.5;
    const auto eig = eigendecompose(a);
    EXPECT_LT((eig.phi.cwiseAbs() - RMatrix::Identity(3, 3)).norm(), 1e-15);
    EXPECT_LT((eig.psi.cwiseAbs() - RMatrix::Identity(3, 3)).norm(), 1e-15);
    EXPECT_LT((participation_matrix(eig) - CMatrix::Identity(3, 3)).norm(), 1e-15);
}

TEST(Eigendecompose, JordanBlockIsDefective) {
    RMatrix a(2, 2);
    a << 0.0, 1.0, 0.0, 0.0;
    EXPECT_THROW(eigendecompose(a), DefectiveMatrixError);
}

TEST(Participation, CompanionColumn) {
    const auto eig = eigendecompose(companion());
    const CMatrix p = participation_matrix(eig);
    const auto i = index_of(eig, -1.0);
    EXPECT_NEAR(std::abs(p(0, i) - 2.0), 0.0, 1e-13);
    EXPECT_NEAR(std::abs(p(1, i) + 1.0), 0.0, 1e-13);
}

TEST(Participation, ColumnSumsAreOne) {
    std::mt19937 rng(3);
    for (int n : {3, 7, 12, 20}) {
        const auto eig = eigendecompose(testkit::random_diagonalizable(rng, n));
        const CMatrix p = participation_matrix(eig);
        for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(std::abs(p.col(i).sum() - 1.0), 0.0, 1e-10);
    }
}

TEST(EigenvalueSensitivity, CompanionEntry) {
    const auto eig = eigendecompose(companion());
    const CMatrix d = eigenvalue_sensitivity_matrix(eig, index_of(eig, -1.0));
    EXPECT_NEAR(std::abs(d(1, 0) - 1.0), 0.0, 1e-13);
}

TEST(EigenvalueSensitivity, DiagonalIsParticipation) {
    std::mt19937 rng(4);
    const auto eig = eigendecompose(testkit::random_diagonalizable(rng, 6));
    const CMatrix p = participation_matrix(eig);
    for (Eigen::Index i = 0; i < 6; ++i)
        EXPECT_LT((eigenvalue_sensitivity_matrix(eig, i).diagonal() - p.col(i)).norm(), 1e-13);
}

TEST(EigenvalueSensitivity, CentralDifference) {
    std::mt19937 rng(9);
    const RMatrix a = testkit::random_diagonalizable(rng, 5);
    const auto eig = eigendecompose(a);
    const double h = 1e-7;
    for (Eigen::Index i = 0; i < 5; ++i) {
        const CMatrix d = eigenvalue_sensitivity_matrix(eig, i);
        for (int k = 0; k < 5; ++k)
            for (int j = 0; j < 5; ++j) {
                RMatrix ap = a, am = a;
                ap(k, j) += h;
                am(k, j) -= h;
                const auto ep = eigendecompose(ap), em = eigendecompose(am);
                const cdouble fd = (ep.values(index_of(ep, eig.values(i))) - em.values(index_of(em, eig.values(i)))) / (2 * h);
                EXPECT_LT(std::abs(fd - d(k, j)), 1e-5 * std::max(std::abs(d(k, j)), 1e-2)) << i << " " << k << " " << j;
            }
    }
}

TEST(ResolventResidue, Companion) {
    const CMatrix r = resolvent_residue(companion(), -1.0);
    CMatrix expect(2, 2);
    expect << 2.0, 1.0, -2.0, -1.0;
    EXPECT_LT((r - expect).norm(), 1e-12);
}

TEST(ResolventResidue, TraceIsOneAndMatchesLimit) {
    std::mt19937 rng(21);
    const RMatrix a = testkit::random_diagonalizable(rng, 8);
    const auto eig = eigendecompose(a);
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
        const CMatrix r = resolvent_residue(a, eig.values(i));
        EXPECT_NEAR(std::abs(r.trace() - 1.0), 0.0, 1e-9);
        const cdouble s = eig.values(i) + 1e-6;
        const CMatrix lim = (s - eig.values(i)) * (s * CMatrix::Identity(8, 8) - a.cast<cdouble>()).inverse();
        EXPECT_LT((lim - r).norm(), 1e-4 * r.norm());
    }
}

TEST(ResolventResidue, RejectsRepeatedAndNonEigenvalues) {
    RMatrix a = RMatrix::Zero(3, 3);
    a.diagonal() << -1.0, -1.0, -2.0;
    EXPECT_THROW(resolvent_residue(a, -1.0), DefectiveMatrixError);
    EXPECT_THROW(resolvent_residue(a, -1.5), InputError);
}

TEST(ParameterSensitivity, UnitDirectionGivesParticipation) {
    std::mt19937 rng(8);
    const auto eig = eigendecompose(testkit::random_diagonalizable(rng, 5));
    const CMatrix p = participation_matrix(eig);
    for (int k = 0; k < 5; ++k) {
        RMatrix da = RMatrix::Zero(5, 5);
        da(k, k) = 1.0;
        EXPECT_NEAR(std::abs(parameter_sensitivity_ss(eig, 2, da).derivative - p(k, 2)), 0.0, 1e-12);
    }
}

TEST(ParameterSensitivity, ImplicitDifferentiation) {
    const auto eig = eigendecompose(companion());
    RMatrix da = RMatrix::Zero(2, 2);
    da(1, 0) = -1.0;  // A(rho) = [[0, 1], [-rho, -3]]
    EXPECT_NEAR(std::abs(parameter_sensitivity_ss(eig, index_of(eig, -1.0), da).derivative + 1.0), 0.0, 1e-13);
}

TEST(ParameterSensitivity, FiniteDifference) {
    std::mt19937 rng(12);
    const RMatrix a0 = testkit::random_diagonalizable(rng, 6), a1 = testkit::random_diagonalizable(rng, 6);
    auto a_of = [&](double rho) { return RMatrix(a0 + rho * rho * a1 * 0.1); };
    const double rho = 0.7, h = 1e-6;
    const auto eig = eigendecompose(a_of(rho));
    const RMatrix da = 2.0 * rho * a1 * 0.1;
    for (Eigen::Index i = 0; i < 6; ++i) {
        const auto ep = eigendecompose(a_of(rho + h)), em = eigendecompose(a_of(rho - h));
        const cdouble fd = (ep.values(index_of(ep, eig.values(i))) - em.values(index_of(em, eig.values(i)))) / (2 * h);
        const cdouble an = parameter_sensitivity_ss(eig, i, da).derivative;
        EXPECT_LT(std::abs(fd - an), 1e-5 * std::abs(an)) << i;
    }
    EXPECT_THROW(parameter_sensitivity_ss(eig, 0, RMatrix::Zero(3, 3)), InputError);
}

TEST(PortSelection, AllPortsIsFullTransfer) {
    const auto net = load_network(testkit::network_path("two_bus.json"));
    const auto ss = interconnect(net);
    const cdouble s(-3.0, 222.0);
    const CMatrix full = ss.C.cast<cdouble>() *
                             (s * CMatrix::Identity(ss.n_states(), ss.n_states()) - ss.A.cast<cdouble>()).inverse() *
                             ss.B.cast<cdouble>() +
                         ss.D.cast<cdouble>();
    EXPECT_LT((extract_port_transfer(ss, all_ports(ss), s) - full).norm(), 1e-12 * full.norm());
}

TEST(PortSelection, SubsetOfInputsAndOutputs) {
    // Five inputs and six outputs; keep inputs 1, 2, 4, 5 and outputs 1, 2, 5, 6.
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    StateSpaceModel m;
    m.A = testkit::random_diagonalizable(rng, 7);
    m.B = RMatrix::NullaryExpr(7, 5, [&] { return u(rng); });
    m.C = RMatrix::NullaryExpr(6, 7, [&] { return u(rng); });
    m.D = RMatrix::NullaryExpr(6, 5, [&] { return u(rng); });
    const PortSelection sel{{0, 1, 3, 4}, {0, 1, 4, 5}};
    const cdouble s(0.3, 2.0);
    const CMatrix full = extract_port_transfer(m, all_ports(m), s);
    const CMatrix sub = extract_port_transfer(m, sel, s);
    ASSERT_EQ(sub.rows(), 4);
    ASSERT_EQ(sub.cols(), 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_EQ(sub(r, c), full(sel.outputs[r], sel.inputs[c]));
    const auto eig = eigendecompose(m.A);
    const CMatrix rfull = port_residue(m, all_ports(m), eig, 0), rsub = port_residue(m, sel, eig, 0);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(std::abs(rsub(r, c) - rfull(sel.outputs[r], sel.inputs[c])), 0.0, 1e-14);
    EXPECT_THROW(extract_port_transfer(m, {{0, 5}, {0}}, s), InputError);
    EXPECT_THROW(extract_port_transfer(m, {{0, 0}, {0}}, s), InputError);
}
