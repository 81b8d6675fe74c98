#include <catch2/catch_amalgamated.hpp>

#include <ldgmg/ldg_scalar.hpp>
#include <ldgmg/ldg_stokes.hpp>
#include <ldgmg/multigrid.hpp>

#include <Eigen/Dense>

#include <random>

using namespace ldgmg;

namespace {

std::array<BoundaryKind, 6> all_sides(BoundaryKind k) { return {k, k, k, k, k, k}; }

ScalarProblem scalar_problem(int n, int dim, BoundaryKind bc, int degree = 1) {
    ScalarProblem P;
    P.mesh = build_uniform(n, dim, all_sides(bc));
    P.phases = PhaseGeometry::single(1.0);
    P.degree = degree;
    return P;
}

LevelAssembler scalar_assembler(const ScalarProblem& P) {
    return [P](const Mesh& m) {
        ScalarProblem Q = P;
        Q.mesh = m;
        return assemble_scalar(Q);
    };
}

LevelAssembler stokes_assembler(const StokesProblem& P) {
    return [P](const Mesh& m) {
        StokesProblem Q = P;
        Q.mesh = m;
        return assemble_stokes(Q);
    };
}

BlockVec random_vec(int n, int bs, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    BlockVec v(n, bs);
    for (double& x : v.data) x = U(rng);
    return v;
}

double rel_asym(const Multigrid& V, const BlockVec& u, const BlockVec& w) {
    const BlockVec Vu = V.apply(u), Vw = V.apply(w);
    const double a = dot(Vu, w), b = dot(u, Vw);
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

TEST_CASE("a wrapped uniform grid coarsens down to the two-element root") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Periodic);
    Multigrid mg(P.mesh, scalar_assembler(P), MultigridConfig{});
    REQUIRE(mg.depth() == 3);
    CHECK(mg.mesh(0).elements.size() == 64);
    CHECK(mg.mesh(1).elements.size() == 16);
    CHECK(mg.mesh(2).elements.size() == 4);

    const ScalarProblem P3 = scalar_problem(4, 3, BoundaryKind::Periodic);
    Multigrid mg3(P3.mesh, scalar_assembler(P3), MultigridConfig{});
    REQUIRE(mg3.depth() == 2);
    CHECK(mg3.mesh(1).elements.size() == 8);
}

TEST_CASE("each coarse operator equals a from-scratch assembly on that grid") {
    ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Dirichlet, 2);
    P.phases = PhaseGeometry::single(1.7);
    Multigrid mg(P.mesh, scalar_assembler(P), MultigridConfig{});
    REQUIRE(mg.depth() == 3);

    ScalarProblem Q = P;
    Q.mesh = build_uniform(4, 2, all_sides(BoundaryKind::Dirichlet));
    const System ref = assemble_scalar(Q);
    const System& got = mg.system(1);
    REQUIRE(got.A.col == ref.A.col);
    REQUIRE(got.A.ptr == ref.A.ptr);
    REQUIRE(got.A.val == ref.A.val);
}

TEST_CASE("a refined quadtree hierarchy bottoms out at its root grid") {
    const Mesh fine = build_quadtree(4, 4, {0.0, 0.0}, 0.75, all_sides(BoundaryKind::Neumann));
    ScalarProblem P;
    P.mesh = fine;
    P.degree = 1;
    Multigrid mg(fine, scalar_assembler(P), MultigridConfig{});
    REQUIRE(mg.depth() == 5);
    CHECK(mg.mesh(mg.depth() - 1).elements.size() == 16);
    for (const Element& e : mg.mesh(mg.depth() - 1).elements) CHECK(e.level == 2);
}

TEST_CASE("coarsening stops before a merge would mix phases") {
    ScalarProblem P = scalar_problem(16, 2, BoundaryKind::Periodic);
    PhaseGeometry g;
    g.regions.push_back({{0.25, 0.25, 0}, {0.75, 0.75, 1}, 100.0, 1.0});
    g.regions.push_back({{0, 0, 0}, {1, 1, 1}, 1.0, 1.0});
    P.phases = g;
    assign_phases(P.mesh, g);
    Multigrid mg(P.mesh, scalar_assembler(P), MultigridConfig{});
    // 16 -> 8 -> 4 all conform to the quarter-box; n=2 elements would straddle.
    REQUIRE(mg.depth() == 3);
    CHECK(mg.mesh(2).elements.size() == 16);
}

TEST_CASE("interpolation is the exact adjoint of residual restriction") {
    for (int dim : {2, 3}) {
        const ScalarProblem P = scalar_problem(dim == 2 ? 8 : 4, dim, BoundaryKind::Periodic, 2);
        Multigrid mg(P.mesh, scalar_assembler(P), MultigridConfig{});
        const int bs = mg.system(0).block_size();
        const BlockVec xc = random_vec(mg.system(1).n_elements(), bs, 11);
        const BlockVec yf = random_vec(mg.system(0).n_elements(), bs, 12);
        BlockVec Ix(mg.system(0).n_elements(), bs);
        mg.interpolate_add(0, xc, Ix);
        const BlockVec Ry = mg.restrict_residual(0, yf);
        const double a = dot(Ix, yf), b = dot(xc, Ry);
        CHECK(std::abs(a - b) <= 1e-13 * std::max(std::abs(a), std::abs(b)));
    }
}

TEST_CASE("restricting an interpolated field multiplies it by the child count") {
    for (int dim : {2, 3}) {
        const ScalarProblem P = scalar_problem(dim == 2 ? 8 : 4, dim, BoundaryKind::Periodic, 2);
        Multigrid mg(P.mesh, scalar_assembler(P), MultigridConfig{});
        const int bs = mg.system(0).block_size();
        const BlockVec xc = random_vec(mg.system(1).n_elements(), bs, 21);
        BlockVec Ix(mg.system(0).n_elements(), bs);
        mg.interpolate_add(0, xc, Ix);
        const BlockVec RIx = mg.restrict_residual(0, Ix);
        // The per-axis injections satisfy T0^T T0 + T1^T T1 = 2 I, so the
        // composite over the 2^d children is (2^d) I.
        const double scale = double(1 << dim);
        double err = 0.0;
        for (std::size_t i = 0; i < RIx.size(); ++i)
            err = std::max(err, std::abs(RIx.data[i] - scale * xc.data[i]));
        CHECK(err <= 1e-13 * scale);
    }
}

TEST_CASE("interpolation reproduces a constant field exactly on the children") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Periodic, 3);
    Multigrid mg(P.mesh, scalar_assembler(P), MultigridConfig{});
    const int bs = mg.system(0).block_size();
    BlockVec xc(mg.system(1).n_elements(), bs);
    for (int e = 0; e < xc.nblocks; ++e) xc.block(e)[0] = 1.25;
    BlockVec xf(mg.system(0).n_elements(), bs);
    mg.interpolate_add(0, xc, xf);
    for (int e = 0; e < xf.nblocks; ++e) {
        CHECK(std::abs(xf.block(e)[0] - 1.25) <= 1e-14);
        for (int i = 1; i < bs; ++i) CHECK(std::abs(xf.block(e)[i]) <= 1e-14);
    }
}

TEST_CASE("a depth-one hierarchy is the dense pseudoinverse solve") {
    const ScalarProblem P = scalar_problem(2, 2, BoundaryKind::Periodic, 1);
    MultigridConfig cfg;
    CHECK_THROWS_AS(Multigrid(P.mesh, scalar_assembler(P), cfg), std::invalid_argument);
    cfg.min_depth = 1;
    Multigrid mg(P.mesh, scalar_assembler(P), cfg);
    REQUIRE(mg.depth() == 1);

    const System S = assemble_scalar(P);
    const BlockVec b = random_vec(S.n_elements(), S.block_size(), 3);
    const BlockVec x = mg.apply(b);

    // Independent oracle: dense eigendecomposition pseudoinverse.
    const Eigen::MatrixXd A = to_dense(S.A);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXd bv(A.rows());
    for (int i = 0; i < (int)b.size(); ++i) bv[i] = b.data[i];
    Eigen::VectorXd t = es.eigenvectors().transpose() * bv;
    for (int i = 0; i < t.size(); ++i)
        t[i] = std::abs(es.eigenvalues()[i]) <= 1e-10 * lmax ? 0.0 : t[i] / es.eigenvalues()[i];
    const Eigen::VectorXd want = es.eigenvectors() * t;
    double err = 0.0, ref = 0.0;
    for (int i = 0; i < want.size(); ++i) {
        err = std::max(err, std::abs(want[i] - x.data[i]));
        ref = std::max(ref, std::abs(want[i]));
    }
    CHECK(err <= 1e-11 * ref);
}

TEST_CASE("the zero-guess v-cycle is a linear operator that fixes zero") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Dirichlet, 2);
    MultigridConfig cfg;
    cfg.smoother = SmootherConfig::coloured_gs();
    Multigrid mg(P.mesh, scalar_assembler(P), cfg);
    const int N = mg.system(0).n_elements(), bs = mg.system(0).block_size();

    const BlockVec zero(N, bs);
    CHECK(norm2(mg.apply(zero)) == 0.0);

    const BlockVec u = random_vec(N, bs, 5), w = random_vec(N, bs, 6);
    BlockVec lin(N, bs);
    for (std::size_t i = 0; i < lin.size(); ++i) lin.data[i] = 0.75 * u.data[i] - 1.5 * w.data[i];
    const BlockVec Vlin = mg.apply(lin);
    const BlockVec Vu = mg.apply(u), Vw = mg.apply(w);
    double err = 0.0;
    for (std::size_t i = 0; i < lin.size(); ++i)
        err = std::max(err, std::abs(Vlin.data[i] - (0.75 * Vu.data[i] - 1.5 * Vw.data[i])));
    CHECK(err <= 1e-12 * norm2(Vlin));
}

TEST_CASE("symmetric plans give a self-adjoint preconditioner, asymmetric do not") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Dirichlet, 2);
    const auto mk = [&](SmootherConfig s, Sweep pre, Sweep post) {
        MultigridConfig cfg;
        cfg.smoother = s;
        cfg.pre = pre;
        cfg.post = post;
        return cfg;
    };
    const int N = 64, bs = 9;
    const BlockVec u = random_vec(N, bs, 7), w = random_vec(N, bs, 8);

    struct Case {
        SmootherConfig s;
        Sweep pre, post;
        bool symmetric;
    };
    const Case cases[] = {
        {SmootherConfig::jacobi(0.8), Sweep::Forward, Sweep::Forward, true},
        {SmootherConfig::coloured_gs(), Sweep::Forward, Sweep::Reverse, true},
        {SmootherConfig::proc_block_gs(4), Sweep::Forward, Sweep::Reverse, true},
        {SmootherConfig::sai(1), Sweep::Forward, Sweep::Reverse, true},
        {SmootherConfig::sai(1), Sweep::Reverse, Sweep::Forward, true},
        {SmootherConfig::coloured_gs(), Sweep::Forward, Sweep::Forward, false},
        {SmootherConfig::sai(1), Sweep::Forward, Sweep::Forward, false},
        {SmootherConfig::sai(1), Sweep::Reverse, Sweep::Reverse, false},
    };
    for (const Case& c : cases) {
        Multigrid mg(P.mesh, scalar_assembler(P), mk(c.s, c.pre, c.post));
        CHECK(mg.symmetric() == c.symmetric);
        const double asym = rel_asym(mg, u, w);
        if (c.symmetric)
            CHECK(asym <= 1e-11);
        else
            CHECK(asym > 1e-9);
    }
}

TEST_CASE("the preconditioned operator spectrum clusters around one") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Dirichlet, 1);
    MultigridConfig cfg;
    cfg.smoother = SmootherConfig::coloured_gs();
    Multigrid mg(P.mesh, scalar_assembler(P), cfg);
    const System& S = mg.system(0);
    const int n = S.n_elements() * S.block_size();

    Eigen::MatrixXd VA(n, n);
    BlockVec col(S.n_elements(), S.block_size());
    for (int j = 0; j < n; ++j) {
        col.set_zero();
        col.data[j] = 1.0;
        const BlockVec Ae = spmv(S.A, col);
        const BlockVec VAe = mg.apply(Ae);
        for (int i = 0; i < n; ++i) VA(i, j) = VAe.data[i];
    }
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(VA, false).eigenvalues();
    double worst = 0.0;
    for (int i = 0; i < ev.size(); ++i)
        worst = std::max(worst, std::abs(1.0 - ev[i].real()) + std::abs(ev[i].imag()));
    CHECK(worst < 0.5);
}

TEST_CASE("the preconditioner preserves orthogonality to the kernel") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Periodic, 2);
    MultigridConfig cfg;
    cfg.smoother = SmootherConfig::coloured_gs();
    Multigrid mg(P.mesh, scalar_assembler(P), cfg);
    const System& S = mg.system(0);
    REQUIRE(S.kernel_constants);
    const auto kern = kernel_basis(S);
    REQUIRE(kern.size() == 1);

    BlockVec b = random_vec(S.n_elements(), S.block_size(), 9);
    axpy(-dot(b, kern[0]), kern[0], b);
    const BlockVec x = mg.apply(b);
    CHECK(std::abs(dot(x, kern[0])) <= 1e-10 * norm2(x));
}

TEST_CASE("v-cycle iteration contracts the residual at textbook rates") {
    const ScalarProblem P = scalar_problem(16, 2, BoundaryKind::Dirichlet, 2);
    MultigridConfig cfg;
    cfg.smoother = SmootherConfig::coloured_gs();
    Multigrid mg(P.mesh, scalar_assembler(P), cfg);
    const System& S = mg.system(0);

    const BlockVec b = random_vec(S.n_elements(), S.block_size(), 10);
    BlockVec x(S.n_elements(), S.block_size());
    const double r0 = norm2(b);
    double prev = r0;
    for (int it = 0; it < 5; ++it) {
        mg.cycle(x, b);
        BlockVec r = spmv(S.A, x);
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = b.data[i] - r.data[i];
        const double rn = norm2(r);
        CHECK(rn < 0.4 * prev);
        prev = rn;
    }
    CHECK(prev < 5e-3 * r0);
}

TEST_CASE("one least-squares solve serves every level of a wrapped hierarchy") {
    const ScalarProblem P = scalar_problem(16, 2, BoundaryKind::Periodic, 2);
    MultigridConfig cfg;
    cfg.smoother = SmootherConfig::sai(1);
    Multigrid mg(P.mesh, scalar_assembler(P), cfg);
    REQUIRE(mg.depth() == 4);
    // The wrapped 2D operator is scale-invariant under dyadic refinement, so
    // the n=8 level replays the n=16 level's cached solution.  On the n=4
    // level the reach-2 neighbourhood wraps onto itself (11 cells, not 13),
    // which is a genuinely different least-squares problem: one more solve.
    CHECK(mg.smoother(0).sai_stats().cache_misses == 1);
    CHECK(mg.smoother(0).sai_stats().cache_hits == 255);
    CHECK(mg.smoother(1).sai_stats().cache_misses == 0);
    CHECK(mg.smoother(1).sai_stats().cache_hits == 64);
    CHECK(mg.smoother(2).sai_stats().cache_misses == 1);
    CHECK(mg.smoother(2).sai_stats().cache_hits == 15);
}

TEST_CASE("stokes hierarchies assemble and smooth on every level") {
    StokesProblem P;
    P.mesh = build_uniform(8, 2, all_sides(BoundaryKind::Periodic));
    P.degree = 2;
    P.gamma = 1.0;
    MultigridConfig cfg;
    cfg.smoother = SmootherConfig::sai(1, 0.13);
    Multigrid mg(P.mesh, stokes_assembler(P), cfg);
    REQUIRE(mg.depth() == 3);
    CHECK(mg.system(1).kind == SystemKind::Stokes);

    const int N = mg.system(0).n_elements(), bs = mg.system(0).block_size();
    const BlockVec u = random_vec(N, bs, 13), w = random_vec(N, bs, 14);
    CHECK(rel_asym(mg, u, w) <= 1e-11);
}

TEST_CASE("construction rejects bad configurations") {
    const ScalarProblem P = scalar_problem(8, 2, BoundaryKind::Periodic, 1);
    MultigridConfig bad;
    bad.nu1 = -1;
    CHECK_THROWS_AS(Multigrid(P.mesh, scalar_assembler(P), bad), std::invalid_argument);

    // Partition count larger than a coarse level's element count.
    MultigridConfig pgs;
    pgs.smoother = SmootherConfig::proc_block_gs(32);
    CHECK_THROWS_AS(Multigrid(P.mesh, scalar_assembler(P), pgs), std::invalid_argument);

    // An assembler that changes the discretization between levels.
    ScalarProblem Q = P;
    LevelAssembler flaky = [Q](const Mesh& m) {
        ScalarProblem R = Q;
        R.mesh = m;
        R.degree = (int)m.elements.size() == 64 ? 1 : 2;
        return assemble_scalar(R);
    };
    CHECK_THROWS_AS(Multigrid(P.mesh, flaky, MultigridConfig{}), std::invalid_argument);
}
