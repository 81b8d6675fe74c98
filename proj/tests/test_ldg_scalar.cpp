#include <catch2/catch_amalgamated.hpp>

#include <ldgmg/ldg_scalar.hpp>

#include "ref_assembly.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

using namespace ldgmg;

namespace {

std::array<BoundaryKind, 6> all_sides(BoundaryKind k) { return {k, k, k, k, k, k}; }

PhaseGeometry slab_geometry(double mu_in, double mu_out) {
    PhaseGeometry g;
    g.regions.push_back({{0.25, 0, 0}, {0.75, 1, 1}, mu_in, 1.0});
    g.regions.push_back({{0, 0, 0}, {1, 1, 1}, mu_out, 1.0});
    return g;
}

std::vector<double> per_element_mu(const Mesh& m, const PhaseGeometry& g) {
    std::vector<double> mu(m.elements.size());
    for (size_t e = 0; e < m.elements.size(); ++e) mu[e] = g.regions[m.elements[e].phase].mu;
    return mu;
}
std::vector<double> per_element_rho(const Mesh& m, const PhaseGeometry& g) {
    std::vector<double> rho(m.elements.size());
    for (size_t e = 0; e < m.elements.size(); ++e) rho[e] = g.regions[m.elements[e].phase].rho;
    return rho;
}

double rel_frob(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    return (got - want).norm() / want.norm();
}

BlockVec project_solution(const ScalarProblem& P,
                          const std::function<double(const Point&, int)>& exact) {
    const ElementBasis B(P.degree, P.mesh.dim);
    BlockVec u((int)P.mesh.elements.size(), B.block_size);
    for (size_t e = 0; e < P.mesh.elements.size(); ++e) {
        const Element& el = P.mesh.elements[e];
        const int ph = el.phase;
        auto c = l2_project(B, {el.lo(0), el.lo(1), el.lo(2)}, el.size(),
                            [&](const Point& x) { return exact(x, ph); });
        std::copy(c.begin(), c.end(), u.block((int)e));
    }
    return u;
}

double residual_vs_rhs(const System& S, const BlockVec& u) {
    BlockVec r = spmv(S.A, u);
    axpy(-1.0, S.b, r);
    return norm2(r) / (1.0 + norm2(S.b));
}

}  // namespace

TEST_CASE("assembled operator matches the dense quadrature-level reference") {
    struct Case {
        std::string name;
        int n, dim;
        std::array<BoundaryKind, 6> bc;
        PhaseGeometry geom;
    };
    std::array<BoundaryKind, 6> mixed = {BoundaryKind::Neumann,  BoundaryKind::Neumann,
                                         BoundaryKind::Dirichlet, BoundaryKind::Dirichlet,
                                         BoundaryKind::Periodic, BoundaryKind::Periodic};
    const std::vector<Case> cases = {
        {"periodic", 4, 2, all_sides(BoundaryKind::Periodic), PhaseGeometry::single(2.3)},
        {"dirichlet", 4, 2, all_sides(BoundaryKind::Dirichlet), PhaseGeometry::single(1.0)},
        {"mixed", 4, 2, mixed, PhaseGeometry::single(0.7)},
        {"two-phase", 4, 2, all_sides(BoundaryKind::Periodic), slab_geometry(1.0, 1e4)},
        {"two-phase-flip", 4, 2, all_sides(BoundaryKind::Periodic), slab_geometry(1e4, 1.0)},
        {"periodic-3d", 2, 3, all_sides(BoundaryKind::Periodic), PhaseGeometry::single(1.5)},
        {"dirichlet-3d", 2, 3, all_sides(BoundaryKind::Dirichlet), PhaseGeometry::single(1.0)},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        ScalarProblem P;
        P.mesh = build_uniform(c.n, c.dim, c.bc);
        P.phases = c.geom;
        if (c.geom.regions.size() > 1) assign_phases(P.mesh, c.geom);
        P.degree = 1;
        const System S = assemble_scalar(P);

        refasm::Ref ref(P.mesh, per_element_mu(P.mesh, c.geom), per_element_rho(P.mesh, c.geom),
                        4.0);  // beta defaults to 4 * degree^2 = 4
        const Eigen::MatrixXd want = ref.scalar_operator();
        CHECK(rel_frob(to_dense(S.A), want) <= 1e-12);
    }
}

TEST_CASE("operator is symmetric, positive on the constant complement") {
    ScalarProblem P;
    P.mesh = build_uniform(4, 2, BoundaryKind::Periodic);
    P.degree = 2;
    const System S = assemble_scalar(P);
    const Eigen::MatrixXd A = to_dense(S.A);
    CHECK((A - A.transpose()).norm() <= 1e-12 * A.norm());
    CHECK(S.kernel_constants);

    const auto kern = kernel_basis(S);
    REQUIRE(kern.size() == 1);
    CHECK(norm2(spmv(S.A, kern[0])) <= 1e-12 * frob_norm(S.A));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    BlockVec x(S.n_elements(), S.block_size());
    for (auto& v : x.data) v = u(rng);
    const double proj = dot(x, kern[0]);
    axpy(-proj, kern[0], x);
    BlockVec Ax = spmv(S.A, x);
    CHECK(dot(x, Ax) > 0.0);

    // Dirichlet: strictly positive definite, no kernel flag.
    ScalarProblem Pd = P;
    Pd.mesh = build_uniform(4, 2, BoundaryKind::Dirichlet);
    const System Sd = assemble_scalar(Pd);
    CHECK_FALSE(Sd.kernel_constants);
    CHECK(kernel_basis(Sd).empty());
    const Eigen::VectorXd ev = sym_eig(to_dense(Sd.A)).lambda;
    CHECK(ev.minCoeff() > 0.0);
}

TEST_CASE("discrete gradient is exact on linears, including boundary lifting") {
    auto check_linear = [](const Mesh& mesh, double ax, double ay, double a0) {
        ScalarProblem P;
        P.mesh = mesh;
        P.degree = 2;
        P.dirichlet = [=](const Point& x) { return ax * x[0] + ay * x[1] + a0; };
        const ScalarOperator op = build_scalar_operator(P);
        const BlockVec u = project_solution(
            P, [=](const Point& x, int) { return ax * x[0] + ay * x[1] + a0; });
        const double grad[2] = {ax, ay};
        for (int k = 0; k < 2; ++k) {
            const BlockVec g = discrete_gradient(op, k, u);
            double err = 0.0;
            for (int e = 0; e < op.ctx.n_elements(); ++e) {
                // projection of the constant grad[k]: only mode 0 is set
                err = std::max(err, std::abs(g.block(e)[0] - grad[k] * 2.0));
                for (int i = 1; i < op.ctx.bs; ++i)
                    err = std::max(err, std::abs(g.block(e)[i]));
            }
            CAPTURE(k);
            CHECK(err <= 1e-12);
        }
    };
    // Uniform grid, Dirichlet in x, periodic in y (periodic needs ay = 0 for
    // a continuous field).
    std::array<BoundaryKind, 6> bc = {BoundaryKind::Dirichlet, BoundaryKind::Dirichlet,
                                      BoundaryKind::Periodic,  BoundaryKind::Periodic,
                                      BoundaryKind::Periodic,  BoundaryKind::Periodic};
    check_linear(build_uniform(4, 2, bc), 2.0, 0.0, 0.5);
    // Graded tree with hanging faces, Dirichlet everywhere, full linear.
    check_linear(build_quadtree(4, 2, {0, 0}, 0.75, all_sides(BoundaryKind::Dirichlet)),
                 2.0, -3.0, 1.0);

    // Constants have exactly vanishing gradients on a fully periodic mesh
    // (volume and wrap-face contributions cancel).
    ScalarProblem P;
    P.mesh = build_uniform(4, 2, BoundaryKind::Periodic);
    P.degree = 3;
    const ScalarOperator op = build_scalar_operator(P);
    const BlockVec c1 = project_solution(P, [](const Point&, int) { return 1.0; });
    for (int k = 0; k < 2; ++k) CHECK(norm2(spmv(op.G[k], c1)) <= 1e-12);
}

TEST_CASE("two-phase slab with prescribed jumps is reproduced exactly") {
    // Piecewise linear in x, periodic: inner phase u0 = a0 x + b0, outer
    // phase constant b1 (periodicity forces zero outer slope), so both value
    // and flux jump at the two interfaces.
    const double mu0 = 3.0, mu1 = 7.0, a0 = 2.0, b0 = 0.3, b1 = 0.1;
    ScalarProblem P;
    P.mesh = build_uniform(8, 2, BoundaryKind::Periodic);
    P.phases = slab_geometry(mu0, mu1);
    assign_phases(P.mesh, P.phases);
    P.degree = 2;
    auto u0 = [=](double x) { return a0 * x + b0; };
    P.jump_u = [=](const Point& x, int) {
        return x[0] < 0.5 ? u0(0.25) - b1 : b1 - u0(0.75);
    };
    P.jump_flux = [=](const Point& x, int) { return x[0] < 0.5 ? mu0 * a0 : -mu0 * a0; };
    auto exact = [=](const Point& x, int phase) { return phase == 0 ? u0(x[0]) : b1; };

    const RhsCheckReport rep = interface_rhs_check(P, exact);
    CAPTURE(rep.text);
    CHECK(rep.jump_u_err <= 1e-12);
    CHECK(rep.jump_flux_err <= 1e-11);
    CHECK(rep.relative <= 1e-12);
    CHECK(rep.text.find("interface_faces=16") != std::string::npos);

    // Flipping the jump orientation and negating the data must leave the
    // right-hand side untouched, and the operator never changes.
    const System S1 = assemble_scalar(P);
    ScalarProblem Pf = P;
    Pf.interface_sign = -1;
    Pf.jump_u = [=](const Point& x, int a) { return -P.jump_u(x, a); };
    Pf.jump_flux = [=](const Point& x, int a) { return -P.jump_flux(x, a); };
    const System S2 = assemble_scalar(Pf);
    CHECK(S1.b.data == S2.b.data);
    CHECK(S1.A.val == S2.A.val);
}

TEST_CASE("manufactured quadratic hits boundary data paths exactly") {
    auto exact = [](const Point& x, int) { return (x[0] - 0.3) * (x[0] - 0.3); };
    const double mu = 1.7;

    std::array<BoundaryKind, 6> neum = {BoundaryKind::Neumann, BoundaryKind::Neumann,
                                        BoundaryKind::Periodic, BoundaryKind::Periodic,
                                        BoundaryKind::Periodic, BoundaryKind::Periodic};
    ScalarProblem P;
    P.mesh = build_uniform(4, 2, neum);
    P.phases = PhaseGeometry::single(mu);
    P.degree = 2;
    P.f = [=](const Point&) { return -2.0 * mu; };
    P.neumann = [=](const Point& x, int, int out) { return mu * 2.0 * (x[0] - 0.3) * out; };
    CHECK(residual_vs_rhs(assemble_scalar(P), project_solution(P, exact)) <= 1e-12);

    std::array<BoundaryKind, 6> diri = neum;
    diri[0] = diri[1] = BoundaryKind::Dirichlet;
    ScalarProblem Pd = P;
    Pd.mesh = build_uniform(4, 2, diri);
    Pd.neumann = nullptr;
    Pd.dirichlet = [=](const Point& x) { return exact(x, 0); };
    CHECK(residual_vs_rhs(assemble_scalar(Pd), project_solution(Pd, exact)) <= 1e-12);

    // Same solution on a graded tree with hanging faces, all Dirichlet.
    ScalarProblem Pq = Pd;
    Pq.mesh = build_quadtree(4, 2, {0, 0}, 0.75, all_sides(BoundaryKind::Dirichlet));
    CHECK(residual_vs_rhs(assemble_scalar(Pq), project_solution(Pq, exact)) <= 1e-12);
}

TEST_CASE("load vector equals mass-scaled projection") {
    ScalarProblem P;
    P.mesh = build_uniform(4, 2, BoundaryKind::Periodic);
    P.degree = 2;
    auto f = [](const Point& x) { return x[0] * x[0] * x[1] - 0.5 * x[1]; };
    const ldg::Ctx c(P.mesh, P.phases, P.degree, -1.0);
    const BlockVec b = ldg::load_vector(c, f);
    for (int e = 0; e < c.n_elements(); ++e) {
        const Element& el = P.mesh.elements[e];
        const auto proj = l2_project(c.B, {el.lo(0), el.lo(1), el.lo(2)}, el.size(), f);
        for (int i = 0; i < c.bs; ++i)
            CHECK(b.block(e)[i] == Catch::Approx(c.msc[e] * proj[i]).margin(1e-15));
    }
}

TEST_CASE("penalty scale defaults to four times the squared degree") {
    ScalarProblem P;
    P.mesh = build_uniform(4, 2, BoundaryKind::Dirichlet);
    P.degree = 3;
    const System Sdef = assemble_scalar(P);
    P.beta = 36.0;
    const System Sexp = assemble_scalar(P);
    CHECK(Sdef.A.val == Sexp.A.val);

    const ldg::Ctx c(P.mesh, P.phases, 3, -1.0);
    CHECK(c.beta == 36.0);
    for (const Face& f : P.mesh.faces) {
        CHECK(c.penalty_tau(f) == 36.0 * 1.0 / f.size);
        break;
    }
}

TEST_CASE("donor selection prefers the more viscous side") {
    ScalarProblem P;
    P.mesh = build_uniform(8, 2, BoundaryKind::Periodic);
    P.phases = slab_geometry(2.0, 5.0);  // outer more viscous
    assign_phases(P.mesh, P.phases);
    const ldg::Ctx c(P.mesh, P.phases, 1, -1.0);
    int seen = 0;
    for (const Face& f : P.mesh.faces) {
        if (!interface_face(P.mesh, f)) continue;
        ++seen;
        const int d = c.donor(f);
        CHECK(P.mesh.elements[d].phase == 1);  // the mu = 5 side donates
        CHECK(c.penalty_tau(f) == c.beta * 5.0 / f.size);
    }
    CHECK(seen == 16);

    // Equal viscosities: donor falls back to the lower side.
    ScalarProblem Pe = P;
    Pe.phases = slab_geometry(4.0, 4.0);
    assign_phases(Pe.mesh, Pe.phases);
    const ldg::Ctx ce(Pe.mesh, Pe.phases, 1, -1.0);
    for (const Face& f : Pe.mesh.faces)
        if (f.kind == FaceKind::Interior) CHECK(ce.donor(f) == f.left);
}

TEST_CASE("invalid scalar problems are rejected") {
    ScalarProblem P;
    P.mesh = build_uniform(4, 2, BoundaryKind::Periodic);
    P.degree = 6;
    CHECK_THROWS(assemble_scalar(P));  // 2D degree cap is 5
    P.degree = 0;
    CHECK_THROWS(assemble_scalar(P));
    P.degree = 2;
    P.interface_sign = 0;
    CHECK_THROWS(assemble_scalar(P));
    P.interface_sign = 1;

    ScalarProblem P3;
    P3.mesh = build_uniform(2, 3, BoundaryKind::Periodic);
    P3.degree = 4;
    CHECK_THROWS(assemble_scalar(P3));  // 3D degree cap is 3

    // Phase table inconsistencies.
    ScalarProblem Pp;
    Pp.mesh = build_uniform(4, 2, BoundaryKind::Periodic);
    Pp.phases = slab_geometry(1.0, 2.0);
    // phases never assigned: second region owns nothing
    CHECK_THROWS(assemble_scalar(Pp));
    Pp.mesh.elements[0].phase = 7;  // outside the region table
    CHECK_THROWS(assemble_scalar(Pp));
}
