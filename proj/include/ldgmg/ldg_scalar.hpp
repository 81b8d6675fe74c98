#ifndef LDGMG_LDG_SCALAR_HPP
#define LDGMG_LDG_SCALAR_HPP

/** \file ldg_scalar.hpp
 *  \brief LDG discretization of the variable-viscosity Poisson problem
 *         -div(mu grad u) = f with Dirichlet, Neumann, periodic and internal
 *         interface conditions.
 *
 *  The assembled operator is A = sum_k G_k^T M_mu G_k + E with G_k the
 *  one-sided discrete gradients and E the jump/boundary penalty.  A is
 *  symmetric positive (semi-)definite; constants span its kernel exactly
 *  when no Dirichlet face is present.
 */

#include <ldgmg/ldg_core.hpp>

#include <sstream>

namespace ldgmg {

struct ScalarProblem {
    Mesh mesh;
    PhaseGeometry phases = PhaseGeometry::single();
    int degree = 1;
    double beta = -1.0;  ///< penalty scale; <= 0 selects 4 * degree^2

    ScalarFn f;          ///< volume source
    ScalarFn dirichlet;  ///< boundary trace data g
    FluxFn neumann;      ///< outward flux data mu grad u . n
    JumpFn jump_u;       ///< interface [u], upper minus lower by default
    JumpFn jump_flux;    ///< interface [mu du/dx_axis]
    /// +1: jumps are upper minus lower along the face normal; -1 flips the
    /// reading of jump_u / jump_flux.  The operator is unaffected.
    int interface_sign = +1;
};

namespace ldg {

/// Jump callback with the problem's orientation convention folded in.
inline JumpFn oriented(const JumpFn& j, int sign) {
    if (!j) return nullptr;
    if (sign == +1) return j;
    return [j](const Point& x, int axis) { return -j(x, axis); };
}

}  // namespace ldg

/// Scalar system plus the pieces needed to evaluate discrete gradients of a
/// solution (used by consistency checks and the Stokes assembly).
struct ScalarOperator {
    ldg::Ctx ctx;
    std::array<BlockCsr, 3> G;
    BlockCsr E;
    std::array<BlockVec, 3> lift;  ///< raw face moments of boundary/jump data
};

inline ScalarOperator build_scalar_operator(const ScalarProblem& P) {
    if (P.interface_sign != 1 && P.interface_sign != -1)
        throw std::invalid_argument("scalar: interface_sign must be +1 or -1");
    ScalarOperator op;
    op.ctx = ldg::Ctx(P.mesh, P.phases, P.degree, P.beta);
    op.G = ldg::assemble_gradient_matrices(op.ctx);
    op.E = ldg::assemble_penalty(op.ctx);
    const JumpFn gj = ldg::oriented(P.jump_u, P.interface_sign);
    for (int k = 0; k < op.ctx.dim; ++k)
        op.lift[k] = ldg::gradient_moments(op.ctx, k, P.dirichlet, gj);
    return op;
}

/// Coefficients of the k-th component of the discrete gradient of u,
/// including the data lifting: tau_k = G_k u + M^{-1} c_k.
inline BlockVec discrete_gradient(const ScalarOperator& op, int k, const BlockVec& u) {
    BlockVec t = spmv(op.G[k], u);
    for (int e = 0; e < op.ctx.n_elements(); ++e) {
        const double inv = 1.0 / op.ctx.msc[e];
        double* te = t.block(e);
        const double* ce = op.lift[k].block(e);
        for (int i = 0; i < op.ctx.bs; ++i) te[i] += inv * ce[i];
    }
    return t;
}

inline System assemble_scalar(const ScalarProblem& P) {
    ScalarOperator op = build_scalar_operator(P);
    const ldg::Ctx& c = op.ctx;
    const int N = c.n_elements(), bs = c.bs;

    System S;
    S.kind = SystemKind::Scalar;
    S.dim = c.dim;
    S.degree = P.degree;
    S.n_comp = 1;
    S.bs_scalar = bs;

    // A = sum_k G_k^T M_mu G_k + E
    BlockBuilder Ab(N, N, bs, bs);
    std::vector<double> dmu(N);
    for (int e = 0; e < N; ++e) dmu[e] = c.mu[e] * c.msc[e];
    for (int k = 0; k < c.dim; ++k) ldg::accumulate_AtDB(Ab, op.G[k], op.G[k], dmu);
    for (int r = 0; r < N; ++r)
        for (int kk = op.E.ptr[r]; kk < op.E.ptr[r + 1]; ++kk)
            Ab.add_block(r, op.E.col[kk], op.E.block(kk), 1.0);
    S.A = Ab.freeze();

    // b = load + boundary flux + interface flux - sum_k G_k^T mu c_k + penalty data
    const JumpFn gj = ldg::oriented(P.jump_u, P.interface_sign);
    const JumpFn hj = ldg::oriented(P.jump_flux, P.interface_sign);
    S.b = ldg::load_vector(c, P.f);
    ldg::neumann_data(c, P.neumann, S.b);
    ldg::interface_flux_data(c, hj, S.b);
    ldg::penalty_data(c, P.dirichlet, gj, S.b);
    BlockVec tmp(N, bs), contrib(N, bs);
    for (int k = 0; k < c.dim; ++k) {
        for (int e = 0; e < N; ++e) {
            double* te = tmp.block(e);
            const double* ce = op.lift[k].block(e);
            for (int i = 0; i < bs; ++i) te[i] = c.mu[e] * ce[i];
        }
        spmv_transpose(op.G[k], tmp, contrib);
        axpy(-1.0, contrib, S.b);
    }

    S.kernel_constants = !ldg::has_dirichlet(P.mesh);
    return S;
}

/// Consistency report for a manufactured two-phase solution: projects the
/// exact per-phase solution, forms A u - b, and measures how well the
/// projected traces meet the prescribed face jumps.
struct RhsCheckReport {
    double residual_norm = 0.0;   ///< |A u_exact - b|
    double relative = 0.0;        ///< residual_norm / |b|
    double jump_u_err = 0.0;      ///< max face-L2 mismatch of [u] data
    double jump_flux_err = 0.0;   ///< max face-L2 mismatch of [mu du/dn] data
    std::string text;
};

inline RhsCheckReport interface_rhs_check(
    const ScalarProblem& P, const std::function<double(const Point&, int)>& exact) {
    const System S = assemble_scalar(P);
    ldg::Ctx c(P.mesh, P.phases, P.degree, P.beta);

    BlockVec u(c.n_elements(), c.bs);
    for (int e = 0; e < c.n_elements(); ++e) {
        const Element& el = P.mesh.elements[e];
        const int ph = el.phase;
        Point lo{el.lo(0), el.lo(1), el.lo(2)};
        auto coeffs = l2_project(c.B, lo, el.size(),
                                 [&](const Point& x) { return exact(x, ph); });
        std::copy(coeffs.begin(), coeffs.end(), u.block(e));
    }

    BlockVec r = spmv(S.A, u);
    axpy(-1.0, S.b, r);

    RhsCheckReport rep;
    rep.residual_norm = norm2(r);
    const double bn = norm2(S.b);
    rep.relative = bn > 0 ? rep.residual_norm / bn : rep.residual_norm;

    const JumpFn gj = ldg::oriented(P.jump_u, P.interface_sign);
    const JumpFn hj = ldg::oriented(P.jump_flux, P.interface_sign);
    std::ostringstream os;
    os << "rhs-check elements=" << c.n_elements() << " degree=" << P.degree << "\n";
    std::vector<double> VL, VR, DL, DR;
    int nfaces = 0;
    for (const Face& f : P.mesh.faces) {
        if (f.kind != FaceKind::Interior || !interface_face(P.mesh, f)) continue;
        ++nfaces;
        const ldg::FaceQ fq = ldg::face_quad(c, f);
        ldg::trace_values(c, f, f.left, +1, VL);
        ldg::trace_values(c, f, f.right, -1, VR);
        ldg::trace_normal_deriv(c, f, f.left, +1, DL);
        ldg::trace_normal_deriv(c, f, f.right, -1, DR);
        double e_u = 0.0, e_h = 0.0, area = 0.0;
        for (int q = 0; q < fq.nq; ++q) {
            double uL = 0, uR = 0, dL = 0, dR = 0;
            for (int i = 0; i < c.bs; ++i) {
                uL += VL[size_t(q) * c.bs + i] * u.block(f.left)[i];
                uR += VR[size_t(q) * c.bs + i] * u.block(f.right)[i];
                dL += DL[size_t(q) * c.bs + i] * u.block(f.left)[i];
                dR += DR[size_t(q) * c.bs + i] * u.block(f.right)[i];
            }
            const double ju = (uR - uL) - (gj ? gj(fq.x[q], f.axis) : 0.0);
            const double jh = (c.mu[f.right] * dR - c.mu[f.left] * dL) -
                              (hj ? hj(fq.x[q], f.axis) : 0.0);
            e_u += fq.w[q] * ju * ju;
            e_h += fq.w[q] * jh * jh;
            area += fq.w[q];
        }
        e_u = std::sqrt(e_u / area);
        e_h = std::sqrt(e_h / area);
        rep.jump_u_err = std::max(rep.jump_u_err, e_u);
        rep.jump_flux_err = std::max(rep.jump_flux_err, e_h);
        os << "  face axis=" << f.axis << " at (" << f.lo[0] << "," << f.lo[1];
        if (c.dim == 3) os << "," << f.lo[2];
        os << ") size=" << f.size << " jump_u_err=" << e_u << " jump_flux_err=" << e_h << "\n";
    }
    os << "interface_faces=" << nfaces << " residual=" << rep.residual_norm
       << " relative=" << rep.relative << "\n";
    rep.text = os.str();
    return rep;
}

}  // namespace ldgmg

#endif
