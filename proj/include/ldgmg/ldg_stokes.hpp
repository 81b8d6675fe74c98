#ifndef LDGMG_LDG_STOKES_HPP
#define LDGMG_LDG_STOKES_HPP

/** \file ldg_stokes.hpp
 *  \brief LDG discretization of the steady or unsteady multiphase Stokes
 *         problem in standard (gamma = 0) or stress (gamma = 1) form.
 *
 *  Element blocks are laid out velocity components first, pressure last,
 *  each of scalar size (degree+1)^dim.  With the divergence rows negated
 *  the assembled saddle matrix
 *
 *      [ A_ij  -Q_i ]         A_ij = delta_ij (sum_k G_k^T M_mu G_k + E)
 *      [ -Q_j^T  -E_p ]              + gamma G_j^T M_mu G_i   (+ mass term)
 *
 *  is symmetric indefinite; Q_i = G_i^T M.  The unsteady term (1/delta) M_rho
 *  is added to the velocity diagonal when delta > 0.
 */

#include <ldgmg/ldg_core.hpp>

namespace ldgmg {

struct StokesProblem {
    Mesh mesh;
    PhaseGeometry phases = PhaseGeometry::single();
    int degree = 1;
    double gamma = 0.0;   ///< 0 standard form, 1 stress form
    double beta = -1.0;   ///< velocity penalty scale; <= 0 selects 4 * degree^2
    double beta_p = 1.0;  ///< pressure penalty scale; 0 disables stabilization
    double delta = 0.0;   ///< time-step parameter; <= 0 means steady

    std::function<double(const Point&, int)> force;           ///< f_i(x)
    ScalarFn div_source;                                      ///< rhs of div u = s
    std::function<double(const Point&, int)> vel_dirichlet;   ///< g_i(x)
    std::function<double(const Point&, int, int, int)> traction;  ///< h(x, comp, axis, outward)
    std::function<double(const Point&, int, int)> jump_vel;       ///< [u_comp](x, axis)
    std::function<double(const Point&, int, int)> jump_stress;    ///< [traction_comp](x, axis)
    int interface_sign = +1;
};

/// Frobenius norms of the four sub-blocks of element e's diagonal block:
/// velocity-velocity, velocity-pressure, pressure-velocity, pressure-pressure.
struct DiagSubNorms {
    double Avv = 0, Gvp = 0, Dpv = 0, Epp = 0;
};

inline DiagSubNorms diag_sub_norms(const System& S, int e) {
    const int k = S.A.find(e, e);
    if (k < 0) throw std::logic_error("diag_sub_norms: missing diagonal block");
    const double* blk = S.A.block(k);
    const int BS = S.block_size(), nv = S.n_velocity();
    DiagSubNorms out;
    for (int i = 0; i < BS; ++i)
        for (int j = 0; j < BS; ++j) {
            const double v = blk[size_t(i) * BS + j] * blk[size_t(i) * BS + j];
            if (i < nv)
                (j < nv ? out.Avv : out.Gvp) += v;
            else
                (j < nv ? out.Dpv : out.Epp) += v;
        }
    out.Avv = std::sqrt(out.Avv);
    out.Gvp = std::sqrt(out.Gvp);
    out.Dpv = std::sqrt(out.Dpv);
    out.Epp = std::sqrt(out.Epp);
    return out;
}

namespace ldg {

/// Pressure stabilization E_p on interior faces (interphase included):
/// tau_p = beta_p * h_f / (mu_f + rho_f h_f^2 / delta), steady limit
/// tau_p = beta_p h_f / mu_f.
inline BlockCsr assemble_pressure_penalty(const Ctx& c, double beta_p, double delta) {
    const int N = c.n_elements(), bs = c.bs;
    BlockBuilder Eb(N, N, bs, bs);
    const auto efaces = element_face_table(*c.mesh);
    std::vector<double> VE, VO, M;
    for (int e = 0; e < N; ++e) {
        for (int fi : efaces[e]) {
            const Face& f = c.mesh->faces[fi];
            if (f.kind != FaceKind::Interior) continue;
            const double mu_f = std::max(c.mu[f.left], c.mu[f.right]);
            const double rho_f = std::max(c.rho[f.left], c.rho[f.right]);
            const double denom = mu_f + (delta > 0 ? rho_f * f.size * f.size / delta : 0.0);
            const double tau = beta_p * f.size / denom;
            if (tau == 0.0) continue;
            const FaceQ fq = face_quad(c, f);
            const int other = e == f.left ? f.right : f.left;
            trace_values(c, f, e, e == f.left ? +1 : -1, VE);
            trace_values(c, f, other, other == f.left ? +1 : -1, VO);
            face_block(fq, VE, VE, bs, M);
            Eb.add_block(e, e, M.data(), tau);
            face_block(fq, VE, VO, bs, M);
            Eb.add_block(e, other, M.data(), -tau);
        }
    }
    return Eb.freeze();
}

}  // namespace ldg

inline System assemble_stokes(const StokesProblem& P) {
    if (P.gamma != 0.0 && P.gamma != 1.0)
        throw std::invalid_argument("stokes: gamma must be 0 or 1");
    if (P.interface_sign != 1 && P.interface_sign != -1)
        throw std::invalid_argument("stokes: interface_sign must be +1 or -1");
    if (P.beta_p < 0) throw std::invalid_argument("stokes: beta_p must be >= 0");
    ldg::Ctx c(P.mesh, P.phases, P.degree, P.beta);
    if (ldg::has_neumann(P.mesh) && P.gamma == 0.0)
        throw std::invalid_argument("stokes: stress boundary conditions require the stress form");

    const int N = c.n_elements(), bsv = c.bs, dim = c.dim;
    const int BS = (dim + 1) * bsv;
    const bool unsteady = P.delta > 0;

    System S;
    S.kind = SystemKind::Stokes;
    S.dim = dim;
    S.degree = P.degree;
    S.n_comp = dim + 1;
    S.bs_scalar = bsv;
    S.gamma = P.gamma;

    auto G = ldg::assemble_gradient_matrices(c);
    BlockCsr Ev = ldg::assemble_penalty(c);
    BlockCsr Ep = ldg::assemble_pressure_penalty(c, P.beta_p, P.delta);

    std::vector<double> dmu(N);
    for (int e = 0; e < N; ++e) dmu[e] = c.mu[e] * c.msc[e];

    // Scalar-level compositions.
    BlockBuilder viscb(N, N, bsv, bsv);
    for (int k = 0; k < dim; ++k) ldg::accumulate_AtDB(viscb, G[k], G[k], dmu);
    for (int r = 0; r < N; ++r)
        for (int k = Ev.ptr[r]; k < Ev.ptr[r + 1]; ++k)
            viscb.add_block(r, Ev.col[k], Ev.block(k), 1.0);
    BlockCsr visc = viscb.freeze();
    std::array<std::array<BlockCsr, 3>, 3> cross;  // cross[i][j] = G_j^T M_mu G_i
    if (P.gamma != 0.0) {
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                BlockBuilder cb(N, N, bsv, bsv);
                ldg::accumulate_AtDB(cb, G[j], G[i], dmu);
                cross[i][j] = cb.freeze();
            }
    }

    // Scatter into the saddle layout.
    BlockBuilder Ab(N, N, BS, BS);
    auto add_sub = [&](int E1, int E2, int ci, int cj, const double* small, double s) {
        double* dst = Ab.at(E1, E2);
        for (int a = 0; a < bsv; ++a) {
            double* drow = dst + size_t(ci * bsv + a) * BS + cj * bsv;
            const double* srow = small + size_t(a) * bsv;
            for (int b = 0; b < bsv; ++b) drow[b] += s * srow[b];
        }
    };
    for (int r = 0; r < N; ++r)
        for (int k = visc.ptr[r]; k < visc.ptr[r + 1]; ++k)
            for (int i = 0; i < dim; ++i) add_sub(r, visc.col[k], i, i, visc.block(k), 1.0);
    if (P.gamma != 0.0)
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                const BlockCsr& C = cross[i][j];
                for (int r = 0; r < N; ++r)
                    for (int k = C.ptr[r]; k < C.ptr[r + 1]; ++k)
                        add_sub(r, C.col[k], i, j, C.block(k), P.gamma);
            }
    // Pressure coupling: (vel_i, p) gets -(G_i^T M), (p, vel_i) gets -(M G_i).
    std::vector<double> tr(size_t(bsv) * bsv);
    for (int i = 0; i < dim; ++i)
        for (int r = 0; r < N; ++r)
            for (int k = G[i].ptr[r]; k < G[i].ptr[r + 1]; ++k) {
                const int cc = G[i].col[k];
                const double* B = G[i].block(k);
                for (int a = 0; a < bsv; ++a)
                    for (int b = 0; b < bsv; ++b) tr[size_t(a) * bsv + b] = B[size_t(b) * bsv + a];
                add_sub(cc, r, i, dim, tr.data(), -c.msc[r]);
                add_sub(r, cc, dim, i, B, -c.msc[r]);
            }
    for (int r = 0; r < N; ++r)
        for (int k = Ep.ptr[r]; k < Ep.ptr[r + 1]; ++k)
            add_sub(r, Ep.col[k], dim, dim, Ep.block(k), -1.0);
    if (unsteady) {
        for (int e = 0; e < N; ++e) {
            const double m = c.rho[e] * c.msc[e] / P.delta;
            double* dst = Ab.at(e, e);
            for (int i = 0; i < dim; ++i)
                for (int a = 0; a < bsv; ++a) dst[size_t(i * bsv + a) * BS + i * bsv + a] += m;
        }
    }
    S.A = Ab.freeze();

    // Right-hand side.
    S.b = BlockVec(N, BS);
    auto scatter = [&](const BlockVec& small, int comp, double s) {
        for (int e = 0; e < N; ++e) {
            double* dst = S.b.block(e) + comp * bsv;
            const double* src = small.block(e);
            for (int a = 0; a < bsv; ++a) dst[a] += s * src[a];
        }
    };
    // Velocity data liftings C[i][k]: raw moments of g_i in the axis-k gradient.
    std::array<std::array<BlockVec, 3>, 3> C;
    for (int i = 0; i < dim; ++i) {
        ScalarFn gD;
        JumpFn gJ;
        if (P.vel_dirichlet)
            gD = [&, i](const Point& x) { return P.vel_dirichlet(x, i); };
        if (P.jump_vel) {
            const int sgn = P.interface_sign;
            gJ = [&, i, sgn](const Point& x, int axis) { return sgn * P.jump_vel(x, i, axis); };
        }
        for (int k = 0; k < dim; ++k) C[i][k] = ldg::gradient_moments(c, k, gD, gJ);
    }
    BlockVec tmp(N, bsv), contrib(N, bsv);
    for (int i = 0; i < dim; ++i) {
        ScalarFn gD;
        JumpFn gJ;
        if (P.vel_dirichlet)
            gD = [&, i](const Point& x) { return P.vel_dirichlet(x, i); };
        if (P.jump_vel) {
            const int sgn = P.interface_sign;
            gJ = [&, i, sgn](const Point& x, int axis) { return sgn * P.jump_vel(x, i, axis); };
        }
        BlockVec bi(N, bsv);
        if (P.force) {
            ScalarFn fi = [&, i](const Point& x) { return P.force(x, i); };
            bi = ldg::load_vector(c, fi);
        }
        if (P.traction) {
            FluxFn hi = [&, i](const Point& x, int axis, int outward) {
                return P.traction(x, i, axis, outward);
            };
            ldg::neumann_data(c, hi, bi);
        }
        if (P.jump_stress) {
            const int sgn = P.interface_sign;
            JumpFn hij = [&, i, sgn](const Point& x, int axis) {
                return sgn * P.jump_stress(x, i, axis);
            };
            ldg::interface_flux_data(c, hij, bi);
        }
        ldg::penalty_data(c, gD, gJ, bi);
        // Adjoint of the lifted stress: - sum_j G_j^T mu (C[i][j] + gamma C[j][i]).
        for (int j = 0; j < dim; ++j) {
            bool any = false;
            for (int e = 0; e < N && !any; ++e)
                for (int a = 0; a < bsv; ++a)
                    if (C[i][j].block(e)[a] != 0.0 || (P.gamma != 0.0 && C[j][i].block(e)[a] != 0.0)) {
                        any = true;
                        break;
                    }
            if (!any) continue;
            for (int e = 0; e < N; ++e) {
                double* te = tmp.block(e);
                const double* c1 = C[i][j].block(e);
                const double* c2 = C[j][i].block(e);
                for (int a = 0; a < bsv; ++a) te[a] = c.mu[e] * (c1[a] + P.gamma * c2[a]);
            }
            spmv_transpose(G[j], tmp, contrib);
            axpy(-1.0, contrib, bi);
        }
        scatter(bi, i, 1.0);
    }
    {
        // Divergence rows are negated: b_p = -load(div_source) + sum_j C[j][j].
        BlockVec bp(N, bsv);
        if (P.div_source) {
            bp = ldg::load_vector(c, P.div_source);
            scale(-1.0, bp);
        }
        for (int j = 0; j < dim; ++j) axpy(1.0, C[j][j], bp);
        scatter(bp, dim, 1.0);
    }

    S.kernel_constants = !ldg::has_dirichlet(P.mesh) && !unsteady;
    S.kernel_pressure = !ldg::has_neumann(P.mesh);
    return S;
}

/// Kernel of the pure-traction stress-form operator additionally contains
/// the projected rigid rotations; returns them (not orthonormalized) so
/// solvers can deflate the right-hand side.  Empty unless gamma = 1, the
/// problem is steady, and every boundary side carries stress data.
inline std::vector<BlockVec> stokes_rotation_kernel(const StokesProblem& P) {
    std::vector<BlockVec> out;
    if (P.gamma != 1.0 || P.delta > 0) return out;
    for (int s = 0; s < 2 * P.mesh.dim; ++s)
        if (P.mesh.side_bc[s] != BoundaryKind::Neumann) return out;
    ldg::Ctx c(P.mesh, P.phases, P.degree, P.beta);
    const int N = c.n_elements(), bsv = c.bs, dim = c.dim;
    const int BS = (dim + 1) * bsv;
    // Rotation generators: (axis a, axis b) -> u_a = x_b - 1/2, u_b = -(x_a - 1/2).
    for (int a = 0; a < dim; ++a)
        for (int b = a + 1; b < dim; ++b) {
            BlockVec v(N, BS);
            for (int e = 0; e < N; ++e) {
                const Element& el = P.mesh.elements[e];
                Point lo{el.lo(0), el.lo(1), el.lo(2)};
                auto ca = l2_project(c.B, lo, el.size(),
                                     [&](const Point& x) { return x[b] - 0.5; });
                auto cb = l2_project(c.B, lo, el.size(),
                                     [&](const Point& x) { return 0.5 - x[a]; });
                std::copy(ca.begin(), ca.end(), v.block(e) + a * bsv);
                std::copy(cb.begin(), cb.end(), v.block(e) + b * bsv);
            }
            scale(1.0 / norm2(v), v);
            out.push_back(v);
        }
    return out;
}

}  // namespace ldgmg

#endif
