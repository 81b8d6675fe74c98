#ifndef LDGMG_LDG_CORE_HPP
#define LDGMG_LDG_CORE_HPP

/** \file ldg_core.hpp
 *  \brief Shared pieces of the LDG discretizations: discrete gradient
 *         operators, penalty forms, boundary/interface liftings, load
 *         vectors, and the assembled-system container.
 *
 *  Conventions.  The discrete gradient G_k maps coefficient vectors to
 *  coefficient vectors (the element mass matrices, scalar multiples of the
 *  identity, are folded in).  Numerical traces are one-sided: on same-phase
 *  interior faces the element on the lower side along the face axis donates
 *  u-hat; on interface faces the more viscous side donates (ties fall back
 *  to the lower side); Dirichlet faces read data and Neumann faces keep the
 *  interior trace.  Jumps across a face are upper minus lower along the face
 *  normal +e_axis, optionally flipped by a problem-wide sign convention.
 */

#include <ldgmg/basis.hpp>
#include <ldgmg/blockla.hpp>
#include <ldgmg/mesh.hpp>

#include <algorithm>
#include <functional>
#include <optional>
#include <tuple>

namespace ldgmg {

using Point = std::array<double, 3>;

/// Volume data: f(x).
using ScalarFn = std::function<double(const Point&)>;
/// Boundary flux data: mu grad u . n with n the outward normal, passed as
/// (point, axis, outward sign).
using FluxFn = std::function<double(const Point&, int, int)>;
/// Interface jump data as a function of (point, face axis).
using JumpFn = std::function<double(const Point&, int)>;

enum class SystemKind { Scalar, Stokes };

/// Assembled block system.  For Stokes, each element block is laid out as
/// velocity components then pressure, each of scalar block size bs_scalar.
struct System {
    SystemKind kind = SystemKind::Scalar;
    int dim = 2;
    int degree = 1;
    int n_comp = 1;       ///< 1 for scalar, dim+1 for Stokes
    int bs_scalar = 4;    ///< (degree+1)^dim
    BlockCsr A;
    BlockVec b;
    bool kernel_constants = false;  ///< per-component constants lie in ker A
    bool kernel_pressure = false;   ///< constant pressure lies in ker A
    double gamma = 0.0;             ///< Stokes only

    int block_size() const { return n_comp * bs_scalar; }
    int n_elements() const { return A.brows; }
    int n_velocity() const { return kind == SystemKind::Stokes ? dim * bs_scalar : 0; }
};

/// Orthonormal basis of the known kernel (constant fields).  A constant
/// function has only its mode-0 coefficient set, identical on every element
/// because the basis keeps the reference normalization.
inline std::vector<BlockVec> kernel_basis(const System& S) {
    std::vector<BlockVec> out;
    const int N = S.n_elements();
    auto constant_field = [&](int comp) {
        BlockVec v(N, S.block_size());
        for (int e = 0; e < N; ++e) v.block(e)[comp * S.bs_scalar] = 1.0;
        scale(1.0 / norm2(v), v);
        return v;
    };
    if (S.kernel_constants)
        for (int c = 0; c < (S.kind == SystemKind::Scalar ? 1 : S.dim); ++c)
            out.push_back(constant_field(c));
    if (S.kernel_pressure) out.push_back(constant_field(S.dim));
    return out;
}

namespace ldg {

/// Per-problem assembly context: basis tables, per-element mass scalars and
/// phase data, and the penalty scale.
struct Ctx {
    const Mesh* mesh = nullptr;
    ElementBasis B;
    int dim = 2, bs = 4, p1 = 2;
    double beta = 4.0;
    std::vector<double> msc, mu, rho;

    Ctx() = default;
    Ctx(const Mesh& m, const PhaseGeometry& geom, int degree, double beta_in) {
        mesh = &m;
        dim = m.dim;
        const int degree_cap = dim == 2 ? 5 : 3;
        if (degree < 1 || degree > degree_cap)
            throw std::invalid_argument("ldg: polynomial degree out of supported range");
        B = ElementBasis(degree, dim);
        bs = B.block_size;
        p1 = B.p1;
        beta = beta_in > 0 ? beta_in : 4.0 * degree * degree;
        const int N = (int)m.elements.size();
        msc.resize(N);
        mu.resize(N);
        rho.resize(N);
        std::vector<int> owned(geom.regions.size(), 0);
        for (int e = 0; e < N; ++e) {
            const Element& el = m.elements[e];
            if (el.phase < 0 || el.phase >= (int)geom.regions.size())
                throw std::invalid_argument("ldg: element phase outside the region table");
            ++owned[el.phase];
            msc[e] = mass_scalar(el.size(), dim);
            mu[e] = geom.regions[el.phase].mu;
            rho[e] = geom.regions[el.phase].rho;
        }
        for (size_t r = 0; r < owned.size(); ++r)
            if (owned[r] == 0) throw std::invalid_argument("ldg: phase region owns no elements");
    }

    int n_elements() const { return (int)mesh->elements.size(); }

    /// u-hat donor of an interior face: lower side unless the upper side is
    /// strictly more viscous.
    int donor(const Face& f) const {
        if (mu[f.right] > mu[f.left]) return f.right;
        return f.left;
    }

    /// Penalty tau_f = beta * mu_f / h_f with h_f the finer adjacent element
    /// size (== face size).  mu_f is the smaller adjacent viscosity, i.e. the
    /// sigma-hat donor side: the thin phase is penalized at its own scale
    /// while the viscous phase, which effectively sees a Neumann condition at
    /// the interface, is left essentially unpenalized.  Weighting by the
    /// larger viscosity instead plants O(mu_max) terms in the thin phase's
    /// diagonal blocks and ruins approximate-inverse smoothing at large
    /// viscosity ratios (exact block solves, Jacobi/GS, do not care).
    double penalty_tau(const Face& f) const {
        const double m = f.right >= 0 ? std::min(mu[f.left], mu[f.right]) : mu[f.left];
        return beta * m / f.size;
    }
};

struct FaceQ {
    int nq = 0;
    std::vector<double> w;  ///< physical weights including the area factor
    std::vector<Point> x;   ///< physical points; x[axis] is the face plane
};

inline FaceQ face_quad(const Ctx& c, const Face& f) {
    FaceQ q;
    const int nt = c.dim - 1;
    q.nq = 1;
    for (int t = 0; t < nt; ++t) q.nq *= c.p1;
    q.w.resize(q.nq);
    q.x.resize(q.nq);
    double area = 1.0;
    for (int t = 0; t < nt; ++t) area *= 0.5 * f.size;
    for (int flat = 0; flat < q.nq; ++flat) {
        int rem = flat;
        double wq = area;
        Point x = f.lo;
        for (int a = 0; a < c.dim; ++a) {
            if (a == f.axis) continue;
            const int qa = rem % c.p1;
            rem /= c.p1;
            wq *= c.B.weights[qa];
            x[a] = f.lo[a] + 0.5 * f.size * (c.B.nodes[qa] + 1.0);
        }
        q.w[flat] = wq;
        q.x[flat] = x;
    }
    return q;
}

/// Basis traces of element e on face f; refside = +1 if the face lies on e's
/// upper boundary along f.axis.  out[q * bs + i].  Works for hanging faces
/// (the face extent maps inside e's transverse range) and for periodic wrap
/// faces (only the endpoint side matters along the face axis).
inline void trace_values(const Ctx& c, const Face& f, int e, int refside, std::vector<double>& out) {
    const Element& el = c.mesh->elements[e];
    const int nq = [&] {
        int n = 1;
        for (int t = 0; t < c.dim - 1; ++t) n *= c.p1;
        return n;
    }();
    out.assign(size_t(nq) * c.bs, 0.0);
    // 1D mode values per transverse axis at the mapped face nodes.  The
    // reference coordinate is formed from the exact dyadic offset f.lo - el.lo
    // and the power-of-two size ratio, never from absolute positions, so
    // congruent element/face pairs get bitwise-identical traces anywhere on
    // the grid.
    double v1[2][8 * 8];  // [transverse slot][mode * p1 + q]
    int slots = 0;
    for (int a = 0; a < c.dim; ++a) {
        if (a == f.axis) continue;
        for (int qa = 0; qa < c.p1; ++qa) {
            const double xi =
                (2.0 * (f.lo[a] - el.lo(a)) + f.size * (c.B.nodes[qa] + 1.0)) / el.size() - 1.0;
            for (int m = 0; m < c.p1; ++m) v1[slots][m * c.p1 + qa] = mode_val(m, xi);
        }
        ++slots;
    }
    const int endside = refside > 0 ? 1 : 0;
    for (int flat = 0; flat < nq; ++flat) {
        int qslot[2] = {0, 0};
        int rem = flat;
        for (int t = 0; t < c.dim - 1; ++t) {
            qslot[t] = rem % c.p1;
            rem /= c.p1;
        }
        for (int i = 0; i < c.bs; ++i) {
            const auto ix = c.B.decompose(i);
            double v = c.B.end_val[ix[f.axis] * 2 + endside];
            int slot = 0;
            for (int a = 0; a < c.dim; ++a) {
                if (a == f.axis) continue;
                v *= v1[slot][ix[a] * c.p1 + qslot[slot]];
                ++slot;
            }
            out[size_t(flat) * c.bs + i] = v;
        }
    }
}

/// Same as trace_values but for the normal derivative d/dx_axis of the basis.
inline void trace_normal_deriv(const Ctx& c, const Face& f, int e, int refside,
                               std::vector<double>& out) {
    const Element& el = c.mesh->elements[e];
    int nq = 1;
    for (int t = 0; t < c.dim - 1; ++t) nq *= c.p1;
    out.assign(size_t(nq) * c.bs, 0.0);
    double v1[2][8 * 8];
    int slots = 0;
    for (int a = 0; a < c.dim; ++a) {
        if (a == f.axis) continue;
        for (int qa = 0; qa < c.p1; ++qa) {
            // Same translation-invariant mapping as trace_values.
            const double xi =
                (2.0 * (f.lo[a] - el.lo(a)) + f.size * (c.B.nodes[qa] + 1.0)) / el.size() - 1.0;
            for (int m = 0; m < c.p1; ++m) v1[slots][m * c.p1 + qa] = mode_val(m, xi);
        }
        ++slots;
    }
    const double jac = 2.0 / el.size();
    const double endx = refside > 0 ? 1.0 : -1.0;
    for (int flat = 0; flat < nq; ++flat) {
        int qslot[2] = {0, 0};
        int rem = flat;
        for (int t = 0; t < c.dim - 1; ++t) {
            qslot[t] = rem % c.p1;
            rem /= c.p1;
        }
        for (int i = 0; i < c.bs; ++i) {
            const auto ix = c.B.decompose(i);
            double v = jac * mode_dval(ix[f.axis], endx);
            int slot = 0;
            for (int a = 0; a < c.dim; ++a) {
                if (a == f.axis) continue;
                v *= v1[slot][ix[a] * c.p1 + qslot[slot]];
                ++slot;
            }
            out[size_t(flat) * c.bs + i] = v;
        }
    }
}

/// Face mass against a donor: out[i * bs + j] = sum_q w_q test[q,i] donor[q,j].
inline void face_block(const FaceQ& fq, const std::vector<double>& test,
                       const std::vector<double>& donor, int bs, std::vector<double>& out) {
    out.assign(size_t(bs) * bs, 0.0);
    for (int q = 0; q < fq.nq; ++q) {
        const double wq = fq.w[q];
        const double* tv = test.data() + size_t(q) * bs;
        const double* dv = donor.data() + size_t(q) * bs;
        for (int i = 0; i < bs; ++i) {
            const double ti = wq * tv[i];
            for (int j = 0; j < bs; ++j) out[size_t(i) * bs + j] += ti * dv[j];
        }
    }
}

/// Faces of each element in a translation-invariant local order: axis-major,
/// lower side before upper, hanging subfaces by transverse position.  The
/// matrix assemblies walk each row in this order so that elements with
/// congruent neighbourhoods accumulate bitwise-identical blocks; the
/// approximate-inverse cache keys on exactly that reproducibility.
inline std::vector<std::vector<int>> element_face_table(const Mesh& m) {
    std::vector<std::vector<int>> out(m.elements.size());
    for (int fi = 0; fi < (int)m.faces.size(); ++fi) {
        const Face& f = m.faces[fi];
        out[f.left].push_back(fi);
        if (f.right >= 0 && f.right != f.left) out[f.right].push_back(fi);
    }
    for (int e = 0; e < (int)out.size(); ++e) {
        auto key = [&](int fi) {
            const Face& f = m.faces[fi];
            // Wrap faces keep left = the element whose upper boundary carries
            // the plane, so e == left identifies the upper side there too.
            const int upper = f.right < 0 ? (f.side > 0 ? 1 : 0) : (f.left == e ? 1 : 0);
            double t0 = 0, t1 = 0;
            for (int a = 0, slot = 0; a < m.dim; ++a)
                if (a != f.axis) (slot++ == 0 ? t0 : t1) = f.lo[a];
            return std::make_tuple(f.axis, upper, t0, t1);
        };
        std::sort(out[e].begin(), out[e].end(),
                  [&](int a, int b) { return key(a) < key(b); });
    }
    return out;
}

/// Discrete gradient matrices G_k, k = 0..dim-1 (coefficients to
/// coefficients; the element mass inverse is folded into each row).
inline std::array<BlockCsr, 3> assemble_gradient_matrices(const Ctx& c) {
    const int N = c.n_elements(), bs = c.bs, p1 = c.p1;
    std::array<std::optional<BlockBuilder>, 3> Gb;
    for (int k = 0; k < c.dim; ++k) Gb[k].emplace(N, N, bs, bs);

    // Volume: -(2/h) * S[i_k][j_k] on matching transverse modes, where
    // S[a][b] = int P'_a P_b on [-1,1].
    std::vector<double> S(size_t(p1) * p1, 0.0);
    for (int a = 0; a < p1; ++a)
        for (int b = 0; b < p1; ++b) {
            double s = 0.0;
            for (int q = 0; q < p1; ++q) s += c.B.weights[q] * c.B.dval[a * p1 + q] * c.B.val[b * p1 + q];
            S[size_t(a) * p1 + b] = s;
        }
    for (int e = 0; e < N; ++e) {
        const double scal = 2.0 / c.mesh->elements[e].size();
        for (int k = 0; k < c.dim; ++k) {
            double* blk = Gb[k]->at(e, e);
            for (int i = 0; i < bs; ++i) {
                auto ix = c.B.decompose(i);
                const int ia = ix[k];
                for (int jb = 0; jb < p1; ++jb) {
                    ix[k] = jb;
                    blk[size_t(i) * bs + c.B.compose(ix)] -= scal * S[size_t(ia) * p1 + jb];
                }
            }
        }
    }

    // Faces: sigma_X / m_X * <phi_X, phi_donor> on faces normal to axis k.
    // Each element visits its faces in the canonical local order and adds
    // only its own rows, so interior faces are quadratured twice but every
    // row accumulates position-independently.
    const auto efaces = element_face_table(*c.mesh);
    std::vector<double> VE, VD, M;
    for (int e = 0; e < N; ++e) {
        for (int fi : efaces[e]) {
            const Face& f = c.mesh->faces[fi];
            if (f.kind == FaceKind::Dirichlet) continue;  // data only
            const FaceQ fq = face_quad(c, f);
            if (f.kind == FaceKind::Neumann) {
                trace_values(c, f, e, f.side, VE);
                face_block(fq, VE, VE, bs, M);
                Gb[f.axis]->add_block(e, e, M.data(), f.side / c.msc[e]);
                continue;
            }
            const int sigma = e == f.left ? +1 : -1;
            const int d = c.donor(f);
            trace_values(c, f, e, sigma, VE);
            if (d == e) {
                face_block(fq, VE, VE, bs, M);
            } else {
                trace_values(c, f, d, d == f.left ? +1 : -1, VD);
                face_block(fq, VE, VD, bs, M);
            }
            Gb[f.axis]->add_block(e, d, M.data(), sigma / c.msc[e]);
        }
    }

    std::array<BlockCsr, 3> G;
    for (int k = 0; k < c.dim; ++k) G[k] = Gb[k]->freeze();
    return G;
}

/// Data contributions to the weak gradient along axis k, as raw face moments
/// c = M r (apply 1/msc per element for the coefficient lifting).  gD is the
/// Dirichlet trace datum, gJ the interface jump (already sign-adjusted).
inline BlockVec gradient_moments(const Ctx& c, int k, const ScalarFn& gD, const JumpFn& gJ) {
    BlockVec out(c.n_elements(), c.bs);
    std::vector<double> V;
    for (const Face& f : c.mesh->faces) {
        if (f.axis != k) continue;
        if (f.kind == FaceKind::Dirichlet) {
            if (!gD) continue;
            const FaceQ fq = face_quad(c, f);
            trace_values(c, f, f.left, f.side, V);
            double* b = out.block(f.left);
            for (int q = 0; q < fq.nq; ++q) {
                const double gw = f.side * fq.w[q] * gD(fq.x[q]);
                for (int i = 0; i < c.bs; ++i) b[i] += gw * V[size_t(q) * c.bs + i];
            }
        } else if (f.kind == FaceKind::Interior && interface_face(*c.mesh, f)) {
            if (!gJ) continue;
            const int d = c.donor(f);
            const int other = d == f.left ? f.right : f.left;
            const FaceQ fq = face_quad(c, f);
            trace_values(c, f, other, other == f.left ? +1 : -1, V);
            double* b = out.block(other);
            for (int q = 0; q < fq.nq; ++q) {
                const double gw = -fq.w[q] * gJ(fq.x[q], k);
                for (int i = 0; i < c.bs; ++i) b[i] += gw * V[size_t(q) * c.bs + i];
            }
        }
    }
    return out;
}

/// Penalty form E: tau_f <[u],[v]> on interior faces, tau_f <u,v> on
/// Dirichlet faces; Neumann faces are unpenalized.
inline BlockCsr assemble_penalty(const Ctx& c) {
    const int N = c.n_elements(), bs = c.bs;
    BlockBuilder Eb(N, N, bs, bs);
    const auto efaces = element_face_table(*c.mesh);
    std::vector<double> VE, VO, M;
    for (int e = 0; e < N; ++e) {
        for (int fi : efaces[e]) {
            const Face& f = c.mesh->faces[fi];
            if (f.kind == FaceKind::Neumann) continue;
            const double tau = c.penalty_tau(f);
            const FaceQ fq = face_quad(c, f);
            if (f.kind == FaceKind::Dirichlet) {
                trace_values(c, f, e, f.side, VE);
                face_block(fq, VE, VE, bs, M);
                Eb.add_block(e, e, M.data(), tau);
                continue;
            }
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

/// Penalty data: tau <g, v> on Dirichlet faces and tau <g_jump, [v]> on
/// interface faces, accumulated into b.
inline void penalty_data(const Ctx& c, const ScalarFn& gD, const JumpFn& gJ, BlockVec& b) {
    std::vector<double> V;
    for (const Face& f : c.mesh->faces) {
        if (f.kind == FaceKind::Neumann) continue;
        if (f.kind == FaceKind::Dirichlet) {
            if (!gD) continue;
            const double tau = c.penalty_tau(f);
            const FaceQ fq = face_quad(c, f);
            trace_values(c, f, f.left, f.side, V);
            double* be = b.block(f.left);
            for (int q = 0; q < fq.nq; ++q) {
                const double gw = tau * fq.w[q] * gD(fq.x[q]);
                for (int i = 0; i < c.bs; ++i) be[i] += gw * V[size_t(q) * c.bs + i];
            }
        } else if (interface_face(*c.mesh, f)) {
            if (!gJ) continue;
            const double tau = c.penalty_tau(f);
            const FaceQ fq = face_quad(c, f);
            for (int pass = 0; pass < 2; ++pass) {
                const int e = pass == 0 ? f.right : f.left;
                const double sgn = pass == 0 ? +1.0 : -1.0;
                trace_values(c, f, e, pass == 0 ? -1 : +1, V);
                double* be = b.block(e);
                for (int q = 0; q < fq.nq; ++q) {
                    const double gw = sgn * tau * fq.w[q] * gJ(fq.x[q], f.axis);
                    for (int i = 0; i < c.bs; ++i) be[i] += gw * V[size_t(q) * c.bs + i];
                }
            }
        }
    }
}

/// Volume load: b_e[i] = int_e f phi_i.
inline BlockVec load_vector(const Ctx& c, const ScalarFn& f) {
    BlockVec b(c.n_elements(), c.bs);
    if (!f) return b;
    for (int e = 0; e < c.n_elements(); ++e) {
        const Element& el = c.mesh->elements[e];
        double* be = b.block(e);
        int total = 1;
        for (int a = 0; a < c.dim; ++a) total *= c.p1;
        for (int flat = 0; flat < total; ++flat) {
            int rem = flat;
            double wq = c.msc[e];
            Point x{0, 0, 0};
            int q[3] = {0, 0, 0};
            for (int a = 0; a < c.dim; ++a) {
                q[a] = rem % c.p1;
                rem /= c.p1;
                wq *= c.B.weights[q[a]];
                x[a] = el.lo(a) + 0.5 * el.size() * (c.B.nodes[q[a]] + 1.0);
            }
            const double fv = f(x);
            for (int i = 0; i < c.bs; ++i) {
                const auto ix = c.B.decompose(i);
                double phi = 1.0;
                for (int a = 0; a < c.dim; ++a) phi *= c.B.val[ix[a] * c.p1 + q[a]];
                be[i] += wq * fv * phi;
            }
        }
    }
    return b;
}

/// Neumann boundary-flux data: b_e += int_f h phi.
inline void neumann_data(const Ctx& c, const FluxFn& h, BlockVec& b) {
    if (!h) return;
    std::vector<double> V;
    for (const Face& f : c.mesh->faces) {
        if (f.kind != FaceKind::Neumann) continue;
        const FaceQ fq = face_quad(c, f);
        trace_values(c, f, f.left, f.side, V);
        double* be = b.block(f.left);
        for (int q = 0; q < fq.nq; ++q) {
            const double hw = fq.w[q] * h(fq.x[q], f.axis, f.side);
            for (int i = 0; i < c.bs; ++i) be[i] += hw * V[size_t(q) * c.bs + i];
        }
    }
}

/// Interface flux-jump data lands on the u-hat donor side: summing the
/// adjoint flux by parts leaves -<v_donor, [mu du/dn]> on each interphase
/// face, so b_m -= int_f h_jump phi_m.
inline void interface_flux_data(const Ctx& c, const JumpFn& hJ, BlockVec& b) {
    if (!hJ) return;
    std::vector<double> V;
    for (const Face& f : c.mesh->faces) {
        if (f.kind != FaceKind::Interior || !interface_face(*c.mesh, f)) continue;
        const int m = c.donor(f);
        const FaceQ fq = face_quad(c, f);
        trace_values(c, f, m, m == f.left ? +1 : -1, V);
        double* be = b.block(m);
        for (int q = 0; q < fq.nq; ++q) {
            const double hw = -fq.w[q] * hJ(fq.x[q], f.axis);
            for (int i = 0; i < c.bs; ++i) be[i] += hw * V[size_t(q) * c.bs + i];
        }
    }
}

/// C += L^T diag(d) R at block level, for L, R with identical row counts.
/// Destination rows are built one at a time and each consumes its sources
/// self-row first, then by ascending row index; that keeps the per-cell
/// accumulation order position-independent on translation-invariant grids
/// (the approximate-inverse cache relies on bitwise-equal blocks).
inline void accumulate_AtDB(BlockBuilder& C, const BlockCsr& L, const BlockCsr& R,
                            const std::vector<double>& d) {
    const int bs = L.row_bs;
    Eigen::MatrixXd tmp(bs, bs);
    using RowMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>;
    // Column adjacency of L: for each block column, the (row, entry) pairs
    // holding it, rows ascending (CSR order guarantees that), diagonal first.
    std::vector<int> cnt(L.bcols + 1, 0);
    for (int k = 0; k < (int)L.col.size(); ++k) ++cnt[L.col[k] + 1];
    for (int e = 0; e < L.bcols; ++e) cnt[e + 1] += cnt[e];
    std::vector<std::pair<int, int>> src(L.col.size());
    {
        std::vector<int> fill(cnt.begin(), cnt.end() - 1);
        for (int r = 0; r < L.brows; ++r)
            for (int k1 = L.ptr[r]; k1 < L.ptr[r + 1]; ++k1)
                src[fill[L.col[k1]]++] = {r, k1};
    }
    for (int e = 0; e < L.bcols; ++e) {
        const int lo = cnt[e], hi = cnt[e + 1];
        for (int s = lo; s < hi; ++s)
            if (src[s].first == e && s != lo) {
                std::rotate(src.begin() + lo, src.begin() + s, src.begin() + s + 1);
                break;
            }
        for (int s = lo; s < hi; ++s) {
            const auto [r, k1] = src[s];
            RowMat B1(L.block(k1), bs, bs);
            for (int k2 = R.ptr[r]; k2 < R.ptr[r + 1]; ++k2) {
                RowMat B2(R.block(k2), bs, bs);
                tmp.noalias() = d[r] * (B1.transpose() * B2);
                // tmp is column-major; add transposed indexing to the
                // row-major destination.
                double* dst = C.at(e, R.col[k2]);
                for (int i = 0; i < bs; ++i)
                    for (int j = 0; j < bs; ++j) dst[size_t(i) * bs + j] += tmp(i, j);
            }
        }
    }
}

/// True if any Dirichlet face is present (then constants are not in the
/// kernel of the scalar operator).
inline bool has_dirichlet(const Mesh& m) {
    for (const Face& f : m.faces)
        if (f.kind == FaceKind::Dirichlet) return true;
    return false;
}
inline bool has_neumann(const Mesh& m) {
    for (const Face& f : m.faces)
        if (f.kind == FaceKind::Neumann) return true;
    return false;
}

}  // namespace ldg
}  // namespace ldgmg

#endif
