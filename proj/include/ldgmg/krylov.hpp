#ifndef LDGMG_KRYLOV_HPP
#define LDGMG_KRYLOV_HPP

/** \file krylov.hpp
 *  \brief Preconditioned conjugate gradients and left-preconditioned full
 *         GMRES around the V-cycle, plus the convergence-speed estimator:
 *         eta is the number of iterations needed to shrink the residual by a
 *         factor of ten, fitted from the per-iteration residual history.
 */

#include <ldgmg/multigrid.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

namespace ldgmg {

enum class KrylovKind { CG, GMRES };

enum class Classification { Fast, Slow, Nonconvergent };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::Fast: return "fast";
        case Classification::Slow: return "slow";
        default: return "nonconvergent";
    }
}

/// Residual history plus the fitted speed.  residuals[k] is the norm after k
/// iterations in the Krylov method's own measure: |gamma_k| = ||VAx_k - Vb||
/// for left-preconditioned GMRES, sqrt(r^T V r) for CG.
struct SolveReport {
    std::vector<double> residuals;
    int iterations = 0;
    bool converged = false;
    bool breakdown = false;  ///< exact solution reached mid-iteration
    double rho = 0.0;        ///< fitted per-iteration contraction
    double eta = 0.0;        ///< iterations per factor-10 reduction
    Classification classification = Classification::Fast;
    bool low_confidence = false;  ///< fewer than 3 residuals above the fit floor
};

/// Least-squares fit of log residual against iteration index.  Iteration 0
/// is excluded (it reflects the right-hand side, not the contraction), as is
/// everything at or below the 1e-13 * r_0 noise floor.  With fewer than two
/// usable points the fit falls back to the overall first-step reduction and
/// flags itself low-confidence.
inline void fit_rate(SolveReport& rep) {
    const auto& r = rep.residuals;
    rep.rho = 0.0;
    rep.eta = 0.0;
    rep.low_confidence = true;
    rep.classification = Classification::Fast;
    if (r.empty() || r[0] <= 0.0) return;
    const double floor = 1e-13 * r[0];
    int K = 0;
    while (K + 1 < (int)r.size() && r[K + 1] > floor) ++K;

    double slope;
    if (K >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int k = 1; k <= K; ++k) {
            const double x = k, y = std::log(r[k]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        slope = (K * sxy - sx * sy) / (K * sxx - sx * sx);
        rep.low_confidence = K < 3;
    } else if ((int)r.size() >= 2) {
        // One step (or the first step already hit the floor): the only
        // information is the initial reduction.
        slope = std::log(std::max(r[1], 1e-300)) - std::log(r[0]);
    } else {
        return;  // nothing ran; keep the trivial fast report
    }

    rep.rho = std::exp(slope);
    if (rep.rho >= 1.0) {
        rep.eta = std::numeric_limits<double>::infinity();
        rep.classification = Classification::Nonconvergent;
        return;
    }
    rep.eta = std::log(0.1) / std::log(rep.rho);
    rep.classification = rep.eta < 2.0    ? Classification::Fast
                         : rep.eta < 10.0 ? Classification::Slow
                                          : Classification::Nonconvergent;
}

/// Preconditioner handle: any linear map on block vectors plus its symmetry
/// promise.  Captured state must outlive the solve.
struct LinearOperator {
    std::function<BlockVec(const BlockVec&)> apply;
    bool symmetric = true;
};

inline LinearOperator identity_operator() {
    return {[](const BlockVec& v) { return v; }, true};
}

/// View of a V-cycle hierarchy as a preconditioner; keeps a reference.
inline LinearOperator preconditioner(const Multigrid& V) {
    return {[&V](const BlockVec& v) { return V.apply(v); }, V.symmetric()};
}

/// Preconditioned CG from a zero initial guess.  The recorded residual is
/// the V-norm sqrt(r^T V r), which the recurrence provides for free.  CG is
/// only valid with a symmetric positive semidefinite preconditioner, so an
/// asymmetric plan is rejected outright.
inline std::pair<BlockVec, SolveReport> pcg(const BlockCsr& A, const BlockVec& b,
                                            const LinearOperator& V, double tol = 1e-12,
                                            int maxit = 60) {
    if (!V.symmetric)
        throw std::invalid_argument("pcg: preconditioner plan is not symmetric");
    SolveReport rep;
    BlockVec x(b.nblocks, b.bs);
    BlockVec r = b;
    BlockVec z = V.apply(r);
    double rz = dot(r, z);
    const double r0 = std::sqrt(std::max(rz, 0.0));
    rep.residuals.push_back(r0);
    if (r0 == 0.0) {
        rep.converged = true;
        fit_rate(rep);
        return {std::move(x), rep};
    }
    BlockVec p = z, Ap;
    for (int it = 1; it <= maxit; ++it) {
        spmv(A, p, Ap);
        const double pAp = dot(p, Ap);
        if (pAp <= 0.0) {  // curvature exhausted: semidefinite direction, stop
            rep.breakdown = true;
            break;
        }
        const double alpha = rz / pAp;
        axpy(alpha, p, x);
        axpy(-alpha, Ap, r);
        z = V.apply(r);
        const double rz_new = dot(r, z);
        const double rk = std::sqrt(std::max(rz_new, 0.0));
        rep.residuals.push_back(rk);
        rep.iterations = it;
        if (rz_new < 0.0) {
            rep.breakdown = true;
            break;
        }
        if (rk <= tol * r0) {
            rep.converged = true;
            break;
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = z.data[i] + beta * p.data[i];
    }
    fit_rate(rep);
    return {std::move(x), rep};
}

/// Left-preconditioned full (restart-free) GMRES from a zero initial guess:
/// modified Gram-Schmidt Arnoldi on the operator V A with right-hand side
/// V b, Givens rotations maintaining the exact residual |gamma_k|.
inline std::pair<BlockVec, SolveReport> gmres_left(const BlockCsr& A, const BlockVec& b,
                                                   const LinearOperator& V, double tol = 1e-12,
                                                   int maxit = 60) {
    SolveReport rep;
    BlockVec x(b.nblocks, b.bs);
    BlockVec r0 = V.apply(b);
    const double g0 = norm2(r0);
    rep.residuals.push_back(g0);
    if (g0 == 0.0) {
        rep.converged = true;
        fit_rate(rep);
        return {std::move(x), rep};
    }

    std::vector<BlockVec> basis;
    scale(1.0 / g0, r0);
    basis.push_back(std::move(r0));
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(maxit + 1, maxit);
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(maxit + 1), cs(maxit), sn(maxit);
    gamma[0] = g0;

    int m = 0;
    for (int j = 0; j < maxit; ++j) {
        BlockVec w = V.apply(spmv(A, basis[j]));
        const double pre_norm = norm2(w);
        for (int i = 0; i <= j; ++i) {
            const double h = dot(w, basis[i]);
            H(i, j) = h;
            axpy(-h, basis[i], w);
        }
        const double hn = norm2(w);
        H(j + 1, j) = hn;
        // The new direction lies in the span of the old ones: the projected
        // problem is exact and the solve below returns the true solution.
        const bool happy = hn <= 1e-14 * pre_norm;
        if (!happy) {
            scale(1.0 / hn, w);
            basis.push_back(std::move(w));
        }
        for (int i = 0; i < j; ++i) {
            const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
            H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
            H(i, j) = t;
        }
        const double d = std::hypot(H(j, j), H(j + 1, j));
        if (d == 0.0) {
            cs[j] = 1.0;
            sn[j] = 0.0;
        } else {
            cs[j] = H(j, j) / d;
            sn[j] = H(j + 1, j) / d;
        }
        H(j, j) = d;
        H(j + 1, j) = 0.0;
        gamma[j + 1] = -sn[j] * gamma[j];
        gamma[j] = cs[j] * gamma[j];

        m = j + 1;
        const double rk = std::abs(gamma[j + 1]);
        rep.residuals.push_back(rk);
        rep.iterations = m;
        if (happy) {
            rep.breakdown = true;
            rep.converged = true;
            break;
        }
        if (rk <= tol * g0) {
            rep.converged = true;
            break;
        }
    }

    // Back-substitute the projected triangular system and expand.
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    for (int i = m - 1; i >= 0; --i) {
        double s = gamma[i];
        for (int k = i + 1; k < m; ++k) s -= H(i, k) * y[k];
        y[i] = H(i, i) != 0.0 ? s / H(i, i) : 0.0;
    }
    for (int i = 0; i < m; ++i) axpy(y[i], basis[i], x);
    fit_rate(rep);
    return {std::move(x), rep};
}

/// Gram-Schmidt with drop tolerance; inputs need not be independent.
inline std::vector<BlockVec> orthonormalize(std::vector<BlockVec> vs) {
    std::vector<BlockVec> out;
    for (BlockVec& v : vs) {
        for (const BlockVec& o : out) axpy(-dot(v, o), o, v);
        const double n = norm2(v);
        if (n > 1e-10) {
            scale(1.0 / n, v);
            out.push_back(std::move(v));
        }
    }
    return out;
}

struct EtaOptions {
    double tol = 1e-12;
    int maxit = 60;
    std::uint64_t seed = 0;
    /// Extra kernel vectors beyond the constant fields the system reports
    /// (e.g. the rigid rotation of an all-traction problem).
    std::vector<BlockVec> extra_kernel;
};

/// Draws the measurement right-hand side: every coefficient independently
/// uniform on [-1,1].  The mapping from raw engine output is pinned so the
/// stream is reproducible across platforms.
inline BlockVec random_rhs(int nblocks, int bs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    BlockVec b(nblocks, bs);
    for (double& v : b.data) {
        const double u = double(rng() >> 11) * 0x1.0p-53;  // [0,1)
        v = 2.0 * u - 1.0;
    }
    return b;
}

/// The paper-protocol measurement: random rhs, zero initial guess, solve to
/// 1e-12 relative or 60 iterations, fit the contraction rate.  The rhs is
/// projected onto the orthogonal complement of the known kernel so the
/// singular problems remain consistent.
inline SolveReport estimate_eta(const System& S, const Multigrid& V, KrylovKind kind,
                                const EtaOptions& opt = {}) {
    BlockVec b = random_rhs(S.n_elements(), S.block_size(), opt.seed);
    std::vector<BlockVec> kern = kernel_basis(S);
    for (const BlockVec& v : opt.extra_kernel) kern.push_back(v);
    kern = orthonormalize(std::move(kern));
    for (const BlockVec& k : kern) axpy(-dot(b, k), k, b);

    const LinearOperator P = preconditioner(V);
    auto [x, rep] = kind == KrylovKind::CG ? pcg(S.A, b, P, opt.tol, opt.maxit)
                                           : gmres_left(S.A, b, P, opt.tol, opt.maxit);
    (void)x;
    return rep;
}

}  // namespace ldgmg

#endif
