#ifndef LDGMG_BASIS_HPP
#define LDGMG_BASIS_HPP

/** \file basis.hpp
 *  \brief Tensor-product modal Legendre basis and Gauss-Legendre quadrature.
 *
 *  1D modes are Legendre polynomials scaled to unit L2 norm on [-1,1]; the
 *  d-dimensional basis is their tensor product with axis 0 varying fastest.
 *  Physical bases keep the reference normalization, so the mass matrix of an
 *  element with edge h and weight w is the scalar w*(h/2)^d times identity.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace ldgmg {

/// P_k(x) and d/dx P_k(x) by the three-term recurrence.
inline std::pair<double, double> legendre(int k, double x) {
    double p0 = 1.0, d0 = 0.0;       // P_0
    if (k == 0) return {p0, d0};
    double p1 = x, d1 = 1.0;         // P_1
    for (int n = 1; n < k; ++n) {
        const double p2 = ((2 * n + 1) * x * p1 - n * p0) / (n + 1);
        const double d2 = d0 + (2 * n + 1) * p1;
        p0 = p1; d0 = d1;
        p1 = p2; d1 = d2;
    }
    return {p1, d1};
}

/// Unit-L2-norm Legendre mode on [-1,1]: sqrt((2k+1)/2) P_k.
inline double mode_val(int k, double x) {
    return std::sqrt((2 * k + 1) / 2.0) * legendre(k, x).first;
}
inline double mode_dval(int k, double x) {
    return std::sqrt((2 * k + 1) / 2.0) * legendre(k, x).second;
}

/// npts-point Gauss-Legendre rule on [-1,1]; exact through degree 2*npts-1.
/// Nodes are Newton-refined from the Chebyshev initial guess; the rule is
/// symmetrized so node pairs are exact negatives.
inline void gauss_legendre(int npts, std::vector<double>& x, std::vector<double>& w) {
    if (npts < 1 || npts > 64) throw std::invalid_argument("gauss_legendre: bad point count");
    x.assign(npts, 0.0);
    w.assign(npts, 0.0);
    for (int i = 0; i < (npts + 1) / 2; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (npts + 0.5));
        for (int it = 0; it < 100; ++it) {
            auto [p, d] = legendre(npts, t);
            const double dt = p / d;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        auto [p, d] = legendre(npts, t);
        (void)p;
        const int j = npts - 1 - i;
        x[i] = -std::abs(t);
        x[j] = std::abs(t);
        w[i] = w[j] = 2.0 / ((1.0 - t * t) * d * d);
    }
    if (npts % 2 == 1) x[npts / 2] = 0.0;
}

/// Mass scalar of an element with edge length h: its (weight-1) mass matrix
/// is this multiple of the identity.
inline double mass_scalar(double h, int dim) {
    double m = 1.0;
    for (int a = 0; a < dim; ++a) m *= 0.5 * h;
    return m;
}

/// Basis bookkeeping for one polynomial degree in dim dimensions, plus the
/// (degree+1)-point Gauss-Legendre rule and 1D value tables at its nodes.
struct ElementBasis {
    int degree = 1;
    int dim = 2;
    int p1 = 2;          ///< degree + 1
    int block_size = 4;  ///< (degree+1)^dim
    std::vector<double> nodes, weights;     ///< 1D rule on [-1,1]
    std::vector<double> val, dval;          ///< [mode * p1 + q] tables at nodes
    std::vector<double> end_val;            ///< [mode * 2 + side] values at -1, +1

    ElementBasis() = default;
    ElementBasis(int degree_, int dim_) : degree(degree_), dim(dim_) {
        if (degree < 1 || degree > 8) throw std::invalid_argument("basis: degree out of range");
        if (dim != 2 && dim != 3) throw std::invalid_argument("basis: dim must be 2 or 3");
        p1 = degree + 1;
        block_size = 1;
        for (int a = 0; a < dim; ++a) block_size *= p1;
        gauss_legendre(p1, nodes, weights);
        val.resize(p1 * p1);
        dval.resize(p1 * p1);
        end_val.resize(p1 * 2);
        for (int m = 0; m < p1; ++m) {
            for (int q = 0; q < p1; ++q) {
                val[m * p1 + q] = mode_val(m, nodes[q]);
                dval[m * p1 + q] = mode_dval(m, nodes[q]);
            }
            end_val[m * 2 + 0] = mode_val(m, -1.0);
            end_val[m * 2 + 1] = mode_val(m, +1.0);
        }
    }

    /// Per-axis mode indices of tensor mode m (axis 0 fastest).
    std::array<int, 3> decompose(int m) const {
        std::array<int, 3> ix{0, 0, 0};
        for (int a = 0; a < dim; ++a) {
            ix[a] = m % p1;
            m /= p1;
        }
        return ix;
    }
    int compose(const std::array<int, 3>& ix) const {
        int m = 0, stride = 1;
        for (int a = 0; a < dim; ++a) {
            m += ix[a] * stride;
            stride *= p1;
        }
        return m;
    }

    /// Value of tensor mode m at reference point xi in [-1,1]^dim.
    double eval(int m, const std::array<double, 3>& xi) const {
        const auto ix = decompose(m);
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= mode_val(ix[a], xi[a]);
        return v;
    }
};

/// L2 projection of f onto the basis of the element [lo, lo+h]^dim, using the
/// basis' own quadrature rule.  The reference normalization makes the result
/// independent of h scaling: c_i = sum_q w_q f(x_q) phi_i(xi_q).
inline std::vector<double> l2_project(const ElementBasis& B,
                                      const std::array<double, 3>& lo, double h,
                                      const std::function<double(std::array<double, 3>)>& f) {
    std::vector<double> c(B.block_size, 0.0);
    const int nq = B.p1;
    std::array<int, 3> q{0, 0, 0};
    const int total = B.dim == 2 ? nq * nq : nq * nq * nq;
    for (int flat = 0; flat < total; ++flat) {
        int rem = flat;
        double wq = 1.0;
        std::array<double, 3> x{0, 0, 0}, xi{0, 0, 0};
        for (int a = 0; a < B.dim; ++a) {
            q[a] = rem % nq;
            rem /= nq;
            wq *= B.weights[q[a]];
            xi[a] = B.nodes[q[a]];
            x[a] = lo[a] + 0.5 * h * (xi[a] + 1.0);
        }
        const double fv = f(x);
        for (int m = 0; m < B.block_size; ++m) {
            const auto ix = B.decompose(m);
            double phi = 1.0;
            for (int a = 0; a < B.dim; ++a) phi *= B.val[ix[a] * B.p1 + q[a]];
            c[m] += wq * fv * phi;
        }
    }
    return c;
}

/// Evaluates a coefficient vector at a physical point of its element.
inline double eval_function(const ElementBasis& B, const std::array<double, 3>& lo, double h,
                            const double* coeff, const std::array<double, 3>& x) {
    std::array<double, 3> xi{0, 0, 0};
    for (int a = 0; a < B.dim; ++a) xi[a] = 2.0 * (x[a] - lo[a]) / h - 1.0;
    double s = 0.0;
    for (int m = 0; m < B.block_size; ++m) s += coeff[m] * B.eval(m, xi);
    return s;
}

}  // namespace ldgmg

#endif
