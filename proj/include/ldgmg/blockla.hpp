#ifndef LDGMG_BLOCKLA_HPP
#define LDGMG_BLOCKLA_HPP

/** \file blockla.hpp
 *  \brief Block-sparse CSR storage, block vectors, pattern powers, and the
 *         dense kernels (least squares, symmetric eigendecomposition).
 *
 *  Blocks are uniform row_bs x col_bs row-major doubles.  All sparse kernels
 *  accumulate in ascending index order on a single thread, so results are
 *  bit-reproducible.  Dense least squares goes through LAPACK's QR (dgels)
 *  with an R-diagonal rank check and an SVD minimum-norm fallback (dgelsd);
 *  eigendecompositions use Eigen's self-adjoint solver.
 */

#include <Eigen/Dense>
#include <lapacke.h>

#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace ldgmg {

namespace detail {
/// BLAS-level threading would make dense results depend on the machine;
/// everything here is deterministic single-threaded kernels.
inline const int blas_single_thread_init = [] {
    openblas_set_num_threads(1);
    return 0;
}();
}  // namespace detail

/// Counter of dense block-vector multiplies performed by spmv and
/// spmv_transpose; used by the smoother cost instrumentation tests.
inline std::uint64_t& block_mult_counter() {
    thread_local std::uint64_t count = 0;
    return count;
}

struct BlockVec {
    int nblocks = 0;
    int bs = 0;
    std::vector<double> data;

    BlockVec() = default;
    BlockVec(int nblocks_, int bs_) : nblocks(nblocks_), bs(bs_), data(size_t(nblocks_) * bs_, 0.0) {}

    double* block(int i) { return data.data() + size_t(i) * bs; }
    const double* block(int i) const { return data.data() + size_t(i) * bs; }
    size_t size() const { return data.size(); }
    void set_zero() { std::fill(data.begin(), data.end(), 0.0); }
};

inline double dot(const BlockVec& a, const BlockVec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}
inline double norm2(const BlockVec& a) { return std::sqrt(dot(a, a)); }
inline void axpy(double alpha, const BlockVec& x, BlockVec& y) {
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}
inline void scale(double alpha, BlockVec& x) {
    for (double& v : x.data) v *= alpha;
}

/// Uniform block CSR.  Block k of row i occupies val[k*row_bs*col_bs ...]
/// row-major; columns within a row are strictly ascending.
struct BlockCsr {
    int brows = 0, bcols = 0;
    int row_bs = 0, col_bs = 0;
    std::vector<int> ptr, col;
    std::vector<double> val;

    int block_bytes() const { return row_bs * col_bs; }
    double* block(int k) { return val.data() + size_t(k) * row_bs * col_bs; }
    const double* block(int k) const { return val.data() + size_t(k) * row_bs * col_bs; }

    /// CSR entry index of block (i, j), or -1.
    int find(int i, int j) const {
        for (int k = ptr[i]; k < ptr[i + 1]; ++k)
            if (col[k] == j) return k;
        return -1;
    }
    int row_blocks(int i) const { return ptr[i + 1] - ptr[i]; }
};

/// Accumulating builder: add_block sums into (i, j); freeze() emits CSR with
/// ascending columns.  Deterministic because std::map iterates in key order.
struct BlockBuilder {
    int brows, bcols, row_bs, col_bs;
    std::vector<std::map<int, std::vector<double>>> rows;

    BlockBuilder(int brows_, int bcols_, int row_bs_, int col_bs_)
        : brows(brows_), bcols(bcols_), row_bs(row_bs_), col_bs(col_bs_), rows(brows_) {}

    double* at(int i, int j) {
        auto& cell = rows[i][j];
        if (cell.empty()) cell.assign(size_t(row_bs) * col_bs, 0.0);
        return cell.data();
    }
    void add_block(int i, int j, const double* b, double scale = 1.0) {
        double* dst = at(i, j);
        for (int k = 0; k < row_bs * col_bs; ++k) dst[k] += scale * b[k];
    }

    BlockCsr freeze() const {
        BlockCsr A;
        A.brows = brows;
        A.bcols = bcols;
        A.row_bs = row_bs;
        A.col_bs = col_bs;
        A.ptr.resize(brows + 1, 0);
        size_t nnzb = 0;
        for (int i = 0; i < brows; ++i) nnzb += rows[i].size();
        A.col.reserve(nnzb);
        A.val.reserve(nnzb * size_t(row_bs) * col_bs);
        for (int i = 0; i < brows; ++i) {
            for (const auto& [j, b] : rows[i]) {
                A.col.push_back(j);
                A.val.insert(A.val.end(), b.begin(), b.end());
            }
            A.ptr[i + 1] = (int)A.col.size();
        }
        return A;
    }
};

/// y = A x.  Blocks of a row are consumed in ascending column order.
inline void spmv(const BlockCsr& A, const BlockVec& x, BlockVec& y) {
    if (x.nblocks != A.bcols || x.bs != A.col_bs) throw std::invalid_argument("spmv: shape mismatch");
    y.nblocks = A.brows;
    y.bs = A.row_bs;
    y.data.assign(size_t(A.brows) * A.row_bs, 0.0);
    for (int i = 0; i < A.brows; ++i) {
        double* yi = y.block(i);
        for (int k = A.ptr[i]; k < A.ptr[i + 1]; ++k) {
            const double* b = A.block(k);
            const double* xj = x.block(A.col[k]);
            ++block_mult_counter();
            for (int r = 0; r < A.row_bs; ++r) {
                double s = 0.0;
                for (int c = 0; c < A.col_bs; ++c) s += b[r * A.col_bs + c] * xj[c];
                yi[r] += s;
            }
        }
    }
}

/// y = A^T x without materializing the transpose.
inline void spmv_transpose(const BlockCsr& A, const BlockVec& x, BlockVec& y) {
    if (x.nblocks != A.brows || x.bs != A.row_bs)
        throw std::invalid_argument("spmv_transpose: shape mismatch");
    y.nblocks = A.bcols;
    y.bs = A.col_bs;
    y.data.assign(size_t(A.bcols) * A.col_bs, 0.0);
    for (int i = 0; i < A.brows; ++i) {
        const double* xi = x.block(i);
        for (int k = A.ptr[i]; k < A.ptr[i + 1]; ++k) {
            const double* b = A.block(k);
            double* yj = y.block(A.col[k]);
            ++block_mult_counter();
            for (int c = 0; c < A.col_bs; ++c) {
                double s = 0.0;
                for (int r = 0; r < A.row_bs; ++r) s += b[r * A.col_bs + c] * xi[r];
                yj[c] += s;
            }
        }
    }
}

inline BlockVec spmv(const BlockCsr& A, const BlockVec& x) {
    BlockVec y;
    spmv(A, x, y);
    return y;
}
inline BlockVec spmv_transpose(const BlockCsr& A, const BlockVec& x) {
    BlockVec y;
    spmv_transpose(A, x, y);
    return y;
}

/// Structural pattern: sorted column sets per block row.
struct BlockPattern {
    std::vector<std::vector<int>> rows;
};

/// Pattern of A^level for structurally square A; level 0 is the diagonal.
/// Diagonal blocks are always treated as present, so this is the set of
/// vertices reachable in at most `level` pattern edges.
inline BlockPattern pattern_power(const BlockCsr& A, int level) {
    if (A.brows != A.bcols) throw std::invalid_argument("pattern_power: matrix not block-square");
    if (level < 0) throw std::invalid_argument("pattern_power: negative power");
    BlockPattern P;
    P.rows.resize(A.brows);
    std::vector<int> mark(A.brows, -1);
    std::vector<int> frontier, next;
    for (int i = 0; i < A.brows; ++i) {
        auto& out = P.rows[i];
        mark[i] = i;
        out.push_back(i);
        frontier.assign(1, i);
        for (int l = 0; l < level; ++l) {
            next.clear();
            for (int u : frontier) {
                for (int k = A.ptr[u]; k < A.ptr[u + 1]; ++k) {
                    const int v = A.col[k];
                    if (mark[v] != i) {
                        mark[v] = i;
                        out.push_back(v);
                        next.push_back(v);
                    }
                }
            }
            frontier.swap(next);
        }
        std::sort(out.begin(), out.end());
    }
    return P;
}

/// Block Frobenius norm of a CSR entry.
inline double block_frob(const double* b, int rows, int cols) {
    double s = 0.0;
    for (int k = 0; k < rows * cols; ++k) s += b[k] * b[k];
    return std::sqrt(s);
}

inline double frob_norm(const BlockCsr& A) {
    double s = 0.0;
    for (double v : A.val) s += v * v;
    return std::sqrt(s);
}

inline Eigen::MatrixXd to_dense(const BlockCsr& A) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(size_t(A.brows) * A.row_bs, size_t(A.bcols) * A.col_bs);
    for (int i = 0; i < A.brows; ++i)
        for (int k = A.ptr[i]; k < A.ptr[i + 1]; ++k) {
            const double* b = A.block(k);
            for (int r = 0; r < A.row_bs; ++r)
                for (int c = 0; c < A.col_bs; ++c)
                    D(size_t(i) * A.row_bs + r, size_t(A.col[k]) * A.col_bs + c) = b[r * A.col_bs + c];
        }
    return D;
}

/// Block-coordinate text dump: header "blockcoo brows bcols row_bs col_bs n"
/// followed by one "i j v00 v01 ..." line per block (row-major, max_digits10
/// precision so a parse round-trips bit-exactly).
inline void dump_block_coo(const BlockCsr& A, std::ostream& os) {
    size_t nnzb = A.col.size();
    os.precision(17);
    os << "blockcoo " << A.brows << " " << A.bcols << " " << A.row_bs << " " << A.col_bs << " "
       << nnzb << "\n";
    for (int i = 0; i < A.brows; ++i)
        for (int k = A.ptr[i]; k < A.ptr[i + 1]; ++k) {
            os << i << " " << A.col[k];
            const double* b = A.block(k);
            for (int t = 0; t < A.row_bs * A.col_bs; ++t) os << " " << b[t];
            os << "\n";
        }
}

struct LstsqResult {
    Eigen::MatrixXd X;
    bool rank_deficient = false;
};

/// Minimizer of ||M X - rhs||_F by Householder QR (LAPACK dgels).  Columns of
/// R with |R_ii| below 1e-12 * ||M||_F flag rank deficiency, in which case the
/// minimum-norm solution is recomputed via dgelsd.
inline LstsqResult dense_lstsq(const Eigen::MatrixXd& M, const Eigen::MatrixXd& rhs) {
    const int m = (int)M.rows(), n = (int)M.cols(), nrhs = (int)rhs.cols();
    if (rhs.rows() != m) throw std::invalid_argument("dense_lstsq: rhs row mismatch");
    if (m < n) throw std::invalid_argument("dense_lstsq: underdetermined system");
    Eigen::MatrixXd A = M;
    Eigen::MatrixXd B(std::max(m, n), nrhs);
    B.topRows(m) = rhs;
    int info = LAPACKE_dgels(LAPACK_COL_MAJOR, 'N', m, n, nrhs, A.data(), m, B.data(),
                             (int)B.rows());
    if (info < 0) throw std::runtime_error("dense_lstsq: dgels failed");
    const double tol = 1e-12 * M.norm();
    bool deficient = info > 0;
    for (int i = 0; i < n && !deficient; ++i)
        if (std::abs(A(i, i)) <= tol) deficient = true;

    LstsqResult out;
    if (!deficient) {
        out.X = B.topRows(n);
        return out;
    }
    // Rank-deficient: minimum-norm least squares via SVD.
    out.rank_deficient = true;
    A = M;
    B.topRows(m) = rhs;
    std::vector<double> sv(std::min(m, n));
    int rank = 0;
    info = LAPACKE_dgelsd(LAPACK_COL_MAJOR, m, n, nrhs, A.data(), m, B.data(), (int)B.rows(),
                          sv.data(), 1e-12, &rank);
    if (info != 0) throw std::runtime_error("dense_lstsq: dgelsd failed");
    out.X = B.topRows(n);
    return out;
}

struct SymEig {
    Eigen::VectorXd lambda;
    Eigen::MatrixXd V;
};

/// Eigendecomposition of a symmetric matrix; asymmetry above 1e-13 * ||A||_F
/// is rejected rather than silently symmetrized.
inline SymEig sym_eig(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols()) throw std::invalid_argument("sym_eig: not square");
    const double asym = (A - A.transpose()).norm();
    if (asym > 1e-13 * std::max(1e-300, A.norm()))
        throw std::invalid_argument("sym_eig: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw std::runtime_error("sym_eig: solver failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// y = pinv(A) r through the eigendecomposition; eigenvalues with
/// |lambda| <= kernel_tol * max|lambda| are treated as kernel and dropped.
inline Eigen::VectorXd pinv_apply(const SymEig& eig, const Eigen::VectorXd& r,
                                  double kernel_tol = 1e-10) {
    const double lmax = eig.lambda.size() ? eig.lambda.cwiseAbs().maxCoeff() : 0.0;
    Eigen::VectorXd t = eig.V.transpose() * r;
    for (int i = 0; i < t.size(); ++i) {
        const double l = eig.lambda[i];
        t[i] = std::abs(l) <= kernel_tol * lmax ? 0.0 : t[i] / l;
    }
    return eig.V * t;
}

}  // namespace ldgmg

#endif
