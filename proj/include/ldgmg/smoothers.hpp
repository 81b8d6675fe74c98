#ifndef LDGMG_SMOOTHERS_HPP
#define LDGMG_SMOOTHERS_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ldgmg/blockla.hpp"
#include "ldgmg/ldg_core.hpp"

namespace ldgmg {

enum class Sweep { Forward, Reverse };

enum class SmootherKind { Jacobi, ColouredGS, ProcBlockGS, Sai };

struct SmootherConfig {
    SmootherKind kind = SmootherKind::Jacobi;
    double omega = 0.8;   ///< damping; ColouredGS always runs undamped
    int partitions = 1;   ///< ProcBlockGS only
    int level = 1;        ///< Sai pattern power
    double zeta = 0.1;    ///< Sai pressure balance weight
    bool cache = true;    ///< Sai least-squares cache

    static SmootherConfig jacobi(double omega = 0.8) {
        SmootherConfig c;
        c.kind = SmootherKind::Jacobi;
        c.omega = omega;
        return c;
    }
    static SmootherConfig coloured_gs() {
        SmootherConfig c;
        c.kind = SmootherKind::ColouredGS;
        c.omega = 1.0;
        return c;
    }
    static SmootherConfig proc_block_gs(int partitions, double omega = 0.8) {
        SmootherConfig c;
        c.kind = SmootherKind::ProcBlockGS;
        c.partitions = partitions;
        c.omega = omega;
        return c;
    }
    static SmootherConfig sai(int level, double zeta = 0.1, bool cache = true) {
        SmootherConfig c;
        c.kind = SmootherKind::Sai;
        c.level = level;
        c.zeta = zeta;
        c.cache = cache;
        return c;
    }
};

/// Greedy colouring of the block connectivity graph, elements visited in
/// ascending order.  Requires a structurally symmetric pattern so that row
/// adjacency equals column adjacency.
inline std::vector<int> colour_mesh(const BlockCsr& A) {
    if (A.brows != A.bcols) throw std::invalid_argument("colour_mesh: matrix not block-square");
    for (int i = 0; i < A.brows; ++i)
        for (int k = A.ptr[i]; k < A.ptr[i + 1]; ++k)
            if (A.find(A.col[k], i) < 0)
                throw std::invalid_argument("colour_mesh: pattern is not symmetric");
    std::vector<int> colour(A.brows, -1);
    std::vector<char> used;
    int ncol = 0;
    for (int e = 0; e < A.brows; ++e) {
        used.assign(size_t(ncol) + 1, 0);
        for (int k = A.ptr[e]; k < A.ptr[e + 1]; ++k) {
            const int j = A.col[k];
            if (j != e && colour[j] >= 0) used[colour[j]] = 1;
        }
        int c = 0;
        while (used[c]) ++c;
        colour[e] = c;
        ncol = std::max(ncol, c + 1);
    }
    return colour;
}

/// Contiguous index ranges [p*N/P, (p+1)*N/P) covering [0, N).
inline std::vector<std::pair<int, int>> partition_ranges(int N, int P) {
    if (P < 1 || P > N)
        throw std::invalid_argument("partition_ranges: partition count must lie in [1, N]");
    std::vector<std::pair<int, int>> r(P);
    for (int p = 0; p < P; ++p)
        r[p] = {int((long long)p * N / P), int((long long)(p + 1) * N / P)};
    return r;
}

/// Row scaling that equilibrates the element-diagonal blocks before the SAI
/// least-squares fit.  Scalar systems: every row of element e gets
/// ||A_ee||_F^{-1/2}, so scaled diagonal blocks have unit norm.  Stokes
/// systems: velocity rows get the same treatment against the velocity-velocity
/// sub-block, and pressure rows are chosen so the scaled velocity-pressure
/// coupling sub-blocks land at norm zeta.
inline std::vector<double> balance_vector(const System& S, double zeta) {
    const int N = S.n_elements(), bs = S.block_size();
    std::vector<double> a(size_t(N) * bs, 1.0);
    const bool stokes = S.kind == SystemKind::Stokes;
    if (stokes && zeta <= 0.0)
        throw std::invalid_argument("balance_vector: zeta must be positive");
    const int nv = stokes ? S.n_velocity() : bs;
    for (int e = 0; e < N; ++e) {
        const int k = S.A.find(e, e);
        if (k < 0) throw std::runtime_error("balance_vector: missing diagonal block");
        const double* D = S.A.block(k);
        double svv = 0.0, svp = 0.0;
        for (int i = 0; i < nv; ++i)
            for (int j = 0; j < bs; ++j) {
                const double v = D[i * bs + j];
                (j < nv ? svv : svp) += v * v;
            }
        if (svv <= 0.0) throw std::runtime_error("balance_vector: zero diagonal block");
        const double av = 1.0 / std::sqrt(std::sqrt(svv));
        double ap = av;
        if (stokes) {
            if (svp <= 0.0)
                throw std::runtime_error("balance_vector: zero velocity-pressure coupling block");
            ap = zeta * std::sqrt(std::sqrt(svv)) / std::sqrt(svp);
        }
        for (int i = 0; i < bs; ++i) a[size_t(e) * bs + i] = i < nv ? av : ap;
    }
    return a;
}

struct SaiStats {
    int rank_deficient_columns = 0;
    std::size_t cache_hits = 0, cache_misses = 0;
    /// Distinct local least-squares shapes (#row blocks, #column blocks)
    /// with the number of columns that produced each.
    std::map<std::pair<int, int>, int> ls_dims;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Strong 128-bit content hash of the local least-squares matrix: two
/// independent multiply-xor lanes over the column-major double words.  The
/// cache compares index geometry exactly and trusts this hash for the
/// numeric payload.
inline std::pair<std::uint64_t, std::uint64_t> content_hash(const Eigen::MatrixXd& M) {
    std::uint64_t h1 = 0xcbf29ce484222325ull, h2 = 0x84222325cbf29ce4ull;
    const double* p = M.data();
    const std::size_t n = size_t(M.rows()) * M.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t w = std::bit_cast<std::uint64_t>(p[i]);
        h1 = (h1 ^ w) * 0x00000100000001b3ull;
        h2 = (h2 ^ w) * 0x9e3779b97f4a7c15ull;
    }
    return {splitmix64(h1), splitmix64(h2)};
}

struct SaiKey {
    int ni, nj, bs;
    std::uint64_t h1, h2;
    bool operator==(const SaiKey& o) const {
        return ni == o.ni && nj == o.nj && bs == o.bs && h1 == o.h1 && h2 == o.h2;
    }
};

struct SaiKeyHash {
    std::size_t operator()(const SaiKey& k) const {
        return std::size_t(k.h1 ^ splitmix64(k.h2 + std::uint64_t(k.ni) * 1315423911u + k.nj));
    }
};

struct SaiCached {
    Eigen::MatrixXd X;
    bool rank_deficient = false;
};

/// Canonical ordering of the local vertex set `I` (ascending, containing j).
/// Breadth-first from j, expanding each vertex's unvisited local neighbours
/// sorted by the bytes of their connecting and diagonal blocks.  Vertices that
/// carry identical values end up in identical positions no matter how the
/// global mesh numbered them, which is what lets distinct columns share one
/// least-squares solve.
inline void canonical_local_order(const BlockCsr& At, const std::vector<int>& I, int j,
                                  std::vector<int>& seen, std::vector<int>& order) {
    const std::size_t blk_bytes = sizeof(double) * At.row_bs * At.col_bs;
    auto blk = [&](int r, int c) -> const double* {
        const int k = At.find(r, c);
        return k < 0 ? nullptr : At.block(k);
    };
    auto blk_less = [&](const double* a, const double* b, int& out) {
        if (a == b) return false;
        if (!a || !b) {
            out = !a ? -1 : 1;
            return true;
        }
        const int c = std::memcmp(a, b, blk_bytes);
        if (c == 0) return false;
        out = c;
        return true;
    };
    order.clear();
    order.push_back(j);
    seen[j] = j;
    std::vector<int> cand;
    for (std::size_t head = 0; head < order.size(); ++head) {
        const int u = order[head];
        cand.clear();
        for (int k = At.ptr[u]; k < At.ptr[u + 1]; ++k) {
            const int v = At.col[k];
            if (seen[v] != j && std::binary_search(I.begin(), I.end(), v)) {
                seen[v] = j;
                cand.push_back(v);
            }
        }
        std::sort(cand.begin(), cand.end(), [&](int v1, int v2) {
            int c;
            if (blk_less(blk(u, v1), blk(u, v2), c)) return c < 0;
            if (blk_less(blk(v1, u), blk(v2, u), c)) return c < 0;
            if (blk_less(blk(v1, v1), blk(v2, v2), c)) return c < 0;
            return v1 < v2;
        });
        order.insert(order.end(), cand.begin(), cand.end());
    }
    // A symmetric pattern cannot strand vertices of I, but stay total anyway.
    if (order.size() != I.size())
        for (int r : I)
            if (seen[r] != j) order.push_back(r);
}

}  // namespace detail

/// Reusable store of SAI column solutions, keyed by the canonically reordered
/// local problem.  May be shared across build_sai calls (e.g. every level of a
/// multigrid hierarchy); sharing never changes results, only the work done.
class SaiCache {
  public:
    std::size_t entries() const { return map_.size(); }

  private:
    friend BlockCsr build_sai(const System&, int, double, SaiCache*, SaiStats*);
    std::unordered_map<detail::SaiKey, detail::SaiCached, detail::SaiKeyHash> map_;
    std::size_t bytes_ = 0;
};

/// Balanced sparse approximate inverse on the pattern of A^level.  Each block
/// column j of the scaled inverse minimizes ||Atilde[:,J] X - E_j||_F over the
/// rows that touch J, so the normal-equation residual vanishes on every stored
/// block.  The local problem is assembled in the canonical vertex order, under
/// which columns that repeat the same values (uniform mesh regions, any global
/// numbering) share one least-squares solve through the cache.  Results are
/// bitwise independent of caching.
inline BlockCsr build_sai(const System& S, int level, double zeta, SaiCache* cache,
                          SaiStats* stats = nullptr) {
    const BlockCsr& A = S.A;
    const int N = A.brows, bs = A.row_bs;
    if (A.bcols != N || A.col_bs != bs)
        throw std::invalid_argument("build_sai: matrix not block-square");
    const std::vector<double> alpha = balance_vector(S, zeta);

    // Atilde = diag(alpha) A diag(alpha), same pattern as A.
    BlockCsr At = A;
    for (int r = 0; r < N; ++r)
        for (int k = At.ptr[r]; k < At.ptr[r + 1]; ++k) {
            const int c = At.col[k];
            double* v = At.block(k);
            for (int i = 0; i < bs; ++i)
                for (int j = 0; j < bs; ++j)
                    v[i * bs + j] *= alpha[size_t(r) * bs + i] * alpha[size_t(c) * bs + j];
        }

    const BlockPattern pat = pattern_power(A, level);
    BlockCsr B;
    B.brows = B.bcols = N;
    B.row_bs = B.col_bs = bs;
    B.ptr.resize(size_t(N) + 1, 0);
    for (int r = 0; r < N; ++r) B.ptr[r + 1] = B.ptr[r] + (int)pat.rows[r].size();
    B.col.reserve(B.ptr[N]);
    for (int r = 0; r < N; ++r) B.col.insert(B.col.end(), pat.rows[r].begin(), pat.rows[r].end());
    B.val.assign(size_t(B.ptr[N]) * bs * bs, 0.0);

    SaiStats local;
    SaiStats& st = stats ? *stats : local;
    st = SaiStats{};
    constexpr std::size_t kCacheBudget = std::size_t(256) << 20;

    std::vector<int> mark(N, -1), seen(N, -1), I, Ican, Jcan;
    for (int j = 0; j < N; ++j) {
        const std::vector<int>& J = pat.rows[j];
        I.clear();
        for (int k : J)
            for (int q = A.ptr[k]; q < A.ptr[k + 1]; ++q) {
                const int r = A.col[q];
                if (mark[r] != j) {
                    mark[r] = j;
                    I.push_back(r);
                }
            }
        std::sort(I.begin(), I.end());
        const int ni = (int)I.size(), nj = (int)J.size();
        ++st.ls_dims[{ni, nj}];

        detail::canonical_local_order(At, I, j, seen, Ican);
        Jcan.clear();
        for (int v : Ican)
            if (std::binary_search(J.begin(), J.end(), v)) Jcan.push_back(v);

        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(size_t(ni) * bs, size_t(nj) * bs);
        for (int b = 0; b < nj; ++b)
            for (int a = 0; a < ni; ++a) {
                const int k = At.find(Ican[a], Jcan[b]);
                if (k < 0) continue;
                const double* v = At.block(k);
                for (int i = 0; i < bs; ++i)
                    for (int c = 0; c < bs; ++c) M(a * bs + i, b * bs + c) = v[i * bs + c];
            }
        // j leads the canonical order, so the identity rows sit in block row 0.
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(size_t(ni) * bs, bs);
        for (int i = 0; i < bs; ++i) E(i, i) = 1.0;

        const detail::SaiCached* hit = nullptr;
        detail::SaiKey key;
        if (cache) {
            key.ni = ni;
            key.nj = nj;
            key.bs = bs;
            std::tie(key.h1, key.h2) = detail::content_hash(M);
            auto it = cache->map_.find(key);
            if (it != cache->map_.end()) {
                hit = &it->second;
                ++st.cache_hits;
            }
        }
        detail::SaiCached fresh;
        if (!hit) {
            const LstsqResult ls = dense_lstsq(M, E);
            fresh.X = ls.X;
            fresh.rank_deficient = ls.rank_deficient;
            if (cache) {
                ++st.cache_misses;
                const std::size_t bytes = size_t(fresh.X.size()) * sizeof(double);
                if (cache->bytes_ + bytes <= kCacheBudget) {
                    cache->bytes_ += bytes;
                    hit = &cache->map_.emplace(key, std::move(fresh)).first->second;
                }
            }
            if (!hit) hit = &fresh;
        }
        if (hit->rank_deficient) ++st.rank_deficient_columns;

        for (int b = 0; b < nj; ++b) {
            const int k = B.find(Jcan[b], j);
            double* v = B.block(k);
            for (int i = 0; i < bs; ++i)
                for (int c = 0; c < bs; ++c)
                    v[i * bs + c] = alpha[size_t(Jcan[b]) * bs + i] * hit->X(b * bs + i, c) *
                                    alpha[size_t(j) * bs + c];
        }
    }
    return B;
}

/// One-sweep block relaxation bound to an assembled system.  Element updates
/// share a single arithmetic path (ascending CSR walk, eigen-solve of the
/// diagonal block, damped blend), so variants that read the same sources
/// produce bitwise identical iterates.
class Smoother {
  public:
    /// `shared` optionally supplies a cross-build SAI solution cache; when
    /// absent, an SAI smoother with caching enabled uses a private one.
    Smoother(const System& S, const SmootherConfig& cfg, SaiCache* shared = nullptr)
        : S_(&S), cfg_(cfg) {
        const int N = S.n_elements();
        if (cfg_.kind == SmootherKind::ColouredGS) cfg_.omega = 1.0;
        switch (cfg_.kind) {
            case SmootherKind::ProcBlockGS:
                ranges_ = partition_ranges(N, cfg_.partitions);
                part_of_.resize(N);
                for (int p = 0; p < (int)ranges_.size(); ++p)
                    for (int e = ranges_[p].first; e < ranges_[p].second; ++e) part_of_[e] = p;
                break;
            case SmootherKind::ColouredGS: {
                colour_ = colour_mesh(S.A);
                const int nc = 1 + *std::max_element(colour_.begin(), colour_.end());
                colour_lists_.resize(nc);
                for (int e = 0; e < N; ++e) colour_lists_[colour_[e]].push_back(e);
                break;
            }
            case SmootherKind::Sai: {
                SaiCache* c = cfg_.cache ? (shared ? shared : &own_cache_) : nullptr;
                B_ = build_sai(S, cfg_.level, cfg_.zeta, c, &stats_);
                break;
            }
            case SmootherKind::Jacobi:
                break;
        }
        if (cfg_.kind != SmootherKind::Sai) factor_diagonal();
    }

    void apply(const BlockVec& b, BlockVec& x, Sweep sweep) const {
        const int N = S_->n_elements(), bs = S_->block_size();
        if (b.nblocks != N || b.bs != bs || x.nblocks != N || x.bs != bs)
            throw std::invalid_argument("Smoother::apply: shape mismatch");
        switch (cfg_.kind) {
            case SmootherKind::Jacobi: {
                const BlockVec snap = x;
                for (int e = 0; e < N; ++e)
                    relax(e, b, x, [&](int j) { return snap.block(j); });
                break;
            }
            case SmootherKind::ColouredGS: {
                const int nc = (int)colour_lists_.size();
                for (int ci = 0; ci < nc; ++ci) {
                    const int c = sweep == Sweep::Forward ? ci : nc - 1 - ci;
                    for (int e : colour_lists_[c])
                        relax(e, b, x, [&](int j) { return x.block(j); });
                }
                break;
            }
            case SmootherKind::ProcBlockGS: {
                const BlockVec snap = x;
                for (const auto& [s0, s1] : ranges_)
                    for (int i = s0; i < s1; ++i) {
                        const int e = sweep == Sweep::Forward ? i : s1 - 1 - (i - s0);
                        relax(e, b, x, [&](int j) {
                            return part_of_[j] == part_of_[e] ? x.block(j) : snap.block(j);
                        });
                    }
                break;
            }
            case SmootherKind::Sai: {
                BlockVec r;
                spmv(S_->A, x, r);
                for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = b.data[i] - r.data[i];
                BlockVec dx;
                if (sweep == Sweep::Forward)
                    spmv(B_, r, dx);
                else
                    spmv_transpose(B_, r, dx);
                axpy(1.0, dx, x);
                break;
            }
        }
    }

    SmootherKind kind() const { return cfg_.kind; }
    double omega() const { return cfg_.omega; }
    const std::vector<int>& colours() const { return colour_; }
    int n_colours() const { return (int)colour_lists_.size(); }
    const std::vector<std::pair<int, int>>& ranges() const { return ranges_; }
    const BlockCsr& sai_matrix() const {
        if (cfg_.kind != SmootherKind::Sai) throw std::logic_error("not an SAI smoother");
        return B_;
    }
    const SaiStats& sai_stats() const { return stats_; }

  private:
    void factor_diagonal() {
        const int N = S_->n_elements(), bs = S_->block_size();
        diag_.reserve(N);
        scale_.reserve(N);
        Eigen::MatrixXd D(bs, bs);
        for (int e = 0; e < N; ++e) {
            const int k = S_->A.find(e, e);
            if (k < 0) throw std::runtime_error("Smoother: missing diagonal block");
            const double* v = S_->A.block(k);
            for (int i = 0; i < bs; ++i)
                for (int j = 0; j < bs; ++j) D(i, j) = v[i * bs + j];
            // Saddle blocks of high-contrast problems mix entries of size mu
            // and 1/mu, so a raw eigensolve loses the small end of the
            // spectrum to round-off.  Equilibrate each dof by a power of two
            // (exact in floating point) near |D_ii|^{-1/2} first; the scaled
            // solve is still an exact solve of the original block.
            Eigen::VectorXd s(bs);
            for (int i = 0; i < bs; ++i) {
                const double d = std::abs(D(i, i));
                if (d > 0.0) {
                    int ex = 0;
                    std::frexp(d, &ex);
                    s[i] = std::ldexp(1.0, -(ex / 2));
                } else {
                    s[i] = 1.0;
                }
            }
            diag_.push_back(sym_eig(s.asDiagonal() * D * s.asDiagonal()));
            scale_.push_back(std::move(s));
        }
    }

    template <class SrcFn>
    void relax(int e, const BlockVec& b, BlockVec& x, SrcFn&& src_of) const {
        const BlockCsr& A = S_->A;
        const int bs = A.row_bs;
        Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(b.block(e), bs);
        for (int k = A.ptr[e]; k < A.ptr[e + 1]; ++k) {
            const int j = A.col[k];
            if (j == e) continue;
            const double* a = A.block(k);
            const double* s = src_of(j);
            for (int i = 0; i < bs; ++i) {
                double acc = 0.0;
                for (int c = 0; c < bs; ++c) acc += a[i * bs + c] * s[c];
                r[i] -= acc;
            }
        }
        const Eigen::VectorXd& s = scale_[e];
        const Eigen::VectorXd y =
            s.cwiseProduct(pinv_apply(diag_[e], s.cwiseProduct(r), diag_tol_));
        const double w = cfg_.omega;
        double* xe = x.block(e);
        for (int i = 0; i < bs; ++i) xe[i] = (1.0 - w) * xe[i] + w * y[i];
    }

    const System* S_;
    SmootherConfig cfg_;
    std::vector<SymEig> diag_;
    std::vector<Eigen::VectorXd> scale_;
    // Relative cutoff for treating equilibrated eigenvalues as kernel; a
    // genuinely singular block (e.g. pressure stabilization disabled) then
    // relaxes only the solvable directions instead of amplifying noise.
    double diag_tol_ = 1e-12;
    std::vector<int> colour_, part_of_;
    std::vector<std::vector<int>> colour_lists_;
    std::vector<std::pair<int, int>> ranges_;
    SaiCache own_cache_;
    BlockCsr B_;
    SaiStats stats_;
};

}  // namespace ldgmg

#endif
