#ifndef LDGMG_MULTIGRID_HPP
#define LDGMG_MULTIGRID_HPP

/** \file multigrid.hpp
 *  \brief Geometric V-cycle over a nested mesh hierarchy: per-level
 *         re-discretized operators, polynomial-injection transfers, smoother
 *         plans with configurable sweep directions, and a dense
 *         eigendecomposition bottom solver with pseudoinverse kernel handling.
 */

#include <ldgmg/smoothers.hpp>

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace ldgmg {

/// Assembles the discrete system on one mesh of the hierarchy.  Called once
/// per level with a mesh whose elements already carry their phase indices;
/// the implementation must apply the same fluxes, upwinding rule and penalty
/// laws on every level (penalties pick up the level's h through the mesh).
using LevelAssembler = std::function<System(const Mesh&)>;

struct MultigridConfig {
    SmootherConfig smoother = SmootherConfig::jacobi();
    Sweep pre = Sweep::Forward;
    Sweep post = Sweep::Reverse;
    int nu1 = 3;  ///< pre-smoothing applications per level
    int nu2 = 3;  ///< post-smoothing applications per level
    int bottom_max_elements = 64;
    double bottom_tol = 1e-10;  ///< relative eigenvalue cutoff of the bottom pseudoinverse
    int min_depth = 2;
    SaiCache* cache = nullptr;  ///< optional least-squares cache shared across hierarchies
};

/// True when the configured plan yields a self-adjoint V-cycle: Jacobi is
/// direction-free, every other smoother needs the post sweep to reverse the
/// pre sweep (reversal is the exact adjoint of the forward application).
inline bool symmetric_plan(const SmootherConfig& s, Sweep pre, Sweep post) {
    return s.kind == SmootherKind::Jacobi || pre != post;
}

class Multigrid {
  public:
    /// Coarsens `fine` as far as the mesh and the phase layout allow, stopping
    /// before any merge would mix phases, and assembles every level.
    Multigrid(Mesh fine, const LevelAssembler& assemble, MultigridConfig cfg)
        : cfg_(std::move(cfg)) {
        if (cfg_.nu1 < 0 || cfg_.nu2 < 0)
            throw std::invalid_argument("multigrid: smoothing counts must be nonnegative");
        build_mesh_chain(std::move(fine));
        for (auto& L : levels_) {
            L.S = assemble(L.mesh);
            check_level(L.S);
        }
        basis_ = ElementBasis(levels_[0].S.degree, levels_[0].S.dim);
        build_injection();
        SaiCache* shared = cfg_.cache ? cfg_.cache : &own_cache_;
        for (int l = 0; l + 1 < depth(); ++l)
            levels_[l].smoother.emplace(levels_[l].S, cfg_.smoother, shared);
        bottom_ = sym_eig(to_dense(levels_.back().S.A));
        kernel_ = kernel_basis(levels_[0].S);
    }

    // Smoothers hold pointers into the level systems, so the hierarchy is
    // address-pinned after construction.
    Multigrid(const Multigrid&) = delete;
    Multigrid& operator=(const Multigrid&) = delete;

    int depth() const { return (int)levels_.size(); }
    const Mesh& mesh(int level = 0) const { return levels_.at(level).mesh; }
    const System& system(int level = 0) const { return levels_.at(level).S; }
    const MultigridConfig& config() const { return cfg_; }
    bool symmetric() const { return symmetric_plan(cfg_.smoother, cfg_.pre, cfg_.post); }

    /// One V-cycle improving x in place.  On singular systems the updated
    /// iterate is re-projected against the known kernel: the sweeps do not
    /// preserve orthogonality to it and the component is unobservable in Ax,
    /// so it would otherwise drift freely.
    void cycle(BlockVec& x, const BlockVec& b) const {
        v_cycle(0, x, b);
        project_kernel(x);
    }

    /// The preconditioner V: a zero-initial-guess V-cycle, linear in b.
    /// Projecting both sides keeps V self-adjoint for symmetric plans even
    /// when probed with vectors that carry kernel content.
    BlockVec apply(const BlockVec& b) const {
        BlockVec x(levels_[0].S.n_elements(), levels_[0].S.block_size());
        if (kernel_.empty()) {
            v_cycle(0, x, b);
        } else {
            BlockVec bp = b;
            project_kernel(bp);
            v_cycle(0, x, bp);
            project_kernel(x);
        }
        return x;
    }

    /// xf += I xc: re-expands each coarse polynomial on its child elements.
    void interpolate_add(int fine_level, const BlockVec& xc, BlockVec& xf) const {
        const Level& L = levels_.at(fine_level);
        const int bs = bs_scalar_, BS = L.S.block_size();
        for (int f = 0; f < (int)L.parent_of.size(); ++f) {
            const int p = L.parent_of[f], o = L.orthant_of[f];
            const double* src = xc.block(p);
            double* dst = xf.block(f);
            if (o < 0) {
                for (int i = 0; i < BS; ++i) dst[i] += src[i];
                continue;
            }
            const double* K = inject_[o].data();
            for (int c = 0; c < n_comp_; ++c)
                for (int i = 0; i < bs; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < bs; ++j) s += K[i * bs + j] * src[c * bs + j];
                    dst[c * bs + i] += s;
                }
        }
    }

    /// rc = I^T rf: the transpose of interpolation, per the Galerkin rule
    /// (the coarse right-hand side lives in the mass basis, no projection).
    BlockVec restrict_residual(int fine_level, const BlockVec& rf) const {
        const Level& L = levels_.at(fine_level);
        const System& Sc = levels_.at(fine_level + 1).S;
        BlockVec rc(Sc.n_elements(), Sc.block_size());
        const int bs = bs_scalar_, BS = L.S.block_size();
        for (int f = 0; f < (int)L.parent_of.size(); ++f) {
            const int p = L.parent_of[f], o = L.orthant_of[f];
            const double* src = rf.block(f);
            double* dst = rc.block(p);
            if (o < 0) {
                for (int i = 0; i < BS; ++i) dst[i] += src[i];
                continue;
            }
            const double* K = inject_[o].data();
            for (int c = 0; c < n_comp_; ++c)
                for (int j = 0; j < bs; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < bs; ++i) s += K[i * bs + j] * src[c * bs + i];
                    dst[c * bs + j] += s;
                }
        }
        return rc;
    }

    /// The smoother on a non-bottom level (the bottom is solved directly).
    const Smoother& smoother(int level) const {
        const auto& s = levels_.at(level).smoother;
        if (!s) throw std::logic_error("multigrid: the bottom level has no smoother");
        return *s;
    }

    const SymEig& bottom_eig() const { return bottom_; }

  private:
    struct Level {
        Mesh mesh;
        System S;
        std::vector<int> parent_of, orthant_of;  ///< to the next coarser level
        std::optional<Smoother> smoother;        ///< absent on the bottom level
    };

    void build_mesh_chain(Mesh fine) {
        levels_.emplace_back();
        levels_.back().mesh = std::move(fine);
        for (;;) {
            const Mesh& m = levels_.back().mesh;
            Coarsening c;
            try {
                c = coarsen(m);
            } catch (const std::invalid_argument&) {
                break;  // root grid reached
            }
            // A merge that mixes phases would put the coarse element in two
            // regions at once; the hierarchy bottoms out just above it.
            bool phase_ok = true;
            for (int f = 0; f < (int)m.elements.size() && phase_ok; ++f)
                phase_ok = m.elements[f].phase == c.mesh.elements[c.parent_of[f]].phase;
            if (!phase_ok) break;
            levels_.back().parent_of = std::move(c.parent_of);
            levels_.back().orthant_of = std::move(c.orthant_of);
            levels_.emplace_back();
            levels_.back().mesh = std::move(c.mesh);
        }
        if (depth() < cfg_.min_depth)
            throw std::invalid_argument("multigrid: hierarchy depth below the configured minimum");
        if ((int)levels_.back().mesh.elements.size() > cfg_.bottom_max_elements)
            throw std::invalid_argument("multigrid: bottom level exceeds the element budget");
    }

    void check_level(const System& S) {
        const System& S0 = levels_[0].S;
        if (S.dim != S0.dim || S.degree != S0.degree || S.n_comp != S0.n_comp ||
            S.bs_scalar != S0.bs_scalar || S.kind != S0.kind)
            throw std::invalid_argument("multigrid: level assembler changed the discretization");
        for (int i = 0; i < S.A.brows; ++i)
            for (int k = S.A.ptr[i]; k < S.A.ptr[i + 1]; ++k)
                if (S.A.find(S.A.col[k], i) < 0)
                    throw std::invalid_argument("multigrid: level operator pattern not symmetric");
        bs_scalar_ = S0.bs_scalar;
        n_comp_ = S0.n_comp;
    }

    /// 1D injection T[s]_{ij} = int P_i(xi) P_j((xi + 2s - 1)/2) dxi maps
    /// parent coefficients to the child on side s; the d-dimensional maps are
    /// its Kronecker products over the child orthants.
    void build_injection() {
        const int p1 = basis_.p1, bs = bs_scalar_, dim = levels_[0].S.dim;
        std::array<std::vector<double>, 2> T;
        for (int s = 0; s < 2; ++s) {
            T[s].assign(size_t(p1) * p1, 0.0);
            for (int i = 0; i < p1; ++i)
                for (int j = 0; j < p1; ++j) {
                    double acc = 0.0;
                    for (int q = 0; q < p1; ++q)
                        acc += basis_.weights[q] * basis_.val[i * p1 + q] *
                               mode_val(j, 0.5 * (basis_.nodes[q] + 2.0 * s - 1.0));
                    T[s][size_t(i) * p1 + j] = acc;
                }
        }
        inject_.resize(size_t(1) << dim);
        for (int o = 0; o < (int)inject_.size(); ++o) {
            auto& K = inject_[o];
            K.assign(size_t(bs) * bs, 0.0);
            for (int i = 0; i < bs; ++i) {
                const auto ix = basis_.decompose(i);
                for (int j = 0; j < bs; ++j) {
                    const auto jx = basis_.decompose(j);
                    double v = 1.0;
                    for (int a = 0; a < dim; ++a)
                        v *= T[(o >> a) & 1][size_t(ix[a]) * p1 + jx[a]];
                    K[size_t(i) * bs + j] = v;
                }
            }
        }
    }

    void project_kernel(BlockVec& v) const {
        for (const BlockVec& k : kernel_) axpy(-dot(v, k), k, v);
    }

    void v_cycle(int lvl, BlockVec& x, const BlockVec& b) const {
        const Level& L = levels_[lvl];
        if (lvl + 1 == depth()) {
            Eigen::Map<const Eigen::VectorXd> bv(b.data.data(), (Eigen::Index)b.size());
            const Eigen::VectorXd y = pinv_apply(bottom_, bv, cfg_.bottom_tol);
            std::copy(y.data(), y.data() + y.size(), x.data.begin());
            return;
        }
        for (int i = 0; i < cfg_.nu1; ++i) L.smoother->apply(b, x, cfg_.pre);
        BlockVec r;
        spmv(L.S.A, x, r);
        for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = b.data[i] - r.data[i];
        const BlockVec rc = restrict_residual(lvl, r);
        BlockVec xc(levels_[lvl + 1].S.n_elements(), levels_[lvl + 1].S.block_size());
        v_cycle(lvl + 1, xc, rc);
        interpolate_add(lvl, xc, x);
        for (int i = 0; i < cfg_.nu2; ++i) L.smoother->apply(b, x, cfg_.post);
    }

    MultigridConfig cfg_;
    std::vector<Level> levels_;
    ElementBasis basis_;
    int bs_scalar_ = 0, n_comp_ = 1;
    std::vector<std::vector<double>> inject_;  ///< [orthant] child-from-parent maps
    std::vector<BlockVec> kernel_;             ///< orthonormal, possibly empty
    SymEig bottom_;
    SaiCache own_cache_;
};

}  // namespace ldgmg

#endif
