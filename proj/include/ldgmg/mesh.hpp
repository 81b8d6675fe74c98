#ifndef LDGMG_MESH_HPP
#define LDGMG_MESH_HPP

/** \file mesh.hpp
 *  \brief Cartesian and quadtree meshes with deterministic Morton ordering.
 *
 *  Meshes live on the unit box (0,1)^d, d = 2 or 3.  Uniform meshes have n
 *  elements per axis with n a power of two; 2D quadtree meshes refine a root
 *  grid towards a circular arc with 2:1 grading across faces.  Element order
 *  is the depth-first tree order, which coincides with Morton (Z-) order of
 *  the finest-resolution indices, so rebuilding a mesh is bit-reproducible.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ldgmg {

enum class BoundaryKind { Periodic, Dirichlet, Neumann };

inline const char* to_string(BoundaryKind k) {
    switch (k) {
        case BoundaryKind::Periodic:  return "periodic";
        case BoundaryKind::Dirichlet: return "dirichlet";
        default:                      return "neumann";
    }
}

/// Element = dyadic cell: per-axis index idx[a] in [0, 2^level) and edge
/// length 2^-level.  Cells are square/cubic; coordinates are binary-exact.
struct Element {
    int level = 0;
    std::array<int, 3> idx{0, 0, 0};
    int phase = 0;

    double size() const { return std::ldexp(1.0, -level); }
    double lo(int axis) const { return idx[axis] * size(); }
    double hi(int axis) const { return (idx[axis] + 1) * size(); }
};

enum class FaceKind { Interior, Dirichlet, Neumann };

/// Face stored at the granularity of the finer adjacent element.  For
/// interior faces `left` is the element on the lower side along `axis` and
/// `right` the upper one; boundary faces have right = -1 and `side` gives the
/// outward direction (+1: face on upper side of `left`).  `lo` holds the
/// plane coordinate in the `axis` slot and the transverse corner elsewhere;
/// `size` is the transverse edge length.
struct Face {
    int left = -1;
    int right = -1;
    int axis = 0;
    FaceKind kind = FaceKind::Interior;
    int side = 0;
    std::array<double, 3> lo{0, 0, 0};
    double size = 0;
};

/// Axis-aligned phase region; regions are matched first-to-last, so a
/// trailing whole-domain region serves as the background phase.
struct PhaseRegion {
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{1, 1, 1};
    double mu = 1.0;
    double rho = 1.0;
};

struct PhaseGeometry {
    std::vector<PhaseRegion> regions;

    static PhaseGeometry single(double mu = 1.0, double rho = 1.0) {
        PhaseGeometry g;
        g.regions.push_back({{0, 0, 0}, {1, 1, 1}, mu, rho});
        return g;
    }
};

struct Mesh {
    int dim = 2;
    int root_n = 0;           ///< elements per axis of the root grid
    bool quadtree = false;    ///< quadtrees bottom out at their root grid
    std::array<BoundaryKind, 6> side_bc{};  ///< 2*axis + (0 lower, 1 upper)
    std::vector<Element> elements;
    std::vector<Face> faces;
    int n_phases = 1;

    int max_level() const {
        int m = 0;
        for (const auto& e : elements) m = std::max(m, e.level);
        return m;
    }
    bool periodic(int axis) const { return side_bc[2 * axis] == BoundaryKind::Periodic; }
};

/// Result of one coarsening step.  parent_of maps fine element -> coarse
/// element; orthant_of is the child position (bit a = axis-a upper half) for
/// merged elements and -1 for elements copied unchanged.
struct Coarsening {
    Mesh mesh;
    std::vector<int> parent_of;
    std::vector<int> orthant_of;
};

namespace detail {

inline std::uint64_t cell_key(int level, const std::array<int, 3>& idx) {
    return (std::uint64_t(level) << 51) | (std::uint64_t(idx[0]) << 34) |
           (std::uint64_t(idx[1]) << 17) | std::uint64_t(idx[2]);
}

struct CellSet {
    std::unordered_set<std::uint64_t> leaves;

    bool contains(int level, const std::array<int, 3>& idx) const {
        return leaves.count(cell_key(level, idx)) != 0;
    }
    /// Returns the level of the leaf at `cell` or at one of its ancestors
    /// down to root_level, or -1 if none exists.
    int leaf_at_or_above(int level, std::array<int, 3> idx, int root_level) const {
        for (int l = level; l >= root_level; --l) {
            if (contains(l, idx)) return l;
            for (int a = 0; a < 3; ++a) idx[a] >>= 1;
        }
        return -1;
    }
};

inline void validate_bc(const std::array<BoundaryKind, 6>& bc, int dim) {
    for (int a = 0; a < dim; ++a)
        if ((bc[2 * a] == BoundaryKind::Periodic) != (bc[2 * a + 1] == BoundaryKind::Periodic))
            throw std::invalid_argument("mesh: periodic boundaries must pair opposite sides");
}

inline int int_log2(int n) {
    if (n < 1 || (n & (n - 1)) != 0)
        throw std::invalid_argument("mesh: element count per axis must be a power of two");
    int l = 0;
    while ((1 << l) < n) ++l;
    return l;
}

/// Depth-first leaf collection; children visited in local Morton order with
/// axis 0 fastest.  This is the canonical element ordering.
inline void collect_leaves(const CellSet& set, int dim, int level, std::array<int, 3> idx,
                           std::vector<Element>& out) {
    if (set.contains(level, idx)) {
        Element e;
        e.level = level;
        e.idx = idx;
        out.push_back(e);
        return;
    }
    const int nch = 1 << dim;
    for (int c = 0; c < nch; ++c) {
        std::array<int, 3> ci{0, 0, 0};
        for (int a = 0; a < dim; ++a) ci[a] = 2 * idx[a] + ((c >> a) & 1);
        collect_leaves(set, dim, level + 1, ci, out);
    }
}

/// Root cells of an n0 x n0 (x n0) grid in Morton order of their indices.
inline std::vector<std::array<int, 3>> morton_roots(int n0, int dim) {
    std::vector<std::array<int, 3>> roots;
    const int total = dim == 2 ? n0 * n0 : n0 * n0 * n0;
    roots.reserve(total);
    const int bits = int_log2(n0);
    for (int code = 0; code < (1 << (bits * dim)); ++code) {
        std::array<int, 3> idx{0, 0, 0};
        for (int b = 0; b < bits; ++b)
            for (int a = 0; a < dim; ++a) idx[a] |= ((code >> (b * dim + a)) & 1) << b;
        roots.push_back(idx);
    }
    return roots;
}

inline void build_faces(Mesh& mesh) {
    std::unordered_map<std::uint64_t, int> lookup;
    lookup.reserve(mesh.elements.size() * 2);
    for (int i = 0; i < (int)mesh.elements.size(); ++i)
        lookup.emplace(cell_key(mesh.elements[i].level, mesh.elements[i].idx), i);

    const int dim = mesh.dim;
    auto find = [&](int level, std::array<int, 3> idx) -> int {
        auto it = lookup.find(cell_key(level, idx));
        return it == lookup.end() ? -1 : it->second;
    };

    auto emit_boundary = [&](int e, int axis, int side, BoundaryKind bc) {
        const Element& el = mesh.elements[e];
        Face f;
        f.left = e;
        f.right = -1;
        f.axis = axis;
        f.kind = bc == BoundaryKind::Dirichlet ? FaceKind::Dirichlet : FaceKind::Neumann;
        f.side = side;
        f.size = el.size();
        for (int a = 0; a < dim; ++a) f.lo[a] = el.lo(a);
        f.lo[axis] = side > 0 ? el.hi(axis) : el.lo(axis);
        mesh.faces.push_back(f);
    };

    auto emit_interior = [&](int lower, int upper, int axis, const Element& fine, double plane) {
        Face f;
        f.left = lower;
        f.right = upper;
        f.axis = axis;
        f.kind = FaceKind::Interior;
        f.size = fine.size();
        for (int a = 0; a < dim; ++a) f.lo[a] = fine.lo(a);
        f.lo[axis] = plane;
        mesh.faces.push_back(f);
    };

    for (int e = 0; e < (int)mesh.elements.size(); ++e) {
        const Element el = mesh.elements[e];
        const int cells = 1 << el.level;  // grid extent at this element's level
        for (int axis = 0; axis < dim; ++axis) {
            // Upper side: interior (or wrapped) faces are emitted by the
            // lower-side element; the face plane stays on this element.
            {
                std::array<int, 3> nb = el.idx;
                nb[axis] += 1;
                bool wrapped = false;
                if (nb[axis] == cells) {
                    if (mesh.periodic(axis)) {
                        nb[axis] = 0;
                        wrapped = true;
                    } else {
                        emit_boundary(e, axis, +1, mesh.side_bc[2 * axis + 1]);
                        goto lower_side;
                    }
                }
                if (int j = find(el.level, nb); j >= 0) {
                    emit_interior(e, j, axis, el, el.hi(axis));
                } else {
                    // Coarser neighbour: this element is the finer side and
                    // owns the subface.  The coarse neighbour cannot also see
                    // it from below, so emit here.
                    std::array<int, 3> cb;
                    for (int a = 0; a < 3; ++a) cb[a] = nb[a] >> 1;
                    if (int j = find(el.level - 1, cb); j >= 0) {
                        emit_interior(e, j, axis, el, el.hi(axis));
                    } else {
                        // Finer neighbours: 2^(d-1) subfaces in transverse
                        // Morton order.
                        bool found = false;
                        const int nsub = 1 << (dim - 1);
                        for (int s = 0; s < nsub; ++s) {
                            std::array<int, 3> fb{0, 0, 0};
                            int bit = 0;
                            for (int a = 0; a < dim; ++a) {
                                if (a == axis) {
                                    fb[a] = 2 * nb[a];
                                } else {
                                    fb[a] = 2 * el.idx[a] + ((s >> bit) & 1);
                                    ++bit;
                                }
                            }
                            int j = find(el.level + 1, fb);
                            if (j < 0) throw std::logic_error("mesh: 2:1 grading violated");
                            const Element& fe = mesh.elements[j];
                            emit_interior(e, j, axis, fe,
                                          wrapped ? el.hi(axis) : fe.lo(axis));
                            found = true;
                        }
                        if (!found) throw std::logic_error("mesh: missing neighbour");
                    }
                }
            }
        lower_side:
            // Lower side: only domain-boundary faces are emitted here; the
            // interior case is covered by the lower neighbour's upper side.
            if (el.idx[axis] == 0 && !mesh.periodic(axis))
                emit_boundary(e, axis, -1, mesh.side_bc[2 * axis]);
        }
    }
}

}  // namespace detail

/// Uniform n x n (x n) mesh, n a power of two (n >= 2), on the unit box.
inline Mesh build_uniform(int n, int dim, std::array<BoundaryKind, 6> bc) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("mesh: dim must be 2 or 3");
    if (n < 2) throw std::invalid_argument("mesh: need at least 2 elements per axis");
    detail::validate_bc(bc, dim);
    const int level = detail::int_log2(n);

    Mesh mesh;
    mesh.dim = dim;
    mesh.root_n = n;
    mesh.quadtree = false;
    mesh.side_bc = bc;
    for (const auto& idx : detail::morton_roots(n, dim)) {
        Element e;
        e.level = level;
        e.idx = idx;
        mesh.elements.push_back(e);
    }
    detail::build_faces(mesh);
    return mesh;
}

inline Mesh build_uniform(int n, int dim, BoundaryKind bc = BoundaryKind::Periodic) {
    return build_uniform(n, dim, {bc, bc, bc, bc, bc, bc});
}

/// 2D quadtree: root grid n0 x n0, then every leaf crossing the circle
/// |x - center| = radius is refined, up to `levels` extra levels, and the
/// result is 2:1 graded across faces.
inline Mesh build_quadtree(int n0, int levels, std::array<double, 2> center, double radius,
                           std::array<BoundaryKind, 6> bc) {
    if (levels < 0 || levels > 12) throw std::invalid_argument("mesh: refinement depth out of range");
    detail::validate_bc(bc, 2);
    const int root_level = detail::int_log2(n0);
    const int max_level = root_level + levels;

    auto crosses_arc = [&](int level, const std::array<int, 3>& idx) {
        const double h = std::ldexp(1.0, -level);
        double dmin = 0, dmax = 0;
        for (int a = 0; a < 2; ++a) {
            const double lo = idx[a] * h - center[a], hi = (idx[a] + 1) * h - center[a];
            const double lo2 = lo * lo, hi2 = hi * hi;
            dmax += std::max(lo2, hi2);
            if (lo > 0 || hi < 0) dmin += std::min(lo2, hi2);
        }
        const double r2 = radius * radius;
        return dmin <= r2 && r2 <= dmax;
    };

    detail::CellSet set;
    std::function<void(int, std::array<int, 3>)> refine = [&](int level, std::array<int, 3> idx) {
        if (level < max_level && crosses_arc(level, idx)) {
            for (int c = 0; c < 4; ++c)
                refine(level + 1, {2 * idx[0] + (c & 1), 2 * idx[1] + ((c >> 1) & 1), 0});
        } else {
            set.leaves.insert(detail::cell_key(level, idx));
        }
    };
    for (const auto& idx : detail::morton_roots(n0, 2)) refine(root_level, idx);

    // 2:1 closure: split any leaf more than one level coarser than a face
    // neighbour.  The balanced fixpoint is unique, so the loop order does not
    // affect the result.
    const bool periodic_x = bc[0] == BoundaryKind::Periodic;
    const bool periodic_y = bc[2] == BoundaryKind::Periodic;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::uint64_t> keys(set.leaves.begin(), set.leaves.end());
        std::sort(keys.begin(), keys.end());
        for (std::uint64_t key : keys) {
            if (!set.leaves.count(key)) continue;
            const int level = int(key >> 51);
            std::array<int, 3> idx{int((key >> 34) & 0x1ffff), int((key >> 17) & 0x1ffff), 0};
            if (level >= max_level - 1) continue;  // cannot be >1 coarser than anything legal
            const int cells = 1 << level;
            bool split = false;
            for (int axis = 0; axis < 2 && !split; ++axis) {
                const bool per = axis == 0 ? periodic_x : periodic_y;
                for (int dir = -1; dir <= 1 && !split; dir += 2) {
                    std::array<int, 3> nb = idx;
                    nb[axis] += dir;
                    if (nb[axis] < 0 || nb[axis] >= cells) {
                        if (!per) continue;
                        nb[axis] = (nb[axis] + cells) % cells;
                    }
                    // If no leaf exists at nb or an ancestor, nb is subdivided;
                    // check whether any child strip along the shared face is
                    // subdivided below level+1.
                    if (set.leaf_at_or_above(level, nb, root_level) >= 0) continue;
                    std::array<int, 3> child{0, 0, 0};
                    child[axis] = dir > 0 ? 2 * nb[axis] : 2 * nb[axis] + 1;
                    for (int t = 0; t < 2 && !split; ++t) {
                        child[1 - axis] = 2 * idx[1 - axis] + t;
                        if (!set.contains(level + 1, child)) split = true;
                    }
                }
            }
            if (split) {
                set.leaves.erase(key);
                for (int c = 0; c < 4; ++c)
                    set.leaves.insert(detail::cell_key(
                        level + 1, {2 * idx[0] + (c & 1), 2 * idx[1] + ((c >> 1) & 1), 0}));
                changed = true;
            }
        }
    }

    Mesh mesh;
    mesh.dim = 2;
    mesh.root_n = n0;
    mesh.quadtree = true;
    mesh.side_bc = bc;
    for (const auto& idx : detail::morton_roots(n0, 2))
        detail::collect_leaves(set, 2, root_level, idx, mesh.elements);
    detail::build_faces(mesh);
    return mesh;
}

/// Merges every sibling group at the current deepest refinement level (for a
/// uniform mesh that is all of them, halving n).  Quadtrees bottom out at
/// their root grid, uniform meshes at n = 2.
inline Coarsening coarsen(const Mesh& fine) {
    const int deepest = fine.max_level();
    const int root_level = detail::int_log2(fine.root_n);
    if (fine.quadtree && deepest == root_level)
        throw std::invalid_argument("coarsen: quadtree already at its root grid");
    if (!fine.quadtree && fine.root_n < 4)
        throw std::invalid_argument("coarsen: uniform mesh already at n=2");

    Coarsening out;
    out.mesh.dim = fine.dim;
    out.mesh.quadtree = fine.quadtree;
    out.mesh.side_bc = fine.side_bc;
    out.mesh.root_n = fine.quadtree ? fine.root_n : fine.root_n / 2;
    out.mesh.n_phases = fine.n_phases;
    out.parent_of.resize(fine.elements.size());
    out.orthant_of.assign(fine.elements.size(), -1);

    const int group = 1 << fine.dim;
    for (int i = 0; i < (int)fine.elements.size();) {
        const Element& e = fine.elements[i];
        if (e.level == deepest) {
            // DFS order keeps the 2^d siblings consecutive, first child first.
            Element parent;
            parent.level = e.level - 1;
            for (int a = 0; a < 3; ++a) parent.idx[a] = e.idx[a] >> 1;
            parent.phase = e.phase;
            const int pid = (int)out.mesh.elements.size();
            for (int c = 0; c < group; ++c) {
                const Element& ch = fine.elements[i + c];
                if (ch.level != deepest) throw std::logic_error("coarsen: broken sibling group");
                int orth = 0;
                for (int a = 0; a < fine.dim; ++a) orth |= (ch.idx[a] & 1) << a;
                out.parent_of[i + c] = pid;
                out.orthant_of[i + c] = orth;
            }
            out.mesh.elements.push_back(parent);
            i += group;
        } else {
            out.parent_of[i] = (int)out.mesh.elements.size();
            out.mesh.elements.push_back(e);
            ++i;
        }
    }
    detail::build_faces(out.mesh);
    return out;
}

/// Assigns each element the first region containing its centroid.  Elements
/// straddling a region boundary make the mesh non-conforming: error.
inline void assign_phases(Mesh& mesh, const PhaseGeometry& geom) {
    if (geom.regions.empty()) throw std::invalid_argument("assign_phases: no regions");
    const double eps = 1e-12;
    for (auto& e : mesh.elements) {
        int match = -1;
        for (int r = 0; r < (int)geom.regions.size() && match < 0; ++r) {
            const auto& reg = geom.regions[r];
            bool inside = true;
            for (int a = 0; a < mesh.dim; ++a) {
                const double c = 0.5 * (e.lo(a) + e.hi(a));
                if (c < reg.lo[a] - eps || c > reg.hi[a] + eps) inside = false;
            }
            if (inside) match = r;
        }
        if (match < 0) throw std::invalid_argument("assign_phases: regions do not cover the domain");
        // Conformity: the element must not partially overlap any region.
        for (const auto& reg : geom.regions) {
            for (int a = 0; a < mesh.dim; ++a) {
                if (e.lo(a) < reg.lo[a] - eps && e.hi(a) > reg.lo[a] + eps)
                    throw std::invalid_argument("assign_phases: element straddles a region boundary");
                if (e.lo(a) < reg.hi[a] - eps && e.hi(a) > reg.hi[a] + eps)
                    throw std::invalid_argument("assign_phases: element straddles a region boundary");
            }
        }
        e.phase = match;
    }
    mesh.n_phases = (int)geom.regions.size();
}

/// True for interior faces whose two sides carry different phases.
inline bool interface_face(const Mesh& mesh, const Face& f) {
    return f.kind == FaceKind::Interior &&
           mesh.elements[f.left].phase != mesh.elements[f.right].phase;
}

/// Line-oriented human-readable summary (element/face tallies per level).
inline std::string mesh_summary(const Mesh& mesh) {
    std::ostringstream os;
    os << "mesh dim=" << mesh.dim << " kind=" << (mesh.quadtree ? "quadtree" : "uniform")
       << " root_n=" << mesh.root_n << "\n";
    os << "bc";
    for (int a = 0; a < mesh.dim; ++a)
        os << " axis" << a << "=[" << to_string(mesh.side_bc[2 * a]) << ","
           << to_string(mesh.side_bc[2 * a + 1]) << "]";
    os << "\n";
    os << "elements " << mesh.elements.size() << "\n";
    std::unordered_map<int, int> per_level;
    for (const auto& e : mesh.elements) ++per_level[e.level];
    std::vector<int> levels;
    for (auto& kv : per_level) levels.push_back(kv.first);
    std::sort(levels.begin(), levels.end());
    for (int l : levels)
        os << "  level " << l << " count " << per_level[l] << " h " << std::ldexp(1.0, -l) << "\n";
    int interior = 0, boundary = 0, iface = 0;
    for (const auto& f : mesh.faces) {
        if (f.kind == FaceKind::Interior) {
            ++interior;
            if (interface_face(mesh, f)) ++iface;
        } else {
            ++boundary;
        }
    }
    os << "faces " << mesh.faces.size() << " interior " << interior << " boundary " << boundary
       << " interface " << iface << "\n";
    return os.str();
}

}  // namespace ldgmg

#endif
