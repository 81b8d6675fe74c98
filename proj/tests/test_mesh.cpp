#include <catch2/catch_amalgamated.hpp>

#include <ldgmg/mesh.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <vector>

using namespace ldgmg;

namespace {

std::array<BoundaryKind, 6> all_sides(BoundaryKind k) { return {k, k, k, k, k, k}; }

bool same_elements(const Mesh& a, const Mesh& b) {
    if (a.elements.size() != b.elements.size()) return false;
    for (size_t i = 0; i < a.elements.size(); ++i) {
        const auto& x = a.elements[i];
        const auto& y = b.elements[i];
        if (x.level != y.level || x.idx != y.idx || x.phase != y.phase) return false;
    }
    return true;
}

bool same_faces(const Mesh& a, const Mesh& b) {
    if (a.faces.size() != b.faces.size()) return false;
    for (size_t i = 0; i < a.faces.size(); ++i) {
        const auto& x = a.faces[i];
        const auto& y = b.faces[i];
        if (x.left != y.left || x.right != y.right || x.axis != y.axis || x.kind != y.kind ||
            x.side != y.side || x.lo != y.lo || x.size != y.size)
            return false;
    }
    return true;
}

// Independent quadtree builder: recursive refinement with the same circle
// predicate, then brute-force pairwise 2:1 balancing using exact integer box
// geometry.  The balanced fixpoint of a refinement is unique, so this must
// reproduce the library mesh leaf-for-leaf.
struct QtOracle {
    int root_level, max_level;
    bool per_x, per_y;
    std::array<double, 2> center;
    double radius;
    std::set<std::array<int, 3>> leaves;  // (level, ix, iy)

    bool crosses(int level, int ix, int iy) const {
        const double h = std::ldexp(1.0, -level);
        const double lo[2] = {ix * h - center[0], iy * h - center[1]};
        const double hi[2] = {(ix + 1) * h - center[0], (iy + 1) * h - center[1]};
        double dmin = 0, dmax = 0;
        for (int a = 0; a < 2; ++a) {
            dmax += std::max(lo[a] * lo[a], hi[a] * hi[a]);
            if (lo[a] > 0 || hi[a] < 0) dmin += std::min(lo[a] * lo[a], hi[a] * hi[a]);
        }
        return dmin <= radius * radius && radius * radius <= dmax;
    }

    void refine(int level, int ix, int iy) {
        if (level < max_level && crosses(level, ix, iy)) {
            refine(level + 1, 2 * ix, 2 * iy);
            refine(level + 1, 2 * ix + 1, 2 * iy);
            refine(level + 1, 2 * ix, 2 * iy + 1);
            refine(level + 1, 2 * ix + 1, 2 * iy + 1);
        } else {
            leaves.insert({level, ix, iy});
        }
    }

    // True if the two cells share a face of positive measure (integer boxes
    // at the common finest scale, with optional periodic wrap).
    bool share_face(const std::array<int, 3>& A, const std::array<int, 3>& B) const {
        const int S = max_level;
        const long total = 1L << S;
        long alo[2], ahi[2], blo[2], bhi[2];
        for (int a = 0; a < 2; ++a) {
            const long as = 1L << (S - A[0]), bs = 1L << (S - B[0]);
            alo[a] = A[1 + a] * as;
            ahi[a] = alo[a] + as;
            blo[a] = B[1 + a] * bs;
            bhi[a] = blo[a] + bs;
        }
        for (int axis = 0; axis < 2; ++axis) {
            const int t = 1 - axis;
            const bool per = axis == 0 ? per_x : per_y;
            bool touch = ahi[axis] == blo[axis] || bhi[axis] == alo[axis];
            if (per && ((ahi[axis] == total && blo[axis] == 0) ||
                        (bhi[axis] == total && alo[axis] == 0)))
                touch = true;
            if (!touch) continue;
            if (std::max(alo[t], blo[t]) < std::min(ahi[t], bhi[t])) return true;
        }
        return false;
    }

    void balance() {
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<std::array<int, 3>> cur(leaves.begin(), leaves.end());
            for (const auto& L : cur) {
                if (!leaves.count(L)) continue;
                for (const auto& M : cur) {
                    if (!leaves.count(L)) break;
                    if (!leaves.count(M) || M == L) continue;
                    if (M[0] < L[0] + 2) continue;  // only L coarser by >= 2 matters
                    if (!share_face(L, M)) continue;
                    leaves.erase(L);
                    for (int c = 0; c < 4; ++c)
                        leaves.insert({L[0] + 1, 2 * L[1] + (c & 1), 2 * L[2] + ((c >> 1) & 1)});
                    changed = true;
                }
            }
        }
    }

    std::set<std::array<int, 3>> build(int n0, int levels) {
        root_level = 0;
        while ((1 << root_level) < n0) ++root_level;
        max_level = root_level + levels;
        for (int iy = 0; iy < n0; ++iy)
            for (int ix = 0; ix < n0; ++ix) refine(root_level, ix, iy);
        balance();
        return leaves;
    }
};

std::set<std::array<int, 3>> leaf_set(const Mesh& m) {
    std::set<std::array<int, 3>> s;
    for (const auto& e : m.elements) s.insert({e.level, e.idx[0], e.idx[1]});
    return s;
}

}  // namespace

TEST_CASE("uniform meshes enumerate elements in Morton order, reproducibly") {
    const Mesh m = build_uniform(2, 2, BoundaryKind::Periodic);
    REQUIRE(m.elements.size() == 4);
    REQUIRE(m.faces.size() == 8);
    const std::array<std::array<int, 2>, 4> want = {{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};
    for (int i = 0; i < 4; ++i) {
        CHECK(m.elements[i].level == 1);
        CHECK(m.elements[i].idx[0] == want[i][0]);
        CHECK(m.elements[i].idx[1] == want[i][1]);
        CHECK(m.elements[i].size() == 0.5);
    }

    const Mesh m4 = build_uniform(4, 2, BoundaryKind::Dirichlet);
    REQUIRE(m4.elements.size() == 16);
    CHECK(m4.elements[4].idx == std::array<int, 3>{2, 0, 0});  // second Z-block
    CHECK(m4.elements[15].idx == std::array<int, 3>{3, 3, 0});

    const Mesh again = build_uniform(4, 2, BoundaryKind::Dirichlet);
    CHECK(same_elements(m4, again));
    CHECK(same_faces(m4, again));

    const Mesh m3 = build_uniform(2, 3, BoundaryKind::Periodic);
    REQUIRE(m3.elements.size() == 8);
    CHECK(m3.elements[1].idx == std::array<int, 3>{1, 0, 0});
    CHECK(m3.elements[2].idx == std::array<int, 3>{0, 1, 0});
    CHECK(m3.elements[4].idx == std::array<int, 3>{0, 0, 1});
}

TEST_CASE("face counts match the closed-form enumeration") {
    struct Case {
        int n, dim;
        BoundaryKind bc;
    };
    for (const Case c : {Case{2, 2, BoundaryKind::Periodic}, Case{4, 2, BoundaryKind::Dirichlet},
                         Case{8, 2, BoundaryKind::Neumann}, Case{4, 3, BoundaryKind::Dirichlet},
                         Case{2, 3, BoundaryKind::Periodic}}) {
        const Mesh m = build_uniform(c.n, c.dim, c.bc);
        const long slab = c.dim == 2 ? c.n : long(c.n) * c.n;  // faces per plane
        long interior = 0, boundary = 0;
        for (int a = 0; a < c.dim; ++a) {
            interior += slab * (c.bc == BoundaryKind::Periodic ? c.n : c.n - 1);
            boundary += c.bc == BoundaryKind::Periodic ? 0 : 2 * slab;
        }
        long got_int = 0, got_bnd = 0;
        for (const auto& f : m.faces) (f.kind == FaceKind::Interior ? got_int : got_bnd)++;
        CAPTURE(c.n, c.dim);
        CHECK(got_int == interior);
        CHECK(got_bnd == boundary);
        CHECK((long)m.faces.size() == interior + boundary);
    }
    CHECK(build_uniform(4, 2, BoundaryKind::Dirichlet).faces.size() == 40);
    CHECK(build_uniform(4, 3, BoundaryKind::Dirichlet).faces.size() == 240);
}

TEST_CASE("faces are geometrically consistent and tile every element side") {
    auto verify = [](const Mesh& m) {
        const int d = m.dim;
        // (element, axis, side) -> accumulated transverse measure
        std::map<std::array<int, 3>, double> cover;
        for (const auto& f : m.faces) {
            const double meas = std::pow(f.size, d - 1);
            const Element& L = m.elements[f.left];
            if (f.kind != FaceKind::Interior) {
                REQUIRE(f.right == -1);
                REQUIRE((f.side == 1 || f.side == -1));
                const double plane = f.side > 0 ? L.hi(f.axis) : L.lo(f.axis);
                CHECK(f.lo[f.axis] == plane);
                cover[{f.left, f.axis, f.side}] += meas;
                continue;
            }
            const Element& R = m.elements[f.right];
            CHECK(f.size == std::min(L.size(), R.size()));
            CHECK(std::abs(L.level - R.level) <= 1);
            // Plane sits on L's upper side; R's lower side coincides or wraps.
            CHECK(f.lo[f.axis] == L.hi(f.axis));
            const bool wrap = m.periodic(f.axis) && R.lo(f.axis) == 0.0 && L.hi(f.axis) == 1.0;
            if (!wrap) CHECK(R.lo(f.axis) == f.lo[f.axis]);
            for (int a = 0; a < d; ++a) {
                if (a == f.axis) continue;
                CHECK(f.lo[a] >= std::max(L.lo(a), R.lo(a)) - 1e-15);
                CHECK(f.lo[a] + f.size <= std::min(L.hi(a), R.hi(a)) + 1e-15);
            }
            cover[{f.left, f.axis, +1}] += meas;
            cover[{f.right, f.axis, -1}] += meas;
        }
        for (int e = 0; e < (int)m.elements.size(); ++e) {
            const double want = std::pow(m.elements[e].size(), d - 1);
            for (int a = 0; a < d; ++a)
                for (int s : {-1, +1}) {
                    CAPTURE(e, a, s);
                    auto it = cover.find({e, a, s});
                    REQUIRE(it != cover.end());
                    CHECK(it->second == Catch::Approx(want).epsilon(1e-12));
                }
        }
    };
    verify(build_uniform(4, 2, BoundaryKind::Periodic));
    verify(build_uniform(4, 2, BoundaryKind::Dirichlet));
    verify(build_uniform(2, 3, BoundaryKind::Neumann));
    verify(build_uniform(4, 3, BoundaryKind::Periodic));
    std::array<BoundaryKind, 6> mixed = {BoundaryKind::Dirichlet, BoundaryKind::Neumann,
                                         BoundaryKind::Periodic,  BoundaryKind::Periodic,
                                         BoundaryKind::Periodic,  BoundaryKind::Periodic};
    verify(build_uniform(4, 2, mixed));
    verify(build_quadtree(4, 2, {0.0, 0.0}, 0.75, all_sides(BoundaryKind::Neumann)));
    verify(build_quadtree(4, 2, {0.5, 0.5}, 0.3, all_sides(BoundaryKind::Periodic)));
}

TEST_CASE("invalid mesh parameters are rejected") {
    CHECK_THROWS(build_uniform(3, 2, BoundaryKind::Periodic));
    CHECK_THROWS(build_uniform(1, 2, BoundaryKind::Periodic));
    CHECK_THROWS(build_uniform(4, 4, BoundaryKind::Periodic));
    std::array<BoundaryKind, 6> bad = all_sides(BoundaryKind::Dirichlet);
    bad[0] = BoundaryKind::Periodic;  // periodic lower x, dirichlet upper x
    CHECK_THROWS(build_uniform(4, 2, bad));
    CHECK_THROWS(build_quadtree(4, -1, {0, 0}, 0.5, all_sides(BoundaryKind::Neumann)));
}

TEST_CASE("quadtree refinement matches an independent recursive oracle") {
    struct Case {
        int n0, levels;
        std::array<double, 2> center;
        double radius;
        BoundaryKind bc;
    };
    for (const Case c : {Case{4, 2, {0.0, 0.0}, 0.75, BoundaryKind::Neumann},
                         Case{4, 3, {0.0, 0.0}, 0.75, BoundaryKind::Neumann},
                         Case{2, 3, {0.5, 0.5}, 0.3, BoundaryKind::Dirichlet},
                         Case{4, 2, {0.0, 0.0}, 0.3, BoundaryKind::Periodic},
                         Case{8, 2, {0.3, 0.7}, 0.25, BoundaryKind::Neumann}}) {
        CAPTURE(c.n0, c.levels, c.radius, c.bc);
        const Mesh m = build_quadtree(c.n0, c.levels, c.center, c.radius, all_sides(c.bc));
        QtOracle oracle;
        oracle.per_x = oracle.per_y = c.bc == BoundaryKind::Periodic;
        oracle.center = c.center;
        oracle.radius = c.radius;
        const auto want = oracle.build(c.n0, c.levels);
        CHECK(leaf_set(m) == want);
        CHECK(m.elements.size() == want.size());
        // 2:1 across faces, per the face list.
        for (const auto& f : m.faces)
            if (f.kind == FaceKind::Interior)
                CHECK(std::abs(m.elements[f.left].level - m.elements[f.right].level) <= 1);
    }
}

TEST_CASE("quadtree degenerate inputs give the uniform root grid") {
    const Mesh flat = build_quadtree(4, 0, {0, 0}, 0.75, all_sides(BoundaryKind::Neumann));
    const Mesh uni = build_uniform(4, 2, BoundaryKind::Neumann);
    CHECK(same_elements(flat, uni));
    CHECK(same_faces(flat, uni));

    // Circle entirely outside the domain: no cell crosses it.
    const Mesh off = build_quadtree(4, 3, {10, 10}, 0.5, all_sides(BoundaryKind::Neumann));
    CHECK(same_elements(off, uni));
}

TEST_CASE("quadtree meshes rebuild bit-identically") {
    const Mesh a = build_quadtree(4, 3, {0, 0}, 0.75, all_sides(BoundaryKind::Neumann));
    const Mesh b = build_quadtree(4, 3, {0, 0}, 0.75, all_sides(BoundaryKind::Neumann));
    CHECK(same_elements(a, b));
    CHECK(same_faces(a, b));
}

TEST_CASE("coarsening a uniform mesh halves the grid") {
    for (int dim : {2, 3}) {
        const Mesh fine = build_uniform(8, dim, BoundaryKind::Periodic);
        const Coarsening c = coarsen(fine);
        const Mesh ref = build_uniform(4, dim, BoundaryKind::Periodic);
        CHECK(same_elements(c.mesh, ref));
        CHECK(same_faces(c.mesh, ref));
        REQUIRE(c.parent_of.size() == fine.elements.size());
        std::map<int, int> children;
        for (size_t i = 0; i < fine.elements.size(); ++i) {
            const int p = c.parent_of[i];
            const int orth = c.orthant_of[i];
            REQUIRE(p >= 0);
            REQUIRE(orth >= 0);
            ++children[p];
            for (int a = 0; a < dim; ++a)
                CHECK(fine.elements[i].idx[a] ==
                      2 * c.mesh.elements[p].idx[a] + ((orth >> a) & 1));
        }
        for (const auto& kv : children) CHECK(kv.second == (1 << dim));
    }
    CHECK_THROWS(coarsen(build_uniform(2, 2, BoundaryKind::Periodic)));
}

TEST_CASE("coarsening a quadtree strips the deepest level") {
    const Mesh fine = build_quadtree(4, 3, {0, 0}, 0.75, all_sides(BoundaryKind::Neumann));
    const int deepest = fine.max_level();
    const Coarsening c = coarsen(fine);
    CHECK(c.mesh.max_level() == deepest - 1);

    // Oracle: replace every deepest-level leaf by its parent, dedupe.
    std::set<std::array<int, 3>> want;
    for (const auto& e : fine.elements) {
        if (e.level == deepest)
            want.insert({e.level - 1, e.idx[0] >> 1, e.idx[1] >> 1});
        else
            want.insert({e.level, e.idx[0], e.idx[1]});
    }
    CHECK(leaf_set(c.mesh) == want);
    // Merging the deepest level of a graded mesh cannot break the grading.
    for (const auto& f : c.mesh.faces)
        if (f.kind == FaceKind::Interior)
            CHECK(std::abs(c.mesh.elements[f.left].level - c.mesh.elements[f.right].level) <= 1);

    // Bottoms out at the root grid.
    Mesh cur = fine;
    for (int l = deepest; l > 2; --l) cur = coarsen(cur).mesh;
    CHECK(cur.max_level() == 2);
    CHECK(cur.elements.size() == 16);
    CHECK_THROWS(coarsen(cur));
}

TEST_CASE("phase assignment classifies centroids with first-match regions") {
    Mesh m = build_uniform(8, 2, BoundaryKind::Periodic);
    PhaseGeometry g;
    g.regions.push_back({{0.25, 0.25, 0}, {0.75, 0.75, 1}, 10.0, 2.0});
    g.regions.push_back({{0, 0, 0}, {1, 1, 1}, 1.0, 1.0});
    assign_phases(m, g);
    CHECK(m.n_phases == 2);

    int inner = 0;
    for (const auto& e : m.elements) {
        // Independent centroid classification.
        const double cx = 0.5 * (e.lo(0) + e.hi(0)), cy = 0.5 * (e.lo(1) + e.hi(1));
        const int want = (cx > 0.25 && cx < 0.75 && cy > 0.25 && cy < 0.75) ? 0 : 1;
        CHECK(e.phase == want);
        inner += e.phase == 0;
    }
    CHECK(inner == 16);

    int iface = 0;
    for (const auto& f : m.faces) iface += interface_face(m, f);
    CHECK(iface == 16);  // 4 faces on each side of the inner square

    // An element straddling the region boundary is rejected.
    Mesh tiny = build_uniform(2, 2, BoundaryKind::Periodic);
    CHECK_THROWS(assign_phases(tiny, g));

    // Regions that do not cover the domain are rejected.
    PhaseGeometry gap;
    gap.regions.push_back({{0.25, 0.25, 0}, {0.75, 0.75, 1}, 10.0, 2.0});
    CHECK_THROWS(assign_phases(m, gap));
}

TEST_CASE("mesh summary reports level tallies") {
    Mesh m = build_quadtree(4, 2, {0, 0}, 0.75, all_sides(BoundaryKind::Neumann));
    const std::string s = mesh_summary(m);
    CHECK(s.find("quadtree") != std::string::npos);
    CHECK(s.find("level 2") != std::string::npos);
    CHECK(s.find("level 4") != std::string::npos);
    CHECK(s.find("interface 0") != std::string::npos);
}
