#ifndef LDGMG_HARNESS_HPP
#define LDGMG_HARNESS_HPP

/** \file harness.hpp
 *  \brief Benchmark catalogue and measurement plumbing: named test problems,
 *         solver-combination cells, CSV emission, the golden-section tuner
 *         for the SAI pressure weight, and the order-of-accuracy study.
 */

#include <ldgmg/krylov.hpp>
#include <ldgmg/ldg_scalar.hpp>
#include <ldgmg/ldg_stokes.hpp>

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace ldgmg {

// --------------------------------------------------------------- catalogue

/// Parameters naming one benchmark problem.  Penalty knobs follow the
/// harness defaults when negative: beta = degree^2 and beta_p = 1/16, the
/// values the library was calibrated with.  beta_p = 0 is meaningful and
/// disables the pressure stabilization.
struct ProblemSpec {
    std::string id = "poisson-periodic";
    int dim = 2;
    int degree = 2;
    int n = 32;
    double ratio = 100.0;  ///< inner/outer viscosity of the interface problems
    double Re = 100.0;     ///< Reynolds number of the unsteady problem, mu = 1/Re
    double beta = -1.0;
    double beta_p = -1.0;
    double zeta = 0.131;   ///< pressure balancing weight handed to SAI smoothers
};

/// Everything a solver cell needs: the fine mesh, the per-level assembler the
/// hierarchy re-invokes on coarsened meshes, and any kernel vectors the
/// hierarchy cannot discover on its own (rigid rotations of the all-traction
/// problem).
struct BuiltProblem {
    Mesh mesh;
    LevelAssembler assemble;
    std::vector<BlockVec> extra_kernel;
    SystemKind kind = SystemKind::Scalar;
};

inline std::array<BoundaryKind, 6> uniform_sides(BoundaryKind k) {
    return {k, k, k, k, k, k};
}

/// Interior box (1/4, 3/4)^d as phase 0, the remainder as phase 1.
inline PhaseGeometry box_geometry(double mu_inner, double mu_outer, double rho_inner,
                                  double rho_outer) {
    PhaseGeometry g;
    g.regions.push_back({{0.25, 0.25, 0.25}, {0.75, 0.75, 0.75}, mu_inner, rho_inner});
    g.regions.push_back({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, mu_outer, rho_outer});
    return g;
}

inline double resolve_beta(const ProblemSpec& s) {
    return s.beta > 0 ? s.beta : double(s.degree) * s.degree;
}

inline double resolve_beta_p(const ProblemSpec& s) {
    return s.beta_p < 0 ? 1.0 / 16.0 : s.beta_p;
}

inline LevelAssembler scalar_assembler(PhaseGeometry geom, int degree, double beta) {
    return [geom, degree, beta](const Mesh& m) {
        ScalarProblem P;
        P.mesh = m;
        P.phases = geom;
        P.degree = degree;
        P.beta = beta;
        return assemble_scalar(P);
    };
}

inline LevelAssembler stokes_assembler(PhaseGeometry geom, int degree, double gamma,
                                       double beta, double beta_p, double delta) {
    return [geom, degree, gamma, beta, beta_p, delta](const Mesh& m) {
        StokesProblem P;
        P.mesh = m;
        P.phases = geom;
        P.degree = degree;
        P.gamma = gamma;
        P.beta = beta;
        P.beta_p = beta_p;
        P.delta = delta;
        return assemble_stokes(P);
    };
}

/// Resolves a catalogue id into a runnable problem.  The unsteady problems
/// fix delta = 0.1 h from the fine grid, so every coarse level discretizes
/// the same continuum operator.
inline BuiltProblem build_problem(const ProblemSpec& spec) {
    if (spec.dim != 2 && spec.dim != 3)
        throw std::invalid_argument("problem: dim must be 2 or 3");
    if (spec.n < 4) throw std::invalid_argument("problem: n must be at least 4");
    if (spec.ratio <= 0) throw std::invalid_argument("problem: viscosity ratio must be positive");
    if (spec.Re <= 0) throw std::invalid_argument("problem: Re must be positive");
    const double beta = resolve_beta(spec);
    const double beta_p = resolve_beta_p(spec);
    const double h = 1.0 / spec.n;
    const std::string& id = spec.id;

    BuiltProblem out;
    if (id == "poisson-periodic" || id == "poisson-dirichlet" || id == "poisson-neumann") {
        const BoundaryKind bc = id == "poisson-periodic"    ? BoundaryKind::Periodic
                                : id == "poisson-dirichlet" ? BoundaryKind::Dirichlet
                                                            : BoundaryKind::Neumann;
        out.mesh = build_uniform(spec.n, spec.dim, uniform_sides(bc));
        out.assemble = scalar_assembler(PhaseGeometry::single(), spec.degree, beta);
        out.kind = SystemKind::Scalar;
    } else if (id == "amr-poisson") {
        if (spec.dim != 2) throw std::invalid_argument("problem: amr-poisson is 2D only");
        out.mesh = build_quadtree(spec.n, 4, {0.0, 0.0}, 0.75,
                                  uniform_sides(BoundaryKind::Neumann));
        out.assemble = scalar_assembler(PhaseGeometry::single(), spec.degree, beta);
        out.kind = SystemKind::Scalar;
    } else if (id == "elliptic-interface") {
        const PhaseGeometry g = box_geometry(spec.ratio, 1.0, 1.0, 1.0);
        out.mesh = build_uniform(spec.n, spec.dim, uniform_sides(BoundaryKind::Periodic));
        assign_phases(out.mesh, g);
        out.assemble = scalar_assembler(g, spec.degree, beta);
        out.kind = SystemKind::Scalar;
    } else if (id == "stokes-steady-standard" || id == "stokes-steady-stress") {
        const bool stress = id == "stokes-steady-stress";
        out.mesh = build_uniform(spec.n, spec.dim,
                                 uniform_sides(stress ? BoundaryKind::Neumann
                                                      : BoundaryKind::Periodic));
        out.assemble = stokes_assembler(PhaseGeometry::single(), spec.degree,
                                        stress ? 1.0 : 0.0, beta, beta_p, 0.0);
        out.kind = SystemKind::Stokes;
        if (stress) {
            StokesProblem P;
            P.mesh = out.mesh;
            P.degree = spec.degree;
            P.gamma = 1.0;
            P.beta = beta;
            P.beta_p = beta_p;
            out.extra_kernel = stokes_rotation_kernel(P);
        }
    } else if (id == "stokes-interface") {
        const PhaseGeometry g = box_geometry(spec.ratio, 1.0, 1.0, 1.0);
        out.mesh = build_uniform(spec.n, spec.dim, uniform_sides(BoundaryKind::Periodic));
        assign_phases(out.mesh, g);
        out.assemble = stokes_assembler(g, spec.degree, 1.0, beta, beta_p, 0.0);
        out.kind = SystemKind::Stokes;
    } else if (id == "stokes-unsteady") {
        out.mesh = build_uniform(spec.n, spec.dim, uniform_sides(BoundaryKind::Periodic));
        out.assemble = stokes_assembler(PhaseGeometry::single(1.0 / spec.Re, 1.0),
                                        spec.degree, 0.0, beta, beta_p, 0.1 * h);
        out.kind = SystemKind::Stokes;
    } else if (id == "stokes-bubble") {
        // Gas bubble suspended in water, no-slip container walls.
        const PhaseGeometry g = box_geometry(0.0002, 1.0, 0.001, 1.0);
        out.mesh = build_uniform(spec.n, spec.dim, uniform_sides(BoundaryKind::Dirichlet));
        assign_phases(out.mesh, g);
        out.assemble = stokes_assembler(g, spec.degree, 1.0, beta, beta_p, 0.1 * h);
        out.kind = SystemKind::Stokes;
    } else {
        throw std::invalid_argument("problem: unknown catalogue id \"" + id + "\"");
    }
    return out;
}

// ------------------------------------------------------------ solver combos

struct SolverSpec {
    KrylovKind kind = KrylovKind::GMRES;
    SmootherConfig smoother = SmootherConfig::coloured_gs();
    Sweep pre = Sweep::Forward;
    Sweep post = Sweep::Reverse;
    std::string name;  ///< canonical combo string, recorded in the CSV
};

/// Parses a combo such as "CG-J", "GMRES-GS-ff", "CG-PGS4" or
/// "GMRES-SAI1-rf".  The optional suffix gives the pre/post sweep directions
/// (f forward, r reverse) and defaults to "fr"; Jacobi has no direction and
/// takes no suffix.  PGS without a digit uses the default 4 partitions and
/// the canonical name spells the count out.  zeta feeds the SAI pressure
/// balancing and comes from the problem the combo is paired with.
inline SolverSpec parse_combo(const std::string& text, double zeta = 0.131) {
    const auto fail = [&text](const std::string& why) -> void {
        throw std::invalid_argument("solver \"" + text + "\": " + why);
    };
    const auto digits = [&](const std::string& s) {
        if (s.empty()) fail("expected digits");
        for (char c : s)
            if (!std::isdigit(static_cast<unsigned char>(c))) fail("malformed count");
        if (s.size() > 6) fail("count out of range");
        return std::stoi(s);
    };

    std::vector<std::string> parts;
    for (size_t pos = 0;;) {
        const size_t dash = text.find('-', pos);
        parts.push_back(text.substr(pos, dash == std::string::npos ? std::string::npos
                                                                   : dash - pos));
        if (dash == std::string::npos) break;
        pos = dash + 1;
    }
    if (parts.size() < 2 || parts.size() > 3) fail("expected METHOD-SMOOTHER[-sweeps]");

    SolverSpec out;
    if (parts[0] == "CG")
        out.kind = KrylovKind::CG;
    else if (parts[0] == "GMRES")
        out.kind = KrylovKind::GMRES;
    else
        fail("method must be CG or GMRES");

    const std::string& fam = parts[1];
    std::string fam_name = fam;
    bool jacobi = false;
    if (fam == "J") {
        out.smoother = SmootherConfig::jacobi();
        jacobi = true;
    } else if (fam == "GS") {
        out.smoother = SmootherConfig::coloured_gs();
    } else if (fam.rfind("PGS", 0) == 0) {
        const int P = fam.size() == 3 ? 4 : digits(fam.substr(3));
        if (P < 1) fail("partition count must be positive");
        out.smoother = SmootherConfig::proc_block_gs(P);
        fam_name = "PGS" + std::to_string(P);
    } else if (fam.rfind("SAI", 0) == 0) {
        if (fam.size() == 3) fail("SAI needs a level, e.g. SAI1");
        const int level = digits(fam.substr(3));
        if (level > 2) fail("SAI level must be 0, 1 or 2");
        out.smoother = SmootherConfig::sai(level, zeta);
    } else {
        fail("unknown smoother family \"" + fam + "\"");
    }

    std::string sweeps = "fr";
    if (parts.size() == 3) {
        if (jacobi) fail("Jacobi has no sweep suffix");
        sweeps = parts[2];
    }
    if (sweeps.size() != 2 || (sweeps[0] != 'f' && sweeps[0] != 'r') ||
        (sweeps[1] != 'f' && sweeps[1] != 'r'))
        fail("sweep suffix must be two of {f, r}");
    out.pre = sweeps[0] == 'f' ? Sweep::Forward : Sweep::Reverse;
    out.post = sweeps[1] == 'f' ? Sweep::Forward : Sweep::Reverse;

    out.name = parts[0] + "-" + fam_name;
    if (!jacobi) out.name += "-" + sweeps;
    return out;
}

// ----------------------------------------------------------------- matrices

struct CellSpec {
    ProblemSpec prob;
    SolverSpec solver;
};

struct CellResult {
    CellSpec spec;
    bool ok = false;
    std::string error;
    SolveReport report;
};

struct RunMatrix {
    std::uint64_t seed = 0;
    std::vector<CellSpec> cells;
};

/// Builds the hierarchy and measures one cell.  Failures (unknown ids, CG on
/// an asymmetric plan, smoother constraints on coarse levels) are recorded,
/// not thrown, so a matrix keeps running past bad cells.
inline CellResult run_cell(const CellSpec& cell, std::uint64_t seed) {
    CellResult out;
    out.spec = cell;
    try {
        const BuiltProblem bp = build_problem(cell.prob);
        MultigridConfig mc;
        mc.smoother = cell.solver.smoother;
        mc.pre = cell.solver.pre;
        mc.post = cell.solver.post;
        const Multigrid V(bp.mesh, bp.assemble, mc);
        EtaOptions eo;
        eo.seed = seed;
        eo.extra_kernel = bp.extra_kernel;
        out.report = estimate_eta(V.system(0), V, cell.solver.kind, eo);
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

/// Runs every cell, optionally concurrently.  Each cell owns its hierarchy
/// and uses the matrix seed, so the results (and the CSV written from them)
/// do not depend on the thread count.
inline std::vector<CellResult> run_cells(const RunMatrix& matrix, int threads = 1) {
    if (threads < 1) throw std::invalid_argument("run: thread count must be positive");
    const std::size_t n = matrix.cells.size();
    std::vector<CellResult> results(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            results[i] = run_cell(matrix.cells[i], matrix.seed);
        }
    };
    const int use = int(std::min<std::size_t>(std::size_t(threads), std::max<std::size_t>(n, 1)));
    if (use <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(use);
        for (int t = 0; t < use; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return results;
}

// ---------------------------------------------------------------------- CSV

/// Shortest representation that round-trips a double; infinities print as
/// "inf" so the CSV stays locale-independent.
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const char* csv_header() {
    return "problem,dim,degree,n,solver,rho,eta,iterations,classification";
}

inline void write_csv(std::ostream& os, const std::vector<CellResult>& results) {
    os << csv_header() << "\n";
    for (const CellResult& r : results) {
        const ProblemSpec& p = r.spec.prob;
        os << p.id << ',' << p.dim << ',' << p.degree << ',' << p.n << ','
           << r.spec.solver.name << ',';
        if (r.ok)
            os << format_double(r.report.rho) << ',' << format_double(r.report.eta) << ','
               << r.report.iterations << ',' << to_string(r.report.classification);
        else
            os << ",,0,error";
        os << '\n';
    }
}

/// Human-readable digest grouped by problem; slow cells are flagged with a
/// triangle, nonconvergent ones with a cross.
inline void write_summary(std::ostream& os, const std::vector<CellResult>& results) {
    std::string last;
    for (const CellResult& r : results) {
        const ProblemSpec& p = r.spec.prob;
        std::ostringstream head;
        head << p.id << "  d=" << p.dim << " degree=" << p.degree;
        if (head.str() != last) {
            last = head.str();
            os << last << "\n";
        }
        char line[192];
        if (!r.ok) {
            std::snprintf(line, sizeof line, "  n=%-4d %-18s error: %s", p.n,
                          r.spec.solver.name.c_str(), r.error.c_str());
        } else {
            const char* mark = "";
            if (r.report.classification == Classification::Slow)
                mark = " ▲";
            else if (r.report.classification == Classification::Nonconvergent)
                mark = " ×";
            std::snprintf(line, sizeof line, "  n=%-4d %-18s rho=%-10.4g eta=%-9.4g its=%-3d %s%s",
                          p.n, r.spec.solver.name.c_str(), r.report.rho, r.report.eta,
                          r.report.iterations, to_string(r.report.classification), mark);
        }
        os << line << "\n";
    }
}

// --------------------------------------------------------------- run config

namespace cfg {

inline std::string trim(std::string s) {
    const auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && sp(s.front())) s.erase(s.begin());
    while (!s.empty() && sp(s.back())) s.pop_back();
    return s;
}

[[noreturn]] inline void fail(int line, const std::string& why) {
    throw std::runtime_error("config line " + std::to_string(line) + ": " + why);
}

inline double number(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        fail(line, "bad number \"" + v + "\"");
    }
}

inline int integer(const std::string& v, int line) {
    const double d = number(v, line);
    const int i = int(d);
    if (double(i) != d) fail(line, "expected an integer, got \"" + v + "\"");
    return i;
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace cfg

/// Line-oriented run description: an optional "seed = N" prologue followed by
/// [problem] blocks.  Each block takes id/dim/degree/ratio/Re/beta/beta_p/
/// zeta plus comma lists "n" and "solvers"; the block expands to the full
/// n x solvers product, in order.  '#' starts a comment.
inline RunMatrix parse_config(std::istream& in) {
    RunMatrix out;
    struct Block {
        ProblemSpec prob;
        std::vector<int> ns;
        std::vector<std::string> solvers;
        int line = 0;
    };
    Block blk;
    bool open = false;

    const auto flush = [&out](const Block& b) {
        if (b.ns.empty()) cfg::fail(b.line, "problem block is missing \"n =\"");
        if (b.solvers.empty()) cfg::fail(b.line, "problem block is missing \"solvers =\"");
        for (const int n : b.ns)
            for (const std::string& s : b.solvers) {
                CellSpec c;
                c.prob = b.prob;
                c.prob.n = n;
                try {
                    c.solver = parse_combo(s, c.prob.zeta);
                } catch (const std::exception& e) {
                    cfg::fail(b.line, e.what());
                }
                out.cells.push_back(std::move(c));
            }
    };

    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = cfg::trim(raw);
        if (line.empty()) continue;
        if (line == "[problem]") {
            if (open) flush(blk);
            blk = Block{};
            blk.line = lineno;
            open = true;
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) cfg::fail(lineno, "expected key = value");
        const std::string key = cfg::trim(line.substr(0, eq));
        const std::string value = cfg::trim(line.substr(eq + 1));
        if (!open) {
            if (key == "seed")
                out.seed = std::uint64_t(cfg::number(value, lineno));
            else
                cfg::fail(lineno, "only \"seed\" may appear before the first [problem] block");
            continue;
        }
        if (key == "id") {
            blk.prob.id = value;
        } else if (key == "dim") {
            blk.prob.dim = cfg::integer(value, lineno);
        } else if (key == "degree") {
            blk.prob.degree = cfg::integer(value, lineno);
        } else if (key == "n") {
            blk.ns.clear();
            for (const std::string& item : cfg::split_list(value))
                blk.ns.push_back(cfg::integer(item, lineno));
        } else if (key == "solvers") {
            blk.solvers = cfg::split_list(value);
        } else if (key == "ratio") {
            blk.prob.ratio = cfg::number(value, lineno);
        } else if (key == "Re") {
            blk.prob.Re = cfg::number(value, lineno);
        } else if (key == "beta") {
            blk.prob.beta = cfg::number(value, lineno);
        } else if (key == "beta_p") {
            blk.prob.beta_p = cfg::number(value, lineno);
        } else if (key == "zeta") {
            blk.prob.zeta = cfg::number(value, lineno);
        } else {
            cfg::fail(lineno, "unknown key \"" + key + "\"");
        }
    }
    if (open) flush(blk);
    return out;
}

inline RunMatrix parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    return parse_config(in);
}

// --------------------------------------------------------------- zeta tuner

/// Golden-section minimization of f over [lo, hi] down to the given bracket
/// width, returning the final bracket midpoint.  A degenerate bracket
/// (lo >= hi) returns lo without evaluating f.  evals, when given, receives
/// the number of objective calls.
inline double golden_min(const std::function<double(double)>& f, double lo, double hi,
                         double width, int* evals = nullptr) {
    if (width <= 0) throw std::invalid_argument("golden_min: width must be positive");
    int count = 0;
    double result = lo;
    if (lo < hi) {
        const double invphi = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = lo, b = hi;
        double c = b - invphi * (b - a);
        double d = a + invphi * (b - a);
        double fc = f(c);
        double fd = f(d);
        count = 2;
        while (b - a > width) {
            if (fc <= fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - invphi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + invphi * (b - a);
                fd = f(d);
            }
            ++count;
        }
        result = 0.5 * (a + b);
    }
    if (evals) *evals = count;
    return result;
}

struct ZetaResult {
    double zeta = 0.0;         ///< optimum on the finer grid
    double zeta_coarse = 0.0;  ///< optimum on the coarser grid
    double rho = 0.0;          ///< measured contraction at the returned optimum
    int evals = 0;             ///< total objective evaluations across both grids
    bool stable = false;       ///< |zeta - zeta_coarse| <= 0.02
};

/// Tunes the SAI pressure weight on the constant-viscosity single-phase
/// periodic Stokes prototype (gamma selects the form), measuring rho of
/// GMRES-SAI1-fr.  The search runs on n and on 2n; the finer optimum is
/// returned together with a grid-stability flag.
inline ZetaResult tune_zeta(int dim, int degree, double gamma, int n, double lo = 0.05,
                            double hi = 0.35, std::uint64_t seed = 0) {
    if (!(lo > 0.0) || hi < lo)
        throw std::invalid_argument("tune: bracket must satisfy 0 < lo <= hi");
    int total = 0;
    const auto rho_at = [&](int grid, double zeta) {
        const Mesh mesh = build_uniform(grid, dim, uniform_sides(BoundaryKind::Periodic));
        MultigridConfig mc;
        mc.smoother = SmootherConfig::sai(1, zeta);
        const Multigrid V(mesh,
                          stokes_assembler(PhaseGeometry::single(), degree, gamma,
                                           double(degree) * degree, 1.0 / 16.0, 0.0),
                          mc);
        EtaOptions eo;
        eo.seed = seed;
        ++total;
        return estimate_eta(V.system(0), V, KrylovKind::GMRES, eo).rho;
    };
    const auto optimum = [&](int grid) {
        if (rho_at(grid, lo) >= 1.0 || rho_at(grid, hi) >= 1.0)
            throw std::runtime_error("tune: nonconvergent at a bracket endpoint");
        return golden_min([&](double z) { return rho_at(grid, z); }, lo, hi, 0.005);
    };
    ZetaResult out;
    out.zeta_coarse = optimum(n);
    out.zeta = optimum(2 * n);
    out.rho = rho_at(2 * n, out.zeta);
    out.evals = total;
    out.stable = std::abs(out.zeta - out.zeta_coarse) <= 0.02;
    return out;
}

// -------------------------------------------------------------- order study

struct ScalarManufactured {
    ScalarFn u;  ///< exact solution; doubles as the Dirichlet trace
    ScalarFn f;  ///< -laplace u
};

struct StokesManufactured {
    std::function<double(const Point&, int)> vel;  ///< exact velocity components
    ScalarFn pres;                                 ///< exact pressure, zero mean
    std::function<double(const Point&, int)> force;
};

struct OrderRow {
    int n = 0;
    double err_u = 0.0;  ///< max-norm error at tensor Gauss sample points
    double err_p = 0.0;  ///< pressure error, Stokes only
};

struct OrderResult {
    std::vector<OrderRow> rows;
    double order_u = 0.0;
    double order_p = 0.0;
    bool fit_skipped = false;  ///< all errors at rounding level, slope meaningless
};

namespace study {

/// Value of component comp of the modal field x at a physical point inside
/// element e.  The basis keeps the reference normalization, so no volume
/// factor appears.
inline double eval_field(const Mesh& mesh, const ElementBasis& B, const BlockVec& x, int e,
                         int comp, const Point& pt) {
    const Element& el = mesh.elements[e];
    double xi[3] = {0.0, 0.0, 0.0};
    for (int a = 0; a < mesh.dim; ++a)
        xi[a] = 2.0 * (pt[a] - el.lo(a)) / el.size() - 1.0;
    const double* c = x.block(e) + comp * B.block_size;
    double sum = 0.0;
    for (int m = 0; m < B.block_size; ++m) {
        const auto ix = B.decompose(m);
        double v = c[m];
        for (int a = 0; a < mesh.dim; ++a) v *= mode_val(ix[a], xi[a]);
        sum += v;
    }
    return sum;
}

/// Max-norm of (field - exact) over a (degree+2)^dim Gauss grid per element.
/// With align set, the volume-weighted mean difference is removed first;
/// that is the right comparison whenever the component is only determined up
/// to a constant.
inline double sampled_error(const Mesh& mesh, int degree, const BlockVec& x, int comp,
                            const ScalarFn& exact, bool align) {
    const ElementBasis B(degree, mesh.dim);
    std::vector<double> gx, gw;
    gauss_legendre(degree + 2, gx, gw);
    const int q1 = int(gx.size());
    int qn = 1;
    for (int a = 0; a < mesh.dim; ++a) qn *= q1;

    std::vector<double> diffs, weights;
    diffs.reserve(std::size_t(mesh.elements.size()) * qn);
    weights.reserve(diffs.capacity());
    for (int e = 0; e < int(mesh.elements.size()); ++e) {
        const Element& el = mesh.elements[e];
        const double half = 0.5 * el.size();
        for (int q = 0; q < qn; ++q) {
            int rem = q;
            Point pt{0.0, 0.0, 0.0};
            double w = 1.0;
            for (int a = 0; a < mesh.dim; ++a) {
                const int qa = rem % q1;
                rem /= q1;
                pt[a] = el.lo(a) + half * (gx[qa] + 1.0);
                w *= gw[qa] * half;
            }
            diffs.push_back(eval_field(mesh, B, x, e, comp, pt) - exact(pt));
            weights.push_back(w);
        }
    }
    double shift = 0.0;
    if (align) {
        double wsum = 0.0, dsum = 0.0;
        for (std::size_t i = 0; i < diffs.size(); ++i) {
            wsum += weights[i];
            dsum += weights[i] * diffs[i];
        }
        shift = dsum / wsum;
    }
    double err = 0.0;
    for (const double d : diffs) err = std::max(err, std::abs(d - shift));
    return err;
}

/// Least-squares slope of log(err) against log(h).
inline double fit_slope(const std::vector<std::pair<double, double>>& pts) {
    const double m = double(pts.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [h, err] : pts) {
        const double x = std::log(h), y = std::log(err);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (sxy - sx * sy / m) / (sxx - sx * sx / m);
}

inline BlockVec solve_to_tolerance(const Mesh& mesh, const LevelAssembler& assemble) {
    MultigridConfig mc;
    mc.smoother = SmootherConfig::coloured_gs();
    const Multigrid V(mesh, assemble, mc);
    const System& S = V.system(0);
    BlockVec b = S.b;
    for (const BlockVec& k : kernel_basis(S)) axpy(-dot(b, k), k, b);
    auto [x, rep] = gmres_left(S.A, b, preconditioner(V), 1e-12, 100);
    (void)rep;
    return x;
}

}  // namespace study

/// Rounding floor below which the order fit is skipped: a manufactured
/// polynomial solution of degree <= the basis degree reproduces exactly and
/// only solver noise remains.
inline constexpr double order_fit_floor = 1e-8;

inline OrderResult order_study_scalar(const ScalarManufactured& man, int dim, int degree,
                                      BoundaryKind bc, const std::vector<int>& ns) {
    OrderResult out;
    for (const int n : ns) {
        const Mesh mesh = build_uniform(n, dim, uniform_sides(bc));
        const auto assemble = [&man, degree, bc](const Mesh& m) {
            ScalarProblem P;
            P.mesh = m;
            P.degree = degree;
            P.beta = double(degree) * degree;
            P.f = man.f;
            if (bc == BoundaryKind::Dirichlet) P.dirichlet = man.u;
            return assemble_scalar(P);
        };
        const BlockVec x = study::solve_to_tolerance(mesh, assemble);
        OrderRow row;
        row.n = n;
        row.err_u = study::sampled_error(mesh, degree, x, 0, man.u, bc != BoundaryKind::Dirichlet);
        out.rows.push_back(row);
    }
    double worst = 0.0;
    std::vector<std::pair<double, double>> pts;
    for (const OrderRow& r : out.rows) {
        worst = std::max(worst, r.err_u);
        pts.emplace_back(1.0 / r.n, r.err_u);
    }
    if (worst < order_fit_floor) {
        out.fit_skipped = true;
    } else {
        out.order_u = study::fit_slope(pts);
    }
    return out;
}

inline OrderResult order_study_stokes(const StokesManufactured& man, int dim, int degree,
                                      const std::vector<int>& ns) {
    OrderResult out;
    for (const int n : ns) {
        const Mesh mesh = build_uniform(n, dim, uniform_sides(BoundaryKind::Periodic));
        const auto assemble = [&man, degree](const Mesh& m) {
            StokesProblem P;
            P.mesh = m;
            P.degree = degree;
            P.gamma = 0.0;
            P.beta = double(degree) * degree;
            P.beta_p = 1.0 / 16.0;
            P.force = man.force;
            return assemble_stokes(P);
        };
        const BlockVec x = study::solve_to_tolerance(mesh, assemble);
        OrderRow row;
        row.n = n;
        for (int c = 0; c < dim; ++c) {
            const ScalarFn comp = [&man, c](const Point& p) { return man.vel(p, c); };
            row.err_u = std::max(row.err_u,
                                 study::sampled_error(mesh, degree, x, c, comp, true));
        }
        row.err_p = study::sampled_error(mesh, degree, x, dim, man.pres, true);
        out.rows.push_back(row);
    }
    double worst = 0.0;
    std::vector<std::pair<double, double>> pu, pp;
    for (const OrderRow& r : out.rows) {
        worst = std::max({worst, r.err_u, r.err_p});
        pu.emplace_back(1.0 / r.n, r.err_u);
        pp.emplace_back(1.0 / r.n, r.err_p);
    }
    if (worst < order_fit_floor) {
        out.fit_skipped = true;
    } else {
        out.order_u = study::fit_slope(pu);
        out.order_p = study::fit_slope(pp);
    }
    return out;
}

/// Built-in manufactured solutions for the catalogue ids that support an
/// order study.  Poisson uses u = prod_a sin(2 pi x_a); Stokes uses the
/// divergence-free pair u = (sin cx cos cy, -cos cx sin cy) with pressure
/// p = sin cx cos cy, c = 2 pi.
inline OrderResult order_study(const std::string& id, int dim, int degree) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("order study: dim must be 2 or 3");
    const std::vector<int> ns = dim == 2 ? std::vector<int>{8, 16, 32, 64}
                                         : std::vector<int>{4, 8, 16};
    const double c = 2.0 * std::acos(-1.0);
    if (id == "poisson-dirichlet" || id == "poisson-periodic") {
        ScalarManufactured man;
        man.u = [c, dim](const Point& p) {
            double v = 1.0;
            for (int a = 0; a < dim; ++a) v *= std::sin(c * p[a]);
            return v;
        };
        man.f = [c, dim, u = man.u](const Point& p) { return dim * c * c * u(p); };
        const BoundaryKind bc = id == "poisson-dirichlet" ? BoundaryKind::Dirichlet
                                                          : BoundaryKind::Periodic;
        return order_study_scalar(man, dim, degree, bc, ns);
    }
    if (id == "stokes-steady-standard") {
        if (dim != 2)
            throw std::invalid_argument("order study: the Stokes manufactured solution is 2D");
        StokesManufactured man;
        man.vel = [c](const Point& p, int i) {
            return i == 0 ? std::sin(c * p[0]) * std::cos(c * p[1])
                          : -std::cos(c * p[0]) * std::sin(c * p[1]);
        };
        man.pres = [c](const Point& p) { return std::sin(c * p[0]) * std::cos(c * p[1]); };
        man.force = [c](const Point& p, int i) {
            const double sx = std::sin(c * p[0]), cx = std::cos(c * p[0]);
            const double sy = std::sin(c * p[1]), cy = std::cos(c * p[1]);
            if (i == 0) return 2.0 * c * c * sx * cy + c * cx * cy;
            return -2.0 * c * c * cx * sy - c * sx * sy;
        };
        return order_study_stokes(man, dim, degree, ns);
    }
    throw std::invalid_argument("order study: no manufactured solution for id \"" + id + "\"");
}

}  // namespace ldgmg

#endif
