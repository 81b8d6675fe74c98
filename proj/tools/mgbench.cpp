// Benchmark driver: runs solver-combination matrices from a config file,
// tunes the SAI pressure weight, or performs an order-of-accuracy study.
//
//   mgbench run --config FILE --out FILE [--seed N] [--threads N]
//   mgbench tune-zeta --form standard|stress [--dim D] [--degree P] [--n N]
//                     [--lo X] [--hi X] [--seed N]
//   mgbench order-study --id ID [--dim D] [--degree P]

#include <ldgmg/harness.hpp>

#include <cstring>
#include <iostream>
#include <map>
#include <string>

namespace {

int usage() {
    std::cerr << "usage:\n"
              << "  mgbench run --config FILE --out FILE [--seed N] [--threads N]\n"
              << "  mgbench tune-zeta --form standard|stress [--dim D] [--degree P]\n"
              << "                    [--n N] [--lo X] [--hi X] [--seed N]\n"
              << "  mgbench order-study --id ID [--dim D] [--degree P]\n";
    return 2;
}

// Flags are all of the form --key value.
std::map<std::string, std::string> parse_flags(int argc, char** argv, int first) {
    std::map<std::string, std::string> flags;
    for (int i = first; i < argc; ++i) {
        const std::string key = argv[i];
        if (key.rfind("--", 0) != 0)
            throw std::runtime_error("unexpected argument \"" + key + "\"");
        if (i + 1 >= argc) throw std::runtime_error("flag " + key + " needs a value");
        flags[key.substr(2)] = argv[++i];
    }
    return flags;
}

std::string take(std::map<std::string, std::string>& flags, const std::string& key,
                 const std::string& fallback) {
    const auto it = flags.find(key);
    if (it == flags.end()) return fallback;
    std::string v = it->second;
    flags.erase(it);
    return v;
}

void reject_leftovers(const std::map<std::string, std::string>& flags) {
    if (!flags.empty())
        throw std::runtime_error("unknown flag --" + flags.begin()->first);
}

int cmd_run(std::map<std::string, std::string> flags) {
    const std::string config = take(flags, "config", "");
    const std::string out_path = take(flags, "out", "");
    const std::string seed_s = take(flags, "seed", "");
    const std::string threads_s = take(flags, "threads", "1");
    reject_leftovers(flags);
    if (config.empty() || out_path.empty())
        throw std::runtime_error("run needs --config and --out");

    ldgmg::RunMatrix matrix = ldgmg::parse_config_file(config);
    if (!seed_s.empty()) matrix.seed = std::stoull(seed_s);
    const int threads = std::stoi(threads_s);

    const auto results = ldgmg::run_cells(matrix, threads);
    {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open output file " + out_path);
        ldgmg::write_csv(out, results);
    }
    ldgmg::write_summary(std::cout, results);

    int bad = 0;
    for (const auto& r : results)
        if (!r.ok) ++bad;
    std::cout << results.size() << " cells, " << bad << " failed, seed " << matrix.seed
              << ", csv " << out_path << "\n";
    return bad == 0 ? 0 : 1;
}

int cmd_tune(std::map<std::string, std::string> flags) {
    const std::string form = take(flags, "form", "standard");
    const int dim = std::stoi(take(flags, "dim", "2"));
    const int degree = std::stoi(take(flags, "degree", "2"));
    const int n = std::stoi(take(flags, "n", "32"));
    const double lo = std::stod(take(flags, "lo", "0.05"));
    const double hi = std::stod(take(flags, "hi", "0.35"));
    const std::uint64_t seed = std::stoull(take(flags, "seed", "0"));
    reject_leftovers(flags);
    double gamma;
    if (form == "standard")
        gamma = 0.0;
    else if (form == "stress")
        gamma = 1.0;
    else
        throw std::runtime_error("--form must be standard or stress");

    const auto r = ldgmg::tune_zeta(dim, degree, gamma, n, lo, hi, seed);
    std::cout << "zeta* = " << r.zeta << "  (coarse grid " << r.zeta_coarse << ", "
              << (r.stable ? "stable" : "NOT stable") << ")\n"
              << "rho(zeta*) = " << r.rho << ", objective evaluations: " << r.evals << "\n";
    return 0;
}

int cmd_order(std::map<std::string, std::string> flags) {
    const std::string id = take(flags, "id", "");
    const int dim = std::stoi(take(flags, "dim", "2"));
    const int degree = std::stoi(take(flags, "degree", "2"));
    reject_leftovers(flags);
    if (id.empty()) throw std::runtime_error("order-study needs --id");

    const auto r = ldgmg::order_study(id, dim, degree);
    const bool stokes = !r.rows.empty() && r.rows.front().err_p > 0.0;
    for (const auto& row : r.rows) {
        std::printf("  n=%-4d err_u=%-12.4e", row.n, row.err_u);
        if (stokes) std::printf(" err_p=%-12.4e", row.err_p);
        std::printf("\n");
    }
    if (r.fit_skipped) {
        std::printf("errors at rounding level, order fit skipped\n");
    } else {
        std::printf("fitted order: %.3f", r.order_u);
        if (stokes) std::printf(" (velocity), %.3f (pressure)", r.order_p);
        std::printf("\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) return usage();
    const std::string cmd = argv[1];
    try {
        auto flags = parse_flags(argc, argv, 2);
        if (cmd == "run") return cmd_run(std::move(flags));
        if (cmd == "tune-zeta") return cmd_tune(std::move(flags));
        if (cmd == "order-study") return cmd_order(std::move(flags));
    } catch (const std::exception& e) {
        std::cerr << "mgbench: " << e.what() << "\n";
        return 2;
    }
    return usage();
}
