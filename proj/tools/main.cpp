#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mssp/benders.hpp"
#include "mssp/casegen.hpp"
#include "mssp/checks.hpp"
#include "mssp/extform.hpp"
#include "mssp/model_io.hpp"
#include "mssp/sddp.hpp"

namespace {

using namespace mssp;

std::string file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return "unreadable";
    std::stringstream buf;
    buf << f.rdbuf();
    std::ostringstream out;
    out << std::hex << fnv1a64(buf.str());
    return out.str();
}

struct SolveArgs {
    std::string instance_path;
    std::string mode = "benders-sddp";
    double delta = 1e-4;
    double epsilon = 1e-3;
    unsigned long long seed = 42;
    int iter_cap = 1000;
    int sddp_iter_cap = 10000;
    int workers = default_workers();
    int node = 0;
    int pool_size = 500;
    int iota = 20;
    bool verbose = false;
    std::string trace_path;
    std::string out_path;
};

std::vector<std::string> repro_header(const SolveArgs& a) {
    std::vector<std::string> h;
    h.push_back("instance=" + a.instance_path + " hash=" + file_hash(a.instance_path));
    h.push_back("mode=" + a.mode + " delta=" + std::to_string(a.delta) + " epsilon=" + std::to_string(a.epsilon));
    h.push_back("seed=" + std::to_string(a.seed) + " iter_cap=" + std::to_string(a.iter_cap) +
                " workers=" + std::to_string(a.workers));
    return h;
}

/// Subvector at the monotone-dominating corner of the master box, the same
/// point the Benders seeding uses.
std::vector<double> corner_subvector(const Instance& inst, int node_index) {
    const MasterInstance& mi = inst.master;
    const NodeSpec& node = mi.nodes[static_cast<size_t>(node_index)];
    std::vector<double> x;
    for (int idx : node.x_indices) {
        bool decreasing = mi.monotone_direction[static_cast<size_t>(idx)] > 0;
        x.push_back(decreasing ? mi.lower[static_cast<size_t>(idx)] : mi.upper[static_cast<size_t>(idx)]);
    }
    return x;
}

int run_solve(const SolveArgs& args) {
    Instance inst = load_instance(args.instance_path);
    double psum = 0.0;
    for (const auto& n : inst.master.nodes) psum += n.probability;

    if (args.mode == "benders-sddp" || args.mode == "benchmark") {
        BendersOptions opts;
        opts.epsilon = args.epsilon;
        opts.delta = args.delta;
        opts.iteration_cap = args.iter_cap;
        opts.sddp_iteration_cap = args.sddp_iter_cap;
        opts.workers = args.workers;
        opts.verbose = args.verbose;
        opts.trace_path = args.trace_path;
        opts.trace_header = repro_header(args);
        BendersResult res;
        if (args.mode == "benchmark") {
            std::map<std::string, TrajectoryPool> pools;
            for (const auto& [ref, tpl] : inst.recourse)
                pools.emplace(ref, cluster_trajectories(tpl, args.pool_size, args.iota, args.seed));
            res = run_benders(inst, opts, deterministic_evaluator(inst, pools, opts.lp, args.workers));
        } else {
            res = run_benders(inst, opts);
        }
        std::cout << "lower " << res.lower << "\nupper " << res.upper << "\niterations " << res.iterations
                  << "\nexact_solves " << res.total_exact_solves << "\n";
        if (!args.out_path.empty()) {
            std::ofstream out(args.out_path);
            out << benders_solution_json(res) << "\n";
        }
        return 0;
    }
    if (args.mode == "sddp-only") {
        SddpOptions opts;
        opts.mode = SddpMode::enhanced;
        opts.delta = args.delta;
        opts.iteration_cap = args.sddp_iter_cap;
        opts.workers = args.workers;
        std::vector<double> x = corner_subvector(inst, args.node);
        SddpResult res = run_sddp(inst, args.node, x, opts);
        std::cout << "theta_lb " << res.theta_lb << "\ntheta_ub " << res.theta_ub << "\niterations " << res.iterations
                  << "\n";
        if (!args.trace_path.empty()) write_sddp_trace(args.trace_path, res.trace, repro_header(args));
        return 0;
    }
    if (args.mode == "extensive") {
        ExtformFullResult res = extform_full(inst);
        std::cout << "optimum " << res.objective << "\n";
        if (!args.out_path.empty()) {
            std::ofstream out(args.out_path);
            out << "{\"optimum\": " << res.objective << "}\n";
        }
        return 0;
    }
    throw ValidationError("unknown mode '" + args.mode + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multistage stochastic LP solver: adaptive Benders over enhanced SDDP subproblem solves"};
    app.set_config("--config");
    app.require_subcommand(1);

    SolveArgs args;
    CLI::App* solve = app.add_subcommand("solve", "solve an instance file");
    solve->add_option("--instance", args.instance_path, "instance JSON path")->required();
    solve->add_option("--mode", args.mode, "benders-sddp | sddp-only | extensive | benchmark");
    solve->add_option("--delta", args.delta, "subproblem tolerance");
    solve->add_option("--epsilon", args.epsilon, "master tolerance");
    solve->add_option("--seed", args.seed, "random seed (benchmark sampling)");
    solve->add_option("--iter-cap", args.iter_cap, "master iteration cap");
    solve->add_option("--sddp-iter-cap", args.sddp_iter_cap, "sddp iteration cap");
    solve->add_option("--workers", args.workers, "worker threads");
    solve->add_option("--node", args.node, "node index for sddp-only");
    solve->add_option("--pool-size", args.pool_size, "benchmark trajectory pool size");
    solve->add_option("--iota", args.iota, "benchmark cluster count");
    solve->add_flag("--verbose", args.verbose, "per-iteration progress on stderr");
    solve->add_option("--trace", args.trace_path, "trace CSV output path");
    solve->add_option("--out", args.out_path, "solution JSON output path");

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic instance");
    std::string gen_kind = "power";
    PowerConfig pcfg = PowerConfig::defaults();
    std::string gen_out = "instance.json";
    gen->add_option("kind", gen_kind, "instance family (power)");
    gen->add_option("--seed", pcfg.seed, "random seed");
    gen->add_option("--stages", pcfg.stage_count, "stages per recourse problem");
    gen->add_option("--states", pcfg.state_count, "wind states");
    gen->add_option("--scenarios", pcfg.scenario_count, "scenarios per transition");
    gen->add_option("--hours", pcfg.hours_per_stage, "hourly blocks per stage");
    gen->add_option("--slices", pcfg.slices, "seasonal slices");
    gen->add_option("--out", gen_out, "output instance path");

    CLI::App* check = app.add_subcommand("oracle-check", "randomized property suite vs the extensive form");
    unsigned long long check_seed = 7;
    int check_count = 10;
    check->add_option("--seed", check_seed, "base seed");
    check->add_option("--count", check_count, "instance count");

    CLI::App* ext = app.add_subcommand("extensive", "solve the full extensive form");
    std::string ext_instance;
    ext->add_option("--instance", ext_instance, "instance JSON path")->required();

    try {
        app.parse(argc, argv);
        if (solve->parsed()) return run_solve(args);
        if (gen->parsed()) {
            if (gen_kind != "power") throw mssp::ValidationError("unknown instance family '" + gen_kind + "'");
            mssp::Instance inst = mssp::generate_instance(pcfg);
            mssp::save_instance(inst, gen_out);
            std::cout << mssp::describe_instance(pcfg, inst);
            std::cout << "wrote " << gen_out << "\n";
            return 0;
        }
        if (check->parsed()) {
            auto outcomes = mssp::run_randomized_checks(check_seed, check_count, &std::cout);
            for (const auto& c : outcomes)
                if (c.failed > 0) return 1;
            return 0;
        }
        if (ext->parsed()) {
            mssp::Instance inst = mssp::load_instance(ext_instance);
            mssp::ExtformFullResult res = mssp::extform_full(inst);
            std::cout << "optimum " << res.objective << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const mssp::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const mssp::CapExceededError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
