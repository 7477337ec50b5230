#include "mssp/casegen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mssp {

namespace {

// deterministic per-coordinate noise stream, independent of evaluation order
double unit_noise(unsigned long long seed, unsigned long long a, unsigned long long b, unsigned long long c,
                  unsigned long long d) {
    unsigned long long h = seed;
    for (unsigned long long v : {a + 1, b + 1, c + 1, d + 1}) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
    }
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0, 1)
}

double gauss_noise(unsigned long long seed, unsigned long long a, unsigned long long b, unsigned long long c,
                   unsigned long long d) {
    double u1 = std::max(1e-12, unit_noise(seed, a, b, c, d));
    double u2 = unit_noise(seed, a, b, c, d + 1000003);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

struct InvestmentNode {
    int parent = -1;
    double prob = 1.0;
    double time_years = 0.0;
    double demand_level = 1.0;
};

std::vector<InvestmentNode> investment_tree(int count) {
    if (count != 7) throw ValidationError("the investment tree generator supports exactly 7 nodes (1 + 2 + 4)");
    std::vector<InvestmentNode> nodes(7);
    nodes[0] = {-1, 1.0, 0.0, 1.0};
    nodes[1] = {0, 0.5, 5.0, 1.08};
    nodes[2] = {0, 0.5, 5.0, 0.97};
    nodes[3] = {1, 0.25, 10.0, 1.18};
    nodes[4] = {1, 0.25, 10.0, 1.05};
    nodes[5] = {2, 0.25, 10.0, 1.02};
    nodes[6] = {2, 0.25, 10.0, 0.92};
    return nodes;
}

std::vector<double> wind_state_levels(int states) {
    std::vector<double> mu(static_cast<size_t>(states));
    if (states == 1) {
        mu[0] = 0.45;
    } else {
        for (int m = 0; m < states; ++m)
            mu[static_cast<size_t>(m)] = 0.12 + 0.7 * static_cast<double>(m) / static_cast<double>(states - 1);
    }
    return mu;
}

// mean-reverting discrete chain over the wind states
std::vector<std::vector<double>> wind_transitions(const std::vector<double>& mu) {
    const int M = static_cast<int>(mu.size());
    std::vector<std::vector<double>> P(static_cast<size_t>(M), std::vector<double>(static_cast<size_t>(M), 0.0));
    for (int l = 0; l < M; ++l) {
        double target = 0.55 * mu[static_cast<size_t>(l)] + 0.45 * 0.45;
        double total = 0.0;
        for (int m = 0; m < M; ++m) {
            double z = (mu[static_cast<size_t>(m)] - target) / 0.16;
            P[static_cast<size_t>(l)][static_cast<size_t>(m)] = std::exp(-0.5 * z * z);
            total += P[static_cast<size_t>(l)][static_cast<size_t>(m)];
        }
        for (int m = 0; m < M; ++m) P[static_cast<size_t>(l)][static_cast<size_t>(m)] /= total;
        // exact row normalization against fp drift
        double s = std::accumulate(P[static_cast<size_t>(l)].begin(), P[static_cast<size_t>(l)].end(), 0.0);
        P[static_cast<size_t>(l)][static_cast<size_t>(M - 1)] += 1.0 - s;
    }
    return P;
}

std::vector<double> demand_shape(int hours, int slice) {
    static const double season[4] = {1.15, 0.95, 0.85, 1.00};
    std::vector<double> out(static_cast<size_t>(hours));
    for (int h = 0; h < hours; ++h) {
        double frac = (static_cast<double>(h) + 0.5) / static_cast<double>(hours);
        double daily = 1.0 + 0.22 * std::sin(2.0 * 3.14159265358979323846 * (frac - 0.30));
        out[static_cast<size_t>(h)] = season[slice % 4] * daily;
    }
    return out;
}

std::vector<double> solar_shape(int hours, int slice) {
    static const double season[4] = {0.35, 0.95, 1.20, 0.70};
    std::vector<double> out(static_cast<size_t>(hours));
    for (int h = 0; h < hours; ++h) {
        double frac = (static_cast<double>(h) + 0.5) / static_cast<double>(hours);
        double bell = std::max(0.0, std::sin(3.14159265358979323846 * (frac - 0.2) / 0.6));
        out[static_cast<size_t>(h)] = season[slice % 4] * bell;
    }
    return out;
}

}  // namespace

PowerConfig PowerConfig::defaults() {
    PowerConfig cfg;
    cfg.technologies = {
        {"coal", TechType::thermal, 1700.0, 34.0, 0.30, 1.0, 9.0, 100.0},
        {"coal-ccs", TechType::thermal, 3100.0, 62.0, 0.30, 1.0, 2.0, 100.0},
        {"ocgt", TechType::thermal, 520.0, 125.0, 1.00, 1.0, 4.0, 100.0},
        {"ccgt", TechType::thermal, 950.0, 68.0, 1.00, 1.0, 12.0, 100.0},
        {"diesel", TechType::thermal, 420.0, 210.0, 1.00, 1.0, 1.0, 100.0},
        {"nuclear", TechType::thermal, 5200.0, 11.0, 0.20, 1.0, 5.0, 100.0},
        {"lithium", TechType::storage, 760.0, 0.5, 1.00, 0.90, 1.0, 150.0},
        {"wind", TechType::renewable, 1350.0, 0.0, 1.00, 1.0, 6.0, 150.0},
        {"solar", TechType::renewable, 880.0, 0.0, 1.00, 1.0, 4.0, 150.0},
    };
    return cfg;
}

Instance generate_instance(const PowerConfig& cfg) {
    if (cfg.technologies.empty()) throw ValidationError("config needs at least one technology");
    for (const auto& t : cfg.technologies) {
        if (t.capital_cost < 0 || t.operating_cost < 0) throw ValidationError("technology costs must be nonnegative");
        if (!(t.ramp_limit > 0 && t.ramp_limit <= 1.0)) throw ValidationError("ramp limits must lie in (0, 1]");
        if (!(t.efficiency > 0 && t.efficiency <= 1.0)) throw ValidationError("efficiencies must lie in (0, 1]");
    }
    if (cfg.stage_count < 2) throw ValidationError("config needs at least 2 stages");
    if (cfg.hours_per_stage < 2) throw ValidationError("config needs at least 2 hours per stage");
    if (cfg.slices < 1) throw ValidationError("config needs at least one slice");

    const int P = static_cast<int>(cfg.technologies.size());
    const int H = cfg.hours_per_stage;
    const int D = cfg.stage_count;
    const int M = cfg.state_count;
    const int W = cfg.scenario_count;
    const auto inv_nodes = investment_tree(cfg.investment_nodes);
    const int NI = static_cast<int>(inv_nodes.size());

    Instance inst;
    MasterInstance& mi = inst.master;

    // master layout per investment node: build_p (P), acc_p (P), demand level (1)
    const int per_node = 2 * P + 1;
    auto build_col = [&](int node, int p) { return node * per_node + p; };
    auto acc_col = [&](int node, int p) { return node * per_node + P + p; };
    auto demand_col = [&](int node) { return node * per_node + 2 * P; };

    mi.cost.assign(static_cast<size_t>(NI * per_node), 0.0);
    mi.lower.assign(static_cast<size_t>(NI * per_node), 0.0);
    mi.upper.assign(static_cast<size_t>(NI * per_node), 0.0);
    mi.monotone_direction.assign(static_cast<size_t>(NI * per_node), 1);

    double acc_cap_total = 0.0;
    for (int i = 0; i < NI; ++i) {
        for (int p = 0; p < P; ++p) {
            const Technology& tech = cfg.technologies[static_cast<size_t>(p)];
            mi.cost[static_cast<size_t>(build_col(i, p))] = inv_nodes[static_cast<size_t>(i)].prob * tech.capital_cost;
            mi.upper[static_cast<size_t>(build_col(i, p))] = tech.build_cap;
            double acc_max = tech.historical + 3.0 * tech.build_cap;
            mi.upper[static_cast<size_t>(acc_col(i, p))] = acc_max;
            acc_cap_total = std::max(acc_cap_total, acc_max);
        }
        double lvl = inv_nodes[static_cast<size_t>(i)].demand_level;
        mi.lower[static_cast<size_t>(demand_col(i))] = lvl;
        mi.upper[static_cast<size_t>(demand_col(i))] = lvl;
        mi.monotone_direction[static_cast<size_t>(demand_col(i))] = -1;
    }

    // accumulated capacity with the construction lag, as paired inequalities
    LinearSystem& sys = mi.constraints;
    sys.A.cols = NI * per_node;
    for (int i = 0; i < NI; ++i) {
        for (int p = 0; p < P; ++p) {
            double hist = cfg.technologies[static_cast<size_t>(p)].historical;
            std::vector<int> sources;
            int anc = inv_nodes[static_cast<size_t>(i)].parent;
            double t_i = inv_nodes[static_cast<size_t>(i)].time_years;
            while (anc >= 0) {
                if (t_i >= inv_nodes[static_cast<size_t>(anc)].time_years + 5.0 - 1e-9) sources.push_back(anc);
                anc = inv_nodes[static_cast<size_t>(anc)].parent;
            }
            for (int pass = 0; pass < 2; ++pass) {
                double sign = pass == 0 ? 1.0 : -1.0;
                int r = sys.A.rows;
                sys.A.rows += 1;
                sys.sense.push_back(RowSense::le);
                sys.rhs.push_back(sign * hist);
                sys.A.add(r, acc_col(i, p), sign);
                for (int src : sources) sys.A.add(r, build_col(src, p), -sign);
            }
        }
    }

    // wind tree shared by every slice
    const std::vector<double> mu = wind_state_levels(M);
    FoldedTree tree;
    tree.state_count = M;
    tree.scenario_count = W;
    auto trans = wind_transitions(mu);
    tree.initial_probs = trans[static_cast<size_t>(M / 2)];
    tree.transition.assign(static_cast<size_t>(D - 1), trans);
    tree.realizations.resize(static_cast<size_t>(D));
    for (int d = 1; d <= D; ++d) {
        int lsize = d == 1 ? 1 : M;
        auto& rd = tree.realizations[static_cast<size_t>(d - 1)];
        rd.resize(static_cast<size_t>(lsize));
        for (int l = 0; l < lsize; ++l) {
            rd[static_cast<size_t>(l)].resize(static_cast<size_t>(M));
            for (int m = 0; m < M; ++m) {
                rd[static_cast<size_t>(l)][static_cast<size_t>(m)].resize(static_cast<size_t>(W));
                double from = d == 1 ? mu[static_cast<size_t>(M / 2)] : mu[static_cast<size_t>(l)];
                double to = mu[static_cast<size_t>(m)];
                for (int w = 0; w < W; ++w) {
                    std::vector<double> b(static_cast<size_t>(H + 1));
                    b[0] = 1.0;  // constant element for demand and fixed availabilities
                    for (int h = 0; h < H; ++h) {
                        double frac = (static_cast<double>(h) + 1.0) / static_cast<double>(H);
                        double base = from + (to - from) * frac;
                        double wig = 0.10 * gauss_noise(cfg.seed, static_cast<unsigned long long>(d),
                                                        static_cast<unsigned long long>(l * M + m),
                                                        static_cast<unsigned long long>(w),
                                                        static_cast<unsigned long long>(h));
                        b[static_cast<size_t>(h + 1)] = std::clamp(base + wig, 0.02, 1.0);
                    }
                    rd[static_cast<size_t>(l)][static_cast<size_t>(m)][static_cast<size_t>(w)] = std::move(b);
                }
            }
        }
    }

    // one recourse template per seasonal slice
    const int sto = [&] {
        for (int p = 0; p < P; ++p)
            if (cfg.technologies[static_cast<size_t>(p)].type == TechType::storage) return p;
        return -1;
    }();
    std::vector<int> slow;
    for (int p = 0; p < P; ++p) {
        const auto& t = cfg.technologies[static_cast<size_t>(p)];
        if (t.type == TechType::thermal && t.ramp_limit < 1.0) slow.push_back(p);
    }

    // per-copy decision layout: gen[p][h] (discharge for the storage slot),
    // then charge[h], level[h], shed[h]
    const int ny = P * H + 3 * H;
    auto gen_col = [&](int p, int h) { return p * H + h; };
    auto charge_col = [&](int h) { return P * H + h; };
    auto level_col = [&](int h) { return P * H + H + h; };
    auto shed_col = [&](int h) { return P * H + 2 * H + h; };

    double max_opex = cfg.shed_cost;
    for (const auto& t : cfg.technologies) max_opex = std::max(max_opex, t.operating_cost);

    for (int s = 0; s < cfg.slices; ++s) {
        RecourseTemplate tpl;
        tpl.stage_count = D;
        tpl.tree = tree;
        const std::vector<double> dshape = demand_shape(H, s);
        const std::vector<double> sshape = solar_shape(H, s);

        for (int d = 1; d <= D; ++d) {
            StageData sd;
            sd.cost.assign(static_cast<size_t>(ny), 0.0);
            sd.y_lower.assign(static_cast<size_t>(ny), 0.0);
            sd.y_upper.assign(static_cast<size_t>(ny), 0.0);
            for (int p = 0; p < P; ++p) {
                const auto& tech = cfg.technologies[static_cast<size_t>(p)];
                for (int h = 0; h < H; ++h) {
                    sd.cost[static_cast<size_t>(gen_col(p, h))] = tech.operating_cost;
                    sd.y_upper[static_cast<size_t>(gen_col(p, h))] = acc_cap_total;
                }
            }
            for (int h = 0; h < H; ++h) {
                sd.cost[static_cast<size_t>(charge_col(h))] = 0.01;
                sd.y_upper[static_cast<size_t>(charge_col(h))] = acc_cap_total;
                sd.y_upper[static_cast<size_t>(level_col(h))] = acc_cap_total * cfg.storage_energy_hours;
                sd.cost[static_cast<size_t>(shed_col(h))] = cfg.shed_cost;
                sd.y_upper[static_cast<size_t>(shed_col(h))] = cfg.demand_base * 4.0;
            }

            sd.A.cols = ny;
            sd.C.cols = ny;
            auto add_row = [&](double rhs_unused) {
                (void)rhs_unused;
                int r = sd.A.rows;
                sd.A.rows += 1;
                sd.C.rows = sd.A.rows;
                return r;
            };

            for (int p = 0; p < P; ++p) {
                const auto& tech = cfg.technologies[static_cast<size_t>(p)];
                for (int h = 0; h < H; ++h) {
                    if (tech.type == TechType::thermal) {
                        int r = add_row(0.0);
                        sd.A.add(r, gen_col(p, h), 1.0);
                        sd.B.push_back({r, p, 0, 1.0});
                    } else if (tech.type == TechType::renewable) {
                        int r = add_row(0.0);
                        sd.A.add(r, gen_col(p, h), 1.0);
                        if (tech.name == "solar") {
                            sd.B.push_back({r, p, 0, sshape[static_cast<size_t>(h)]});
                        } else {
                            sd.B.push_back({r, p, h + 1, 1.0});
                        }
                    } else {  // storage discharge
                        int r = add_row(0.0);
                        sd.A.add(r, gen_col(p, h), 1.0);
                        sd.B.push_back({r, p, 0, cfg.storage_power_ratio});
                    }
                }
            }
            if (sto >= 0) {
                const auto& st = cfg.technologies[static_cast<size_t>(sto)];
                for (int h = 0; h < H; ++h) {
                    int r = add_row(0.0);
                    sd.A.add(r, charge_col(h), 1.0);
                    sd.B.push_back({r, sto, 0, cfg.storage_power_ratio});
                    r = add_row(0.0);
                    sd.A.add(r, level_col(h), 1.0);
                    sd.B.push_back({r, sto, 0, cfg.storage_energy_hours});
                }
                // energy balance of the store: equalities as paired rows,
                // except the day-one opening charge which is only capped
                // (capacity must never appear with a negative coefficient)
                for (int h = 0; h < H; ++h) {
                    for (int pass = 0; pass < 2; ++pass) {
                        if (pass == 1 && h == 0 && d == 1) continue;
                        double sign = pass == 0 ? 1.0 : -1.0;
                        int r = add_row(0.0);
                        sd.A.add(r, level_col(h), sign);
                        sd.A.add(r, charge_col(h), -sign * st.efficiency);
                        sd.A.add(r, gen_col(sto, h), sign);
                        if (h > 0) {
                            sd.A.add(r, level_col(h - 1), -sign);
                        } else if (d > 1) {
                            sd.C.add(r, level_col(H - 1), sign);
                        } else {
                            sd.B.push_back({r, sto, 0, 0.5 * cfg.storage_energy_hours});
                        }
                    }
                }
            }
            // demand balance with shedding: -(sum gen) - shed + charge <= -demand
            for (int h = 0; h < H; ++h) {
                int r = add_row(0.0);
                for (int p = 0; p < P; ++p) sd.A.add(r, gen_col(p, h), -1.0);
                sd.A.add(r, shed_col(h), -1.0);
                sd.A.add(r, charge_col(h), 1.0);
                sd.B.push_back({r, P, 0, -cfg.demand_base * dshape[static_cast<size_t>(h)]});
            }
            // ramping on slow thermal units, first hour linked to the
            // previous day's final output
            for (int p : slow) {
                double ramp = cfg.technologies[static_cast<size_t>(p)].ramp_limit;
                for (int h = 0; h < H; ++h) {
                    if (h == 0 && d == 1) continue;
                    for (int pass = 0; pass < 2; ++pass) {
                        double sign = pass == 0 ? 1.0 : -1.0;
                        int r = add_row(0.0);
                        sd.A.add(r, gen_col(p, h), sign);
                        if (h > 0) {
                            sd.A.add(r, gen_col(p, h - 1), -sign);
                        } else {
                            sd.C.add(r, gen_col(p, H - 1), sign);
                        }
                        sd.B.push_back({r, p, 0, ramp});
                    }
                }
            }
            if (d == 1) {
                sd.C.rows = sd.A.rows;
                sd.C.cols = 0;
                sd.C.entries.clear();
            }
            tpl.stages.push_back(std::move(sd));
        }

        tpl.stage_value_lb.assign(static_cast<size_t>(D), std::vector<double>(static_cast<size_t>(M), 0.0));
        // Lipschitz caps from the shed-cost backstop: one unit of energy is
        // never worth more than displaced shedding. Linked decisions are the
        // slow units' last-hour output (a blocked unit can forfeit up to a
        // day) and the storage level (one unit of carried energy).
        double energy_value = cfg.shed_cost + max_opex;
        tpl.M_y = 2.0 * energy_value * (2.0 * static_cast<double>(slow.size()) * static_cast<double>(H) + 3.0);
        std::vector<double> u_x(static_cast<size_t>(P) + 1, 0.0);
        for (int p = 0; p < P; ++p)
            u_x[static_cast<size_t>(p)] = cfg.technologies[static_cast<size_t>(p)].historical +
                                          3.0 * cfg.technologies[static_cast<size_t>(p)].build_cap;
        for (const auto& n : inv_nodes) u_x[static_cast<size_t>(P)] = std::max(u_x[static_cast<size_t>(P)], n.demand_level);
        double coupling_mass = 0.0;
        for (int d = 1; d <= D; ++d) {
            double mass = 0.0;
            for (const auto& e : tpl.stages[static_cast<size_t>(d - 1)].B) {
                if (e.b_index == 0) continue;  // the constant element never moves
                mass += u_x[static_cast<size_t>(e.x_index)] * std::abs(e.coeff);
            }
            coupling_mass = std::max(coupling_mass, mass);
        }
        tpl.M_b = 2.0 * energy_value * std::max(coupling_mass, 1e-3);
        inst.recourse.emplace("slice" + std::to_string(s), std::move(tpl));
    }

    // decision nodes: one per (investment node, slice); the node subvector is
    // the accumulated-capacity block plus the fixed demand-level component
    double days_per_slice_period = cfg.years_per_period * 365.25 / static_cast<double>(cfg.slices);
    double period_weight = days_per_slice_period / static_cast<double>(D);
    for (int i = 0; i < NI; ++i) {
        for (int s = 0; s < cfg.slices; ++s) {
            NodeSpec node;
            node.probability = inv_nodes[static_cast<size_t>(i)].prob * period_weight;
            node.recourse_ref = "slice" + std::to_string(s);
            node.demand_level = inv_nodes[static_cast<size_t>(i)].demand_level;
            for (int p = 0; p < P; ++p) node.x_indices.push_back(acc_col(i, p));
            node.x_indices.push_back(demand_col(i));
            mi.nodes.push_back(std::move(node));
        }
    }

    return validate_instance(std::move(inst));
}

std::string describe_instance(const PowerConfig& cfg, const Instance& inst) {
    std::ostringstream out;
    out << "power investment instance\n";
    out << "  technologies: " << cfg.technologies.size() << " (";
    for (size_t p = 0; p < cfg.technologies.size(); ++p) out << (p ? ", " : "") << cfg.technologies[p].name;
    out << ")\n";
    out << "  investment nodes: " << cfg.investment_nodes << ", slices: " << cfg.slices
        << ", subproblem nodes: " << inst.master.nodes.size() << "\n";
    out << "  recourse: " << cfg.stage_count << " stages x " << cfg.hours_per_stage << " hours, "
        << cfg.state_count << " wind states, " << cfg.scenario_count << " scenarios per transition\n";
    out << "  master variables: " << inst.master.num_vars() << ", master rows: " << inst.master.constraints.A.rows
        << "\n";
    out << "  seed: " << cfg.seed << "\n";
    return out.str();
}

TrajectoryPool cluster_trajectories(const RecourseTemplate& tpl, int pool_size, int iota, unsigned long long seed) {
    if (pool_size < 1 || iota < 1 || iota > pool_size)
        throw ValidationError("cluster_trajectories needs pool_size >= iota >= 1");
    const int D = tpl.stage_count;
    const int W = tpl.tree.scenario_count;
    const int M = tpl.tree.state_count;

    Rng rng(seed);
    auto pick = [&rng](const std::vector<double>& probs) {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        double u = uni(rng), acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u <= acc) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    };

    std::vector<std::vector<std::vector<double>>> pool(static_cast<size_t>(pool_size));
    std::uniform_int_distribution<int> wdist(0, W - 1);
    for (int i = 0; i < pool_size; ++i) {
        std::vector<std::vector<double>> traj(static_cast<size_t>(D));
        int l = -1;
        for (int d = 1; d <= D; ++d) {
            std::vector<double> probs(static_cast<size_t>(M));
            for (int m = 0; m < M; ++m) probs[static_cast<size_t>(m)] = tpl.tree.transition_prob(d, l, m);
            int m = pick(probs);
            int w = wdist(rng);
            traj[static_cast<size_t>(d - 1)] = tpl.tree.realization(d, l, m, w);
            l = m;
        }
        pool[static_cast<size_t>(i)] = std::move(traj);
    }

    auto dist2 = [](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
        double acc = 0.0;
        for (size_t d = 0; d < a.size(); ++d)
            for (size_t k = 0; k < a[d].size(); ++k) {
                double diff = a[d][k] - b[d][k];
                acc += diff * diff;
            }
        return acc;
    };

    // greedy farthest-point seeding from the pool mean
    std::vector<std::vector<double>> mean(static_cast<size_t>(D));
    for (int d = 0; d < D; ++d) {
        mean[static_cast<size_t>(d)].assign(pool[0][static_cast<size_t>(d)].size(), 0.0);
        for (const auto& traj : pool)
            for (size_t k = 0; k < mean[static_cast<size_t>(d)].size(); ++k)
                mean[static_cast<size_t>(d)][k] += traj[static_cast<size_t>(d)][k] / static_cast<double>(pool_size);
    }
    std::vector<int> center_idx;
    {
        int first = 0;
        double best = -1.0;
        for (int i = 0; i < pool_size; ++i) {
            double v = dist2(pool[static_cast<size_t>(i)], mean);
            if (v > best) {
                best = v;
                first = i;
            }
        }
        center_idx.push_back(first);
        while (static_cast<int>(center_idx.size()) < iota) {
            int far = -1;
            double best_min = -1.0;
            for (int i = 0; i < pool_size; ++i) {
                double dmin = kInf;
                for (int c : center_idx) dmin = std::min(dmin, dist2(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(c)]));
                if (dmin > best_min) {
                    best_min = dmin;
                    far = i;
                }
            }
            center_idx.push_back(far);
        }
    }

    TrajectoryPool out;
    out.centers.reserve(static_cast<size_t>(iota));
    for (int c : center_idx) out.centers.push_back(pool[static_cast<size_t>(c)]);
    out.weights.assign(static_cast<size_t>(iota), 0.0);

    // Lloyd iterations
    std::vector<int> assign(static_cast<size_t>(pool_size), 0);
    for (int it = 0; it < 200; ++it) {
        bool changed = false;
        std::vector<double> counts(static_cast<size_t>(iota), 0.0);
        for (int i = 0; i < pool_size; ++i) {
            int best_c = 0;
            double best_v = kInf;
            for (int c = 0; c < iota; ++c) {
                double v = dist2(pool[static_cast<size_t>(i)], out.centers[static_cast<size_t>(c)]);
                if (v < best_v) {
                    best_v = v;
                    best_c = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best_c) changed = true;
            assign[static_cast<size_t>(i)] = best_c;
            counts[static_cast<size_t>(best_c)] += 1.0;
        }
        // empty-cluster repair: reseed from the farthest point
        for (int c = 0; c < iota; ++c) {
            if (counts[static_cast<size_t>(c)] > 0.0) continue;
            int far = 0;
            double best_v = -1.0;
            for (int i = 0; i < pool_size; ++i) {
                double v = dist2(pool[static_cast<size_t>(i)], out.centers[static_cast<size_t>(assign[static_cast<size_t>(i)])]);
                if (v > best_v) {
                    best_v = v;
                    far = i;
                }
            }
            out.centers[static_cast<size_t>(c)] = pool[static_cast<size_t>(far)];
            assign[static_cast<size_t>(far)] = c;
            counts[static_cast<size_t>(c)] = 1.0;
            changed = true;
        }
        // recompute centers
        std::vector<std::vector<std::vector<double>>> fresh(static_cast<size_t>(iota));
        for (int c = 0; c < iota; ++c) {
            fresh[static_cast<size_t>(c)].assign(static_cast<size_t>(D), {});
            for (int d = 0; d < D; ++d)
                fresh[static_cast<size_t>(c)][static_cast<size_t>(d)].assign(pool[0][static_cast<size_t>(d)].size(), 0.0);
        }
        for (int i = 0; i < pool_size; ++i) {
            int c = assign[static_cast<size_t>(i)];
            for (int d = 0; d < D; ++d)
                for (size_t k = 0; k < pool[static_cast<size_t>(i)][static_cast<size_t>(d)].size(); ++k)
                    fresh[static_cast<size_t>(c)][static_cast<size_t>(d)][k] +=
                        pool[static_cast<size_t>(i)][static_cast<size_t>(d)][k] / counts[static_cast<size_t>(c)];
        }
        out.centers = std::move(fresh);
        if (!changed && it > 0) break;
    }

    std::vector<double> counts(static_cast<size_t>(iota), 0.0);
    for (int i = 0; i < pool_size; ++i) counts[static_cast<size_t>(assign[static_cast<size_t>(i)])] += 1.0;
    for (int c = 0; c < iota; ++c) out.weights[static_cast<size_t>(c)] = counts[static_cast<size_t>(c)] / static_cast<double>(pool_size);
    return out;
}

double deterministic_value(const Instance& inst, int node_index, std::span<const double> x,
                           const TrajectoryPool& pool, const LpOptions& lp_opts, int workers) {
    const RecourseTemplate& tpl = inst.recourse_for(node_index);
    const int D = tpl.stage_count;
    const int T = static_cast<int>(pool.centers.size());

    std::vector<double> values(static_cast<size_t>(T), 0.0);
    parallel_for(T, workers, [&](int t) {
        LpProblem lp;
        std::vector<int> col0(static_cast<size_t>(D), 0);
        for (int d = 1; d <= D; ++d) {
            const StageData& sd = tpl.stages[static_cast<size_t>(d - 1)];
            if (!sd.shared.empty())
                throw ValidationError("the deterministic benchmark supports recourse without shared scenario rows");
            col0[static_cast<size_t>(d - 1)] = lp.num_vars();
            for (int k = 0; k < sd.y_dim(); ++k)
                lp.add_var(sd.cost[static_cast<size_t>(k)], sd.y_lower[static_cast<size_t>(k)], sd.y_upper[static_cast<size_t>(k)]);
        }
        for (int d = 1; d <= D; ++d) {
            const StageData& sd = tpl.stages[static_cast<size_t>(d - 1)];
            const std::vector<double>& b = pool.centers[static_cast<size_t>(t)][static_cast<size_t>(d - 1)];
            std::vector<double> rhs(static_cast<size_t>(sd.A.rows), 0.0);
            for (const auto& e : sd.B)
                rhs[static_cast<size_t>(e.row)] += x[static_cast<size_t>(e.x_index)] * e.coeff * b[static_cast<size_t>(e.b_index)];
            int row0 = lp.num_rows();
            for (int r = 0; r < sd.A.rows; ++r) lp.add_row(RowSense::le, rhs[static_cast<size_t>(r)]);
            for (const auto& e : sd.A.entries) lp.A.add(row0 + e.row, col0[static_cast<size_t>(d - 1)] + e.col, e.value);
            if (d >= 2) {
                for (const auto& e : sd.C.entries)
                    lp.A.add(row0 + e.row, col0[static_cast<size_t>(d - 2)] + e.col, -e.value);
            }
        }
        SimplexSolver solver(lp_opts);
        LpSolution sol = solver.solve(lp);
        if (sol.status == LpStatus::infeasible)
            throw RecourseInfeasibleError("deterministic dispatch infeasible for trajectory " + std::to_string(t));
        if (sol.status != LpStatus::optimal) throw NumericalError("deterministic dispatch solve failed");
        values[static_cast<size_t>(t)] = sol.objective;
    });

    double total = 0.0;
    for (int t = 0; t < T; ++t) total += pool.weights[static_cast<size_t>(t)] * values[static_cast<size_t>(t)];
    return total;
}

ExactSubproblemFn deterministic_evaluator(const Instance& inst, const std::map<std::string, TrajectoryPool>& pools,
                                          const LpOptions& lp_opts, int workers) {
    return [&inst, pools, lp_opts, workers](int node_index, std::span<const double> x) {
        const RecourseTemplate& tpl = inst.recourse_for(node_index);
        const std::string& ref = inst.master.nodes[static_cast<size_t>(node_index)].recourse_ref;
        const TrajectoryPool& pool = pools.at(ref);
        const int D = tpl.stage_count;
        const int T = static_cast<int>(pool.centers.size());
        const int nx = static_cast<int>(x.size());

        std::vector<double> values(static_cast<size_t>(T), 0.0);
        std::vector<std::vector<double>> grads(static_cast<size_t>(T));
        parallel_for(T, workers, [&](int t) {
            LpProblem lp;
            std::vector<MatrixEntry> rhs_dep;
            std::vector<int> col0(static_cast<size_t>(D), 0);
            for (int d = 1; d <= D; ++d) {
                const StageData& sd = tpl.stages[static_cast<size_t>(d - 1)];
                col0[static_cast<size_t>(d - 1)] = lp.num_vars();
                for (int k = 0; k < sd.y_dim(); ++k)
                    lp.add_var(sd.cost[static_cast<size_t>(k)], sd.y_lower[static_cast<size_t>(k)],
                               sd.y_upper[static_cast<size_t>(k)]);
            }
            for (int d = 1; d <= D; ++d) {
                const StageData& sd = tpl.stages[static_cast<size_t>(d - 1)];
                const std::vector<double>& b = pool.centers[static_cast<size_t>(t)][static_cast<size_t>(d - 1)];
                std::vector<double> rhs(static_cast<size_t>(sd.A.rows), 0.0);
                for (const auto& e : sd.B)
                    rhs[static_cast<size_t>(e.row)] += x[static_cast<size_t>(e.x_index)] * e.coeff * b[static_cast<size_t>(e.b_index)];
                int row0 = lp.num_rows();
                for (int r = 0; r < sd.A.rows; ++r) lp.add_row(RowSense::le, rhs[static_cast<size_t>(r)]);
                for (const auto& e : sd.A.entries) lp.A.add(row0 + e.row, col0[static_cast<size_t>(d - 1)] + e.col, e.value);
                for (const auto& e : sd.B)
                    rhs_dep.push_back({row0 + e.row, e.x_index, e.coeff * b[static_cast<size_t>(e.b_index)]});
                if (d >= 2) {
                    for (const auto& e : sd.C.entries)
                        lp.A.add(row0 + e.row, col0[static_cast<size_t>(d - 2)] + e.col, -e.value);
                }
            }
            SimplexSolver solver(lp_opts);
            LpSolution sol = solver.solve(lp);
            if (sol.status == LpStatus::infeasible)
                throw RecourseInfeasibleError("deterministic dispatch infeasible for trajectory " + std::to_string(t));
            if (sol.status != LpStatus::optimal) throw NumericalError("deterministic dispatch solve failed");
            values[static_cast<size_t>(t)] = sol.objective;
            grads[static_cast<size_t>(t)] = value_sensitivity(sol, rhs_dep, nx);
        });

        SubproblemExact out;
        out.lambda.assign(static_cast<size_t>(nx), 0.0);
        for (int t = 0; t < T; ++t) {
            out.theta_lb += pool.weights[static_cast<size_t>(t)] * values[static_cast<size_t>(t)];
            for (int j = 0; j < nx; ++j)
                out.lambda[static_cast<size_t>(j)] += pool.weights[static_cast<size_t>(t)] * grads[static_cast<size_t>(t)][static_cast<size_t>(j)];
        }
        out.theta_ub = out.theta_lb;
        return out;
    };
}

}  // namespace mssp
