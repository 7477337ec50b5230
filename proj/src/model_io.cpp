#include "mssp/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mssp {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError("parse error: missing key \"" + std::string(key) + "\" in " + where);
    return *it;
}

SparseMatrix matrix_from_json(const json& j, const std::string& where) {
    SparseMatrix M;
    M.rows = require(j, "rows", where).get<int>();
    M.cols = require(j, "cols", where).get<int>();
    for (const auto& e : require(j, "entries", where)) {
        if (!e.is_array() || e.size() != 3) throw ValidationError("parse error: matrix entry must be [row, col, value] in " + where);
        M.add(e[0].get<int>(), e[1].get<int>(), e[2].get<double>());
    }
    return M;
}

json matrix_to_json(const SparseMatrix& M) {
    json j;
    j["rows"] = M.rows;
    j["cols"] = M.cols;
    json es = json::array();
    for (const auto& e : M.entries) es.push_back({e.row, e.col, e.value});
    j["entries"] = es;
    return j;
}

RowSense sense_from_string(const std::string& s, const std::string& where) {
    if (s == "<=") return RowSense::le;
    if (s == ">=") return RowSense::ge;
    if (s == "=") return RowSense::eq;
    throw ValidationError("parse error: unknown sense \"" + s + "\" in " + where);
}

std::string sense_to_string(RowSense s) {
    switch (s) {
        case RowSense::le: return "<=";
        case RowSense::ge: return ">=";
        case RowSense::eq: return "=";
    }
    return "<=";
}

LinearSystem system_from_json(const json& j, const std::string& where) {
    LinearSystem sys;
    sys.A = matrix_from_json(j, where);
    for (const auto& s : require(j, "sense", where)) sys.sense.push_back(sense_from_string(s.get<std::string>(), where));
    for (const auto& v : require(j, "rhs", where)) sys.rhs.push_back(v.get<double>());
    return sys;
}

json system_to_json(const LinearSystem& sys) {
    json j = matrix_to_json(sys.A);
    json senses = json::array();
    for (RowSense s : sys.sense) senses.push_back(sense_to_string(s));
    j["sense"] = senses;
    j["rhs"] = sys.rhs;
    return j;
}

}  // namespace

Instance parse_instance(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("parse error: ") + e.what());
    }

    Instance inst;
    const json& master = require(j, "master", "instance");
    inst.master.cost = require(master, "cost", "master").get<std::vector<double>>();
    inst.master.lower = require(master, "lb", "master").get<std::vector<double>>();
    inst.master.upper = require(master, "ub", "master").get<std::vector<double>>();
    if (master.contains("constraints")) inst.master.constraints = system_from_json(master["constraints"], "master.constraints");
    if (master.contains("monotone_direction"))
        inst.master.monotone_direction = master["monotone_direction"].get<std::vector<int>>();

    for (const auto& nj : require(j, "nodes", "instance")) {
        NodeSpec node;
        node.probability = require(nj, "probability", "node").get<double>();
        node.x_indices = require(nj, "x_indices", "node").get<std::vector<int>>();
        node.recourse_ref = require(nj, "recourse", "node").get<std::string>();
        if (nj.contains("demand_level")) node.demand_level = nj["demand_level"].get<double>();
        inst.master.nodes.push_back(std::move(node));
    }

    for (const auto& [ref, tj] : require(j, "recourse", "instance").items()) {
        RecourseTemplate t;
        const std::string where = "recourse '" + ref + "'";
        t.stage_count = require(tj, "stage_count", where).get<int>();
        t.M_y = require(tj, "M_y", where).get<double>();
        t.M_b = require(tj, "M_b", where).get<double>();

        const json& lbj = require(tj, "stage_value_lb", where);
        const json& treej = require(tj, "tree", where);
        int states = require(treej, "state_count", where).get<int>();
        if (lbj.is_number()) {
            t.stage_value_lb.assign(static_cast<size_t>(t.stage_count),
                                    std::vector<double>(static_cast<size_t>(states), lbj.get<double>()));
        } else {
            t.stage_value_lb = lbj.get<std::vector<std::vector<double>>>();
        }

        for (const auto& sj : require(tj, "stages", where)) {
            StageData sd;
            sd.cost = require(sj, "cost", where).get<std::vector<double>>();
            sd.A = matrix_from_json(require(sj, "A", where), where + " A");
            if (sj.contains("C")) {
                sd.C = matrix_from_json(sj["C"], where + " C");
            } else {
                sd.C.rows = sd.A.rows;
                sd.C.cols = 0;
            }
            for (const auto& e : require(require(sj, "B", where), "entries", where)) {
                if (!e.is_array() || e.size() != 4)
                    throw ValidationError("parse error: coupling entry must be [row, xj, bk, value] in " + where);
                sd.B.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>(), e[3].get<double>()});
            }
            sd.y_lower = require(sj, "y_lb", where).get<std::vector<double>>();
            sd.y_upper = require(sj, "y_ub", where).get<std::vector<double>>();
            if (sj.contains("shared")) sd.shared = system_from_json(sj["shared"], where + " shared");
            t.stages.push_back(std::move(sd));
        }

        FoldedTree& tree = t.tree;
        tree.state_count = states;
        tree.scenario_count = require(treej, "scenario_count", where).get<int>();
        tree.initial_probs = require(treej, "initial_probs", where).get<std::vector<double>>();
        tree.transition = require(treej, "transition_probs", where).get<std::vector<std::vector<std::vector<double>>>>();
        tree.realizations = require(treej, "realizations", where)
                                .get<std::vector<std::vector<std::vector<std::vector<std::vector<double>>>>>>();
        inst.recourse.emplace(ref, std::move(t));
    }

    return validate_instance(std::move(inst));
}

Instance load_instance(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open instance file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_instance(buf.str());
}

std::string instance_to_json(const Instance& inst) {
    json j;
    json master;
    master["cost"] = inst.master.cost;
    master["lb"] = inst.master.lower;
    master["ub"] = inst.master.upper;
    if (!inst.master.constraints.empty()) master["constraints"] = system_to_json(inst.master.constraints);
    master["monotone_direction"] = inst.master.monotone_direction;
    j["master"] = master;

    json nodes = json::array();
    for (const auto& n : inst.master.nodes) {
        json nj;
        nj["probability"] = n.probability;
        nj["x_indices"] = n.x_indices;
        nj["recourse"] = n.recourse_ref;
        nj["demand_level"] = n.demand_level;
        nodes.push_back(nj);
    }
    j["nodes"] = nodes;

    json recourse;
    for (const auto& [ref, t] : inst.recourse) {
        json tj;
        tj["stage_count"] = t.stage_count;
        tj["M_y"] = t.M_y;
        tj["M_b"] = t.M_b;
        tj["stage_value_lb"] = t.stage_value_lb;
        json stages = json::array();
        for (const auto& sd : t.stages) {
            json sj;
            sj["cost"] = sd.cost;
            sj["A"] = matrix_to_json(sd.A);
            if (sd.C.cols > 0) sj["C"] = matrix_to_json(sd.C);
            json be = json::array();
            for (const auto& e : sd.B) be.push_back({e.row, e.x_index, e.b_index, e.coeff});
            sj["B"] = json{{"entries", be}};
            sj["y_lb"] = sd.y_lower;
            sj["y_ub"] = sd.y_upper;
            if (!sd.shared.empty()) sj["shared"] = system_to_json(sd.shared);
            stages.push_back(sj);
        }
        tj["stages"] = stages;
        json treej;
        treej["state_count"] = t.tree.state_count;
        treej["scenario_count"] = t.tree.scenario_count;
        treej["initial_probs"] = t.tree.initial_probs;
        treej["transition_probs"] = t.tree.transition;
        treej["realizations"] = t.tree.realizations;
        tj["tree"] = treej;
        recourse[ref] = tj;
    }
    j["recourse"] = recourse;
    return j.dump(1);
}

void save_instance(const Instance& inst, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open for writing: " + path);
    f << instance_to_json(inst) << "\n";
}

}  // namespace mssp
