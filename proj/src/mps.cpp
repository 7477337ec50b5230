#include "mssp/mps.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mssp {

std::string to_mps(const LpProblem& p, const std::string& name) {
    std::ostringstream out;
    out.precision(15);
    out << "NAME " << name << "\n";
    out << "ROWS\n N OBJ\n";
    for (int i = 0; i < p.num_rows(); ++i) {
        char t = p.sense[static_cast<size_t>(i)] == RowSense::le   ? 'L'
                 : p.sense[static_cast<size_t>(i)] == RowSense::ge ? 'G'
                                                                   : 'E';
        out << " " << t << " R" << i << "\n";
    }
    // column-major entry map
    std::map<int, std::vector<std::pair<int, double>>> cols;
    for (const auto& e : p.A.entries) cols[e.col].emplace_back(e.row, e.value);
    out << "COLUMNS\n";
    for (int j = 0; j < p.num_vars(); ++j) {
        if (p.cost[static_cast<size_t>(j)] != 0.0) out << "    X" << j << " OBJ " << p.cost[static_cast<size_t>(j)] << "\n";
        auto it = cols.find(j);
        if (it == cols.end()) continue;
        std::map<int, double> merged;
        for (auto& [r, v] : it->second) merged[r] += v;
        for (auto& [r, v] : merged) out << "    X" << j << " R" << r << " " << v << "\n";
    }
    out << "RHS\n";
    for (int i = 0; i < p.num_rows(); ++i) {
        if (p.rhs[static_cast<size_t>(i)] != 0.0) out << "    RHS R" << i << " " << p.rhs[static_cast<size_t>(i)] << "\n";
    }
    out << "BOUNDS\n";
    for (int j = 0; j < p.num_vars(); ++j) {
        double lo = p.lower[static_cast<size_t>(j)], up = p.upper[static_cast<size_t>(j)];
        if (lo == up) {
            out << " FX BND X" << j << " " << lo << "\n";
        } else {
            if (std::isfinite(lo)) {
                if (lo != 0.0) out << " LO BND X" << j << " " << lo << "\n";
            } else {
                out << " MI BND X" << j << "\n";
            }
            if (std::isfinite(up)) out << " UP BND X" << j << " " << up << "\n";
        }
    }
    out << "ENDATA\n";
    return out.str();
}

void write_mps(const LpProblem& p, const std::string& path, const std::string& name) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open for writing: " + path);
    f << to_mps(p, name);
}

}  // namespace mssp
