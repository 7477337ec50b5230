#pragma once

#include <vector>

#include "mssp/common.hpp"

namespace mssp {

struct MatrixEntry {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

/// Coordinate-list sparse matrix. Duplicate (row, col) entries are additive.
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<MatrixEntry> entries;

    void add(int r, int c, double v) { entries.push_back({r, c, v}); }

    /// y += alpha * (A x), y sized rows.
    void accumulate(const std::vector<double>& x, std::vector<double>& y, double alpha = 1.0) const {
        for (const auto& e : entries) y[static_cast<size_t>(e.row)] += alpha * e.value * x[static_cast<size_t>(e.col)];
    }

    /// y += alpha * (Aᵀ x), y sized cols.
    void accumulate_transpose(const std::vector<double>& x, std::vector<double>& y, double alpha = 1.0) const {
        for (const auto& e : entries) y[static_cast<size_t>(e.col)] += alpha * e.value * x[static_cast<size_t>(e.row)];
    }
};

enum class RowSense { le, eq, ge };

/// A sparse linear system  A v {<=,=,>=} rhs.
struct LinearSystem {
    SparseMatrix A;
    std::vector<RowSense> sense;
    std::vector<double> rhs;

    int rows() const { return A.rows; }
    int cols() const { return A.cols; }
    bool empty() const { return A.rows == 0; }
};

}  // namespace mssp
