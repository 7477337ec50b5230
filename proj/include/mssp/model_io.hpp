#pragma once

#include <string>

#include "mssp/model.hpp"

namespace mssp {

// JSON instance format. Key names are frozen in schema/instance.schema.json.
// Matrices: {"rows": R, "cols": N, "entries": [[r, c, v], ...]}, coupling
// tensors: {"entries": [[row, xj, bk, v], ...]}, realizations as nested
// arrays b[d][l][m][w][k].

Instance parse_instance(const std::string& json_text);
Instance load_instance(const std::string& path);

std::string instance_to_json(const Instance& instance);
void save_instance(const Instance& instance, const std::string& path);

}  // namespace mssp
