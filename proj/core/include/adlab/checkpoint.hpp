#pragma once

#include <string>

#include "adlab/nn.hpp"

namespace adlab {

// Parameter dump: header with a shape table, then row-major values.
//   magic "ADLBPAR1"
//   u32 param_count
//   per param: u32 name_len, name bytes, u64 rows, u64 cols
//   then all values as little-endian doubles, params in header order
void save_params(const ParamSet& params, const std::string& path);

// Loads values into an existing ParamSet; names and shapes must match.
void load_params(ParamSet& params, const std::string& path);

}  // namespace adlab
