#pragma once

#include <string>

#include "stb/param_store.hpp"
#include "stb/tensor.hpp"

namespace stb {

// Binary tensor container: magic "STB1", little-endian u32 rank, u32 dims,
// u8 dtype {0: f32, 1: f64}, row-major payload.
void save_tensor(const std::string& path, const Tensor& t, bool as_f32 = false);
Tensor load_tensor(const std::string& path);

// Checkpoint: "STBC", u32 manifest length, manifest JSON (parameter names,
// shapes, config hash), then the flat parameter payload as f64.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     uint64_t config_hash);
struct Checkpoint {
  ParamStore params;
  uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stb
