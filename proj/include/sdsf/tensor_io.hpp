#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sdsf/tensor.hpp"

namespace sdsf {

// SDTF: "SDTF" magic, u32 version, then version-specific body, all
// little-endian. Version 1 holds a single tensor: u32 rank, u64 dims[rank],
// f64 row-major payload. Version 2 is a named-section container used for
// checkpoints; tensor sections plus one "__manifest__" JSON section.
void save_sdtf(const std::string& path, const Tensor& t);
Tensor load_sdtf(const std::string& path);

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::string manifest;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& manifest_json);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sdsf
