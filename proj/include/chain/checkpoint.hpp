#pragma once

#include <cstdint>
#include <string>

#include "chain/model.hpp"
#include "chain/trainer.hpp"

namespace chain {

// Self-describing container: "CHNC", u32 version, u64 json header length,
// JSON header (encoder config, epoch, global step, seed, tensor directory),
// then the float32 tensor payload. Parameters and Adam moments round-trip
// bit-exactly.
struct Checkpoint {
  ModelState<float> model;
  Adam<float> optimizer;
  int epoch = 0;
  long long global_step = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace chain
