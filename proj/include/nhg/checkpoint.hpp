// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/param_store.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace nhg {

// Binary layout, all integers little-endian:
//   "NHGC" | u32 version | u64 config hash | u32 group count
//   per group:  u32 name length | name | u32 tensor count
//   per tensor: u32 name length | name | u8 element type | u32 rank |
//               u64 extent[rank] | values (float64 LE)
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kElementFloat64 = 1;

struct Checkpoint {
  ParamStore store;
  std::uint64_t config_hash = 0;
  std::uint32_t version = kCheckpointVersion;
};

std::string serialize_checkpoint(const ParamStore& store, std::uint64_t config_hash);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     std::uint64_t config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nhg
