// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WDDA_CHECKPOINT_HPP_
#define WDDA_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "wdda/alignment.hpp"

namespace wdda {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, little-endian throughout:
///   "WDDA" | u32 version | u32 n | n bytes of JSON metadata
///   then records until end of file:
///   u32 name length | UTF-8 name | u32 rank | rank x u32 extents |
///   float32 payload
/// Records hold every network parameter, every spectral-norm vector and
/// the Adam moments of every optimizer. The JSON block carries the phase,
/// step, alignment config and optimizer step counters.
std::vector<unsigned char> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wdda

#endif  // WDDA_CHECKPOINT_HPP_
