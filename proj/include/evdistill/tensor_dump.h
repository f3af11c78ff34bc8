/* Copyright 2026 The EvDistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef EVDISTILL_TENSOR_DUMP_H_
#define EVDISTILL_TENSOR_DUMP_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evdistill/tensor.h"

namespace evdistill {

// Binary named-tensor container, all integers little-endian:
//   "EVDT" | u16 version | u64 entry count |
//   per entry: u32 name length | UTF-8 name | u8 dtype (0 = f32, 1 = f64) |
//              u32 rank | u64 dims[rank] | row-major payload
inline constexpr char kDumpMagic[4] = {'E', 'V', 'D', 'T'};
inline constexpr uint16_t kDumpVersion = 1;

enum class DType : uint8_t { kF32 = 0, kF64 = 1 };

struct DumpEntry {
  std::string name;
  DType dtype = DType::kF64;
  Tensor tensor;
};

class TensorDumpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor_dump(std::ostream& out, std::span<const DumpEntry> entries);
std::vector<DumpEntry> read_tensor_dump(std::istream& in);

void save_tensor_dump(const std::filesystem::path& path, std::span<const DumpEntry> entries);
std::vector<DumpEntry> load_tensor_dump(const std::filesystem::path& path);

const DumpEntry* find_entry(std::span<const DumpEntry> entries, const std::string& name);

}  // namespace evdistill

#endif  // EVDISTILL_TENSOR_DUMP_H_
