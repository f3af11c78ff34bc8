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

#include "evdistill/tensor_dump.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace evdistill {
namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  for (size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw TensorDumpError(std::string("tensor dump truncated while reading ") + what);
  }
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor_dump(std::ostream& out, std::span<const DumpEntry> entries) {
  out.write(kDumpMagic, 4);
  put_le<uint16_t>(out, kDumpVersion);
  put_le<uint64_t>(out, entries.size());
  for (const DumpEntry& e : entries) {
    put_le<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_le<uint8_t>(out, static_cast<uint8_t>(e.dtype));
    put_le<uint32_t>(out, static_cast<uint32_t>(e.tensor.rank()));
    for (size_t d : e.tensor.dims()) put_le<uint64_t>(out, d);
    for (double v : e.tensor.data()) {
      if (e.dtype == DType::kF32) {
        put_le<uint32_t>(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
      } else {
        put_le<uint64_t>(out, std::bit_cast<uint64_t>(v));
      }
    }
  }
  if (!out) throw TensorDumpError("tensor dump write failed");
}

std::vector<DumpEntry> read_tensor_dump(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kDumpMagic, 4) != 0) {
    throw TensorDumpError("not a tensor dump (bad magic)");
  }
  const auto version = get_le<uint16_t>(in, "version");
  if (version != kDumpVersion) {
    throw TensorDumpError("unsupported tensor dump version " + std::to_string(version));
  }
  const auto count = get_le<uint64_t>(in, "entry count");
  std::vector<DumpEntry> entries;
  for (uint64_t i = 0; i < count; ++i) {
    DumpEntry e;
    const auto name_len = get_le<uint32_t>(in, "name length");
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) throw TensorDumpError("tensor dump truncated in name");
    const auto dtype = get_le<uint8_t>(in, "dtype");
    if (dtype > 1) throw TensorDumpError("entry '" + e.name + "': unknown dtype " + std::to_string(dtype));
    e.dtype = static_cast<DType>(dtype);
    const auto rank = get_le<uint32_t>(in, "rank");
    if (rank > 16) throw TensorDumpError("entry '" + e.name + "': implausible rank");
    std::vector<size_t> dims;
    uint64_t elements = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const auto d = get_le<uint64_t>(in, "dims");
      if (d == 0) throw TensorDumpError("entry '" + e.name + "': zero dimension");
      if (elements > (uint64_t{1} << 40) / d) throw TensorDumpError("entry '" + e.name + "': too large");
      elements *= d;
      dims.push_back(static_cast<size_t>(d));
    }
    std::vector<double> data(elements);
    for (double& v : data) {
      v = e.dtype == DType::kF32 ? static_cast<double>(std::bit_cast<float>(get_le<uint32_t>(in, "payload")))
                                 : std::bit_cast<double>(get_le<uint64_t>(in, "payload"));
    }
    e.tensor = Tensor(std::move(dims), std::move(data));
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_tensor_dump(const std::filesystem::path& path, std::span<const DumpEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TensorDumpError("cannot write " + path.string());
  write_tensor_dump(out, entries);
}

std::vector<DumpEntry> load_tensor_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorDumpError("cannot open " + path.string());
  return read_tensor_dump(in);
}

const DumpEntry* find_entry(std::span<const DumpEntry> entries, const std::string& name) {
  for (const DumpEntry& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace evdistill
