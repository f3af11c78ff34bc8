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

#include "evdistill/mask_io.h"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace evdistill {

void write_masks(std::ostream& out, const MaskSet& masks) {
  out << "# H=" << masks.height << " W=" << masks.width << '\n';
  for (const Mask& m : masks.masks) {
    out << m.id << ':';
    size_t i = 0;
    while (i < m.cells.size()) {
      if (!m.cells[i]) {
        ++i;
        continue;
      }
      const size_t start = i;
      while (i < m.cells.size() && m.cells[i]) ++i;
      out << ' ' << start << ',' << (i - start);
    }
    out << '\n';
  }
}

MaskSet read_masks(std::istream& in) {
  MaskSet set;
  bool have_dims = false;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "mask file line " + std::to_string(line_no) + ": ";
    if (line.front() == '#') {
      std::istringstream is(line.substr(1));
      std::string token;
      while (is >> token) {
        if (token.rfind("H=", 0) == 0) set.height = std::stoul(token.substr(2));
        if (token.rfind("W=", 0) == 0) set.width = std::stoul(token.substr(2));
      }
      have_dims = set.height > 0 && set.width > 0;
      continue;
    }
    if (!have_dims) throw std::runtime_error(where + "missing '# H=.. W=..' header");
    const size_t colon = line.find(':');
    if (colon == std::string::npos) throw std::runtime_error(where + "expected '<id>: runs'");
    Mask m = Mask::empty(std::stoul(line.substr(0, colon)), set.height, set.width);
    std::istringstream runs(line.substr(colon + 1));
    std::string run;
    while (runs >> run) {
      const size_t comma = run.find(',');
      if (comma == std::string::npos) throw std::runtime_error(where + "bad run '" + run + "'");
      const size_t start = std::stoul(run.substr(0, comma));
      const size_t len = std::stoul(run.substr(comma + 1));
      if (start + len > m.cells.size()) throw std::runtime_error(where + "run exceeds the grid");
      for (size_t i = start; i < start + len; ++i) m.cells[i] = 1;
    }
    set.masks.push_back(std::move(m));
  }
  return set;
}

void save_masks(const std::filesystem::path& path, const MaskSet& masks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_masks(out, masks);
}

MaskSet load_masks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_masks(in);
}

}  // namespace evdistill
