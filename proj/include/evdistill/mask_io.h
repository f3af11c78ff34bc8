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

#ifndef EVDISTILL_MASK_IO_H_
#define EVDISTILL_MASK_IO_H_

#include <filesystem>
#include <iosfwd>

#include "evdistill/metrics.h"

namespace evdistill {

// Text run-length encoding over row-major cells:
//   # H=<rows> W=<cols>
//   <id>: <start>,<len> <start>,<len> ...
void write_masks(std::ostream& out, const MaskSet& masks);
MaskSet read_masks(std::istream& in);

void save_masks(const std::filesystem::path& path, const MaskSet& masks);
MaskSet load_masks(const std::filesystem::path& path);

}  // namespace evdistill

#endif  // EVDISTILL_MASK_IO_H_
