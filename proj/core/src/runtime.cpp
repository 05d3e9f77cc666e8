/*
 * Copyright 2026 The stainvar Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "stainvar/runtime.hpp"

#include <torch/torch.h>

#ifndef STAINVAR_GIT_DESCRIBE
#define STAINVAR_GIT_DESCRIBE "unknown"
#endif

namespace stainvar {

void configure_runtime(std::uint64_t seed, int threads) {
  torch::set_num_threads(threads);
  static bool interop_set = false;
  if (!interop_set) {
    try {
      torch::set_num_interop_threads(threads);
    } catch (const c10::Error&) {
      // Only settable before the first parallel region; keep the prior value.
    }
    interop_set = true;
  }
  torch::manual_seed(seed);
}

std::string build_revision() { return STAINVAR_GIT_DESCRIBE; }

}  // namespace stainvar
