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

// Process-wide execution settings.

#pragma once

#include <cstdint>
#include <string>

namespace stainvar {

// Pins intra- and inter-op parallelism (default one thread, which makes
// every computation bitwise reproducible) and seeds the tensor RNG.
void configure_runtime(std::uint64_t seed, int threads = 1);

// git describe of the source tree the library was built from.
std::string build_revision();

}  // namespace stainvar
