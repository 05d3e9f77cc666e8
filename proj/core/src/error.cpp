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

#include "stainvar/error.hpp"

namespace stainvar {

const char* to_string(FormatErrorKind kind) noexcept {
  switch (kind) {
    case FormatErrorKind::kBadMagic:
      return "bad magic";
    case FormatErrorKind::kUnsupportedVersion:
      return "unsupported version";
    case FormatErrorKind::kTruncated:
      return "truncated stream";
    case FormatErrorKind::kTrailingBytes:
      return "trailing bytes";
    case FormatErrorKind::kIndexOutOfRange:
      return "index out of range";
    case FormatErrorKind::kInvalidSchedule:
      return "invalid schedule";
    case FormatErrorKind::kChecksumMismatch:
      return "checksum mismatch";
    case FormatErrorKind::kMalformed:
      return "malformed";
  }
  return "unknown";
}

}  // namespace stainvar
