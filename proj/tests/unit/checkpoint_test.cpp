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

#include <gtest/gtest.h>

#include <filesystem>

#include "stainvar/checkpoint.hpp"
#include "stainvar/error.hpp"
#include "stainvar/nets.hpp"

namespace stainvar {
namespace {

Checkpoint sample() {
  torch::manual_seed(0);
  Checkpoint ck;
  ck.metadata = {{"stage", "test"}, {"n", 3}};
  ck.put("a", torch::randn({2, 3}));
  ck.put("b", torch::arange(5).to(torch::kFloat32));
  ck.put("scalar", torch::tensor(1.5f));
  return ck;
}

FormatErrorKind kind_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "corrupt checkpoint accepted";
  return FormatErrorKind::kMalformed;
}

TEST(Checkpoint, RoundTrip) {
  const auto ck = sample();
  const auto bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  EXPECT_TRUE(back == ck);
  EXPECT_EQ(back.metadata["stage"], "test");
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptionClasses) {
  const auto good = encode_checkpoint(sample());
  auto b = good;
  b[0] = 'X';
  EXPECT_EQ(kind_of(b), FormatErrorKind::kBadMagic);
  b = good;
  b[4] = 99;
  EXPECT_EQ(kind_of(b), FormatErrorKind::kUnsupportedVersion);
  b = good;
  b.resize(b.size() - 3);
  EXPECT_EQ(kind_of(b), FormatErrorKind::kTruncated);
  b = good;
  b.push_back(1);
  EXPECT_EQ(kind_of(b), FormatErrorKind::kTrailingBytes);
  b = good;
  b[b.size() - 8] ^= 0x40;
  EXPECT_EQ(kind_of(b), FormatErrorKind::kChecksumMismatch);
  b = good;
  b[14] ^= 0x01;
  EXPECT_EQ(kind_of(b), FormatErrorKind::kChecksumMismatch);
}

TEST(Checkpoint, EveryByteFlipIsDetected) {
  const auto good = encode_checkpoint(sample());
  for (std::size_t i = 0; i < good.size(); ++i) {
    auto b = good;
    b[i] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(b), FormatError) << "byte " << i;
  }
}

TEST(Checkpoint, ModuleRoundTrip) {
  NetConfig nc;
  nc.base_channels = 4;
  nc.latent_channels = 2;
  nc.downsample_blocks = 1;
  nc.groups = 1;
  torch::manual_seed(1);
  DecoderNet a(nc);
  torch::manual_seed(2);
  DecoderNet b(nc);
  EXPECT_NE(module_digest(*a), module_digest(*b));
  Checkpoint ck;
  ck.put_module("dec", *a);
  ck.load_module("dec", *b);
  EXPECT_EQ(module_digest(*a), module_digest(*b));
  EXPECT_THROW(ck.load_module("other", *b), FormatError);
  EXPECT_THROW(ck.get("missing"), FormatError);
}

TEST(Checkpoint, Files) {
  const auto path = std::filesystem::temp_directory_path() / "stainvar_test_ck.bin";
  const auto ck = sample();
  save_checkpoint(ck, path);
  EXPECT_TRUE(load_checkpoint(path) == ck);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), MissingPrerequisiteError);
}

TEST(Sha256, KnownVector) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace stainvar
