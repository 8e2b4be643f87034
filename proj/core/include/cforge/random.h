// Copyright 2026 The Condenser Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFORGE_RANDOM_H_
#define CFORGE_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace cforge {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds so that every
// consumer (per sample, per node, per candidate) draws from its own stream.
constexpr std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return MixSeed(MixSeed(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

// FNV-1a; stable across platforms, used to key streams by name.
constexpr std::uint64_t HashName(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng MakeRng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(DeriveSeed(seed, stream));
}

}  // namespace cforge

#endif  // CFORGE_RANDOM_H_
