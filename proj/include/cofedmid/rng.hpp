#pragma once

// Seeding discipline. One master seed per experiment; every random stream is
// derived from (master, component name, client, round) through DeriveSeed, so
// streams never depend on execution order or thread count.

#include <cstdint>
#include <random>
#include <string_view>

namespace cofedmid {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the component name.
inline constexpr std::uint64_t HashName(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// seed = SplitMix64(SplitMix64(SplitMix64(master ^ H(component)) ^ client) ^ round)
// Client and round are offset by one so that "no client" (-1) and client 0
// map to distinct inputs.
inline constexpr std::uint64_t DeriveSeed(std::uint64_t master,
                                          std::string_view component,
                                          std::int64_t client = -1,
                                          std::int64_t round = -1) {
  std::uint64_t s = SplitMix64(master ^ HashName(component));
  s = SplitMix64(s ^ static_cast<std::uint64_t>(client + 1));
  s = SplitMix64(s ^ static_cast<std::uint64_t>(round + 1));
  return s;
}

inline Rng MakeRng(std::uint64_t master, std::string_view component,
                   std::int64_t client = -1, std::int64_t round = -1) {
  return Rng(DeriveSeed(master, component, client, round));
}

}  // namespace cofedmid
