#pragma once

// Binary SnapshotStore file: magic, client sizes, then per snapshot the round,
// global, next_global and per-client locals. Integers are little-endian u64,
// parameters raw IEEE-754 doubles.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cofedmid/errors.hpp"
#include "cofedmid/fed.hpp"

namespace cofedmid {

inline constexpr char kSnapshotMagic[8] = {'C', 'F', 'M', 'S', 'N', 'A', 'P', '1'};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "snapshot files are written in little-endian byte order");

inline void WriteU64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t ReadU64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ContractError("snapshot file truncated");
  return v;
}

inline void WriteParams(std::ostream& out, const ParamVector& p) {
  WriteU64(out, p.size());
  out.write(reinterpret_cast<const char*>(p.span().data()),
            static_cast<std::streamsize>(p.size() * sizeof(double)));
}

inline ParamVector ReadParams(std::istream& in) {
  const std::uint64_t n = ReadU64(in);
  if (n > (std::uint64_t{1} << 32)) throw ContractError("snapshot file: implausible length");
  ParamVector p(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(p.span().data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ContractError("snapshot file truncated");
  return p;
}

}  // namespace detail

inline void SaveSnapshots(const SnapshotStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write snapshot file: " + path);
  out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
  detail::WriteU64(out, store.num_clients());
  for (std::size_t n : store.client_sizes()) detail::WriteU64(out, n);
  detail::WriteU64(out, store.size());
  for (const Snapshot& s : store.snapshots()) {
    detail::WriteU64(out, static_cast<std::uint64_t>(s.round));
    detail::WriteParams(out, s.global);
    detail::WriteParams(out, s.next_global);
    detail::WriteU64(out, s.locals.size());
    for (const auto& p : s.locals) detail::WriteParams(out, p);
  }
  if (!out) throw ContractError("failed writing snapshot file: " + path);
}

inline SnapshotStore LoadSnapshots(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open snapshot file: " + path);
  char magic[sizeof(kSnapshotMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0) {
    throw ContractError("not a snapshot file: " + path);
  }
  std::vector<std::size_t> sizes(static_cast<std::size_t>(detail::ReadU64(in)));
  for (auto& n : sizes) n = static_cast<std::size_t>(detail::ReadU64(in));
  SnapshotStore store(sizes);
  const std::uint64_t count = detail::ReadU64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    Snapshot s;
    s.round = static_cast<int>(detail::ReadU64(in));
    s.global = detail::ReadParams(in);
    s.next_global = detail::ReadParams(in);
    s.locals.resize(static_cast<std::size_t>(detail::ReadU64(in)));
    for (auto& p : s.locals) p = detail::ReadParams(in);
    store.Add(std::move(s));
  }
  return store;
}

}  // namespace cofedmid
