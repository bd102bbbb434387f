// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/checkpoint.hpp"

#include "nhg/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace nhg {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'N', 'H', 'G', 'C'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void read_doubles(std::span<double> dst) {
    need(dst.size() * sizeof(double));
    std::memcpy(dst.data(), bytes_.data() + pos_, dst.size() * sizeof(double));
    pos_ += dst.size() * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
  }

  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParamStore& store, std::uint64_t config_hash) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.groups().size()));
  for (const auto& g : store.groups()) {
    put_string(out, g.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(g.tensors.size()));
    for (const auto& [name, t] : g.tensors) {
      put_string(out, name);
      put<std::uint8_t>(out, kElementFloat64);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
      out.append(reinterpret_cast<const char*>(t.values().data()), t.size() * sizeof(double));
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("bad magic (not an NHGC checkpoint)");
  Checkpoint cp;
  cp.version = r.get<std::uint32_t>();
  if (cp.version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(cp.version));
  cp.config_hash = r.get<std::uint64_t>();
  const auto groups = r.get<std::uint32_t>();
  for (std::uint32_t gi = 0; gi < groups; ++gi) {
    const std::string gname = r.get_string();
    if (cp.store.has_group(gname)) r.fail("duplicate group '" + gname + "'");
    cp.store.add_group(gname);
    const auto tensors = r.get<std::uint32_t>();
    for (std::uint32_t ti = 0; ti < tensors; ++ti) {
      const std::string tname = r.get_string();
      if (r.get<std::uint8_t>() != kElementFloat64) r.fail("unknown element type for '" + tname + "'");
      const auto rank = r.get<std::uint32_t>();
      if (rank < 1 || rank > 2) r.fail("unsupported rank for '" + tname + "'");
      std::vector<std::size_t> shape;
      for (std::uint32_t d = 0; d < rank; ++d) {
        const auto extent = r.get<std::uint64_t>();
        if (extent == 0 || extent > (1ull << 32)) r.fail("bad extent for '" + tname + "'");
        shape.push_back(static_cast<std::size_t>(extent));
      }
      Tensor t(shape);
      r.read_doubles(t.values());
      try {
        cp.store.add(gname, tname, std::move(t));
      } catch (const std::invalid_argument& e) {
        r.fail(e.what());
      }
    }
  }
  if (!r.done()) r.fail("trailing bytes");
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PreconditionError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(store, config_hash);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PreconditionError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("missing checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path.string());
}

}  // namespace nhg
