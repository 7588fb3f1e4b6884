// Copyright 2026 The MIRL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Checkpoint byte layout, little-endian:
//   "MIRLCKPT" | u32 version | u32 len + config text | u64 step
//   | u32 count, then count x (u32 len + role, u32 len + rng state)
//   | u32 count, then count records:
//       u32 len + name | u8 dtype (0 f32, 1 f64) | u32 ndim | ndim x u64 dim
//       | u64 nbytes | data | u32 crc32 of everything in the record before it

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "mirl/core/parameter.hpp"

namespace mirl {

inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'R', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::uint8_t dtype = 1;
  Shape shape;
  std::vector<unsigned char> bytes;

  template <class T>
  std::vector<T> as() const {
    if (dtype == dtype_code<T>()) {
      std::vector<T> out(bytes.size() / sizeof(T));
      std::memcpy(out.data(), bytes.data(), bytes.size());
      return out;
    }
    // Cross-precision load converts element-wise.
    return dtype == 0 ? convert_<float, T>() : convert_<double, T>();
  }

  template <class S, class T>
  std::vector<T> convert_() const {
    std::vector<S> raw(bytes.size() / sizeof(S));
    std::memcpy(raw.data(), bytes.data(), bytes.size());
    return std::vector<T>(raw.begin(), raw.end());
  }

  template <class T>
  static constexpr std::uint8_t dtype_code() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? 0 : 1;
  }

  template <class T>
  static TensorRecord from(const std::string& name, const Shape& shape, const std::vector<T>& v) {
    TensorRecord r{name, dtype_code<T>(), shape, std::vector<unsigned char>(v.size() * sizeof(T))};
    std::memcpy(r.bytes.data(), v.data(), r.bytes.size());
    return r;
  }
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::uint64_t step = 0;
  std::map<std::string, std::string> rng;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  template <class U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(U));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  void put_bytes(const std::vector<unsigned char>& b) { buf.insert(buf.end(), b.begin(), b.end()); }
  std::vector<unsigned char> buf;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& b, std::string path) : b_(b), path_(std::move(path)) {}
  template <class U>
  U get() {
    U v;
    need(sizeof(U));
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<unsigned char> get_bytes(std::size_t n) {
    need(n);
    std::vector<unsigned char> v(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  std::size_t pos() const { return pos_; }
  const unsigned char* at(std::size_t p) const { return b_.data() + p; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  const std::vector<unsigned char>& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::ByteWriter w;
  w.buf.insert(w.buf.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  w.put(ck.version);
  w.put_string(ck.config);
  w.put(ck.step);
  w.put(static_cast<std::uint32_t>(ck.rng.size()));
  for (const auto& [role, state] : ck.rng) {
    w.put_string(role);
    w.put_string(state);
  }
  w.put(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    detail::ByteWriter r;
    r.put_string(t.name);
    r.put(t.dtype);
    r.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) r.put(static_cast<std::uint64_t>(d));
    r.put(static_cast<std::uint64_t>(t.bytes.size()));
    r.put_bytes(t.bytes);
    r.put(detail::crc(r.buf.data(), r.buf.size()));
    w.put_bytes(r.buf);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw CheckpointError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r(buf, path);
  auto magic = r.get_bytes(sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointError(path + ": not a checkpoint (bad magic)");
  }
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported version " + std::to_string(ck.version));
  }
  ck.config = r.get_string();
  ck.step = r.get<std::uint64_t>();
  const auto n_rng = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_rng; ++i) {
    auto role = r.get_string();
    ck.rng[role] = r.get_string();
  }
  const auto n_t = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_t; ++i) {
    const std::size_t start = r.pos();
    TensorRecord t;
    t.name = r.get_string();
    t.dtype = r.get<std::uint8_t>();
    if (t.dtype > 1) throw CheckpointError(path + ": tensor " + t.name + " has unknown dtype");
    const auto nd = r.get<std::uint32_t>();
    if (nd > 8) throw CheckpointError(path + ": tensor " + t.name + " has corrupt rank");
    for (std::uint32_t d = 0; d < nd; ++d) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    const auto nbytes = r.get<std::uint64_t>();
    const std::size_t elem = t.dtype == 0 ? 4 : 8;
    if (nbytes != shape_numel(t.shape) * elem) {
      throw CheckpointError(path + ": tensor " + t.name + " byte count disagrees with shape");
    }
    t.bytes = r.get_bytes(static_cast<std::size_t>(nbytes));
    const std::uint32_t expect = detail::crc(r.at(start), r.pos() - start);
    if (r.get<std::uint32_t>() != expect) {
      throw CheckpointError(path + ": checksum mismatch in tensor " + t.name);
    }
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError(path + ": trailing bytes after last record");
  return ck;
}

/// Appends every parameter of `store` as a record.
template <class T>
void append_store(Checkpoint& ck, const ParameterStore<T>& store, const std::string& prefix = {}) {
  for (const auto& p : store) {
    ck.tensors.push_back(TensorRecord::from<T>(prefix + p.name, p.tensor.shape(), p.tensor.values()));
  }
}

/// Overwrites every parameter of `store` from records named prefix+name.
/// Throws naming the first parameter that is missing or mismatched.
template <class T>
void restore_store(const Checkpoint& ck, ParameterStore<T>& store, const std::string& prefix = {}) {
  for (auto& p : store) {
    const auto* rec = ck.find(prefix + p.name);
    if (!rec) throw CheckpointError("checkpoint has no tensor " + prefix + p.name);
    if (rec->shape != p.tensor.shape()) {
      throw CheckpointError("tensor " + prefix + p.name + " has shape " + shape_str(rec->shape) +
                            " in checkpoint but " + shape_str(p.tensor.shape()) + " in model");
    }
    auto v = rec->template as<T>();
    std::copy(v.begin(), v.end(), p.tensor.mutable_data().begin());
  }
}

/// Builds a store holding exactly the records whose names start with `prefix`.
template <class T>
ParameterStore<T> store_from_checkpoint(const Checkpoint& ck, const std::string& prefix = {},
                                        bool trainable = true) {
  ParameterStore<T> store;
  for (const auto& rec : ck.tensors) {
    if (!std::string_view(rec.name).starts_with(prefix)) continue;
    store.insert(rec.name.substr(prefix.size()), Tensor<T>(rec.shape, rec.template as<T>(), trainable),
                 trainable ? Init::TruncNormal : Init::Frozen);
  }
  return store;
}

}  // namespace mirl
