#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dair/common.hpp"
#include "dair/config.hpp"
#include "dair/model.hpp"
#include "dair/optim.hpp"
#include "dair/rng.hpp"
#include "dair/tensor.hpp"

// Little-endian binary checkpoint:
//   magic "DAIR", u32 version, u32 flags (bit0: optimizer state),
//   u64 step, u32-length-prefixed config text,
//   u32 tensor count, then per tensor: u16 name length + name, u8 rank,
//   rank x u64 dims, raw f32 values; the optional Adam first/second moment
//   sections repeat the tensor-list encoding; finally a u64-count-prefixed
//   list of u64 RNG state words. Serialization is canonical, so
//   save -> load -> save reproduces the file byte for byte.

namespace dair {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

struct Checkpoint {
  uint32_t version = 1;
  ModelConfig config;
  uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  bool has_adam = false;
  std::vector<std::pair<std::string, Tensor<float>>> adam_m;
  std::vector<std::pair<std::string, Tensor<float>>> adam_v;
  std::vector<uint64_t> rng_state;
};

namespace detail {

constexpr char kCkptMagic[4] = {'D', 'A', 'I', 'R'};

struct ByteWriter {
  std::string buf;

  void bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u16(uint16_t v) { bytes(&v, 2); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
};

struct ByteReader {
  const std::string& buf;
  std::size_t off = 0;

  void bytes(void* p, std::size_t n) {
    if (off + n > buf.size())
      throw FormatError("checkpoint truncated", static_cast<int64_t>(off));
    std::memcpy(p, buf.data() + off, n);
    off += n;
  }
  uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
  uint16_t u16() { uint16_t v; bytes(&v, 2); return v; }
  uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
  uint64_t u64() { uint64_t v; bytes(&v, 8); return v; }
};

inline void write_tensor_list(
    ByteWriter& w, const std::vector<std::pair<std::string, Tensor<float>>>& list) {
  w.u32(static_cast<uint32_t>(list.size()));
  for (const auto& [name, t] : list) {
    if (name.size() > 0xffff) throw StructuralError("tensor name too long");
    w.u16(static_cast<uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.u64(static_cast<uint64_t>(t.dim(i)));
    w.bytes(t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()));
  }
}

inline std::vector<std::pair<std::string, Tensor<float>>> read_tensor_list(
    ByteReader& r) {
  std::vector<std::pair<std::string, Tensor<float>>> list;
  const uint32_t count = r.u32();
  list.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const uint8_t rank = r.u8();
    std::vector<int64_t> dims(rank);
    uint64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      dims[d] = static_cast<int64_t>(r.u64());
      if (dims[d] < 0 || (dims[d] > 0 && numel > (uint64_t(1) << 32) / uint64_t(dims[d])))
        throw FormatError("implausible tensor extent in checkpoint",
                          static_cast<int64_t>(r.off));
      numel *= static_cast<uint64_t>(dims[d]);
    }
    Tensor<float> t(dims);
    r.bytes(t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()));
    list.emplace_back(std::move(name), std::move(t));
  }
  return list;
}

// The config must describe exactly the tensors the checkpoint carries.
inline void validate_against_config(const Checkpoint& c) {
  Rng rng(0);
  Model<float> expect = build_model<float>(c.config, rng);
  if (expect.params.size() != c.tensors.size())
    throw FormatError("checkpoint declares " + std::to_string(c.tensors.size()) +
                      " tensors but its config implies " +
                      std::to_string(expect.params.size()));
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    const auto& [name, t] = c.tensors[i];
    if (name != expect.params[i].name)
      throw FormatError("checkpoint tensor '" + name + "' where config implies '" +
                        expect.params[i].name + "'");
    if (!t.same_shape(expect.params[i].var.value()))
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_string(t.shape()) + ", config implies " +
                        shape_string(expect.params[i].var.value().shape()));
  }
  auto check_moments = [&](const std::vector<std::pair<std::string, Tensor<float>>>& mv,
                           const char* what) {
    if (mv.size() != c.tensors.size())
      throw FormatError(std::string("checkpoint ") + what +
                        " count does not match parameter count");
    for (std::size_t i = 0; i < mv.size(); ++i)
      if (mv[i].first != c.tensors[i].first ||
          !mv[i].second.same_shape(c.tensors[i].second))
        throw FormatError(std::string("checkpoint ") + what + " entry '" +
                          mv[i].first + "' does not mirror its parameter");
  };
  if (c.has_adam) {
    check_moments(c.adam_m, "Adam m");
    check_moments(c.adam_v, "Adam v");
  }
}

}  // namespace detail

inline std::string checkpoint_serialize(const Checkpoint& c) {
  detail::ByteWriter w;
  w.bytes(detail::kCkptMagic, 4);
  w.u32(c.version);
  w.u32(c.has_adam ? 1u : 0u);
  w.u64(c.step);
  const std::string cfg = serialize_key_values(c.config.to_key_values());
  w.u32(static_cast<uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());
  detail::write_tensor_list(w, c.tensors);
  if (c.has_adam) {
    detail::write_tensor_list(w, c.adam_m);
    detail::write_tensor_list(w, c.adam_v);
  }
  w.u64(c.rng_state.size());
  for (uint64_t word : c.rng_state) w.u64(word);
  return std::move(w.buf);
}

inline Checkpoint checkpoint_parse(const std::string& bytes) {
  detail::ByteReader r{bytes};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw FormatError("not a checkpoint file (bad magic)", 0);
  Checkpoint c;
  c.version = r.u32();
  if (c.version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(c.version), 4);
  const uint32_t flags = r.u32();
  c.has_adam = (flags & 1u) != 0;
  c.step = r.u64();
  const uint32_t cfg_len = r.u32();
  std::string cfg(cfg_len, '\0');
  r.bytes(cfg.data(), cfg_len);
  c.config = ModelConfig::from_key_values(parse_key_values(cfg));
  c.tensors = detail::read_tensor_list(r);
  if (c.has_adam) {
    c.adam_m = detail::read_tensor_list(r);
    c.adam_v = detail::read_tensor_list(r);
  }
  const uint64_t words = r.u64();
  c.rng_state.resize(words);
  for (uint64_t i = 0; i < words; ++i) c.rng_state[i] = r.u64();
  if (r.off != bytes.size())
    throw FormatError("trailing bytes after checkpoint payload",
                      static_cast<int64_t>(r.off));
  detail::validate_against_config(c);
  return c;
}

inline void checkpoint_save(const Checkpoint& c, const std::string& path) {
  const std::string bytes = checkpoint_serialize(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write while saving checkpoint: " + path);
}

inline Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return checkpoint_parse(bytes);
}

inline Checkpoint make_checkpoint(const Model<float>& model,
                                  const AdamState<float>* adam, uint64_t step,
                                  const Rng& rng) {
  Checkpoint c;
  c.config = model.config;
  c.step = step;
  c.tensors.reserve(model.params.size());
  for (const auto& p : model.params) c.tensors.emplace_back(p.name, p.var.value());
  if (adam) {
    if (adam->m.size() != model.params.size())
      throw StructuralError("optimizer state does not match model parameters");
    c.has_adam = true;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      c.adam_m.emplace_back(model.params[i].name, adam->m[i]);
      c.adam_v.emplace_back(model.params[i].name, adam->v[i]);
    }
  }
  c.rng_state = rng.state_words();
  return c;
}

// Rebuilds the model around the stored parameter values.
inline Model<float> model_from_checkpoint(const Checkpoint& c) {
  Rng rng(0);
  Model<float> m = build_model<float>(c.config, rng);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    m.params[i].var.mutable_value() = c.tensors[i].second;
  return m;
}

inline AdamState<float> adam_from_checkpoint(const Checkpoint& c) {
  if (!c.has_adam) throw StructuralError("checkpoint carries no optimizer state");
  AdamState<float> st;
  st.t = static_cast<int64_t>(c.step);
  for (const auto& [name, t] : c.adam_m) st.m.push_back(t);
  for (const auto& [name, t] : c.adam_v) st.v.push_back(t);
  return st;
}

}  // namespace dair
