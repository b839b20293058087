#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flab/core/binary_io.hpp"
#include "flab/core/error.hpp"
#include "flab/core/files.hpp"
#include "flab/nn/model.hpp"

namespace flab::nn {

inline constexpr std::string_view kCheckpointMagic = "FLAB-CKPT v1";

namespace detail {

inline std::vector<std::size_t> parse_args(const std::string& tok, std::size_t open) {
  std::vector<std::size_t> out;
  std::size_t i = open + 1;
  while (i < tok.size() && tok[i] != ')') {
    while (i < tok.size() && !std::isdigit(static_cast<unsigned char>(tok[i])) && tok[i] != ')') {
      if (tok.compare(i, 6, "nobias") == 0) {
        out.push_back(SIZE_MAX);
        i += 6;
      } else {
        ++i;
      }
    }
    if (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) {
      std::size_t v = 0;
      while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) v = v * 10 + std::size_t(tok[i++] - '0');
      out.push_back(v);
    }
  }
  return out;
}

inline Layer parse_layer(const std::string& tok) {
  const auto open = tok.find('(');
  const std::string name = tok.substr(0, open);
  const auto args = open == std::string::npos ? std::vector<std::size_t>{} : parse_args(tok, open);
  if (name == "Linear" && (args.size() == 2 || (args.size() == 3 && args[2] == SIZE_MAX)))
    return Linear(args[0], args[1], args.size() == 2);
  if (name == "Conv2d" && args.size() == 5) return Conv2d(args[0], args[1], args[2], args[3], args[4]);
  if (name == "AvgPool2d" && args.size() == 1) return AvgPool2d{args[0]};
  if (name == "ReLU") return ReLU{};
  if (name == "Sigmoid") return Sigmoid{};
  if (name == "Tanh") return Tanh{};
  if (name == "Flatten") return Flatten{};
  throw ParseError("unknown layer '" + tok + "' in checkpoint topology", 0);
}

}  // namespace detail

/// Rebuilds an uninitialized model from its topology string.
inline Model model_from_topology(const std::string& topo) {
  std::vector<Layer> layers;
  std::size_t tap = 0;
  bool have_tap = false;
  std::size_t start = 0;
  while (start <= topo.size()) {
    auto end = topo.find(';', start);
    if (end == std::string::npos) end = topo.size();
    const std::string tok = topo.substr(start, end - start);
    if (tok.rfind("tap=", 0) == 0) {
      tap = std::stoul(tok.substr(4));
      have_tap = true;
    } else if (!tok.empty()) {
      layers.push_back(detail::parse_layer(tok));
    }
    start = end + 1;
  }
  if (!have_tap) throw ParseError("checkpoint topology has no feature tap", 0);
  return Model(std::move(layers), tap);
}

/// Layout: magic line, topology line, SHA-256 of the topology line, then a u8 scalar width
/// (4 or 8), a u64 tensor count and per tensor a u64 element count followed by its values,
/// all little-endian.
inline std::string serialize_checkpoint(const Model& model) {
  const std::string topo = model.topology();
  io::ByteWriter w;
  w.bytes(std::string(kCheckpointMagic) + "\n" + topo + "\n" + files::sha256_hex(topo) + "\n");
  w.u8(std::uint8_t(sizeof(Real)));
  const auto params = model.parameters();
  w.u64(params.size());
  for (const Tensor* t : params) {
    w.u64(t->size());
    for (Real v : t->values()) {
      if constexpr (sizeof(Real) == 8)
        w.f64(double(v));
      else
        w.f32(float(v));
    }
  }
  return w.take();
}

inline Model deserialize_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.line() != kCheckpointMagic) throw ParseError("not a FLAB-CKPT v1 file", 0);
  const std::string topo = r.line();
  const auto hash_at = r.offset();
  if (r.line() != files::sha256_hex(topo)) throw ParseError("topology hash mismatch", hash_at);
  const auto width = r.u8();
  if (width != 4 && width != 8) throw ParseError("unsupported scalar width " + std::to_string(width), r.offset() - 1);
  Model model = model_from_topology(topo);
  auto params = model.parameters();
  const auto count = r.u64();
  if (count != params.size())
    throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, topology needs " +
                         std::to_string(params.size()),
                     r.offset());
  for (Tensor* t : params) {
    const auto n = r.u64();
    if (n != t->size()) throw ParseError("tensor size mismatch", r.offset());
    for (auto& v : t->values()) v = static_cast<Real>(width == 8 ? r.f64() : double(r.f32()));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after checkpoint", r.offset());
  return model;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  files::write_atomic(path, serialize_checkpoint(model));
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(files::read_all(path));
}

}  // namespace flab::nn
