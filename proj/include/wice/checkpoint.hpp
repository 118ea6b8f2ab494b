#pragma once

// Checkpoint layout:
//
//   WICECKPT 1
//   architecture=wgcn
//   layer_dims=151,256,64,1
//   ... key=value lines ...
//   tensor gcn0.W 151 256
//   ...
//   blob <byte count>
//   <little-endian float64 data, column-major per tensor, manifest order>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wice/error.hpp"
#include "wice/gnn.hpp"
#include "wice/optimizer.hpp"
#include "wice/text.hpp"

namespace wice::gnn {

inline constexpr std::string_view kCheckpointMagic = "WICECKPT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams model;
  OptimizerConfig optimizer;
  OptimizerState optimizer_state;
  std::uint64_t epoch = 0;
  std::string config_hash;
  std::string provider_id;
  /// Free-form training bookkeeping (best validation loss, patience...).
  std::map<std::string, std::string> extra;
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::vector<std::size_t> parse_sizes(std::string_view s) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  for (auto part : text::split(s, ',')) out.push_back(text::parse_int<std::size_t>(part));
  return out;
}

inline void put_doubles(std::string& blob, const Matrix& m) {
  const auto n = static_cast<std::size_t>(m.size());
  const auto offset = blob.size();
  blob.resize(offset + n * sizeof(double));
  for (std::size_t i = 0; i < n; ++i) {
    auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(blob.data() + offset + i * sizeof(double), &bits, sizeof bits);
  }
}

inline void get_doubles(const std::string& blob, std::size_t& offset, Matrix& m) {
  const auto n = static_cast<std::size_t>(m.size());
  if (offset + n * sizeof(double) > blob.size()) {
    throw Error(ErrorCode::BadFormat, "checkpoint blob truncated");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, blob.data() + offset + i * sizeof(double), sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  offset += n * sizeof(double);
}

inline std::string_view readout_name(Readout r) { return r == Readout::ImageNode ? "image" : "mean"; }
inline std::string_view weight_mode_name(WeightMode w) {
  return w == WeightMode::Softmax ? "softmax" : "raw";
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const auto& c = ck.model.config;
  std::ostringstream head;
  head << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  head << "architecture=" << to_string(c.architecture) << '\n';
  head << "layer_dims=" << detail::join_sizes(ck.model.layer_dims()) << '\n';
  head << "input_dim=" << c.input_dim << '\n';
  head << "dim=" << c.embedding_dim << '\n';
  head << "hidden=" << detail::join_sizes(c.hidden) << '\n';
  head << "heads=" << c.heads << '\n';
  head << "depth=" << c.depth << '\n';
  head << "readout=" << detail::readout_name(c.readout) << '\n';
  head << "weight_mode=" << detail::weight_mode_name(c.weight_mode) << '\n';
  head << "seed=" << c.seed << '\n';
  head << "step=" << ck.optimizer_state.step << '\n';
  head << "epoch=" << ck.epoch << '\n';
  head << "optimizer=" << to_string(ck.optimizer.kind) << '\n';
  head << "learning_rate=" << text::format_double(ck.optimizer.learning_rate) << '\n';
  head << "beta1=" << text::format_double(ck.optimizer.beta1) << '\n';
  head << "beta2=" << text::format_double(ck.optimizer.beta2) << '\n';
  head << "epsilon=" << text::format_double(ck.optimizer.epsilon) << '\n';
  head << "weight_decay=" << text::format_double(ck.optimizer.weight_decay) << '\n';
  head << "config_hash=" << ck.config_hash << '\n';
  head << "provider_id=" << ck.provider_id << '\n';
  for (const auto& [k, v] : ck.extra) head << "x." << k << '=' << v << '\n';

  std::string blob;
  auto tensor = [&](const std::string& name, const Matrix& m) {
    head << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    detail::put_doubles(blob, m);
  };
  for (const auto& p : ck.model.params) tensor(p.name, p.value);
  const auto& st = ck.optimizer_state;
  for (std::size_t i = 0; i < st.first.size(); ++i) {
    tensor("adam.m." + ck.model.params[i].name, st.first[i]);
    tensor("adam.v." + ck.model.params[i].name, st.second[i]);
  }
  head << "blob " << blob.size() << '\n';
  out << head.str();
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line != std::string(kCheckpointMagic) + ' ' + std::to_string(kCheckpointVersion)) {
    throw Error(ErrorCode::BadFormat, "not a version-1 checkpoint");
  }
  Checkpoint ck;
  auto& c = ck.model.config;
  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
  };
  std::vector<Entry> manifest;
  std::size_t blob_size = 0;
  bool have_blob = false;
  while (std::getline(in, line)) {
    if (line.rfind("tensor ", 0) == 0) {
      const auto parts = text::split(line, ' ');
      if (parts.size() != 4) throw Error(ErrorCode::BadFormat, "checkpoint manifest: " + line);
      manifest.push_back({std::string(parts[1]), text::parse_int<Eigen::Index>(parts[2]),
                          text::parse_int<Eigen::Index>(parts[3])});
      continue;
    }
    if (line.rfind("blob ", 0) == 0) {
      blob_size = text::parse_int<std::size_t>(std::string_view(line).substr(5));
      have_blob = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::BadFormat, "checkpoint header: " + line);
    const std::string key = line.substr(0, eq);
    const std::string_view val = std::string_view(line).substr(eq + 1);
    if (key == "architecture") c.architecture = architecture_from_string(val);
    else if (key == "input_dim") c.input_dim = text::parse_int<std::size_t>(val);
    else if (key == "dim") c.embedding_dim = text::parse_int<std::size_t>(val);
    else if (key == "hidden") c.hidden = detail::parse_sizes(val);
    else if (key == "heads") c.heads = text::parse_int<std::size_t>(val);
    else if (key == "depth") c.depth = text::parse_int<std::size_t>(val);
    else if (key == "readout") c.readout = val == "mean" ? Readout::MeanPool : Readout::ImageNode;
    else if (key == "weight_mode") c.weight_mode = val == "raw" ? WeightMode::Raw : WeightMode::Softmax;
    else if (key == "seed") c.seed = text::parse_int<std::uint64_t>(val);
    else if (key == "step") ck.optimizer_state.step = text::parse_int<std::uint64_t>(val);
    else if (key == "epoch") ck.epoch = text::parse_int<std::uint64_t>(val);
    else if (key == "optimizer") ck.optimizer.kind = optimizer_from_string(val);
    else if (key == "learning_rate") ck.optimizer.learning_rate = text::parse_double(val);
    else if (key == "beta1") ck.optimizer.beta1 = text::parse_double(val);
    else if (key == "beta2") ck.optimizer.beta2 = text::parse_double(val);
    else if (key == "epsilon") ck.optimizer.epsilon = text::parse_double(val);
    else if (key == "weight_decay") ck.optimizer.weight_decay = text::parse_double(val);
    else if (key == "config_hash") ck.config_hash = std::string(val);
    else if (key == "provider_id") ck.provider_id = std::string(val);
    else if (key.rfind("x.", 0) == 0) ck.extra[key.substr(2)] = std::string(val);
    // layer_dims is derived; unknown keys are ignored for forward compatibility.
  }
  if (!have_blob) throw Error(ErrorCode::BadFormat, "checkpoint has no blob");
  std::string blob(blob_size, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_size));
  if (static_cast<std::size_t>(in.gcount()) != blob_size) {
    throw Error(ErrorCode::BadFormat, "checkpoint blob truncated");
  }

  // Rebuild the parameter list from the config so names and order are the
  // canonical ones, then fill values from the manifest.
  ModelParams fresh = init_params(c);
  std::map<std::string, Matrix> tensors;
  std::size_t offset = 0;
  for (const auto& e : manifest) {
    Matrix m(e.rows, e.cols);
    detail::get_doubles(blob, offset, m);
    tensors.emplace(e.name, std::move(m));
  }
  if (offset != blob.size()) throw Error(ErrorCode::BadFormat, "checkpoint blob has trailing bytes");
  for (auto& p : fresh.params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw Error(ErrorCode::BadFormat, "checkpoint lacks tensor " + p.name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint tensor " + p.name);
    }
    p.value = it->second;
  }
  ck.model = std::move(fresh);
  if (tensors.count("adam.m." + ck.model.params.front().name)) {
    for (const auto& p : ck.model.params) {
      ck.optimizer_state.first.push_back(tensors.at("adam.m." + p.name));
      ck.optimizer_state.second.push_back(tensors.at("adam.v." + p.name));
    }
  }
  return ck;
}

inline std::string checkpoint_bytes(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ck);
  return out.str();
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingPrerequisite, "checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace wice::gnn
