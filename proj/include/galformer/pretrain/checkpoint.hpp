#pragma once

// Checkpoint layout: "GALCKPT1", u32 LE header length, JSON header, payload.
// The header maps every tensor name to {dtype, shape, offset}; offsets count
// bytes from the start of the payload. Adam moments ride along as
// "adam.m/<name>" and "adam.v/<name>".

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "galformer/errors.hpp"
#include "galformer/numcore/numcore.hpp"

namespace galformer::pretrain {

using json = nlohmann::json;

inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'L', 'C', 'K', 'P', 'T', '1'};
inline const std::string kAdamM = "adam.m/";
inline const std::string kAdamV = "adam.v/";

template <std::floating_point T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  Bits b;
  std::memcpy(&b, &v, sizeof(U));
  for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(static_cast<char>((b >> (8 * k)) & 0xFF));
}

template <class U>
U get_le(const unsigned char* p) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  Bits b = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) b |= static_cast<Bits>(p[k]) << (8 * k);
  U v;
  std::memcpy(&v, &b, sizeof(U));
  return v;
}

}  // namespace detail

template <std::floating_point T>
struct Checkpoint {
  nc::ParamStore<T> store;
  json header;  // everything except the tensor table
};

/// Writes to a sibling temp file and renames, so readers never see half a file.
template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const nc::ParamStore<T>& store, json extra = json::object()) {
  std::string payload;
  json tensors = json::object();
  json adam_steps = json::object();
  auto emit = [&](const std::string& name, std::size_t rows, std::size_t cols, std::span<const T> values) {
    tensors[name] = {{"dtype", dtype_name<T>()}, {"shape", {rows, cols}}, {"offset", payload.size()}};
    for (T v : values) detail::put_le(payload, v);
  };
  for (const auto& [name, t] : store) emit(name, t.rows(), t.cols(), t.data());
  for (const auto& [name, slot] : store.optimizer_state()) {
    if (slot.m.empty()) continue;
    const auto& p = store.get(name);
    emit(kAdamM + name, p.rows(), p.cols(), slot.m);
    emit(kAdamV + name, p.rows(), p.cols(), slot.v);
    adam_steps[name] = slot.steps;
  }
  json header = std::move(extra);
  header["format"] = "GALCKPT1";
  header["version"] = 1;
  header["tensors"] = std::move(tensors);
  header["adam_steps"] = std::move(adam_steps);
  const std::string head = header.dump();

  std::string blob(kCheckpointMagic, 8);
  detail::put_le(blob, static_cast<std::uint32_t>(head.size()));
  blob += head;
  blob += payload;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Values are converted to T when the file was written at the other precision.
template <std::floating_point T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  const auto hlen = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (12 + static_cast<std::size_t>(hlen) > bytes.size()) throw CheckpointError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  const unsigned char* payload = bytes.data() + 12 + hlen;
  const std::size_t payload_size = bytes.size() - 12 - hlen;

  Checkpoint<T> ck;
  std::map<std::string, std::pair<std::vector<T>, std::size_t>> moments;  // name -> values, rows
  try {
    for (const auto& [name, info] : header.at("tensors").items()) {
      const auto dtype = info.at("dtype").template get<std::string>();
      const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
      if (!width) throw CheckpointError(name + ": unsupported dtype " + dtype);
      const auto rows = info.at("shape").at(0).template get<std::size_t>();
      const auto cols = info.at("shape").at(1).template get<std::size_t>();
      const auto off = info.at("offset").template get<std::size_t>();
      const std::size_t n = rows * cols;
      if (off > payload_size || n * width > payload_size - off)
        throw CheckpointError(path.string() + ": tensor '" + name + "' runs past the payload");
      std::vector<T> v(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto* p = payload + off + k * width;
        v[k] = width == 4 ? static_cast<T>(detail::get_le<float>(p)) : static_cast<T>(detail::get_le<double>(p));
      }
      if (name.rfind(kAdamM, 0) == 0 || name.rfind(kAdamV, 0) == 0)
        moments[name] = std::make_pair(std::move(v), rows);
      else
        ck.store.put(name, nc::Tensor<T>::from(rows, cols, std::move(v), true));
    }
    auto& state = ck.store.optimizer_state();
    for (const auto& [name, steps] : header.at("adam_steps").items()) {
      auto m = moments.find(kAdamM + name);
      auto v = moments.find(kAdamV + name);
      if (m == moments.end() || v == moments.end() || !ck.store.contains(name))
        throw CheckpointError(path.string() + ": incomplete optimizer state for '" + name + "'");
      auto& slot = state[name];
      slot.m = std::move(m->second.first);
      slot.v = std::move(v->second.first);
      slot.steps = steps.template get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad tensor table: " + e.what());
  }
  header.erase("tensors");
  header.erase("adam_steps");
  ck.header = std::move(header);
  return ck;
}

}  // namespace galformer::pretrain
