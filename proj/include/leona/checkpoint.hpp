#pragma once

// Checkpoint container:
//   "LEONACKP" | u32 version | u64 header length | JSON header | float64 LE payload
// The header records model config, free-form metadata and a tensor index
// {name, shape, offset}. Values are stored as raw doubles, so a round trip
// is bit-exact.

#include "leona/jsonl.hpp"
#include "leona/network.hpp"

#include <bit>
#include <cstring>
#include <map>

namespace leona {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");

inline constexpr char kCheckpointMagic[8] = {'L', 'E', 'O', 'N', 'A', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  json meta = json::object();
  std::map<std::string, Tensor> tensors;
};

namespace detail {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  json header;
  header["meta"] = ck.meta;
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    index.push_back(json{{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [_, t] : ck.tensors)
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  return out;
}

inline Checkpoint deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError("not a checkpoint file");
  std::size_t pos = sizeof(kCheckpointMagic);
  const auto version = detail::take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw CheckpointError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  pos += header_len;
  const std::size_t payload = pos;
  const std::size_t doubles = (bytes.size() - payload) / sizeof(double);

  Checkpoint ck;
  ck.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    if (offset + t.size() > doubles) throw CheckpointError("checkpoint payload truncated");
    std::memcpy(t.data(), bytes.data() + payload + offset * sizeof(double), t.size() * sizeof(double));
    ck.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

/// Model parameters under "param/<name>", config under meta["model"].
inline Checkpoint model_checkpoint(const LeonaModel& model, json meta = json::object()) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  ck.meta["model"] = model.config().to_json();
  for (const auto& [name, p] : model.params()) ck.tensors.emplace("param/" + name, p.value);
  return ck;
}

inline LeonaModel model_from(const Checkpoint& ck) {
  if (!ck.meta.contains("model")) throw CheckpointError("checkpoint has no model config");
  LeonaModel model(ModelConfig::from_json(ck.meta.at("model")));
  for (auto& [name, p] : model.params()) {
    auto it = ck.tensors.find("param/" + name);
    if (it == ck.tensors.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    if (it->second.shape() != p.value.shape())
      throw CheckpointError("parameter " + name + " has shape " + to_string(it->second.shape()) +
                            ", model expects " + to_string(p.value.shape()));
    p.value = it->second;
  }
  return model;
}

}  // namespace leona
