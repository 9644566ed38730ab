#include "pico/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>

#include "pico/digest.hpp"
#include "pico/errors.hpp"

namespace pico {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::string string() {
    auto b = take(u32());
    return {b.begin(), b.end()};
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

ParamList frozen_parameters(const Model& model) {
  return model.system_encoder.frozen ? model.system_parameters() : ParamList{};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const std::string& rng_state,
                                               const nlohmann::ordered_json& run_meta) {
  std::vector<std::uint8_t> out{'P', 'I', 'C', 'O'};
  put_u32(out, kCheckpointVersion);
  const ParamList params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) append_tensor_record(out, p.name, p.tensor);
  const ParamList frozen = frozen_parameters(model);
  put_u32(out, static_cast<std::uint32_t>(frozen.size()));
  for (const auto& p : frozen) put_string(out, p.name);
  put_string(out, parameter_digest(frozen));
  put_u32(out, static_cast<std::uint32_t>(model.vocab.size()));
  for (const auto& s : model.vocab.symbols()) put_string(out, s);
  put_string(out, rng_state);
  nlohmann::ordered_json meta;
  meta["model"] = to_json(model.config);
  meta["graph"] = graph_to_json(model.graph);
  meta["run"] = run_meta;
  put_string(out, meta.dump());
  return out;
}

LoadedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), "PICO")) throw CheckpointError("checkpoint: bad magic");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

  struct Record {
    Shape shape;
    std::vector<double> values;
  };
  std::map<std::string, Record> records;
  std::vector<std::string> order;
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.string();
    Record r;
    const std::uint32_t rank = in.u32();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(in.u64());
      n *= r.shape.back();
    }
    r.values.resize(n);
    for (auto& v : r.values) v = std::bit_cast<double>(in.u64());
    if (!records.emplace(name, std::move(r)).second) throw CheckpointError("checkpoint: duplicate tensor " + name);
    order.push_back(std::move(name));
  }
  std::vector<std::string> frozen_names(in.u32());
  for (auto& n : frozen_names) n = in.string();
  const std::string stored_hash = in.string();
  std::vector<std::string> symbols(in.u32());
  for (auto& s : symbols) s = in.string();
  LoadedCheckpoint out;
  out.rng_state = in.string();
  nlohmann::ordered_json meta;
  try {
    meta = nlohmann::ordered_json::parse(in.string());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad metadata, ") + e.what());
  }
  if (!in.done()) throw CheckpointError("checkpoint: trailing bytes");

  ModelConfig config;
  SecurityGraph graph;
  try {
    config = model_config_from_json(meta.at("model"));
    graph = graph_from_json(meta.at("graph"), 0, config.d_kg);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  out.model = Model::zeros(config, std::move(graph));
  try {
    if (Vocab::from_symbols(symbols).symbols() != out.model.vocab.symbols())
      throw CheckpointError("checkpoint: vocabulary does not match the model config");
  } catch (const VocabularyError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }

  const ParamList params = out.model.parameters();
  if (params.size() != records.size())
    throw CheckpointError("checkpoint: " + std::to_string(records.size()) + " tensors stored, model has " +
                          std::to_string(params.size()));
  for (const auto& p : params) {
    auto it = records.find(p.name);
    if (it == records.end()) throw CheckpointError("checkpoint: missing tensor " + p.name);
    if (it->second.shape != p.tensor.shape())
      throw CheckpointError("checkpoint: tensor " + p.name + " has shape " + shape_string(it->second.shape) +
                            ", expected " + shape_string(p.tensor.shape()));
    auto dst = Tensor(p.tensor).values();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }

  const ParamList system = out.model.system_parameters();
  if (!frozen_names.empty()) {
    if (frozen_names.size() != system.size())
      throw CheckpointError("checkpoint: frozen manifest does not cover the system encoder");
    for (std::size_t i = 0; i < system.size(); ++i)
      if (frozen_names[i] != system[i].name)
        throw CheckpointError("checkpoint: unexpected frozen tensor " + frozen_names[i]);
    freeze(out.model.system_encoder);
  }
  out.frozen_hash = parameter_digest(frozen_parameters(out.model));
  if (out.frozen_hash != stored_hash)
    throw CheckpointError("checkpoint: frozen branch hash mismatch (stored " + stored_hash + ", computed " +
                          out.frozen_hash + ")");
  out.run_meta = meta.value("run", nlohmann::ordered_json::object());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& rng_state,
                     const nlohmann::ordered_json& run_meta) {
  const auto bytes = serialize_checkpoint(model, rng_state, run_meta);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace pico
