#include "langsamp/checkpoint.hpp"

#include <array>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace langsamp {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::span<const unsigned char> byte_span(const std::string& s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

// Expected (rows, cols) for every tensor name in a config's layout.
std::unordered_map<std::string, std::pair<long, long>> expected_shapes(const ModelConfig& cfg) {
  const long d = cfg.hidden_dim;
  const long f = cfg.ffn_dim;
  std::unordered_map<std::string, std::pair<long, long>> shapes;
  shapes["tok_emb"] = {cfg.vocab_size, d};
  shapes["pos_emb"] = {cfg.max_seq_len, d};
  for (int l = 0; l < cfg.num_layers; ++l) {
    shapes[layer_tensor_name(l, "ln1_g")] = {1, d};
    shapes[layer_tensor_name(l, "ln1_b")] = {1, d};
    shapes[layer_tensor_name(l, "wq")] = {d, d};
    shapes[layer_tensor_name(l, "bq")] = {1, d};
    shapes[layer_tensor_name(l, "wk")] = {d, d};
    shapes[layer_tensor_name(l, "wv")] = {d, d};
    shapes[layer_tensor_name(l, "bv")] = {1, d};
    shapes[layer_tensor_name(l, "wo")] = {d, d};
    shapes[layer_tensor_name(l, "bo")] = {1, d};
    shapes[layer_tensor_name(l, "ln2_g")] = {1, d};
    shapes[layer_tensor_name(l, "ln2_b")] = {1, d};
    shapes[layer_tensor_name(l, "ffn_w1")] = {d, f};
    shapes[layer_tensor_name(l, "ffn_b1")] = {1, f};
    shapes[layer_tensor_name(l, "ffn_w2")] = {f, d};
    shapes[layer_tensor_name(l, "ffn_b2")] = {1, d};
  }
  shapes["ln_f_g"] = {1, d};
  shapes["ln_f_b"] = {1, d};
  if (cfg.use_lang_emb) shapes["lang_emb"] = {cfg.num_languages, d};
  if (cfg.use_script_emb) shapes["script_emb"] = {cfg.num_scripts, d};
  if (!cfg.tie_head) shapes["head_w"] = {d, cfg.vocab_size};
  shapes["head_b"] = {1, cfg.vocab_size};
  return shapes;
}

}  // namespace

std::uint32_t crc32(std::span<const unsigned char> data) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char b : data) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = file.config;
  header["meta"] = file.meta;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : file.tensors) {
    tensors.push_back({{"name", t.name},
                       {"dtype", t.dtype},
                       {"shape", {t.rows, t.cols}},
                       {"offset", offset},
                       {"crc32", crc32(byte_span(t.bytes))}});
    offset += t.bytes.size();
  }
  const std::string header_text = header.dump();

  std::string blob;
  blob.reserve(16 + header_text.size() + offset);
  blob.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(blob, header_text.size());
  blob.append(header_text);
  for (const auto& t : file.tensors) blob.append(t.bytes);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < 16) throw IoError("truncated checkpoint header: " + path.string());
  if (std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw IoError("bad checkpoint magic (expected LSMP0001): " + path.string());
  const std::uint64_t header_len = get_u64(blob.data() + 8);
  if (16 + header_len > blob.size())
    throw IoError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }

  const std::size_t payload_start = 16 + static_cast<std::size_t>(header_len);
  const std::size_t payload_size = blob.size() - payload_start;

  CheckpointFile file;
  try {
    file.config = header.at("config");
    file.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      RawTensor t;
      t.name = entry.at("name").get<std::string>();
      t.dtype = entry.at("dtype").get<std::string>();
      if (t.dtype != "f32" && t.dtype != "f64")
        throw IoError("tensor " + t.name + " has unsupported dtype " + t.dtype);
      t.rows = entry.at("shape").at(0).get<long>();
      t.cols = entry.at("shape").at(1).get<long>();
      if (t.rows < 0 || t.cols < 0) throw IoError("tensor " + t.name + " has negative shape");
      const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t word = t.dtype == "f32" ? 4 : 8;
      const std::uint64_t len =
          word * static_cast<std::uint64_t>(t.rows) * static_cast<std::uint64_t>(t.cols);
      if (offset + len > payload_size)
        throw IoError("truncated payload for tensor " + t.name + " in " + path.string());
      t.bytes = blob.substr(payload_start + offset, len);
      const std::uint32_t want = entry.at("crc32").get<std::uint32_t>();
      if (crc32(byte_span(t.bytes)) != want)
        throw IoError("checksum mismatch for tensor " + t.name + " in " + path.string());
      file.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return file;
}

CheckpointFile make_model_checkpoint(const ModelParams<float>& params, nlohmann::json meta,
                                     const AdamWState<float>* optim) {
  CheckpointFile file;
  file.config = params.config.to_json();
  file.meta = std::move(meta);
  for (std::size_t i = 0; i < params.names.size(); ++i)
    file.tensors.push_back(to_raw<float>("model/" + params.names[i], params.values[i]));
  if (optim != nullptr) {
    if (optim->m.size() != params.values.size() || optim->v.size() != params.values.size())
      throw ShapeError("checkpoint: optimizer state does not match parameter list");
    for (std::size_t i = 0; i < params.names.size(); ++i)
      file.tensors.push_back(to_raw<float>("optim/m/" + params.names[i], optim->m[i]));
    for (std::size_t i = 0; i < params.names.size(); ++i)
      file.tensors.push_back(to_raw<float>("optim/v/" + params.names[i], optim->v[i]));
    file.meta["optim_step_count"] = optim->step_count;
  }
  return file;
}

ModelCheckpoint load_model_checkpoint(const CheckpointFile& file) {
  ModelCheckpoint out;
  const ModelConfig config = ModelConfig::from_json(file.config);
  const auto shapes = expected_shapes(config);

  std::unordered_map<std::string, const RawTensor*> model_tensors;
  std::unordered_map<std::string, const RawTensor*> optim_m, optim_v;
  for (const auto& t : file.tensors) {
    if (t.name.rfind("model/", 0) == 0)
      model_tensors.emplace(t.name.substr(6), &t);
    else if (t.name.rfind("optim/m/", 0) == 0)
      optim_m.emplace(t.name.substr(8), &t);
    else if (t.name.rfind("optim/v/", 0) == 0)
      optim_v.emplace(t.name.substr(8), &t);
    else
      throw IoError("unknown tensor in checkpoint: " + t.name);
  }
  for (const auto& [name, tensor] : model_tensors)
    if (!shapes.count(name)) throw IoError("unknown tensor in checkpoint: model/" + name);

  out.params.config = config;
  for (const auto& name : tensor_layout(config)) {
    const auto it = model_tensors.find(name);
    if (it == model_tensors.end()) {
      // tolerate stripped tables; everything else is mandatory
      if (name == "lang_emb" || name == "script_emb") continue;
      throw IoError("checkpoint missing tensor model/" + name);
    }
    const auto& [rows, cols] = shapes.at(name);
    if (it->second->rows != rows || it->second->cols != cols)
      throw IoError("tensor model/" + name + " has shape [" + std::to_string(it->second->rows) +
                    ", " + std::to_string(it->second->cols) + "], expected [" +
                    std::to_string(rows) + ", " + std::to_string(cols) + "]");
    out.params.add(name, from_raw<float>(*it->second));
  }

  if (!optim_m.empty() || !optim_v.empty()) {
    out.has_optimizer = true;
    for (const auto& name : out.params.names) {
      const auto mi = optim_m.find(name);
      const auto vi = optim_v.find(name);
      if (mi == optim_m.end() || vi == optim_v.end())
        throw IoError("checkpoint has partial optimizer state for tensor " + name);
      out.optim_m.push_back(from_raw<float>(*mi->second));
      out.optim_v.push_back(from_raw<float>(*vi->second));
    }
    if (optim_m.size() != out.params.names.size() || optim_v.size() != out.params.names.size())
      throw IoError("checkpoint optimizer state lists unexpected tensors");
    if (!file.meta.contains("optim_step_count"))
      throw IoError("checkpoint optimizer state lacks optim_step_count");
    out.optim_step_count = file.meta.at("optim_step_count").get<long>();
  }
  out.meta = file.meta;
  return out;
}

}  // namespace langsamp
