#include "byte_io.hpp"
#include "emgssi/model.hpp"

#include <json.hpp>

#include <map>

namespace emgssi::model {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'E', 'M', 'G', 'W'};

json to_json(const SeResNet1dConfig& c) {
  json stages = json::array();
  for (const StageSpec& s : c.stages) {
    stages.push_back({{"blocks", s.blocks}, {"out_channels", s.out_channels}, {"stride", s.stride}});
  }
  return {{"in_channels", c.in_channels},     {"seg_len", c.seg_len},
          {"num_classes", c.num_classes},     {"stem_channels", c.stem_channels},
          {"stem_kernel", c.stem_kernel},     {"stem_stride", c.stem_stride},
          {"stem_padding", c.stem_padding},   {"pool_kernel", c.pool_kernel},
          {"pool_stride", c.pool_stride},     {"pool_padding", c.pool_padding},
          {"stages", stages},                 {"block_kernel", c.block_kernel},
          {"block_padding", c.block_padding}, {"se_reduction", c.se_reduction},
          {"dropout", c.dropout}};
}

// Names the first differing field, or returns an empty string.
std::string first_difference(const SeResNet1dConfig& a, const SeResNet1dConfig& b) {
  const json ja = to_json(a), jb = to_json(b);
  for (auto it = ja.begin(); it != ja.end(); ++it) {
    if (!jb.contains(it.key()) || jb.at(it.key()) != it.value()) return it.key();
  }
  return {};
}

}  // namespace

std::string config_to_json(const SeResNet1dConfig& config) { return to_json(config).dump(); }

SeResNet1dConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw WeightFileError(std::string("config block is not valid JSON: ") + e.what());
  }
  SeResNet1dConfig c;
  auto field = [&](const char* name, auto& out) {
    if (!j.contains(name)) throw WeightFileError(std::string("config block lacks field ") + name);
    try {
      j.at(name).get_to(out);
    } catch (const json::exception&) {
      throw WeightFileError(std::string("config field ") + name + " has the wrong type");
    }
  };
  field("in_channels", c.in_channels);
  field("seg_len", c.seg_len);
  field("num_classes", c.num_classes);
  field("stem_channels", c.stem_channels);
  field("stem_kernel", c.stem_kernel);
  field("stem_stride", c.stem_stride);
  field("stem_padding", c.stem_padding);
  field("pool_kernel", c.pool_kernel);
  field("pool_stride", c.pool_stride);
  field("pool_padding", c.pool_padding);
  field("block_kernel", c.block_kernel);
  field("block_padding", c.block_padding);
  field("se_reduction", c.se_reduction);
  field("dropout", c.dropout);
  if (!j.contains("stages") || !j.at("stages").is_array()) {
    throw WeightFileError("config block lacks the stages array");
  }
  c.stages.clear();
  for (const json& s : j.at("stages")) {
    c.stages.push_back({s.at("blocks").get<std::size_t>(), s.at("out_channels").get<std::size_t>(),
                        s.at("stride").get<std::size_t>()});
  }
  return c;
}

std::vector<std::uint8_t> encode_weights(Model& model) {
  detail::ByteWriter w;
  for (char ch : kMagic) w.put(ch);
  w.put<std::uint16_t>(kWeightsVersion);
  const std::string cfg = config_to_json(model.config());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.put_string(cfg);

  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  for (nn::Parameter<float>* p : model.parameters()) tensors.emplace_back(p->name, &p->value);
  for (auto& [name, t] : model.buffers()) tensors.emplace_back(name, t);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_string(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t->rank()));
    for (std::size_t d : t->shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t->values()) w.put<float>(v);
  }
  return std::move(w.bytes());
}

Model decode_weights(std::span<const std::uint8_t> bytes,
                     const std::optional<SeResNet1dConfig>& expected) {
  detail::ByteReader<WeightFileError> r(bytes);
  for (char ch : kMagic) {
    if (r.get<char>("magic") != ch) throw WeightFileError("bad magic: not an EMGW file");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kWeightsVersion) {
    throw WeightFileError("unsupported EMGW version " + std::to_string(version));
  }
  const auto cfg_len = r.get<std::uint32_t>("config length");
  const SeResNet1dConfig cfg = config_from_json(r.get_string(cfg_len, "config block"));
  if (expected) {
    const std::string diff = first_difference(*expected, cfg);
    if (!diff.empty()) {
      throw ConfigMismatchError(diff, "config mismatch in field '" + diff +
                                          "': file holds " + to_json(cfg).at(diff).dump() +
                                          ", expected " + to_json(*expected).at(diff).dump());
    }
  }
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    throw WeightFileError(std::string("invalid config in weight file: ") + e.what());
  }

  Model model(cfg, 0);
  std::map<std::string, Tensor<float>*> slots;
  for (nn::Parameter<float>* p : model.parameters()) slots[p->name] = &p->value;
  for (auto& [name, t] : model.buffers()) slots[name] = t;

  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != slots.size()) {
    throw WeightFileError("weight file holds " + std::to_string(count) + " tensors, model needs " +
                          std::to_string(slots.size()));
  }
  std::map<std::string, bool> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    const std::string name = r.get_string(name_len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    Shape shape(rank);
    for (std::size_t& d : shape) d = r.get<std::uint32_t>("tensor dims");
    auto it = slots.find(name);
    if (it == slots.end()) throw WeightFileError("unexpected tensor '" + name + "'");
    if (seen[name]) throw WeightFileError("duplicate tensor '" + name + "'");
    seen[name] = true;
    if (it->second->shape() != shape) {
      throw WeightFileError("tensor '" + name + "' has shape " + nn::shape_string(shape) +
                            ", model expects " + nn::shape_string(it->second->shape()));
    }
    for (float& v : it->second->values()) v = r.get<float>("tensor payload");
  }
  if (r.remaining() != 0) throw WeightFileError("trailing bytes after tensors");
  return model;
}

void save_weights(Model& model, const std::string& path) {
  detail::write_file(path, encode_weights(model));
}

Model load_weights(const std::string& path, const std::optional<SeResNet1dConfig>& expected) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const std::runtime_error& e) {
    throw WeightFileError(e.what());
  }
  return decode_weights(bytes, expected);
}

}  // namespace emgssi::model
