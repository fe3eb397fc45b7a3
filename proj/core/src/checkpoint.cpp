#include "crowdmac/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "crowdmac/errors.hpp"

namespace crowdmac {

namespace {

using nlohmann::json;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_le(std::istream& in, int bytes, const std::string& what) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), bytes)) throw IntegrityError("checkpoint truncated in " + what);
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

json config_to_json(const ModelConfig& c) {
  return {{"grid",
           {{"frames", c.grid.frames},
            {"height", c.grid.height},
            {"width", c.grid.width},
            {"cube_t", c.grid.cube_t},
            {"cube_h", c.grid.cube_h},
            {"cube_w", c.grid.cube_w}}},
          {"obs_frames", c.obs_frames},
          {"embed_dim", c.embed_dim},
          {"encoder_depth", c.encoder_depth},
          {"decoder_dim", c.decoder_dim},
          {"decoder_depth", c.decoder_depth},
          {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  const json& g = j.at("grid");
  c.grid.frames = g.at("frames").get<int>();
  c.grid.height = g.at("height").get<int>();
  c.grid.width = g.at("width").get<int>();
  c.grid.cube_t = g.at("cube_t").get<int>();
  c.grid.cube_h = g.at("cube_h").get<int>();
  c.grid.cube_w = g.at("cube_w").get<int>();
  c.obs_frames = j.at("obs_frames").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.encoder_depth = j.at("encoder_depth").get<int>();
  c.decoder_dim = j.at("decoder_dim").get<int>();
  c.decoder_depth = j.at("decoder_depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  return c;
}

constexpr const char* kGroups[3] = {"param/", "adam_m/", "adam_v/"};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  const ParameterSet* sets[3] = {&state.params, &state.adam_m, &state.adam_v};
  json table = json::array();
  for (int g = 0; g < 3; ++g) {
    if (sets[g]->tensors.size() != state.params.tensors.size()) {
      throw ParameterError("save_checkpoint: optimizer moments do not mirror the parameters");
    }
    for (const Tensor& t : sets[g]->tensors) {
      table.push_back({{"name", kGroups[g] + t.name}, {"rows", t.rows}, {"cols", t.cols}});
    }
  }
  const json header = {{"format", 1},
                       {"config", config_to_json(state.config)},
                       {"step", state.step},
                       {"epoch", state.epoch},
                       {"tensors", table}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ParameterSet* set : sets) {
    for (const Tensor& t : set->tensors) {
      for (const float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw IntegrityError(path.string() + " is not a checkpoint");
  }
  const std::uint64_t len = get_le(in, 8, "header length");
  if (len > (std::uint64_t{1} << 30)) throw IntegrityError("checkpoint header length is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IntegrityError("checkpoint truncated in header");

  json header;
  ModelState state;
  try {
    header = json::parse(text);
    state.config = config_from_json(header.at("config"));
    state.step = header.at("step").get<std::int64_t>();
    state.epoch = header.at("epoch").get<int>();
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header: ") + e.what());
  }
  try {
    state.params = parameter_layout(state.config);
  } catch (const ParameterError& e) {
    throw IntegrityError(std::string("checkpoint config: ") + e.what());
  }
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();

  ParameterSet* sets[3] = {&state.params, &state.adam_m, &state.adam_v};
  const json& table = header.at("tensors");
  if (!table.is_array() || table.size() != 3 * state.params.tensors.size()) {
    throw IntegrityError("checkpoint tensor table does not match the model layout");
  }
  std::size_t k = 0;
  for (int g = 0; g < 3; ++g) {
    for (Tensor& t : sets[g]->tensors) {
      const json& e = table[k++];
      if (e.value("name", "") != kGroups[g] + t.name || e.value("rows", -1) != t.rows || e.value("cols", -1) != t.cols) {
        throw IntegrityError("checkpoint tensor " + e.value("name", std::string("?")) + " does not match " +
                             kGroups[g] + t.name);
      }
    }
  }
  for (ParameterSet* set : sets) {
    for (Tensor& t : set->tensors) {
      for (float& v : t.data) v = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, 4, t.name)));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("checkpoint has trailing bytes");
  return state;
}

}  // namespace crowdmac
