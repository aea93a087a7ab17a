#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "setest/errors.hpp"
#include "setest/estimator.hpp"
#include "setest/io/binary.hpp"
#include "setest/io/keyvalue.hpp"
#include "setest/model/mlp.hpp"
#include "setest/model/set_model.hpp"

// Checkpoint layout, all integers little-endian:
//   "SETM" | version u32 | kind u8 (0 SET, 1 MLP) | config u32 length + key=value text
//   | param count u32 | per param: name u16 length + UTF-8 | rank u8 | dims u32[rank] | f32 data

namespace setest::io {

inline constexpr std::string_view kCheckpointMagic = "SETM";
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { set = 0, mlp = 1 };

inline std::string_view kind_name(ModelKind k) { return k == ModelKind::set ? "set" : "mlp"; }

inline ModelKind parse_kind(std::string_view s) {
  if (s == "set") return ModelKind::set;
  if (s == "mlp") return ModelKind::mlp;
  throw ContractError("unknown model kind '" + std::string(s) + "' (expected set or mlp)");
}

using AnyModel = std::variant<model::SetModel, model::MlpModel>;

namespace detail {

inline std::string config_text(const model::SetConfig& c) {
  return "context=" + std::to_string(c.context) + "\nn_blocks=" + std::to_string(c.n_blocks) +
         "\nn_heads=" + std::to_string(c.n_heads) + "\nd_model=" + std::to_string(c.d_model) +
         "\ndropout=" + format_double(c.dropout) + "\nmax_episode_len=" + std::to_string(c.max_episode_len) +
         "\nd_obs=" + std::to_string(c.d_obs) + "\nd_priv=" + std::to_string(c.d_priv) + "\n";
}

inline std::string config_text(const model::MlpConfig& c) {
  return "history=" + std::to_string(c.history) + "\nlayers=" + std::to_string(c.layers) +
         "\nwidth=" + std::to_string(c.width) + "\nd_obs=" + std::to_string(c.d_obs) +
         "\nd_priv=" + std::to_string(c.d_priv) + "\n";
}

template <class Config>
Config parse_config(std::string_view text);

template <>
inline model::SetConfig parse_config<model::SetConfig>(std::string_view text) {
  model::SetConfig c;
  std::size_t seen = 0;
  for (const auto& kv : parse_kv(text)) {
    auto u = [&] { return static_cast<std::size_t>(parse_uint(kv.value, kv.key)); };
    if (kv.key == "context") c.context = u();
    else if (kv.key == "n_blocks") c.n_blocks = u();
    else if (kv.key == "n_heads") c.n_heads = u();
    else if (kv.key == "d_model") c.d_model = u();
    else if (kv.key == "dropout") c.dropout = parse_double(kv.value, kv.key);
    else if (kv.key == "max_episode_len") c.max_episode_len = u();
    else if (kv.key == "d_obs") c.d_obs = u();
    else if (kv.key == "d_priv") c.d_priv = u();
    else throw FormatError("checkpoint config: unknown key '" + kv.key + "'");
    ++seen;
  }
  if (seen != 8) throw FormatError("checkpoint config: expected 8 SET keys, found " + std::to_string(seen));
  return c;
}

template <>
inline model::MlpConfig parse_config<model::MlpConfig>(std::string_view text) {
  model::MlpConfig c;
  std::size_t seen = 0;
  for (const auto& kv : parse_kv(text)) {
    const auto v = static_cast<std::size_t>(parse_uint(kv.value, kv.key));
    if (kv.key == "history") c.history = v;
    else if (kv.key == "layers") c.layers = v;
    else if (kv.key == "width") c.width = v;
    else if (kv.key == "d_obs") c.d_obs = v;
    else if (kv.key == "d_priv") c.d_priv = v;
    else throw FormatError("checkpoint config: unknown key '" + kv.key + "'");
    ++seen;
  }
  if (seen != 5) throw FormatError("checkpoint config: expected 5 MLP keys, found " + std::to_string(seen));
  return c;
}

inline std::vector<std::uint8_t> encode(ModelKind kind, const std::string& config, const nn::ParamStore& params) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.size32(config.size(), "config block");
  w.bytes(config);
  w.size32(params.size(), "parameter count");
  for (const auto& p : params) {
    if (p.name.size() > 0xffff) throw RangeError("parameter name too long: " + p.name);
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    const auto& shape = p.value.shape();
    if (shape.size() > 0xff) throw RangeError("parameter rank too large: " + p.name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.size32(d, "parameter dimension");
    for (double v : p.value.values()) w.f32(v);
  }
  return w.take();
}

struct Header {
  ModelKind kind;
  std::string config;
};

inline Header read_header(ByteReader& r) {
  const std::string magic = r.bytes(4, "magic");
  if (magic != kCheckpointMagic) throw FormatError("not a checkpoint file (magic '" + magic + "')");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint8_t kind = r.u8("model kind");
  if (kind > 1) throw FormatError("unknown model kind byte " + std::to_string(kind));
  const std::uint32_t len = r.u32("config length");
  return {static_cast<ModelKind>(kind), r.bytes(len, "config block")};
}

/// Fills the parameters of a freshly created model from the file; every
/// stored parameter must exist in the model with the same shape.
inline void read_params(ByteReader& r, nn::ParamStore& params) {
  const std::uint32_t count = r.u32("parameter count");
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u16("name length"), "parameter name");
    const auto idx = params.find(name);
    if (!idx) throw FormatError("checkpoint parameter '" + name + "' is not part of the model");
    const std::uint8_t rank = r.u8("rank");
    nn::Shape shape(rank);
    for (auto& d : shape) d = r.u32("dimension");
    nn::Tensor& t = params[*idx].value;
    if (shape != t.shape()) {
      throw DimensionError("parameter '" + name + "' has shape " + nn::shape_string(shape) + " in the file, " +
                           nn::shape_string(t.shape()) + " in the model");
    }
    r.f32_array(t.values(), "parameter data");
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const model::SetModel& m) {
  return detail::encode(ModelKind::set, detail::config_text(m.config), m.params);
}

inline std::vector<std::uint8_t> encode_checkpoint(const model::MlpModel& m) {
  return detail::encode(ModelKind::mlp, detail::config_text(m.config), m.params);
}

inline std::vector<std::uint8_t> encode_checkpoint(const AnyModel& m) {
  return std::visit([](const auto& x) { return encode_checkpoint(x); }, m);
}

inline AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto h = detail::read_header(r);
  AnyModel out;
  if (h.kind == ModelKind::set) {
    auto m = model::SetModel::create(detail::parse_config<model::SetConfig>(h.config), 0);
    detail::read_params(r, m.params);
    out = std::move(m);
  } else {
    auto m = model::MlpModel::create(detail::parse_config<model::MlpConfig>(h.config), 0);
    detail::read_params(r, m.params);
    out = std::move(m);
  }
  r.expect_end("checkpoint file");
  return out;
}

inline ModelKind kind_of(const AnyModel& m) {
  return std::holds_alternative<model::SetModel>(m) ? ModelKind::set : ModelKind::mlp;
}

template <class Model>
Model decode_checkpoint_as(std::span<const std::uint8_t> bytes) {
  AnyModel m = decode_checkpoint(bytes);
  if (!std::holds_alternative<Model>(m)) {
    const ModelKind want = std::is_same_v<Model, model::SetModel> ? ModelKind::set : ModelKind::mlp;
    throw KindError("checkpoint holds a " + std::string(kind_name(kind_of(m))) + " model, expected " +
                    std::string(kind_name(want)));
  }
  return std::get<Model>(std::move(m));
}

inline void write_checkpoint(const std::string& path, const AnyModel& m) { write_file(path, encode_checkpoint(m)); }
inline AnyModel read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }
inline model::SetModel read_set_checkpoint(const std::string& path) {
  return decode_checkpoint_as<model::SetModel>(read_file(path));
}
inline model::MlpModel read_mlp_checkpoint(const std::string& path) {
  return decode_checkpoint_as<model::MlpModel>(read_file(path));
}

/// Observation widths the model was built for.
inline std::pair<std::size_t, std::size_t> model_dims(const AnyModel& m) {
  return std::visit([](const auto& x) { return std::pair{x.config.d_obs, x.config.d_priv}; }, m);
}

/// Raises DimensionError when the model cannot consume data of the given widths.
inline void require_dims(const AnyModel& m, std::size_t d_obs, std::size_t d_priv) {
  const auto [o, p] = model_dims(m);
  if (o != d_obs || p != d_priv) {
    throw DimensionError("model dims (" + std::to_string(o) + ", " + std::to_string(p) + ") do not match data dims (" +
                         std::to_string(d_obs) + ", " + std::to_string(d_priv) + ")");
  }
}

inline std::shared_ptr<const Estimator> make_estimator(AnyModel m, const std::string& name = "") {
  if (auto* s = std::get_if<model::SetModel>(&m)) {
    return std::make_shared<SetEstimator>(std::move(*s), name.empty() ? "set" : name);
  }
  return std::make_shared<MlpEstimator>(std::get<model::MlpModel>(std::move(m)), name.empty() ? "mlp" : name);
}

}  // namespace setest::io
