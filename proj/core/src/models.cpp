#include "hcbm/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hcbm/error.hpp"
#include "hcbm/rng.hpp"

namespace hcbm::models {

namespace fs = std::filesystem;
using ad::Mode;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 6> kVariantNames{{
    {Variant::standard, "standard"},
    {Variant::vanilla_cbm, "vanilla_cbm"},
    {Variant::cbm_res, "cbm_res"},
    {Variant::cbm_skip, "cbm_skip"},
    {Variant::scm, "scm"},
    {Variant::oracle, "oracle"},
}};

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidConfigError(msg);
}

}  // namespace

std::string_view to_string(Variant v) {
  for (auto [k, name] : kVariantNames) {
    if (k == v) return name;
  }
  return "?";
}

Variant variant_from_string(std::string_view name) {
  for (auto [k, n] : kVariantNames) {
    if (n == name) return k;
  }
  throw InvalidConfigError("variant: unknown value '" + std::string(name) + "'");
}

std::string_view to_string(Bottleneck b) { return b == Bottleneck::soft ? "soft" : "hard"; }

Bottleneck bottleneck_from_string(std::string_view name) {
  if (name == "soft") return Bottleneck::soft;
  if (name == "hard") return Bottleneck::hard;
  throw InvalidConfigError("bottleneck: unknown value '" + std::string(name) + "'");
}

bool has_concepts(Variant v) { return v != Variant::standard; }

void ModelConfig::validate() const {
  require(num_classes >= 2, "num_classes must be at least 2");
  require(num_concepts >= 1, "num_concepts must be at least 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  if (variant == Variant::oracle) return;
  require(in_channels >= 1, "in_channels must be positive");
  require(image_size >= 8 && image_size % 8 == 0, "image_size must be a positive multiple of 8");
  for (int w : conv_widths) require(w >= 1, "conv_widths must be positive");
  require(hidden >= 1, "hidden must be positive");
  require(standard_width >= 1, "standard_width must be positive");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"num_classes", c.num_classes},
          {"num_concepts", c.num_concepts},
          {"image_size", c.image_size},
          {"in_channels", c.in_channels},
          {"conv_widths", c.conv_widths},
          {"hidden", c.hidden},
          {"standard_width", c.standard_width},
          {"dropout", c.dropout},
          {"bottleneck", to_string(c.bottleneck)}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  c.num_concepts = j.at("num_concepts").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.conv_widths = j.at("conv_widths").get<std::array<int, 3>>();
  c.hidden = j.at("hidden").get<int>();
  c.standard_width = j.at("standard_width").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.bottleneck = bottleneck_from_string(j.at("bottleneck").get<std::string>());
  c.validate();
  return c;
}

std::vector<int> scm_stage_assignment(int num_concepts) {
  std::vector<int> stage(static_cast<std::size_t>(num_concepts));
  for (int j = 0; j < num_concepts; ++j) stage[static_cast<std::size_t>(j)] = j % 3;
  return stage;
}

namespace {

/// Side of the pooled grid each SCM head reads: 4x4, or the last stage's side
/// when that is smaller.
std::size_t scm_grid(int image_size) { return std::min<std::size_t>(4, static_cast<std::size_t>(image_size / 8)); }

}  // namespace

std::size_t ConceptModel::add_param(const std::string& name, Shape shape, std::size_t fan_in) {
  Tensor value(std::move(shape));
  // Fan-in scaled uniform; each tensor has its own stream so that models
  // sharing a layer name start from the same values.
  Rng rng(derive_seed(seed_, {label_hash(name)}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : value.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  params_.emplace_back(name, std::move(value));
  return params_.size() - 1;
}

ConceptModel::ConceptModel(ModelConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  const auto p = static_cast<std::size_t>(config_.num_classes);
  const auto k = static_cast<std::size_t>(config_.num_concepts);
  if (config_.variant == Variant::oracle) {
    out_ = add_param("out.weight", {p, k}, k);
    add_param("out.bias", {p}, k);
    return;
  }
  std::size_t in = static_cast<std::size_t>(config_.in_channels);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto w = static_cast<std::size_t>(config_.conv_widths[s]);
    const std::string name = "conv" + std::to_string(s + 1);
    conv_[s] = add_param(name + ".weight", {w, in, 3, 3}, in * 9);
    add_param(name + ".bias", {w}, in * 9);
    in = w;
  }
  const auto side = static_cast<std::size_t>(config_.image_size / 8);
  const std::size_t flat = in * side * side;
  const auto hid = static_cast<std::size_t>(config_.hidden);
  hidden_ = add_param("hidden.weight", {hid, flat}, flat);
  add_param("hidden.bias", {hid}, flat);

  auto linear_pair = [&](const std::string& name, std::size_t out, std::size_t fan_in) {
    const std::size_t idx = add_param(name + ".weight", {out, fan_in}, fan_in);
    add_param(name + ".bias", {out}, fan_in);
    return idx;
  };
  switch (config_.variant) {
    case Variant::standard: {
      const auto sw = static_cast<std::size_t>(config_.standard_width);
      standard_ = linear_pair("standard", sw, hid);
      out_ = linear_pair("out", p, sw);
      break;
    }
    case Variant::vanilla_cbm:
      concept_ = linear_pair("concept", k, hid);
      out_ = linear_pair("out", p, k);
      break;
    case Variant::cbm_res:
      concept_ = linear_pair("concept", k, hid);
      skip_ = linear_pair("skip", k, hid);
      out_ = linear_pair("out", p, k);
      break;
    case Variant::cbm_skip:
      concept_ = linear_pair("concept", k, hid);
      skip_ = linear_pair("skip", k, hid);
      out_ = linear_pair("out", p, 2 * k);
      break;
    case Variant::scm: {
      scm_stage_ = scm_stage_assignment(config_.num_concepts);
      for (std::size_t j = 0; j < k; ++j) {
        const auto c = static_cast<std::size_t>(config_.conv_widths[static_cast<std::size_t>(scm_stage_[j])]);
        const std::size_t g = scm_grid(config_.image_size);
        scm_heads_.push_back(linear_pair("scm_head" + std::to_string(j), 1, c * g * g));
      }
      out_ = linear_pair("out", p, k + hid);
      break;
    }
    case Variant::oracle:
      break;
  }
}

Var ConceptModel::p(Tape& tape, std::size_t index, bool track) {
  return tape.parameter(params_[index], track);
}

Var ConceptModel::linear_layer(Tape& tape, Var x, std::size_t w, bool track) {
  return ad::linear(x, p(tape, w, track), p(tape, w + 1, track));
}

Var ConceptModel::bottleneck_input(Var concept_logits) const {
  auto probs = ad::sigmoid(concept_logits);
  return config_.bottleneck == Bottleneck::hard ? ad::threshold_ste(probs) : probs;
}

ForwardResult ConceptModel::forward(Tape& tape, Var input, Mode mode, std::mt19937_64& rng,
                                    bool track) {
  const auto k = static_cast<std::size_t>(config_.num_concepts);
  const auto& shape = input.shape();
  if (config_.variant == Variant::oracle) {
    if (shape.size() != 2 || shape[1] != k) {
      throw ShapeError("oracle expects concept table [B, " + std::to_string(k) + "], got " +
                       ad::to_string(shape));
    }
    return {linear_layer(tape, input, out_, track), std::nullopt};
  }
  const auto c = static_cast<std::size_t>(config_.in_channels);
  const auto s = static_cast<std::size_t>(config_.image_size);
  if (shape.size() != 4 || shape[1] != c || shape[2] != s || shape[3] != s) {
    throw ShapeError("model expects images [B, " + std::to_string(c) + ", " + std::to_string(s) +
                     ", " + std::to_string(s) + "], got " + ad::to_string(shape));
  }
  std::array<Var, 3> stage;
  Var a = input;
  for (std::size_t i = 0; i < 3; ++i) {
    a = ad::maxpool2d(ad::relu(ad::conv2d(a, p(tape, conv_[i], track), p(tape, conv_[i] + 1, track))), 2);
    stage[i] = a;
  }
  a = ad::dropout(a, config_.dropout, mode, rng);
  const Var h = ad::relu(linear_layer(tape, ad::flatten(a), hidden_, track));

  switch (config_.variant) {
    case Variant::standard: {
      const Var mid = ad::relu(linear_layer(tape, h, standard_, track));
      return {linear_layer(tape, mid, out_, track), std::nullopt};
    }
    case Variant::vanilla_cbm: {
      const Var g = linear_layer(tape, h, concept_, track);
      return {linear_layer(tape, bottleneck_input(g), out_, track), g};
    }
    case Variant::cbm_res: {
      const Var g = linear_layer(tape, h, concept_, track);
      const Var skip = linear_layer(tape, h, skip_, track);
      return {linear_layer(tape, ad::add(bottleneck_input(g), skip), out_, track), g};
    }
    case Variant::cbm_skip: {
      const Var g = linear_layer(tape, h, concept_, track);
      const Var skip = linear_layer(tape, h, skip_, track);
      const Var parts[] = {bottleneck_input(g), skip};
      return {linear_layer(tape, ad::concat(std::span<const Var>(parts), 1), out_, track), g};
    }
    case Variant::scm: {
      std::array<Var, 3> pooled;
      // Each stage is max-pooled down to a small grid so heads keep coarse
      // spatial layout (which shape is where).
      const std::size_t grid = scm_grid(config_.image_size);
      for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t window = (s >> (i + 1)) / grid;
        pooled[i] = ad::flatten(window > 1 ? ad::maxpool2d(stage[i], window) : stage[i]);
      }
      std::vector<Var> heads;
      heads.reserve(k);
      for (std::size_t j = 0; j < k; ++j) {
        heads.push_back(linear_layer(tape, pooled[static_cast<std::size_t>(scm_stage_[j])], scm_heads_[j], track));
      }
      const Var g = heads.size() == 1 ? heads[0] : ad::concat(std::span<const Var>(heads), 1);
      const Var parts[] = {bottleneck_input(g), h};
      return {linear_layer(tape, ad::concat(std::span<const Var>(parts), 1), out_, track), g};
    }
    case Variant::oracle:
      break;
  }
  throw UnsupportedVariantError("unhandled variant");
}

ForwardResult ConceptModel::forward(Tape& tape, Var input, bool track) {
  std::mt19937_64 unused(0);
  return forward(tape, input, Mode::eval, unused, track);
}

std::vector<std::uint8_t> ConceptModel::predict_concepts_binary(const Tensor& input) {
  if (!has_concepts(config_.variant)) {
    throw UnsupportedVariantError("predict_concepts_binary: the standard model has no concept path");
  }
  Tape tape;
  const auto out = forward(tape, tape.input(input), false);
  const auto& g = out.concept_logits->value();
  std::vector<std::uint8_t> bits(g.numel());
  for (std::size_t i = 0; i < g.numel(); ++i) bits[i] = g[i] > 0.0f ? 1 : 0;
  return bits;
}

ad::Parameter& ConceptModel::parameter(std::string_view name) {
  for (auto& prm : params_) {
    if (prm.name == name) return prm;
  }
  throw InvalidConfigError("no parameter named '" + std::string(name) + "'");
}

std::size_t ConceptModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& prm : params_) n += prm.value.numel();
  return n;
}

void ConceptModel::zero_grad() {
  for (auto& prm : params_) prm.zero_grad();
}

// --- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'C', 'B', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".json"); }

}  // namespace

void write_tensors(const fs::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) put_le<std::uint64_t>(out, d);
    for (float v : t.value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<NamedTensor> read_tensors(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in);
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(get_le<std::uint32_t>(in));
    if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) throw IoError("checkpoint truncated");
    Shape shape(get_le<std::uint32_t>(in));
    for (auto& d : shape) d = get_le<std::uint64_t>(in);
    Tensor value(shape);
    for (auto& v : value.values()) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
    t.value = std::move(value);
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const ConceptModel& model, const fs::path& path, const nlohmann::json& extra) {
  std::vector<NamedTensor> tensors;
  for (const auto& prm : model.parameters()) tensors.push_back({prm.name, prm.value});
  write_tensors(path, tensors);
  nlohmann::json j = {{"format_version", kFormatVersion}, {"model", config_to_json(model.config())}};
  if (!extra.is_null()) j["extra"] = extra;
  std::ofstream(sidecar(path)) << j.dump(2) << '\n';
}

ConceptModel load_checkpoint(const fs::path& path) {
  std::ifstream side(sidecar(path));
  if (!side) throw IoError("missing checkpoint sidecar " + sidecar(path).string());
  const auto j = nlohmann::json::parse(side);
  ConceptModel model(config_from_json(j.at("model")), 0);
  const auto tensors = read_tensors(path);
  if (tensors.size() != model.parameters().size()) {
    throw IoError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                  std::to_string(model.parameters().size()));
  }
  for (const auto& t : tensors) {
    auto& prm = model.parameter(t.name);
    if (prm.value.shape() != t.value.shape()) {
      throw ShapeError("checkpoint tensor " + t.name + " has shape " + ad::to_string(t.value.shape()) +
                       ", model expects " + ad::to_string(prm.value.shape()));
    }
    prm.value = t.value;
  }
  return model;
}

}  // namespace hcbm::models
