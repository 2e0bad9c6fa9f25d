#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcbm/ops.hpp"

namespace hcbm::models {

enum class Variant : std::uint8_t { standard, vanilla_cbm, cbm_res, cbm_skip, scm, oracle };
enum class Bottleneck : std::uint8_t { soft, hard };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view name);
std::string_view to_string(Bottleneck b);
Bottleneck bottleneck_from_string(std::string_view name);

/// True for every variant with a concept path (all but standard).
bool has_concepts(Variant v);

struct ModelConfig {
  Variant variant = Variant::vanilla_cbm;
  int num_classes = 10;
  int num_concepts = 9;
  int image_size = 64;
  int in_channels = 3;
  std::array<int, 3> conv_widths{16, 32, 64};
  int hidden = 64;
  /// Width of the extra linear layer the standard model has where the
  /// concept models have their bottleneck.
  int standard_width = 32;
  double dropout = 0.0;
  Bottleneck bottleneck = Bottleneck::soft;

  /// Throws InvalidConfigError naming the offending field.
  void validate() const;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

struct ForwardResult {
  ad::Var class_logits;                   // [B, p]
  std::optional<ad::Var> concept_logits;  // [B, k]; absent for standard
};

/// One of the six variants with its parameters. Forward passes record onto a
/// caller-owned tape, so one model can serve concurrent evaluations as long
/// as nobody trains it meanwhile.
class ConceptModel {
 public:
  ConceptModel() = default;
  ConceptModel(ModelConfig config, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] Variant variant() const noexcept { return config_.variant; }

  /// `input` is a normalized image batch [B, C, S, S], or the concept table
  /// [B, k] for the oracle. With `track_params` false the parameters enter as
  /// constants (input-gradient queries). `rng` drives dropout in train mode.
  ForwardResult forward(ad::Tape& tape, ad::Var input, ad::Mode mode, std::mt19937_64& rng,
                        bool track_params = true);
  /// Eval-mode convenience.
  ForwardResult forward(ad::Tape& tape, ad::Var input, bool track_params = false);

  /// 1 where sigma(g(x)) > 0.5, i.e. g(x) > 0. Row-major [B, k].
  std::vector<std::uint8_t> predict_concepts_binary(const ad::Tensor& input);

  [[nodiscard]] std::vector<ad::Parameter>& parameters() noexcept { return params_; }
  [[nodiscard]] const std::vector<ad::Parameter>& parameters() const noexcept { return params_; }
  ad::Parameter& parameter(std::string_view name);
  [[nodiscard]] std::size_t parameter_count() const;
  void zero_grad();

  /// Concept index -> conv stage (0..2) of its head. SCM only.
  [[nodiscard]] const std::vector<int>& scm_stage_of_concept() const noexcept { return scm_stage_; }

 private:
  std::size_t add_param(const std::string& name, ad::Shape shape, std::size_t fan_in);
  ad::Var p(ad::Tape& tape, std::size_t index, bool track);
  ad::Var linear_layer(ad::Tape& tape, ad::Var x, std::size_t w, bool track);
  ad::Var bottleneck_input(ad::Var concept_logits) const;

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<ad::Parameter> params_;
  // Indices into params_; each weight is followed by its bias.
  std::array<std::size_t, 3> conv_{};
  std::size_t hidden_ = 0, standard_ = 0, concept_ = 0, skip_ = 0, out_ = 0;
  std::vector<std::size_t> scm_heads_;
  std::vector<int> scm_stage_;
};

/// Round-robin head placement: concept j goes to stage j mod 3.
std::vector<int> scm_stage_assignment(int num_concepts);

/// Binary checkpoint of all parameters plus a JSON sidecar (`<path>.json`)
/// holding the model config.
void save_checkpoint(const ConceptModel& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = {});
ConceptModel load_checkpoint(const std::filesystem::path& path);

/// Raw tensor container underlying the checkpoint format.
struct NamedTensor {
  std::string name;
  ad::Tensor value;
};
void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

}  // namespace hcbm::models
