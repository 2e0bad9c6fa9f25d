#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcbm/datagen.hpp"
#include "hcbm/models.hpp"

namespace hcbm::training {

// --- data -------------------------------------------------------------------

/// Decoded images of one split with labels, kept as bytes (CHW) until a batch
/// is assembled.
struct ImageSet {
  int image_size = 0;
  int num_concepts = 0;
  std::vector<std::uint8_t> pixels;    // N x 3 x S x S
  std::vector<int> labels;             // N
  std::vector<std::uint8_t> concepts;  // N x k
  std::vector<std::int64_t> sample_ids;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::size_t image_bytes() const noexcept {
    return 3 * static_cast<std::size_t>(image_size) * static_cast<std::size_t>(image_size);
  }
  /// Rows `idx` of this set, in that order.
  [[nodiscard]] ImageSet subset(const std::vector<std::size_t>& idx) const;
};

/// Reads the records' PNGs from `dataset_dir`, or renders them in memory from
/// their seeds when `dataset_dir` is empty (identical pixels either way).
ImageSet load_images(const datagen::DatasetManifest& manifest,
                     const std::vector<const datagen::SampleRecord*>& records,
                     const std::filesystem::path& dataset_dir = {});
ImageSet load_split(const datagen::DatasetManifest& manifest, datagen::Split split,
                    const std::filesystem::path& dataset_dir = {});

/// Pixel value v in 0..255 maps to (v/255 - 0.5) / 2.
inline constexpr float kPixelMean = 0.5f;
inline constexpr float kPixelStd = 2.0f;
inline float normalize_pixel(std::uint8_t v) { return (static_cast<float>(v) / 255.0f - kPixelMean) / kPixelStd; }
inline constexpr float kNormalizedMin = (0.0f - kPixelMean) / kPixelStd;
inline constexpr float kNormalizedMax = (1.0f - kPixelMean) / kPixelStd;

/// Normalized batch [B, 3, S, S]. With `crop_rng`, each image is shifted by a
/// random offset in [-pad, pad] on both axes with black fill (a random crop of
/// the zero-padded image); otherwise the centre crop, i.e. the image itself.
ad::Tensor make_batch(const ImageSet& set, std::span<const std::size_t> idx, Rng* crop_rng = nullptr,
                      int pad = 4);
/// Concept bits of the rows as floats [B, k].
ad::Tensor concept_batch(const ImageSet& set, std::span<const std::size_t> idx);

// --- configuration ------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.001;
  double dropout = 0.0;
  double lr_decay = 0.7;       // multiplied into the lr every `decay_every` epochs
  int decay_every = 5;
  double lambda0 = 10.0;       // concept-loss weight at epoch 0
  double lambda_decay = 1.0;   // per-epoch factor on the concept-loss weight
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 0;
  models::Bottleneck bottleneck = models::Bottleneck::soft;
  bool random_crop = true;
  int crop_padding = 4;

  void validate() const;
  [[nodiscard]] double lambda_at(int epoch) const;
  [[nodiscard]] double lr_at(int epoch) const;
};

nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);

// --- loss and optimizer -----------------------------------------------------

/// CE(class_logits, y) + lambda * BCE(concept_logits, c); CE alone when there
/// are no concept logits or lambda is 0.
ad::Var joint_loss(ad::Var class_logits, const std::optional<ad::Var>& concept_logits,
                   std::span<const int> labels, const ad::Tensor& concept_targets, double lambda);

class Adam {
 public:
  explicit Adam(std::vector<ad::Parameter>& params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(double lr);

 private:
  std::vector<ad::Parameter>* params_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// --- metrics ----------------------------------------------------------------

/// Fraction of rows with at least m mismatching bits. Rows have k bits.
double mpo(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
           std::size_t k, std::size_t m);
/// mpo for m = 1..k.
std::vector<double> mpo_curve(std::span<const std::uint8_t> predicted,
                              std::span<const std::uint8_t> truth, std::size_t k);

struct CISummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double half_width = 0.0;  // 95% two-sided, Student-t
};
CISummary aggregate_ci(std::span<const double> values);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // class cross entropy
  std::vector<int> predictions;
  std::vector<std::uint8_t> concept_bits;  // empty for standard
  double concept_accuracy = 0.0;
  std::vector<double> mpo;  // m = 1..k
};

/// Eval-mode pass over the whole set.
EvalResult evaluate(models::ConceptModel& model, const ImageSet& set, int batch_size = 128);

// --- training ----------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct RunResult {
  nlohmann::json model_config;
  TrainConfig train_config;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // -1: untrained weights were kept
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_concept_accuracy = 0.0;
  std::vector<double> mpo;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const RunResult& r);

/// Per-epoch hook, e.g. for progress output.
using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains in place with Adam and the joint loss, keeps the parameters of the
/// epoch with the highest validation accuracy (earliest on ties; the initial
/// weights count as epoch -1) and evaluates them on `test`. Throws
/// NumericError on a non-finite loss.
RunResult train(models::ConceptModel& model, const ImageSet& train_set, const ImageSet& val_set,
                const ImageSet& test_set, const TrainConfig& config,
                const EpochCallback& on_epoch = {});

/// Builds a model for `variant` from dataset metadata and train config.
models::ModelConfig model_config_for(models::Variant variant, const datagen::DatasetConfig& data,
                                     const TrainConfig& train, int image_size = 0);

// --- hyperparameter search and subset experiments -------------------------------

/// The 48-point grid: learning rate x dropout x (decay for the standard
/// model, concept-loss tuple for concept models). Concept models use decay
/// 0.7. The oracle uses the standard grid; dropout does not affect it.
std::vector<TrainConfig> hyperparameter_grid(models::Variant variant, const TrainConfig& base);

struct SubsetOptions {
  std::vector<int> sizes{50, 100, 150, 200, 250};
  std::vector<models::Variant> variants;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;
  /// Searched instead of hyperparameter_grid(variant, base) when non-empty.
  std::vector<TrainConfig> grid;
  /// When > 0, a seeded sample of this many grid points is searched.
  int max_trials = 0;
  std::uint64_t subset_seed = 0;
  std::uint64_t search_seed = 0;
};

struct SubsetRow {
  models::Variant variant = models::Variant::standard;
  int size = 0;
  std::uint64_t seed = 0;
  TrainConfig chosen;
  RunResult run;
};

struct SubsetSummary {
  models::Variant variant = models::Variant::standard;
  int size = 0;
  CISummary accuracy;
  std::vector<CISummary> mpo;
};

struct SubsetExperiment {
  std::vector<SubsetRow> rows;
  std::vector<SubsetSummary> summary;
};

using ProgressFn = std::function<void(const std::string&)>;

/// For every (variant, size): grid search on validation accuracy with the
/// first seed, retrain the winner on every seed, aggregate.
SubsetExperiment subset_experiment(const datagen::DatasetManifest& manifest, const ImageSet& all_train_val,
                                   const ImageSet& test, const SubsetOptions& options,
                                   const ProgressFn& progress = {});

/// Splits the rows of `all_train_val` into train and val sets following the
/// manifest subset for `per_class_n`.
std::pair<ImageSet, ImageSet> subset_sets(const datagen::DatasetManifest& manifest,
                                          const ImageSet& all_train_val, int per_class_n,
                                          std::uint64_t seed);

void write_results_csv(const std::filesystem::path& path, const std::vector<SubsetRow>& rows,
                       const datagen::DatasetConfig& data);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SubsetSummary>& rows);
std::vector<SubsetSummary> summarize(const std::vector<SubsetRow>& rows);

}  // namespace hcbm::training
