#include "hcbm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "hcbm/error.hpp"
#include "hcbm/image.hpp"

namespace hcbm::training {

namespace fs = std::filesystem;
using ad::Tensor;
using ad::Var;
using datagen::SampleRecord;
using models::Variant;

// --- data -------------------------------------------------------------------

ImageSet ImageSet::subset(const std::vector<std::size_t>& idx) const {
  ImageSet out;
  out.image_size = image_size;
  out.num_concepts = num_concepts;
  const std::size_t ib = image_bytes();
  const auto k = static_cast<std::size_t>(num_concepts);
  out.pixels.reserve(idx.size() * ib);
  out.concepts.reserve(idx.size() * k);
  for (std::size_t i : idx) {
    out.pixels.insert(out.pixels.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * ib),
                      pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * ib));
    out.concepts.insert(out.concepts.end(), concepts.begin() + static_cast<std::ptrdiff_t>(i * k),
                        concepts.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    out.labels.push_back(labels[i]);
    out.sample_ids.push_back(sample_ids[i]);
  }
  return out;
}

ImageSet load_images(const datagen::DatasetManifest& manifest,
                     const std::vector<const SampleRecord*>& records, const fs::path& dataset_dir) {
  ImageSet set;
  set.image_size = manifest.config.image_size;
  set.num_concepts = manifest.config.num_concepts;
  const auto s = static_cast<std::size_t>(set.image_size);
  set.pixels.resize(records.size() * set.image_bytes());
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& r = *records[n];
    const RgbImage img =
        dataset_dir.empty()
            ? datagen::render_image(manifest.classes.at(static_cast<std::size_t>(r.class_index)), r.concepts,
                                    r.seed, set.image_size)
            : read_png(dataset_dir / r.image_ref);
    if (img.width != set.image_size || img.height != set.image_size) {
      throw ShapeError(r.image_ref + ": expected " + std::to_string(s) + "x" + std::to_string(s) + " image");
    }
    std::uint8_t* dst = set.pixels.data() + n * set.image_bytes();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          dst[(c * s + y) * s + x] = img.at(static_cast<int>(x), static_cast<int>(y))[c];
        }
      }
    }
    set.labels.push_back(r.class_index);
    set.concepts.insert(set.concepts.end(), r.concepts.bits().begin(), r.concepts.bits().end());
    set.sample_ids.push_back(r.sample_id);
  }
  return set;
}

ImageSet load_split(const datagen::DatasetManifest& manifest, datagen::Split split, const fs::path& dataset_dir) {
  return load_images(manifest, manifest.select(split), dataset_dir);
}

Tensor make_batch(const ImageSet& set, std::span<const std::size_t> idx, Rng* crop_rng, int pad) {
  const auto s = static_cast<std::size_t>(set.image_size);
  const std::size_t ib = set.image_bytes();
  Tensor out({idx.size(), 3, s, s});
  // Normalized lookup avoids a divide per pixel.
  std::array<float, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[static_cast<std::size_t>(v)] = normalize_pixel(static_cast<std::uint8_t>(v));
  float* dst = out.data();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const std::uint8_t* src = set.pixels.data() + idx[b] * ib;
    float* d = dst + b * ib;
    if (crop_rng == nullptr || pad == 0) {
      for (std::size_t i = 0; i < ib; ++i) d[i] = lut[src[i]];
      continue;
    }
    const auto span = static_cast<std::uint64_t>(2 * pad + 1);
    const int ox = static_cast<int>(crop_rng->below(span)) - pad;
    const int oy = static_cast<int>(crop_rng->below(span)) - pad;
    const int si = static_cast<int>(s);
    for (std::size_t c = 0; c < 3; ++c) {
      for (int y = 0; y < si; ++y) {
        const int sy = y + oy;
        for (int x = 0; x < si; ++x) {
          const int sx = x + ox;
          const bool inside = sy >= 0 && sy < si && sx >= 0 && sx < si;
          d[(c * s + static_cast<std::size_t>(y)) * s + static_cast<std::size_t>(x)] =
              inside ? lut[src[(c * s + static_cast<std::size_t>(sy)) * s + static_cast<std::size_t>(sx)]] : lut[0];
        }
      }
    }
  }
  return out;
}

Tensor concept_batch(const ImageSet& set, std::span<const std::size_t> idx) {
  const auto k = static_cast<std::size_t>(set.num_concepts);
  Tensor out({idx.size(), k});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    for (std::size_t j = 0; j < k; ++j) out[b * k + j] = set.concepts[idx[b] * k + j];
  }
  return out;
}

// --- configuration ------------------------------------------------------------

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw InvalidConfigError(msg);
  };
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  require(decay_every >= 1, "decay_every must be at least 1");
  require(lambda0 >= 0.0, "lambda0 must be non-negative");
  require(lambda_decay > 0.0 && lambda_decay <= 1.0, "lambda_decay must lie in (0, 1]");
  require(epochs >= 0, "epochs must be non-negative");
  require(batch_size >= 1, "batch_size must be positive");
  require(crop_padding >= 0, "crop_padding must be non-negative");
}

double TrainConfig::lambda_at(int epoch) const { return lambda0 * std::pow(lambda_decay, epoch); }

double TrainConfig::lr_at(int epoch) const { return learning_rate * std::pow(lr_decay, epoch / decay_every); }

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"dropout", c.dropout},
          {"lr_decay", c.lr_decay},           {"decay_every", c.decay_every},
          {"lambda0", c.lambda0},             {"lambda_decay", c.lambda_decay},
          {"epochs", c.epochs},               {"batch_size", c.batch_size},
          {"seed", c.seed},                   {"bottleneck", models::to_string(c.bottleneck)},
          {"random_crop", c.random_crop},     {"crop_padding", c.crop_padding}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.dropout = j.value("dropout", c.dropout);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.lambda0 = j.value("lambda0", c.lambda0);
  c.lambda_decay = j.value("lambda_decay", c.lambda_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.bottleneck = models::bottleneck_from_string(j.value("bottleneck", std::string("soft")));
  c.random_crop = j.value("random_crop", c.random_crop);
  c.crop_padding = j.value("crop_padding", c.crop_padding);
  c.validate();
  return c;
}

// --- loss and optimizer -----------------------------------------------------

Var joint_loss(Var class_logits, const std::optional<Var>& concept_logits, std::span<const int> labels,
               const Tensor& concept_targets, double lambda) {
  if (lambda < 0.0) throw InvalidConfigError("concept-loss weight must be non-negative");
  Var loss = ad::softmax_cross_entropy(class_logits, labels);
  if (concept_logits && lambda > 0.0) {
    loss = ad::add(loss, ad::scale(ad::binary_cross_entropy(*concept_logits, concept_targets),
                                   static_cast<float>(lambda)));
  }
  return loss;
}

Adam::Adam(std::vector<ad::Parameter>& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.numel(), 0.0f);
    v_.emplace_back(p.value.numel(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto step = static_cast<float>(lr / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto& p = (*params_)[i];
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

// --- metrics ----------------------------------------------------------------

double mpo(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth, std::size_t k,
           std::size_t m) {
  if (predicted.size() != truth.size() || k == 0 || predicted.size() % k != 0) {
    throw ShapeError("mpo: predicted has " + std::to_string(predicted.size()) + " bits, truth has " +
                     std::to_string(truth.size()) + ", k = " + std::to_string(k));
  }
  if (m > k) throw InvalidConfigError("mpo: m must not exceed k");
  const std::size_t rows = predicted.size() / k;
  if (rows == 0) throw InvalidConfigError("mpo: no rows");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t wrong = 0;
    for (std::size_t j = 0; j < k; ++j) wrong += predicted[r * k + j] != truth[r * k + j];
    hits += wrong >= m;
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

std::vector<double> mpo_curve(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                              std::size_t k) {
  std::vector<double> out;
  for (std::size_t m = 1; m <= k; ++m) out.push_back(mpo(predicted, truth, k, m));
  return out;
}

CISummary aggregate_ci(std::span<const double> values) {
  if (values.size() < 2) throw InvalidConfigError("aggregate_ci needs at least two values");
  CISummary s;
  s.n = values.size();
  const double n = static_cast<double>(s.n);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  s.half_width = boost::math::quantile(dist, 0.975) * s.sd / std::sqrt(n);
  return s;
}

namespace {

Tensor model_input(const models::ConceptModel& model, const ImageSet& set, std::span<const std::size_t> idx,
                   Rng* crop_rng, int pad) {
  if (model.variant() == Variant::oracle) return concept_batch(set, idx);
  return make_batch(set, idx, crop_rng, pad);
}

std::vector<int> gather_labels(const ImageSet& set, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(set.labels[i]);
  return out;
}

int argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t p = logits.dim(1);
  const float* r = logits.data() + row * p;
  return static_cast<int>(std::max_element(r, r + p) - r);
}

}  // namespace

EvalResult evaluate(models::ConceptModel& model, const ImageSet& set, int batch_size) {
  EvalResult res;
  if (set.size() == 0) return res;
  const bool concepts = models::has_concepts(model.variant()) && model.variant() != Variant::oracle;
  const auto k = static_cast<std::size_t>(set.num_concepts);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(set.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    const auto out = model.forward(tape, tape.input(model_input(model, set, idx, nullptr, 0)), false);
    const auto labels = gather_labels(set, idx);
    loss_sum += ad::softmax_cross_entropy(out.class_logits, std::span<const int>(labels)).value()[0] *
                static_cast<double>(idx.size());
    const auto& logits = out.class_logits.value();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const int pred = argmax_row(logits, b);
      res.predictions.push_back(pred);
      correct += pred == labels[b];
    }
    if (concepts) {
      for (float g : out.concept_logits->value().values()) res.concept_bits.push_back(g > 0.0f ? 1 : 0);
    }
  }
  const double n = static_cast<double>(set.size());
  res.accuracy = static_cast<double>(correct) / n;
  res.loss = loss_sum / n;
  if (concepts) {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < res.concept_bits.size(); ++i) agree += res.concept_bits[i] == set.concepts[i];
    res.concept_accuracy = static_cast<double>(agree) / static_cast<double>(res.concept_bits.size());
    res.mpo = mpo_curve(res.concept_bits, set.concepts, k);
  }
  return res;
}

// --- training ----------------------------------------------------------------

nlohmann::json to_json(const RunResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"lambda", e.lambda},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy}});
  }
  return {{"model", r.model_config},
          {"train", config_to_json(r.train_config)},
          {"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_val_accuracy", r.best_val_accuracy},
          {"test_accuracy", r.test_accuracy},
          {"test_concept_accuracy", r.test_concept_accuracy},
          {"mpo", r.mpo},
          {"wall_seconds", r.wall_seconds}};
}

RunResult train(models::ConceptModel& model, const ImageSet& train_set, const ImageSet& val_set,
                const ImageSet& test_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.model_config = models::config_to_json(model.config());
  result.train_config = config;

  const bool oracle = model.variant() == Variant::oracle;
  Adam adam(model.parameters());
  std::mt19937_64 dropout_rng(derive_seed(config.seed, {label_hash("dropout")}));

  auto snapshot = [&] {
    std::vector<Tensor> values;
    for (const auto& p : model.parameters()) values.push_back(p.value);
    return values;
  };
  std::vector<Tensor> best = snapshot();
  result.best_val_accuracy = val_set.size() > 0 ? evaluate(model, val_set).accuracy : 0.0;

  std::vector<std::size_t> order(train_set.size());
  std::vector<std::size_t> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = config.lr_at(epoch);
    stats.lambda = config.lambda_at(epoch);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, {label_hash("shuffle"), static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Rng crop_rng(derive_seed(config.seed, {label_hash("crop"), static_cast<std::uint64_t>(epoch)}));
    Rng* crop = (config.random_crop && !oracle) ? &crop_rng : nullptr;

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto labels = gather_labels(train_set, batch);
      ad::Tape tape;
      const auto x = tape.input(model_input(model, train_set, batch, crop, config.crop_padding));
      const auto out = model.forward(tape, x, ad::Mode::train, dropout_rng, true);
      const auto targets = concept_batch(train_set, batch);
      const auto loss = joint_loss(out.class_logits, oracle ? std::nullopt : out.concept_logits,
                                   std::span<const int>(labels), targets, stats.lambda);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + " (lr " + std::to_string(stats.lr) + ")");
      }
      model.zero_grad();
      tape.backward(loss);
      adam.step(stats.lr);
      loss_sum += lv * static_cast<double>(batch.size());
      const auto& logits = out.class_logits.value();
      for (std::size_t b = 0; b < batch.size(); ++b) correct += argmax_row(logits, b) == labels[b];
    }
    const double n = std::max<double>(1.0, static_cast<double>(train_set.size()));
    stats.train_loss = loss_sum / n;
    stats.train_accuracy = static_cast<double>(correct) / n;
    if (val_set.size() > 0) {
      const auto v = evaluate(model, val_set);
      stats.val_loss = v.loss;
      stats.val_accuracy = v.accuracy;
      if (v.accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = v.accuracy;
        result.best_epoch = epoch;
        best = snapshot();
      }
    }
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }

  for (std::size_t i = 0; i < best.size(); ++i) model.parameters()[i].value = best[i];
  if (test_set.size() > 0) {
    const auto t = evaluate(model, test_set);
    result.test_accuracy = t.accuracy;
    result.test_concept_accuracy = t.concept_accuracy;
    result.mpo = t.mpo;
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

models::ModelConfig model_config_for(Variant variant, const datagen::DatasetConfig& data, const TrainConfig& train,
                                     int image_size) {
  models::ModelConfig m;
  m.variant = variant;
  m.num_classes = data.num_classes();
  m.num_concepts = data.num_concepts;
  m.image_size = image_size > 0 ? image_size : data.image_size;
  m.dropout = train.dropout;
  m.bottleneck = train.bottleneck;
  return m;
}

// --- hyperparameter search and subset experiments -------------------------------

std::vector<TrainConfig> hyperparameter_grid(Variant variant, const TrainConfig& base) {
  static constexpr double kLearningRates[] = {0.05, 0.01, 0.005, 0.001};
  static constexpr double kDropouts[] = {0.0, 0.2, 0.4};
  static constexpr double kStandardDecays[] = {0.1, 0.5, 0.7, 1.0};
  static constexpr std::pair<double, double> kConceptTuples[] = {{100, 0.8}, {100, 0.9}, {5, 1}, {10, 1}};
  const bool standard_grid = variant == Variant::standard || variant == Variant::oracle;
  std::vector<TrainConfig> grid;
  for (double lr : kLearningRates) {
    for (double d : kDropouts) {
      for (std::size_t i = 0; i < 4; ++i) {
        TrainConfig c = base;
        c.learning_rate = lr;
        c.dropout = d;
        if (standard_grid) {
          c.lr_decay = kStandardDecays[i];
          c.lambda0 = 0.0;
          c.lambda_decay = 1.0;
        } else {
          c.lr_decay = 0.7;
          c.lambda0 = kConceptTuples[i].first;
          c.lambda_decay = kConceptTuples[i].second;
        }
        grid.push_back(c);
      }
    }
  }
  return grid;
}

std::pair<ImageSet, ImageSet> subset_sets(const datagen::DatasetManifest& manifest, const ImageSet& all_train_val,
                                          int per_class_n, std::uint64_t seed) {
  const auto sub = datagen::subset_manifest(manifest, per_class_n, seed);
  std::unordered_map<std::int64_t, std::size_t> row_of;
  for (std::size_t i = 0; i < all_train_val.sample_ids.size(); ++i) row_of[all_train_val.sample_ids[i]] = i;
  std::vector<std::size_t> train_rows, val_rows;
  for (const auto& r : sub.records) {
    if (r.split == datagen::Split::test) continue;
    const auto it = row_of.find(r.sample_id);
    if (it == row_of.end()) throw InvalidConfigError("subset sample " + std::to_string(r.sample_id) + " not loaded");
    (r.split == datagen::Split::train ? train_rows : val_rows).push_back(it->second);
  }
  return {all_train_val.subset(train_rows), all_train_val.subset(val_rows)};
}

SubsetExperiment subset_experiment(const datagen::DatasetManifest& manifest, const ImageSet& all_train_val,
                                   const ImageSet& test, const SubsetOptions& options, const ProgressFn& progress) {
  if (options.seeds.empty()) throw InvalidConfigError("subset_experiment needs at least one seed");
  SubsetExperiment out;
  for (Variant variant : options.variants) {
    for (int size : options.sizes) {
      const auto [train_set, val_set] = subset_sets(manifest, all_train_val, size, options.subset_seed);
      auto grid = options.grid.empty() ? hyperparameter_grid(variant, options.base) : options.grid;
      if (options.max_trials > 0 && static_cast<std::size_t>(options.max_trials) < grid.size()) {
        Rng rng(derive_seed(options.search_seed, {label_hash(models::to_string(variant)),
                                                  static_cast<std::uint64_t>(size)}));
        rng.shuffle(std::span<TrainConfig>(grid));
        grid.resize(static_cast<std::size_t>(options.max_trials));
      }
      const std::uint64_t first_seed = options.seeds.front();
      std::optional<std::pair<TrainConfig, RunResult>> winner;
      for (std::size_t t = 0; t < grid.size(); ++t) {
        TrainConfig cfg = grid[t];
        cfg.seed = first_seed;
        models::ConceptModel model(model_config_for(variant, manifest.config, cfg), first_seed);
        auto run = train(model, train_set, val_set, test, cfg);
        if (progress) {
          std::ostringstream msg;
          msg << models::to_string(variant) << " n=" << size << " trial " << (t + 1) << "/" << grid.size()
              << " val=" << run.best_val_accuracy;
          progress(msg.str());
        }
        if (!winner || run.best_val_accuracy > winner->second.best_val_accuracy) winner.emplace(cfg, std::move(run));
      }
      for (std::uint64_t seed : options.seeds) {
        SubsetRow row;
        row.variant = variant;
        row.size = size;
        row.seed = seed;
        row.chosen = winner->first;
        row.chosen.seed = seed;
        if (seed == first_seed) {
          row.run = winner->second;
        } else {
          models::ConceptModel model(model_config_for(variant, manifest.config, row.chosen), seed);
          row.run = train(model, train_set, val_set, test, row.chosen);
        }
        if (progress) {
          progress(std::string(models::to_string(variant)) + " n=" + std::to_string(size) + " seed " +
                   std::to_string(seed) + " test=" + std::to_string(row.run.test_accuracy));
        }
        out.rows.push_back(std::move(row));
      }
    }
  }
  out.summary = summarize(out.rows);
  return out;
}

std::vector<SubsetSummary> summarize(const std::vector<SubsetRow>& rows) {
  std::map<std::pair<int, int>, std::vector<const SubsetRow*>> groups;
  std::vector<std::pair<int, int>> order;
  for (const auto& r : rows) {
    const std::pair<int, int> key{static_cast<int>(r.variant), r.size};
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<SubsetSummary> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    if (g.size() < 2) continue;
    SubsetSummary s;
    s.variant = g.front()->variant;
    s.size = g.front()->size;
    std::vector<double> acc;
    for (const auto* r : g) acc.push_back(r->run.test_accuracy);
    s.accuracy = aggregate_ci(acc);
    const std::size_t k = g.front()->run.mpo.size();
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<double> vals;
      for (const auto* r : g) vals.push_back(r->run.mpo.at(m));
      s.mpo.push_back(aggregate_ci(vals));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_results_csv(const fs::path& path, const std::vector<SubsetRow>& rows, const datagen::DatasetConfig& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const int k = data.num_concepts;
  out << "variant,classes,concepts,s,subset_size,seed,test_accuracy,concept_accuracy,best_epoch";
  for (int m = 1; m <= k; ++m) out << ",mpo_" << m;
  out << ",learning_rate,dropout,lr_decay,lambda0,lambda_decay,epochs,batch_size,bottleneck\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << models::to_string(r.variant) << ',' << data.num_classes() << ',' << k << ',' << data.s << ',' << r.size
        << ',' << r.seed << ',' << r.run.test_accuracy << ',';
    if (!r.run.mpo.empty()) out << r.run.test_concept_accuracy;
    out << ',' << r.run.best_epoch;
    for (int m = 0; m < k; ++m) {
      out << ',';
      if (static_cast<std::size_t>(m) < r.run.mpo.size()) out << r.run.mpo[static_cast<std::size_t>(m)];
    }
    const auto& c = r.chosen;
    out << ',' << c.learning_rate << ',' << c.dropout << ',' << c.lr_decay << ',' << c.lambda0 << ','
        << c.lambda_decay << ',' << c.epochs << ',' << c.batch_size << ',' << models::to_string(c.bottleneck)
        << '\n';
  }
}

void write_summary_csv(const fs::path& path, const std::vector<SubsetSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  std::size_t k = 0;
  for (const auto& r : rows) k = std::max(k, r.mpo.size());
  out << "variant,subset_size,n,accuracy_mean,accuracy_ci95";
  for (std::size_t m = 1; m <= k; ++m) out << ",mpo_" << m << "_mean,mpo_" << m << "_ci95";
  out << '\n' << std::setprecision(10);
  for (const auto& r : rows) {
    out << models::to_string(r.variant) << ',' << r.size << ',' << r.accuracy.n << ',' << r.accuracy.mean << ','
        << r.accuracy.half_width;
    for (std::size_t m = 0; m < k; ++m) {
      if (m < r.mpo.size()) {
        out << ',' << r.mpo[m].mean << ',' << r.mpo[m].half_width;
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
}

}  // namespace hcbm::training
