#include "hcbm/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "hcbm/error.hpp"

namespace hcbm::datagen {
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 6> kShapeNames = {"circle", "hexagon", "pentagon",
                                                         "square", "triangle", "wedge"};
constexpr std::array<std::string_view, 9> kConceptNames = {
    "big_shapes",      "thick_outline",   "blue_facecolor",      "red_outline",
    "stripes",         "magenta_upper_bg", "indigo_lower_bg",    "upper_bg_stripes",
    "lower_bg_stripes"};

constexpr int kPlacementRetries = 100;
constexpr double kSmallSpan[2] = {0.18, 0.26};
constexpr double kBigSpan[2] = {0.30, 0.42};
constexpr double kThinOutlinePx = 1.0;  // pixels at 64x64
constexpr double kThickOutlinePx = 3.0;
constexpr double kStripeWidth = 1.5;
// Wedge: quarter-disc sector of radius 1.4R with its apex 0.9R behind the
// centre, which keeps the whole sector inside the circumradius R.
constexpr double kWedgeApexOffset = 0.9;
constexpr double kWedgeRadius = 1.4;

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidConfigError(what);
}

double polygon_depth(int sides, double radius, double u, double v) {
  const double apothem = radius * std::cos(std::numbers::pi / sides);
  double depth = std::numeric_limits<double>::infinity();
  for (int i = 0; i < sides; ++i) {
    const double phi = std::numbers::pi / sides + 2.0 * std::numbers::pi * i / sides;
    depth = std::min(depth, apothem - (u * std::cos(phi) + v * std::sin(phi)));
  }
  return depth;
}

double wedge_depth(double radius, double u, double v) {
  const double ux = u + kWedgeApexOffset * radius;
  const double rho = kWedgeRadius * radius;
  const double angle = std::atan2(v, ux);
  constexpr double half = std::numbers::pi / 4.0;
  if (std::abs(angle) > half) return -1.0;
  const double to_arc = rho - std::hypot(ux, v);
  const double to_upper = std::abs(-ux * std::sin(half) + v * std::cos(half));
  const double to_lower = std::abs(ux * std::sin(half) + v * std::cos(half));
  return std::min({to_arc, to_upper, to_lower});
}

/// Signed distance from the boundary measured inward (negative outside).
double inner_depth(const ShapeLayout& s, double u, double v) {
  switch (s.kind) {
    case ShapeKind::circle:
      return s.radius - std::hypot(u, v);
    case ShapeKind::triangle:
      return polygon_depth(3, s.radius, u, v);
    case ShapeKind::square:
      return polygon_depth(4, s.radius, u, v);
    case ShapeKind::pentagon:
      return polygon_depth(5, s.radius, u, v);
    case ShapeKind::hexagon:
      return polygon_depth(6, s.radius, u, v);
    case ShapeKind::wedge:
      return wedge_depth(s.radius, u, v);
  }
  return -1.0;
}

}  // namespace

std::string_view to_string(ShapeKind kind) { return kShapeNames.at(static_cast<std::size_t>(kind)); }

ShapeKind shape_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i) {
    if (kShapeNames[i] == name) return static_cast<ShapeKind>(i);
  }
  throw InvalidConfigError("unknown shape '" + std::string(name) + "'");
}

std::string_view concept_name(std::size_t index) { return kConceptNames.at(index); }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw InvalidConfigError("unknown split '" + std::string(name) + "'");
}

ConceptVector::ConceptVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  require(bits_.size() == 5 || bits_.size() == 9,
          "concept vector length must be 5 or 9, got " + std::to_string(bits_.size()));
  for (auto& b : bits_) b = b ? 1 : 0;
}

ConceptVector ConceptVector::from_code(std::uint32_t code, std::size_t k) {
  std::vector<std::uint8_t> bits(k);
  for (std::size_t j = 0; j < k; ++j) bits[j] = (code >> j) & 1U;
  return ConceptVector(std::move(bits));
}

std::uint32_t ConceptVector::code() const {
  std::uint32_t c = 0;
  for (std::size_t j = 0; j < bits_.size(); ++j) c |= static_cast<std::uint32_t>(bits_[j]) << j;
  return c;
}

void DatasetConfig::validate() const {
  require(num_shapes >= 1 && num_shapes <= 6, "num_shapes must be in [1, 6]");
  require(num_concepts == 5 || num_concepts == 9, "num_concepts must be 5 or 9");
  require(s >= 0.5 && s <= 1.0, "s must be in [0.5, 1]");
  require(images_per_class >= 0, "images_per_class must be >= 0");
  require(image_size >= 8, "image_size must be >= 8");
  require(split.train > 0 && split.train < 1 && split.val > 0 && split.val < 1 && split.test > 0 &&
              split.test < 1,
          "split fractions must each lie in (0, 1)");
  require(std::abs(split.train + split.val + split.test - 1.0) < 1e-9,
          "split fractions must sum to 1");
  require(threads >= 1, "threads must be >= 1");
}

std::vector<const SampleRecord*> DatasetManifest::select(Split split) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::vector<ClassSpec> enumerate_classes(int num_shapes) {
  require(num_shapes >= 1 && num_shapes <= 6, "num_shapes must be in [1, 6]");
  std::vector<ClassSpec> classes;
  for (int a = 0; a < num_shapes; ++a) {
    for (int b = a; b < num_shapes; ++b) {
      classes.push_back({kAllShapes[static_cast<std::size_t>(a)],
                         kAllShapes[static_cast<std::size_t>(b)],
                         static_cast<int>(classes.size())});
    }
  }
  return classes;
}

std::vector<ConceptVector> assign_prototypes(int num_classes, int k, std::uint64_t seed) {
  require(num_classes >= 1, "num_classes must be >= 1");
  require(k == 5 || k == 9, "k must be 5 or 9");
  Rng rng(derive_seed(seed, {label_hash("prototypes")}));
  const std::uint32_t total = 1U << k;
  std::vector<std::uint32_t> codes(total);
  std::vector<ConceptVector> out;
  out.reserve(static_cast<std::size_t>(num_classes));
  while (out.size() < static_cast<std::size_t>(num_classes)) {
    for (std::uint32_t i = 0; i < total; ++i) codes[i] = i;
    // Partial Fisher-Yates: each pass yields up to 2^k distinct codes.
    for (std::uint32_t i = 0; i < total && out.size() < static_cast<std::size_t>(num_classes); ++i) {
      const auto j = i + static_cast<std::uint32_t>(rng.below(total - i));
      std::swap(codes[i], codes[j]);
      out.push_back(ConceptVector::from_code(codes[i], static_cast<std::size_t>(k)));
    }
  }
  return out;
}

ConceptVector sample_concepts(const ConceptVector& prototype, double s, Rng& rng) {
  require(s >= 0.5 && s <= 1.0, "s must be in [0.5, 1]");
  ConceptVector out = prototype;
  for (std::size_t j = 0; j < prototype.size(); ++j) {
    const bool keep = rng.bernoulli(s);
    out.set(j, keep ? prototype[j] : !prototype[j]);
  }
  return out;
}

PixelRole classify_pixel(const ShapeLayout& s, double px, double py) {
  const double dx = px - s.cx;
  const double dy = py - s.cy;
  if (dx * dx + dy * dy > s.radius * s.radius) return PixelRole::outside;
  const double c = std::cos(s.rotation);
  const double sn = std::sin(s.rotation);
  const double u = dx * c + dy * sn;
  const double v = -dx * sn + dy * c;
  const double depth = inner_depth(s, u, v);
  if (depth < 0.0) return PixelRole::outside;
  if (depth < s.outline_width) return PixelRole::outline;
  if (s.striped) {
    for (double centre : {-0.5 * s.radius, 0.0, 0.5 * s.radius}) {
      if (std::abs(u - centre) < 0.5 * s.stripe_width) return PixelRole::stripe;
    }
  }
  return PixelRole::interior;
}

namespace detail {

std::pair<double, double> place_shape(Rng& rng, double radius, int image_size, int retries) {
  const double side = image_size;
  for (int attempt = 0; attempt < retries; ++attempt) {
    const double cx = rng.uniform(0.0, side);
    const double cy = rng.uniform(0.0, side);
    if (cx - radius >= 0.0 && cx + radius <= side && cy - radius >= 0.0 && cy + radius <= side) {
      return {cx, cy};
    }
  }
  throw PlacementError("could not place a shape of radius " + std::to_string(radius) +
                       " inside a " + std::to_string(image_size) + "px canvas after " +
                       std::to_string(retries) + " attempts");
}

}  // namespace detail

std::array<ShapeLayout, 2> layout_shapes(const ClassSpec& cls, const ConceptVector& concepts,
                                         std::uint64_t seed, int image_size) {
  require(concepts.size() == 5 || concepts.size() == 9, "concept vector length must be 5 or 9");
  require(image_size >= 8, "image_size must be >= 8");
  Rng rng(derive_seed(seed, {label_hash("layout")}));
  const double scale = image_size / 64.0;
  const bool big = concepts[kBigShapes];
  const double outline =
      std::max(1.0, (concepts[kThickOutline] ? kThickOutlinePx : kThinOutlinePx) * scale);
  std::array<ShapeLayout, 2> shapes;
  const std::array<ShapeKind, 2> kinds = {cls.shape_a, cls.shape_b};
  for (std::size_t i = 0; i < 2; ++i) {
    ShapeLayout& s = shapes[i];
    s.kind = kinds[i];
    const double* span = big ? kBigSpan : kSmallSpan;
    s.radius = 0.5 * rng.uniform(span[0], span[1]) * image_size;
    s.rotation = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::tie(s.cx, s.cy) = detail::place_shape(rng, s.radius, image_size, kPlacementRetries);
    s.outline_width = outline;
    s.stripe_width = std::max(1.0, kStripeWidth * scale);
    s.striped = concepts[kStripes];
  }
  return shapes;
}

Rgb background_color(const ConceptVector& concepts, int /*x*/, int y, int image_size) {
  if (concepts.size() < 9) return colors::black;
  const int half = image_size / 2;
  const bool upper = y < half;
  const int row = upper ? y : y - half;
  const int height = upper ? half : image_size - half;
  const bool striped = concepts[upper ? kUpperStripes : kLowerStripes];
  // Four bands per half: the odd eighths of the half.
  if (striped && static_cast<int>(std::floor(8.0 * row / height)) % 2 == 1) return colors::black;
  if (upper) return concepts[kMagentaUpper] ? colors::magenta : colors::pale_green;
  return concepts[kIndigoLower] ? colors::indigo : colors::dark_sea_green;
}

RgbImage render_image(const ClassSpec& cls, const ConceptVector& concepts, std::uint64_t seed,
                      int image_size) {
  const auto shapes = layout_shapes(cls, concepts, seed, image_size);
  RgbImage img(image_size, image_size);
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) img.set(x, y, background_color(concepts, x, y, image_size));
  }
  const Rgb face = concepts[kBlueFace] ? colors::blue : colors::yellow;
  const Rgb line = concepts[kRedOutline] ? colors::red : colors::white;
  for (const auto& s : shapes) {
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.radius)));
    const int x1 = std::min(image_size - 1, static_cast<int>(std::ceil(s.cx + s.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.radius)));
    const int y1 = std::min(image_size - 1, static_cast<int>(std::ceil(s.cy + s.radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        switch (classify_pixel(s, x + 0.5, y + 0.5)) {
          case PixelRole::outside:
            break;
          case PixelRole::outline:
          case PixelRole::stripe:
            img.set(x, y, line);
            break;
          case PixelRole::interior:
            img.set(x, y, face);
            break;
        }
      }
    }
  }
  return img;
}

std::uint64_t sample_seed(std::uint64_t master_seed, int class_index, int ordinal) {
  return derive_seed(master_seed,
                     {static_cast<std::uint64_t>(class_index), static_cast<std::uint64_t>(ordinal)});
}

namespace {

// Train and train+val boundaries are rounded cumulatively over classes and
// the running totals are tracked, so dataset-wide counts stay within one of
// f*N even when the per-class count is tiny.
struct SplitCounts {
  int train = 0;
  int val = 0;
};

std::vector<SplitCounts> apportion(const SplitFractions& f, int per_class, int num_classes) {
  std::vector<SplitCounts> out(static_cast<std::size_t>(num_classes));
  long long done_train = 0, done_trainval = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double upto = static_cast<double>(per_class) * (c + 1);
    const long long t = std::llround(f.train * upto) - done_train;
    const long long tv = std::llround((f.train + f.val) * upto) - done_trainval;
    const int n_train = static_cast<int>(std::clamp<long long>(t, 0, per_class));
    const int n_trainval = static_cast<int>(std::clamp<long long>(tv, n_train, per_class));
    out[static_cast<std::size_t>(c)] = {n_train, n_trainval - n_train};
    done_train += n_train;
    done_trainval += n_trainval;
  }
  return out;
}

}  // namespace

DatasetManifest plan_dataset(const DatasetConfig& config) {
  config.validate();
  DatasetManifest m;
  m.config = config;
  m.classes = enumerate_classes(config.num_shapes);
  const int nc = static_cast<int>(m.classes.size());
  m.prototypes = assign_prototypes(nc, config.num_concepts, config.master_seed);
  const int n = config.images_per_class;
  const auto counts = apportion(config.split, n, nc);
  m.records.reserve(static_cast<std::size_t>(nc) * static_cast<std::size_t>(n));
  for (int c = 0; c < nc; ++c) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng split_rng(derive_seed(config.master_seed, {label_hash("split"), static_cast<std::uint64_t>(c)}));
    split_rng.shuffle(std::span<int>(order));
    const int n_train = counts[static_cast<std::size_t>(c)].train;
    const int n_val = counts[static_cast<std::size_t>(c)].val;
    std::vector<Split> split_of(static_cast<std::size_t>(n), Split::test);
    for (int r = 0; r < n; ++r) {
      const auto ord = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
      split_of[ord] = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
    }
    for (int i = 0; i < n; ++i) {
      SampleRecord rec;
      rec.sample_id = static_cast<std::int64_t>(c) * n + i;
      rec.class_index = c;
      rec.ordinal = i;
      rec.seed = sample_seed(config.master_seed, c, i);
      Rng concept_rng(derive_seed(rec.seed, {label_hash("concepts")}));
      rec.concepts = sample_concepts(m.prototypes[static_cast<std::size_t>(c)], config.s, concept_rng);
      rec.image_ref = "images/" + std::to_string(c) + "_" + std::to_string(i) + ".png";
      rec.split = split_of[static_cast<std::size_t>(i)];
      m.records.push_back(std::move(rec));
    }
  }
  return m;
}

DatasetManifest generate_dataset(const DatasetConfig& config, const fs::path& output_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(output_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (output_dir / "images").string() + ": " + ec.message());
  const fs::path marker = output_dir / kIncompleteMarker;
  {
    std::ofstream out(marker);
    if (!out) throw IoError("cannot write " + marker.string());
    out << "generation in progress\n";
  }

  DatasetManifest m = plan_dataset(config);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < m.records.size() && !failed; i = next++) {
      const auto& r = m.records[i];
      try {
        const auto img = render_image(m.classes[static_cast<std::size_t>(r.class_index)],
                                      r.concepts, r.seed, config.image_size);
        write_png(output_dir / r.image_ref, img);
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };
  if (config.threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < config.threads; ++t) pool.emplace_back(worker);
  }
  if (failed) {
    std::ofstream(marker) << "generation failed: " << first_error << "\n";
    throw IoError("dataset generation failed: " + first_error);
  }
  write_manifest(output_dir, m);
  fs::remove(marker, ec);
  return m;
}

DatasetManifest subset_manifest(const DatasetManifest& manifest, int per_class_n, std::uint64_t seed) {
  require(per_class_n >= 0, "per_class_n must be >= 0");
  const auto& split = manifest.config.split;
  const double train_share = split.train / (split.train + split.val);
  const int n_train = static_cast<int>(std::llround(per_class_n * train_share));
  const int n_val = per_class_n - n_train;

  const std::size_t nc = manifest.classes.size();
  std::vector<std::vector<std::size_t>> train_idx(nc), val_idx(nc);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    const auto c = static_cast<std::size_t>(r.class_index);
    if (r.split == Split::train) train_idx.at(c).push_back(i);
    if (r.split == Split::val) val_idx.at(c).push_back(i);
  }
  std::vector<bool> keep(manifest.records.size(), false);
  for (std::size_t c = 0; c < nc; ++c) {
    if (static_cast<int>(train_idx[c].size()) < n_train ||
        static_cast<int>(val_idx[c].size()) < n_val) {
      throw InvalidConfigError(
          "subset of " + std::to_string(per_class_n) + " per class needs " +
          std::to_string(n_train) + " train + " + std::to_string(n_val) + " val images, class " +
          std::to_string(c) + " has " + std::to_string(train_idx[c].size()) + " + " +
          std::to_string(val_idx[c].size()));
    }
    Rng train_rng(derive_seed(seed, {label_hash("subset-train"), c}));
    Rng val_rng(derive_seed(seed, {label_hash("subset-val"), c}));
    train_rng.shuffle(std::span<std::size_t>(train_idx[c]));
    val_rng.shuffle(std::span<std::size_t>(val_idx[c]));
    for (int i = 0; i < n_train; ++i) keep[train_idx[c][static_cast<std::size_t>(i)]] = true;
    for (int i = 0; i < n_val; ++i) keep[val_idx[c][static_cast<std::size_t>(i)]] = true;
  }
  DatasetManifest out;
  out.config = manifest.config;
  out.classes = manifest.classes;
  out.prototypes = manifest.prototypes;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (keep[i] || manifest.records[i].split == Split::test) out.records.push_back(manifest.records[i]);
  }
  return out;
}

nlohmann::json config_to_json(const DatasetConfig& c) {
  return {{"num_shapes", c.num_shapes},
          {"num_concepts", c.num_concepts},
          {"s", c.s},
          {"images_per_class", c.images_per_class},
          {"image_size", c.image_size},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"master_seed", c.master_seed}};
}

DatasetConfig config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.num_shapes = j.at("num_shapes").get<int>();
  c.num_concepts = j.at("num_concepts").get<int>();
  c.s = j.at("s").get<double>();
  c.images_per_class = j.at("images_per_class").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.split.train = j.at("split").at("train").get<double>();
  c.split.val = j.at("split").at("val").get<double>();
  c.split.test = j.at("split").at("test").get<double>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  return c;
}

void write_manifest(const fs::path& dir, const DatasetManifest& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = config_to_json(m.config);
  auto& classes = j["classes"] = nlohmann::json::array();
  for (const auto& c : m.classes) {
    classes.push_back({{"index", c.class_index},
                       {"shapes", {std::string(to_string(c.shape_a)), std::string(to_string(c.shape_b))}}});
  }
  auto& protos = j["prototypes"] = nlohmann::json::array();
  for (const auto& p : m.prototypes) protos.push_back(p.bits());
  {
    std::ofstream out(dir / kManifestFile);
    if (!out) throw IoError("cannot write " + (dir / kManifestFile).string());
    out << j.dump(2) << "\n";
  }

  std::ofstream csv(dir / kRecordsFile);
  if (!csv) throw IoError("cannot write " + (dir / kRecordsFile).string());
  const std::size_t k = static_cast<std::size_t>(m.config.num_concepts);
  csv << "sample_id,class_index";
  for (std::size_t j2 = 0; j2 < k; ++j2) csv << ",c" << j2;
  csv << ",split,seed,image_ref\n";
  for (const auto& r : m.records) {
    csv << r.sample_id << ',' << r.class_index;
    for (std::size_t j2 = 0; j2 < k; ++j2) csv << ',' << (r.concepts[j2] ? 1 : 0);
    csv << ',' << to_string(r.split) << ',' << r.seed << ',' << r.image_ref << '\n';
  }
  if (!csv) throw IoError("write failed: " + (dir / kRecordsFile).string());
}

DatasetManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw IoError("cannot open " + (dir / kManifestFile).string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + (dir / kManifestFile).string() + ": " + e.what());
  }
  DatasetManifest m;
  m.config = config_from_json(j.at("config"));
  for (const auto& c : j.at("classes")) {
    m.classes.push_back({shape_from_string(c.at("shapes").at(0).get<std::string>()),
                         shape_from_string(c.at("shapes").at(1).get<std::string>()),
                         c.at("index").get<int>()});
  }
  for (const auto& p : j.at("prototypes")) m.prototypes.emplace_back(p.get<std::vector<std::uint8_t>>());

  std::ifstream csv(dir / kRecordsFile);
  if (!csv) throw IoError("cannot open " + (dir / kRecordsFile).string());
  const std::size_t k = static_cast<std::size_t>(m.config.num_concepts);
  std::string line;
  std::getline(csv, line);  // header
  std::vector<std::string> fields;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    fields.clear();
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != k + 5) throw IoError("malformed records.csv line: " + line);
    SampleRecord r;
    r.sample_id = std::stoll(fields[0]);
    r.class_index = std::stoi(fields[1]);
    std::vector<std::uint8_t> bits(k);
    for (std::size_t c = 0; c < k; ++c) bits[c] = fields[2 + c] == "1" ? 1 : 0;
    r.concepts = ConceptVector(std::move(bits));
    r.split = split_from_string(fields[2 + k]);
    r.seed = std::stoull(fields[3 + k]);
    r.image_ref = fields[4 + k];
    const auto us = r.image_ref.find('_');
    const auto dot = r.image_ref.rfind('.');
    r.ordinal = (us != std::string::npos && dot != std::string::npos && dot > us)
                    ? std::stoi(r.image_ref.substr(us + 1, dot - us - 1))
                    : 0;
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace hcbm::datagen
