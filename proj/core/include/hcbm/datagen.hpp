#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcbm/image.hpp"
#include "hcbm/rng.hpp"

namespace hcbm::datagen {

/// The six shape kinds in alphabetical order. Class enumeration uses the
/// first `num_shapes` kinds of this order.
enum class ShapeKind : std::uint8_t { circle, hexagon, pentagon, square, triangle, wedge };

inline constexpr std::array<ShapeKind, 6> kAllShapes = {
    ShapeKind::circle, ShapeKind::hexagon,  ShapeKind::pentagon,
    ShapeKind::square, ShapeKind::triangle, ShapeKind::wedge};

std::string_view to_string(ShapeKind kind);
ShapeKind shape_from_string(std::string_view name);

/// Bit positions of the concepts. Indices 5-8 only exist in 9-concept data.
enum Concept : std::size_t {
  kBigShapes = 0,
  kThickOutline = 1,
  kBlueFace = 2,
  kRedOutline = 3,
  kStripes = 4,
  kMagentaUpper = 5,
  kIndigoLower = 6,
  kUpperStripes = 7,
  kLowerStripes = 8,
};

std::string_view concept_name(std::size_t index);

struct ClassSpec {
  ShapeKind shape_a = ShapeKind::circle;
  ShapeKind shape_b = ShapeKind::circle;
  int class_index = 0;

  friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

/// Binary concept labels of one image, k in {5, 9}.
class ConceptVector {
 public:
  ConceptVector() = default;
  explicit ConceptVector(std::vector<std::uint8_t> bits);
  /// The low k bits of `code`, bit j -> concept j.
  static ConceptVector from_code(std::uint32_t code, std::size_t k);

  [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }
  [[nodiscard]] bool operator[](std::size_t i) const { return bits_.at(i) != 0; }
  void set(std::size_t i, bool v) { bits_.at(i) = v ? 1 : 0; }
  [[nodiscard]] const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  [[nodiscard]] std::uint32_t code() const;

  friend bool operator==(const ConceptVector&, const ConceptVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct SplitFractions {
  double train = 0.5;
  double val = 0.3;
  double test = 0.2;
};

struct DatasetConfig {
  int num_shapes = 4;
  int num_concepts = 9;
  double s = 0.98;
  int images_per_class = 1000;
  int image_size = 64;
  SplitFractions split{};
  std::uint64_t master_seed = 0;
  /// Worker threads for rendering; output does not depend on it.
  int threads = 1;

  /// Throws InvalidConfigError naming the offending field.
  void validate() const;
  [[nodiscard]] int num_classes() const { return num_shapes * (num_shapes + 1) / 2; }
};

enum class Split : std::uint8_t { train, val, test };
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct SampleRecord {
  std::int64_t sample_id = 0;
  int class_index = 0;
  int ordinal = 0;
  ConceptVector concepts;
  std::string image_ref;
  Split split = Split::train;
  std::uint64_t seed = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetManifest {
  DatasetConfig config;
  std::vector<ClassSpec> classes;
  std::vector<ConceptVector> prototypes;  // indexed by class
  std::vector<SampleRecord> records;

  [[nodiscard]] std::vector<const SampleRecord*> select(Split split) const;
};

// --- operations -----------------------------------------------------------

/// All unordered pairs (with repetition) of the first `num_shapes` kinds,
/// canonically ordered (a <= b), indexed densely in lexicographic order.
std::vector<ClassSpec> enumerate_classes(int num_shapes);

/// Per-class concept prototypes drawn without replacement from the 2^k
/// bit-vectors (with replacement only once 2^k < num_classes).
std::vector<ConceptVector> assign_prototypes(int num_classes, int k, std::uint64_t seed);

/// Each output bit equals the prototype bit with probability s.
ConceptVector sample_concepts(const ConceptVector& prototype, double s, Rng& rng);

/// Geometry of one rendered shape, in pixel units.
struct ShapeLayout {
  ShapeKind kind = ShapeKind::circle;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;    // circumradius; the shape lies within this disc
  double rotation = 0.0;  // radians
  double outline_width = 1.0;
  double stripe_width = 1.0;
  bool striped = false;
};

enum class PixelRole : std::uint8_t { outside, outline, stripe, interior };

/// Role of the pixel whose centre is (px, py) with respect to one shape.
PixelRole classify_pixel(const ShapeLayout& shape, double px, double py);

/// Positions, sizes and rotations of the two shapes, as render_image uses them.
std::array<ShapeLayout, 2> layout_shapes(const ClassSpec& cls, const ConceptVector& concepts,
                                         std::uint64_t sample_seed, int image_size);

namespace detail {
/// Rejection-samples a centre so a disc of `radius` lies inside the canvas.
std::pair<double, double> place_shape(Rng& rng, double radius, int image_size, int retries);
}  // namespace detail

/// Deterministic in all arguments. Throws PlacementError when a shape cannot
/// be placed inside the canvas within the retry budget.
RgbImage render_image(const ClassSpec& cls, const ConceptVector& concepts,
                      std::uint64_t sample_seed, int image_size);

/// Background colour of pixel (x, y) for the given concepts (black for k=5).
Rgb background_color(const ConceptVector& concepts, int x, int y, int image_size);

namespace colors {
inline constexpr Rgb black{0, 0, 0};
inline constexpr Rgb blue{0, 0, 255};
inline constexpr Rgb yellow{255, 255, 0};
inline constexpr Rgb red{255, 0, 0};
inline constexpr Rgb white{255, 255, 255};
inline constexpr Rgb magenta{255, 0, 255};
inline constexpr Rgb pale_green{152, 251, 152};
inline constexpr Rgb indigo{75, 0, 130};
inline constexpr Rgb dark_sea_green{143, 188, 143};
}  // namespace colors

/// Per-sample seed: derive_seed(master, {class_index, ordinal}).
std::uint64_t sample_seed(std::uint64_t master_seed, int class_index, int ordinal);

/// Builds the manifest (records, prototypes, splits) without touching disk.
DatasetManifest plan_dataset(const DatasetConfig& config);

/// Renders every sample into `output_dir/images`, writes manifest.json and
/// records.csv. An `INCOMPLETE` marker file exists until the run finishes.
DatasetManifest generate_dataset(const DatasetConfig& config,
                                 const std::filesystem::path& output_dir);

/// Keeps exactly `per_class_n` train+val records per class (train:val ratio
/// preserved); subsets for larger n contain those for smaller n under the
/// same seed. Test records are untouched.
DatasetManifest subset_manifest(const DatasetManifest& manifest, int per_class_n,
                                std::uint64_t seed);

// --- persistence ------------------------------------------------------------

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kRecordsFile = "records.csv";
inline constexpr std::string_view kIncompleteMarker = "INCOMPLETE";

nlohmann::json config_to_json(const DatasetConfig& config);
DatasetConfig config_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

}  // namespace hcbm::datagen
