#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "hcbm/datagen.hpp"
#include "hcbm/error.hpp"
#include "stats_oracle.hpp"
#include "test_util.hpp"

namespace hcbm::datagen {
namespace {

using hcbm::testing::TempDir;

TEST(EnumerateClasses, CountsMatchCombinationsWithRepetition) {
  EXPECT_EQ(enumerate_classes(4).size(), 10u);
  EXPECT_EQ(enumerate_classes(5).size(), 15u);
  EXPECT_EQ(enumerate_classes(6).size(), 21u);
  for (int n = 1; n <= 6; ++n) EXPECT_EQ(enumerate_classes(n).size(), static_cast<std::size_t>(n * (n + 1) / 2));
}

TEST(EnumerateClasses, SingleShapeIsPairedWithItself) {
  const auto classes = enumerate_classes(1);
  ASSERT_EQ(classes.size(), 1u);
  EXPECT_EQ(classes[0].shape_a, ShapeKind::circle);
  EXPECT_EQ(classes[0].shape_b, ShapeKind::circle);
}

TEST(EnumerateClasses, CanonicalDenseAndUnique) {
  const auto classes = enumerate_classes(6);
  std::set<std::pair<ShapeKind, ShapeKind>> seen;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    EXPECT_EQ(classes[i].class_index, static_cast<int>(i));
    EXPECT_LE(classes[i].shape_a, classes[i].shape_b);
    EXPECT_TRUE(seen.insert({classes[i].shape_a, classes[i].shape_b}).second);
  }
  // Four shapes use the first four kinds alphabetically.
  for (const auto& c : enumerate_classes(4)) EXPECT_LE(c.shape_b, ShapeKind::square);
}

TEST(EnumerateClasses, RejectsOutOfRange) {
  EXPECT_THROW(enumerate_classes(0), InvalidConfigError);
  EXPECT_THROW(enumerate_classes(7), InvalidConfigError);
}

TEST(ShapeKind, NamesRoundTripInAlphabeticalOrder) {
  std::vector<std::string> names;
  for (auto k : kAllShapes) {
    names.emplace_back(to_string(k));
    EXPECT_EQ(shape_from_string(to_string(k)), k);
  }
  EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
  EXPECT_THROW(shape_from_string("rhombus"), InvalidConfigError);
}

bool pairwise_distinct(const std::vector<ConceptVector>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (v[i] == v[j]) return false;
    }
  }
  return true;
}

TEST(AssignPrototypes, DistinctWhenEnoughCodes) {
  const auto p21 = assign_prototypes(21, 9, 7);
  ASSERT_EQ(p21.size(), 21u);
  for (const auto& p : p21) EXPECT_EQ(p.size(), 9u);
  EXPECT_TRUE(pairwise_distinct(p21));

  const auto p10 = assign_prototypes(10, 5, 7);
  ASSERT_EQ(p10.size(), 10u);
  EXPECT_TRUE(pairwise_distinct(p10));

  // All 32 five-bit codes get used when 32 classes are requested.
  EXPECT_TRUE(pairwise_distinct(assign_prototypes(32, 5, 3)));
}

TEST(AssignPrototypes, Deterministic) {
  EXPECT_EQ(assign_prototypes(21, 9, 7), assign_prototypes(21, 9, 7));
  EXPECT_NE(assign_prototypes(21, 9, 7), assign_prototypes(21, 9, 8));
}

TEST(AssignPrototypes, RejectsBadK) {
  EXPECT_THROW(assign_prototypes(10, 6, 1), InvalidConfigError);
  EXPECT_THROW(assign_prototypes(0, 5, 1), InvalidConfigError);
}

TEST(SampleConcepts, DeterministicAtSOne) {
  Rng rng(11);
  const auto proto = ConceptVector::from_code(0b101100101, 9);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_concepts(proto, 1.0, rng), proto);
}

TEST(SampleConcepts, FlipFrequencyMatchesOneMinusS) {
  // Monte Carlo oracle: 10,000 draws at s = 0.98.
  Rng rng(2024);
  const auto proto = ConceptVector::from_code(0b011010011, 9);
  std::vector<int> flips(9, 0);
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const auto c = sample_concepts(proto, 0.98, rng);
    for (std::size_t j = 0; j < 9; ++j) flips[j] += c[j] != proto[j];
  }
  for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(flips[j] / double(kDraws), 0.02, 0.005) << "bit " << j;
}

TEST(SampleConcepts, FairCoinAtHalf) {
  Rng rng(5);
  const auto ones = ConceptVector::from_code(0b11111, 5);
  const auto zeros = ConceptVector::from_code(0, 5);
  std::vector<int> set_from_ones(5, 0), set_from_zeros(5, 0);
  constexpr int kDraws = 20000;
  for (int i = 0; i < kDraws; ++i) {
    const auto a = sample_concepts(ones, 0.5, rng);
    const auto b = sample_concepts(zeros, 0.5, rng);
    for (std::size_t j = 0; j < 5; ++j) {
      set_from_ones[j] += a[j];
      set_from_zeros[j] += b[j];
    }
  }
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(set_from_ones[j] / double(kDraws), 0.5, 0.015);
    EXPECT_NEAR(set_from_zeros[j] / double(kDraws), 0.5, 0.015);
  }
}

TEST(SampleConcepts, RejectsSOutsideRange) {
  Rng rng(1);
  EXPECT_THROW(sample_concepts(ConceptVector::from_code(0, 5), 0.4, rng), InvalidConfigError);
  EXPECT_THROW(sample_concepts(ConceptVector::from_code(0, 5), 1.01, rng), InvalidConfigError);
}

TEST(ConceptVector, RejectsBadLength) {
  EXPECT_THROW(ConceptVector(std::vector<std::uint8_t>(4)), InvalidConfigError);
  EXPECT_EQ(ConceptVector::from_code(0b10011, 5).code(), 0b10011u);
}

// Pixels that belong to shape i's given role and are not touched by the other shape.
std::vector<std::pair<int, int>> exclusive_pixels(const std::array<ShapeLayout, 2>& shapes,
                                                  std::size_t i, PixelRole role, int size) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (classify_pixel(shapes[i], x + 0.5, y + 0.5) == role &&
          classify_pixel(shapes[1 - i], x + 0.5, y + 0.5) == PixelRole::outside) {
        out.emplace_back(x, y);
      }
    }
  }
  return out;
}

class RenderFaceColor : public ::testing::TestWithParam<int> {};

TEST_P(RenderFaceColor, InteriorPixelsOfBothShapesFollowBitTwo) {
  const auto classes = enumerate_classes(6);
  int checked = 0;
  for (const auto& cls : classes) {
    for (bool blue : {false, true}) {
      auto concepts = ConceptVector::from_code(static_cast<std::uint32_t>(GetParam()), 9);
      concepts.set(kBlueFace, blue);
      const std::uint64_t seed = 100 + static_cast<std::uint64_t>(cls.class_index);
      const auto img = render_image(cls, concepts, seed, 64);
      const auto shapes = layout_shapes(cls, concepts, seed, 64);
      for (std::size_t i = 0; i < 2; ++i) {
        // Shapes may overlap, so one can be fully covered by the other.
        const auto inner = exclusive_pixels(shapes, i, PixelRole::interior, 64);
        for (auto [x, y] : inner) EXPECT_EQ(img.at(x, y), blue ? colors::blue : colors::yellow);
        checked += inner.empty() ? 0 : 1;
      }
    }
  }
  EXPECT_GE(checked, 70);
}

INSTANTIATE_TEST_SUITE_P(ConceptCodes, RenderFaceColor, ::testing::Values(0, 0b000011010, 0b110101001));

TEST(RenderImage, OutlineAndStripesUseOutlineColor) {
  const ClassSpec cls{ShapeKind::square, ShapeKind::hexagon, 0};
  for (bool red : {false, true}) {
    auto concepts = ConceptVector::from_code(0b10011, 5);  // big, thick, striped
    concepts.set(kRedOutline, red);
    const auto img = render_image(cls, concepts, 9, 64);
    const auto shapes = layout_shapes(cls, concepts, 9, 64);
    for (PixelRole role : {PixelRole::outline, PixelRole::stripe}) {
      const auto px = exclusive_pixels(shapes, 0, role, 64);
      ASSERT_FALSE(px.empty());
      for (auto [x, y] : px) EXPECT_EQ(img.at(x, y), red ? colors::red : colors::white);
    }
  }
}

TEST(RenderImage, FiveConceptBackgroundIsBlack) {
  const auto classes = enumerate_classes(6);
  for (std::uint32_t code = 0; code < 32; code += 5) {
    const auto concepts = ConceptVector::from_code(code, 5);
    const auto& cls = classes[code % classes.size()];
    const auto img = render_image(cls, concepts, code, 64);
    const auto shapes = layout_shapes(cls, concepts, code, 64);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (classify_pixel(shapes[0], x + 0.5, y + 0.5) == PixelRole::outside &&
            classify_pixel(shapes[1], x + 0.5, y + 0.5) == PixelRole::outside) {
          ASSERT_EQ(img.at(x, y), colors::black);
        }
      }
    }
  }
}

TEST(RenderImage, BackgroundHalvesFollowBitsFiveAndSix) {
  const ClassSpec cls{ShapeKind::circle, ShapeKind::wedge, 0};
  for (std::uint32_t bg = 0; bg < 16; ++bg) {
    const auto concepts = ConceptVector::from_code(bg << 5, 9);
    const auto img = render_image(cls, concepts, 77, 64);
    const auto shapes = layout_shapes(cls, concepts, 77, 64);
    int upper_checked = 0, lower_checked = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (classify_pixel(shapes[0], x + 0.5, y + 0.5) != PixelRole::outside ||
            classify_pixel(shapes[1], x + 0.5, y + 0.5) != PixelRole::outside) {
          continue;
        }
        const auto c = img.at(x, y);
        if (c == colors::black) continue;  // stripe band
        if (y < 32) {
          EXPECT_EQ(c, concepts[kMagentaUpper] ? colors::magenta : colors::pale_green);
          ++upper_checked;
        } else {
          EXPECT_EQ(c, concepts[kIndigoLower] ? colors::indigo : colors::dark_sea_green);
          ++lower_checked;
        }
      }
    }
    EXPECT_GT(upper_checked, 300);
    EXPECT_GT(lower_checked, 300);
  }
}

TEST(RenderImage, BackgroundStripesOnlyWhenRequested) {
  for (std::uint32_t stripes = 0; stripes < 4; ++stripes) {
    const auto concepts = ConceptVector::from_code(stripes << 7, 9);
    int upper_black = 0, lower_black = 0;
    for (int y = 0; y < 64; ++y) {
      const auto c = background_color(concepts, 0, y, 64);
      (y < 32 ? upper_black : lower_black) += c == colors::black;
    }
    EXPECT_EQ(upper_black, concepts[kUpperStripes] ? 16 : 0);
    EXPECT_EQ(lower_black, concepts[kLowerStripes] ? 16 : 0);
  }
}

TEST(RenderImage, DeterministicAndSeedSensitive) {
  const ClassSpec cls{ShapeKind::pentagon, ShapeKind::triangle, 3};
  const auto concepts = ConceptVector::from_code(0b101010101, 9);
  EXPECT_EQ(render_image(cls, concepts, 42, 64), render_image(cls, concepts, 42, 64));
  EXPECT_NE(render_image(cls, concepts, 42, 64), render_image(cls, concepts, 43, 64));
}

TEST(RenderImage, ShapesStayInsideCanvasAndBigMeansBigger) {
  const ClassSpec cls{ShapeKind::square, ShapeKind::triangle, 0};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (bool big : {false, true}) {
      auto concepts = ConceptVector::from_code(0, 5);
      concepts.set(kBigShapes, big);
      for (const auto& s : layout_shapes(cls, concepts, seed, 64)) {
        EXPECT_GE(s.cx - s.radius, 0.0);
        EXPECT_LE(s.cx + s.radius, 64.0);
        EXPECT_GE(s.cy - s.radius, 0.0);
        EXPECT_LE(s.cy + s.radius, 64.0);
        const double span = 2.0 * s.radius / 64.0;
        if (big) {
          EXPECT_GE(span, 0.30);
          EXPECT_LE(span, 0.42);
        } else {
          EXPECT_GE(span, 0.18);
          EXPECT_LE(span, 0.26);
        }
      }
    }
  }
}

TEST(RenderImage, PlacementFailsAfterBoundedRetries) {
  Rng rng(1);
  EXPECT_THROW(detail::place_shape(rng, 40.0, 64, 100), PlacementError);
  EXPECT_NO_THROW(detail::place_shape(rng, 10.0, 64, 100));
}

TEST(PlanDataset, PaperConfigurationSplitsFiftyThirtyTwenty) {
  DatasetConfig cfg;
  cfg.num_shapes = 4;
  cfg.num_concepts = 9;
  cfg.s = 0.98;
  cfg.images_per_class = 1000;
  const auto m = plan_dataset(cfg);
  EXPECT_EQ(m.records.size(), 10000u);
  EXPECT_EQ(m.select(Split::train).size(), 5000u);
  EXPECT_EQ(m.select(Split::val).size(), 3000u);
  EXPECT_EQ(m.select(Split::test).size(), 2000u);
  std::vector<int> per_class(10, 0);
  for (const auto& r : m.records) ++per_class[static_cast<std::size_t>(r.class_index)];
  for (int n : per_class) EXPECT_EQ(n, 1000);
}

TEST(PlanDataset, SplitSizesWithinOneOverNumClasses) {
  for (int ipc : {1, 3, 7, 13, 50}) {
    for (int shapes : {4, 5, 6}) {
      DatasetConfig cfg;
      cfg.num_shapes = shapes;
      cfg.images_per_class = ipc;
      const auto m = plan_dataset(cfg);
      const double n = static_cast<double>(m.records.size());
      const double tol = 1.0 / cfg.num_classes();
      EXPECT_NEAR(m.select(Split::train).size() / n, 0.5, tol) << ipc << " " << shapes;
      EXPECT_NEAR(m.select(Split::val).size() / n, 0.3, tol) << ipc << " " << shapes;
      EXPECT_NEAR(m.select(Split::test).size() / n, 0.2, tol) << ipc << " " << shapes;
    }
  }
}

TEST(PlanDataset, SOneGivesPrototypesExactly) {
  DatasetConfig cfg;
  cfg.s = 1.0;
  cfg.images_per_class = 200;
  const auto m = plan_dataset(cfg);
  for (const auto& r : m.records) ASSERT_EQ(r.concepts, m.prototypes[static_cast<std::size_t>(r.class_index)]);
}

TEST(PlanDataset, SHalfConceptsIndependentOfClass) {
  DatasetConfig cfg;
  cfg.s = 0.5;
  cfg.images_per_class = 1000;
  cfg.master_seed = 31;
  const auto m = plan_dataset(cfg);
  for (std::size_t bit = 0; bit < 9; ++bit) {
    const auto res = hcbm::testing::concept_class_independence(m.records, bit, cfg.num_classes());
    EXPECT_GT(res.p_value, 0.01) << "bit " << bit << " chi2=" << res.statistic;
  }
}

TEST(PlanDataset, HighSCorrelatesConceptsWithClass) {
  // Sanity check that the chi-square oracle has power.
  DatasetConfig cfg;
  cfg.s = 0.98;
  cfg.images_per_class = 200;
  const auto m = plan_dataset(cfg);
  const auto res = hcbm::testing::concept_class_independence(m.records, 0, cfg.num_classes());
  EXPECT_LT(res.p_value, 1e-6);
}

TEST(PlanDataset, RejectsInvalidConfig) {
  DatasetConfig cfg;
  cfg.s = 0.3;
  EXPECT_THROW(plan_dataset(cfg), InvalidConfigError);
  cfg = {};
  cfg.num_concepts = 7;
  EXPECT_THROW(plan_dataset(cfg), InvalidConfigError);
  cfg = {};
  cfg.split = {0.5, 0.5, 0.0};
  EXPECT_THROW(plan_dataset(cfg), InvalidConfigError);
}

DatasetConfig small_config() {
  DatasetConfig cfg;
  cfg.num_shapes = 4;
  cfg.num_concepts = 9;
  cfg.images_per_class = 10;
  cfg.image_size = 32;
  cfg.master_seed = 5;
  return cfg;
}

TEST(GenerateDataset, WritesImagesAndManifestConsistently) {
  TempDir dir("gen");
  const auto cfg = small_config();
  const auto m = generate_dataset(cfg, dir.path());
  EXPECT_EQ(m.records.size(), 100u);
  EXPECT_FALSE(std::filesystem::exists(dir / std::string(kIncompleteMarker)));
  const auto back = read_manifest(dir.path());
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.prototypes, m.prototypes);
  EXPECT_EQ(back.classes, m.classes);
  // Re-rendering from the stored per-sample seed reproduces every image.
  for (const auto& r : back.records) {
    const auto img = read_png(dir.path() / r.image_ref);
    ASSERT_EQ(img, render_image(back.classes[static_cast<std::size_t>(r.class_index)], r.concepts,
                                r.seed, cfg.image_size));
    EXPECT_EQ(r.seed, sample_seed(cfg.master_seed, r.class_index, r.ordinal));
  }
}

TEST(GenerateDataset, ByteIdenticalAcrossRunsAndThreadCounts) {
  TempDir a("gen-a"), b("gen-b");
  auto cfg = small_config();
  generate_dataset(cfg, a.path());
  cfg.threads = 3;
  generate_dataset(cfg, b.path());
  for (const auto& name : {std::string(kManifestFile), std::string(kRecordsFile)}) {
    EXPECT_EQ(hcbm::testing::slurp(a / name), hcbm::testing::slurp(b / name)) << name;
  }
  for (const auto& entry : std::filesystem::directory_iterator(a / "images")) {
    const auto other = b / ("images/" + entry.path().filename().string());
    ASSERT_EQ(hcbm::testing::slurp(entry.path()), hcbm::testing::slurp(other));
  }
}

TEST(GenerateDataset, EmptyWhenNoImagesPerClass) {
  TempDir dir("gen-empty");
  auto cfg = small_config();
  cfg.images_per_class = 0;
  const auto m = generate_dataset(cfg, dir.path());
  EXPECT_TRUE(m.records.empty());
  EXPECT_TRUE(std::filesystem::is_empty(dir / "images"));
  EXPECT_TRUE(read_manifest(dir.path()).records.empty());
}

TEST(GenerateDataset, RecordsCsvColumnsFollowK) {
  TempDir dir("gen-k5");
  auto cfg = small_config();
  cfg.num_concepts = 5;
  cfg.images_per_class = 1;
  generate_dataset(cfg, dir.path());
  const auto csv = hcbm::testing::slurp(dir / std::string(kRecordsFile));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sample_id,class_index,c0,c1,c2,c3,c4,split,seed,image_ref");
}

TEST(GenerateDataset, FailureLeavesMarker) {
  TempDir dir("gen-fail");
  auto cfg = small_config();
  // A regular file where the images directory should be.
  std::ofstream(dir / "images") << "x";
  EXPECT_THROW(generate_dataset(cfg, dir.path()), IoError);
}

DatasetManifest ten_class_manifest() {
  DatasetConfig cfg;
  cfg.num_shapes = 4;
  cfg.images_per_class = 1000;
  return plan_dataset(cfg);
}

std::set<std::int64_t> ids(const DatasetManifest& m, std::initializer_list<Split> splits) {
  std::set<std::int64_t> out;
  for (const auto& r : m.records) {
    if (std::find(splits.begin(), splits.end(), r.split) != splits.end()) out.insert(r.sample_id);
  }
  return out;
}

TEST(SubsetManifest, SelectsPerClassAndKeepsTest) {
  const auto full = ten_class_manifest();
  const auto sub = subset_manifest(full, 250, 3);
  EXPECT_EQ(ids(sub, {Split::train, Split::val}).size(), 2500u);
  EXPECT_EQ(ids(sub, {Split::test}), ids(full, {Split::test}));
  std::vector<int> train(10, 0), val(10, 0);
  for (const auto& r : sub.records) {
    if (r.split == Split::train) ++train[static_cast<std::size_t>(r.class_index)];
    if (r.split == Split::val) ++val[static_cast<std::size_t>(r.class_index)];
  }
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_EQ(train[c] + val[c], 250);
    EXPECT_NEAR(train[c] / 250.0, 0.625, 0.01);
  }
}

TEST(SubsetManifest, FullSizeIsIdentity) {
  const auto full = ten_class_manifest();
  EXPECT_EQ(subset_manifest(full, 800, 9).records, full.records);
}

TEST(SubsetManifest, NestedAcrossSizes) {
  const auto full = ten_class_manifest();
  std::set<std::int64_t> previous;
  for (int n : {50, 100, 150, 200, 250}) {
    const auto cur = ids(subset_manifest(full, n, 17), {Split::train, Split::val});
    EXPECT_TRUE(std::includes(cur.begin(), cur.end(), previous.begin(), previous.end())) << n;
    previous = cur;
  }
}

TEST(SubsetManifest, DeterministicInSeed) {
  const auto full = ten_class_manifest();
  EXPECT_EQ(subset_manifest(full, 50, 4).records, subset_manifest(full, 50, 4).records);
  EXPECT_NE(subset_manifest(full, 50, 4).records, subset_manifest(full, 50, 5).records);
}

TEST(SubsetManifest, TooLargeIsInvalid) {
  const auto full = ten_class_manifest();
  EXPECT_THROW(subset_manifest(full, 801, 1), InvalidConfigError);
}

}  // namespace
}  // namespace hcbm::datagen
