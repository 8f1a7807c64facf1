#include <gtest/gtest.h>

#include <numeric>
#include <sstream>
#include <vector>

#include "dualgan/metrics.hpp"
#include "test_support.hpp"

namespace dualgan {
namespace {

Palette four_colors() { return {{0, 0, 0}, {100, 0, 0}, {0, 0, 255}, {200, 0, 0}}; }

// ---------------------------------------------------------------------------------------------
// Quantization

TEST(Quantize, PaletteColorsRecoverExactLabels) {
  const auto pal = four_colors();
  ImageRecord img = blank_image(3, 2, 2);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 3; ++c) img.at(c, k / 2, k % 2) = pal[k][c];
  const auto m = quantize_to_labels(img, pal);
  EXPECT_EQ(m.ids, (std::vector<int>{0, 1, 2, 3}));
  // Tensor path on the same pixels.
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = to_unit_range(img.pixels[i]);
  const auto mt = quantize_to_labels(Tensor<double>::from({3, 2, 2}, v), pal);
  EXPECT_EQ(mt.ids, m.ids);
}

TEST(Quantize, TiesGoToLowestId) {
  const auto pal = four_colors();
  ImageRecord img = blank_image(3, 1, 1);
  img.pixels = {150, 0, 0};  // 50 from class 1 and from class 3
  EXPECT_EQ(quantize_to_labels(img, pal).ids[0], 1);
  const auto t = Tensor<double>::from({1, 3, 1, 1}, {to_unit_range(150), -1.0, -1.0});
  EXPECT_EQ(quantize_to_labels(t, pal).ids[0], 1);
}

TEST(Quantize, GrayImagesCompareAsNeutralColors) {
  const Palette pal{{0, 0, 0}, {255, 255, 255}, {255, 0, 0}};
  ImageRecord img = blank_image(1, 1, 3);
  img.pixels = {10, 240, 130};
  EXPECT_EQ(quantize_to_labels(img, pal).ids, (std::vector<int>{0, 1, 1}));
}

TEST(Quantize, MatchesBruteForceOracle) {
  RngStream rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng.below(10);
    Palette pal;
    while (pal.size() < k) {
      Color c{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256))};
      if (std::find(pal.begin(), pal.end(), c) == pal.end()) pal.push_back(c);
    }
    ImageRecord img = blank_image(3, 8, 8);
    for (auto& p : img.pixels) p = std::uint8_t(rng.below(256));
    const auto m = quantize_to_labels(img, pal);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        long best_d = -1;
        int best = -1;
        for (std::size_t c = 0; c < k; ++c) {
          long d = 0;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const long diff = long(img.at(ch, y, x)) - long(pal[c][ch]);
            d += diff * diff;
          }
          if (best < 0 || d < best_d) best_d = d, best = int(c);
        }
        ASSERT_EQ(m.at(y, x), best);
      }
  }
}

// ---------------------------------------------------------------------------------------------
// Palettes

TEST(Palette, ParsesCommentsAndBlankLines) {
  std::istringstream in("# facade labels\n0 0 0 0\n\n2 0 0 255  # window\n1 255 0 0\n");
  const auto pal = parse_palette(in);
  ASSERT_EQ(pal.size(), 3u);
  EXPECT_EQ(pal[2], (Color{0, 0, 255}));
}

TEST(Palette, RejectsGapsDuplicatesAndBadValues) {
  for (const char* text : {"0 0 0 0\n2 1 1 1\n", "0 0 0 0\n0 1 1 1\n", "0 0 0 0\n1 0 0 0\n", "0 0 0 0\n1 300 0 0\n",
                           "0 0 0\n1 1 1 1\n", "0 0 0 0\n", "0 0 0 0 7\n1 1 1 1\n"}) {
    std::istringstream in(text);
    try {
      parse_palette(in);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.field(), "palette");
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Segmentation scores

LabelMap map_of(std::size_t h, std::size_t w, std::size_t k, std::vector<int> ids) { return {h, w, k, std::move(ids)}; }

TEST(SegScores, IdentityGivesOnes) {
  const auto m = map_of(2, 3, 3, {0, 1, 2, 2, 1, 0});
  const auto s = segmentation_scores(m, m);
  EXPECT_EQ(s.per_pixel_acc, 1.0);
  EXPECT_EQ(s.per_class_acc, 1.0);
  EXPECT_EQ(s.class_iou, 1.0);
}

TEST(SegScores, ComplementGivesZeros) {
  const auto gt = map_of(2, 2, 2, {0, 1, 1, 0});
  const auto pred = map_of(2, 2, 2, {1, 0, 0, 1});
  const auto s = segmentation_scores(pred, gt);
  EXPECT_EQ(s.per_pixel_acc, 0.0);
  EXPECT_EQ(s.per_class_acc, 0.0);
  EXPECT_EQ(s.class_iou, 0.0);
}

TEST(SegScores, TwoByTwoExample) {
  const auto pred = map_of(2, 2, 2, {0, 0, 1, 1});
  const auto gt = map_of(2, 2, 2, {0, 1, 1, 1});
  const auto s = segmentation_scores(pred, gt);
  EXPECT_NEAR(s.per_pixel_acc, 0.75, 1e-4);
  EXPECT_NEAR(s.per_class_acc, 0.8333, 1e-4);
  EXPECT_NEAR(s.class_iou, 0.5833, 1e-4);
  ASSERT_EQ(s.per_class.size(), 2u);
  EXPECT_EQ(*s.per_class[0].iou, 0.5);
  EXPECT_EQ(s.per_class[1].intersection, 2u);
}

TEST(SegScores, AbsentClassesAreExcluded) {
  // Class 2 appears in neither map, class 1 only in pred.
  const auto gt = map_of(1, 4, 3, {0, 0, 0, 0});
  const auto pred = map_of(1, 4, 3, {0, 0, 1, 1});
  const auto s = segmentation_scores(pred, gt);
  EXPECT_EQ(s.per_class_acc, 0.5);
  EXPECT_EQ(s.class_iou, (0.5 + 0.0) / 2.0);
  EXPECT_FALSE(s.per_class[1].accuracy.has_value());
  EXPECT_TRUE(s.per_class[1].iou.has_value());
  EXPECT_FALSE(s.per_class[2].iou.has_value());
}

TEST(SegScores, MismatchedMapsAreRejected) {
  EXPECT_THROW(segmentation_scores(map_of(1, 2, 2, {0, 1}), map_of(2, 1, 2, {0, 1})), DimensionError);
  EXPECT_THROW(segmentation_scores(map_of(1, 2, 2, {0, 1}), map_of(1, 2, 3, {0, 1})), DimensionError);
  EXPECT_THROW(segmentation_scores(map_of(1, 2, 2, {0, 5}), map_of(1, 2, 2, {0, 1})), DimensionError);
}

struct Oracle {
  double pixel, cls, iou;
};

Oracle confusion_oracle(const LabelMap& pred, const LabelMap& gt) {
  const std::size_t k = gt.num_classes;
  std::vector<std::vector<std::size_t>> cm(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < gt.ids.size(); ++i) ++cm[gt.ids[i]][pred.ids[i]];
  std::size_t diag = 0, total = 0;
  double cls = 0.0, iou = 0.0;
  std::size_t ncls = 0, niou = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) row += cm[c][j], col += cm[j][c];
    diag += cm[c][c];
    total += row;
    if (row > 0) cls += double(cm[c][c]) / double(row), ++ncls;
    if (row + col - cm[c][c] > 0) iou += double(cm[c][c]) / double(row + col - cm[c][c]), ++niou;
  }
  return {double(diag) / double(total), cls / double(ncls), iou / double(niou)};
}

LabelMap random_map(RngStream& rng, std::size_t k, double agree_with = -1.0, const LabelMap* other = nullptr) {
  LabelMap m{8, 8, k, std::vector<int>(64)};
  for (std::size_t i = 0; i < 64; ++i) {
    m.ids[i] = (other && rng.uniform() < agree_with) ? other->ids[i] : int(rng.below(k));
  }
  return m;
}

TEST(SegScores, RandomMapsMatchConfusionMatrixOracle) {
  RngStream rng(2);
  for (const std::size_t k : {2u, 5u, 12u}) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto gt = random_map(rng, k);
      const auto pred = random_map(rng, k, rng.uniform(), &gt);
      const auto s = segmentation_scores(pred, gt);
      const auto o = confusion_oracle(pred, gt);
      ASSERT_EQ(s.per_pixel_acc, o.pixel) << "K=" << k;
      ASSERT_EQ(s.per_class_acc, o.cls) << "K=" << k;
      ASSERT_EQ(s.class_iou, o.iou) << "K=" << k;
    }
  }
}

TEST(SegScores, SymmetryProperties) {
  RngStream rng(3);
  bool class_acc_asymmetric = false;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    const auto a = random_map(rng, k), b = random_map(rng, k, 0.5, &a);
    const auto ab = segmentation_scores(a, b), ba = segmentation_scores(b, a);
    EXPECT_EQ(ab.per_pixel_acc, ba.per_pixel_acc);
    // Per-class intersection and union do not depend on argument order, nor does the set of
    // classes present in either map.
    EXPECT_NEAR(ab.class_iou, ba.class_iou, 1e-15);
    class_acc_asymmetric |= std::abs(ab.per_class_acc - ba.per_class_acc) > 1e-9;
  }
  EXPECT_TRUE(class_acc_asymmetric);
  // A concrete case: gt has one class, pred splits it.
  const auto gt = map_of(1, 4, 2, {0, 0, 0, 0}), pred = map_of(1, 4, 2, {0, 0, 0, 1});
  EXPECT_EQ(segmentation_scores(pred, gt).per_class_acc, 0.75);
  EXPECT_EQ(segmentation_scores(gt, pred).per_class_acc, 0.5);
}

TEST(SegScores, InvariantUnderConsistentRelabeling) {
  RngStream rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(11);
    const auto gt = random_map(rng, k), pred = random_map(rng, k, 0.6, &gt);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    auto relabel = [&](LabelMap m) {
      for (auto& id : m.ids) id = perm[id];
      return m;
    };
    const auto s = segmentation_scores(pred, gt), r = segmentation_scores(relabel(pred), relabel(gt));
    EXPECT_EQ(s.per_pixel_acc, r.per_pixel_acc);
    EXPECT_NEAR(s.per_class_acc, r.per_class_acc, 1e-12);
    EXPECT_NEAR(s.class_iou, r.class_iou, 1e-12);
  }
}

TEST(SegScores, ScoresStayInUnitInterval) {
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = random_map(rng, 4), pred = random_map(rng, 4, rng.uniform(), &gt);
    const auto s = segmentation_scores(pred, gt);
    for (const double v : {s.per_pixel_acc, s.per_class_acc, s.class_iou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(SegScores, AverageAndReport) {
  const auto a = segmentation_scores(map_of(2, 2, 2, {0, 0, 1, 1}), map_of(2, 2, 2, {0, 1, 1, 1}));
  const auto b = segmentation_scores(map_of(2, 2, 2, {0, 1, 1, 1}), map_of(2, 2, 2, {0, 1, 1, 1}));
  const auto avg = average_scores({a, b});
  EXPECT_NEAR(avg.per_pixel_acc, (0.75 + 1.0) / 2.0, 1e-15);
  EXPECT_NEAR(avg.class_iou, (a.class_iou + 1.0) / 2.0, 1e-15);
  const auto j = scores_report(avg, 2);
  EXPECT_EQ(j["n_images"], 2);
  EXPECT_NEAR(j["per_pixel_acc"].get<double>(), 0.875, 1e-15);
  ASSERT_EQ(j["per_class"].size(), 2u);
  EXPECT_EQ(j["per_class"][1]["gt_pixels"], 6);
  EXPECT_THROW(average_scores({}), UsageError);
}

// ---------------------------------------------------------------------------------------------
// Cycle reconstruction

TrainConfig affine_config(std::size_t channels) {
  TrainConfig c;
  c.image_size = 8;
  c.channels_u = c.channels_v = channels;
  c.generator = GeneratorKind::kAffine;
  c.disc_n_down = 0;
  return c;
}

UnpairedDataset constant_dataset(std::size_t channels, std::uint8_t value, std::size_t n) {
  std::vector<ImageRecord> u, v;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = blank_image(channels, 8, 8);
    std::fill(r.pixels.begin(), r.pixels.end(), value);
    u.push_back(r);
    v.push_back(r);
  }
  return UnpairedDataset(u, v, 8, channels, channels, 0);
}

void set_affine(Generator<double>& g, double scale, double shift) {
  dynamic_cast<AffineGenerator<double>&>(g).set(scale, shift);
}

TEST(CycleError, IdentityStubsGiveZero) {
  DualGanModel<double> m(affine_config(3));
  auto task = make_synthetic_pairtask(SyntheticKind::kChannelSwap, 5, 8, 1, 0);
  const auto ds = task.dataset(8, 1);
  const auto [ru, rv] = cycle_reconstruction_error(m, ds, 5);
  EXPECT_EQ(ru, 0.0);
  EXPECT_EQ(rv, 0.0);
}

TEST(CycleError, ZeroStubsOnOnesGiveOne) {
  DualGanModel<double> m(affine_config(1));
  set_affine(m.g_a(), 0.0, 0.0);
  set_affine(m.g_b(), 0.0, 0.0);
  const auto ds = constant_dataset(1, 255, 3);
  const auto [ru, rv] = cycle_reconstruction_error(m, ds, 3);
  EXPECT_EQ(ru, 1.0);
  EXPECT_EQ(rv, 1.0);
  EXPECT_THROW(cycle_reconstruction_error(m, ds, 4), UsageError);
}

TEST(CycleError, MatchesPerImageLoopOracle) {
  DualGanModel<double> m(affine_config(1));
  set_affine(m.g_a(), 0.7, 0.2);
  set_affine(m.g_b(), -1.3, 0.05);
  auto task = make_synthetic_pairtask(SyntheticKind::kInvert, 6, 8, 2, 0);
  const auto ds = task.dataset(8, 2);
  const auto [ru, rv] = cycle_reconstruction_error(m, ds, 6);
  auto round_trip = [](const ImageRecord& r, double s1, double t1, double s2, double t2) {
    double acc = 0.0;
    for (const auto p : r.pixels) {
      const double x = p / 127.5 - 1.0;
      acc += std::abs(x - (s2 * (s1 * x + t1) + t2));
    }
    return acc / double(r.pixels.size());
  };
  double ou = 0.0, ov = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    ou += round_trip(task.domain_u[i], 0.7, 0.2, -1.3, 0.05);
    ov += round_trip(task.domain_v[i], -1.3, 0.05, 0.7, 0.2);
  }
  EXPECT_NEAR(ru, ou / 6.0, 1e-10);
  EXPECT_NEAR(rv, ov / 6.0, 1e-10);
  EXPECT_GT(ru, 0.0);
}

}  // namespace
}  // namespace dualgan
