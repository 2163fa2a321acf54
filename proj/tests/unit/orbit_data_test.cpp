#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "orbit/affine.hpp"
#include "orbit/idx.hpp"
#include "orbit/orbit_dataset.hpp"
#include "orbit/pgm.hpp"
#include "test_util.hpp"

namespace orbit {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("orbit_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

TEST(Idx, ScalesPixelsToUnitInterval) {
  fs::path dir = temp_dir("scale");
  write_idx_images(dir / "img", {0, 255, 128, 0}, 1, 2, 2);
  write_idx_labels(dir / "lbl", {7});
  LabeledImages data = load_idx(dir / "img", dir / "lbl");
  ASSERT_EQ(data.images.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(data.images[0], 0.0f);
  EXPECT_EQ(data.images[1], 1.0f);
  EXPECT_EQ(data.images[2], 128.0f / 255.0f);
  EXPECT_EQ(data.images[3], 0.0f);
  EXPECT_EQ(data.labels, std::vector<std::int64_t>{7});
}

TEST(Idx, RejectsWrongMagic) {
  fs::path dir = temp_dir("magic");
  write_idx_images(dir / "img", {1, 2, 3, 4}, 1, 2, 2);
  write_idx_labels(dir / "lbl", {1});
  // Each file read with the other's reader carries the wrong magic.
  EXPECT_THROW(read_idx_images(dir / "lbl"), BadMagicError);
  EXPECT_THROW(read_idx_labels(dir / "img"), BadMagicError);
}

TEST(Idx, RejectsTruncatedPayload) {
  fs::path dir = temp_dir("trunc");
  write_idx_images(dir / "img", {1, 2, 3}, 1, 2, 2);
  EXPECT_THROW(read_idx_images(dir / "img"), TruncatedError);
  std::ofstream(dir / "short", std::ios::binary).write("\0\0\x08", 3);
  EXPECT_THROW(read_idx_images(dir / "short"), TruncatedError);
}

TEST(Idx, RejectsCountMismatch) {
  fs::path dir = temp_dir("count");
  write_idx_images(dir / "img", {1, 2, 3, 4, 5, 6, 7, 8}, 2, 2, 2);
  write_idx_labels(dir / "lbl", {1, 2, 3});
  EXPECT_THROW(load_idx(dir / "img", dir / "lbl"), CountMismatchError);
}

TEST(Idx, BundledMnistSubsetIngests) {
  const fs::path dir = fs::path(ORBIT_DATA_DIR) / "mnist5k";
  LabeledImages data = load_idx(dir / "images-idx3-ubyte", dir / "labels-idx1-ubyte");
  EXPECT_EQ(data.images.shape(), (Shape{5000, 1, 28, 28}));
  std::set<std::int64_t> classes(data.labels.begin(), data.labels.end());
  EXPECT_EQ(classes.size(), 10u);
}

TEST(Idx, SubsetsUnderOneSeedAreDisjoint) {
  LabeledImages all{Tensor({10, 1, 1, 1}), {}};
  for (std::size_t i = 0; i < 10; ++i) {
    all.images[i] = float(i);
    all.labels.push_back(std::int64_t(i));
  }
  LabeledImages a = select_subset(all, 3, 0, 4), b = select_subset(all, 3, 4, 6);
  std::set<std::int64_t> seen(a.labels.begin(), a.labels.end());
  for (auto l : b.labels) EXPECT_TRUE(seen.insert(l).second);
  EXPECT_EQ(seen.size(), 10u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.images[i], float(a.labels[i]));
  EXPECT_THROW(select_subset(all, 3, 8, 3), ConfigError);
}

TEST(Affine, SamplerCoversItsSupport) {
  Rng rng(42);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 100000; ++i) {
    AffineParams p = sample_affine(rng);
    lo = std::min(lo, p.rotation);
    hi = std::max(hi, p.rotation);
    ASSERT_GE(p.shear, -0.3);
    ASSERT_LE(p.shear, 0.3);
    ASSERT_GE(p.scale, 0.7);
    ASSERT_LE(p.scale, 1.3);
    ASSERT_LE(std::abs(p.tx), 15.0);
    ASSERT_LE(std::abs(p.ty), 15.0);
  }
  EXPECT_GE(lo, -90.0);
  EXPECT_LE(lo, -88.0);
  EXPECT_LE(hi, 90.0);
  EXPECT_GE(hi, 88.0);
}

TEST(Affine, SamplerIsDeterministicForASeed) {
  Rng a(9), b(9);
  for (int i = 0; i < 50; ++i) {
    AffineParams p = sample_affine(a), q = sample_affine(b);
    EXPECT_EQ(p.rotation, q.rotation);
    EXPECT_EQ(p.shear, q.shear);
    EXPECT_EQ(p.scale, q.scale);
    EXPECT_EQ(p.tx, q.tx);
    EXPECT_EQ(p.ty, q.ty);
  }
}

TEST(Affine, IdentityParamsGiveIdentityMatrix) {
  AffineParams id = AffineParams::identity();
  EXPECT_EQ(id.rotation, 0.0);
  EXPECT_EQ(id.shear, 0.0);
  EXPECT_EQ(id.scale, 1.0);
  EXPECT_EQ(id.tx, 0.0);
  EXPECT_EQ(id.ty, 0.0);
  Matrix3 m = affine_matrix(id, 64);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(m[r][c], r == c ? 1.0 : 0.0);
}

TEST(Affine, ZeroScaleIsSingular) {
  AffineParams p;
  p.scale = 0.0;
  EXPECT_THROW(affine_matrix(p, 16), SingularMatrixError);
}

Tensor random_image(std::size_t s, Rng& rng) {
  return generate_tensor<float>({1, s, s}, [&] { return rng.uniform(); });
}

TEST(Warp, IdentityIsBitwiseExact) {
  Rng rng(3);
  Tensor img = random_image(16, rng);
  EXPECT_EQ(warp_bilinear(img, affine_matrix(AffineParams::identity(), 16)), img);
}

TEST(Warp, ZeroImageStaysZero) {
  Rng rng(4);
  Tensor img({1, 16, 16});
  for (int i = 0; i < 5; ++i) {
    Tensor out = warp_bilinear(img, affine_matrix(sample_affine(rng), 16));
    for (float v : out.values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Warp, IntegerTranslationIsAnIndexShift) {
  Rng rng(5);
  Tensor img = random_image(12, rng);
  AffineParams p;
  p.tx = 3;
  p.ty = -2;
  Tensor out = warp_bilinear(img, affine_matrix(p, 12));
  for (long y = 0; y < 12; ++y)
    for (long x = 0; x < 12; ++x) {
      const long sy = y + 2, sx = x - 3;
      const float want = (sy < 0 || sx < 0 || sy >= 12 || sx >= 12) ? 0.0f
                                                                    : img[sy * 12 + sx];
      EXPECT_EQ(out[y * 12 + x], want) << y << "," << x;
    }
}

// Orientation of the pixel mass from second central moments.
double principal_angle(const Tensor& img, std::size_t s) {
  double m = 0, cx = 0, cy = 0;
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      m += img[y * s + x];
      cx += x * img[y * s + x];
      cy += y * img[y * s + x];
    }
  cx /= m;
  cy /= m;
  double mxx = 0, myy = 0, mxy = 0;
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double v = img[y * s + x];
      mxx += v * (x - cx) * (x - cx);
      myy += v * (y - cy) * (y - cy);
      mxy += v * (x - cx) * (y - cy);
    }
  return 0.5 * std::atan2(2 * mxy, mxx - myy);
}

TEST(Warp, QuarterTurnMakesHorizontalBarVertical) {
  const std::size_t s = 32;
  Tensor bar({1, s, s});
  for (std::size_t x = 6; x < 26; ++x) {
    bar[15 * s + x] = 1.0f;
    bar[16 * s + x] = 1.0f;
  }
  EXPECT_NEAR(principal_angle(bar, s), 0.0, 1e-9);
  AffineParams p;
  p.rotation = 90.0;
  Tensor turned = warp_bilinear(bar, affine_matrix(p, s));
  EXPECT_NEAR(std::abs(principal_angle(turned, s)), M_PI / 2, 1e-3);
}

LabeledImages toy_sources(std::size_t n, Rng& rng) {
  LabeledImages src{generate_tensor<float>({n, 1, 8, 8}, [&] { return rng.uniform(); }), {}};
  for (std::size_t i = 0; i < n; ++i) src.labels.push_back(std::int64_t(i % 10));
  return src;
}

TEST(OrbitDataset, SizesFollowTransformCount) {
  Rng rng(6);
  OrbitDataset ds = build_orbit_dataset(toy_sources(100, rng), 32, 16, 7);
  EXPECT_EQ(ds.orbit_count(), 100u);
  EXPECT_EQ(ds.image_count(), 3300u);
  std::set<std::uint32_t> all;
  for (const OrbitSet& o : ds.orbits()) {
    EXPECT_EQ(o.members.size(), 33u);
    EXPECT_EQ(o.label, std::int64_t(o.id % 10));
    for (auto m : o.members) EXPECT_TRUE(all.insert(m).second);
  }
  EXPECT_EQ(all.size(), 3300u);
  EXPECT_EQ(*all.rbegin(), 3299u);
  EXPECT_NO_THROW(ds.validate());
  for (float v : ds.images().values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(OrbitDataset, CanonicalIsCenteredSource) {
  Rng rng(7);
  LabeledImages src = toy_sources(2, rng);
  OrbitDataset ds = build_orbit_dataset(src, 3, 16, 1);
  const Tensor& im = ds.images();
  const std::size_t c = ds.orbits()[1].canonical;
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      const bool inside = y >= 4 && y < 12 && x >= 4 && x < 12;
      const float want = inside ? src.images[(1 * 8 + (y - 4)) * 8 + (x - 4)] : 0.0f;
      EXPECT_EQ(im.at(c, 0, y, x), want);
    }
}

TEST(OrbitDataset, ZeroTransformsGiveSingletons) {
  Rng rng(8);
  OrbitDataset ds = build_orbit_dataset(toy_sources(5, rng), 0, 8, 1);
  ASSERT_EQ(ds.image_count(), 5u);
  for (const OrbitSet& o : ds.orbits()) {
    ASSERT_EQ(o.members.size(), 1u);
    EXPECT_EQ(o.members[0], o.canonical);
  }
}

TEST(OrbitDataset, RejectsCanvasSmallerThanSource) {
  Rng rng(9);
  EXPECT_THROW(build_orbit_dataset(toy_sources(2, rng), 1, 6, 1), ConfigError);
}

TEST(OrbitDataset, GenerationIsDeterministic) {
  Rng r1(10), r2(10);
  OrbitDataset a = build_orbit_dataset(toy_sources(6, r1), 4, 16, 99);
  OrbitDataset b = build_orbit_dataset(toy_sources(6, r2), 4, 16, 99);
  EXPECT_EQ(a.images(), b.images());
  Rng r3(10);
  OrbitDataset c = build_orbit_dataset(toy_sources(6, r3), 4, 16, 100);
  EXPECT_FALSE(a.images() == c.images());
}

TEST(OrbitDataset, ValidateCatchesBrokenPartitions) {
  Tensor images({3, 1, 2, 2});
  std::vector<OrbitSet> overlap{{0, {0, 1}, 0, 0}, {1, {1, 2}, 2, 0}};
  EXPECT_THROW(OrbitDataset(images, overlap), InternalError);
  std::vector<OrbitSet> uncovered{{0, {0, 1}, 0, 0}};
  EXPECT_THROW(OrbitDataset(images, uncovered), InternalError);
  std::vector<OrbitSet> stray_canonical{{0, {0, 1}, 2, 0}, {1, {2}, 2, 0}};
  EXPECT_THROW(OrbitDataset(images, stray_canonical), InternalError);
}

TEST(OrbitDataset, DiskRoundTrip) {
  Rng rng(11);
  OrbitDataset ds = build_orbit_dataset(toy_sources(4, rng), 2, 12, 5);
  fs::path dir = temp_dir("roundtrip");
  save_orbit_dataset(ds, dir);
  OrbitDataset back = load_orbit_dataset(dir);
  EXPECT_EQ(back.images(), ds.images());
  ASSERT_EQ(back.orbit_count(), ds.orbit_count());
  for (std::size_t i = 0; i < ds.orbit_count(); ++i) {
    EXPECT_EQ(back.orbits()[i].members, ds.orbits()[i].members);
    EXPECT_EQ(back.orbits()[i].canonical, ds.orbits()[i].canonical);
    EXPECT_EQ(back.orbits()[i].label, ds.orbits()[i].label);
  }
  EXPECT_EQ(back.metadata().at("n_transforms"), "2");
  EXPECT_EQ(back.metadata().at("seed"), "5");
}

TEST(Pgm, ExactBytesForSinglePixel) {
  fs::path dir = temp_dir("pgm");
  save_pgm(Tensor({1, 1, 1}, {1.0f}), dir / "one.pgm");
  EXPECT_EQ(read_bytes(dir / "one.pgm"), std::string("P5\n1 1\n255\n\xff", 12));
  save_pgm(Tensor({1, 1, 1}, {0.5f}), dir / "half.pgm");
  EXPECT_EQ(static_cast<unsigned char>(read_bytes(dir / "half.pgm").back()), 128);
}

TEST(Pgm, ReloadReproducesQuantizedValues) {
  Rng rng(12);
  Tensor img = random_image(9, rng);
  fs::path dir = temp_dir("pgm_rt");
  save_pgm(img, dir / "a.pgm");
  Tensor back = load_pgm(dir / "a.pgm");
  ASSERT_EQ(back.shape(), (Shape{1, 9, 9}));
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(back[i], float(std::floor(img[i] * 255.0 + 0.5)) / 255.0f);
  }
  save_pgm(back, dir / "b.pgm");
  EXPECT_EQ(load_pgm(dir / "b.pgm"), back);
}

}  // namespace
}  // namespace orbit
