#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "qdoor/data.hpp"

using namespace qdoor;
namespace fs = std::filesystem;

namespace {

const std::string kImages = std::string(QDOOR_TEST_DATA_DIR) + "/mnist0123-images-idx3-ubyte.gz";
const std::string kLabels = std::string(QDOOR_TEST_DATA_DIR) + "/mnist0123-labels-idx1-ubyte.gz";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qdoor_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
          static_cast<unsigned char>(v)};
}

// Two 28x28 images and their labels as raw IDX bytes.
std::pair<std::vector<unsigned char>, std::vector<unsigned char>> tiny_idx() {
  std::vector<unsigned char> img, lab;
  for (auto v : {0x803u, 2u, 28u, 28u}) {
    auto b = be32(v);
    img.insert(img.end(), b.begin(), b.end());
  }
  for (int i = 0; i < 2 * 784; ++i) img.push_back(static_cast<unsigned char>(i % 256));
  for (auto v : {0x801u, 2u}) {
    auto b = be32(v);
    lab.insert(lab.end(), b.begin(), b.end());
  }
  lab.push_back(3);
  lab.push_back(7);
  return {img, lab};
}

}  // namespace

TEST(load_idx, fixture) {
  const RawImages r = load_idx(kImages, kLabels);
  EXPECT_EQ(r.rows, 28);
  EXPECT_EQ(r.cols, 28);
  EXPECT_EQ(r.pixels.cols(), 784);
  EXPECT_EQ(r.pixels.rows(), r.size());
  EXPECT_GT(r.size(), 1000);
  EXPECT_GE(r.pixels.minCoeff(), 0.0);
  EXPECT_LE(r.pixels.maxCoeff(), 1.0);
  const std::set<int> classes(r.labels.begin(), r.labels.end());
  EXPECT_EQ(classes, (std::set<int>{0, 1, 2, 3}));
}

TEST(load_idx, raw_bytes_scaled) {
  auto [img, lab] = tiny_idx();
  write_bytes(scratch("ok-img"), img);
  write_bytes(scratch("ok-lab"), lab);
  const RawImages r = load_idx(scratch("ok-img").string(), scratch("ok-lab").string());
  ASSERT_EQ(r.size(), 2);
  EXPECT_EQ(r.labels, (std::vector<int>{3, 7}));
  EXPECT_DOUBLE_EQ(r.pixels(0, 255), 1.0);
  EXPECT_DOUBLE_EQ(r.pixels(1, 0), (784 % 256) / 255.0);
}

TEST(load_idx, bad_magic_and_truncation) {
  auto [img, lab] = tiny_idx();
  auto bad = img;
  bad[3] = 0x04;
  write_bytes(scratch("bad-img"), bad);
  write_bytes(scratch("lab"), lab);
  try {
    load_idx(scratch("bad-img").string(), scratch("lab").string());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  auto cut = img;
  cut.resize(cut.size() - 10);
  write_bytes(scratch("cut-img"), cut);
  try {
    load_idx(scratch("cut-img").string(), scratch("lab").string());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  EXPECT_THROW(load_idx(scratch("missing").string(), scratch("lab").string()), DataError);
}

TEST(subset_classes, relabels_in_keep_order) {
  Dataset d;
  d.features = RealMatrix::Zero(5, 1);
  for (int i = 0; i < 5; ++i) d.features(i, 0) = i;
  d.labels = {0, 2, 1, 2, 0};
  d.n_classes = 3;
  const Dataset s = subset_classes(d, {2, 0});
  EXPECT_EQ(s.labels, (std::vector<int>{1, 0, 0, 1}));
  EXPECT_EQ(s.n_classes, 2);
  EXPECT_EQ(s.features(0, 0), 0.0);
  EXPECT_EQ(s.features(1, 0), 1.0);
  EXPECT_THROW(subset_classes(d, {2, 2}), DataError);
}

TEST(average_pool, block_means) {
  RealMatrix img = RealMatrix::Zero(1, 784);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) img(0, r * 28 + c) = 1.0;
  img(0, 27 * 28 + 27) = 0.8;
  const RealMatrix p = average_pool_4x4(img);
  EXPECT_EQ(p.cols(), 49);
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(0, 48), 0.05);
  EXPECT_DOUBLE_EQ(p.sum(), 1.05);
}

TEST(pca, matches_dense_eigensolver) {
  const RawImages r = load_idx(kImages, kLabels);
  const RealMatrix pooled = average_pool_4x4(r.pixels.topRows(500));
  const PcaTransform t = fit_pca(pooled, 8);
  const RealMatrix centered = pooled.rowwise() - pooled.colwise().mean();
  const RealMatrix cov = centered.transpose() * centered / static_cast<double>(pooled.rows());
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(cov);
  const RealMatrix orth = t.components * t.components.transpose();
  EXPECT_LT((orth - RealMatrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-9);
  for (int k = 0; k < 8; ++k) {
    const double lam = es.eigenvalues()(48 - k);
    EXPECT_NEAR(t.eigenvalues(k), lam, 1e-6 * es.eigenvalues()(48));
    // Captured variance along the component equals the eigenvalue.
    const RealVector v = t.components.row(k).transpose();
    EXPECT_NEAR(v.dot(cov * v), lam, 1e-6 * es.eigenvalues()(48));
  }
  EXPECT_FALSE(t.degenerate);
}

TEST(downsample, range_and_reuse) {
  const RawImages r = load_idx(kImages, kLabels);
  const Downsampled a = downsample_1x8(r.pixels.topRows(300));
  EXPECT_EQ(a.features.cols(), 8);
  EXPECT_GE(a.features.minCoeff(), 0.0);
  EXPECT_LE(a.features.maxCoeff(), std::numbers::pi);
  const Downsampled b = downsample_1x8(r.pixels.topRows(300), &a.transform);
  EXPECT_EQ(a.features, b.features);
  const Downsampled c = downsample_1x8(r.pixels.middleRows(300, 100), &a.transform);
  EXPECT_GE(c.features.minCoeff(), 0.0);
  EXPECT_LE(c.features.maxCoeff(), std::numbers::pi);
}

TEST(downsample, constant_images_are_degenerate) {
  const Downsampled d = downsample_1x8(RealMatrix::Constant(20, 784, 0.3));
  EXPECT_TRUE(d.degenerate);
  EXPECT_LT((d.features.array() - std::numbers::pi / 2).abs().maxCoeff(), 1e-11);
}

TEST(pca, save_load_round_trip) {
  const RawImages r = load_idx(kImages, kLabels);
  const Downsampled a = downsample_1x8(r.pixels.topRows(200));
  save_pca(scratch("pca.txt").string(), a.transform);
  const PcaTransform t = load_pca(scratch("pca.txt").string());
  const Downsampled b = downsample_1x8(r.pixels.topRows(200), &t);
  EXPECT_EQ(a.features, b.features);
}

TEST(iris2, balance_and_means) {
  const int n = 500;
  const double sigma = 0.25;
  const auto [x, y] = sample_iris2_raw(n, 7, sigma);
  const RealMatrix means = iris2_class_means();
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(std::count(y.begin(), y.end(), c), n);
    const RealVector m = x.middleRows(c * n, n).colwise().mean().transpose();
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(m(j), means(c, j), 3 * sigma / std::sqrt(double(n)));
  }
  const Dataset d = gen_iris2(n, 7);
  for (int i = 0; i < d.size(); ++i) EXPECT_NEAR(d.sample(i).norm(), 1.0, 1e-11);
  EXPECT_TRUE((d.features.col(2).array() == 0).all());
}

TEST(split, sizes_determinism_stratification) {
  const Dataset d = gen_iris2(500, 1);
  const auto [tr, te] = split(d, 0.8, 3);
  EXPECT_EQ(tr.size(), 800);
  EXPECT_EQ(te.size(), 200);
  EXPECT_EQ(std::count(te.labels.begin(), te.labels.end(), 0), 100);
  const auto [tr2, te2] = split(d, 0.8, 3);
  EXPECT_EQ(tr.features, tr2.features);
  EXPECT_EQ(te.labels, te2.labels);
  const auto [tr3, te3] = split(d, 0.8, 4);
  EXPECT_NE(tr.features, tr3.features);
  EXPECT_THROW(split(d, 1.0, 0), DataError);
}

TEST(prepare, mnist_features_in_range) {
  const RawImages r = load_idx(kImages, kLabels);
  const Prepared p = prepare_mnist(r, 2, 0.8, 0);
  ASSERT_TRUE(p.pca.has_value());
  EXPECT_EQ(p.train.dim(), 8);
  EXPECT_EQ(p.train.n_classes, 2);
  for (const Dataset* d : {&p.train, &p.test}) {
    EXPECT_GE(d->features.minCoeff(), 0.0);
    EXPECT_LE(d->features.maxCoeff(), std::numbers::pi);
    for (int y : d->labels) EXPECT_TRUE(y == 0 || y == 1);
  }
}

TEST(csv, round_trip_exact) {
  const Prepared p = prepare_iris2(30, 0.25, 0.7, 2);
  write_dataset_csv(scratch("iris.csv").string(), p.train);
  const Dataset back = read_dataset_csv(scratch("iris.csv").string());
  EXPECT_EQ(back.features, p.train.features);
  EXPECT_EQ(back.labels, p.train.labels);
  write_bytes(scratch("bad.csv"), {'l', 'a', 'b', 'e', 'l', ',', 'f', '0', '\n', '1', ',', 'x', '\n'});
  EXPECT_THROW(read_dataset_csv(scratch("bad.csv").string()), DataError);
}
