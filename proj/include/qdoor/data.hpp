#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qdoor/qcore.hpp"

namespace qdoor {

using RealMatrix = Eigen::MatrixXd;

struct Dataset {
  RealMatrix features;  // N x d
  std::vector<int> labels;
  int n_classes = 0;
  std::string name;
  double range_lo = 0.0;
  double range_hi = 0.0;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  RealVector sample(int i) const { return features.row(i).transpose(); }
  void validate() const;
};

struct RawImages {
  int rows = 0;
  int cols = 0;
  RealMatrix pixels;  // N x (rows*cols), values in [0,1]
  std::vector<int> labels;
  int size() const { return static_cast<int>(labels.size()); }
};

/// Big-endian IDX image/label files; gzip input is detected by its magic.
RawImages load_idx(const std::string& images_path, const std::string& labels_path);

/// Keeps the listed classes (in `keep` order) and relabels them 0..k-1.
Dataset subset_classes(const Dataset& d, const std::vector<int>& keep);
RawImages subset_classes(const RawImages& d, const std::vector<int>& keep);

struct PcaTransform {
  RealVector mean;        // pooled-pixel mean (49)
  RealMatrix components;  // k x 49, orthonormal rows
  RealVector eigenvalues;
  RealVector scale_lo;    // per-feature projection range on the fitting set
  RealVector scale_hi;
  bool degenerate = false;
};

/// 4x4 average pooling of 28x28 images to 7x7.
RealMatrix average_pool_4x4(const RealMatrix& images28);

struct Downsampled {
  RealMatrix features;  // N x 8, in [0, pi]
  PcaTransform transform;
  bool degenerate = false;
};

/// Pooling, PCA to 8 components and min-max scaling to [0, pi]. With
/// `fitted`, reuses its mean, components and scaling (values are clamped).
Downsampled downsample_1x8(const RealMatrix& images28, const PcaTransform* fitted = nullptr);

/// Top-k principal directions by power iteration with deflation.
PcaTransform fit_pca(const RealMatrix& x, int k);

void save_pca(const std::string& path, const PcaTransform& t);
PcaTransform load_pca(const std::string& path);

/// Raw 2-D attributes and labels for the two-class iris generator.
std::pair<RealMatrix, std::vector<int>> sample_iris2_raw(int n_per_class, std::uint64_t seed, double sigma);
/// Class means of the generator (setosa, versicolor first two attributes).
RealMatrix iris2_class_means();
/// Amplitude-ready iris-2 features: attributes centered on the midpoint of
/// the class means, zero-padded to length 4 and normalized.
Dataset gen_iris2(int n_per_class, std::uint64_t seed, double sigma = 0.25);

/// Stratified seeded split.
std::pair<Dataset, Dataset> split(const Dataset& d, double train_frac, std::uint64_t seed);

/// Rounds every feature to 12 significant digits (the CSV precision).
void quantize_features(Dataset& d);

struct Prepared {
  Dataset train;
  Dataset test;
  std::optional<PcaTransform> pca;  // mnist only
};

/// Classes 0..n_classes-1, stratified split, then pooling + PCA fitted on the
/// training part and applied to the test part.
Prepared prepare_mnist(const RawImages& raw, int n_classes, double train_frac, std::uint64_t seed);
Prepared prepare_iris2(int n_per_class, double sigma, double train_frac, std::uint64_t seed);

void write_dataset_csv(const std::string& path, const Dataset& d);
Dataset read_dataset_csv(const std::string& path, const std::string& name = "");

}  // namespace qdoor
