#include "qdoor/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "qdoor/circuit_io.hpp"

namespace qdoor {

namespace {

std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) return bytes;
  gzFile gz = gzopen(path.c_str(), "rb");
  if (!gz) throw DataError("cannot open gzip stream " + path);
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n = 0;
  while ((n = gzread(gz, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(gz);
  if (failed) throw DataError("corrupt gzip stream in " + path);
  return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

// pi truncated to the CSV precision
constexpr double kPiBelow = 3.14159265358;

double round12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw DataError("feature rows and label count differ");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw DataError("label " + std::to_string(y) + " outside [0, n_classes)");
  }
}

RawImages load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_maybe_gzip(images_path);
  const auto lab = read_maybe_gzip(labels_path);
  if (img.size() < 16) throw DataError(images_path + ": truncated header");
  if (lab.size() < 8) throw DataError(labels_path + ": truncated header");
  if (be32(img, 0) != 0x00000803) {
    throw DataError(images_path + ": bad image magic " + hex(be32(img, 0)) + ", expected 0x00000803");
  }
  if (be32(lab, 0) != 0x00000801) {
    throw DataError(labels_path + ": bad label magic " + hex(be32(lab, 0)) + ", expected 0x00000801");
  }
  const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  const std::size_t n_labels = be32(lab, 4);
  const std::size_t need_img = 16 + n * rows * cols;
  if (img.size() < need_img) {
    throw DataError(images_path + ": truncated payload, expected " + std::to_string(need_img) + " bytes, got " +
                    std::to_string(img.size()));
  }
  if (lab.size() < 8 + n_labels) {
    throw DataError(labels_path + ": truncated payload, expected " + std::to_string(8 + n_labels) + " bytes, got " +
                    std::to_string(lab.size()));
  }
  if (n != n_labels) {
    throw DataError("count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  }
  RawImages out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  out.pixels.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows * cols));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < rows * cols; ++j) {
      out.pixels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * rows * cols + j] / 255.0;
    }
    out.labels.push_back(lab[8 + i]);
  }
  return out;
}

namespace {

std::vector<int> select_classes(const std::vector<int>& labels, const std::vector<int>& keep,
                                std::vector<int>& new_labels) {
  std::set<int> present(labels.begin(), labels.end());
  for (int k : keep) {
    if (!present.count(k)) throw DataError("class " + std::to_string(k) + " not present");
  }
  if (std::set<int>(keep.begin(), keep.end()).size() != keep.size()) throw DataError("duplicate class in keep list");
  std::vector<int> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = std::find(keep.begin(), keep.end(), labels[i]);
    if (it == keep.end()) continue;
    rows.push_back(static_cast<int>(i));
    new_labels.push_back(static_cast<int>(it - keep.begin()));
  }
  return rows;
}

}  // namespace

Dataset subset_classes(const Dataset& d, const std::vector<int>& keep) {
  Dataset out;
  const auto rows = select_classes(d.labels, keep, out.labels);
  out.features = d.features(rows, Eigen::all);
  out.n_classes = static_cast<int>(keep.size());
  out.name = d.name;
  out.range_lo = d.range_lo;
  out.range_hi = d.range_hi;
  return out;
}

RawImages subset_classes(const RawImages& d, const std::vector<int>& keep) {
  RawImages out;
  const auto rows = select_classes(d.labels, keep, out.labels);
  out.rows = d.rows;
  out.cols = d.cols;
  out.pixels = d.pixels(rows, Eigen::all);
  return out;
}

RealMatrix average_pool_4x4(const RealMatrix& images28) {
  if (images28.cols() != 28 * 28) {
    throw DataError("expected 28x28 images (784 columns), got " + std::to_string(images28.cols()));
  }
  RealMatrix out = RealMatrix::Zero(images28.rows(), 49);
  for (Eigen::Index i = 0; i < images28.rows(); ++i) {
    for (int r = 0; r < 28; ++r) {
      for (int c = 0; c < 28; ++c) out(i, (r / 4) * 7 + c / 4) += images28(i, r * 28 + c);
    }
  }
  return out / 16.0;
}

PcaTransform fit_pca(const RealMatrix& x, int k) {
  const Eigen::Index d = x.cols();
  PcaTransform t;
  t.mean = x.colwise().mean().transpose();
  const RealMatrix centered = x.rowwise() - t.mean.transpose();
  RealMatrix cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(x.rows()));
  t.components = RealMatrix::Zero(k, d);
  t.eigenvalues = RealVector::Zero(k);
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  for (int c = 0; c < k; ++c) {
    RealVector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = nd(rng);
    auto orthogonalize = [&](RealVector& w) {
      for (int p = 0; p < c; ++p) w -= t.components.row(p).dot(w) * t.components.row(p).transpose();
    };
    orthogonalize(v);
    v.normalize();
    bool zero = false;
    for (int it = 0; it < 1000; ++it) {
      RealVector w = cov * v;
      orthogonalize(w);
      const double nw = w.norm();
      if (nw < 1e-300) {
        zero = true;
        break;
      }
      w /= nw;
      if (w.dot(v) < 0) w = -w;
      const double delta = (w - v).norm();
      v = w;
      if (delta < 1e-10) break;
    }
    if (zero) {
      t.degenerate = true;
      // any unit vector orthogonal to the previous components
      for (Eigen::Index e = 0; e < d; ++e) {
        RealVector w = RealVector::Unit(d, e);
        orthogonalize(w);
        if (w.norm() > 1e-6) {
          v = w.normalized();
          break;
        }
      }
    }
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    t.components.row(c) = v.transpose();
    t.eigenvalues(c) = v.dot(cov * v);
    cov -= t.eigenvalues(c) * v * v.transpose();
  }
  return t;
}

Downsampled downsample_1x8(const RealMatrix& images28, const PcaTransform* fitted) {
  const RealMatrix pooled = average_pool_4x4(images28);
  Downsampled out;
  out.transform = fitted ? *fitted : fit_pca(pooled, 8);
  PcaTransform& t = out.transform;
  const RealMatrix proj = (pooled.rowwise() - t.mean.transpose()) * t.components.transpose();
  if (!fitted) {
    t.scale_lo = proj.colwise().minCoeff().transpose();
    t.scale_hi = proj.colwise().maxCoeff().transpose();
  }
  out.features.resize(proj.rows(), proj.cols());
  for (Eigen::Index j = 0; j < proj.cols(); ++j) {
    const double span = t.scale_hi(j) - t.scale_lo(j);
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      double v = std::numbers::pi / 2;
      if (span > 1e-12) v = std::clamp((proj(i, j) - t.scale_lo(j)) / span * std::numbers::pi, 0.0, std::numbers::pi);
      // rounding pi up would leave the range
      out.features(i, j) = std::min(round12(v), kPiBelow);
    }
    if (!(span > 1e-12)) out.degenerate = true;
  }
  t.degenerate = t.degenerate || out.degenerate;
  return out;
}

void save_pca(const std::string& path, const PcaTransform& t) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  auto row = [&](const char* key, const RealVector& v) {
    out << key;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
    out << '\n';
  };
  out << "pca " << t.components.rows() << ' ' << t.components.cols() << '\n';
  row("mean", t.mean);
  for (Eigen::Index r = 0; r < t.components.rows(); ++r) row("component", t.components.row(r).transpose());
  row("eigenvalues", t.eigenvalues);
  row("scale_lo", t.scale_lo);
  row("scale_hi", t.scale_hi);
  out << "degenerate " << (t.degenerate ? 1 : 0) << '\n';
}

PcaTransform load_pca(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string key;
  int k = 0, d = 0;
  if (!(in >> key >> k >> d) || key != "pca") throw DataError(path + ": not a PCA transform");
  auto read_row = [&](const char* want, Eigen::Index n) {
    if (!(in >> key) || key != want) throw DataError(path + ": expected '" + want + "'");
    RealVector v(n);
    std::string tok;
    for (Eigen::Index i = 0; i < n; ++i) {
      in >> tok;
      v(i) = parse_double(tok);
    }
    return v;
  };
  PcaTransform t;
  t.mean = read_row("mean", d);
  t.components.resize(k, d);
  for (int r = 0; r < k; ++r) t.components.row(r) = read_row("component", d).transpose();
  t.eigenvalues = read_row("eigenvalues", k);
  t.scale_lo = read_row("scale_lo", k);
  t.scale_hi = read_row("scale_hi", k);
  int deg = 0;
  in >> key >> deg;
  t.degenerate = deg != 0;
  return t;
}

RealMatrix iris2_class_means() {
  RealMatrix m(2, 2);
  m << 5.006, 3.428, 5.936, 2.770;
  return m;
}

std::pair<RealMatrix, std::vector<int>> sample_iris2_raw(int n_per_class, std::uint64_t seed, double sigma) {
  if (n_per_class < 1) throw DataError("n_per_class must be >= 1");
  const RealMatrix means = iris2_class_means();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  RealMatrix x(2 * n_per_class, 2);
  std::vector<int> y;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      const int r = c * n_per_class + i;
      x(r, 0) = means(c, 0) + nd(rng);
      x(r, 1) = means(c, 1) + nd(rng);
      y.push_back(c);
    }
  }
  return {x, y};
}

Dataset gen_iris2(int n_per_class, std::uint64_t seed, double sigma) {
  auto [raw, y] = sample_iris2_raw(n_per_class, seed, sigma);
  const RealMatrix means = iris2_class_means();
  const RealVector mid = 0.5 * (means.row(0) + means.row(1)).transpose();
  Dataset d;
  d.name = "iris-2";
  d.n_classes = 2;
  d.labels = y;
  d.range_lo = -1.0;
  d.range_hi = 1.0;
  d.features = RealMatrix::Zero(raw.rows(), 4);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    RealVector v = RealVector::Zero(4);
    v(0) = raw(i, 0) - mid(0);
    v(1) = raw(i, 1) - mid(1);
    const double nrm = v.norm();
    if (nrm > 0) v /= nrm;
    else v(0) = 1.0;
    d.features.row(i) = v.transpose();
  }
  quantize_features(d);
  return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw DataError("train_frac must lie in (0,1)");
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(d.n_classes));
  for (int i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<int> tr, te;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) throw DataError("class " + std::to_string(c) + " has fewer than 2 samples");
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<long>(idx.size());
    const long n_tr = std::clamp(std::lround(train_frac * static_cast<double>(n)), 1L, n - 1);
    tr.insert(tr.end(), idx.begin(), idx.begin() + n_tr);
    te.insert(te.end(), idx.begin() + n_tr, idx.end());
  }
  std::shuffle(tr.begin(), tr.end(), rng);
  std::shuffle(te.begin(), te.end(), rng);
  auto take = [&](const std::vector<int>& rows) {
    Dataset out;
    out.features = d.features(rows, Eigen::all);
    for (int r : rows) out.labels.push_back(d.labels[static_cast<std::size_t>(r)]);
    out.n_classes = d.n_classes;
    out.name = d.name;
    out.range_lo = d.range_lo;
    out.range_hi = d.range_hi;
    return out;
  };
  return {take(tr), take(te)};
}

void quantize_features(Dataset& d) { d.features = d.features.unaryExpr([](double v) { return round12(v); }); }

Prepared prepare_mnist(const RawImages& raw, int n_classes, double train_frac, std::uint64_t seed) {
  std::vector<int> keep(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) keep[static_cast<std::size_t>(c)] = c;
  const RawImages sub = subset_classes(raw, keep);
  Dataset pix;
  pix.features = sub.pixels;
  pix.labels = sub.labels;
  pix.n_classes = n_classes;
  auto [tr, te] = split(pix, train_frac, seed);
  const Downsampled dtr = downsample_1x8(tr.features);
  const Downsampled dte = downsample_1x8(te.features, &dtr.transform);
  Prepared out;
  const std::string name = "mnist-" + std::to_string(n_classes);
  for (auto* d : {&out.train, &out.test}) {
    d->name = name;
    d->n_classes = n_classes;
    d->range_lo = 0.0;
    d->range_hi = std::numbers::pi;
  }
  out.train.features = dtr.features;
  out.train.labels = tr.labels;
  out.test.features = dte.features;
  out.test.labels = te.labels;
  out.pca = dtr.transform;
  return out;
}

Prepared prepare_iris2(int n_per_class, double sigma, double train_frac, std::uint64_t seed) {
  auto [tr, te] = split(gen_iris2(n_per_class, seed, sigma), train_frac, seed + 1);
  return {tr, te, std::nullopt};
}

void write_dataset_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "label";
  for (int j = 0; j < d.dim(); ++j) out << ",f" << j;
  out << '\n';
  char buf[40];
  for (int i = 0; i < d.size(); ++i) {
    out << d.labels[static_cast<std::size_t>(i)];
    for (int j = 0; j < d.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.12g", d.features(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

Dataset read_dataset_csv(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) throw DataError(path + ": missing 'label,f0..' header");
  const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<std::vector<double>> rows;
  Dataset d;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::getline(ls, tok, ',');
    d.labels.push_back(std::stoi(tok));
    std::vector<double> r;
    while (std::getline(ls, tok, ',')) {
      try {
        r.push_back(parse_double(tok));
      } catch (const FormatError&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + tok + "'");
      }
    }
    if (static_cast<int>(r.size()) != dim) throw DataError(path + ":" + std::to_string(line_no) + ": wrong column count");
    rows.push_back(std::move(r));
  }
  d.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < dim; ++j) d.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  d.n_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.name = name;
  return d;
}

}  // namespace qdoor
