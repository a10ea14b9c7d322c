// Principal component analysis over flattened image vectors.
//
// Small problems use an exact SVD of the centered data; large ones switch to
// a seeded randomized range-finder (Halko-style, with power iterations),
// which is plenty accurate for the leading components of image data. The
// elbow rule picks a component count from the explained-variance curve.
#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "marsdust/common.hpp"
#include "marsdust/rng.hpp"

namespace marsdust {

struct PCAModel {
  size_t n_features = 0;
  int n_components = 0;
  std::vector<float> mean;        // n_features
  std::vector<float> components;  // n_components x n_features, row-major
  std::vector<double> explained_variance;
  std::vector<double> explained_variance_ratio;
  bool randomized = false;

  // project rows of X (n x d) onto the component basis -> n x k
  std::vector<float> transform(const std::vector<float>& x, size_t n) const {
    require(x.size() == n * n_features, "pca transform: bad input size");
    std::vector<float> out(n * static_cast<size_t>(n_components));
    for (size_t i = 0; i < n; ++i)
      for (int c = 0; c < n_components; ++c) {
        double acc = 0;
        const float* row = x.data() + i * n_features;
        const float* comp = components.data() + static_cast<size_t>(c) * n_features;
        for (size_t j = 0; j < n_features; ++j) acc += double(row[j] - mean[j]) * comp[j];
        out[i * n_components + c] = static_cast<float>(acc);
      }
    return out;
  }

  std::vector<float> inverse_transform(const std::vector<float>& z, size_t n) const {
    require(z.size() == n * static_cast<size_t>(n_components),
            "pca inverse_transform: bad input size");
    std::vector<float> out(n * n_features);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n_features; ++j) {
        double acc = mean[j];
        for (int c = 0; c < n_components; ++c)
          acc += double(z[i * n_components + c]) *
                 components[static_cast<size_t>(c) * n_features + j];
        out[i * n_features + j] = static_cast<float>(acc);
      }
    return out;
  }

  // keep only the leading k components (the top-variance ones)
  void truncate(int k) {
    require(k >= 1 && k <= n_components, "pca truncate: bad component count");
    n_components = k;
    components.resize(static_cast<size_t>(k) * n_features);
    explained_variance.resize(k);
    explained_variance_ratio.resize(k);
  }
};

namespace detail {

// deterministic sign: make each component's largest-magnitude entry positive
inline void fix_component_signs(Eigen::MatrixXd& v_rows) {
  for (Eigen::Index r = 0; r < v_rows.rows(); ++r) {
    Eigen::Index imax = 0;
    v_rows.row(r).cwiseAbs().maxCoeff(&imax);
    if (v_rows(r, imax) < 0) v_rows.row(r) = -v_rows.row(r);
  }
}

}  // namespace detail

enum class PcaSolver { automatic, exact, randomized };

inline PCAModel fit_pca(const std::vector<float>& x, size_t n, size_t d, int k,
                        uint64_t seed = 0, PcaSolver solver = PcaSolver::automatic) {
  require(n >= 2, "fit_pca: need at least two samples");
  require(x.size() == n * d, "fit_pca: data size mismatch");
  require(k >= 1 && static_cast<size_t>(k) <= std::min(n, d),
          "fit_pca: n_components out of range");

  PCAModel m;
  m.n_features = d;
  m.n_components = k;
  m.mean.assign(d, 0.f);
  std::vector<double> mean_d(d, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) mean_d[j] += x[i * d + j];
  for (size_t j = 0; j < d; ++j) {
    mean_d[j] /= static_cast<double>(n);
    m.mean[j] = static_cast<float>(mean_d[j]);
  }

  Eigen::MatrixXd xc(n, d);
  double total_var = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) {
      double v = double(x[i * d + j]) - mean_d[j];
      xc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      total_var += v * v;
    }
  total_var /= static_cast<double>(n - 1);

  Eigen::VectorXd singular;
  Eigen::MatrixXd v_rows;  // k x d
  const bool exact = solver == PcaSolver::exact ||
                     (solver == PcaSolver::automatic && std::min(n, d) <= 512);
  if (exact) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinV);
    singular = svd.singularValues().head(k);
    v_rows = svd.matrixV().leftCols(k).transpose();
  } else {
    m.randomized = true;
    const int l = std::min<int>(k + 10, static_cast<int>(std::min(n, d)));
    Rng rng(derive_seed(seed, 0x9ca));
    Eigen::MatrixXd g(d, l);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.next_normal();
    Eigen::MatrixXd y = xc * g;
    for (int it = 0; it < 4; ++it) {
      y = Eigen::HouseholderQR<Eigen::MatrixXd>(y).householderQ() *
          Eigen::MatrixXd::Identity(y.rows(), l);
      y = xc * (xc.transpose() * y);
    }
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(y).householderQ() *
                        Eigen::MatrixXd::Identity(y.rows(), l);
    Eigen::MatrixXd b = q.transpose() * xc;  // l x d
    Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinV);
    singular = svd.singularValues().head(k);
    v_rows = svd.matrixV().leftCols(k).transpose();
  }
  detail::fix_component_signs(v_rows);

  m.components.resize(static_cast<size_t>(k) * d);
  for (int c = 0; c < k; ++c)
    for (size_t j = 0; j < d; ++j)
      m.components[static_cast<size_t>(c) * d + j] =
          static_cast<float>(v_rows(c, static_cast<Eigen::Index>(j)));
  m.explained_variance.resize(k);
  m.explained_variance_ratio.resize(k);
  for (int c = 0; c < k; ++c) {
    m.explained_variance[c] = singular(c) * singular(c) / static_cast<double>(n - 1);
    m.explained_variance_ratio[c] = total_var > 0 ? m.explained_variance[c] / total_var : 0.0;
  }
  return m;
}

// Index (1-based component count) of maximum perpendicular distance to the
// line joining the first and last points of the variance-ratio curve.
inline int elbow_point(const std::vector<double>& ratios) {
  const int k = static_cast<int>(ratios.size());
  require(k >= 3, "elbow_point: need at least three ratios");
  const double x1 = 1, y1 = ratios.front();
  const double x2 = k, y2 = ratios.back();
  const double dx = x2 - x1, dy = y2 - y1;
  const double norm = std::sqrt(dx * dx + dy * dy);
  int best = 1;
  double best_dist = -1;
  for (int i = 0; i < k; ++i) {
    double px = i + 1, py = ratios[i];
    double dist = std::abs(dx * (py - y1) - dy * (px - x1)) / norm;
    if (dist > best_dist + 1e-15) {
      best_dist = dist;
      best = i + 1;
    }
  }
  return best;
}

}  // namespace marsdust
