// RBF-kernel support vector classifier trained by sequential minimal
// optimization with second-order working-set selection: the first index is
// the maximal violator, the second maximizes the quadratic gain against it.
// The full kernel matrix is precomputed (training sets here are a few
// thousand rows at most), the dual gradient is maintained incrementally, and
// the stopping rule is the standard duality-gap criterion on the violating
// pair.
#pragma once

#include "marsdust/common.hpp"

namespace marsdust {

struct SvmConfig {
  double C = 10000;
  double gamma = 0;  // <= 0 means "scale": 1 / (n_features * Var(X))
  double tol = 1e-3;
  long max_pair_updates = 200'000'000;
};

struct SvmModel {
  size_t n_features = 0;
  double gamma = 0;
  double b = 0;
  std::vector<float> support_vectors;  // m x n_features
  std::vector<double> dual_coef;       // alpha_i * y_i, y in {-1,+1}
  long pair_updates = 0;

  double kernel(const float* a, const float* b_) const {
    double s = 0;
    for (size_t j = 0; j < n_features; ++j) {
      double d = double(a[j]) - b_[j];
      s += d * d;
    }
    return std::exp(-gamma * s);
  }

  double decision(const float* x) const {
    double f = b;
    for (size_t i = 0; i < dual_coef.size(); ++i)
      f += dual_coef[i] * kernel(support_vectors.data() + i * n_features, x);
    return f;
  }

  std::vector<double> decision_values(const std::vector<float>& x, size_t n) const {
    require(x.size() == n * n_features, "svm decision: bad input size");
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = decision(x.data() + i * n_features);
    return out;
  }

  // class 1 on the positive side of the boundary
  std::vector<int> predict(const std::vector<float>& x, size_t n) const {
    auto f = decision_values(x, n);
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = f[i] > 0 ? 1 : 0;
    return labels;
  }
};

inline double scale_gamma(const std::vector<float>& x, size_t d) {
  double mean = 0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  require(var > 0, "svm: zero-variance features cannot use gamma=scale");
  return 1.0 / (static_cast<double>(d) * var);
}

inline SvmModel fit_svm(const std::vector<float>& x, const std::vector<int>& labels, size_t d,
                        const SvmConfig& cfg = {}) {
  const size_t n = labels.size();
  require(n >= 2 && x.size() == n * d, "fit_svm: data size mismatch");
  require(cfg.C > 0, "fit_svm: C must be positive");
  size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, "fit_svm: labels must be 0/1");
    pos += l;
  }
  require(pos > 0 && pos < n, "fit_svm: need at least one sample of each class");

  SvmModel model;
  model.n_features = d;
  model.gamma = cfg.gamma > 0 ? cfg.gamma : scale_gamma(x, d);

  std::vector<int8_t> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = labels[i] == 1 ? 1 : -1;

  // full RBF kernel matrix
  std::vector<float> kmat(n * n);
  for (size_t i = 0; i < n; ++i) {
    kmat[i * n + i] = 1.f;
    for (size_t j = i + 1; j < n; ++j) {
      float k = static_cast<float>(model.kernel(x.data() + i * d, x.data() + j * d));
      kmat[i * n + j] = k;
      kmat[j * n + i] = k;
    }
  }

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // G = Q*alpha - 1
  const double C = cfg.C, tau = 1e-12;

  long updates = 0;
  while (updates < cfg.max_pair_updates) {
    // second-order working-set selection: i is the maximal violator in I_up,
    // j maximizes the guaranteed objective decrease among violated I_low
    // members (converges in far fewer pairs than maximal-violating-pair on
    // heavily overlapping data)
    int i = -1, j = -1;
    double m_val = -std::numeric_limits<double>::infinity();
    double big_m = std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < n; ++t) {
      double v = -y[t] * grad[t];
      bool in_up = (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0);
      if (in_up && v > m_val) {
        m_val = v;
        i = static_cast<int>(t);
      }
    }
    if (i >= 0) {
      const float* ki_row = kmat.data() + static_cast<size_t>(i) * n;
      double best_gain = -std::numeric_limits<double>::infinity();
      for (size_t t = 0; t < n; ++t) {
        double v = -y[t] * grad[t];
        bool in_low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C);
        if (!in_low) continue;
        big_m = std::min(big_m, v);
        double diff = m_val - v;
        if (diff <= 0) continue;
        double quad = std::max(kmat[static_cast<size_t>(i) * n + i] + kmat[t * n + t] -
                                   2.0 * y[i] * y[t] * ki_row[t],
                               tau);
        double gain = diff * diff / quad;
        if (gain > best_gain) {
          best_gain = gain;
          j = static_cast<int>(t);
        }
      }
    }
    if (i < 0 || j < 0 || m_val - big_m < cfg.tol) {
      model.b = (m_val + big_m) / 2;
      break;
    }

    const double kii = kmat[static_cast<size_t>(i) * n + i];
    const double kjj = kmat[static_cast<size_t>(j) * n + j];
    const double kij = kmat[static_cast<size_t>(i) * n + j];
    double ai = alpha[i], aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = std::max(kii + kjj + 2 * kij, tau);
      double delta = (-grad[i] - grad[j]) / quad;
      double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0 && aj < 0) {
        aj = 0;
        ai = diff;
      } else if (diff <= 0 && ai < 0) {
        ai = 0;
        aj = -diff;
      }
      if (diff > 0 && ai > C) {
        ai = C;
        aj = C - diff;
      } else if (diff <= 0 && aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = std::max(kii + kjj - 2 * kij, tau);
      double delta = (grad[i] - grad[j]) / quad;
      double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        } else if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else {
        if (aj < 0) {
          aj = 0;
          ai = sum;
        } else if (ai < 0) {
          ai = 0;
          aj = sum;
        }
      }
    }
    const double dai = ai - alpha[i], daj = aj - alpha[j];
    alpha[i] = ai;
    alpha[j] = aj;
    const float* ki = kmat.data() + static_cast<size_t>(i) * n;
    const float* kj = kmat.data() + static_cast<size_t>(j) * n;
    for (size_t t = 0; t < n; ++t)
      grad[t] += y[t] * (y[i] * dai * ki[t] + y[j] * daj * kj[t]);
    ++updates;
  }
  require(updates < cfg.max_pair_updates, "fit_svm: SMO failed to converge");
  model.pair_updates = updates;

  for (size_t t = 0; t < n; ++t) {
    if (alpha[t] > 1e-12) {
      model.dual_coef.push_back(alpha[t] * y[t]);
      model.support_vectors.insert(model.support_vectors.end(), x.begin() + t * d,
                                   x.begin() + (t + 1) * d);
    }
  }
  return model;
}

}  // namespace marsdust
