// Copyright 2026 The encleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ENCLEAK_LINALG_HPP_
#define ENCLEAK_LINALG_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "encleak/rng.hpp"

namespace encleak {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;

template <class S>
inline void fill_normal(Mat<S>& m, Rng& rng, double stddev) {
  // Row-major fill order so the draw sequence is layout-independent.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = static_cast<S>(rng.normal(0.0, stddev));
}

template <class S>
inline S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
}

template <class S>
inline S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x / std::sqrt(S(2))));
  const S pdf = std::exp(S(-0.5) * x * x) / std::sqrt(S(2) * S(M_PI));
  return cdf + x * pdf;
}

// Row-wise in-place softmax.
template <class S>
inline void softmax_rows(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

template <class S>
inline S log_sum_exp(const Eigen::Ref<const Vec<S>>& v) {
  const S mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

// Cross-entropy of one logit row against a target index, with the softmax
// probabilities written to `probs` for reuse in the backward pass.
template <class S>
inline S softmax_cross_entropy(const Vec<S>& logits, int target, Vec<S>& probs) {
  const S mx = logits.maxCoeff();
  probs = (logits.array() - mx).exp();
  const S z = probs.sum();
  probs /= z;
  return std::log(z) + mx - logits(target);
}

// A named view over a parameter tensor; the visitation order of a model's
// tensors defines the optimizer and serialization order.
template <class S>
struct TensorRef {
  std::string name;
  Mat<S>* value;
};

// Adam with bias correction. Moment buffers are allocated lazily against the
// tensor list passed to the first step and keyed by position, so the caller
// must present tensors in a stable order.
template <class S>
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Mat<S>*>& params,
            const std::vector<const Mat<S>*>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      m_.reserve(params.size());
      v_.reserve(params.size());
      for (const auto* p : params) {
        m_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
        v_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat<S>& m = m_[i];
      Mat<S>& v = v_[i];
      const Mat<S>& g = *grads[i];
      m = S(beta1_) * m + (S(1) - S(beta1_)) * g;
      v = S(beta2_) * v + (S(1) - S(beta2_)) * g.cwiseProduct(g);
      *params[i] -=
          (S(lr_) * (m / bc1).array() / ((v / bc2).array().sqrt() + S(eps_)))
              .matrix();
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

template <class S>
inline bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

}  // namespace encleak

#endif  // ENCLEAK_LINALG_HPP_
