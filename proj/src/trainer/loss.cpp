// Copyright 2026 The SimMAT Authors.
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

#include <algorithm>
#include <cmath>

#include "simmat/trainer.hpp"

namespace simmat {
namespace {

constexpr double kGamma = 2.0;
constexpr double kAlpha = 0.25;
constexpr double kSmooth = 1.0;

// log σ(z) without overflow.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

void check_target(const Shape& shape, const BinaryMask& target) {
  if (shape.size() != 2 || shape[0] != target.height || shape[1] != target.width) {
    throw DimensionError("loss: logits " + shape_str(shape) + " vs target " + std::to_string(target.height) + "x" +
                         std::to_string(target.width));
  }
}

}  // namespace

template <class T>
BasicVar<T> focal_dice_loss(const BasicVar<T>& logits, const BinaryMask& target, LossWeights weights) {
  check_target(logits.shape(), target);
  const auto& z = logits.value().storage();
  const std::size_t n = z.size();
  std::vector<double> p(n), dfocal(n);
  double focal = 0.0, inter = 0.0, psum = 0.0, ysum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = static_cast<double>(z[i]);
    if (!std::isfinite(raw)) throw NumericError("loss: non-finite logit at pixel " + std::to_string(i));
    const double zc = std::clamp(raw, -kLogitCap, kLogitCap);
    const double pi = 1.0 / (1.0 + std::exp(-zc));
    p[i] = pi;
    const bool y = target.data[i] != 0;
    if (y) {
      const double lp = log_sigmoid(zc);
      const double w = std::pow(1.0 - pi, kGamma);
      focal += -kAlpha * w * lp;
      dfocal[i] = kAlpha * w * (kGamma * pi * lp - (1.0 - pi));
    } else {
      const double lq = log_sigmoid(-zc);
      const double w = std::pow(pi, kGamma);
      focal += -(1.0 - kAlpha) * w * lq;
      dfocal[i] = (1.0 - kAlpha) * w * (pi - kGamma * (1.0 - pi) * lq);
    }
    if (raw != zc) dfocal[i] = 0.0;
    inter += pi * (y ? 1.0 : 0.0);
    psum += pi;
    ysum += y ? 1.0 : 0.0;
  }
  const double nn = static_cast<double>(n);
  const double s = psum + ysum + kSmooth;
  const double dice = (2.0 * inter + kSmooth) / s;
  const double loss = weights.focal * focal / nn + weights.dice * (1.0 - dice);

  std::vector<T> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = target.data[i] ? 1.0 : 0.0;
    const bool capped = std::abs(static_cast<double>(z[i])) > kLogitCap;
    const double ddice_dp = (2.0 * y * s - (2.0 * inter + kSmooth)) / (s * s);
    const double dp_dz = capped ? 0.0 : p[i] * (1.0 - p[i]);
    grad[i] = static_cast<T>(weights.focal * dfocal[i] / nn - weights.dice * ddice_dp * dp_dz);
  }
  return BasicVar<T>::make(BasicTensor<T>({1}, static_cast<T>(loss)), {logits},
                           [grad = std::move(grad)](Node<T>& self) {
                             auto& dx = self.parents[0]->ensure_grad();
                             const T g = self.grad[0];
                             for (std::size_t i = 0; i < grad.size(); ++i) dx[i] += g * grad[i];
                           });
}

template BasicVar<float> focal_dice_loss(const BasicVar<float>&, const BinaryMask&, LossWeights);
template BasicVar<double> focal_dice_loss(const BasicVar<double>&, const BinaryMask&, LossWeights);

double focal_term(const Tensor& logits, const BinaryMask& target) {
  check_target(logits.shape(), target);
  double focal = 0.0;
  for (std::size_t i = 0; i < logits.storage().size(); ++i) {
    const double zc = std::clamp(static_cast<double>(logits[i]), -kLogitCap, kLogitCap);
    const double pi = 1.0 / (1.0 + std::exp(-zc));
    if (target.data[i]) {
      focal += -kAlpha * std::pow(1.0 - pi, kGamma) * log_sigmoid(zc);
    } else {
      focal += -(1.0 - kAlpha) * std::pow(pi, kGamma) * log_sigmoid(-zc);
    }
  }
  return focal / static_cast<double>(logits.numel());
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError("iou: masks are " + std::to_string(pred.height) + "x" + std::to_string(pred.width) + " and " +
                         std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask binarize(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("binarize: expected [H,W], got " + shape_str(logits.shape()));
  BinaryMask m(static_cast<int>(logits.dim(0)), static_cast<int>(logits.dim(1)));
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = logits[i] > 0.0f;
  return m;
}

}  // namespace simmat
