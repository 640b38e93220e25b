#ifndef DITQ_SMOOTH_HPP
#define DITQ_SMOOTH_HPP

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ditq/calib.hpp"
#include "ditq/matrix.hpp"
#include "ditq/quant.hpp"

namespace ditq {

enum class SmoothingMode { Dynamic, Static };

// Per-input-channel smoothing factors: one row per timestep in Dynamic mode,
// a single row derived from global statistics in Static mode. Activations are
// divided by s along their channel rows, weights multiplied, so the product
// is unchanged while outlier magnitude migrates into the weights.
struct SmoothingScales {
  SmoothingMode mode = SmoothingMode::Dynamic;
  double alpha = 0.5;
  Matrix s{1, 1};  // (T or 1) x channels, all entries > 0

  std::size_t timesteps() const { return s.rows(); }
  std::size_t channels() const { return s.cols(); }

  std::span<const float> row(std::size_t t) const {
    if (mode == SmoothingMode::Static) return s.row(0);
    if (t >= s.rows()) throw std::out_of_range("SmoothingScales: timestep out of range");
    return s.row(t);
  }

  // Per-channel max over all rows; the single folding vector used when one
  // weight copy serves every timestep.
  std::vector<float> fold_vector() const {
    std::vector<float> out(channels(), 0.0f);
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t j = 0; j < channels(); ++j)
        if (s(t, j) > out[j]) out[j] = s(t, j);
    return out;
  }
};

namespace detail {

inline float smoothing_factor(float x_absmax, float w_absmax, double alpha) {
  double xa = std::max(x_absmax, kScaleEpsilon);
  double wa = std::max(w_absmax, kScaleEpsilon);
  return static_cast<float>(std::pow(xa, alpha) / std::pow(wa, 1.0 - alpha));
}

}  // namespace detail

// Derive smoothing factors from calibration statistics and the weight's
// per-input-channel absmax. Timesteps that saw no calibration samples fall
// back to the global per-channel maximum.
inline SmoothingScales compute_scales(const ActivationStats& stats, const Matrix& w,
                                      double alpha, SmoothingMode mode) {
  if (w.rows() != stats.channels())
    throw std::invalid_argument("compute_scales: weight input channels do not match stats");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("compute_scales: alpha must be in [0, 1]");
  auto w_absmax = absmax_per_channel(w, ChannelAxis::InputChannel);
  auto global = stats.global_absmax();
  SmoothingScales scales;
  scales.mode = mode;
  scales.alpha = alpha;
  if (mode == SmoothingMode::Static) {
    scales.s = Matrix(1, stats.channels());
    for (std::size_t j = 0; j < stats.channels(); ++j)
      scales.s(0, j) = detail::smoothing_factor(global[j], w_absmax[j], alpha);
  } else {
    scales.s = Matrix(stats.timesteps(), stats.channels());
    for (std::size_t t = 0; t < stats.timesteps(); ++t) {
      bool empty = stats.samples_seen()[t] == 0;
      for (std::size_t j = 0; j < stats.channels(); ++j) {
        float xa = empty ? global[j] : stats.absmax()(t, j);
        scales.s(t, j) = detail::smoothing_factor(xa, w_absmax[j], alpha);
      }
    }
  }
  return scales;
}

// X_hat = X with channel rows divided by s^(t).
inline Matrix apply_to_activation(const Matrix& x, const SmoothingScales& scales,
                                  std::size_t t) {
  if (x.rows() != scales.channels())
    throw std::invalid_argument("apply_to_activation: channel count mismatch");
  return scale_channels(x, ChannelAxis::InputChannel, scales.row(t), /*divide=*/true);
}

// W_hat = W with input-channel rows multiplied by s^(t).
inline Matrix apply_to_weight(const Matrix& w, const SmoothingScales& scales, std::size_t t) {
  if (w.rows() != scales.channels())
    throw std::invalid_argument("apply_to_weight: channel count mismatch");
  return scale_channels(w, ChannelAxis::InputChannel, scales.row(t), /*divide=*/false);
}

// Post-smoothing per-channel ranges: (activation absmax / s, weight absmax * s).
// At alpha = 0.5 and unclamped inputs both sides equal sqrt(x_absmax * w_absmax).
inline std::pair<std::vector<float>, std::vector<float>> equalized_absmax_check(
    const ActivationStats& stats, const Matrix& w, const SmoothingScales& scales,
    std::size_t t) {
  auto w_absmax = absmax_per_channel(apply_to_weight(w, scales, t), ChannelAxis::InputChannel);
  auto s = scales.row(t);
  std::vector<float> x_absmax(scales.channels());
  bool use_global = scales.mode == SmoothingMode::Static || stats.samples_seen()[t] == 0;
  auto global = stats.global_absmax();
  for (std::size_t j = 0; j < scales.channels(); ++j) {
    float xa = use_global ? global[j] : stats.absmax()(t, j);
    x_absmax[j] = xa / s[j];
  }
  return {std::move(x_absmax), std::move(w_absmax)};
}

}  // namespace ditq

#endif  // DITQ_SMOOTH_HPP
