#ifndef DITQ_CALIB_HPP
#define DITQ_CALIB_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ditq/matrix.hpp"
#include "ditq/tensor_io.hpp"

#include "json.hpp"

namespace ditq {

// Per-timestep, per-input-channel absmax plus static running min/max over all
// timesteps. One collector per linear layer; parallel calibration shards are
// combined with merge().
class ActivationStats {
 public:
  ActivationStats(std::size_t timesteps, std::size_t channels)
      : absmax_(timesteps, channels),
        run_min_(channels, std::numeric_limits<float>::max()),
        run_max_(channels, std::numeric_limits<float>::lowest()),
        samples_seen_(timesteps, 0) {}

  std::size_t timesteps() const { return absmax_.rows(); }
  std::size_t channels() const { return absmax_.cols(); }
  const Matrix& absmax() const { return absmax_; }
  const std::vector<float>& run_min() const { return run_min_; }
  const std::vector<float>& run_max() const { return run_max_; }
  const std::vector<std::uint64_t>& samples_seen() const { return samples_seen_; }

  std::uint64_t total_samples() const {
    std::uint64_t n = 0;
    for (auto s : samples_seen_) n += s;
    return n;
  }

  // Fold one activation matrix (channels x elements) into the accumulators.
  void record(std::size_t t, const Matrix& x) {
    if (t >= timesteps()) throw std::out_of_range("ActivationStats::record: timestep out of range");
    if (x.rows() != channels())
      throw std::invalid_argument("ActivationStats::record: channel count mismatch");
    for (std::size_t j = 0; j < x.rows(); ++j) {
      float amax = absmax_(t, j);
      float mn = run_min_[j];
      float mx = run_max_[j];
      for (float v : x.row(j)) {
        float a = std::fabs(v);
        if (a > amax) amax = a;
        if (v < mn) mn = v;
        if (v > mx) mx = v;
      }
      absmax_(t, j) = amax;
      run_min_[j] = mn;
      run_max_[j] = mx;
    }
    ++samples_seen_[t];
  }

  // Column-wise max over all timesteps.
  std::vector<float> global_absmax() const {
    if (total_samples() == 0)
      throw std::invalid_argument("ActivationStats::global_absmax: no samples recorded");
    std::vector<float> out(channels(), 0.0f);
    for (std::size_t t = 0; t < timesteps(); ++t)
      for (std::size_t j = 0; j < channels(); ++j)
        if (absmax_(t, j) > out[j]) out[j] = absmax_(t, j);
    return out;
  }

  static ActivationStats merge(const ActivationStats& a, const ActivationStats& b) {
    if (a.timesteps() != b.timesteps() || a.channels() != b.channels())
      throw std::invalid_argument("ActivationStats::merge: shape mismatch");
    ActivationStats out(a.timesteps(), a.channels());
    for (std::size_t t = 0; t < a.timesteps(); ++t) {
      for (std::size_t j = 0; j < a.channels(); ++j)
        out.absmax_(t, j) = std::max(a.absmax_(t, j), b.absmax_(t, j));
      out.samples_seen_[t] = a.samples_seen_[t] + b.samples_seen_[t];
    }
    for (std::size_t j = 0; j < a.channels(); ++j) {
      out.run_min_[j] = std::min(a.run_min_[j], b.run_min_[j]);
      out.run_max_[j] = std::max(a.run_max_[j], b.run_max_[j]);
    }
    return out;
  }

  // Reload accumulator state from serialized tensors.
  void restore(const Matrix& absmax, const Matrix& minmax,
               std::vector<std::uint64_t> samples_seen) {
    if (absmax.rows() != timesteps() || absmax.cols() != channels() || minmax.rows() != 2 ||
        minmax.cols() != channels() || samples_seen.size() != timesteps())
      throw std::invalid_argument("ActivationStats::restore: shape mismatch");
    absmax_ = absmax;
    for (std::size_t j = 0; j < channels(); ++j) {
      run_min_[j] = minmax(0, j);
      run_max_[j] = minmax(1, j);
    }
    samples_seen_ = std::move(samples_seen);
  }

  bool operator==(const ActivationStats& other) const = default;

 private:
  Matrix absmax_;  // timesteps x channels
  std::vector<float> run_min_;
  std::vector<float> run_max_;
  std::vector<std::uint64_t> samples_seen_;
};

// Serialized as <prefix>.absmax.ditq (T x k), <prefix>.minmax.ditq (2 x k) and
// a JSON sidecar <prefix>.json with {timesteps, channels, samples_seen}.
inline void write_stats(const std::filesystem::path& prefix, const ActivationStats& stats) {
  write_matrix(prefix.string() + ".absmax.ditq", stats.absmax());
  Matrix minmax(2, stats.channels());
  for (std::size_t j = 0; j < stats.channels(); ++j) {
    minmax(0, j) = stats.run_min()[j];
    minmax(1, j) = stats.run_max()[j];
  }
  write_matrix(prefix.string() + ".minmax.ditq", minmax);
  nlohmann::json meta;
  meta["timesteps"] = stats.timesteps();
  meta["channels"] = stats.channels();
  meta["samples_seen"] = stats.samples_seen();
  std::ofstream os(prefix.string() + ".json");
  if (!os) throw io_error("cannot write stats sidecar for " + prefix.string());
  os << meta.dump(2) << "\n";
}

inline ActivationStats read_stats(const std::filesystem::path& prefix) {
  std::ifstream is(prefix.string() + ".json");
  if (!is) throw io_error("cannot read stats sidecar for " + prefix.string());
  nlohmann::json meta = nlohmann::json::parse(is);
  std::size_t timesteps = meta.at("timesteps").get<std::size_t>();
  std::size_t channels = meta.at("channels").get<std::size_t>();
  Matrix absmax = read_matrix(prefix.string() + ".absmax.ditq");
  Matrix minmax = read_matrix(prefix.string() + ".minmax.ditq");
  if (absmax.rows() != timesteps || absmax.cols() != channels || minmax.rows() != 2 ||
      minmax.cols() != channels)
    throw io_error("stats tensors do not match sidecar shape for " + prefix.string());
  ActivationStats stats(timesteps, channels);
  stats.restore(absmax, minmax, meta.at("samples_seen").get<std::vector<std::uint64_t>>());
  return stats;
}

}  // namespace ditq

#endif  // DITQ_CALIB_HPP
