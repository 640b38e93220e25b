#ifndef DITQ_QLAYER_HPP
#define DITQ_QLAYER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ditq/calib.hpp"
#include "ditq/lowrank.hpp"
#include "ditq/matrix.hpp"
#include "ditq/quant.hpp"
#include "ditq/smooth.hpp"
#include "ditq/tensor_io.hpp"

#include "json.hpp"

namespace ditq {

// Full-precision product against which every quantized path is measured.
// Weights are in_channels x out_channels, activations channels x tokens, so
// the contraction runs over the shared input-channel rows.
inline Matrix forward_reference(const Matrix& w, const Matrix& x) {
  if (w.rows() != x.rows())
    throw std::invalid_argument("forward_reference: input channel mismatch");
  return matmul_ta(w, x);
}

struct ErrorReport {
  double rel_frobenius = 0.0;
  double sqnr_db = 0.0;
  double max_abs = 0.0;
  double cosine = 0.0;
};

inline constexpr double kSqnrCapDb = 300.0;

// Streaming comparison of a reference and a test signal; report() is exact
// for a single pair and energy-aggregated across many.
class ErrorAccumulator {
 public:
  void add(const Matrix& ref, const Matrix& test) {
    if (ref.rows() != test.rows() || ref.cols() != test.cols())
      throw std::invalid_argument("error_report: shape mismatch");
    auto r = ref.data();
    auto t = test.data();
    for (std::size_t i = 0; i < r.size(); ++i) {
      double rv = r[i], tv = t[i];
      double d = tv - rv;
      signal_ += rv * rv;
      test_ += tv * tv;
      err_ += d * d;
      dot_ += rv * tv;
      max_abs_ = std::max(max_abs_, std::fabs(d));
    }
  }

  ErrorReport report() const {
    ErrorReport out;
    double sig = std::sqrt(signal_);
    double err = std::sqrt(err_);
    out.rel_frobenius = sig > 0.0 ? err / sig : err;
    if (err_ == 0.0)
      out.sqnr_db = kSqnrCapDb;
    else if (signal_ == 0.0)
      out.sqnr_db = -kSqnrCapDb;
    else
      out.sqnr_db = std::clamp(10.0 * std::log10(signal_ / err_), -kSqnrCapDb, kSqnrCapDb);
    double tn = std::sqrt(test_);
    if (sig == 0.0 && tn == 0.0)
      out.cosine = 1.0;
    else if (sig == 0.0 || tn == 0.0)
      out.cosine = 0.0;
    else
      out.cosine = std::clamp(dot_ / (sig * tn), -1.0, 1.0);
    out.max_abs = max_abs_;
    return out;
  }

  double signal_energy() const { return signal_; }
  double error_energy() const { return err_; }

 private:
  double signal_ = 0.0, test_ = 0.0, err_ = 0.0, dot_ = 0.0, max_abs_ = 0.0;
};

inline ErrorReport error_report(const Matrix& ref, const Matrix& test) {
  ErrorAccumulator acc;
  acc.add(ref, test);
  return acc.report();
}

// Execution modes.
//   SqdReference: per-timestep smoothing; the weight is re-folded with s^(t)
//                 and requantized on every call.
//   SqdFolded:    per-timestep smoothing; one core quantized against the
//                 per-channel max fold, with the ratio s^(t)/fold carried in
//                 the activation dequantization scales.
//   Sqs:          static smoothing and fixed activation scales from the
//                 calibration min/max range; no runtime scale derivation.
//   Naive:        no smoothing; activations quantized with one dynamic scale
//                 per token (the hardware-typical granularity) and weights
//                 per output channel.
enum class ExecMode { SqdReference, SqdFolded, Sqs, Naive };

struct QuantLinearLayer {
  ExecMode mode = ExecMode::SqdFolded;
  BitWidth wbits = BitWidth::W8;
  BitWidth abits = BitWidth::W8;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  SmoothingScales smoothing;        // identity single row for Naive
  std::vector<float> fold;          // per-channel folding vector (row max of smoothing)
  QuantizedTensor core;             // quantize(w * fold, wbits, OutputChannel)
  Matrix core_dequant{1, 1};        // cached dequantized core (not used by SqdReference)
  std::optional<LowRankAdapter> adapter;
  std::vector<float> act_scales;    // fixed activation scales, Sqs only
  std::optional<Matrix> weight_fp32;  // raw weight; required by SqdReference and bypass
  bool bypass_quant = false;          // test hook: exact scales, no integer grid

  std::size_t timesteps() const { return smoothing.timesteps(); }

  // De-folded dequantized core: the weight the quantized path effectively
  // applies, expressed in unsmoothed coordinates.
  Matrix effective_weight() const {
    return scale_channels(core_dequant, ChannelAxis::InputChannel, fold, /*divide=*/true);
  }

  Matrix forward(const Matrix& x, std::size_t t) const {
    if (x.rows() != in_channels)
      throw std::invalid_argument("QuantLinearLayer::forward: input channel mismatch");
    bool dynamic = mode == ExecMode::SqdReference || mode == ExecMode::SqdFolded;
    if (dynamic && t >= timesteps())
      throw std::out_of_range("QuantLinearLayer::forward: timestep out of range");
    if (bypass_quant && !weight_fp32)
      throw std::invalid_argument("QuantLinearLayer::forward: bypass requires the fp32 weight");

    Matrix y = core_product(x, t);
    if (adapter) {
      // Compensation branch consumes the raw activation.
      Matrix proj = matmul_ta(adapter->a, x);       // r x tokens
      add_inplace(y, matmul(adapter->b, proj));     // out x tokens
    }
    return y;
  }

 private:
  Matrix core_product(const Matrix& x, std::size_t t) const {
    switch (mode) {
      case ExecMode::SqdReference: {
        if (!weight_fp32)
          throw std::invalid_argument("SqdReference forward requires the fp32 weight");
        Matrix xs = apply_to_activation(x, smoothing, t);
        Matrix wf = apply_to_weight(*weight_fp32, smoothing, t);
        if (bypass_quant) return matmul_ta(wf, xs);
        Matrix xq = fake_quant(xs, abits, ChannelAxis::InputChannel);
        Matrix wq = fake_quant(wf, wbits, ChannelAxis::OutputChannel);
        return matmul_ta(wq, xq);
      }
      case ExecMode::SqdFolded: {
        auto st = smoothing.row(t);
        if (bypass_quant) {
          Matrix xf = scale_channels(x, ChannelAxis::InputChannel, fold, /*divide=*/true);
          Matrix wf = scale_channels(*weight_fp32, ChannelAxis::InputChannel, fold);
          return matmul_ta(wf, xf);
        }
        Matrix xs = apply_to_activation(x, smoothing, t);
        std::vector<float> corr(in_channels);
        for (std::size_t j = 0; j < in_channels; ++j) corr[j] = st[j] / fold[j];
        Matrix xq = fake_quant_rescaled(xs, ChannelAxis::InputChannel, abits, corr);
        return matmul_ta(core_dequant, xq);
      }
      case ExecMode::Sqs: {
        Matrix xs = apply_to_activation(x, smoothing, 0);
        if (bypass_quant) {
          Matrix wf = scale_channels(*weight_fp32, ChannelAxis::InputChannel, fold);
          return matmul_ta(wf, xs);
        }
        Matrix xq = fake_quant_fixed(xs, ChannelAxis::InputChannel, abits, act_scales);
        return matmul_ta(core_dequant, xq);
      }
      case ExecMode::Naive: {
        if (bypass_quant) return matmul_ta(*weight_fp32, x);
        Matrix xq = fake_quant(x, abits, ChannelAxis::OutputChannel);  // per-token scales
        return matmul_ta(core_dequant, xq);
      }
    }
    throw std::logic_error("unreachable");
  }
};

// Assemble a layer from a raw weight and calibration statistics. The adapter,
// when requested, compensates the folded core in unsmoothed coordinates so
// its branch can consume the raw activation.
inline QuantLinearLayer build_layer(const Matrix& w, const ActivationStats& stats,
                                    double alpha, ExecMode mode, BitWidth wbits,
                                    BitWidth abits, std::size_t rank = 0,
                                    SvdMethod svd_method = SvdMethod::Auto) {
  QuantLinearLayer layer;
  layer.mode = mode;
  layer.wbits = wbits;
  layer.abits = abits;
  layer.in_channels = w.rows();
  layer.out_channels = w.cols();
  layer.weight_fp32 = w;

  if (mode == ExecMode::Naive) {
    layer.smoothing.mode = SmoothingMode::Static;
    layer.smoothing.alpha = alpha;
    layer.smoothing.s = Matrix(1, w.rows());
    for (std::size_t j = 0; j < w.rows(); ++j) layer.smoothing.s(0, j) = 1.0f;
  } else {
    SmoothingMode smode =
        mode == ExecMode::Sqs ? SmoothingMode::Static : SmoothingMode::Dynamic;
    layer.smoothing = compute_scales(stats, w, alpha, smode);
  }
  layer.fold = layer.smoothing.fold_vector();

  Matrix folded = scale_channels(w, ChannelAxis::InputChannel, layer.fold);
  layer.core = quantize(folded, wbits, ChannelAxis::OutputChannel);
  layer.core_dequant = dequantize(layer.core);

  if (mode == ExecMode::Sqs) {
    layer.act_scales.resize(w.rows());
    auto s0 = layer.smoothing.row(0);
    for (std::size_t j = 0; j < w.rows(); ++j) {
      float range = std::max(std::fabs(stats.run_min()[j]), std::fabs(stats.run_max()[j]));
      layer.act_scales[j] = quant_scale(range / s0[j], abits);
    }
  }

  if (rank > 0) {
    layer.adapter = build_adapter(w, layer.effective_weight(), rank, svd_method);
  }
  return layer;
}

inline QuantLinearLayer build_naive_layer(const Matrix& w, BitWidth wbits, BitWidth abits,
                                          std::size_t rank = 0,
                                          SvdMethod svd_method = SvdMethod::Auto) {
  ActivationStats unused(1, w.rows());
  return build_layer(w, unused, 0.5, ExecMode::Naive, wbits, abits, rank, svd_method);
}

// ---------------------------------------------------------------------------
// Size accounting
// ---------------------------------------------------------------------------

struct FootprintBreakdown {
  std::uint64_t core_payload = 0;   // quantized weight bytes
  std::uint64_t quant_scales = 0;   // per-channel weight scales + fixed activation scales
  std::uint64_t smoothing = 0;      // smoothing table
  std::uint64_t adapter = 0;        // both fp16 factors
  std::uint64_t unquantized = 0;    // fp32 weight bytes for unquantized layers

  std::uint64_t total() const {
    return core_payload + quant_scales + smoothing + adapter + unquantized;
  }
};

// Descriptor-level accounting, usable without materializing a layer.
// wbits empty means the layer stays in fp32.
struct LayerDesc {
  std::size_t k = 0;
  std::size_t m = 0;
  std::optional<BitWidth> wbits;
  std::size_t rank = 0;
  std::size_t smoothing_rows = 0;   // 0 none, 1 static, T dynamic
  bool fixed_act_scales = false;    // Sqs carries k fp32 activation scales
};

inline FootprintBreakdown memory_footprint(const LayerDesc& d) {
  FootprintBreakdown out;
  if (!d.wbits) {
    out.unquantized = static_cast<std::uint64_t>(d.k) * d.m * 4;
    return out;
  }
  std::uint64_t elems = static_cast<std::uint64_t>(d.k) * d.m;
  out.core_payload = *d.wbits == BitWidth::W8 ? elems : (elems + 1) / 2;
  out.quant_scales = static_cast<std::uint64_t>(d.m) * 4;
  if (d.fixed_act_scales) out.quant_scales += static_cast<std::uint64_t>(d.k) * 4;
  out.smoothing = static_cast<std::uint64_t>(d.smoothing_rows) * d.k * 4;
  out.adapter = d.rank > 0 ? static_cast<std::uint64_t>(d.k + d.m) * d.rank * 2 : 0;
  return out;
}

inline FootprintBreakdown memory_footprint(const QuantLinearLayer& layer) {
  LayerDesc d;
  d.k = layer.in_channels;
  d.m = layer.out_channels;
  d.wbits = layer.wbits;
  d.rank = layer.adapter ? layer.adapter->rank : 0;
  d.smoothing_rows = layer.mode == ExecMode::Naive ? 0 : layer.smoothing.timesteps();
  d.fixed_act_scales = layer.mode == ExecMode::Sqs;
  return memory_footprint(d);
}

// ---------------------------------------------------------------------------
// Bundle serialization: a directory with manifest.json, core.ditq,
// smoothing.ditq, scales.ditq and optional adapter_{a,b}.ditq + adapter.json.
// scales.ditq holds the fixed activation scales for Sqs bundles and the
// folding vector for dynamic ones.
// ---------------------------------------------------------------------------

inline void save_layer_bundle(const std::filesystem::path& dir, const QuantLinearLayer& layer) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["mode"] = layer.mode == ExecMode::Sqs ? "sqs"
                     : layer.mode == ExecMode::Naive ? "naive"
                                                     : "sqd";
  manifest["wbits"] = layer.wbits == BitWidth::W8 ? 8 : 4;
  manifest["abits"] = layer.abits == BitWidth::W8 ? 8 : 4;
  manifest["k"] = layer.in_channels;
  manifest["m"] = layer.out_channels;
  manifest["rank"] = layer.adapter ? layer.adapter->rank : 0;
  manifest["alpha"] = layer.smoothing.alpha;
  manifest["T"] = layer.smoothing.timesteps();
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw io_error("cannot write bundle manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
  }
  write_quantized(dir / "core.ditq", layer.core);
  write_matrix(dir / "smoothing.ditq", layer.smoothing.s);
  Matrix scales(1, layer.in_channels);
  const std::vector<float>& sv = layer.mode == ExecMode::Sqs ? layer.act_scales : layer.fold;
  for (std::size_t j = 0; j < layer.in_channels; ++j) scales(0, j) = sv[j];
  write_matrix(dir / "scales.ditq", scales);
  if (layer.adapter) {
    const auto& ad = *layer.adapter;
    write_half_matrix(dir / "adapter_a.ditq", ad.a.rows(), ad.a.cols(), ad.a_bits());
    write_half_matrix(dir / "adapter_b.ditq", ad.b.rows(), ad.b.cols(), ad.b_bits());
    nlohmann::json aj;
    aj["rank"] = ad.rank;
    aj["sigma"] = ad.sigma;
    std::ofstream os(dir / "adapter.json");
    if (!os) throw io_error("cannot write adapter sidecar in " + dir.string());
    os << aj.dump(2) << "\n";
  } else {
    // Drop stale adapter files when overwriting a bundle in place.
    std::filesystem::remove(dir / "adapter_a.ditq");
    std::filesystem::remove(dir / "adapter_b.ditq");
    std::filesystem::remove(dir / "adapter.json");
  }
}

inline Matrix half_matrix_as_float(const TensorFile& t, const std::string& what) {
  if (t.dtype != DType::F16 || t.dims.size() != 2)
    throw io_error("expected 2-D fp16 tensor for " + what);
  auto bits = half_payload(t);
  Matrix out(t.dims[0], t.dims[1]);
  auto d = out.data();
  for (std::size_t i = 0; i < bits.size(); ++i) d[i] = half_to_float(bits[i]);
  return out;
}

// Reassemble a layer from a bundle. `exec` chooses the runtime path for
// dynamic bundles; the raw weight enables SqdReference and the bypass hook.
inline QuantLinearLayer load_layer_bundle(const std::filesystem::path& dir, ExecMode exec,
                                          const Matrix* raw_weight = nullptr) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw io_error("cannot read bundle manifest in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(is);
  std::string mode = manifest.at("mode").get<std::string>();
  if ((mode == "sqs") != (exec == ExecMode::Sqs))
    throw io_error("bundle mode '" + mode + "' does not match requested execution path");

  QuantLinearLayer layer;
  layer.mode = exec;
  layer.wbits = manifest.at("wbits").get<int>() == 8 ? BitWidth::W8 : BitWidth::W4;
  layer.abits = manifest.at("abits").get<int>() == 8 ? BitWidth::W8 : BitWidth::W4;
  layer.in_channels = manifest.at("k").get<std::size_t>();
  layer.out_channels = manifest.at("m").get<std::size_t>();
  layer.core = read_quantized(dir / "core.ditq");
  layer.core_dequant = dequantize(layer.core);
  layer.smoothing.mode = mode == "sqs" ? SmoothingMode::Static : SmoothingMode::Dynamic;
  layer.smoothing.alpha = manifest.at("alpha").get<double>();
  layer.smoothing.s = read_matrix(dir / "smoothing.ditq");
  Matrix scales = read_matrix(dir / "scales.ditq");
  if (layer.core.rows != layer.in_channels || layer.core.cols != layer.out_channels ||
      layer.smoothing.channels() != layer.in_channels || scales.cols() != layer.in_channels)
    throw io_error("bundle tensors do not match the manifest shape in " + dir.string());
  layer.fold = layer.smoothing.fold_vector();
  if (exec == ExecMode::Sqs) {
    layer.act_scales.assign(scales.row(0).begin(), scales.row(0).end());
  }
  if (std::filesystem::exists(dir / "adapter_a.ditq")) {
    LowRankAdapter ad;
    ad.a = half_matrix_as_float(read_tensor(dir / "adapter_a.ditq"), "adapter_a");
    ad.b = half_matrix_as_float(read_tensor(dir / "adapter_b.ditq"), "adapter_b");
    std::ifstream as(dir / "adapter.json");
    if (!as) throw io_error("cannot read adapter sidecar in " + dir.string());
    nlohmann::json aj = nlohmann::json::parse(as);
    ad.rank = aj.at("rank").get<std::size_t>();
    ad.sigma = aj.at("sigma").get<std::vector<double>>();
    layer.adapter = std::move(ad);
  }
  if (raw_weight) layer.weight_fp32 = *raw_weight;
  return layer;
}

}  // namespace ditq

#endif  // DITQ_QLAYER_HPP
