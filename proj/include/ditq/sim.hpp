#ifndef DITQ_SIM_HPP
#define DITQ_SIM_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ditq/common.hpp"
#include "ditq/qlayer.hpp"
#include "ditq/rng.hpp"

#include "json.hpp"

namespace ditq {

// Synthetic transformer-block workload. Each block holds two linear layers, a
// fused qkv-style projection (k -> 3m) and an ffn-style expansion (k -> 4k),
// both fed by the block's activation trace. Activations are Gaussian with a
// fixed set of high-gain outlier channels and a range envelope that widens as
// the denoising index t counts down from T to 0.
struct SynthConfig {
  std::uint64_t seed = 1000;
  std::size_t blocks = 2;
  std::size_t k = 32;        // input channels
  std::size_t m = 32;        // base output width; qkv emits 3m
  std::size_t tokens = 16;   // elements per channel
  std::size_t timesteps = 10;
  double outlier_channels = 0.05;  // fraction of channels boosted
  double outlier_gain = 50.0;
  double widening_beta = 4.0;      // envelope 1 + beta * (1 - t/T)
  double weight_spread = 1.0;      // per-row log-uniform weight scale range
  std::size_t cal_traces = 50;
  std::size_t eval_traces = 200;
  // Optional per-block outlier gains; empty means outlier_gain everywhere.
  std::vector<double> block_outlier_gain;

  double gain_for_block(std::size_t block) const {
    return block_outlier_gain.empty() ? outlier_gain : block_outlier_gain[block];
  }

  void validate() const {
    if (blocks == 0 || k == 0 || m == 0 || tokens == 0 || timesteps == 0)
      throw config_error("config: dimensions must be positive");
    if (outlier_channels < 0.0 || outlier_channels > 1.0)
      throw config_error("config: outlier_channels must be in [0, 1]");
    if (outlier_gain < 1.0) throw config_error("config: outlier_gain must be >= 1");
    if (!block_outlier_gain.empty()) {
      if (block_outlier_gain.size() != blocks)
        throw config_error("config: block_outlier_gain must have one entry per block");
      for (double g : block_outlier_gain)
        if (g < 1.0) throw config_error("config: block_outlier_gain entries must be >= 1");
    }
    if (widening_beta < 0.0) throw config_error("config: widening_beta must be >= 0");
    if (weight_spread < 0.0) throw config_error("config: weight_spread must be >= 0");
    if (cal_traces == 0 || eval_traces == 0)
      throw config_error("config: trace counts must be positive");
  }

  bool operator==(const SynthConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"blocks", c.blocks},
                     {"k", c.k},
                     {"m", c.m},
                     {"tokens", c.tokens},
                     {"timesteps", c.timesteps},
                     {"outlier_channels", c.outlier_channels},
                     {"outlier_gain", c.outlier_gain},
                     {"widening_beta", c.widening_beta},
                     {"weight_spread", c.weight_spread},
                     {"cal_traces", c.cal_traces},
                     {"eval_traces", c.eval_traces}};
  if (!c.block_outlier_gain.empty()) j["block_outlier_gain"] = c.block_outlier_gain;
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.seed = j.value("seed", d.seed);
  c.blocks = j.value("blocks", d.blocks);
  c.k = j.value("k", d.k);
  c.m = j.value("m", d.m);
  c.tokens = j.value("tokens", d.tokens);
  c.timesteps = j.value("timesteps", d.timesteps);
  c.outlier_channels = j.value("outlier_channels", d.outlier_channels);
  c.outlier_gain = j.value("outlier_gain", d.outlier_gain);
  c.widening_beta = j.value("widening_beta", d.widening_beta);
  c.weight_spread = j.value("weight_spread", d.weight_spread);
  c.cal_traces = j.value("cal_traces", d.cal_traces);
  c.eval_traces = j.value("eval_traces", d.eval_traces);
  c.block_outlier_gain = j.value("block_outlier_gain", d.block_outlier_gain);
}

namespace detail {
inline constexpr std::uint64_t kTagWeight = 0x57;
inline constexpr std::uint64_t kTagActivation = 0xA7;
inline constexpr std::uint64_t kTagOutliers = 0x0F;
}  // namespace detail

enum class LayerKind { Qkv, Ffn };

inline const char* layer_kind_name(LayerKind kind) {
  return kind == LayerKind::Qkv ? "qkv" : "ffn";
}

// Channels receiving the outlier gain; a fixed per-block property.
inline std::vector<std::size_t> outlier_channel_set(const SynthConfig& cfg, std::size_t block) {
  std::size_t count = static_cast<std::size_t>(
      std::ceil(cfg.outlier_channels * static_cast<double>(cfg.k)));
  count = std::min(count, cfg.k);
  std::vector<std::size_t> all(cfg.k);
  for (std::size_t i = 0; i < cfg.k; ++i) all[i] = i;
  Rng rng(mix_seed(cfg.seed, detail::kTagOutliers, block));
  for (std::size_t i = cfg.k; i > 1; --i) {  // Fisher-Yates
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(all[i - 1], all[j]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

inline Matrix synth_weight(const SynthConfig& cfg, std::size_t block, LayerKind kind) {
  std::size_t out = kind == LayerKind::Qkv ? 3 * cfg.m : 4 * cfg.k;
  Rng rng(mix_seed(cfg.seed, detail::kTagWeight, block, static_cast<std::uint64_t>(kind)));
  std::vector<float> row_scale(cfg.k);
  for (auto& r : row_scale)
    r = static_cast<float>(std::exp(rng.uniform(-cfg.weight_spread, cfg.weight_spread)));
  Matrix w(cfg.k, out);
  for (std::size_t j = 0; j < cfg.k; ++j)
    for (std::size_t c = 0; c < out; ++c)
      w(j, c) = static_cast<float>(rng.normal()) * row_scale[j];
  return w;
}

// Activation matrix (channels x tokens) for one block, trace and timestep.
// Trace indices [0, cal_traces) are the calibration split, the rest evaluate.
inline Matrix synth_activation(const SynthConfig& cfg, std::size_t block, std::size_t trace,
                               std::size_t t) {
  auto outliers = outlier_channel_set(cfg, block);
  double envelope =
      1.0 + cfg.widening_beta *
                (1.0 - static_cast<double>(t) / static_cast<double>(cfg.timesteps));
  Rng rng(mix_seed(cfg.seed, detail::kTagActivation, block, trace, t));
  Matrix x(cfg.k, cfg.tokens);
  std::size_t next_outlier = 0;
  for (std::size_t j = 0; j < cfg.k; ++j) {
    bool is_outlier = next_outlier < outliers.size() && outliers[next_outlier] == j;
    if (is_outlier) ++next_outlier;
    double gain = (is_outlier ? cfg.gain_for_block(block) : 1.0) * envelope;
    for (std::size_t a = 0; a < cfg.tokens; ++a)
      x(j, a) = static_cast<float>(rng.normal() * gain);
  }
  return x;
}

struct SynthModel {
  SynthConfig cfg;
  std::vector<Matrix> qkv;  // per block, k x 3m
  std::vector<Matrix> ffn;  // per block, k x 4k

  const Matrix& weight(std::size_t block, LayerKind kind) const {
    return kind == LayerKind::Qkv ? qkv[block] : ffn[block];
  }
};

inline SynthModel generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthModel model;
  model.cfg = cfg;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    model.qkv.push_back(synth_weight(cfg, b, LayerKind::Qkv));
    model.ffn.push_back(synth_weight(cfg, b, LayerKind::Ffn));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Grid cells and the evaluation harness
// ---------------------------------------------------------------------------

struct GridCell {
  std::string mode = "fp32";  // fp32 | naive | sqd | sqd-folded | sqs
  BitWidth wbits = BitWidth::W8;
  BitWidth abits = BitWidth::W8;
  std::size_t rank = 0;

  std::string name() const {
    if (mode == "fp32") return mode;
    std::string out = mode;
    out += ":w" + std::string(wbits == BitWidth::W8 ? "8" : "4");
    out += "a" + std::string(abits == BitWidth::W8 ? "8" : "4");
    if (rank > 0) out += ":r" + std::to_string(rank);
    return out;
  }

  bool operator==(const GridCell&) const = default;
};

// Token grammar: mode[:wXaY][:rN], e.g. "sqd:w8a8:r16", "sqs:w4a8", "fp32".
inline GridCell parse_grid_token(const std::string& token) {
  GridCell cell;
  std::vector<std::string> parts;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.empty()) throw config_error("grid: empty token");
  cell.mode = parts[0];
  if (cell.mode != "fp32" && cell.mode != "naive" && cell.mode != "sqd" &&
      cell.mode != "sqd-folded" && cell.mode != "sqs")
    throw config_error("grid: unknown mode '" + cell.mode + "'");
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& p = parts[i];
    if (p == "w8a8" || p == "w4a8" || p == "w8a4" || p == "w4a4") {
      cell.wbits = p[1] == '8' ? BitWidth::W8 : BitWidth::W4;
      cell.abits = p[3] == '8' ? BitWidth::W8 : BitWidth::W4;
    } else if (p.size() > 1 && p[0] == 'r') {
      cell.rank = static_cast<std::size_t>(std::stoul(p.substr(1)));
    } else {
      throw config_error("grid: cannot parse token part '" + p + "'");
    }
  }
  if (cell.mode == "fp32" && (parts.size() > 1))
    throw config_error("grid: fp32 takes no options");
  return cell;
}

inline std::vector<GridCell> parse_grid(const std::string& csv) {
  std::vector<GridCell> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(parse_grid_token(token));
  }
  if (out.empty()) throw config_error("grid: no cells");
  return out;
}

// The six quantized variants plus the full-precision baseline.
inline std::vector<GridCell> default_grid() {
  return parse_grid("fp32,sqd:w8a8,sqs:w8a8,sqd:w8a8:r16,sqd:w4a8,sqs:w4a8,sqd:w4a8:r16");
}

struct LayerCellReport {
  std::size_t block = 0;
  std::string layer;
  ErrorReport error;
};

struct CellResult {
  GridCell cell;
  ErrorReport end_to_end;
  std::vector<LayerCellReport> per_layer;
  double weight_space_rel = 0.0;
  FootprintBreakdown footprint;
  std::uint64_t fp32_bytes = 0;
  double wall_clock_s = 0.0;
};

struct RunReport {
  SynthConfig cfg;
  std::vector<GridCell> grid;
  std::vector<CellResult> cells;
};

using TraceProvider = std::function<Matrix(std::size_t block, std::size_t trace, std::size_t t)>;

inline std::optional<ExecMode> exec_mode_for(const std::string& mode) {
  if (mode == "naive") return ExecMode::Naive;
  if (mode == "sqd") return ExecMode::SqdReference;
  if (mode == "sqd-folded") return ExecMode::SqdFolded;
  if (mode == "sqs") return ExecMode::Sqs;
  return std::nullopt;  // fp32
}

// layers[block][0] = qkv, [1] = ffn; empty for full-precision cells.
using CellLayers = std::vector<std::vector<QuantLinearLayer>>;

inline CellLayers build_cell_layers(const SynthModel& model,
                                    const std::vector<ActivationStats>& stats_qkv,
                                    const std::vector<ActivationStats>& stats_ffn,
                                    const GridCell& cell, double alpha,
                                    SvdMethod svd_method) {
  CellLayers out;
  auto exec = exec_mode_for(cell.mode);
  if (!exec) return out;
  out.resize(model.cfg.blocks);
  for (std::size_t b = 0; b < model.cfg.blocks; ++b) {
    for (LayerKind kind : {LayerKind::Qkv, LayerKind::Ffn}) {
      const Matrix& w = model.weight(b, kind);
      const ActivationStats& st = kind == LayerKind::Qkv ? stats_qkv[b] : stats_ffn[b];
      QuantLinearLayer layer =
          *exec == ExecMode::Naive
              ? build_naive_layer(w, cell.wbits, cell.abits, cell.rank, svd_method)
              : build_layer(w, st, alpha, *exec, cell.wbits, cell.abits, cell.rank,
                            svd_method);
      out[b].push_back(std::move(layer));
    }
  }
  return out;
}

// Evaluate one grid cell over the evaluation traces. Wall-clock covers only
// the quantized forward calls, the harness analogue of inference latency.
inline CellResult evaluate_cell(const SynthModel& model, const CellLayers& layers,
                                const GridCell& cell, const TraceProvider& provider,
                                std::size_t trace_begin, std::size_t trace_end) {
  const SynthConfig& cfg = model.cfg;
  CellResult result;
  result.cell = cell;
  ErrorAccumulator total;
  std::vector<ErrorAccumulator> per_layer(cfg.blocks * 2);
  double seconds = 0.0;

  for (std::size_t trace = trace_begin; trace < trace_end; ++trace) {
    for (std::size_t t = 0; t < cfg.timesteps; ++t) {
      for (std::size_t b = 0; b < cfg.blocks; ++b) {
        Matrix x = provider(b, trace, t);
        for (std::size_t li = 0; li < 2; ++li) {
          LayerKind kind = li == 0 ? LayerKind::Qkv : LayerKind::Ffn;
          const Matrix& w = model.weight(b, kind);
          Matrix y_ref = forward_reference(w, x);
          if (layers.empty()) {
            per_layer[b * 2 + li].add(y_ref, y_ref);
            total.add(y_ref, y_ref);
          } else {
            auto start = std::chrono::steady_clock::now();
            Matrix y = layers[b][li].forward(x, t);
            seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                           .count();
            per_layer[b * 2 + li].add(y_ref, y);
            total.add(y_ref, y);
          }
        }
      }
    }
  }

  result.end_to_end = total.report();
  for (std::size_t b = 0; b < cfg.blocks; ++b)
    for (std::size_t li = 0; li < 2; ++li)
      result.per_layer.push_back({b, layer_kind_name(li == 0 ? LayerKind::Qkv : LayerKind::Ffn),
                                  per_layer[b * 2 + li].report()});
  result.wall_clock_s = seconds;

  // Weight-space error and size accounting.
  double w_err = 0.0, w_sig = 0.0;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t li = 0; li < 2; ++li) {
      LayerKind kind = li == 0 ? LayerKind::Qkv : LayerKind::Ffn;
      const Matrix& w = model.weight(b, kind);
      result.fp32_bytes += static_cast<std::uint64_t>(w.rows()) * w.cols() * 4;
      if (layers.empty()) {
        LayerDesc d;
        d.k = w.rows();
        d.m = w.cols();
        auto f = memory_footprint(d);
        result.footprint.unquantized += f.unquantized;
        continue;
      }
      const QuantLinearLayer& layer = layers[b][li];
      auto f = memory_footprint(layer);
      result.footprint.core_payload += f.core_payload;
      result.footprint.quant_scales += f.quant_scales;
      result.footprint.smoothing += f.smoothing;
      result.footprint.adapter += f.adapter;
      Matrix w_tilde = layer.effective_weight();
      if (layer.adapter)
        add_inplace(w_tilde, matmul(layer.adapter->a, transpose(layer.adapter->b)));
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) {
          double d = static_cast<double>(w(i, j)) - w_tilde(i, j);
          w_err += d * d;
          w_sig += static_cast<double>(w(i, j)) * w(i, j);
        }
    }
  }
  result.weight_space_rel = w_sig > 0.0 ? std::sqrt(w_err / w_sig) : std::sqrt(w_err);
  return result;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("DITQ_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0 && cap < hw) hw = cap;
  }
  return hw;
}

struct RunOptions {
  double alpha = 0.5;
  int threads = 0;  // 0 = auto (hardware, capped by DITQ_THREADS)
  SvdMethod svd_method = SvdMethod::Auto;
};

// Calibrate on the calibration split, build layers per grid cell and compare
// quantized forwards against the full-precision oracle on the evaluation
// split. Cells are independent and may run on separate threads; results land
// in grid order either way.
inline RunReport run_pipeline(const SynthConfig& cfg, const std::vector<GridCell>& grid,
                              const RunOptions& options = {}) {
  cfg.validate();
  if (grid.empty()) throw config_error("run_pipeline: empty grid");
  SynthModel model = generate(cfg);

  std::vector<ActivationStats> stats_qkv, stats_ffn;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    stats_qkv.emplace_back(cfg.timesteps, cfg.k);
    stats_ffn.emplace_back(cfg.timesteps, cfg.k);
  }
  for (std::size_t trace = 0; trace < cfg.cal_traces; ++trace)
    for (std::size_t t = 0; t < cfg.timesteps; ++t)
      for (std::size_t b = 0; b < cfg.blocks; ++b) {
        Matrix x = synth_activation(cfg, b, trace, t);
        stats_qkv[b].record(t, x);
        stats_ffn[b].record(t, x);
      }

  TraceProvider provider = [&cfg](std::size_t block, std::size_t trace, std::size_t t) {
    return synth_activation(cfg, block, trace, t);
  };

  RunReport report;
  report.cfg = cfg;
  report.grid = grid;
  report.cells.resize(grid.size());

  auto run_cell = [&](std::size_t ci) {
    CellLayers built = build_cell_layers(model, stats_qkv, stats_ffn, grid[ci],
                                         options.alpha, options.svd_method);
    report.cells[ci] = evaluate_cell(model, built, grid[ci], provider, cfg.cal_traces,
                                     cfg.cal_traces + cfg.eval_traces);
  };

  int threads = std::min<int>(resolve_threads(options.threads),
                              static_cast<int>(grid.size()));
  if (threads <= 1) {
    for (std::size_t ci = 0; ci < grid.size(); ++ci) run_cell(ci);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w]() {
        for (std::size_t ci = static_cast<std::size_t>(w); ci < grid.size();
             ci += static_cast<std::size_t>(threads))
          run_cell(ci);
      });
    for (auto& th : pool) th.join();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization. Timing is deliberately kept out of the main JSON so
// repeated runs produce byte-identical reports; emit_timing() carries it.
// ---------------------------------------------------------------------------

inline nlohmann::json error_to_json(const ErrorReport& e) {
  return nlohmann::json{{"rel_frobenius", e.rel_frobenius},
                        {"sqnr_db", e.sqnr_db},
                        {"max_abs", e.max_abs},
                        {"cosine", e.cosine}};
}

inline nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["config"] = report.cfg;
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& cell : report.grid) grid.push_back(cell.name());
  j["grid"] = grid;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json cj;
    cj["cell"] = c.cell.name();
    cj["end_to_end"] = error_to_json(c.end_to_end);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : c.per_layer) {
      nlohmann::json lj;
      lj["block"] = l.block;
      lj["layer"] = l.layer;
      lj["error"] = error_to_json(l.error);
      layers.push_back(lj);
    }
    cj["per_layer"] = layers;
    cj["weight_space_rel"] = c.weight_space_rel;
    cj["footprint"] = nlohmann::json{{"core_payload", c.footprint.core_payload},
                                     {"quant_scales", c.footprint.quant_scales},
                                     {"smoothing", c.footprint.smoothing},
                                     {"adapter", c.footprint.adapter},
                                     {"unquantized", c.footprint.unquantized},
                                     {"total", c.footprint.total()}};
    cj["fp32_bytes"] = c.fp32_bytes;
    cells.push_back(cj);
  }
  j["cells"] = cells;
  j["tool_version"] = kVersion;
  return j;
}

inline nlohmann::json timing_to_json(const RunReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells)
    cells.push_back(nlohmann::json{{"cell", c.cell.name()}, {"wall_clock_s", c.wall_clock_s}});
  return nlohmann::json{{"cells", cells}};
}

inline std::string report_to_csv(const RunReport& report) {
  std::ostringstream os;
  os << "cell,wbits,abits,rank,rel_frobenius,sqnr_db,max_abs,cosine,weight_space_rel,"
        "footprint_bytes,fp32_bytes,wall_clock_s\n";
  for (const auto& c : report.cells) {
    os << c.cell.name() << ',' << (c.cell.mode == "fp32" ? 32 : quant_max(c.cell.wbits) == 127 ? 8 : 4)
       << ',' << (c.cell.mode == "fp32" ? 32 : quant_max(c.cell.abits) == 127 ? 8 : 4) << ','
       << c.cell.rank << ',' << c.end_to_end.rel_frobenius << ',' << c.end_to_end.sqnr_db
       << ',' << c.end_to_end.max_abs << ',' << c.end_to_end.cosine << ','
       << c.weight_space_rel << ',' << c.footprint.total() << ',' << c.fp32_bytes << ','
       << c.wall_clock_s << '\n';
  }
  return os.str();
}

}  // namespace ditq

#endif  // DITQ_SIM_HPP
