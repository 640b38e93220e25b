// ditq command-line tool: generate synthetic workloads, calibrate, quantize
// and evaluate quantized linear layers in reproducible runs.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ditq/ditq.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- run manifests -----------------------------------------------------------

std::uint64_t fnv1a64(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ditq::io_error("cannot hash missing file: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x00000100000001b3ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, fs::path out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)), started_(utc_now()) {}

  void add_input(const fs::path& path) { inputs_.push_back(entry(path, path.string())); }
  void add_output(const fs::path& path) {
    outputs_.push_back(entry(path, fs::relative(path, out_dir_).string()));
  }

  void write(const json& extra = json::object()) {
    json j;
    j["command"] = command_;
    j["tool_version"] = ditq::kVersion;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["started_utc"] = started_;
    j["finished_utc"] = utc_now();
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::ofstream os(out_dir_ / "run_manifest.json");
    if (!os) throw ditq::io_error("cannot write run manifest in " + out_dir_.string());
    os << j.dump(2) << "\n";
  }

 private:
  static json entry(const fs::path& path, const std::string& shown) {
    return json{{"path", shown}, {"fnv1a64", hex64(fnv1a64(path))}};
  }

  std::string command_;
  fs::path out_dir_;
  std::string started_;
  json inputs_ = json::array();
  json outputs_ = json::array();
};

// --- shared helpers ----------------------------------------------------------

ditq::SynthConfig load_config(const std::string& config_path) {
  ditq::SynthConfig cfg;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw ditq::io_error("cannot open config: " + config_path);
    try {
      cfg = json::parse(is).get<ditq::SynthConfig>();
    } catch (const json::exception& e) {
      throw ditq::config_error(std::string("config parse error: ") + e.what());
    }
  }
  return cfg;
}

ditq::SynthConfig load_run_config(const fs::path& run_dir) {
  std::ifstream is(run_dir / "config.json");
  if (!is) throw ditq::io_error("missing config.json in run dir " + run_dir.string());
  try {
    return json::parse(is).get<ditq::SynthConfig>();
  } catch (const json::exception& e) {
    throw ditq::io_error(std::string("corrupt config.json: ") + e.what());
  }
}

std::string block_stem(std::size_t b, ditq::LayerKind kind) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "block%03zu.%s", b, ditq::layer_kind_name(kind));
  return buf;
}

fs::path weight_path(const fs::path& run, std::size_t b, ditq::LayerKind kind) {
  return run / "model" / (block_stem(b, kind) + ".ditq");
}

fs::path trace_path(const fs::path& run, std::size_t b, const char* split) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "block%03zu.%s.ditq", b, split);
  return run / "traces" / buf;
}

// Traces for one block and split as a 4-D tensor: traces x T x k x tokens.
ditq::TensorFile make_trace_tensor(const ditq::SynthConfig& cfg, std::size_t block,
                                   std::size_t first, std::size_t count) {
  ditq::TensorFile t;
  t.dtype = ditq::DType::F32;
  t.dims = {count, cfg.timesteps, cfg.k, cfg.tokens};
  t.payload.resize(t.element_count() * 4);
  std::size_t stride = cfg.k * cfg.tokens * 4;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t ts = 0; ts < cfg.timesteps; ++ts) {
      ditq::Matrix x = ditq::synth_activation(cfg, block, first + i, ts);
      std::memcpy(t.payload.data() + (i * cfg.timesteps + ts) * stride, x.data().data(),
                  stride);
    }
  return t;
}

// In-memory eval-trace store indexed by global trace id.
struct TraceStore {
  std::size_t cal_traces = 0, timesteps = 0, k = 0, tokens = 0;
  std::vector<ditq::TensorFile> per_block;

  ditq::Matrix slice(std::size_t block, std::size_t global_trace, std::size_t t) const {
    const auto& tf = per_block[block];
    std::size_t local = global_trace - cal_traces;
    std::size_t stride = k * tokens;
    std::vector<float> data(stride);
    std::memcpy(data.data(), tf.payload.data() + (local * timesteps + t) * stride * 4,
                stride * 4);
    return ditq::Matrix(k, tokens, std::move(data));
  }
};

std::string quant_tag(const std::string& mode, int wbits, int abits, std::size_t rank) {
  std::string tag = (mode == "static" ? "sqs" : "sqd");
  tag += "_w" + std::to_string(wbits) + "a" + std::to_string(abits);
  if (rank > 0) tag += "_r" + std::to_string(rank);
  return tag;
}

// --- subcommands -------------------------------------------------------------

struct GenArgs {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> blocks, k, m, tokens, timesteps, cal_traces, eval_traces;
  std::optional<double> outlier_channels, outlier_gain, widening_beta, weight_spread;
};

int cmd_gen(const GenArgs& args) {
  ditq::SynthConfig cfg = load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.blocks) cfg.blocks = *args.blocks;
  if (args.k) cfg.k = *args.k;
  if (args.m) cfg.m = *args.m;
  if (args.tokens) cfg.tokens = *args.tokens;
  if (args.timesteps) cfg.timesteps = *args.timesteps;
  if (args.cal_traces) cfg.cal_traces = *args.cal_traces;
  if (args.eval_traces) cfg.eval_traces = *args.eval_traces;
  if (args.outlier_channels) cfg.outlier_channels = *args.outlier_channels;
  if (args.outlier_gain) cfg.outlier_gain = *args.outlier_gain;
  if (args.widening_beta) cfg.widening_beta = *args.widening_beta;
  if (args.weight_spread) cfg.weight_spread = *args.weight_spread;
  cfg.validate();

  fs::path out(args.out);
  fs::create_directories(out / "model");
  fs::create_directories(out / "traces");
  ManifestWriter manifest("gen", out);
  if (!args.config_path.empty()) manifest.add_input(args.config_path);

  {
    std::ofstream os(out / "config.json");
    if (!os) throw ditq::io_error("cannot write config.json in " + out.string());
    os << json(cfg).dump(2) << "\n";
  }
  manifest.add_output(out / "config.json");

  ditq::SynthModel model = ditq::generate(cfg);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (ditq::LayerKind kind : {ditq::LayerKind::Qkv, ditq::LayerKind::Ffn}) {
      fs::path p = weight_path(out, b, kind);
      ditq::write_matrix(p, model.weight(b, kind));
      manifest.add_output(p);
    }
    ditq::write_tensor(trace_path(out, b, "cal"), make_trace_tensor(cfg, b, 0, cfg.cal_traces));
    manifest.add_output(trace_path(out, b, "cal"));
    ditq::write_tensor(trace_path(out, b, "eval"),
                       make_trace_tensor(cfg, b, cfg.cal_traces, cfg.eval_traces));
    manifest.add_output(trace_path(out, b, "eval"));
  }
  manifest.write(json{{"seed", cfg.seed}, {"config", json(cfg)}});
  std::cout << "gen: wrote " << cfg.blocks << " blocks to " << out.string() << "\n";
  return 0;
}

struct CalibrateArgs {
  std::string run, out, mode = "dynamic";
  double alpha = 0.5;
};

int cmd_calibrate(const CalibrateArgs& args) {
  if (args.mode != "dynamic" && args.mode != "static")
    throw ditq::config_error("--mode must be 'dynamic' or 'static'");
  if (!(args.alpha >= 0.0 && args.alpha <= 1.0))
    throw ditq::config_error("--alpha must be in [0, 1]");
  fs::path run(args.run), out(args.out);
  ditq::SynthConfig cfg = load_run_config(run);
  fs::create_directories(out);
  ManifestWriter manifest("calibrate", out);
  manifest.add_input(run / "config.json");

  ditq::SmoothingMode smode =
      args.mode == "static" ? ditq::SmoothingMode::Static : ditq::SmoothingMode::Dynamic;

  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    fs::path tp = trace_path(run, b, "cal");
    manifest.add_input(tp);
    ditq::TensorFile traces = ditq::read_tensor(tp);
    if (traces.dims.size() != 4 || traces.dims[0] != cfg.cal_traces ||
        traces.dims[1] != cfg.timesteps || traces.dims[2] != cfg.k ||
        traces.dims[3] != cfg.tokens)
      throw ditq::io_error("calibration trace shape mismatch in " + tp.string());

    std::size_t stride = cfg.k * cfg.tokens;
    ditq::ActivationStats stats_qkv(cfg.timesteps, cfg.k), stats_ffn(cfg.timesteps, cfg.k);
    for (std::size_t i = 0; i < cfg.cal_traces; ++i)
      for (std::size_t ts = 0; ts < cfg.timesteps; ++ts) {
        std::vector<float> data(stride);
        std::memcpy(data.data(), traces.payload.data() + (i * cfg.timesteps + ts) * stride * 4,
                    stride * 4);
        ditq::Matrix x(cfg.k, cfg.tokens, std::move(data));
        stats_qkv.record(ts, x);
        stats_ffn.record(ts, x);
      }

    for (ditq::LayerKind kind : {ditq::LayerKind::Qkv, ditq::LayerKind::Ffn}) {
      const ditq::ActivationStats& stats =
          kind == ditq::LayerKind::Qkv ? stats_qkv : stats_ffn;
      fs::path wp = weight_path(run, b, kind);
      manifest.add_input(wp);
      ditq::Matrix w = ditq::read_matrix(wp);
      std::string stem = block_stem(b, kind);
      ditq::write_stats(out / (stem + ".stats"), stats);
      manifest.add_output(out / (stem + ".stats.absmax.ditq"));
      manifest.add_output(out / (stem + ".stats.minmax.ditq"));
      manifest.add_output(out / (stem + ".stats.json"));

      ditq::SmoothingScales scales = ditq::compute_scales(stats, w, args.alpha, smode);
      ditq::write_matrix(out / (stem + ".scales.ditq"), scales.s);
      manifest.add_output(out / (stem + ".scales.ditq"));
      json sj{{"mode", args.mode}, {"alpha", args.alpha}};
      std::ofstream os(out / (stem + ".scales.json"));
      if (!os) throw ditq::io_error("cannot write scales sidecar in " + out.string());
      os << sj.dump(2) << "\n";
      manifest.add_output(out / (stem + ".scales.json"));
    }
  }

  json summary{{"mode", args.mode},
               {"alpha", args.alpha},
               {"blocks", cfg.blocks},
               {"timesteps", cfg.timesteps},
               {"k", cfg.k}};
  {
    std::ofstream os(out / "calib.json");
    if (!os) throw ditq::io_error("cannot write calib.json in " + out.string());
    os << summary.dump(2) << "\n";
  }
  manifest.add_output(out / "calib.json");
  manifest.write(json{{"seed", cfg.seed}});
  std::cout << "calibrate: mode=" << args.mode << " alpha=" << args.alpha << " -> "
            << out.string() << "\n";
  return 0;
}

struct QuantizeArgs {
  std::string run, calib, out;
  int wbits = 8, abits = 8;
  std::size_t rank = 16;
  bool no_lora = false;
};

int cmd_quantize(const QuantizeArgs& args) {
  if (args.wbits != 8 && args.wbits != 4)
    throw ditq::config_error("--wbits must be 8 or 4");
  if (args.abits != 8 && args.abits != 4)
    throw ditq::config_error("--abits must be 8 or 4");
  fs::path run(args.run), calib(args.calib), out(args.out);
  ditq::SynthConfig cfg = load_run_config(run);

  std::ifstream cs(calib / "calib.json");
  if (!cs) throw ditq::io_error("missing calib.json in " + calib.string());
  json csummary = json::parse(cs);
  std::string mode = csummary.at("mode").get<std::string>();
  double alpha = csummary.at("alpha").get<double>();

  std::size_t rank = args.no_lora ? 0 : args.rank;
  std::string tag = quant_tag(mode, args.wbits, args.abits, rank);
  fs::path tag_dir = out / tag;
  fs::create_directories(tag_dir);
  ManifestWriter manifest("quantize", tag_dir);
  manifest.add_input(run / "config.json");
  manifest.add_input(calib / "calib.json");

  ditq::BitWidth wb = args.wbits == 8 ? ditq::BitWidth::W8 : ditq::BitWidth::W4;
  ditq::BitWidth ab = args.abits == 8 ? ditq::BitWidth::W8 : ditq::BitWidth::W4;
  ditq::ExecMode exec = mode == "static" ? ditq::ExecMode::Sqs : ditq::ExecMode::SqdFolded;

  json layers_summary = json::array();
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (ditq::LayerKind kind : {ditq::LayerKind::Qkv, ditq::LayerKind::Ffn}) {
      std::string stem = block_stem(b, kind);
      fs::path wp = weight_path(run, b, kind);
      manifest.add_input(wp);
      ditq::Matrix w = ditq::read_matrix(wp);
      ditq::ActivationStats stats = ditq::read_stats(calib / (stem + ".stats"));
      manifest.add_input(calib / (stem + ".stats.absmax.ditq"));
      manifest.add_input(calib / (stem + ".stats.minmax.ditq"));

      ditq::QuantLinearLayer layer = ditq::build_layer(w, stats, alpha, exec, wb, ab, rank);
      fs::path bundle = tag_dir / stem;
      ditq::save_layer_bundle(bundle, layer);
      for (const char* f : {"manifest.json", "core.ditq", "smoothing.ditq", "scales.ditq"})
        manifest.add_output(bundle / f);
      if (rank > 0) {
        manifest.add_output(bundle / "adapter_a.ditq");
        manifest.add_output(bundle / "adapter_b.ditq");
        manifest.add_output(bundle / "adapter.json");
      }

      auto fp = ditq::memory_footprint(layer);
      layers_summary.push_back(json{{"layer", stem},
                                    {"k", layer.in_channels},
                                    {"m", layer.out_channels},
                                    {"core_payload", fp.core_payload},
                                    {"quant_scales", fp.quant_scales},
                                    {"smoothing", fp.smoothing},
                                    {"adapter", fp.adapter},
                                    {"total", fp.total()},
                                    {"fp32_bytes", layer.in_channels * layer.out_channels * 4}});
    }
  }

  json qsummary{{"tag", tag},
                {"mode", mode},
                {"wbits", args.wbits},
                {"abits", args.abits},
                {"rank", rank},
                {"alpha", alpha},
                {"layers", layers_summary}};
  {
    std::ofstream os(tag_dir / "quantize.json");
    if (!os) throw ditq::io_error("cannot write quantize.json in " + tag_dir.string());
    os << qsummary.dump(2) << "\n";
  }
  manifest.add_output(tag_dir / "quantize.json");
  manifest.write(json{{"seed", cfg.seed}, {"tag", tag}});
  std::cout << "quantize: " << tag << " -> " << tag_dir.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string run, bundles, out;
  std::string grid;
  std::string format = "json";
};

int cmd_eval(const EvalArgs& args) {
  if (args.format != "json" && args.format != "csv")
    throw ditq::config_error("--format must be 'json' or 'csv'");
  fs::path run(args.run), bundles(args.bundles), out(args.out);
  ditq::SynthConfig cfg = load_run_config(run);
  std::vector<ditq::GridCell> grid =
      args.grid.empty() ? ditq::default_grid() : ditq::parse_grid(args.grid);

  fs::create_directories(out);
  ManifestWriter manifest("eval", out);
  manifest.add_input(run / "config.json");

  ditq::SynthModel model;
  model.cfg = cfg;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    model.qkv.push_back(ditq::read_matrix(weight_path(run, b, ditq::LayerKind::Qkv)));
    model.ffn.push_back(ditq::read_matrix(weight_path(run, b, ditq::LayerKind::Ffn)));
  }

  TraceStore store;
  store.cal_traces = cfg.cal_traces;
  store.timesteps = cfg.timesteps;
  store.k = cfg.k;
  store.tokens = cfg.tokens;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    fs::path tp = trace_path(run, b, "eval");
    manifest.add_input(tp);
    ditq::TensorFile t = ditq::read_tensor(tp);
    if (t.dims.size() != 4 || t.dims[0] != cfg.eval_traces || t.dims[1] != cfg.timesteps ||
        t.dims[2] != cfg.k || t.dims[3] != cfg.tokens)
      throw ditq::io_error("eval trace shape mismatch in " + tp.string());
    store.per_block.push_back(std::move(t));
  }
  ditq::TraceProvider provider = [&store](std::size_t b, std::size_t trace, std::size_t t) {
    return store.slice(b, trace, t);
  };

  ditq::RunReport report;
  report.cfg = cfg;
  report.grid = grid;
  for (const auto& cell : grid) {
    ditq::CellLayers built;
    if (cell.mode == "naive") {
      built.resize(cfg.blocks);
      for (std::size_t b = 0; b < cfg.blocks; ++b)
        for (ditq::LayerKind kind : {ditq::LayerKind::Qkv, ditq::LayerKind::Ffn})
          built[b].push_back(
              ditq::build_naive_layer(model.weight(b, kind), cell.wbits, cell.abits, cell.rank));
    } else if (cell.mode != "fp32") {
      std::string tag = quant_tag(cell.mode == "sqs" ? "static" : "dynamic",
                                  cell.wbits == ditq::BitWidth::W8 ? 8 : 4,
                                  cell.abits == ditq::BitWidth::W8 ? 8 : 4, cell.rank);
      fs::path tag_dir = bundles / tag;
      if (!fs::exists(tag_dir))
        throw ditq::io_error("missing bundle set '" + tag + "' under " + bundles.string() +
                             " (run quantize first)");
      ditq::ExecMode exec = cell.mode == "sqs"          ? ditq::ExecMode::Sqs
                            : cell.mode == "sqd-folded" ? ditq::ExecMode::SqdFolded
                                                        : ditq::ExecMode::SqdReference;
      built.resize(cfg.blocks);
      for (std::size_t b = 0; b < cfg.blocks; ++b)
        for (ditq::LayerKind kind : {ditq::LayerKind::Qkv, ditq::LayerKind::Ffn}) {
          const ditq::Matrix& w = model.weight(b, kind);
          ditq::QuantLinearLayer layer =
              ditq::load_layer_bundle(tag_dir / block_stem(b, kind), exec, &w);
          if (layer.in_channels != w.rows() || layer.out_channels != w.cols())
            throw ditq::io_error("bundle shape mismatch for " + block_stem(b, kind));
          built[b].push_back(std::move(layer));
        }
      manifest.add_input(tag_dir / "quantize.json");
    }
    report.cells.push_back(ditq::evaluate_cell(model, built, cell, provider, cfg.cal_traces,
                                               cfg.cal_traces + cfg.eval_traces));
  }

  // Embedded invariants: a baseline cell must be error-free and every grid
  // cell must be present.
  if (report.cells.size() != grid.size())
    throw std::runtime_error("eval: report is missing grid cells");
  for (const auto& c : report.cells)
    if (c.cell.mode == "fp32" &&
        (c.end_to_end.rel_frobenius != 0.0 || c.end_to_end.max_abs != 0.0))
      throw std::runtime_error("eval: baseline cell has nonzero error");

  {
    std::ofstream os(out / "report.json");
    if (!os) throw ditq::io_error("cannot write report.json in " + out.string());
    os << ditq::report_to_json(report).dump(2) << "\n";
  }
  manifest.add_output(out / "report.json");
  {
    std::ofstream os(out / "timing.json");
    if (!os) throw ditq::io_error("cannot write timing.json in " + out.string());
    os << ditq::timing_to_json(report).dump(2) << "\n";
  }
  if (args.format == "csv") {
    std::ofstream os(out / "report.csv");
    if (!os) throw ditq::io_error("cannot write report.csv in " + out.string());
    os << ditq::report_to_csv(report);
    manifest.add_output(out / "report.csv");
  }
  manifest.write(json{{"seed", cfg.seed}});
  std::cout << "eval: " << report.cells.size() << " cells -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-training quantization toolkit for transformer linear layers"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cgen = app.add_subcommand("gen", "generate a synthetic model and activation traces");
  cgen->add_option("--config", gen.config_path, "JSON config file");
  cgen->add_option("--out", gen.out, "output run directory")->required();
  cgen->add_option("--seed", gen.seed, "override config seed");
  cgen->add_option("--blocks", gen.blocks, "override block count");
  cgen->add_option("--k", gen.k, "override input channels");
  cgen->add_option("--m", gen.m, "override base output width");
  cgen->add_option("--tokens", gen.tokens, "override tokens per channel");
  cgen->add_option("--timesteps", gen.timesteps, "override denoising steps");
  cgen->add_option("--cal-traces", gen.cal_traces, "override calibration trace count");
  cgen->add_option("--eval-traces", gen.eval_traces, "override evaluation trace count");
  cgen->add_option("--outlier-channels", gen.outlier_channels, "override outlier fraction");
  cgen->add_option("--outlier-gain", gen.outlier_gain, "override outlier gain");
  cgen->add_option("--widening-beta", gen.widening_beta, "override range widening");
  cgen->add_option("--weight-spread", gen.weight_spread, "override weight row spread");

  CalibrateArgs cal;
  auto* ccal = app.add_subcommand("calibrate", "collect activation statistics and scales");
  ccal->add_option("--run", cal.run, "run directory from gen")->required();
  ccal->add_option("--out", cal.out, "output calibration directory")->required();
  ccal->add_option("--alpha", cal.alpha, "smoothing exponent in [0, 1]");
  ccal->add_option("--mode", cal.mode, "dynamic|static");

  QuantizeArgs qz;
  auto* cqz = app.add_subcommand("quantize", "build quantized layer bundles");
  cqz->add_option("--run", qz.run, "run directory from gen")->required();
  cqz->add_option("--calib", qz.calib, "calibration directory")->required();
  cqz->add_option("--out", qz.out, "output bundle directory")->required();
  cqz->add_option("--wbits", qz.wbits, "weight bits: 8 or 4");
  cqz->add_option("--abits", qz.abits, "activation bits: 8 or 4");
  cqz->add_option("--rank", qz.rank, "low-rank compensation rank");
  cqz->add_flag("--no-lora", qz.no_lora, "skip the low-rank branch");

  EvalArgs ev;
  auto* cev = app.add_subcommand("eval", "evaluate bundles against the fp32 oracle");
  cev->add_option("--run", ev.run, "run directory from gen")->required();
  cev->add_option("--bundles", ev.bundles, "bundle directory from quantize")->required();
  cev->add_option("--out", ev.out, "output report directory")->required();
  cev->add_option("--grid", ev.grid, "comma-separated cells, e.g. fp32,sqd:w8a8:r16");
  cev->add_option("--format", ev.format, "json|csv (csv adds report.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (ccal->parsed()) return cmd_calibrate(cal);
    if (cqz->parsed()) return cmd_quantize(qz);
    if (cev->parsed()) return cmd_eval(ev);
    return 2;
  } catch (const ditq::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ditq::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
