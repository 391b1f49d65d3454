// vgai command-line driver: train, rollout, sweep, plot, inspect.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vgai/eval.hpp"
#include "vgai/io.hpp"
#include "vgai/plot.hpp"
#include "vgai/training.hpp"

namespace fs = std::filesystem;
using namespace vgai;

namespace {

struct UsageError : ConfigError {
  using ConfigError::ConfigError;
};

fs::path out_root() {
  fs::path dir = ".";
  io::ExperimentConfig unused;
  io::apply_env_overrides(unused, &dir);
  return dir;
}

fs::path resolve_out(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : out_root() / path;
}

io::ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  auto cfg = io::load_config(path);
  io::apply_env_overrides(cfg, nullptr);
  if (seed) {
    cfg.seed = *seed;
    cfg.training.seed = *seed;
  }
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("bad sweep value '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--values must list at least one value");
  return out;
}

std::optional<Degradation> degradation_from(double sigma, int blur) {
  if (sigma > 0.0 && blur > 0) throw UsageError("--noise and --blur are mutually exclusive");
  if (sigma > 0.0) return GaussianNoise{sigma};
  if (blur > 0) return Blur{blur};
  return std::nullopt;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "train";
  bool dataset = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = load(a.config, a.seed);
  const std::string hash = io::config_hash(cfg);
  const fs::path dir = resolve_out(a.out);
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  const auto result = train(cfg.env, cfg.model, cfg.training, [&](const EpochLog& e) {
    log << io::log_line(e) << "\n" << std::flush;
    if (!a.quiet && (e.epoch % 10 == 0 || e.epoch + 1 == cfg.training.epochs)) {
      std::cerr << "phase " << e.phase << " epoch " << e.epoch << " loss " << e.loss << " grad " << e.grad_norm << "\n";
    }
  });
  io::write_checkpoint(dir / "checkpoint.json", result.params, hash);
  if (a.dataset) io::write_atomic(dir / "dataset.txt", io::serialize_dataset(result.dataset, hash));
  for (auto s : result.excluded_seeds) std::cerr << "warning: excluded initialization seed " << s << "\n";
  std::cout << "checkpoint " << (dir / "checkpoint.json").string() << " config_hash " << hash << " final_loss "
            << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
  return 0;
}

// --- rollout ---------------------------------------------------------------

struct RolloutArgs {
  std::string config;
  std::string controller = "expert";
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::string out = "trajectory.txt";
  bool binary = false;
  double noise = 0.0;
  int blur = 0;
};

int cmd_rollout(const RolloutArgs& a) {
  const auto cfg = load(a.config, a.seed);
  const std::string hash = io::config_hash(cfg);
  std::optional<io::Checkpoint> ckpt;
  ControllerFactory factory;
  bool mismatch = false;
  const auto degradation = degradation_from(a.noise, a.blur);
  if (a.controller == "expert") {
    factory = expert_factory(cfg.env);
  } else if (a.controller == "position-based") {
    factory = position_based_factory(cfg.env);
  } else if (a.controller == "zero") {
    factory = [](std::uint64_t) { return std::make_unique<ZeroController>(); };
  } else if (a.controller == "learned") {
    if (a.checkpoint.empty()) throw UsageError("--controller learned requires --checkpoint");
    if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint not found: " + a.checkpoint);
    ckpt = io::read_checkpoint(a.checkpoint);
    mismatch = ckpt->config_hash != hash;
    if (mismatch) std::cerr << "warning: checkpoint config hash " << ckpt->config_hash << " differs from " << hash << "\n";
    factory = learned_factory(cfg.env, ckpt->params, degradation);
  } else {
    throw UsageError("unknown controller '" + a.controller + "' (expected expert|position-based|zero|learned)");
  }
  if (degradation && a.controller != "learned") throw UsageError("--noise/--blur apply only to learned controllers");

  Trajectory traj;
  CostReport report = evaluate(cfg.env, factory, cfg.seed, hash, &traj);
  io::TrajectoryHeader header;
  header.config_hash = hash;
  header.controller = traj.controller;
  header.seed = cfg.seed;
  header.agents = cfg.env.sim.agents;
  header.sample_time = cfg.env.sim.sample_time;
  header.hash_mismatch = mismatch;
  header.raw_cost = report.raw_cost;
  header.normalized_cost = report.normalized_cost;
  const fs::path out = resolve_out(a.out);
  io::write_trajectory(out, io::to_file(traj, header), a.binary);
  fs::path report_path = out;
  report_path += ".report.json";
  io::write_atomic(report_path, io::to_json(report).dump(1) + "\n");
  std::cout << "trajectory " << out.string() << " controller " << report.controller << " raw_cost " << report.raw_cost
            << " normalized_cost " << report.normalized_cost << " success " << (report.success ? "true" : "false")
            << "\n";
  return 0;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::string axis = "K";
  std::string values;
  std::string checkpoint;
  std::string checkpoint_dir;
  bool train_cells = false;
  bool no_learned = false;
  bool no_position_based = false;
  std::optional<std::uint64_t> seed;
  std::string out = "sweep";
};

int cmd_sweep(const SweepArgs& a) {
  const auto cfg = load(a.config, a.seed);
  const std::string hash = io::config_hash(cfg);
  SweepSpec sweep;
  sweep.axis = sweep_axis_from_string(a.axis);
  sweep.values = parse_values(a.values);
  sweep.seeds = cfg.eval_seeds;
  sweep.threads = cfg.eval_threads;
  sweep.include_learned = !a.no_learned;
  sweep.include_position_based = !a.no_position_based;
  const int sources = (!a.checkpoint.empty()) + (!a.checkpoint_dir.empty()) + a.train_cells;
  if (sweep.include_learned && sources != 1) {
    throw UsageError("learned sweeps need exactly one of --checkpoint, --checkpoint-dir, --train");
  }
  if (sweep.include_learned && !a.checkpoint.empty() &&
      (sweep.axis == SweepAxis::taps || sweep.axis == SweepAxis::features)) {
    throw UsageError("--axis " + a.axis + " changes the model shape; use --checkpoint-dir or --train");
  }

  const fs::path prefix = resolve_out(a.out);
  std::map<double, ModelParams> cache;
  CheckpointProvider provider = [&](const SweepCell& cell) -> const ModelParams* {
    if (auto it = cache.find(cell.value); it != cache.end()) return &it->second;
    const std::string name = a.axis + "_" + fmt(cell.value);
    if (!a.checkpoint.empty()) {
      if (!fs::exists(a.checkpoint)) throw MissingCheckpoint("missing checkpoint for cell " + name + ": " + a.checkpoint);
      return &cache.emplace(cell.value, io::read_checkpoint(a.checkpoint).params).first->second;
    }
    if (!a.checkpoint_dir.empty()) {
      const fs::path p = fs::path(a.checkpoint_dir) / (name + ".json");
      if (!fs::exists(p)) throw MissingCheckpoint("missing checkpoint for cell " + name + ": " + p.string());
      return &cache.emplace(cell.value, io::read_checkpoint(p).params).first->second;
    }
    std::cerr << "training cell " << name << "\n";
    auto result = train(cell.env, cell.spec, cfg.training);
    fs::path p = prefix;
    p += "." + name + ".checkpoint.json";
    io::write_checkpoint(p, result.params, hash);
    return &cache.emplace(cell.value, std::move(result.params)).first->second;
  };

  const auto rows = run_sweep(sweep, cfg.env, cfg.model, provider, hash);
  fs::path tsv = prefix, jsonl = prefix;
  tsv += ".tsv";
  jsonl += ".jsonl";
  io::write_atomic(tsv, io::sweep_tsv(rows, hash));
  io::write_atomic(jsonl, io::sweep_jsonl(rows, hash));
  for (const auto& r : rows) {
    std::cout << r.axis << "=" << fmt(r.value) << " " << r.controller << " median " << r.normalized.median << " iqr ["
              << r.normalized.q1 << ", " << r.normalized.q3 << "] success " << (r.success ? "true" : "false") << "\n";
  }
  return 0;
}

// --- plot ------------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> trajectories;
  std::string table;
  std::vector<std::string> titles;
  std::string out = "plot.svg";
  std::size_t snapshots = 3;
};

int cmd_plot(const PlotArgs& a) {
  if (a.trajectories.empty() == a.table.empty()) throw UsageError("give either --trajectory files or one --table");
  std::string svg;
  if (!a.table.empty()) {
    const std::string text = io::read_text(a.table);
    const auto rows = io::parse_sweep_tsv(text);
    const auto hpos = text.find("config_hash=");
    const std::string hash = hpos == std::string::npos ? "" : text.substr(hpos + 12, text.find('\n', hpos) - hpos - 12);
    svg = plot::cost_curve_svg(rows, hash);
  } else {
    std::vector<io::TrajectoryFile> files;
    for (const auto& p : a.trajectories) files.push_back(io::read_trajectory(p));
    plot::TrajectoryPlotOptions opt;
    opt.snapshots = a.snapshots;
    svg = plot::trajectory_svg(files, a.titles, opt);
  }
  const fs::path out = resolve_out(a.out);
  io::write_atomic(out, svg);
  std::cout << "plot " << out.string() << "\n";
  return 0;
}

// --- inspect ---------------------------------------------------------------

int cmd_inspect(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("file not found: " + path);
  const std::string text = io::read_text(path);
  if (text.rfind("# vgai-trajectory", 0) == 0 || text.rfind("VGAITRJB", 0) == 0) {
    const auto f = io::parse_trajectory(text);
    const auto& h = f.header;
    std::cout << "kind trajectory\nformat_version " << h.format_version << "\nconfig_hash " << h.config_hash
              << "\ncontroller " << h.controller << "\nseed " << h.seed << "\nagents " << h.agents << "\nsteps "
              << h.steps << "\nrows " << f.rows.size() << "\nhash_mismatch " << h.hash_mismatch << "\nraw_cost "
              << h.raw_cost << "\nnormalized_cost " << h.normalized_cost << "\n";
    return 0;
  }
  if (text.rfind("# vgai-dataset", 0) == 0) {
    const auto s = io::summarize_dataset(text);
    std::cout << "kind dataset\nconfig_hash " << s.config_hash << "\ntrajectories " << s.trajectories << "\nsteps "
              << s.steps << "\nexpert_steps " << s.expert_steps << "\n";
    for (const auto& [phase, n] : s.per_phase) std::cout << "phase " << phase << " trajectories " << n << "\n";
    return 0;
  }
  if (text.rfind("# vgai-sweep", 0) == 0) {
    const auto rows = io::parse_sweep_tsv(text);
    std::cout << "kind sweep\n" << text.substr(2, text.find('\n') - 2) << "\nrows " << rows.size() << "\n";
    return 0;
  }
  io::json j;
  try {
    j = io::json::parse(text);
  } catch (const io::json::parse_error&) {
    throw FormatError("unrecognized file: " + path);
  }
  const std::string format = j.is_object() ? j.value("format", "") : "";
  if (format == "vgai-checkpoint") {
    const auto c = io::parse_checkpoint(text);
    const auto& s = c.params.spec;
    std::cout << "kind checkpoint\nformat_version " << j["format_version"] << "\nconfig_hash " << c.config_hash
              << "\ncontroller " << to_string(s.controller) << "\nperception " << to_string(s.perception) << "\nK "
              << s.taps << "\nfeatures " << s.feature_dim() << "\nparameters " << c.params.parameter_count() << "\n";
    ModelParams::visit(c.params, [](const std::string& name, const Matrix& m) {
      std::cout << "tensor " << name << " " << m.rows() << "x" << m.cols() << "\n";
    });
    return 0;
  }
  if (format == "vgai-report") {
    const auto r = io::report_from_json(j);
    std::cout << "kind report\ncontroller " << r.controller << "\nseed " << r.seed << "\nconfig_hash " << r.config_hash
              << "\nraw_cost " << r.raw_cost << "\nnormalized_cost " << r.normalized_cost << "\nsuccess "
              << (r.success ? "true" : "false") << "\n";
    return 0;
  }
  const auto cfg = io::config_from_json(j);
  std::cout << "kind config\nconfig_hash " << io::config_hash(cfg) << "\n" << io::to_json(cfg).dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vgai: decentralized flocking controllers trained by imitation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "collect DAGGer data and fit a controller");
  train_cmd->add_option("--config", ta.config, "experiment config (JSON)")->required();
  train_cmd->add_option("--seed", ta.seed, "training seed");
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_flag("--dataset", ta.dataset, "also write the aggregated dataset");
  train_cmd->add_flag("--quiet", ta.quiet, "no per-epoch progress on stderr");

  RolloutArgs ra;
  auto* rollout_cmd = app.add_subcommand("rollout", "simulate one controller and write its trajectory");
  rollout_cmd->add_option("--config", ra.config, "experiment config (JSON)")->required();
  rollout_cmd->add_option("--controller", ra.controller, "expert|position-based|zero|learned");
  rollout_cmd->add_option("--checkpoint", ra.checkpoint, "checkpoint for --controller learned");
  rollout_cmd->add_option("--seed", ra.seed, "initialization seed");
  rollout_cmd->add_option("--out", ra.out, "trajectory file");
  rollout_cmd->add_flag("--binary", ra.binary, "compact binary trajectory");
  rollout_cmd->add_option("--noise", ra.noise, "Gaussian observation noise sigma (synthetic perception)");
  rollout_cmd->add_option("--blur", ra.blur, "observation blur width in bins (synthetic perception)");

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate controllers along one configuration axis");
  sweep_cmd->add_option("--config", sa.config, "experiment config (JSON)")->required();
  sweep_cmd->add_option("--axis", sa.axis, "K|F|v_init|R|K_NN|N");
  sweep_cmd->add_option("--values", sa.values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--checkpoint", sa.checkpoint, "one checkpoint shared by every cell");
  sweep_cmd->add_option("--checkpoint-dir", sa.checkpoint_dir, "directory of <axis>_<value>.json checkpoints");
  sweep_cmd->add_flag("--train", sa.train_cells, "train a controller per cell");
  sweep_cmd->add_flag("--no-learned", sa.no_learned, "skip learned controllers");
  sweep_cmd->add_flag("--no-position-based", sa.no_position_based, "skip the position-based baseline");
  sweep_cmd->add_option("--seed", sa.seed, "training seed for --train");
  sweep_cmd->add_option("--out", sa.out, "output prefix (.tsv and .jsonl)");

  PlotArgs pa;
  auto* plot_cmd = app.add_subcommand("plot", "render trajectories or a sweep table as SVG");
  plot_cmd->add_option("--trajectory", pa.trajectories, "trajectory files, one panel each");
  plot_cmd->add_option("--table", pa.table, "sweep table (.tsv)");
  plot_cmd->add_option("--title", pa.titles, "panel titles");
  plot_cmd->add_option("--snapshots", pa.snapshots, "snapshot times per panel");
  plot_cmd->add_option("--out", pa.out, "SVG file");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "print metadata of a vgai file");
  inspect_cmd->add_option("path", inspect_path, "checkpoint, dataset, trajectory, report, table or config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*rollout_cmd) return cmd_rollout(ra);
    if (*sweep_cmd) return cmd_sweep(sa);
    if (*plot_cmd) return cmd_plot(pa);
    if (*inspect_cmd) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
