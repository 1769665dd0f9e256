// Copyright 2026 The SPI-GAN Authors.
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

// Command-line front end: train, sample, eval, path-compare, gradcheck, info.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
// error, 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spigan/spigan.hpp"

namespace fs = std::filesystem;

namespace spigan::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string joined_argv(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

// Everything needed to reproduce a run.
void write_manifest(const std::string& path, const std::string& command, const std::string& argv, std::uint64_t seed,
                    const std::string& body) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << "version = " << kVersion << "\n"
      << "command = " << command << "\n"
      << "argv = " << argv << "\n"
      << "seed = " << seed << "\n"
      << body;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// The explicit --manifest path, else `fallback`.
std::string manifest_path(const std::string& requested, const std::string& fallback) {
  return requested.empty() ? fallback : requested;
}

std::string manifest_next_to(const std::string& out_path) { return out_path.empty() ? "" : out_path + ".manifest"; }

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("u-grid", 0, "bad number '" + cell + "'");
    }
  }
  return out;
}

// "frames.csv" -> "frames_003.csv" for frame 3 of a multi-frame result.
std::string frame_path(const std::string& path, std::size_t index, std::size_t count) {
  if (count == 1) return path;
  const fs::path p(path);
  std::ostringstream name;
  name << p.stem().string() << '_' << std::setw(3) << std::setfill('0') << index << p.extension().string();
  return (p.parent_path() / name.str()).string();
}

std::string checkpoint_name(std::int64_t iter) {
  std::ostringstream os;
  os << "ckpt_" << std::setw(7) << std::setfill('0') << iter << ".ckpt";
  return os.str();
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> overrides;
  std::int64_t max_iter = -1;
  bool quiet = false;
};

int run_train(const TrainArgs& a, const std::string& manifest, const std::string& argv) {
  ModelState resumed;
  TrainConfig cfg;
  if (!a.resume.empty()) {
    if (!a.config.empty() || !a.overrides.empty()) {
      throw ConfigError("resume", 0, "a resumed run takes its configuration from the checkpoint");
    }
    resumed = load_checkpoint(a.resume);
    cfg = resumed.config;
  } else {
    std::string text;
    if (!a.config.empty()) {
      std::ifstream in(a.config);
      if (!in) throw IoError("cannot open config file '" + a.config + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    for (const auto& kv : a.overrides) text += "\n" + kv;
    cfg = parse_config_text(text);
  }
  if (a.max_iter >= 0) cfg.max_iter = a.max_iter;
  cfg.validate();

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  write_manifest(manifest_path(manifest, (dir / "manifest.txt").string()), "train", argv, cfg.seed,
                 (a.resume.empty() ? std::string() : "resume = " + a.resume + "\n") + "[config]\n" +
                     to_config_text(cfg));

  const Dataset data = load_training_data(cfg);
  std::optional<Trainer> trainer;
  if (a.resume.empty()) {
    trainer.emplace(cfg, data);
  } else {
    resumed.config.max_iter = cfg.max_iter;
    trainer.emplace(std::move(resumed), data);
  }

  const fs::path log_path = dir / "metrics.tsv";
  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write '" + log_path.string() + "'");
  log.seekp(0, std::ios::end);
  if (log.tellp() == 0) log << "iter\td_loss\tg_loss\tr1\tpath_pen\tema_gap\n";
  while (trainer->state().iter < cfg.max_iter) {
    trainer->step();
    const std::int64_t it = trainer->state().iter;
    if (it % cfg.log_every == 0 || it == cfg.max_iter) {
      const std::string line = trainer->metrics_line();
      log << line << '\n' << std::flush;
      if (!a.quiet) std::cout << line << '\n' << std::flush;
    }
    if (it % cfg.ckpt_every == 0) save_checkpoint(trainer->snapshot(), (dir / checkpoint_name(it)).string());
  }
  save_checkpoint(trainer->snapshot(), (dir / "final.ckpt").string());
  if (!a.quiet) std::cout << "wrote " << (dir / "final.ckpt").string() << '\n';
  return kExitOk;
}

// ---- sample ----

struct SampleArgs {
  std::string ckpt;
  std::string out;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string mode = "standard";
  std::string u_grid = "0,0.25,0.5,0.75,1";
  std::size_t steps = 5;
  bool live = false;
  bool deterministic = false;
};

int run_sample(const SampleArgs& a, const std::string& manifest, const std::string& argv) {
  ModelState state = load_checkpoint(a.ckpt);
  SampleRequest req;
  req.n = a.n;
  req.seed = a.seed;
  req.mode = parse_sample_mode(a.mode);
  if (req.mode == SampleMode::kVaryU) req.u_grid = parse_grid(a.u_grid);
  req.steps = a.steps;
  req.use_ema = !a.live;
  req.stochastic = !a.deterministic;
  req.validate();

  std::ostringstream body;
  body << "ckpt = " << a.ckpt << "\nn = " << a.n << "\nmode = " << a.mode << "\n[config]\n" << to_config_text(state.config);
  write_manifest(manifest_path(manifest, manifest_next_to(a.out)), "sample", argv, a.seed, body.str());

  const SampleResult res = sample(req, state, state.config.schedule);
  const bool images = state.rows > 0 && state.cols > 0;
  for (std::size_t f = 0; f < res.frames.size(); ++f) {
    const std::string path = frame_path(a.out, f, res.frames.size());
    if (images) {
      write_pgm_grid(path, res.frames[f], state.rows, state.cols);
    } else {
      write_points_csv(path, state.norm.denormalize(res.frames[f]));
    }
  }
  std::cout << "frames " << res.frames.size() << " generator_calls " << res.generator_calls << " field_evaluations "
            << res.field_evaluations << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt;
  std::string reference;
  std::string out;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  int k = kDefaultNeighbors;
};

int run_eval(const EvalArgs& a, const std::string& manifest, const std::string& argv) {
  ModelState state = load_checkpoint(a.ckpt);
  if (a.n < 2) throw ConfigError("n", 0, "must be >= 2");

  // Reference set in data coordinates: a CSV file, or a fresh draw from the
  // training distribution that the model never saw.
  Tensor<float> reference;
  std::string reference_name;
  if (!a.reference.empty()) {
    reference = read_points_csv(a.reference);
    reference_name = a.reference;
  } else if (state.rows == 0) {
    reference = generate_toy(state.config.dataset, a.n, mix_seed(a.seed, 0x68656c64ULL));
    reference_name = state.config.dataset + " (held out)";
  } else {
    const Dataset data = load_training_data(state.config);
    std::vector<std::size_t> idx(std::min(a.n, data.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    reference = gather_rows(data.points, idx);
    reference_name = state.config.dataset;
  }
  if (reference.dim(1) != state.data_dim) {
    throw ShapeError("eval: reference has " + std::to_string(reference.dim(1)) + " columns, model has " +
                     std::to_string(state.data_dim));
  }

  SampleRequest req;
  req.n = reference.dim(0);
  req.seed = a.seed;
  const Tensor<float> fake = state.rows == 0 ? state.norm.denormalize(sample(req, state, state.config.schedule).frames[0])
                                             : sample(req, state, state.config.schedule).frames[0];

  std::ostringstream body;
  body << "ckpt = " << a.ckpt << "\nreference = " << reference_name << "\nn = " << req.n << "\nk = " << a.k
       << "\n[config]\n" << to_config_text(state.config);
  write_manifest(manifest_path(manifest, manifest_next_to(a.out)), "eval", argv, a.seed, body.str());

  const std::map<std::string, std::string> common = {{"n", std::to_string(req.n)}, {"seed", std::to_string(a.seed)}};
  std::vector<MetricReport> reports;
  if (req.n <= kMaxAssignmentSize) {
    reports.push_back({"wasserstein2", wasserstein2(fake, reference), common});
  } else {
    std::cerr << "wasserstein2 skipped: n > " << kMaxAssignmentSize << '\n';
  }
  auto with_k = common;
  with_k["k"] = std::to_string(a.k);
  reports.push_back({"recall", knn_recall(reference, fake, a.k), with_k});
  reports.push_back({"coverage", knn_coverage(reference, fake, a.k), with_k});
  if (const std::size_t modes = state.rows == 0 ? ring_modes(state.config.dataset) : 0; modes > 0) {
    const ModeHistogram h = mode_coverage(fake, ring_centers(modes), kToyStd);
    auto p = common;
    p["sigma"] = std::to_string(kToyStd);
    reports.push_back({"modes_covered", static_cast<double>(h.modes_covered()), p});
    reports.push_back({"unassigned_fraction", static_cast<double>(h.unassigned) / static_cast<double>(h.total()), p});
    const double assigned = static_cast<double>(std::max<std::size_t>(h.assigned(), 1));
    double smallest = 1.0;
    for (const auto c : h.counts) smallest = std::min(smallest, static_cast<double>(c) / assigned);
    reports.push_back({"min_mode_fraction", smallest, p});
  }

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw IoError("cannot write '" + a.out + "'");
  }
  for (const auto& r : reports) {
    std::cout << r.to_line() << '\n';
    if (file) file << r.to_line() << '\n';
  }
  return kExitOk;
}

// ---- path-compare ----

struct PathArgs {
  std::string dataset = "gaussians8";
  std::string out;
  std::size_t grid = 21;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
};

int run_path_compare(const PathArgs& a, const std::string& manifest, const std::string& argv) {
  if (a.grid < 2) throw ConfigError("grid", 0, "needs at least 2 points");
  const Dataset data = load_dataset(a.dataset, a.n, mix_seed(a.seed, 0));
  const VpSchedule sched;
  Rng rng(mix_seed(a.seed, 1));
  const auto rows = path_balance(data.points, sched, uniform_grid(a.grid), rng);

  std::ostringstream body;
  body << "dataset = " << a.dataset << "\ngrid = " << a.grid << "\nn = " << a.n << "\n";
  write_manifest(manifest_path(manifest, manifest_next_to(a.out)), "path-compare", argv, a.seed, body.str());

  std::ostringstream csv;
  csv << "u,spi_dist,sde_dist\n" << std::setprecision(10);
  for (const auto& r : rows) csv << r.u << ',' << r.spi_dist << ',' << r.sde_dist << '\n';
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write '" + a.out + "'");
    out << csv.str();
    if (!out) throw IoError("write failed for '" + a.out + "'");
  }
  std::vector<double> us, spi;
  for (const auto& r : rows) {
    us.push_back(r.u);
    spi.push_back(r.spi_dist);
  }
  std::cerr << "spi linear-fit R^2 " << linear_fit_r2(us, spi) << ", sde max chord deviation "
            << max_chord_deviation(rows, false) << '\n';
  return kExitOk;
}

// ---- gradcheck ----

int run_gradcheck(std::uint64_t seed, const std::string& manifest, const std::string& argv) {
  write_manifest(manifest, "gradcheck", argv, seed, "");
  const auto reports = run_gradcheck_suite(seed);
  for (const auto& r : reports) {
    std::cout << std::left << std::setw(28) << r.name << " max_rel_err " << std::scientific << std::setprecision(3)
              << r.max_rel_error << std::defaultfloat << " checked " << r.checked << " skipped " << r.skipped << '\n';
  }
  const double worst = max_relative_error(reports);
  std::cout << "max relative error " << std::scientific << worst << std::defaultfloat << '\n';
  if (!(worst < 1e-3)) {
    std::cerr << "gradcheck failed: max relative error >= 1e-3\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// ---- info ----

int run_info(const std::string& path, const std::string& manifest, const std::string& argv) {
  ModelState s = load_checkpoint(path);
  write_manifest(manifest, "info", argv, s.config.seed, "ckpt = " + path + "\n");
  const ModelDims& m = s.config.model;
  std::cout << "checkpoint " << path << "\n"
            << "format_version " << kCheckpointVersion << "\n"
            << "iter " << s.iter << "\n"
            << "d_updates " << s.d_updates << "\n"
            << "g_updates " << s.g_updates << "\n"
            << "data_dim " << s.data_dim << "\n";
  if (s.rows > 0) std::cout << "image " << s.rows << "x" << s.cols << "\n";
  std::cout << "hidden_dim " << m.hidden_dim << "\n"
            << "mapping " << mapping_name(s.config.mapping_kind) << " depth " << m.mapping_depth << " solver "
            << solver_name(m.solver.kind) << "/" << m.solver.steps << "\n"
            << "generator width " << m.gen_width << " blocks " << m.gen_blocks << "\n"
            << "discriminator width " << m.disc_width << " layers " << m.disc_layers << " time_dim " << m.time_dim
            << "\n"
            << "path_len_mean " << s.path_len_mean << "\n"
            << "data_position epoch " << s.data_epoch << " cursor " << s.data_cursor << "\n";
  std::size_t total = 0;
  for (const auto& p : s.generator_side()) total += p.second->numel();
  std::cout << "generator_side_parameters " << total << "\n";
  total = 0;
  for (const auto& p : s.discriminator.named_parameters()) total += p.second->numel();
  std::cout << "discriminator_parameters " << total << "\n"
            << "[config]\n"
            << to_config_text(s.config);
  return kExitOk;
}

int main_impl(int argc, char** argv) {
  CLI::App app{"SPI-GAN desk-scale trainer and sampler"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string manifest;
  app.add_option("--manifest", manifest, "Manifest path (defaults depend on the command)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", ta.config, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
  train->add_option("--set", ta.overrides, "Extra 'key=value' config lines, applied after --config");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--resume", ta.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--max-iter", ta.max_iter, "Override max_iter");
  train->add_flag("--quiet", ta.quiet, "Do not echo metrics");

  SampleArgs sa;
  auto* samp = app.add_subcommand("sample", "Draw samples from a checkpoint");
  samp->add_option("--ckpt", sa.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  samp->add_option("--out", sa.out, "Output CSV (points) or PGM (images)")->required();
  samp->add_option("--n", sa.n, "Samples per frame");
  samp->add_option("--seed", sa.seed, "Sampling seed");
  samp->add_option("--mode", sa.mode, "standard, vary_u, z_interp or h_interp");
  samp->add_option("--u-grid", sa.u_grid, "Comma-separated u values for vary_u");
  samp->add_option("--steps", sa.steps, "Frames for interpolation modes");
  samp->add_flag("--live", sa.live, "Use live weights instead of the EMA shadow");
  samp->add_flag("--deterministic", sa.deterministic, "Disable generator noise");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint against a reference set");
  eval->add_option("--ckpt", ea.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--reference", ea.reference, "Reference CSV; defaults to a held-out draw")
      ->check(CLI::ExistingFile);
  eval->add_option("--out", ea.out, "Report file (tab-separated)");
  eval->add_option("--n", ea.n, "Reference size when drawn");
  eval->add_option("--seed", ea.seed, "Sampling seed");
  eval->add_option("--k", ea.k, "Neighbors for recall and coverage");

  PathArgs pa;
  auto* path = app.add_subcommand("path-compare", "Distance-to-clean along the straight path and the VP-SDE");
  path->add_option("--dataset", pa.dataset, "Dataset");
  path->add_option("--grid", pa.grid, "Number of u points in [0,1]");
  path->add_option("--n", pa.n, "Number of clean points");
  path->add_option("--seed", pa.seed, "Seed");
  path->add_option("--out", pa.out, "Output CSV (stdout when omitted)");

  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and network");
  gc->add_option("--seed", gc_seed, "Seed");

  std::string info_ckpt;
  auto* info = app.add_subcommand("info", "Print a checkpoint header");
  info->add_option("--ckpt", info_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string args = joined_argv(argc, argv);
  if (*train) return run_train(ta, manifest, args);
  if (*samp) return run_sample(sa, manifest, args);
  if (*eval) return run_eval(ea, manifest, args);
  if (*path) return run_path_compare(pa, manifest, args);
  if (*gc) return run_gradcheck(gc_seed, manifest, args);
  return run_info(info_ckpt, manifest, args);
}

}  // namespace
}  // namespace spigan::cli

int main(int argc, char** argv) {
  using namespace spigan;
  try {
    return cli::main_impl(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return cli::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitData;
  }
}
