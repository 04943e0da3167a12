// Command-line front end: physics report, synthetic dataset generation,
// splitting, training, inference and evaluation.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "vialcv/config.hpp"
#include "vialcv/dataset.hpp"
#include "vialcv/flowsim.hpp"
#include "vialcv/imaging.hpp"
#include "vialcv/pipeline.hpp"
#include "vialcv/rheology.hpp"

namespace {

using namespace vialcv;

std::string hex_hash(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016zx", std::hash<std::string>{}(s));
  return buf;
}

RunConfig load_cfg(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!path.empty()) cfg = load_run_config(path);
  for (const auto& s : sets) apply_line(cfg, s);
  return cfg;
}

int cmd_physics(double eta, double rho, double gamma, double radius,
                double fill_volume, double t_flip, std::optional<double> u_measured,
                std::optional<double> tau, std::optional<double> sigma_crit,
                double t_flow, double sigma_flow) {
  Fluid fluid(eta, rho, gamma);
  // interior volume is irrelevant to the report; keep the standard 8 mL vial
  const auto geom = VialGeometry::from_volumes(radius, 8e-6, fill_volume);
  TestProtocol protocol;
  protocol.t_flip = t_flip;
  const auto rep = dimensionless_report(fluid, geom, protocol);
  std::printf("sigma_taylor_Pa    %.6g\n", rep.sigma_taylor);
  std::printf("u_vg_m_per_s       %.6g\n", rep.u_vg);
  std::printf("re_vg              %.3g\n", rep.re_vg);
  std::printf("re_flip            %.3g\n", rep.re_flip);
  std::printf("bond_number        %.3g\n", rep.bo);
  std::printf("initial_regime     %s\n", to_string(rep.initial_regime));
  if (u_measured)
    std::printf("re_exp             %.3g\n",
                reynolds_exp(fluid, geom, rep.initial_regime, *u_measured));
  if (tau) std::printf("deborah            %.3g\n", deborah(*tau, t_flow));
  if (sigma_crit)
    std::printf("stress_amplitude   %.3g\n", stress_amplitude(sigma_flow, *sigma_crit));
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir,
                 const std::vector<double>& viscosities, int n_per_group,
                 std::uint64_t seed) {
  if (n_per_group < 1) throw std::invalid_argument("simulate: n-per-group must be >= 1");
  if (viscosities.empty()) throw std::invalid_argument("simulate: no viscosities given");
  std::filesystem::create_directories(out_dir);

  const auto geom = cfg.geometry();
  const auto protocol = cfg.protocol();
  const auto sim_cfg = cfg.sim_config();
  const auto render_cfg = cfg.render_config();
  const std::string proto_hash = hex_hash(config_echo(cfg));

  Manifest manifest;
  manifest.protocol_params["seed"] = std::to_string(seed);
  manifest.protocol_params["n_frames"] =
      std::to_string(protocol.frame_schedule.size());
  manifest.protocol_params["config_hash"] = proto_hash;

  for (size_t g = 0; g < viscosities.size(); ++g) {
    Fluid fluid(viscosities[g], cfg.density, cfg.surface_tension);
    const auto traj = simulate(fluid, geom, protocol, sim_cfg);
    char gid[16];
    std::snprintf(gid, sizeof gid, "g%02zu", g);
    for (int s = 0; s < n_per_group; ++s) {
      const std::uint64_t noise_seed =
          seed + 0x9e3779b97f4a7c15ull * (std::uint64_t(g) * 1000 + s + 1);
      const auto frames = render_video(traj, render_cfg, noise_seed);
      TensorData video;
      video.t = std::uint32_t(frames.size());
      video.h = std::uint32_t(render_cfg.frame_height);
      video.w = std::uint32_t(render_cfg.frame_width);
      for (const auto& f : frames)
        video.values.insert(video.values.end(), f.pixels.begin(), f.pixels.end());
      char sid[32];
      std::snprintf(sid, sizeof sid, "%s_s%02d", gid, s);
      const std::string rel = std::string(sid) + ".bin";
      write_sample((std::filesystem::path(out_dir) / rel).string(), video);
      SampleRecord rec;
      rec.sample_id = sid;
      rec.true_viscosity = viscosities[g];
      rec.density = cfg.density;
      rec.protocol_hash = proto_hash;
      rec.tensor_path = rel;
      rec.viscosity_group_id = gid;
      manifest.records.push_back(std::move(rec));
    }
  }
  write_manifest((std::filesystem::path(out_dir) / "manifest.tsv").string(), manifest);
  std::printf("wrote %zu samples in %zu groups to %s\n", manifest.records.size(),
              viscosities.size(), out_dir.c_str());
  return 0;
}

int cmd_split(const RunConfig& cfg, const std::string& manifest_path,
              const std::string& out_train, const std::string& out_test) {
  const auto manifest = read_manifest(manifest_path);
  SplitResult split;
  if (cfg.split_mode == "aleatoric")
    split = split_aleatoric(manifest, cfg.split_seed, cfg.test_fraction);
  else if (cfg.split_mode == "epistemic")
    split = split_epistemic(manifest, cfg.holdout);
  else
    throw BadValue("split: mode must be aleatoric or epistemic");
  write_manifest(out_train, split.train);
  write_manifest(out_test, split.test);
  std::printf("train %zu test %zu\n", split.train.records.size(),
              split.test.records.size());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& manifest_path,
              const std::string& data_dir, const std::string& out_model,
              const std::string& history_path) {
  const auto manifest = read_manifest(manifest_path);
  if (manifest.records.empty()) throw std::invalid_argument("train: empty manifest");
  const int t_frames = int(cfg.protocol().frame_schedule.size());
  auto result = train(cfg.train_config(), cfg.arch_config(t_frames), manifest,
                      data_dir, cfg.data_options(), history_path);
  result.checkpoint.config_echo = config_echo(cfg);
  save_checkpoint(out_model, result.checkpoint);
  std::printf("epochs %zu best_epoch %d best_loss %.6g\n", result.loss_history.size(),
              result.best_epoch, result.best_loss);
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& model_path,
              const std::string& sample_path, double density) {
  const auto ckpt = load_checkpoint(model_path);
  const auto video = read_sample(sample_path);
  const auto stats = infer(ckpt.params, to_frames(video), cfg.data_options(), density);
  std::printf("%.17g %.17g\n", stats.mean_eta, stats.std_eta);
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_path,
                 const std::string& manifest_path, const std::string& data_dir,
                 const std::string& out_dir, const std::string& train_manifest_path) {
  const auto ckpt = load_checkpoint(model_path);
  const auto manifest = read_manifest(manifest_path);
  std::optional<Manifest> train_manifest;
  if (!train_manifest_path.empty()) train_manifest = read_manifest(train_manifest_path);
  const auto records = evaluate(ckpt.params, manifest, data_dir, cfg.data_options(),
                                train_manifest ? &*train_manifest : nullptr);
  std::map<std::string, std::string> run_info;
  run_info["model"] = model_path;
  run_info["manifest"] = manifest_path;
  run_info["aug_seed"] = std::to_string(cfg.aug_seed);
  run_info["train_seed"] = std::to_string(cfg.train_seed);
  run_info["split_seed"] = std::to_string(cfg.split_seed);
  run_info["config_hash"] = hex_hash(config_echo(cfg));
  report(records, out_dir, run_info);
  const auto s = summarize(records);
  std::printf("n %zu median_abs_rel %.6g spearman %.6g\n", records.size(),
              s.median_abs_residual, s.spearman_rho);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inverted-vial flow physics, synthetic dataset and viscosity "
               "inference toolkit"};
  app.require_subcommand(1);
  app.footer(vialcv::config_help());

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "run configuration file (key=value lines)");
  app.add_option("--set", sets, "inline key=value override, repeatable");

  // physics
  auto* physics = app.add_subcommand("physics", "closed-form dimensionless report");
  double eta = 0, rho = 0, gamma = 0.04, radius = 7.5e-3, fill_volume = 2e-6,
         t_flip = 2.0, t_flow = 2.0, sigma_flow = 70.0;
  std::optional<double> u_measured, tau, sigma_crit;
  physics->add_option("--eta", eta, "viscosity [Pa.s]")->required();
  physics->add_option("--rho", rho, "density [kg/m^3]")->required();
  physics->add_option("--gamma", gamma, "surface tension [N/m]");
  physics->add_option("--radius", radius, "vial radius [m]");
  physics->add_option("--fill-volume", fill_volume, "fill volume [m^3]");
  physics->add_option("--t-flip", t_flip, "flip duration [s]");
  physics->add_option("--u-measured", u_measured, "observed front speed [m/s]");
  physics->add_option("--tau", tau, "relaxation time [s]");
  physics->add_option("--sigma-crit", sigma_crit, "critical stress [Pa]");
  physics->add_option("--t-flow", t_flow, "flow timescale for De [s]");
  physics->add_option("--sigma-flow", sigma_flow, "flow stress for the amplitude [Pa]");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string out_dir;
  std::vector<double> viscosities;
  std::string logspace;
  int n_per_group = 8, jobs = 1;
  std::uint64_t seed = 0;
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--viscosities", viscosities, "explicit list [Pa.s]");
  simulate->add_option("--logspace", logspace, "min,max,n log-spaced viscosities");
  simulate->add_option("--n-per-group", n_per_group, "samples per viscosity");
  simulate->add_option("--seed", seed, "render noise seed");
  simulate->add_option("--jobs", jobs, "worker count (outputs are per-sample files)");

  // split
  auto* split = app.add_subcommand("split", "train/test split of a manifest");
  std::string manifest_path, out_train, out_test, mode;
  std::optional<std::uint64_t> split_seed_flag;
  std::optional<int> holdout_flag;
  split->add_option("--manifest", manifest_path, "input manifest")->required();
  split->add_option("--out-train", out_train, "train manifest path")->required();
  split->add_option("--out-test", out_test, "test manifest path")->required();
  split->add_option("--mode", mode, "aleatoric or epistemic");
  split->add_option("--seed", split_seed_flag, "aleatoric shuffle seed");
  split->add_option("--holdout", holdout_flag, "epistemic held-out group count");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the regression network");
  std::string data_dir, out_model = "model.ckpt", history_path;
  train_cmd->add_option("--manifest", manifest_path, "training manifest")->required();
  train_cmd->add_option("--data-dir", data_dir, "directory holding tensor files");
  train_cmd->add_option("--out", out_model, "checkpoint output path");
  train_cmd->add_option("--history", history_path, "per-epoch loss history file");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "viscosity from one stored video");
  std::string model_path, sample_path;
  double density = 900.0;
  infer_cmd->add_option("--model", model_path, "checkpoint")->required();
  infer_cmd->add_option("--sample", sample_path, "video tensor file")->required();
  infer_cmd->add_option("--density", density, "fluid density [kg/m^3]")->required();

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "residual report on a manifest");
  std::string train_manifest_path, report_dir = "report";
  evaluate_cmd->add_option("--model", model_path, "checkpoint")->required();
  evaluate_cmd->add_option("--manifest", manifest_path, "test manifest")->required();
  evaluate_cmd->add_option("--data-dir", data_dir, "directory holding tensor files");
  evaluate_cmd->add_option("--out-dir", report_dir, "report output directory");
  evaluate_cmd->add_option("--train-manifest", train_manifest_path,
                           "training manifest for the leakage guard");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_cfg(config_path, sets);
    if (physics->parsed())
      return cmd_physics(eta, rho, gamma, radius, fill_volume, t_flip, u_measured,
                         tau, sigma_crit, t_flow, sigma_flow);
    if (simulate->parsed()) {
      (void)jobs;  // per-sample output files; serial execution is always valid
      if (!logspace.empty()) {
        double lo = 0, hi = 0;
        int n = 0;
        if (std::sscanf(logspace.c_str(), "%lf,%lf,%d", &lo, &hi, &n) != 3 || n < 1 ||
            !(lo > 0) || !(hi > lo))
          throw vialcv::BadValue("simulate: --logspace expects min,max,n");
        for (int i = 0; i < n; ++i)
          viscosities.push_back(
              std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) *
                                                  (n == 1 ? 0.0 : double(i) / (n - 1))));
      }
      return cmd_simulate(cfg, out_dir, viscosities, n_per_group, seed);
    }
    if (split->parsed()) {
      if (!mode.empty()) cfg.split_mode = mode;
      if (split_seed_flag) cfg.split_seed = *split_seed_flag;
      if (holdout_flag) cfg.holdout = *holdout_flag;
      return cmd_split(cfg, manifest_path, out_train, out_test);
    }
    if (train_cmd->parsed())
      return cmd_train(cfg, manifest_path, data_dir, out_model, history_path);
    if (infer_cmd->parsed()) return cmd_infer(cfg, model_path, sample_path, density);
    if (evaluate_cmd->parsed())
      return cmd_evaluate(cfg, model_path, manifest_path, data_dir, report_dir,
                          train_manifest_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
