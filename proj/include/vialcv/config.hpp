#ifndef VIALCV_CONFIG_HPP
#define VIALCV_CONFIG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include "vialcv/flowsim.hpp"
#include "vialcv/imaging.hpp"
#include "vialcv/neuralnet.hpp"
#include "vialcv/pipeline.hpp"

namespace vialcv {

struct UnknownKey : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key=value run configuration covering every module parameter.
/// Unknown keys are rejected; every key has a documented default.
struct RunConfig {
  // geometry and protocol
  double gravity = kDefaultGravity;  ///< [m/s^2]
  double vial_radius = 7.5e-3;       ///< [m]
  double vial_volume = 8e-6;         ///< interior [m^3]
  double fill_volume = 2e-6;         ///< [m^3]
  double t_flip = 2.0;               ///< [s]
  double t_obs = 60.0;               ///< [s]
  double density = 900.0;            ///< sample fluid density [kg/m^3]
  double surface_tension = 0.04;     ///< [N/m]

  // simulator
  double sim_dt = 1e-3;
  int sim_n_x = 128;
  double sim_c_taylor = 0.05;
  double sim_film_deposit_frac = 0.35;

  // rendering and preprocessing
  double render_noise = 0.01;
  double blur_sigma = 1.0;

  // ROI and augmentation
  double roi_x = 2.0, roi_y = 6.0;
  int roi_w = 10, roi_h = 104;
  int aug_count = 10;
  double aug_max_shift = 3.0;
  double aug_max_rotation = 1.0;
  std::uint64_t aug_seed = 0;

  // architecture
  int conv1_ch = 8, conv2_ch = 16;
  int proj_dim = 48, lstm_hidden = 32, attn_dim = 32;
  int density_dim = 8, head_hidden = 32;

  // training
  double learning_rate = 1e-3;
  int max_epochs = 300;
  int patience = 100;
  int batch_size = 16;
  std::uint64_t train_seed = 0;
  std::string loss_space = "log10";  ///< "log10" or "linear"

  // splitting
  std::string split_mode = "aleatoric";  ///< "aleatoric" or "epistemic"
  std::uint64_t split_seed = 0;
  double test_fraction = 0.2;
  int holdout = 4;

  VialGeometry geometry() const;
  TestProtocol protocol() const;
  SimConfig sim_config() const;
  RenderConfig render_config() const;
  DataOptions data_options() const;
  ArchConfig arch_config(int t_frames) const;
  TrainConfig train_config() const;
};

/// `paper` (lr 1e-5, 2000 epochs, patience 1000) or `desk` (small fast
/// architecture, lr 1e-3).
void apply_preset(RunConfig& cfg, const std::string& name);

/// Applies one "key=value" assignment; '#' comments and blank lines ignored.
void apply_line(RunConfig& cfg, const std::string& line);

RunConfig load_run_config(const std::string& path);

/// One line per key: name, default, unit, description.
std::string config_help();

/// Serializes every key=value pair (parseable by apply_line).
std::string config_echo(const RunConfig& cfg);

}  // namespace vialcv

#endif  // VIALCV_CONFIG_HPP
