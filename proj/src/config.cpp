#include "vialcv/config.hpp"

#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

namespace vialcv {

namespace {

struct Entry {
  const char* key;
  std::variant<double RunConfig::*, int RunConfig::*, std::uint64_t RunConfig::*,
               std::string RunConfig::*>
      field;
  const char* unit;
  const char* desc;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"gravity", &RunConfig::gravity, "m/s^2", "gravitational acceleration"},
      {"vial_radius", &RunConfig::vial_radius, "m", "interior vial radius"},
      {"vial_volume", &RunConfig::vial_volume, "m^3", "interior vial volume"},
      {"fill_volume", &RunConfig::fill_volume, "m^3", "liquid fill volume"},
      {"t_flip", &RunConfig::t_flip, "s", "flip duration"},
      {"t_obs", &RunConfig::t_obs, "s", "observation window after inversion"},
      {"density", &RunConfig::density, "kg/m^3", "fluid density"},
      {"surface_tension", &RunConfig::surface_tension, "N/m", "liquid-air surface tension"},
      {"sim_dt", &RunConfig::sim_dt, "s", "simulator time step"},
      {"sim_n_x", &RunConfig::sim_n_x, "-", "wall film grid stations"},
      {"sim_c_taylor", &RunConfig::sim_c_taylor, "-", "Taylor bubble speed coefficient"},
      {"sim_film_deposit_frac", &RunConfig::sim_film_deposit_frac, "-",
       "front-phase outflow fraction routed to the wall film"},
      {"render_noise", &RunConfig::render_noise, "-", "additive Gaussian pixel noise sigma"},
      {"blur_sigma", &RunConfig::blur_sigma, "px", "Gaussian blur sigma before Sobel"},
      {"roi_x", &RunConfig::roi_x, "px", "ROI top-left column"},
      {"roi_y", &RunConfig::roi_y, "px", "ROI top-left row"},
      {"roi_w", &RunConfig::roi_w, "px", "ROI width"},
      {"roi_h", &RunConfig::roi_h, "px", "ROI height"},
      {"aug_count", &RunConfig::aug_count, "-", "augmentations per inference"},
      {"aug_max_shift", &RunConfig::aug_max_shift, "px", "max ROI translation jitter"},
      {"aug_max_rotation", &RunConfig::aug_max_rotation, "deg", "max ROI rotation jitter"},
      {"aug_seed", &RunConfig::aug_seed, "-", "augmentation RNG seed"},
      {"conv1_ch", &RunConfig::conv1_ch, "-", "first conv layer channels"},
      {"conv2_ch", &RunConfig::conv2_ch, "-", "second conv layer channels"},
      {"proj_dim", &RunConfig::proj_dim, "-", "per-frame feature projection width"},
      {"lstm_hidden", &RunConfig::lstm_hidden, "-", "LSTM hidden size per direction"},
      {"attn_dim", &RunConfig::attn_dim, "-", "attention projection width"},
      {"density_dim", &RunConfig::density_dim, "-", "density embedding width"},
      {"head_hidden", &RunConfig::head_hidden, "-", "regression head hidden width"},
      {"learning_rate", &RunConfig::learning_rate, "-", "Adam learning rate"},
      {"max_epochs", &RunConfig::max_epochs, "-", "training epoch cap"},
      {"patience", &RunConfig::patience, "-", "early-stop patience in epochs"},
      {"batch_size", &RunConfig::batch_size, "-", "mini-batch size"},
      {"train_seed", &RunConfig::train_seed, "-", "training RNG seed"},
      {"loss_space", &RunConfig::loss_space, "-", "regression space: log10 or linear"},
      {"split_mode", &RunConfig::split_mode, "-", "split: aleatoric or epistemic"},
      {"split_seed", &RunConfig::split_seed, "-", "aleatoric split RNG seed"},
      {"test_fraction", &RunConfig::test_fraction, "-", "aleatoric per-group test fraction"},
      {"holdout", &RunConfig::holdout, "-", "epistemic held-out group count"},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

VialGeometry RunConfig::geometry() const {
  return VialGeometry::from_volumes(vial_radius, vial_volume, fill_volume);
}

TestProtocol RunConfig::protocol() const {
  TestProtocol p;
  p.t_flip = t_flip;
  p.t_obs = t_obs;
  p.g = gravity;
  p.frame_schedule = frame_schedule(p);
  return p;
}

SimConfig RunConfig::sim_config() const {
  SimConfig s;
  s.dt = sim_dt;
  s.n_x = sim_n_x;
  s.c_taylor = sim_c_taylor;
  s.film_deposit_frac = sim_film_deposit_frac;
  return s;
}

RenderConfig RunConfig::render_config() const {
  RenderConfig r;
  r.sigma_noise = render_noise;
  return r;
}

DataOptions RunConfig::data_options() const {
  DataOptions d;
  d.roi.origin_x = roi_x;
  d.roi.origin_y = roi_y;
  d.roi.width = roi_w;
  d.roi.height = roi_h;
  d.aug.count = aug_count;
  d.aug.max_shift = aug_max_shift;
  d.aug.max_rotation = aug_max_rotation;
  d.aug.seed = aug_seed;
  d.pre.blur_sigma = blur_sigma;
  return d;
}

ArchConfig RunConfig::arch_config(int t_frames) const {
  ArchConfig a;
  a.t_frames = t_frames;
  a.frame_h = roi_h;
  a.frame_w = roi_w;
  a.conv1_ch = conv1_ch;
  a.conv2_ch = conv2_ch;
  a.proj_dim = proj_dim;
  a.lstm_hidden = lstm_hidden;
  a.attn_dim = attn_dim;
  a.density_dim = density_dim;
  a.head_hidden = head_hidden;
  return a;
}

TrainConfig RunConfig::train_config() const {
  if (loss_space != "log10" && loss_space != "linear")
    throw BadValue("loss_space must be log10 or linear");
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.batch_size = batch_size;
  t.seed = train_seed;
  t.loss_log10 = loss_space == "log10";
  return t;
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "paper") {
    cfg.learning_rate = 1e-5;
    cfg.max_epochs = 2000;
    cfg.patience = 1000;
  } else if (name == "desk") {
    // small architecture so full runs fit a single desktop core
    cfg.conv1_ch = 4;
    cfg.conv2_ch = 8;
    cfg.proj_dim = 32;
    cfg.lstm_hidden = 16;
    cfg.attn_dim = 16;
    cfg.head_hidden = 16;
    cfg.learning_rate = 1e-3;
    cfg.max_epochs = 300;
    cfg.patience = 120;
  } else {
    throw BadValue("unknown preset: " + name);
  }
}

void apply_line(RunConfig& cfg, const std::string& raw) {
  std::string line = raw;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  line = trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw BadValue("expected key=value, got: " + raw);
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  if (key == "preset") {
    apply_preset(cfg, value);
    return;
  }
  for (const auto& e : entries()) {
    if (key != e.key) continue;
    try {
      std::visit(
          [&](auto member) {
            using T = std::remove_reference_t<decltype(cfg.*member)>;
            if constexpr (std::is_same_v<T, double>)
              cfg.*member = std::stod(value);
            else if constexpr (std::is_same_v<T, int>)
              cfg.*member = std::stoi(value);
            else if constexpr (std::is_same_v<T, std::uint64_t>)
              cfg.*member = std::stoull(value);
            else
              cfg.*member = value;
          },
          e.field);
    } catch (const std::invalid_argument&) {
      throw BadValue("cannot parse value for " + key + ": " + value);
    }
    return;
  }
  throw UnknownKey("unknown configuration key: " + key);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_run_config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  while (std::getline(in, line)) apply_line(cfg, line);
  return cfg;
}

std::string config_help() {
  const RunConfig def;
  std::ostringstream out;
  out << "configuration keys (key=value, '#' comments):\n";
  out << "  preset=<paper|desk>  apply a named preset before further overrides\n";
  for (const auto& e : entries()) {
    out << "  " << e.key << "=";
    std::visit([&](auto member) { out << def.*member; }, e.field);
    out << "  [" << e.unit << "]  " << e.desc << "\n";
  }
  return out.str();
}

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& e : entries()) {
    out << e.key << "=";
    std::visit([&](auto member) { out << cfg.*member; }, e.field);
    out << "\n";
  }
  return out.str();
}

}  // namespace vialcv
