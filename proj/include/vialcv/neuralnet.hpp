#ifndef VIALCV_NEURALNET_HPP
#define VIALCV_NEURALNET_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vialcv {

struct ShapeInconsistency : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatchNN : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GradCheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat float64 parameter tensor with a gradient buffer.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;  ///< values
  std::vector<double> g;  ///< gradient, same size as v

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_) : shape(std::move(shape_)) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    v.assign(n, 0.0);
    g.assign(n, 0.0);
  }
  std::size_t size() const { return v.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

/// Architecture of the frame-sequence regression network:
/// conv stack -> per-frame projection -> bidirectional LSTM -> temporal
/// self-attention pooling -> density side-channel -> dense head -> scalar.
struct ArchConfig {
  int t_frames = 35;
  int frame_h = 104, frame_w = 10;
  int conv1_ch = 8, conv2_ch = 16;  ///< 3x3 kernels, each followed by 2x2 max-pool
  int proj_dim = 48;
  int lstm_hidden = 32;  ///< per direction
  int attn_dim = 32;
  int density_dim = 8;
  int head_hidden = 32;

  int pool1_h() const { return frame_h / 2; }
  int pool1_w() const { return frame_w / 2; }
  int pool2_h() const { return pool1_h() / 2; }
  int pool2_w() const { return pool1_w() / 2; }
  int flat_dim() const { return conv2_ch * pool2_h() * pool2_w(); }

  void validate() const;
};

/// All trainable tensors. Tensors are addressable by name for checkpoints
/// and gradient checking.
struct ModelParams {
  ArchConfig arch;

  Tensor conv1_w, conv1_b;  // [c1,1,3,3], [c1]
  Tensor conv2_w, conv2_b;  // [c2,c1,3,3], [c2]
  Tensor proj_w, proj_b;    // [P,flat], [P]
  // gate order: input, forget, cell, output
  Tensor lstm_fw_x, lstm_fw_h, lstm_fw_b;  // [4H,P], [4H,H], [4H]
  Tensor lstm_bw_x, lstm_bw_h, lstm_bw_b;
  Tensor attn_w, attn_b, attn_v;  // [A,2H], [A], [A]
  Tensor dens_w, dens_b;          // [D], [D]
  Tensor head1_w, head1_b;        // [HH,2H+D], [HH]
  Tensor head2_w, head2_b;        // [HH], [1]

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  void zero_grad();
};

/// Seeded fan-scaled uniform init, zero biases.
ModelParams init_model(const ArchConfig& arch, std::uint64_t seed);

/// One training sample: T frames of H*W intensities plus the density label.
struct SampleInput {
  std::vector<std::vector<double>> frames;  ///< [T][H*W]
  double density = 0.0;  ///< raw [kg/m^3]; normalized internally
};

struct ForwardResult {
  double prediction = 0.0;               ///< log10 viscosity [Pa.s]
  std::vector<double> attention;         ///< alpha_t, sums to 1
};

ForwardResult forward(const ModelParams& m, const SampleInput& input);

/// Forward + reverse pass; accumulates dLoss/dparam * upstream into the
/// gradient buffers and returns the forward result.
ForwardResult forward_backward(ModelParams& m, const SampleInput& input,
                               double upstream);

/// Mean squared error over a batch of scalar predictions.
double loss_mse(const std::vector<double>& pred, const std::vector<double>& target);

/// Runs forward_backward over a batch with MSE loss in prediction space;
/// returns the loss. Gradients are accumulated in a fixed sample order.
double backward_batch(ModelParams& m, const std::vector<SampleInput>& inputs,
                      const std::vector<double>& targets);

struct AdamState {
  std::uint64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::vector<std::vector<double>> m1, m2;  ///< per named tensor

  static AdamState for_model(const ModelParams& m);
};

void adam_step(ModelParams& m, AdamState& state, double lr);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};
struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed(double tol) const { return max_rel_error <= tol; }
};

/// Central finite differences (step 1e-6) over every parameter coordinate.
GradCheckReport grad_check(ModelParams& m, const std::vector<SampleInput>& inputs,
                           const std::vector<double>& targets);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  AdamState opt;
  bool has_opt = false;
  std::string config_echo;
  std::uint64_t rng_seed = 0;
};

/// "VMDL" container; load(save(m)) reproduces parameters bitwise.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vialcv

#endif  // VIALCV_NEURALNET_HPP
