#ifndef VIALCV_PIPELINE_HPP
#define VIALCV_PIPELINE_HPP

#include <map>
#include <string>
#include <vector>

#include "vialcv/dataset.hpp"
#include "vialcv/imaging.hpp"
#include "vialcv/neuralnet.hpp"

namespace vialcv {

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 300;
  int patience = 100;       ///< epochs without a training-loss improvement
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool loss_log10 = true;   ///< regress log10(eta); false regresses eta directly

  void validate() const;
};

/// How raw rendered videos become network inputs.
struct DataOptions {
  ROISpec roi;
  AugmentSpec aug;
  PreprocessConfig pre;
};

/// ROI-extract + blur/Sobel one stored video into a network sample.
SampleInput make_input(const TensorData& video, const ROISpec& roi,
                       const PreprocessConfig& pre, double density);

std::vector<Frame> to_frames(const TensorData& video);

struct TrainResult {
  Checkpoint checkpoint;             ///< best-loss parameters and final optimizer
  std::vector<double> loss_history;  ///< per-epoch training loss
  int best_epoch = 0;
  double best_loss = 0.0;
};

/// Seeded shuffled mini-batch Adam loop with early stopping on the training
/// loss plateau. Tensor paths in the manifest resolve against data_dir.
/// A non-empty history_path receives one "epoch<TAB>loss" line per epoch.
TrainResult train(const TrainConfig& cfg, const ArchConfig& arch,
                  const Manifest& manifest, const std::string& data_dir,
                  const DataOptions& opts, const std::string& history_path = "");

struct InferStats {
  double mean_eta = 0.0;  ///< [Pa.s], arithmetic mean over augmentations
  double std_eta = 0.0;   ///< population std (divisor N)
  std::vector<double> predictions;  ///< per-augmentation eta [Pa.s]
};

/// The 10-augmentation protocol: jittered ROI -> preprocess -> forward for
/// each augmentation, statistics of the resulting eta values.
InferStats infer(const ModelParams& m, const std::vector<Frame>& video,
                 const DataOptions& opts, double density);

struct ResidualRecord {
  std::string sample_id;
  std::string viscosity_group_id;
  double true_eta = 0.0;
  double mean_eta = 0.0;
  double std_eta = 0.0;
  double rel_residual = 0.0;  ///< (mean - true)/true
  std::vector<double> predictions;
};

/// Per-sample inference over a test manifest. When train_manifest is given,
/// any shared sample_id raises std::invalid_argument (leakage guard).
std::vector<ResidualRecord> evaluate(const ModelParams& m, const Manifest& test,
                                     const std::string& data_dir,
                                     const DataOptions& opts,
                                     const Manifest* train_manifest = nullptr);

/// Spearman rank correlation; average ranks on ties. Returns 0 when either
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

double median(std::vector<double> v);

struct ReportSummary {
  double median_abs_residual = 0.0;
  double median_abs_residual_above_0p1 = 0.0;  ///< restricted to eta > 0.1 Pa.s
  double spearman_rho = 0.0;
};

ReportSummary summarize(const std::vector<ResidualRecord>& records);

/// Writes residuals.tsv (per-sample table), pairs.tsv (true vs inferred),
/// summary.txt and run_manifest.txt (the seeds/settings in run_info).
void report(const std::vector<ResidualRecord>& records, const std::string& out_dir,
            const std::map<std::string, std::string>& run_info);

std::vector<ResidualRecord> read_residual_table(const std::string& path);

}  // namespace vialcv

#endif  // VIALCV_PIPELINE_HPP
