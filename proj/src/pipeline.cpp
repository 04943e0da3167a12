#include "vialcv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace vialcv {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (max_epochs < 1 || patience < 1 || batch_size < 1)
    throw std::invalid_argument("TrainConfig: epochs, patience, batch_size must be >= 1");
}

std::vector<Frame> to_frames(const TensorData& video) {
  std::vector<Frame> frames;
  frames.reserve(video.t);
  const size_t hw = size_t(video.h) * video.w;
  for (std::uint32_t t = 0; t < video.t; ++t) {
    Frame f(int(video.h), int(video.w));
    std::copy(video.values.begin() + t * hw, video.values.begin() + (t + 1) * hw,
              f.pixels.begin());
    frames.push_back(std::move(f));
  }
  return frames;
}

SampleInput make_input(const TensorData& video, const ROISpec& roi,
                       const PreprocessConfig& pre, double density) {
  const auto frames = to_frames(video);
  const auto seq = extract_roi(frames, roi);
  const auto processed = preprocess(seq.frames, pre);
  SampleInput in;
  in.density = density;
  in.frames.reserve(processed.size());
  for (const auto& f : processed) in.frames.push_back(f.pixels);
  return in;
}

namespace {

std::string resolve(const std::string& data_dir, const std::string& rel) {
  if (data_dir.empty()) return rel;
  return (std::filesystem::path(data_dir) / rel).string();
}

double target_of(const SampleRecord& r, bool loss_log10) {
  return loss_log10 ? std::log10(r.true_viscosity) : r.true_viscosity;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ArchConfig& arch,
                  const Manifest& manifest, const std::string& data_dir,
                  const DataOptions& opts, const std::string& history_path) {
  cfg.validate();
  arch.validate();
  manifest.validate();
  if (manifest.records.empty())
    throw std::invalid_argument("train: empty training manifest");

  // Per-sample ROI placement jitter, seeded by the sample id so the input
  // set is independent of record order.
  std::vector<SampleInput> inputs;
  std::vector<double> targets;
  inputs.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    const auto video = read_sample(resolve(data_dir, r.tensor_path));
    std::mt19937_64 rng(opts.aug.seed ^ std::hash<std::string>{}(r.sample_id));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ROISpec roi = opts.roi;
    roi.origin_x += u01(rng) * opts.aug.max_shift;
    roi.origin_y += u01(rng) * opts.aug.max_shift;
    roi.rotation_deg += u01(rng) * opts.aug.max_rotation;
    inputs.push_back(make_input(video, roi, opts.pre, r.density));
    targets.push_back(target_of(r, cfg.loss_log10));
  }
  if (int(inputs.front().frames.size()) != arch.t_frames)
    throw ShapeMismatchNN("train: video length does not match arch t_frames");

  ModelParams model = init_model(arch, cfg.seed);
  AdamState opt = AdamState::for_model(model);

  std::ofstream hist;
  if (!history_path.empty()) {
    hist.open(history_path);
    if (!hist) throw std::runtime_error("train: cannot open " + history_path);
    hist << "# epoch\tloss\n";
    hist.precision(17);
  }

  TrainResult res;
  res.best_loss = std::numeric_limits<double>::infinity();
  ModelParams best = model;
  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed + 0x517cc1b727220a95ull * std::uint64_t(epoch + 1));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    size_t n_seen = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
      std::vector<SampleInput> bx;
      std::vector<double> by;
      for (size_t i = start; i < stop; ++i) {
        bx.push_back(inputs[order[i]]);
        by.push_back(targets[order[i]]);
      }
      model.zero_grad();
      const double loss = backward_batch(model, bx, by);
      adam_step(model, opt, cfg.learning_rate);
      epoch_loss += loss * double(bx.size());
      n_seen += bx.size();
    }
    epoch_loss /= double(n_seen);
    res.loss_history.push_back(epoch_loss);
    if (hist.is_open()) hist << epoch << '\t' << epoch_loss << '\n';

    if (epoch_loss < res.best_loss - 1e-12) {
      res.best_loss = epoch_loss;
      res.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  res.checkpoint.params = std::move(best);
  res.checkpoint.opt = std::move(opt);
  res.checkpoint.has_opt = true;
  res.checkpoint.rng_seed = cfg.seed;
  return res;
}

InferStats infer(const ModelParams& m, const std::vector<Frame>& video,
                 const DataOptions& opts, double density) {
  const auto sequences = augment(video, opts.roi, opts.aug);
  InferStats stats;
  stats.predictions.reserve(sequences.size());
  for (const auto& seq : sequences) {
    const auto processed = preprocess(seq.frames, opts.pre);
    SampleInput in;
    in.density = density;
    for (const auto& f : processed) in.frames.push_back(f.pixels);
    const double log_eta = forward(m, in).prediction;
    stats.predictions.push_back(std::pow(10.0, log_eta));
  }
  const double n = double(stats.predictions.size());
  // Identical predictions (zero jitter) must give std = 0 exactly, so guard
  // against the rounding of mean = sum / n.
  const bool all_equal = std::all_of(
      stats.predictions.begin(), stats.predictions.end(),
      [&](double p) { return p == stats.predictions.front(); });
  if (all_equal) {
    stats.mean_eta = stats.predictions.front();
    stats.std_eta = 0.0;
    return stats;
  }
  for (double p : stats.predictions) stats.mean_eta += p;
  stats.mean_eta /= n;
  double var = 0.0;
  for (double p : stats.predictions) var += (p - stats.mean_eta) * (p - stats.mean_eta);
  stats.std_eta = std::sqrt(var / n);
  return stats;
}

std::vector<ResidualRecord> evaluate(const ModelParams& m, const Manifest& test,
                                     const std::string& data_dir,
                                     const DataOptions& opts,
                                     const Manifest* train_manifest) {
  test.validate();
  if (test.records.empty())
    throw std::invalid_argument("evaluate: empty test manifest");
  if (train_manifest) {
    std::set<std::string> train_ids;
    for (const auto& r : train_manifest->records) train_ids.insert(r.sample_id);
    for (const auto& r : test.records)
      if (train_ids.count(r.sample_id))
        throw std::invalid_argument("evaluate: sample " + r.sample_id +
                                    " appears in both train and test");
  }

  std::vector<ResidualRecord> out;
  out.reserve(test.records.size());
  for (const auto& r : test.records) {
    const auto video = read_sample(resolve(data_dir, r.tensor_path));
    const auto stats = infer(m, to_frames(video), opts, r.density);
    ResidualRecord rec;
    rec.sample_id = r.sample_id;
    rec.viscosity_group_id = r.viscosity_group_id;
    rec.true_eta = r.true_viscosity;
    rec.mean_eta = stats.mean_eta;
    rec.std_eta = stats.std_eta;
    rec.rel_residual = (stats.mean_eta - r.true_viscosity) / r.true_viscosity;
    rec.predictions = stats.predictions;
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (double(i) + double(j)) / 2.0 + 1.0;  // ties share the mean rank
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ReportSummary summarize(const std::vector<ResidualRecord>& records) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  ReportSummary s;
  std::vector<double> abs_all, abs_high, truth, inferred;
  for (const auto& r : records) {
    abs_all.push_back(std::abs(r.rel_residual));
    if (r.true_eta > 0.1) abs_high.push_back(std::abs(r.rel_residual));
    truth.push_back(r.true_eta);
    inferred.push_back(r.mean_eta);
  }
  s.median_abs_residual = median(abs_all);
  s.median_abs_residual_above_0p1 =
      abs_high.empty() ? std::numeric_limits<double>::quiet_NaN() : median(abs_high);
  s.spearman_rho = records.size() >= 2 ? spearman(truth, inferred) : 0.0;
  return s;
}

void report(const std::vector<ResidualRecord>& records, const std::string& out_dir,
            const std::map<std::string, std::string>& run_info) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);

  {
    std::ofstream out(dir / "residuals.tsv");
    if (!out) throw std::runtime_error("report: cannot write residuals.tsv");
    out.precision(17);
    out << "# sample_id\tgroup_id\ttrue_eta\tmean_eta\tstd_eta\trel_residual\tpredictions\n";
    for (const auto& r : records) {
      out << r.sample_id << '\t' << r.viscosity_group_id << '\t' << r.true_eta
          << '\t' << r.mean_eta << '\t' << r.std_eta << '\t' << r.rel_residual
          << '\t';
      for (size_t i = 0; i < r.predictions.size(); ++i)
        out << (i ? "," : "") << r.predictions[i];
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "pairs.tsv");
    out.precision(17);
    out << "# true_eta\tinferred_eta\tinferred_std\n";
    for (const auto& r : records)
      out << r.true_eta << '\t' << r.mean_eta << '\t' << r.std_eta << '\n';
  }
  {
    const auto s = summarize(records);
    std::ofstream out(dir / "summary.txt");
    out.precision(17);
    out << "n_samples\t" << records.size() << '\n'
        << "median_abs_rel_residual\t" << s.median_abs_residual << '\n'
        << "median_abs_rel_residual_eta_above_0.1\t" << s.median_abs_residual_above_0p1
        << '\n'
        << "spearman_rho\t" << s.spearman_rho << '\n';
  }
  {
    std::ofstream out(dir / "run_manifest.txt");
    for (const auto& [k, v] : run_info) out << k << '\t' << v << '\n';
  }
}

std::vector<ResidualRecord> read_residual_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_residual_table: cannot open " + path);
  std::vector<ResidualRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ResidualRecord r;
    std::string f3, f4, f5, f6, preds;
    if (!std::getline(ss, r.sample_id, '\t') ||
        !std::getline(ss, r.viscosity_group_id, '\t') ||
        !std::getline(ss, f3, '\t') || !std::getline(ss, f4, '\t') ||
        !std::getline(ss, f5, '\t') || !std::getline(ss, f6, '\t'))
      throw std::runtime_error("read_residual_table: malformed line: " + line);
    r.true_eta = std::stod(f3);
    r.mean_eta = std::stod(f4);
    r.std_eta = std::stod(f5);
    r.rel_residual = std::stod(f6);
    if (std::getline(ss, preds)) {
      std::istringstream ps(preds);
      std::string tok;
      while (std::getline(ps, tok, ',')) r.predictions.push_back(std::stod(tok));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vialcv
