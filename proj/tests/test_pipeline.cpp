#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vialcv/pipeline.hpp"

using namespace vialcv;

namespace {

// Tiny synthetic corpus: 8x4 ROI inside 20x12 frames, a step edge whose
// position encodes the viscosity group.
constexpr int kT = 3, kH = 20, kW = 12;

TensorData make_video(int group, int sample) {
  TensorData d;
  d.t = kT;
  d.h = kH;
  d.w = kW;
  d.values.assign(size_t(kT) * kH * kW, 0.1);
  const int edge = 4 + 5 * group + sample % 2;
  for (int t = 0; t < kT; ++t)
    for (int r = edge; r < kH; ++r)
      for (int c = 0; c < kW; ++c)
        d.values[(size_t(t) * kH + r) * kW + c] = 0.9;
  return d;
}

struct Corpus {
  std::string dir;
  Manifest manifest;
};

Corpus make_corpus(int n_groups = 2, int per_group = 4) {
  Corpus c;
  c.dir = "/tmp/test_pipeline_data";
  std::filesystem::create_directories(c.dir);
  for (int g = 0; g < n_groups; ++g)
    for (int s = 0; s < per_group; ++s) {
      SampleRecord r;
      r.sample_id = "g" + std::to_string(g) + "_s" + std::to_string(s);
      r.true_viscosity = g == 0 ? 0.1 : 10.0;
      r.density = 900.0;
      r.tensor_path = r.sample_id + ".bin";
      r.viscosity_group_id = "g" + std::to_string(g);
      write_sample(c.dir + "/" + r.tensor_path, make_video(g, s));
      c.manifest.records.push_back(std::move(r));
    }
  return c;
}

DataOptions small_opts() {
  DataOptions o;
  o.roi = ROISpec{1.0, 2.0, 4, 8, 0.0};
  o.aug.max_shift = 0.0;
  o.aug.max_rotation = 0.0;
  o.pre.blur_sigma = 0.5;
  return o;
}

ArchConfig small_arch() {
  ArchConfig a;
  a.t_frames = kT;
  a.frame_h = 8;
  a.frame_w = 4;
  a.conv1_ch = 2;
  a.conv2_ch = 3;
  a.proj_dim = 6;
  a.lstm_hidden = 4;
  a.attn_dim = 3;
  a.density_dim = 2;
  a.head_hidden = 6;
  return a;
}

TrainConfig fast_train() {
  TrainConfig t;
  t.learning_rate = 1e-2;
  t.max_epochs = 300;
  t.patience = 150;
  t.batch_size = 8;
  t.seed = 3;
  return t;
}

}  // namespace

TEST_CASE("make_input shapes and to_frames") {
  const TensorData video = make_video(0, 0);
  const auto frames = to_frames(video);
  REQUIRE(frames.size() == kT);
  CHECK(frames[0].height == kH);
  CHECK(frames[0].at(3, 5) == doctest::Approx(0.1));

  const DataOptions o = small_opts();
  const SampleInput in = make_input(video, o.roi, o.pre, 900.0);
  REQUIRE(in.frames.size() == kT);
  CHECK(in.frames[0].size() == 8 * 4);
  CHECK(in.density == 900.0);
}

TEST_CASE("training overfits a tiny separable corpus") {
  const Corpus c = make_corpus();
  const auto res = train(fast_train(), small_arch(), c.manifest, c.dir, small_opts());
  REQUIRE_FALSE(res.loss_history.empty());
  CHECK(res.best_loss < 0.01 * res.loss_history.front());
  CHECK(res.best_loss < 0.05);
  CHECK(res.best_epoch < int(res.loss_history.size()));
  CHECK(res.checkpoint.has_opt);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Corpus c = make_corpus();
  TrainConfig cfg = fast_train();
  cfg.max_epochs = 40;
  cfg.patience = 40;
  const std::string hist = "/tmp/test_pipeline_history.tsv";
  const auto a = train(cfg, small_arch(), c.manifest, c.dir, small_opts(), hist);
  const auto b = train(cfg, small_arch(), c.manifest, c.dir, small_opts());
  REQUIRE(a.loss_history.size() == b.loss_history.size());
  for (size_t i = 0; i < a.loss_history.size(); ++i)
    CHECK(a.loss_history[i] == b.loss_history[i]);

  // history file mirrors the in-memory loss curve
  std::ifstream in(hist);
  std::string line;
  std::getline(in, line);  // header
  size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == a.loss_history.size());
  std::remove(hist.c_str());
}

TEST_CASE("training rejects bad inputs") {
  const Corpus c = make_corpus();
  CHECK_THROWS_AS(train(fast_train(), small_arch(), Manifest{}, c.dir, small_opts()),
                  std::invalid_argument);
  ArchConfig wrong = small_arch();
  wrong.t_frames = kT + 1;
  CHECK_THROWS_AS(train(fast_train(), wrong, c.manifest, c.dir, small_opts()),
                  ShapeMismatchNN);
  TrainConfig bad = fast_train();
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(bad, small_arch(), c.manifest, c.dir, small_opts()),
                  std::invalid_argument);
}

TEST_CASE("inference returns one prediction per augmentation") {
  const ModelParams m = init_model(small_arch(), 1);
  const auto video = to_frames(make_video(0, 0));
  DataOptions o = small_opts();
  o.aug.max_shift = 1.5;
  o.aug.max_rotation = 0.5;
  const InferStats s = infer(m, video, o, 900.0);
  CHECK(int(s.predictions.size()) == o.aug.count);
  for (double p : s.predictions) CHECK(p > 0.0);

  const InferStats again = infer(m, video, o, 900.0);
  CHECK(s.mean_eta == again.mean_eta);
  CHECK(s.std_eta == again.std_eta);
}

TEST_CASE("zero jitter inference has exactly zero spread") {
  const ModelParams m = init_model(small_arch(), 1);
  const auto video = to_frames(make_video(1, 0));
  const InferStats s = infer(m, video, small_opts(), 900.0);
  CHECK(s.std_eta == 0.0);
  for (double p : s.predictions) CHECK(p == s.predictions[0]);
  CHECK(s.mean_eta == doctest::Approx(s.predictions[0]).epsilon(1e-15));
}

TEST_CASE("evaluate fills residual records and guards against leakage") {
  const Corpus c = make_corpus();
  const ModelParams m = init_model(small_arch(), 1);
  const auto recs = evaluate(m, c.manifest, c.dir, small_opts());
  REQUIRE(recs.size() == c.manifest.records.size());
  for (const auto& r : recs) {
    CHECK(r.rel_residual ==
          doctest::Approx((r.mean_eta - r.true_eta) / r.true_eta).epsilon(1e-12));
    CHECK(r.predictions.size() == 10);
  }
  CHECK_THROWS_AS(evaluate(m, c.manifest, c.dir, small_opts(), &c.manifest),
                  std::invalid_argument);
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
  CHECK(spearman({1, 2, 3, 4}, {2, 1, 4, 3}) == doctest::Approx(0.6));
  // ties share averaged ranks
  CHECK(spearman({1, 1, 2, 3}, {1, 1, 2, 3}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(spearman({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == doctest::Approx(2.5));
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}

namespace {

ResidualRecord rec(const std::string& id, const std::string& gid, double truth,
                   double mean) {
  ResidualRecord r;
  r.sample_id = id;
  r.viscosity_group_id = gid;
  r.true_eta = truth;
  r.mean_eta = mean;
  r.std_eta = 0.01 * mean;
  r.rel_residual = (mean - truth) / truth;
  r.predictions = {mean, mean};
  return r;
}

}  // namespace

TEST_CASE("summarize on perfect and constant predictors") {
  std::vector<ResidualRecord> perfect = {
      rec("a", "g0", 0.05, 0.05), rec("b", "g1", 1.0, 1.0), rec("c", "g2", 10.0, 10.0)};
  auto s = summarize(perfect);
  CHECK(s.median_abs_residual == 0.0);
  CHECK(s.median_abs_residual_above_0p1 == 0.0);
  CHECK(s.spearman_rho == doctest::Approx(1.0));

  std::vector<ResidualRecord> constant = {
      rec("a", "g0", 0.5, 2.0), rec("b", "g1", 1.0, 2.0), rec("c", "g2", 4.0, 2.0)};
  s = summarize(constant);
  CHECK(s.spearman_rho == 0.0);
  CHECK(s.median_abs_residual == doctest::Approx(1.0));  // residuals 3, 1, 0.5
}

TEST_CASE("report writes a roundtrippable residual table") {
  const std::string dir = "/tmp/test_pipeline_report";
  std::vector<ResidualRecord> recs = {rec("a", "g0", 0.5, 0.6),
                                      rec("b", "g1", 2.0, 1.5)};
  report(recs, dir, {{"seed", "7"}, {"preset", "desk"}});
  for (const char* name :
       {"residuals.tsv", "pairs.tsv", "summary.txt", "run_manifest.txt"})
    CHECK(std::filesystem::exists(std::filesystem::path(dir) / name));

  const auto back = read_residual_table(dir + std::string("/residuals.tsv"));
  REQUIRE(back.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].sample_id == recs[i].sample_id);
    CHECK(back[i].viscosity_group_id == recs[i].viscosity_group_id);
    CHECK(back[i].true_eta == recs[i].true_eta);
    CHECK(back[i].mean_eta == recs[i].mean_eta);
    CHECK(back[i].std_eta == recs[i].std_eta);
    CHECK(back[i].rel_residual == recs[i].rel_residual);
    CHECK(back[i].predictions == recs[i].predictions);
  }
  // the summary medians recompute from the table
  const auto s = summarize(back);
  std::vector<double> abs_res;
  for (const auto& r : back) abs_res.push_back(std::abs(r.rel_residual));
  CHECK(s.median_abs_residual == doctest::Approx(median(abs_res)).epsilon(1e-15));
  std::filesystem::remove_all(dir);
}
