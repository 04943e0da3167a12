#include "vialcv/neuralnet.hpp"

#include "vialcv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace vialcv {

void ArchConfig::validate() const {
  if (t_frames < 1 || frame_h < 4 || frame_w < 4 || conv1_ch < 1 || conv2_ch < 1 ||
      proj_dim < 1 || lstm_hidden < 1 || attn_dim < 1 || density_dim < 1 ||
      head_hidden < 1)
    throw ShapeInconsistency("ArchConfig: all dimensions must be positive");
  if (pool2_h() < 1 || pool2_w() < 1)
    throw ShapeInconsistency("ArchConfig: frame too small for two 2x2 pools");
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  return {
      {"conv1_w", &conv1_w}, {"conv1_b", &conv1_b}, {"conv2_w", &conv2_w},
      {"conv2_b", &conv2_b}, {"proj_w", &proj_w},   {"proj_b", &proj_b},
      {"lstm_fw_x", &lstm_fw_x}, {"lstm_fw_h", &lstm_fw_h}, {"lstm_fw_b", &lstm_fw_b},
      {"lstm_bw_x", &lstm_bw_x}, {"lstm_bw_h", &lstm_bw_h}, {"lstm_bw_b", &lstm_bw_b},
      {"attn_w", &attn_w}, {"attn_b", &attn_b}, {"attn_v", &attn_v},
      {"dens_w", &dens_w}, {"dens_b", &dens_b}, {"head1_w", &head1_w},
      {"head1_b", &head1_b}, {"head2_w", &head2_w}, {"head2_b", &head2_b},
  };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  auto mut = const_cast<ModelParams*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& [n, t] : named()) t->zero_grad();
}

ModelParams init_model(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams m;
  m.arch = arch;
  const int H = arch.lstm_hidden;
  m.conv1_w = Tensor({size_t(arch.conv1_ch), 1, 3, 3});
  m.conv1_b = Tensor({size_t(arch.conv1_ch)});
  m.conv2_w = Tensor({size_t(arch.conv2_ch), size_t(arch.conv1_ch), 3, 3});
  m.conv2_b = Tensor({size_t(arch.conv2_ch)});
  m.proj_w = Tensor({size_t(arch.proj_dim), size_t(arch.flat_dim())});
  m.proj_b = Tensor({size_t(arch.proj_dim)});
  m.lstm_fw_x = Tensor({size_t(4 * H), size_t(arch.proj_dim)});
  m.lstm_fw_h = Tensor({size_t(4 * H), size_t(H)});
  m.lstm_fw_b = Tensor({size_t(4 * H)});
  m.lstm_bw_x = Tensor({size_t(4 * H), size_t(arch.proj_dim)});
  m.lstm_bw_h = Tensor({size_t(4 * H), size_t(H)});
  m.lstm_bw_b = Tensor({size_t(4 * H)});
  m.attn_w = Tensor({size_t(arch.attn_dim), size_t(2 * H)});
  m.attn_b = Tensor({size_t(arch.attn_dim)});
  m.attn_v = Tensor({size_t(arch.attn_dim)});
  m.dens_w = Tensor({size_t(arch.density_dim)});
  m.dens_b = Tensor({size_t(arch.density_dim)});
  m.head1_w = Tensor({size_t(arch.head_hidden), size_t(2 * H + arch.density_dim)});
  m.head1_b = Tensor({size_t(arch.head_hidden)});
  m.head2_w = Tensor({size_t(arch.head_hidden)});
  m.head2_b = Tensor({1});

  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor& t, double fan_in, double fan_out) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-lim, lim);
    for (double& x : t.v) x = u(rng);
  };
  fill(m.conv1_w, 9.0, 9.0 * arch.conv1_ch);
  fill(m.conv2_w, 9.0 * arch.conv1_ch, 9.0 * arch.conv2_ch);
  fill(m.proj_w, arch.flat_dim(), arch.proj_dim);
  fill(m.lstm_fw_x, arch.proj_dim, 4.0 * H);
  fill(m.lstm_fw_h, H, 4.0 * H);
  fill(m.lstm_bw_x, arch.proj_dim, 4.0 * H);
  fill(m.lstm_bw_h, H, 4.0 * H);
  fill(m.attn_w, 2.0 * H, arch.attn_dim);
  fill(m.attn_v, arch.attn_dim, 1.0);
  fill(m.dens_w, 1.0, arch.density_dim);
  fill(m.head1_w, 2.0 * H + arch.density_dim, arch.head_hidden);
  fill(m.head2_w, arch.head_hidden, 1.0);
  return m;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-sample forward caches, laid out per frame / per timestep.
struct Workspace {
  const ArchConfig& a;
  int h1, w1, h2, w2, flat, P, H, A, D, HH, T;

  // conv path, per frame
  std::vector<std::vector<double>> conv1_pre;  // [T][c1*fh*fw]
  std::vector<std::vector<double>> pool1_out;  // [T][c1*h1*w1]
  std::vector<std::vector<int>> pool1_idx;
  std::vector<std::vector<double>> conv2_pre;  // [T][c2*h1*w1]
  std::vector<std::vector<double>> pool2_out;  // [T][c2*h2*w2]
  std::vector<std::vector<int>> pool2_idx;
  std::vector<std::vector<double>> proj_pre;   // [T][P]
  std::vector<std::vector<double>> feat;       // [T][P] (relu)

  // lstm, per direction per timestep
  struct LstmCache {
    std::vector<std::vector<double>> i, f, g, o, c, tanh_c, h;
  } fw, bw;

  std::vector<double> hcat;   // [T*2H]
  std::vector<double> attn_z; // [T*A]
  std::vector<double> score;  // [T]
  std::vector<double> alpha;  // [T]
  std::vector<double> ctx;    // [2H]
  std::vector<double> dens_act;  // [D]
  double dens_in = 0.0;
  std::vector<double> head_in;   // [2H+D]
  std::vector<double> h1_pre, h1_act;  // [HH]
  double out = 0.0;

  explicit Workspace(const ArchConfig& arch) : a(arch) {
    h1 = a.pool1_h(); w1 = a.pool1_w(); h2 = a.pool2_h(); w2 = a.pool2_w();
    flat = a.flat_dim(); P = a.proj_dim; H = a.lstm_hidden; A = a.attn_dim;
    D = a.density_dim; HH = a.head_hidden; T = a.t_frames;
    auto resize2 = [&](std::vector<std::vector<double>>& v, int n) {
      v.assign(T, std::vector<double>(n, 0.0));
    };
    resize2(conv1_pre, a.conv1_ch * a.frame_h * a.frame_w);
    resize2(pool1_out, a.conv1_ch * h1 * w1);
    pool1_idx.assign(T, std::vector<int>(a.conv1_ch * h1 * w1, 0));
    resize2(conv2_pre, a.conv2_ch * h1 * w1);
    resize2(pool2_out, a.conv2_ch * h2 * w2);
    pool2_idx.assign(T, std::vector<int>(a.conv2_ch * h2 * w2, 0));
    resize2(proj_pre, P);
    resize2(feat, P);
    for (auto* l : {&fw, &bw})
      for (auto* m : {&l->i, &l->f, &l->g, &l->o, &l->c, &l->tanh_c, &l->h})
        resize2(*m, H);
    hcat.assign(size_t(T) * 2 * H, 0.0);
    attn_z.assign(size_t(T) * A, 0.0);
    score.assign(T, 0.0);
    alpha.assign(T, 0.0);
    ctx.assign(2 * H, 0.0);
    dens_act.assign(D, 0.0);
    head_in.assign(2 * H + D, 0.0);
    h1_pre.assign(HH, 0.0);
    h1_act.assign(HH, 0.0);
  }
};

void conv3x3_same(const double* in, int in_ch, int h, int w, const double* weight,
                  const double* bias, int out_ch, double* out) {
  // weight layout [oc][ic][3][3]
  for (int oc = 0; oc < out_ch; ++oc) {
    double* o = out + size_t(oc) * h * w;
    const double b = bias[oc];
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) o[r * w + c] = b;
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* x = in + size_t(ic) * h * w;
      const double* k = weight + (size_t(oc) * in_ch + ic) * 9;
      for (int r = 0; r < h; ++r) {
        const int r0 = std::max(0, r - 1), r1 = std::min(h - 1, r + 1);
        for (int rr = r0; rr <= r1; ++rr) {
          const double* krow = k + (rr - r + 1) * 3;
          const double* xrow = x + rr * w;
          double* orow = o + r * w;
          for (int c = 0; c < w; ++c) {
            const int c0 = std::max(0, c - 1), c1 = std::min(w - 1, c + 1);
            double s = 0.0;
            for (int cc = c0; cc <= c1; ++cc) s += krow[cc - c + 1] * xrow[cc];
            orow[c] += s;
          }
        }
      }
    }
  }
}

void conv3x3_same_backward(const double* in, int in_ch, int h, int w,
                           const double* weight, int out_ch, const double* dout,
                           double* din, double* dweight, double* dbias) {
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* doc = dout + size_t(oc) * h * w;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) dbias[oc] += doc[r * w + c];
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* x = in + size_t(ic) * h * w;
      double* dx = din ? din + size_t(ic) * h * w : nullptr;
      const double* k = weight + (size_t(oc) * in_ch + ic) * 9;
      double* dk = dweight + (size_t(oc) * in_ch + ic) * 9;
      for (int r = 0; r < h; ++r) {
        const int r0 = std::max(0, r - 1), r1 = std::min(h - 1, r + 1);
        for (int c = 0; c < w; ++c) {
          const double d = doc[r * w + c];
          if (d == 0.0) continue;
          const int c0 = std::max(0, c - 1), c1 = std::min(w - 1, c + 1);
          for (int rr = r0; rr <= r1; ++rr)
            for (int cc = c0; cc <= c1; ++cc) {
              const int ki = (rr - r + 1) * 3 + (cc - c + 1);
              dk[ki] += d * x[rr * w + cc];
              if (dx) dx[rr * w + cc] += d * k[ki];
            }
        }
      }
    }
  }
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::max(0.0, x);
}

void maxpool2(const double* in, int ch, int h, int w, double* out, int* idx) {
  const int oh = h / 2, ow = w / 2;
  for (int c = 0; c < ch; ++c) {
    const double* x = in + size_t(c) * h * w;
    double* o = out + size_t(c) * oh * ow;
    int* id = idx + size_t(c) * oh * ow;
    for (int r = 0; r < oh; ++r)
      for (int q = 0; q < ow; ++q) {
        int best = (2 * r) * w + 2 * q;
        double bv = x[best];
        for (int dr = 0; dr < 2; ++dr)
          for (int dq = 0; dq < 2; ++dq) {
            const int i = (2 * r + dr) * w + 2 * q + dq;
            if (x[i] > bv) {
              bv = x[i];
              best = i;
            }
          }
        o[r * ow + q] = bv;
        id[r * ow + q] = best;
      }
  }
}

// y += W x, W is [rows x cols]
void matvec_acc(const double* W, int rows, int cols, const double* x, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = W + size_t(r) * cols;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] += s;
  }
}

void run_forward(const ModelParams& m, const SampleInput& input, Workspace& ws) {
  const ArchConfig& a = m.arch;
  if (int(input.frames.size()) != a.t_frames)
    throw ShapeMismatchNN("forward: sequence length differs from arch t_frames");
  const int fh = a.frame_h, fw = a.frame_w;

  std::vector<double> relu1(size_t(a.conv1_ch) * fh * fw);
  std::vector<double> relu2(size_t(a.conv2_ch) * ws.h1 * ws.w1);

  for (int t = 0; t < ws.T; ++t) {
    const auto& frame = input.frames[t];
    if (int(frame.size()) != fh * fw)
      throw ShapeMismatchNN("forward: frame size differs from arch frame_h*frame_w");

    conv3x3_same(frame.data(), 1, fh, fw, m.conv1_w.v.data(), m.conv1_b.v.data(),
                 a.conv1_ch, ws.conv1_pre[t].data());
    relu1 = ws.conv1_pre[t];
    relu_inplace(relu1);
    maxpool2(relu1.data(), a.conv1_ch, fh, fw, ws.pool1_out[t].data(),
             ws.pool1_idx[t].data());

    conv3x3_same(ws.pool1_out[t].data(), a.conv1_ch, ws.h1, ws.w1,
                 m.conv2_w.v.data(), m.conv2_b.v.data(), a.conv2_ch,
                 ws.conv2_pre[t].data());
    relu2 = ws.conv2_pre[t];
    relu_inplace(relu2);
    maxpool2(relu2.data(), a.conv2_ch, ws.h1, ws.w1, ws.pool2_out[t].data(),
             ws.pool2_idx[t].data());

    auto& pre = ws.proj_pre[t];
    std::copy(m.proj_b.v.begin(), m.proj_b.v.end(), pre.begin());
    matvec_acc(m.proj_w.v.data(), ws.P, ws.flat, ws.pool2_out[t].data(), pre.data());
    ws.feat[t] = pre;
    relu_inplace(ws.feat[t]);
  }

  // bidirectional LSTM
  auto run_dir = [&](Workspace::LstmCache& L, const Tensor& wx, const Tensor& wh,
                     const Tensor& b, bool reverse) {
    std::vector<double> h_prev(ws.H, 0.0), c_prev(ws.H, 0.0), z(4 * ws.H);
    for (int step = 0; step < ws.T; ++step) {
      const int t = reverse ? ws.T - 1 - step : step;
      std::copy(b.v.begin(), b.v.end(), z.begin());
      matvec_acc(wx.v.data(), 4 * ws.H, ws.P, ws.feat[t].data(), z.data());
      matvec_acc(wh.v.data(), 4 * ws.H, ws.H, h_prev.data(), z.data());
      for (int j = 0; j < ws.H; ++j) {
        const double iv = sigmoid(z[j]);
        const double fv = sigmoid(z[ws.H + j]);
        const double gv = std::tanh(z[2 * ws.H + j]);
        const double ov = sigmoid(z[3 * ws.H + j]);
        const double cv = fv * c_prev[j] + iv * gv;
        const double tc = std::tanh(cv);
        L.i[t][j] = iv; L.f[t][j] = fv; L.g[t][j] = gv; L.o[t][j] = ov;
        L.c[t][j] = cv; L.tanh_c[t][j] = tc; L.h[t][j] = ov * tc;
      }
      h_prev = L.h[t];
      c_prev = L.c[t];
    }
  };
  run_dir(ws.fw, m.lstm_fw_x, m.lstm_fw_h, m.lstm_fw_b, false);
  run_dir(ws.bw, m.lstm_bw_x, m.lstm_bw_h, m.lstm_bw_b, true);

  for (int t = 0; t < ws.T; ++t) {
    double* h = ws.hcat.data() + size_t(t) * 2 * ws.H;
    std::copy(ws.fw.h[t].begin(), ws.fw.h[t].end(), h);
    std::copy(ws.bw.h[t].begin(), ws.bw.h[t].end(), h + ws.H);
  }

  // temporal self-attention
  for (int t = 0; t < ws.T; ++t) {
    double* z = ws.attn_z.data() + size_t(t) * ws.A;
    std::copy(m.attn_b.v.begin(), m.attn_b.v.end(), z);
    matvec_acc(m.attn_w.v.data(), ws.A, 2 * ws.H, ws.hcat.data() + size_t(t) * 2 * ws.H, z);
    double s = 0.0;
    for (int k = 0; k < ws.A; ++k) {
      z[k] = std::tanh(z[k]);
      s += m.attn_v.v[k] * z[k];
    }
    ws.score[t] = s;
  }
  const double smax = *std::max_element(ws.score.begin(), ws.score.end());
  double ssum = 0.0;
  for (int t = 0; t < ws.T; ++t) {
    ws.alpha[t] = std::exp(ws.score[t] - smax);
    ssum += ws.alpha[t];
  }
  for (int t = 0; t < ws.T; ++t) ws.alpha[t] /= ssum;
  std::fill(ws.ctx.begin(), ws.ctx.end(), 0.0);
  for (int t = 0; t < ws.T; ++t) {
    const double* h = ws.hcat.data() + size_t(t) * 2 * ws.H;
    for (int k = 0; k < 2 * ws.H; ++k) ws.ctx[k] += ws.alpha[t] * h[k];
  }

  // density embedding
  ws.dens_in = input.density / 1000.0;
  for (int k = 0; k < ws.D; ++k)
    ws.dens_act[k] = std::tanh(m.dens_w.v[k] * ws.dens_in + m.dens_b.v[k]);

  // head
  std::copy(ws.ctx.begin(), ws.ctx.end(), ws.head_in.begin());
  std::copy(ws.dens_act.begin(), ws.dens_act.end(), ws.head_in.begin() + 2 * ws.H);
  std::copy(m.head1_b.v.begin(), m.head1_b.v.end(), ws.h1_pre.begin());
  matvec_acc(m.head1_w.v.data(), ws.HH, 2 * ws.H + ws.D, ws.head_in.data(),
             ws.h1_pre.data());
  ws.h1_act = ws.h1_pre;
  relu_inplace(ws.h1_act);
  double out = m.head2_b.v[0];
  for (int k = 0; k < ws.HH; ++k) out += m.head2_w.v[k] * ws.h1_act[k];
  ws.out = out;
}

void run_backward(ModelParams& m, const SampleInput& input, Workspace& ws,
                  double dout) {
  const ArchConfig& a = m.arch;

  // head
  std::vector<double> dh1(ws.HH);
  m.head2_b.g[0] += dout;
  for (int k = 0; k < ws.HH; ++k) {
    m.head2_w.g[k] += dout * ws.h1_act[k];
    dh1[k] = ws.h1_pre[k] > 0.0 ? dout * m.head2_w.v[k] : 0.0;
  }
  std::vector<double> dhead_in(2 * ws.H + ws.D, 0.0);
  for (int k = 0; k < ws.HH; ++k) {
    if (dh1[k] == 0.0) continue;
    m.head1_b.g[k] += dh1[k];
    const double* wr = m.head1_w.v.data() + size_t(k) * (2 * ws.H + ws.D);
    double* gr = m.head1_w.g.data() + size_t(k) * (2 * ws.H + ws.D);
    for (int c = 0; c < 2 * ws.H + ws.D; ++c) {
      gr[c] += dh1[k] * ws.head_in[c];
      dhead_in[c] += dh1[k] * wr[c];
    }
  }

  // density embedding
  for (int k = 0; k < ws.D; ++k) {
    const double dact = dhead_in[2 * ws.H + k];
    const double dpre = dact * (1.0 - ws.dens_act[k] * ws.dens_act[k]);
    m.dens_w.g[k] += dpre * ws.dens_in;
    m.dens_b.g[k] += dpre;
  }

  // attention pooling
  std::vector<double> dctx(dhead_in.begin(), dhead_in.begin() + 2 * ws.H);
  std::vector<double> dalpha(ws.T, 0.0);
  std::vector<double> dhcat(size_t(ws.T) * 2 * ws.H, 0.0);
  for (int t = 0; t < ws.T; ++t) {
    const double* h = ws.hcat.data() + size_t(t) * 2 * ws.H;
    double* dh = dhcat.data() + size_t(t) * 2 * ws.H;
    for (int k = 0; k < 2 * ws.H; ++k) {
      dalpha[t] += dctx[k] * h[k];
      dh[k] += ws.alpha[t] * dctx[k];
    }
  }
  double dot = 0.0;
  for (int t = 0; t < ws.T; ++t) dot += ws.alpha[t] * dalpha[t];
  for (int t = 0; t < ws.T; ++t) {
    const double dscore = ws.alpha[t] * (dalpha[t] - dot);
    const double* z = ws.attn_z.data() + size_t(t) * ws.A;
    const double* h = ws.hcat.data() + size_t(t) * 2 * ws.H;
    double* dh = dhcat.data() + size_t(t) * 2 * ws.H;
    for (int k = 0; k < ws.A; ++k) {
      m.attn_v.g[k] += dscore * z[k];
      const double dz = dscore * m.attn_v.v[k] * (1.0 - z[k] * z[k]);
      m.attn_b.g[k] += dz;
      const double* wr = m.attn_w.v.data() + size_t(k) * 2 * ws.H;
      double* gr = m.attn_w.g.data() + size_t(k) * 2 * ws.H;
      for (int c = 0; c < 2 * ws.H; ++c) {
        gr[c] += dz * h[c];
        dh[c] += dz * wr[c];
      }
    }
  }

  // bidirectional LSTM backward
  std::vector<std::vector<double>> dfeat(ws.T, std::vector<double>(ws.P, 0.0));
  auto back_dir = [&](Workspace::LstmCache& L, Tensor& wx, Tensor& wh, Tensor& b,
                      bool reverse, int offset) {
    std::vector<double> dh_next(ws.H, 0.0), dc_next(ws.H, 0.0), dz(4 * ws.H);
    for (int step = ws.T - 1; step >= 0; --step) {
      const int t = reverse ? ws.T - 1 - step : step;
      const int t_prev_step = step - 1;
      const int t_prev = reverse ? ws.T - 1 - t_prev_step : t_prev_step;
      const bool has_prev = step > 0;
      const double* dh_ext = dhcat.data() + size_t(t) * 2 * ws.H + offset;
      for (int j = 0; j < ws.H; ++j) {
        const double dh = dh_ext[j] + dh_next[j];
        const double tc = L.tanh_c[t][j];
        const double dov = dh * tc;
        double dc = dh * L.o[t][j] * (1.0 - tc * tc) + dc_next[j];
        const double c_prev = has_prev ? L.c[t_prev][j] : 0.0;
        const double div = dc * L.g[t][j];
        const double dfv = dc * c_prev;
        const double dgv = dc * L.i[t][j];
        dc_next[j] = dc * L.f[t][j];
        dz[j] = div * L.i[t][j] * (1.0 - L.i[t][j]);
        dz[ws.H + j] = dfv * L.f[t][j] * (1.0 - L.f[t][j]);
        dz[2 * ws.H + j] = dgv * (1.0 - L.g[t][j] * L.g[t][j]);
        dz[3 * ws.H + j] = dov * L.o[t][j] * (1.0 - L.o[t][j]);
      }
      const double* h_prev = has_prev ? L.h[t_prev].data() : nullptr;
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      for (int r = 0; r < 4 * ws.H; ++r) {
        const double d = dz[r];
        if (d == 0.0) continue;
        b.g[r] += d;
        const double* wxr = wx.v.data() + size_t(r) * ws.P;
        double* gxr = wx.g.data() + size_t(r) * ws.P;
        const double* ft = ws.feat[t].data();
        double* df = dfeat[t].data();
        for (int c = 0; c < ws.P; ++c) {
          gxr[c] += d * ft[c];
          df[c] += d * wxr[c];
        }
        if (h_prev) {
          const double* whr = wh.v.data() + size_t(r) * ws.H;
          double* ghr = wh.g.data() + size_t(r) * ws.H;
          for (int c = 0; c < ws.H; ++c) {
            ghr[c] += d * h_prev[c];
            dh_next[c] += d * whr[c];
          }
        } else {
          double* ghr = wh.g.data() + size_t(r) * ws.H;
          (void)ghr;  // zero initial state contributes nothing
        }
      }
    }
  };
  back_dir(ws.fw, m.lstm_fw_x, m.lstm_fw_h, m.lstm_fw_b, false, 0);
  back_dir(ws.bw, m.lstm_bw_x, m.lstm_bw_h, m.lstm_bw_b, true, ws.H);

  // conv path backward, per frame
  const int fh = a.frame_h, fw = a.frame_w;
  std::vector<double> dproj_pre(ws.P), dflat(ws.flat), drelu2(size_t(a.conv2_ch) * ws.h1 * ws.w1),
      dconv2_pre(drelu2.size()), dpool1(size_t(a.conv1_ch) * ws.h1 * ws.w1),
      drelu1(size_t(a.conv1_ch) * fh * fw), dconv1_pre(drelu1.size());
  for (int t = 0; t < ws.T; ++t) {
    for (int k = 0; k < ws.P; ++k)
      dproj_pre[k] = ws.proj_pre[t][k] > 0.0 ? dfeat[t][k] : 0.0;
    std::fill(dflat.begin(), dflat.end(), 0.0);
    for (int r = 0; r < ws.P; ++r) {
      const double d = dproj_pre[r];
      if (d == 0.0) continue;
      m.proj_b.g[r] += d;
      const double* wr = m.proj_w.v.data() + size_t(r) * ws.flat;
      double* gr = m.proj_w.g.data() + size_t(r) * ws.flat;
      const double* x = ws.pool2_out[t].data();
      for (int c = 0; c < ws.flat; ++c) {
        gr[c] += d * x[c];
        dflat[c] += d * wr[c];
      }
    }
    // pool2 scatter
    std::fill(drelu2.begin(), drelu2.end(), 0.0);
    for (int c = 0; c < a.conv2_ch; ++c)
      for (int i = 0; i < ws.h2 * ws.w2; ++i) {
        const int src = c * ws.h2 * ws.w2 + i;
        drelu2[size_t(c) * ws.h1 * ws.w1 + ws.pool2_idx[t][src]] += dflat[src];
      }
    for (size_t i = 0; i < drelu2.size(); ++i)
      dconv2_pre[i] = ws.conv2_pre[t][i] > 0.0 ? drelu2[i] : 0.0;
    std::fill(dpool1.begin(), dpool1.end(), 0.0);
    conv3x3_same_backward(ws.pool1_out[t].data(), a.conv1_ch, ws.h1, ws.w1,
                          m.conv2_w.v.data(), a.conv2_ch, dconv2_pre.data(),
                          dpool1.data(), m.conv2_w.g.data(), m.conv2_b.g.data());
    // pool1 scatter
    std::fill(drelu1.begin(), drelu1.end(), 0.0);
    for (int c = 0; c < a.conv1_ch; ++c)
      for (int i = 0; i < ws.h1 * ws.w1; ++i) {
        const int src = c * ws.h1 * ws.w1 + i;
        drelu1[size_t(c) * fh * fw + ws.pool1_idx[t][src]] += dpool1[src];
      }
    for (size_t i = 0; i < drelu1.size(); ++i)
      dconv1_pre[i] = ws.conv1_pre[t][i] > 0.0 ? drelu1[i] : 0.0;
    conv3x3_same_backward(input.frames[t].data(), 1, fh, fw, m.conv1_w.v.data(),
                          a.conv1_ch, dconv1_pre.data(), nullptr,
                          m.conv1_w.g.data(), m.conv1_b.g.data());
  }
}

}  // namespace

ForwardResult forward(const ModelParams& m, const SampleInput& input) {
  Workspace ws(m.arch);
  run_forward(m, input, ws);
  return {ws.out, ws.alpha};
}

ForwardResult forward_backward(ModelParams& m, const SampleInput& input,
                               double upstream) {
  Workspace ws(m.arch);
  run_forward(m, input, ws);
  run_backward(m, input, ws, upstream);
  return {ws.out, ws.alpha};
}

double loss_mse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ShapeMismatchNN("loss_mse: batch shapes differ");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / double(pred.size());
}

double backward_batch(ModelParams& m, const std::vector<SampleInput>& inputs,
                      const std::vector<double>& targets) {
  if (inputs.size() != targets.size() || inputs.empty())
    throw ShapeMismatchNN("backward_batch: batch shapes differ");
  const double n = double(inputs.size());
  std::vector<double> preds(inputs.size());
  double loss = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    // two-pass: forward to get the prediction, then backward with the MSE pull
    Workspace ws(m.arch);
    run_forward(m, inputs[i], ws);
    preds[i] = ws.out;
    const double d = ws.out - targets[i];
    loss += d * d;
    run_backward(m, inputs[i], ws, 2.0 * d / n);
  }
  return loss / n;
}

AdamState AdamState::for_model(const ModelParams& m) {
  AdamState s;
  for (const auto& [name, t] : m.named()) {
    s.m1.emplace_back(t->size(), 0.0);
    s.m2.emplace_back(t->size(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& m, AdamState& state, double lr) {
  auto params = m.named();
  if (state.m1.size() != params.size())
    throw ShapeMismatchNN("adam_step: state does not match model");
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, double(state.step));
  const double c2 = 1.0 - std::pow(b2, double(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p].second;
    auto& m1 = state.m1[p];
    auto& m2 = state.m2[p];
    if (m1.size() != t.size()) throw ShapeMismatchNN("adam_step: moment shape mismatch");
    for (size_t i = 0; i < t.size(); ++i) {
      const double g = t.g[i];
      m1[i] = b1 * m1[i] + (1.0 - b1) * g;
      m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
      const double mhat = m1[i] / c1;
      const double vhat = m2[i] / c2;
      t.v[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

GradCheckReport grad_check(ModelParams& m, const std::vector<SampleInput>& inputs,
                           const std::vector<double>& targets) {
  // analytic gradients
  m.zero_grad();
  backward_batch(m, inputs, targets);
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : m.named()) analytic.push_back(t->g);

  auto eval_loss = [&]() {
    std::vector<double> preds;
    preds.reserve(inputs.size());
    for (const auto& s : inputs) preds.push_back(forward(m, s).prediction);
    return loss_mse(preds, targets);
  };

  const double step = 1e-6;
  GradCheckReport report;
  auto params = m.named();
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p].second;
    GradCheckEntry entry{params[p].first, 0.0};
    for (size_t i = 0; i < t.size(); ++i) {
      const double saved = t.v[i];
      t.v[i] = saved + step;
      const double lp = eval_loss();
      t.v[i] = saved - step;
      const double lm = eval_loss();
      t.v[i] = saved;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = analytic[p][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(fd - an) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

namespace {

constexpr char kModelMagic[4] = {'V', 'M', 'D', 'L'};

void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw TruncatedFile("checkpoint truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void put_u64le(std::ostream& out, std::uint64_t v) {
  put_u32le(out, std::uint32_t(v & 0xffffffffull));
  put_u32le(out, std::uint32_t(v >> 32));
}

std::uint64_t get_u64le(std::istream& in) {
  const std::uint64_t lo = get_u32le(in);
  const std::uint64_t hi = get_u32le(in);
  return lo | (hi << 32);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64le(out, bits);
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64le(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32le(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string get_str(std::istream& in) {
  const std::uint32_t n = get_u32le(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw TruncatedFile("checkpoint truncated in string");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kModelMagic, 4);
  put_u32le(out, kCheckpointVersion);
  const ArchConfig& a = ckpt.params.arch;
  for (int v : {a.t_frames, a.frame_h, a.frame_w, a.conv1_ch, a.conv2_ch, a.proj_dim,
                a.lstm_hidden, a.attn_dim, a.density_dim, a.head_hidden})
    put_u32le(out, std::uint32_t(v));
  auto named = ckpt.params.named();
  put_u32le(out, std::uint32_t(named.size()));
  for (const auto& [name, t] : named) {
    put_str(out, name);
    put_u32le(out, std::uint32_t(t->shape.size()));
    for (auto s : t->shape) put_u64le(out, s);
    for (double v : t->v) put_f64(out, v);
  }
  put_u32le(out, ckpt.has_opt ? 1 : 0);
  if (ckpt.has_opt) {
    put_u64le(out, ckpt.opt.step);
    put_f64(out, ckpt.opt.beta1);
    put_f64(out, ckpt.opt.beta2);
    put_f64(out, ckpt.opt.epsilon);
    for (const auto& m : {&ckpt.opt.m1, &ckpt.opt.m2}) {
      put_u32le(out, std::uint32_t(m->size()));
      for (const auto& vec : *m) {
        put_u64le(out, vec.size());
        for (double v : vec) put_f64(out, v);
      }
    }
  }
  put_str(out, ckpt.config_echo);
  put_u64le(out, ckpt.rng_seed);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in) throw TruncatedFile("load_checkpoint: truncated header");
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    throw BadMagic("load_checkpoint: bad magic in " + path);
  if (get_u32le(in) != kCheckpointVersion)
    throw VersionMismatch("load_checkpoint: unsupported version");
  ArchConfig a;
  int* fields[] = {&a.t_frames, &a.frame_h, &a.frame_w, &a.conv1_ch, &a.conv2_ch,
                   &a.proj_dim, &a.lstm_hidden, &a.attn_dim, &a.density_dim,
                   &a.head_hidden};
  for (int* f : fields) *f = int(get_u32le(in));
  Checkpoint ckpt;
  ckpt.params = init_model(a, 0);
  const std::uint32_t n_tensors = get_u32le(in);
  auto named = ckpt.params.named();
  if (n_tensors != named.size())
    throw VersionMismatch("load_checkpoint: tensor count mismatch");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = get_str(in);
    Tensor* t = nullptr;
    for (auto& [n, p] : named)
      if (n == name) t = p;
    if (!t) throw VersionMismatch("load_checkpoint: unknown tensor " + name);
    const std::uint32_t ndim = get_u32le(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& s : shape) s = size_t(get_u64le(in));
    if (shape != t->shape)
      throw VersionMismatch("load_checkpoint: shape mismatch for " + name);
    for (double& v : t->v) v = get_f64(in);
  }
  ckpt.has_opt = get_u32le(in) != 0;
  if (ckpt.has_opt) {
    ckpt.opt.step = get_u64le(in);
    ckpt.opt.beta1 = get_f64(in);
    ckpt.opt.beta2 = get_f64(in);
    ckpt.opt.epsilon = get_f64(in);
    for (auto* m : {&ckpt.opt.m1, &ckpt.opt.m2}) {
      m->resize(get_u32le(in));
      for (auto& vec : *m) {
        vec.resize(get_u64le(in));
        for (double& v : vec) v = get_f64(in);
      }
    }
  }
  ckpt.config_echo = get_str(in);
  ckpt.rng_seed = get_u64le(in);
  return ckpt;
}

}  // namespace vialcv
