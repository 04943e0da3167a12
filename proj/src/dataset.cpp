#include "vialcv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace vialcv {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'A', 'L'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw TruncatedFile("tensor file truncated in header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_sample(const std::string& path, const TensorData& data) {
  if (data.values.size() != size_t(data.t) * data.h * data.w)
    throw ShapeMismatch("write_sample: value count does not match T*H*W");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_sample: cannot open " + path);
  out.write(kMagic, 4);
  put_u32(out, kTensorFormatVersion);
  put_u32(out, data.t);
  put_u32(out, data.h);
  put_u32(out, data.w);
  for (double v : data.values) put_f32(out, float(v));
  if (!out) throw std::runtime_error("write_sample: write failed for " + path);
}

TensorData read_sample(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_sample: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in) throw TruncatedFile("read_sample: truncated header in " + path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw BadMagic("read_sample: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kTensorFormatVersion)
    throw VersionMismatch("read_sample: unsupported version in " + path);
  TensorData data;
  data.t = get_u32(in);
  data.h = get_u32(in);
  data.w = get_u32(in);
  const size_t n = size_t(data.t) * data.h * data.w;
  data.values.resize(n);
  for (size_t i = 0; i < n; ++i) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw TruncatedFile("read_sample: truncated payload in " + path);
    std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
                         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
    float v;
    std::memcpy(&v, &bits, 4);
    data.values[i] = v;
  }
  return data;
}

void Manifest::validate() const {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!(r.true_viscosity > 0.0))
      throw std::invalid_argument("Manifest: true_viscosity must be > 0");
    if (!ids.insert(r.sample_id).second)
      throw std::invalid_argument("Manifest: duplicate sample_id " + r.sample_id);
  }
}

std::vector<std::string> Manifest::group_ids() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.viscosity_group_id).second) out.push_back(r.viscosity_group_id);
  return out;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << "# vialcv manifest schema=" << manifest.schema_version << "\n";
  for (const auto& [k, v] : manifest.protocol_params)
    out << "# param " << k << "=" << v << "\n";
  out << "# sample_id\ttrue_viscosity\tdensity\tprotocol_hash\ttensor_path\tviscosity_group_id\n";
  out.precision(17);
  for (const auto& r : manifest.records)
    out << r.sample_id << '\t' << r.true_viscosity << '\t' << r.density << '\t'
        << r.protocol_hash << '\t' << r.tensor_path << '\t'
        << r.viscosity_group_id << "\n";
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string word;
      ss >> word;
      if (word == "vialcv") {
        std::string tok;
        while (ss >> tok)
          if (tok.rfind("schema=", 0) == 0) m.schema_version = std::stoi(tok.substr(7));
      } else if (word == "param") {
        std::string kv;
        ss >> kv;
        const auto eq = kv.find('=');
        if (eq != std::string::npos)
          m.protocol_params[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      continue;
    }
    std::istringstream ss(line);
    SampleRecord r;
    std::string eta, rho;
    if (!std::getline(ss, r.sample_id, '\t') || !std::getline(ss, eta, '\t') ||
        !std::getline(ss, rho, '\t') || !std::getline(ss, r.protocol_hash, '\t') ||
        !std::getline(ss, r.tensor_path, '\t') ||
        !std::getline(ss, r.viscosity_group_id))
      throw std::runtime_error("read_manifest: malformed record: " + line);
    r.true_viscosity = std::stod(eta);
    r.density = std::stod(rho);
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

SplitResult split_aleatoric(const Manifest& manifest, std::uint64_t seed,
                            double test_fraction) {
  manifest.validate();
  SplitResult res;
  res.train.schema_version = res.test.schema_version = manifest.schema_version;
  res.train.protocol_params = res.test.protocol_params = manifest.protocol_params;

  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < manifest.records.size(); ++i)
    groups[manifest.records[i].viscosity_group_id].push_back(i);

  for (auto& [gid, idx] : groups) {
    if (idx.size() < 2)
      throw GroupTooSmall("split_aleatoric: group " + gid + " has < 2 samples");
    std::seed_seq sseq{seed, std::uint64_t(std::hash<std::string>{}(gid))};
    std::mt19937_64 rng(sseq);
    std::shuffle(idx.begin(), idx.end(), rng);
    const size_t n_test =
        std::max<size_t>(1, size_t(std::lround(test_fraction * double(idx.size()))));
    for (size_t k = 0; k < idx.size(); ++k) {
      (k < n_test ? res.test : res.train).records.push_back(manifest.records[idx[k]]);
    }
  }
  auto by_id = [](const SampleRecord& a, const SampleRecord& b) {
    return a.sample_id < b.sample_id;
  };
  std::sort(res.train.records.begin(), res.train.records.end(), by_id);
  std::sort(res.test.records.begin(), res.test.records.end(), by_id);
  return res;
}

SplitResult split_epistemic(const Manifest& manifest, int n_holdout) {
  manifest.validate();
  std::map<std::string, double> group_eta;
  for (const auto& r : manifest.records) group_eta[r.viscosity_group_id] = r.true_viscosity;
  const int n_groups = int(group_eta.size());
  if (n_holdout < 0 || (n_holdout > 0 && n_holdout >= n_groups - 2))
    throw TooManyHoldouts("split_epistemic: n_holdout must be < groups - 2");

  struct G {
    std::string id;
    double log_eta;
  };
  std::vector<G> gs;
  for (const auto& [id, eta] : group_eta) gs.push_back({id, std::log10(eta)});
  std::sort(gs.begin(), gs.end(), [](const G& a, const G& b) { return a.log_eta < b.log_eta; });

  const double center = (gs.front().log_eta + gs.back().log_eta) / 2.0;
  std::vector<bool> held(gs.size(), false);
  for (int pick = 0; pick < n_holdout; ++pick) {
    // Greedy pick maximizing the log-eta gap to the nearest retained group.
    // Tie-breaks, in order: farthest from the already held-out groups (so
    // ties on a uniform grid spread out instead of clustering), closest to
    // the center of the log range, lowest index.
    int best = -1;
    double best_gap = -1.0, best_spread = -1.0;
    double best_center = std::numeric_limits<double>::max();
    for (size_t c = 1; c + 1 < gs.size(); ++c) {  // extremes excluded
      if (held[c]) continue;
      double gap = std::numeric_limits<double>::max();
      double spread = std::numeric_limits<double>::max();
      for (size_t j = 0; j < gs.size(); ++j) {
        if (j == c) continue;
        const double d = std::abs(gs[j].log_eta - gs[c].log_eta);
        (held[j] ? spread : gap) = std::min(held[j] ? spread : gap, d);
      }
      const double cdist = std::abs(gs[c].log_eta - center);
      const bool better =
          gap > best_gap + 1e-15 ||
          (std::abs(gap - best_gap) <= 1e-15 &&
           (spread > best_spread + 1e-15 ||
            (std::abs(spread - best_spread) <= 1e-15 && cdist < best_center - 1e-15)));
      if (better) {
        best = int(c);
        best_gap = gap;
        best_spread = spread;
        best_center = cdist;
      }
    }
    if (best < 0) throw TooManyHoldouts("split_epistemic: no eligible group left");
    held[best] = true;
  }

  std::set<std::string> held_ids;
  for (size_t i = 0; i < gs.size(); ++i)
    if (held[i]) held_ids.insert(gs[i].id);

  SplitResult res;
  res.train.schema_version = res.test.schema_version = manifest.schema_version;
  res.train.protocol_params = res.test.protocol_params = manifest.protocol_params;
  for (const auto& r : manifest.records)
    (held_ids.count(r.viscosity_group_id) ? res.test : res.train).records.push_back(r);
  return res;
}

}  // namespace vialcv
