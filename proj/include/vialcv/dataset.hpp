#ifndef VIALCV_DATASET_HPP
#define VIALCV_DATASET_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vialcv {

/// T x H x W float32 tensor file payload, held as double in memory.
struct TensorData {
  std::uint32_t t = 0, h = 0, w = 0;
  std::vector<double> values;  ///< frame-major, row-major
};

struct BadMagic : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncatedFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GroupTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooManyHoldouts : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;

/// Binary layout: magic "VIAL", version u32, T,H,W u32 (little-endian),
/// then T*H*W float32 values.
void write_sample(const std::string& path, const TensorData& data);
TensorData read_sample(const std::string& path);

struct SampleRecord {
  std::string sample_id;
  double true_viscosity = 0.0;  ///< [Pa.s]
  double density = 0.0;         ///< [kg/m^3]
  std::string protocol_hash;
  std::string tensor_path;
  std::string viscosity_group_id;
};

struct Manifest {
  int schema_version = 1;
  std::map<std::string, std::string> protocol_params;
  std::vector<SampleRecord> records;

  void validate() const;
  std::vector<std::string> group_ids() const;  ///< unique, in first-seen order
};

/// Tab-separated records with '#'-prefixed header comments.
void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

struct SplitResult {
  Manifest train, test;
};

/// Seeded per-group random partition; default 80/20 with at least one test
/// sample per group.
SplitResult split_aleatoric(const Manifest& manifest, std::uint64_t seed,
                            double test_fraction = 0.2);

/// Holds out whole viscosity groups, greedily maximizing the log10-viscosity
/// gap to the nearest retained group. The global extremes are never held out
/// (interpolation only).
SplitResult split_epistemic(const Manifest& manifest, int n_holdout);

}  // namespace vialcv

#endif  // VIALCV_DATASET_HPP
