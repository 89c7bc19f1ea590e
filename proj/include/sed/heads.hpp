#pragma once

// Shallow classification heads: depth 1 (linear) or depth 2
// (linear -> activation -> linear), with hand-written reverse mode.
//
// Flattened parameter order is (W1 row-major, b1, W2 row-major, b2), with
// each weight matrix stored as [out][in] so that z = W x + b.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace sed {

enum class Activation : std::uint8_t { relu = 0, gelu = 1 };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct HeadConfig {
  int depth = 1;
  std::uint32_t in_dim = 0;
  std::uint32_t hidden_dim = 0;  // depth 2 only
  std::uint32_t out_dim = 0;
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;

  // Throws std::invalid_argument if depth or dims are invalid.
  void validate() const;
  std::size_t param_count() const;

  // Same parameter layout (ignores init_seed).
  bool same_shape(const HeadConfig& other) const;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

class HeadParams {
 public:
  HeadParams() = default;
  // Zero-filled parameters for `config`.
  explicit HeadParams(const HeadConfig& config);

  const HeadConfig& config() const { return config_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<const double> w1() const;
  std::span<const double> b1() const;
  std::span<const double> w2() const;  // empty for depth 1
  std::span<const double> b2() const;  // empty for depth 1
  std::span<double> w1();
  std::span<double> b1();
  std::span<double> w2();
  std::span<double> b2();

  friend bool operator==(const HeadParams&, const HeadParams&) = default;

 private:
  HeadConfig config_;
  std::vector<double> values_;
};

// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases 0; deterministic in
// config.init_seed.
HeadParams init_head(const HeadConfig& config);

// Intermediate values of one forward pass.
struct ForwardCache {
  HeadConfig config;
  std::vector<double> input;
  std::vector<double> hidden_pre;  // depth 2 only
  std::vector<double> hidden;      // depth 2 only
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardCache cache;
};

ForwardResult forward(const HeadParams& params, std::span<const double> x);

struct HeadGradient {
  std::vector<double> params;  // flattened, same layout as HeadParams
  std::vector<double> input;   // dL/dx
};

HeadGradient backward(const HeadParams& params, const ForwardCache& cache,
                      std::span<const double> dlogits);

// Row-batched variants used by the trainer. `x` is rows*in_dim, `logits`
// rows*out_dim. Hidden buffers (rows*hidden_dim) are written by forward and
// read by backward; they are unused for depth 1.
struct BatchWorkspace {
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
};

void forward_batch(const HeadParams& params, std::span<const double> x, std::size_t rows,
                   std::span<double> logits, BatchWorkspace& work);

// Accumulates dL/dparams over the batch (rows in ascending order) into
// `grad`, which must be pre-sized to param_count().
void backward_batch(const HeadParams& params, std::span<const double> x, std::size_t rows,
                    const BatchWorkspace& work, std::span<const double> dlogits,
                    std::span<double> grad);

std::vector<double> flatten(const HeadParams& params);
HeadParams unflatten(const HeadConfig& config, std::span<const double> flat);

// SEDC checkpoint: "SEDC", u32 version=1, u32 M, HeadConfig (u8 depth,
// u32 in, u32 hidden, u32 out, u8 activation, u64 init_seed), then M
// float64 parameter blocks of param_count() values each.
struct CheckpointData {
  HeadConfig config;
  std::vector<HeadParams> members;
};

void write_checkpoint(const std::filesystem::path& path, const HeadConfig& config,
                      std::span<const HeadParams> members);
CheckpointData read_checkpoint(const std::filesystem::path& path);

}  // namespace sed
