#include "sed/heads.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sed/binary_io.hpp"
#include "sed/core_math.hpp"
#include "sed/rng.hpp"

namespace sed {

std::string_view to_string(Activation a) {
  return a == Activation::gelu ? "gelu" : "relu";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void HeadConfig::validate() const {
  if (depth != 1 && depth != 2) throw std::invalid_argument("head depth must be 1 or 2");
  if (in_dim < 1 || out_dim < 1) throw std::invalid_argument("head dims must be >= 1");
  if (depth == 2 && hidden_dim < 1) throw std::invalid_argument("depth-2 head needs hidden_dim >= 1");
}

std::size_t HeadConfig::param_count() const {
  const std::size_t d = in_dim;
  const std::size_t c = out_dim;
  if (depth == 1) return d * c + c;
  const std::size_t h = hidden_dim;
  return d * h + h + h * c + c;
}

bool HeadConfig::same_shape(const HeadConfig& other) const {
  return depth == other.depth && in_dim == other.in_dim && out_dim == other.out_dim &&
         activation == other.activation && (depth == 1 || hidden_dim == other.hidden_dim);
}

HeadParams::HeadParams(const HeadConfig& config) : config_(config) {
  config_.validate();
  if (config_.depth == 1) config_.hidden_dim = 0;
  values_.assign(config_.param_count(), 0.0);
}

namespace {

// Sizes of the four blocks in flattened order.
struct Layout {
  std::size_t w1, b1, w2, b2;
};

Layout layout_of(const HeadConfig& cfg) {
  const std::size_t first_out = cfg.depth == 1 ? cfg.out_dim : cfg.hidden_dim;
  if (cfg.depth == 1) return {first_out * cfg.in_dim, first_out, 0, 0};
  return {first_out * cfg.in_dim, first_out, std::size_t{cfg.out_dim} * cfg.hidden_dim,
          cfg.out_dim};
}

}  // namespace

std::span<const double> HeadParams::w1() const {
  return std::span<const double>(values_).subspan(0, layout_of(config_).w1);
}
std::span<const double> HeadParams::b1() const {
  const auto l = layout_of(config_);
  return std::span<const double>(values_).subspan(l.w1, l.b1);
}
std::span<const double> HeadParams::w2() const {
  const auto l = layout_of(config_);
  return std::span<const double>(values_).subspan(l.w1 + l.b1, l.w2);
}
std::span<const double> HeadParams::b2() const {
  const auto l = layout_of(config_);
  return std::span<const double>(values_).subspan(l.w1 + l.b1 + l.w2, l.b2);
}
std::span<double> HeadParams::w1() {
  return std::span<double>(values_).subspan(0, layout_of(config_).w1);
}
std::span<double> HeadParams::b1() {
  const auto l = layout_of(config_);
  return std::span<double>(values_).subspan(l.w1, l.b1);
}
std::span<double> HeadParams::w2() {
  const auto l = layout_of(config_);
  return std::span<double>(values_).subspan(l.w1 + l.b1, l.w2);
}
std::span<double> HeadParams::b2() {
  const auto l = layout_of(config_);
  return std::span<double>(values_).subspan(l.w1 + l.b1 + l.w2, l.b2);
}

HeadParams init_head(const HeadConfig& config) {
  HeadParams params(config);
  Rng rng(config.init_seed);
  const double bound1 = std::sqrt(6.0 / config.in_dim);
  for (double& w : params.w1()) w = rng.uniform(-bound1, bound1);
  if (config.depth == 2) {
    const double bound2 = std::sqrt(6.0 / config.hidden_dim);
    for (double& w : params.w2()) w = rng.uniform(-bound2, bound2);
  }
  return params;
}

namespace {

double activate(Activation a, double x) { return a == Activation::gelu ? gelu(x) : relu(x); }
double activate_derivative(Activation a, double x) {
  return a == Activation::gelu ? gelu_derivative(x) : relu_derivative(x);
}

void check_input(const HeadConfig& cfg, std::size_t got, std::size_t rows) {
  if (got != rows * cfg.in_dim) {
    throw std::invalid_argument("input dimension mismatch: expected " +
                                std::to_string(rows * cfg.in_dim) + " values, got " +
                                std::to_string(got));
  }
}

// dW += g x^T, db += g for one row; optionally dx = W^T g.
void linear_backward(std::span<const double> weights, std::span<const double> x,
                     std::span<const double> g, double* dw, double* db, double* dx) {
  const std::size_t in = x.size();
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r];
    db[r] += gr;
    if (gr == 0.0) continue;
    double* dw_row = dw + r * in;
    for (std::size_t c = 0; c < in; ++c) dw_row[c] += gr * x[c];
  }
  if (dx != nullptr) {
    for (std::size_t c = 0; c < in; ++c) dx[c] = 0.0;
    for (std::size_t r = 0; r < g.size(); ++r) {
      const double* w_row = weights.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) dx[c] += w_row[c] * g[r];
    }
  }
}

}  // namespace

void forward_batch(const HeadParams& params, std::span<const double> x, std::size_t rows,
                   std::span<double> logits, BatchWorkspace& work) {
  const HeadConfig& cfg = params.config();
  check_input(cfg, x.size(), rows);
  if (logits.size() != rows * cfg.out_dim) throw std::invalid_argument("logit buffer size mismatch");
  const std::size_t d = cfg.in_dim;
  const std::size_t c = cfg.out_dim;
  if (cfg.depth == 1) {
    for (std::size_t i = 0; i < rows; ++i) {
      affine(params.w1(), params.b1(), x.subspan(i * d, d), logits.subspan(i * c, c));
    }
    return;
  }
  const std::size_t h = cfg.hidden_dim;
  work.hidden_pre.resize(rows * h);
  work.hidden.resize(rows * h);
  for (std::size_t i = 0; i < rows; ++i) {
    std::span<double> pre(work.hidden_pre.data() + i * h, h);
    std::span<double> act(work.hidden.data() + i * h, h);
    affine(params.w1(), params.b1(), x.subspan(i * d, d), pre);
    for (std::size_t k = 0; k < h; ++k) act[k] = activate(cfg.activation, pre[k]);
    affine(params.w2(), params.b2(), act, logits.subspan(i * c, c));
  }
}

void backward_batch(const HeadParams& params, std::span<const double> x, std::size_t rows,
                    const BatchWorkspace& work, std::span<const double> dlogits,
                    std::span<double> grad) {
  const HeadConfig& cfg = params.config();
  check_input(cfg, x.size(), rows);
  if (dlogits.size() != rows * cfg.out_dim) throw std::invalid_argument("dlogits size mismatch");
  if (grad.size() != cfg.param_count()) throw std::invalid_argument("gradient buffer size mismatch");
  const std::size_t d = cfg.in_dim;
  const std::size_t c = cfg.out_dim;
  const auto l = layout_of(cfg);
  double* dw1 = grad.data();
  double* db1 = dw1 + l.w1;
  if (cfg.depth == 1) {
    for (std::size_t i = 0; i < rows; ++i) {
      linear_backward(params.w1(), x.subspan(i * d, d), dlogits.subspan(i * c, c), dw1, db1,
                      nullptr);
    }
    return;
  }
  const std::size_t h = cfg.hidden_dim;
  if (work.hidden.size() != rows * h || work.hidden_pre.size() != rows * h) {
    throw std::invalid_argument("workspace does not match this batch");
  }
  double* dw2 = db1 + l.b1;
  double* db2 = dw2 + l.w2;
  std::vector<double> dhidden(h);
  for (std::size_t i = 0; i < rows; ++i) {
    std::span<const double> pre(work.hidden_pre.data() + i * h, h);
    std::span<const double> act(work.hidden.data() + i * h, h);
    linear_backward(params.w2(), act, dlogits.subspan(i * c, c), dw2, db2, dhidden.data());
    for (std::size_t k = 0; k < h; ++k) dhidden[k] *= activate_derivative(cfg.activation, pre[k]);
    linear_backward(params.w1(), x.subspan(i * d, d), dhidden, dw1, db1, nullptr);
  }
}

ForwardResult forward(const HeadParams& params, std::span<const double> x) {
  const HeadConfig& cfg = params.config();
  check_input(cfg, x.size(), 1);
  if (!all_finite(x)) throw std::invalid_argument("forward: non-finite input");
  ForwardResult result;
  result.logits.resize(cfg.out_dim);
  BatchWorkspace work;
  forward_batch(params, x, 1, result.logits, work);
  result.cache.config = cfg;
  result.cache.input.assign(x.begin(), x.end());
  result.cache.hidden_pre = std::move(work.hidden_pre);
  result.cache.hidden = std::move(work.hidden);
  return result;
}

HeadGradient backward(const HeadParams& params, const ForwardCache& cache,
                      std::span<const double> dlogits) {
  const HeadConfig& cfg = params.config();
  if (!cfg.same_shape(cache.config) || cache.input.size() != cfg.in_dim) {
    throw std::invalid_argument("backward: cache does not match parameters");
  }
  if (dlogits.size() != cfg.out_dim) throw std::invalid_argument("backward: dlogits size mismatch");
  HeadGradient grad;
  grad.params.assign(cfg.param_count(), 0.0);
  grad.input.assign(cfg.in_dim, 0.0);
  const auto l = layout_of(cfg);
  double* dw1 = grad.params.data();
  double* db1 = dw1 + l.w1;
  if (cfg.depth == 1) {
    linear_backward(params.w1(), cache.input, dlogits, dw1, db1, grad.input.data());
    return grad;
  }
  const std::size_t h = cfg.hidden_dim;
  if (cache.hidden.size() != h || cache.hidden_pre.size() != h) {
    throw std::invalid_argument("backward: cache does not match parameters");
  }
  double* dw2 = db1 + l.b1;
  double* db2 = dw2 + l.w2;
  std::vector<double> dhidden(h);
  linear_backward(params.w2(), cache.hidden, dlogits, dw2, db2, dhidden.data());
  for (std::size_t k = 0; k < h; ++k) {
    dhidden[k] *= activate_derivative(cfg.activation, cache.hidden_pre[k]);
  }
  linear_backward(params.w1(), cache.input, dhidden, dw1, db1, grad.input.data());
  return grad;
}

std::vector<double> flatten(const HeadParams& params) {
  return {params.values().begin(), params.values().end()};
}

HeadParams unflatten(const HeadConfig& config, std::span<const double> flat) {
  HeadParams params(config);
  if (flat.size() != params.values().size()) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(params.values().size()) +
                                " values, got " + std::to_string(flat.size()));
  }
  std::copy(flat.begin(), flat.end(), params.values().begin());
  return params;
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void write_checkpoint(const std::filesystem::path& path, const HeadConfig& config,
                      std::span<const HeadParams> members) {
  config.validate();
  io::ByteWriter w;
  w.magic("SEDC");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(members.size()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(config.depth));
  w.put<std::uint32_t>(config.in_dim);
  w.put<std::uint32_t>(config.depth == 2 ? config.hidden_dim : 0);
  w.put<std::uint32_t>(config.out_dim);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(config.activation));
  w.put<std::uint64_t>(config.init_seed);
  for (const auto& member : members) {
    if (!member.config().same_shape(config)) {
      throw std::invalid_argument("checkpoint member shape differs from header config");
    }
    for (double v : member.values()) w.put<double>(v);
  }
  io::write_file(path, w.bytes());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  r.expect_magic("SEDC");
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version),
                     version_at);
  }
  const auto members = r.get<std::uint32_t>("M");
  CheckpointData data;
  const auto config_at = r.offset();
  data.config.depth = r.get<std::uint8_t>("depth");
  data.config.in_dim = r.get<std::uint32_t>("in_dim");
  data.config.hidden_dim = r.get<std::uint32_t>("hidden_dim");
  data.config.out_dim = r.get<std::uint32_t>("out_dim");
  const auto activation = r.get<std::uint8_t>("activation");
  if (activation > 1) throw ParseError(path.string() + ": unknown activation id", r.offset() - 1);
  data.config.activation = static_cast<Activation>(activation);
  data.config.init_seed = r.get<std::uint64_t>("init_seed");
  try {
    data.config.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": invalid head config: " + e.what(), config_at);
  }
  const std::size_t block = data.config.param_count();
  if (r.remaining() != static_cast<std::size_t>(members) * block * sizeof(double)) {
    throw ParseError(path.string() + ": payload holds " + std::to_string(r.remaining()) +
                         " bytes but header declares M=" + std::to_string(members) + " blocks of " +
                         std::to_string(block) + " float64",
                     r.offset());
  }
  std::vector<double> flat;
  for (std::uint32_t m = 0; m < members; ++m) {
    r.get_array(flat, block, "parameter block");
    data.members.push_back(unflatten(data.config, flat));
  }
  return data;
}

}  // namespace sed
