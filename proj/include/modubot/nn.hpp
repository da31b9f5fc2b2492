#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "modubot/rng.hpp"

namespace modubot {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Tanh MLP with a Gaussian policy head (mean + state-independent log-std) and
// a separate value network. Double precision throughout; batches are rows.
// ---------------------------------------------------------------------------

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden = {64, 64};
  int action_dim = 0;
};

struct Dense {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

namespace detail {

inline std::vector<Dense> make_layers(int input_dim,
                                      const std::vector<int>& hidden,
                                      int output_dim) {
  std::vector<Dense> layers;
  int in = input_dim;
  for (int width : hidden) {
    layers.push_back({Eigen::MatrixXd::Zero(width, in),
                      Eigen::VectorXd::Zero(width)});
    in = width;
  }
  layers.push_back({Eigen::MatrixXd::Zero(output_dim, in),
                    Eigen::VectorXd::Zero(output_dim)});
  return layers;
}

// Orthogonal rows/columns scaled by gain, the usual policy-gradient init.
inline Eigen::MatrixXd orthogonal(int rows, int cols, double gain, Rng& rng) {
  const bool wide = cols > rows;
  const int r = wide ? cols : rows;
  const int c = wide ? rows : cols;
  Eigen::MatrixXd a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rmat =
      qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rmat(j, j) < 0) q.col(j) = -q.col(j);
  if (wide) return gain * q.transpose();
  return gain * q;
}

}  // namespace detail

struct PolicyParams {
  MlpSpec spec;
  std::vector<Dense> policy;  // hidden layers + mean head
  std::vector<Dense> value;   // hidden layers + scalar head
  Eigen::VectorXd log_std;

  static PolicyParams zeros(const MlpSpec& spec) {
    PolicyParams p;
    p.spec = spec;
    p.policy = detail::make_layers(spec.input_dim, spec.hidden,
                                   spec.action_dim);
    p.value = detail::make_layers(spec.input_dim, spec.hidden, 1);
    p.log_std = Eigen::VectorXd::Zero(spec.action_dim);
    return p;
  }

  // Flat views over every tensor, declaration order:
  // policy layers (w, b), value layers (w, b), log_std.
  std::vector<Eigen::Map<Eigen::ArrayXd>> tensors() {
    std::vector<Eigen::Map<Eigen::ArrayXd>> out;
    for (auto* net : {&policy, &value}) {
      for (Dense& layer : *net) {
        out.emplace_back(layer.w.data(), layer.w.size());
        out.emplace_back(layer.b.data(), layer.b.size());
      }
    }
    out.emplace_back(log_std.data(), log_std.size());
    return out;
  }
  std::vector<Eigen::Map<const Eigen::ArrayXd>> tensors() const {
    std::vector<Eigen::Map<const Eigen::ArrayXd>> out;
    for (const auto* net : {&policy, &value}) {
      for (const Dense& layer : *net) {
        out.emplace_back(layer.w.data(), layer.w.size());
        out.emplace_back(layer.b.data(), layer.b.size());
      }
    }
    out.emplace_back(log_std.data(), log_std.size());
    return out;
  }

  bool all_finite() const {
    for (const auto& t : tensors())
      if (!t.isFinite().all()) return false;
    return true;
  }
};

// Hidden layers sqrt(2), mean head 0.01, value head 1.0; log_std starts at 0.
inline PolicyParams init_params(const MlpSpec& spec, Rng& rng) {
  PolicyParams p = PolicyParams::zeros(spec);
  for (std::size_t l = 0; l < p.policy.size(); ++l) {
    const bool head = l + 1 == p.policy.size();
    Dense& layer = p.policy[l];
    layer.w = detail::orthogonal(static_cast<int>(layer.w.rows()),
                                 static_cast<int>(layer.w.cols()),
                                 head ? 0.01 : std::sqrt(2.0), rng);
  }
  for (std::size_t l = 0; l < p.value.size(); ++l) {
    const bool head = l + 1 == p.value.size();
    Dense& layer = p.value[l];
    layer.w = detail::orthogonal(static_cast<int>(layer.w.rows()),
                                 static_cast<int>(layer.w.cols()),
                                 head ? 1.0 : std::sqrt(2.0), rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

// Activations kept for the backward pass. acts[0] is the input batch,
// acts[l] the output of layer l-1 (tanh for hidden layers, linear for the
// last).
struct MlpCache {
  std::vector<Eigen::MatrixXd> acts;
};

namespace detail {

inline const Eigen::MatrixXd& mlp_forward(const std::vector<Dense>& layers,
                                          const Eigen::MatrixXd& x,
                                          MlpCache& cache) {
  cache.acts.clear();
  cache.acts.reserve(layers.size() + 1);
  cache.acts.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Dense& layer = layers[l];
    Eigen::MatrixXd z =
        (cache.acts.back() * layer.w.transpose()).rowwise() +
        layer.b.transpose();
    if (l + 1 < layers.size()) z = z.array().tanh();
    cache.acts.push_back(std::move(z));
  }
  return cache.acts.back();
}

// d_out is d(loss)/d(network output), including any batch-mean factors.
inline void mlp_backward(const std::vector<Dense>& layers,
                         const MlpCache& cache, const Eigen::MatrixXd& d_out,
                         std::vector<Dense>& grads) {
  Eigen::MatrixXd dz = d_out;  // last layer is linear
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l].w.noalias() = dz.transpose() * cache.acts[l];
    grads[l].b = dz.colwise().sum();
    if (l > 0) {
      // through tanh of the previous layer
      Eigen::MatrixXd da = dz * layers[l].w;
      dz = da.array() * (1.0 - cache.acts[l].array().square());
    }
  }
}

}  // namespace detail

struct ForwardCache {
  MlpCache policy;
  MlpCache value;
};

struct ForwardResult {
  Eigen::MatrixXd mean;   // batch x action_dim
  Eigen::VectorXd value;  // batch
};

inline ForwardResult forward_batch(const PolicyParams& p,
                                   const Eigen::MatrixXd& obs,
                                   ForwardCache& cache) {
  if (obs.cols() != p.spec.input_dim)
    throw std::invalid_argument("observation batch has " +
                                std::to_string(obs.cols()) +
                                " columns, expected " +
                                std::to_string(p.spec.input_dim));
  ForwardResult out;
  out.mean = detail::mlp_forward(p.policy, obs, cache.policy);
  out.value = detail::mlp_forward(p.value, obs, cache.value).col(0);
  return out;
}

inline std::pair<Eigen::VectorXd, double> forward(const PolicyParams& p,
                                                  const Eigen::VectorXd& obs) {
  ForwardCache cache;
  ForwardResult r = forward_batch(p, obs.transpose(), cache);
  return {r.mean.row(0).transpose(), r.value[0]};
}

// Upstream gradients w.r.t. the batched network outputs and log_std.
struct OutputGrads {
  Eigen::MatrixXd d_mean;     // batch x action_dim
  Eigen::VectorXd d_value;    // batch
  Eigen::VectorXd d_log_std;  // action_dim
};

inline PolicyParams backward(const PolicyParams& p, const ForwardCache& cache,
                             const OutputGrads& out_grads) {
  PolicyParams grads = PolicyParams::zeros(p.spec);
  detail::mlp_backward(p.policy, cache.policy, out_grads.d_mean, grads.policy);
  detail::mlp_backward(p.value, cache.value, out_grads.d_value, grads.value);
  grads.log_std = out_grads.d_log_std;
  return grads;
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian policy head
// ---------------------------------------------------------------------------

inline double gaussian_logprob(const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& log_std,
                               const Eigen::VectorXd& action) {
  const Eigen::ArrayXd sigma = log_std.array().exp();
  const Eigen::ArrayXd z = (action - mean).array() / sigma;
  return (-0.5 * z.square() - log_std.array() - 0.5 * kLog2Pi).sum();
}

inline std::pair<Eigen::VectorXd, double> sample_action(
    const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, Rng& rng) {
  Eigen::VectorXd action(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    action[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  return {action, gaussian_logprob(mean, log_std, action)};
}

// Entropy of the diagonal Gaussian; depends on log_std only.
inline double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() +
         0.5 * static_cast<double>(log_std.size()) * (kLog2Pi + 1.0);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  PolicyParams m;
  PolicyParams v;
  long t = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState create(const MlpSpec& spec, double lr) {
    AdamState s;
    s.m = PolicyParams::zeros(spec);
    s.v = PolicyParams::zeros(spec);
    s.lr = lr;
    return s;
  }
};

inline void adam_step(PolicyParams& params, const PolicyParams& grads,
                      AdamState& state) {
  if (!grads.all_finite())
    throw NumericalError("non-finite gradient in adam_step");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  auto tp = params.tensors();
  auto tg = grads.tensors();
  auto tm = state.m.tensors();
  auto tv = state.v.tensors();
  for (std::size_t i = 0; i < tp.size(); ++i) {
    tm[i] = state.beta1 * tm[i] + (1.0 - state.beta1) * tg[i];
    tv[i] = state.beta2 * tv[i] + (1.0 - state.beta2) * tg[i].square();
    tp[i] -= state.lr * (tm[i] / bc1) / ((tv[i] / bc2).sqrt() + state.eps);
  }
  params.log_std = params.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

// Global L2 norm over every gradient tensor.
inline double grad_norm(const PolicyParams& grads) {
  double sq = 0.0;
  for (const auto& t : grads.tensors()) sq += t.square().sum();
  return std::sqrt(sq);
}

inline void scale_grads(PolicyParams& grads, double factor) {
  for (auto& t : grads.tensors()) t *= factor;
}

// ---------------------------------------------------------------------------
// Running observation normalizer (frozen at evaluation time).
// ---------------------------------------------------------------------------

class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(int dim)
      : mean_(Eigen::VectorXd::Zero(dim)), var_(Eigen::VectorXd::Ones(dim)),
        count_(1e-4) {}

  void update(const Eigen::VectorXd& x) {
    const Eigen::ArrayXd delta = x.array() - mean_.array();
    const double total = count_ + 1.0;
    mean_.array() += delta / total;
    // batch of one: batch variance is zero
    var_.array() =
        (var_.array() * count_ + delta.square() * count_ / total) / total;
    count_ = total;
  }

  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
    const Eigen::ArrayXd z =
        (x.array() - mean_.array()) / (var_.array() + 1e-8).sqrt();
    return z.cwiseMax(-10.0).cwiseMin(10.0);
  }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  double count() const { return count_; }

  void restore(Eigen::VectorXd mean, Eigen::VectorXd var, double count) {
    mean_ = std::move(mean);
    var_ = std::move(var);
    count_ = count;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
  double count_ = 0.0;
};

// ---------------------------------------------------------------------------
// Persistence: "MBRL" magic, u32 version, spec dims, then tensors in
// declaration order, then log_std, then normalizer statistics. All floats are
// little-endian IEEE-754 doubles; round-trips are bit-exact.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kParamsFormatVersion = 1;

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("params file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i)
    buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline double read_f64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("params file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

struct TrainedPolicy {
  PolicyParams params;
  RunningNorm obs_norm;
};

inline void save_policy(const std::string& path, const PolicyParams& params,
                        const RunningNorm& norm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write("MBRL", 4);
  detail::write_u32(out, kParamsFormatVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(params.spec.input_dim));
  detail::write_u32(out, static_cast<std::uint32_t>(params.spec.action_dim));
  detail::write_u32(out,
                    static_cast<std::uint32_t>(params.spec.hidden.size()));
  for (int width : params.spec.hidden)
    detail::write_u32(out, static_cast<std::uint32_t>(width));

  for (const auto& t : params.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) detail::write_f64(out, t[i]);

  detail::write_f64(out, norm.count());
  for (Eigen::Index i = 0; i < norm.mean().size(); ++i)
    detail::write_f64(out, norm.mean()[i]);
  for (Eigen::Index i = 0; i < norm.var().size(); ++i)
    detail::write_f64(out, norm.var()[i]);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline TrainedPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MBRL")
    throw std::runtime_error("not a params file (bad magic): " + path);
  const std::uint32_t version = detail::read_u32(in);
  if (version != kParamsFormatVersion)
    throw std::runtime_error("unsupported params version " +
                             std::to_string(version));
  MlpSpec spec;
  spec.input_dim = static_cast<int>(detail::read_u32(in));
  spec.action_dim = static_cast<int>(detail::read_u32(in));
  const std::uint32_t n_hidden = detail::read_u32(in);
  spec.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    spec.hidden.push_back(static_cast<int>(detail::read_u32(in)));

  TrainedPolicy tp;
  tp.params = PolicyParams::zeros(spec);
  for (auto& t : tp.params.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = detail::read_f64(in);

  const double count = detail::read_f64(in);
  Eigen::VectorXd mean(spec.input_dim), var(spec.input_dim);
  for (int i = 0; i < spec.input_dim; ++i) mean[i] = detail::read_f64(in);
  for (int i = 0; i < spec.input_dim; ++i) var[i] = detail::read_f64(in);
  tp.obs_norm = RunningNorm(spec.input_dim);
  tp.obs_norm.restore(std::move(mean), std::move(var), count);
  return tp;
}

}  // namespace modubot
