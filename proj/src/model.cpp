#include "csfair/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "csfair/divergence.hpp"

namespace csfair {

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'S', 'F', 'M', 'L', 'P', '\0', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

std::vector<int> MlpParams::hidden_sizes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) out.push_back(static_cast<int>(layers[i].weight.rows()));
  return out;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() < 1 || l.weight.cols() < 1) throw std::invalid_argument("mlp: zero-size layer");
    if (l.bias.size() != l.weight.rows()) throw std::invalid_argument("mlp: bias size does not match layer width");
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows())
      throw std::invalid_argument("mlp: layer dimensions do not chain");
  }
  if (layers.back().weight.rows() != 1) throw std::invalid_argument("mlp: output layer must have one unit");
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z = params;
  for (auto& l : z.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return z;
}

void axpy(double alpha, const MlpParams& x, MlpParams& y) {
  for (std::size_t i = 0; i < y.layers.size(); ++i) {
    y.layers[i].weight += alpha * x.layers[i].weight;
    y.layers[i].bias += alpha * x.layers[i].bias;
  }
}

Eigen::VectorXd flatten(const MlpParams& params) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(params.parameter_count()));
  Eigen::Index off = 0;
  for (const auto& l : params.layers) {
    flat.segment(off, l.weight.size()) = l.weight.reshaped();
    off += l.weight.size();
    flat.segment(off, l.bias.size()) = l.bias;
    off += l.bias.size();
  }
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, MlpParams& params) {
  if (flat.size() != static_cast<Eigen::Index>(params.parameter_count()))
    throw std::invalid_argument("unflatten: size mismatch");
  Eigen::Index off = 0;
  for (auto& l : params.layers) {
    l.weight.reshaped() = flat.segment(off, l.weight.size());
    off += l.weight.size();
    l.bias = flat.segment(off, l.bias.size());
    off += l.bias.size();
  }
}

MlpParams init_mlp(const std::vector<int>& hidden_sizes, int input_dim, std::uint64_t seed) {
  if (input_dim < 1) throw std::invalid_argument("init_mlp: input_dim must be >= 1");
  for (int h : hidden_sizes)
    if (h < 1) throw std::invalid_argument("init_mlp: zero-size hidden layer");

  std::mt19937_64 rng(seed);
  MlpParams params;
  int fan_in = input_dim;
  std::vector<int> widths = hidden_sizes;
  widths.push_back(1);
  for (int fan_out : widths) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = dist(rng);
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    params.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return params;
}

ForwardCache forward(const MlpParams& params, const Eigen::MatrixXd& x) {
  params.validate();
  if (x.cols() != params.input_dim()) throw std::invalid_argument("forward: feature dimension mismatch");
  ForwardCache cache;
  Eigen::MatrixXd act = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Eigen::MatrixXd pre = act * l.weight.transpose();
    pre.rowwise() += l.bias.transpose();
    cache.inputs.push_back(std::move(act));
    if (i + 1 < params.layers.size()) act = pre.cwiseMax(0.0);
    cache.pre_act.push_back(std::move(pre));
  }
  cache.logits = cache.pre_act.back().col(0);
  cache.raw_prob = (1.0 + (-cache.logits.array()).exp()).inverse().matrix();
  cache.prob = cache.raw_prob.cwiseMax(kProbClip).cwiseMin(1.0 - kProbClip);
  return cache;
}

LossAndGrad bce_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  if (z.size() != y.size()) throw std::invalid_argument("bce_loss: length mismatch");
  if (z.size() < 1) throw std::invalid_argument("bce_loss: empty batch");
  const double b = static_cast<double>(z.size());
  LossAndGrad r;
  r.grad.resize(z.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double zi = z(i);
    if (!(zi > 0.0 && zi < 1.0)) throw std::invalid_argument("bce_loss: probabilities must lie in (0, 1)");
    total -= y(i) * std::log(zi) + (1.0 - y(i)) * std::log1p(-zi);
    r.grad(i) = (zi - y(i)) / (zi * (1.0 - zi)) / b;
  }
  r.value = total / b;
  return r;
}

MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Eigen::VectorXd& dloss_dz,
                  const std::optional<Eigen::MatrixXd>& dloss_dhidden) {
  const std::size_t n_layers = params.layers.size();
  if (cache.pre_act.size() != n_layers) throw std::invalid_argument("backward: cache does not match params");
  const Eigen::Index batch = cache.logits.size();
  if (dloss_dz.size() != batch) throw std::invalid_argument("backward: dloss_dz length mismatch");
  if (dloss_dhidden && (dloss_dhidden->rows() != batch || dloss_dhidden->cols() != cache.hidden().cols()))
    throw std::invalid_argument("backward: dloss_dhidden shape mismatch");

  MlpGrads grads = zeros_like(params);

  // Clipped outputs are constant in the logit.
  Eigen::MatrixXd delta(batch, 1);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double r = cache.raw_prob(i);
    const bool clipped = cache.prob(i) != r;
    delta(i, 0) = clipped ? 0.0 : dloss_dz(i) * r * (1.0 - r);
  }

  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = params.layers[li];
    grads.layers[li].weight = delta.transpose() * cache.inputs[li];
    grads.layers[li].bias = delta.colwise().sum().transpose();
    Eigen::MatrixXd d_in = delta * layer.weight;
    if (li + 1 == n_layers && dloss_dhidden) d_in += *dloss_dhidden;
    if (li == 0) break;
    // ReLU derivative taken as 0 at the kink.
    delta = (cache.pre_act[li - 1].array() > 0.0).select(d_in, 0.0);
  }
  return grads;
}

PenaltyAndGrad l2_penalty(const MlpParams& params, double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("l2_penalty: beta must be finite and >= 0");
  PenaltyAndGrad r{0.0, zeros_like(params)};
  double sq = 0.0;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    sq += params.layers[i].weight.squaredNorm();
    r.grad.layers[i].weight = beta * params.layers[i].weight;
  }
  r.value = 0.5 * beta * sq;
  return r;
}

void save_checkpoint(const MlpParams& params, std::ostream& out) {
  params.validate();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_raw(out, kCheckpointVersion);
  write_raw(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    write_raw(out, static_cast<std::uint32_t>(l.weight.rows()));
    write_raw(out, static_cast<std::uint32_t>(l.weight.cols()));
  }
  // Row-major weights, then biases, per layer.
  for (const auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) write_raw(out, l.weight(i, j));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) write_raw(out, l.bias(i));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

MlpParams load_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto n_layers = read_raw<std::uint32_t>(in);
  if (n_layers == 0 || n_layers > 1024) throw std::runtime_error("checkpoint: implausible layer count");
  MlpParams params;
  params.layers.resize(n_layers);
  for (auto& l : params.layers) {
    const auto rows = read_raw<std::uint32_t>(in);
    const auto cols = read_raw<std::uint32_t>(in);
    l.weight.resize(rows, cols);
    l.bias.resize(rows);
  }
  for (auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = read_raw<double>(in);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = read_raw<double>(in);
  }
  params.validate();
  return params;
}

void save_checkpoint_file(const MlpParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(params, out);
}

MlpParams load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace csfair
