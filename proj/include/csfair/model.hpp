#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csfair {

/// Dense layer: out = in * weight^T + bias.
struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// MLP with ReLU hidden layers and a single sigmoid output unit.
struct MlpParams {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::vector<int> hidden_sizes() const;
  std::size_t parameter_count() const;

  // Throws std::invalid_argument when the layer shapes do not chain or the
  // output is not a single unit.
  void validate() const;
};

/// Parameter-shaped container for gradients.
using MlpGrads = MlpParams;

MlpParams zeros_like(const MlpParams& params);
void axpy(double alpha, const MlpParams& x, MlpParams& y);  // y += alpha * x

/// Flattened view of all parameters in layer order (weights column-major,
/// then bias). Used by gradient checks and the optimizer.
Eigen::VectorXd flatten(const MlpParams& params);
void unflatten(const Eigen::VectorXd& flat, MlpParams& params);

/// Glorot-uniform weights, zero biases.
MlpParams init_mlp(const std::vector<int>& hidden_sizes, int input_dim, std::uint64_t seed);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;       // input to each layer (B x in)
  std::vector<Eigen::MatrixXd> pre_act;      // pre-activations (B x out)
  Eigen::VectorXd logits;
  Eigen::VectorXd raw_prob;                  // sigmoid(logits), unclipped
  Eigen::VectorXd prob;                      // clipped into [1e-7, 1 - 1e-7]
  const Eigen::MatrixXd& hidden() const { return inputs.back(); }  // final hidden activations
};

ForwardCache forward(const MlpParams& params, const Eigen::MatrixXd& x);

struct LossAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Mean binary cross-entropy -(1/B) sum [y log z + (1 - y) log(1 - z)].
LossAndGrad bce_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& y);

/// Reverse-mode gradient of a loss that depends on the output
/// probabilities and, optionally, on the final hidden activations.
MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Eigen::VectorXd& dloss_dz,
                  const std::optional<Eigen::MatrixXd>& dloss_dhidden = std::nullopt);

struct PenaltyAndGrad {
  double value = 0.0;
  MlpGrads grad;
};

/// (beta / 2) * sum of squared weights; biases are not penalized.
PenaltyAndGrad l2_penalty(const MlpParams& params, double beta);

/// Versioned binary checkpoint. Round-trips bit-exactly.
void save_checkpoint(const MlpParams& params, std::ostream& out);
MlpParams load_checkpoint(std::istream& in);
void save_checkpoint_file(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint_file(const std::string& path);

}  // namespace csfair
