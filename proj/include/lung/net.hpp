#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lung/rng.hpp"
#include "lung/voxel.hpp"

namespace lung {

/// One fully connected layer: out = act(weights * in + bias).
struct DenseLayer {
  Eigen::MatrixXd weights;  // rows = outputs, cols = inputs
  Eigen::VectorXd bias;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.bias.size() == b.bias.size() && a.weights == b.weights && a.bias == b.bias;
  }
};

/// Per-layer parameters, or anything shaped like them (gradients, moments).
using Parameters = std::vector<DenseLayer>;

/// Dense autoencoder: tanh on every hidden layer, sigmoid on the output.
///
/// `layer_sizes` lists widths from input to output inclusive; the first and
/// last equal the voxel count. `bottleneck_index` points into `layer_sizes` at
/// the latent layer. Layers 1..bottleneck form the feature (encoder) network,
/// the rest the generator (decoder).
class Network {
 public:
  Network() = default;
  /// All parameters zero.
  Network(std::vector<std::size_t> layer_sizes, std::size_t bottleneck_index);

  /// Weights and biases uniform in +-1/sqrt(fan_in), drawn layer by layer.
  static Network random(std::vector<std::size_t> layer_sizes, std::size_t bottleneck_index, Rng& rng);

  /// Builds from an underscore-separated hidden-layer spec such as
  /// "32_3_64_256"; the narrowest hidden layer becomes the bottleneck.
  static Network from_spec(std::string_view hidden_spec, std::size_t voxel_count, Rng& rng);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t bottleneck_index() const { return bottleneck_; }
  std::size_t latent_dim() const { return sizes_[bottleneck_]; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t encoder_layers() const { return bottleneck_; }
  std::size_t parameter_count() const;

  const Parameters& params() const { return layers_; }
  Parameters& params() { return layers_; }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<std::size_t> sizes_;
  std::size_t bottleneck_ = 0;
  Parameters layers_;
};

std::vector<std::size_t> parse_hidden_spec(std::string_view spec);
std::string format_hidden_spec(std::span<const std::size_t> hidden);
/// Hidden-layer spec of a network, e.g. "32_3_64_256".
std::string hidden_spec(const Network& net);

/// Bottleneck activations; every component lies in [-1, 1].
struct LatentVector {
  Eigen::VectorXd values;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  friend bool operator==(const LatentVector& a, const LatentVector& b) {
    return a.values.size() == b.values.size() && a.values == b.values;
  }
};

struct ForwardResult {
  VoxelGrid reconstruction;
  LatentVector latent;
};

Eigen::VectorXd to_vector(const VoxelGrid& grid);

/// Double-precision halves of the forward pass.
Eigen::VectorXd encode_values(const Network& net, const Eigen::VectorXd& input);
Eigen::VectorXd decode_values(const Network& net, const Eigen::VectorXd& latent);

/// Throws DimensionMismatch when the grid size differs from the input width.
LatentVector encode(const Network& net, const VoxelGrid& grid);

/// Sigmoid outputs rounded to float and kept inside the open interval (0, 1).
VoxelGrid decode(const Network& net, const LatentVector& latent, const Geometry& geometry);

/// Exactly decode(encode(input)).
ForwardResult forward(const Network& net, const VoxelGrid& input);

/// Mean squared voxel difference.
double loss_mse(const VoxelGrid& reconstruction, const VoxelGrid& target);

Parameters zeros_like(const Network& net);

/// Gradient of loss_mse(forward(input), target) with respect to every
/// parameter, by backpropagation.
Parameters backward(const Network& net, const VoxelGrid& input, const VoxelGrid& target);

struct BatchGradient {
  double loss = 0.0;  // mean over samples and voxels
  Parameters gradients;
};

/// Batched backpropagation; one sample per column.
BatchGradient backward_batch(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

/// Central differences of the double-precision loss, one parameter at a time.
Parameters finite_difference_gradients(const Network& net, const VoxelGrid& input, const VoxelGrid& target,
                                       double h = 1e-4);

/// max over entries of |a - b| / max(|a|, |b|, floor).
double max_relative_error(const Parameters& a, const Parameters& b, double floor = 1e-7);

/// Worst max_relative_error between backward and finite differences over
/// `networks` random small autoencoders (4..64 inputs, 1..3 hidden layers),
/// each checked on one random input/target pair.
double gradient_check(std::size_t networks, std::uint64_t rng_seed);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  AdamConfig config;
  Parameters first_moment;
  Parameters second_moment;

  static AdamState for_network(const Network& net, AdamConfig config = {});
};

/// One bias-corrected Adam update. Throws ShapeMismatch when gradients or
/// moments are not shaped like the network.
void adam_step(Network& net, const Parameters& gradients, AdamState& state);

struct LossPoint {
  std::size_t iteration = 0;
  double mse = 0.0;

  friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

struct TrainOptions {
  std::size_t iterations = 1;
  std::size_t batch_size = 64;
};

/// Mini-batch Adam on autoencoding `images`. The order is reshuffled from
/// `rng` at the start of every pass over the data; each iteration is one
/// batch. Returns the pre-update batch loss per iteration, numbered from
/// `first_iteration`.
std::vector<LossPoint> train(Network& net, AdamState& adam, std::span<const VoxelGrid> images,
                             const TrainOptions& options, Rng& rng, std::size_t first_iteration = 0);

/// I.i.d. uniform components in [-1, 1].
LatentVector sample_latent(std::size_t latent_dim, Rng& rng);

// Weight file (little-endian): magic "LUNGNET1", u64 layer count, u64 sizes,
// u64 bottleneck index, then per layer the weights row-major and the bias as f64.
inline constexpr char kNetworkMagic[8] = {'L', 'U', 'N', 'G', 'N', 'E', 'T', '1'};

std::vector<std::uint8_t> encode_network(const Network& net);
Network decode_network(std::span<const std::uint8_t> bytes);
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

/// "iteration,mse" rows.
void write_loss_csv(const std::filesystem::path& path, std::span<const LossPoint> history);

}  // namespace lung
