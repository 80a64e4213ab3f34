#include "lung/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lung/error.hpp"
#include "lung/grid_io.hpp"

namespace lung {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Activations are applied with the scalar library functions so every code
// path (single sample, batch, test oracles) produces identical values.
void apply_tanh(Eigen::MatrixXd& m) { m = m.unaryExpr([](double z) { return std::tanh(z); }); }
void apply_sigmoid(Eigen::MatrixXd& m) { m = m.unaryExpr([](double z) { return sigmoid(z); }); }
void apply_tanh(Eigen::VectorXd& v) { v = v.unaryExpr([](double z) { return std::tanh(z); }); }
void apply_sigmoid(Eigen::VectorXd& v) { v = v.unaryExpr([](double z) { return sigmoid(z); }); }

void check_shapes(const Network& net, const Parameters& p, const char* what) {
  const Parameters& ref = net.params();
  if (p.size() != ref.size()) throw ShapeMismatch(std::string(what) + ": layer count differs");
  for (std::size_t l = 0; l < ref.size(); ++l) {
    if (p[l].weights.rows() != ref[l].weights.rows() || p[l].weights.cols() != ref[l].weights.cols() ||
        p[l].bias.size() != ref[l].bias.size()) {
      throw ShapeMismatch(std::string(what) + ": layer " + std::to_string(l) + " shape differs");
    }
  }
}

void check_input(const Network& net, std::size_t n, const char* what) {
  if (n != net.input_size()) {
    throw DimensionMismatch(std::string(what) + ": network expects " + std::to_string(net.input_size()) +
                            " voxels, got " + std::to_string(n));
  }
}

double layer_loss(const Network& net, const Eigen::VectorXd& input, const Eigen::VectorXd& target) {
  const Eigen::VectorXd out = decode_values(net, encode_values(net, input));
  return (out - target).squaredNorm() / static_cast<double>(out.size());
}

}  // namespace

// ---- Network ----------------------------------------------------------------------

Network::Network(std::vector<std::size_t> layer_sizes, std::size_t bottleneck_index)
    : sizes_(std::move(layer_sizes)), bottleneck_(bottleneck_index) {
  if (sizes_.size() < 3) throw std::invalid_argument("Network: need at least one hidden layer");
  if (std::find(sizes_.begin(), sizes_.end(), std::size_t{0}) != sizes_.end()) {
    throw std::invalid_argument("Network: layer sizes must be positive");
  }
  if (sizes_.front() != sizes_.back()) throw std::invalid_argument("Network: input and output widths differ");
  if (bottleneck_ == 0 || bottleneck_ + 1 >= sizes_.size()) {
    throw std::invalid_argument("Network: bottleneck must be a hidden layer");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
}

Network Network::random(std::vector<std::size_t> layer_sizes, std::size_t bottleneck_index, Rng& rng) {
  Network net(std::move(layer_sizes), bottleneck_index);
  for (DenseLayer& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = uniform(rng, -bound, bound);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = uniform(rng, -bound, bound);
  }
  return net;
}

Network Network::from_spec(std::string_view hidden_spec, std::size_t voxel_count, Rng& rng) {
  const std::vector<std::size_t> hidden = parse_hidden_spec(hidden_spec);
  std::vector<std::size_t> sizes{voxel_count};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(voxel_count);
  const auto narrowest = std::min_element(hidden.begin(), hidden.end());
  return random(std::move(sizes), 1 + static_cast<std::size_t>(narrowest - hidden.begin()), rng);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<std::size_t> parse_hidden_spec(std::string_view spec) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find('_', start), spec.size());
    const std::string_view part = spec.substr(start, end - start);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string_view::npos) {
      throw std::invalid_argument("bad layer spec: " + std::string(spec));
    }
    const std::size_t width = std::stoul(std::string(part));
    if (width == 0) throw std::invalid_argument("bad layer spec: zero-width layer");
    out.push_back(width);
    start = end + 1;
  }
  return out;
}

std::string format_hidden_spec(std::span<const std::size_t> hidden) {
  std::string out;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) out += '_';
    out += std::to_string(hidden[i]);
  }
  return out;
}

std::string hidden_spec(const Network& net) {
  const auto& s = net.layer_sizes();
  return format_hidden_spec(std::span(s).subspan(1, s.size() - 2));
}

// ---- forward --------------------------------------------------------------------------

Eigen::VectorXd to_vector(const VoxelGrid& grid) {
  const auto values = grid.values();
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

Eigen::VectorXd encode_values(const Network& net, const Eigen::VectorXd& input) {
  check_input(net, static_cast<std::size_t>(input.size()), "encode");
  Eigen::VectorXd a = input;
  for (std::size_t l = 0; l < net.encoder_layers(); ++l) {
    const DenseLayer& layer = net.params()[l];
    Eigen::VectorXd z = layer.weights * a + layer.bias;
    apply_tanh(z);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd decode_values(const Network& net, const Eigen::VectorXd& latent) {
  if (static_cast<std::size_t>(latent.size()) != net.latent_dim()) {
    throw DimensionMismatch("decode: latent width " + std::to_string(latent.size()) + ", network expects " +
                            std::to_string(net.latent_dim()));
  }
  const auto& layers = net.params();
  Eigen::VectorXd a = latent;
  for (std::size_t l = net.encoder_layers(); l < layers.size(); ++l) {
    Eigen::VectorXd z = layers[l].weights * a + layers[l].bias;
    if (l + 1 == layers.size()) {
      apply_sigmoid(z);
    } else {
      apply_tanh(z);
    }
    a = std::move(z);
  }
  return a;
}

LatentVector encode(const Network& net, const VoxelGrid& grid) {
  check_input(net, grid.size(), "encode");
  return {encode_values(net, to_vector(grid))};
}

VoxelGrid decode(const Network& net, const LatentVector& latent, const Geometry& geometry) {
  check_input(net, geometry.dims.size(), "decode");
  const Eigen::VectorXd out = decode_values(net, latent.values);
  constexpr float kLow = std::numeric_limits<float>::min();
  const float high = std::nextafter(1.0f, 0.0f);
  std::vector<float> values(static_cast<std::size_t>(out.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::clamp(static_cast<float>(out(static_cast<Eigen::Index>(i))), kLow, high);
  }
  return VoxelGrid(geometry, std::move(values));
}

ForwardResult forward(const Network& net, const VoxelGrid& input) {
  LatentVector latent = encode(net, input);
  VoxelGrid reconstruction = decode(net, latent, input.geometry());
  return {std::move(reconstruction), std::move(latent)};
}

double loss_mse(const VoxelGrid& reconstruction, const VoxelGrid& target) {
  if (reconstruction.dims() != target.dims()) throw DimensionMismatch("loss_mse: grid dims differ");
  const auto a = reconstruction.values();
  const auto b = target.values();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += diff * diff;
  }
  return total / static_cast<double>(a.size());
}

// ---- gradients ----------------------------------------------------------------------

Parameters zeros_like(const Network& net) {
  Parameters out;
  out.reserve(net.params().size());
  for (const auto& l : net.params()) {
    out.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

namespace {

// Buffers reused across training iterations; large matrices would otherwise be
// reallocated (and page-faulted in) on every batch.
struct Workspace {
  std::vector<Eigen::MatrixXd> activations;  // [l] is the input of layer l
  Eigen::MatrixXd delta;
  Eigen::MatrixXd upstream;
  BatchGradient result;
};

void backward_into(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, Workspace& ws) {
  check_input(net, static_cast<std::size_t>(inputs.rows()), "backward");
  if (targets.rows() != inputs.rows() || targets.cols() != inputs.cols() || inputs.cols() == 0) {
    throw DimensionMismatch("backward: inputs and targets differ in shape");
  }
  const auto& layers = net.params();
  const std::size_t depth = layers.size();

  auto& act = ws.activations;
  act.resize(depth + 1);
  act[0] = inputs;
  for (std::size_t l = 0; l < depth; ++l) {
    Eigen::MatrixXd& z = act[l + 1];
    z.noalias() = layers[l].weights * act[l];
    z.colwise() += layers[l].bias;
    if (l + 1 == depth) {
      apply_sigmoid(z);
    } else {
      apply_tanh(z);
    }
  }

  const Eigen::MatrixXd& out = act[depth];
  const double scale = 1.0 / static_cast<double>(out.size());
  BatchGradient& result = ws.result;
  result.loss = (out - targets).squaredNorm() * scale;
  result.gradients.resize(depth);

  // dL/dz at the sigmoid output
  ws.delta = (2.0 * scale) * ((out - targets).array() * out.array() * (1.0 - out.array())).matrix();
  for (std::size_t l = depth; l-- > 0;) {
    DenseLayer& g = result.gradients[l];
    g.weights.noalias() = ws.delta * act[l].transpose();
    g.bias = ws.delta.rowwise().sum();
    if (l == 0) break;
    ws.upstream.noalias() = layers[l].weights.transpose() * ws.delta;
    ws.delta = (ws.upstream.array() * (1.0 - act[l].array().square())).matrix();
  }
}

}  // namespace

BatchGradient backward_batch(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  Workspace ws;
  backward_into(net, inputs, targets, ws);
  return std::move(ws.result);
}

Parameters backward(const Network& net, const VoxelGrid& input, const VoxelGrid& target) {
  if (input.dims() != target.dims()) throw DimensionMismatch("backward: input and target dims differ");
  check_input(net, input.size(), "backward");
  return backward_batch(net, to_vector(input), to_vector(target)).gradients;
}

Parameters finite_difference_gradients(const Network& net, const VoxelGrid& input, const VoxelGrid& target,
                                       double h) {
  if (input.dims() != target.dims()) throw DimensionMismatch("finite differences: input and target dims differ");
  check_input(net, input.size(), "finite differences");
  const Eigen::VectorXd x = to_vector(input);
  const Eigen::VectorXd t = to_vector(target);
  Network probe = net;
  Parameters grad = zeros_like(net);
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + h;
    const double up = layer_loss(probe, x, t);
    param = saved - h;
    const double down = layer_loss(probe, x, t);
    param = saved;
    return (up - down) / (2.0 * h);
  };
  for (std::size_t l = 0; l < probe.params().size(); ++l) {
    DenseLayer& layer = probe.params()[l];
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) grad[l].weights(r, c) = central(layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) grad[l].bias(r) = central(layer.bias(r));
  }
  return grad;
}

double max_relative_error(const Parameters& a, const Parameters& b, double floor) {
  if (a.size() != b.size()) throw ShapeMismatch("max_relative_error: layer count differs");
  double worst = 0.0;
  auto visit = [&](double x, double y) {
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  };
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].weights.size() != b[l].weights.size() || a[l].bias.size() != b[l].bias.size()) {
      throw ShapeMismatch("max_relative_error: layer shape differs");
    }
    for (Eigen::Index i = 0; i < a[l].weights.size(); ++i) visit(a[l].weights.data()[i], b[l].weights.data()[i]);
    for (Eigen::Index i = 0; i < a[l].bias.size(); ++i) visit(a[l].bias(i), b[l].bias(i));
  }
  return worst;
}

// ---- optimization ---------------------------------------------------------------------

double gradient_check(std::size_t networks, std::uint64_t rng_seed) {
  double worst = 0.0;
  for (std::size_t n = 0; n < networks; ++n) {
    Rng rng(derive_seed(rng_seed, "gradcheck", n));
    const std::size_t inputs = 4 + uniform_index(rng, 61);
    const std::size_t hidden = 1 + uniform_index(rng, 3);
    std::vector<std::size_t> sizes{inputs};
    for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(1 + uniform_index(rng, 16));
    sizes.push_back(inputs);
    const auto narrowest = std::min_element(sizes.begin() + 1, sizes.end() - 1);
    const Network net = Network::random(sizes, static_cast<std::size_t>(narrowest - sizes.begin()), rng);

    const Geometry geometry{{1, 1, inputs}, kDefaultSpacing};
    std::vector<float> in(inputs), tgt(inputs);
    for (auto& v : in) v = static_cast<float>(uniform(rng, 0.0, 1.0));
    for (auto& v : tgt) v = static_cast<float>(uniform(rng, 0.0, 1.0));
    const VoxelGrid input(geometry, std::move(in));
    const VoxelGrid target(geometry, std::move(tgt));
    worst = std::max(worst, max_relative_error(backward(net, input, target),
                                               finite_difference_gradients(net, input, target)));
  }
  return worst;
}

AdamState AdamState::for_network(const Network& net, AdamConfig config) {
  return {0, config, zeros_like(net), zeros_like(net)};
}

void adam_step(Network& net, const Parameters& gradients, AdamState& state) {
  check_shapes(net, gradients, "adam_step gradients");
  check_shapes(net, state.first_moment, "adam_step first moment");
  check_shapes(net, state.second_moment, "adam_step second moment");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
    param.array() -= c.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + c.epsilon);
  };
  for (std::size_t l = 0; l < gradients.size(); ++l) {
    DenseLayer& p = net.params()[l];
    update(p.weights, gradients[l].weights, state.first_moment[l].weights, state.second_moment[l].weights);
    update(p.bias, gradients[l].bias, state.first_moment[l].bias, state.second_moment[l].bias);
  }
}

std::vector<LossPoint> train(Network& net, AdamState& adam, std::span<const VoxelGrid> images,
                             const TrainOptions& options, Rng& rng, std::size_t first_iteration) {
  if (images.empty()) throw EmptySet("train: no images");
  if (options.iterations == 0 || options.batch_size == 0) {
    throw std::invalid_argument("train: iterations and batch size must be positive");
  }
  const auto n_vox = static_cast<Eigen::Index>(net.input_size());
  Eigen::MatrixXd data(n_vox, static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    check_input(net, images[i].size(), "train");
    data.col(static_cast<Eigen::Index>(i)) = to_vector(images[i]);
  }

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle on the first batch

  std::vector<LossPoint> history;
  history.reserve(options.iterations);
  Eigen::MatrixXd batch;
  Workspace ws;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    if (cursor >= order.size()) {
      // Fisher-Yates with the project's own index draws
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      cursor = 0;
    }
    const std::size_t take = std::min(options.batch_size, order.size() - cursor);
    batch.resize(n_vox, static_cast<Eigen::Index>(take));
    for (std::size_t j = 0; j < take; ++j) {
      batch.col(static_cast<Eigen::Index>(j)) = data.col(static_cast<Eigen::Index>(order[cursor + j]));
    }
    cursor += take;

    backward_into(net, batch, batch, ws);
    history.push_back({first_iteration + it, ws.result.loss});
    adam_step(net, ws.result.gradients, adam);
  }
  return history;
}

LatentVector sample_latent(std::size_t latent_dim, Rng& rng) {
  if (latent_dim == 0) throw std::invalid_argument("sample_latent: latent_dim must be positive");
  LatentVector v{Eigen::VectorXd(static_cast<Eigen::Index>(latent_dim))};
  for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values(i) = uniform(rng, -1.0, 1.0);
  return v;
}

// ---- persistence ------------------------------------------------------------------------

std::vector<std::uint8_t> encode_network(const Network& net) {
  std::vector<std::uint8_t> out(std::begin(kNetworkMagic), std::end(kNetworkMagic));
  out.reserve(64 + 8 * net.parameter_count());
  le::put_u64(out, net.layer_sizes().size());
  for (const std::size_t s : net.layer_sizes()) le::put_u64(out, s);
  le::put_u64(out, net.bottleneck_index());
  for (const DenseLayer& layer : net.params()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) le::put_f64(out, layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) le::put_f64(out, layer.bias(r));
  }
  return out;
}

Network decode_network(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes);
  r.expect_magic(kNetworkMagic, "network");
  const std::uint64_t count = r.u64();
  if (count < 3 || count > 64) throw FormatError("network: implausible layer count");
  std::vector<std::size_t> sizes;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t s = r.u64();
    if (s == 0 || s > (std::uint64_t{1} << 26)) throw FormatError("network: implausible layer size");
    sizes.push_back(s);
  }
  const std::uint64_t bottleneck = r.u64();
  Network net;
  try {
    net = Network(sizes, bottleneck);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("network: ") + e.what());
  }
  for (DenseLayer& layer : net.params()) {
    for (Eigen::Index row = 0; row < layer.weights.rows(); ++row) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(row, c) = r.f64();
    }
    for (Eigen::Index row = 0; row < layer.bias.size(); ++row) layer.bias(row) = r.f64();
  }
  if (!r.done()) throw FormatError("network: trailing bytes");
  return net;
}

void save_network(const std::filesystem::path& path, const Network& net) {
  le::write_file(path, encode_network(net));
}

Network load_network(const std::filesystem::path& path) { return decode_network(le::read_file(path)); }

void write_loss_csv(const std::filesystem::path& path, std::span<const LossPoint> history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "iteration,mse\n";
  for (const auto& p : history) out << p.iteration << ',' << p.mse << '\n';
}

}  // namespace lung
