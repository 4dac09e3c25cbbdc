#pragma once

// Multilayer perceptrons as cascades of dense blocks: every block is an affine
// map, followed by ReLU except for the last one.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lgg/tensor.hpp"

namespace lgg::model {

class Mlp {
 public:
  /// Weights are in x out (y = x W + b), biases 1 x out. Throws ShapeError
  /// when shapes do not follow layer_sizes.
  Mlp(std::vector<std::size_t> layer_sizes, std::vector<ad::Tensor> weights,
      std::vector<ad::Tensor> biases);

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static Mlp initialize(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t blocks() const { return weights_.size(); }
  std::size_t hidden_blocks() const { return blocks() - 1; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t parameter_count() const;

  const ad::Tensor& weight(std::size_t block) const { return weights_[block]; }
  const ad::Tensor& bias(std::size_t block) const { return biases_[block]; }

  /// W1, b1, W2, b2, ...
  std::vector<ad::Tensor> parameters() const;
  Mlp with_parameters(std::span<const ad::Tensor> params) const;

  /// Parameters registered as leaves of the tape.
  Mlp tracked(ad::Tape& tape) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<ad::Tensor> weights_;
  std::vector<ad::Tensor> biases_;
};

/// Representations of one batch: [0] is the input, [l] the output of block l;
/// the last entry is the network output.
struct ActivationTrace {
  std::vector<ad::Tensor> representations;

  const ad::Tensor& input() const { return representations.front(); }
  const ad::Tensor& block(std::size_t l) const { return representations.at(l); }
  const ad::Tensor& output() const { return representations.back(); }
  std::size_t blocks() const { return representations.size() - 1; }
};

/// Tape-aware forward pass keeping every block output.
ActivationTrace forward_traced(const Mlp& net, const ad::Tensor& batch);

/// Plain loop evaluation; never records on a tape.
ad::Tensor forward(const Mlp& net, const ad::Tensor& batch);

/// "layers: n0 n1 ... nL" header, then per block the weight rows followed by
/// the bias row, 17 significant digits.
void save_weights(const Mlp& net, std::ostream& os);
void save_weights(const Mlp& net, const std::filesystem::path& path);
/// Throws FormatError with the line number on malformed input.
Mlp load_weights(std::istream& is);
Mlp load_weights(const std::filesystem::path& path);

}  // namespace lgg::model
