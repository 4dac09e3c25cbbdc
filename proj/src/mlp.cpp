#include "lgg/mlp.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"
#include "lgg/graph.hpp"

namespace lgg::model {

using ad::Tensor;

Mlp::Mlp(std::vector<std::size_t> layer_sizes, std::vector<Tensor> weights, std::vector<Tensor> biases)
    : sizes_(std::move(layer_sizes)), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (sizes_.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
  for (auto s : sizes_) {
    if (s == 0) throw ShapeError("layer sizes must be positive");
  }
  const std::size_t blocks = sizes_.size() - 1;
  if (weights_.size() != blocks || biases_.size() != blocks) {
    throw ShapeError("expected " + std::to_string(blocks) + " weight and bias tensors");
  }
  for (std::size_t l = 0; l < blocks; ++l) {
    const ad::Shape w{sizes_[l], sizes_[l + 1]}, b{1, sizes_[l + 1]};
    if (weights_[l].shape() != w || biases_[l].shape() != b) {
      throw ShapeError("block " + std::to_string(l + 1) + ": expected weight " + ad::to_string(w) +
                       " and bias " + ad::to_string(b) + ", got " + ad::to_string(weights_[l].shape()) +
                       " and " + ad::to_string(biases_[l].shape()));
    }
  }
}

Mlp Mlp::initialize(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t in = layer_sizes[l], out = layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out), b(out);
    for (auto& v : w) v = u(rng);
    for (auto& v : b) v = u(rng);
    ws.push_back(Tensor::matrix(in, out, std::move(w)));
    bs.push_back(Tensor::matrix(1, out, std::move(b)));
  }
  return Mlp(std::move(layer_sizes), std::move(ws), std::move(bs));
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < blocks(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < blocks(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

Mlp Mlp::with_parameters(std::span<const Tensor> params) const {
  if (params.size() != 2 * blocks()) {
    throw ShapeError("expected " + std::to_string(2 * blocks()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l < blocks(); ++l) {
    ws.push_back(params[2 * l]);
    bs.push_back(params[2 * l + 1]);
  }
  return Mlp(sizes_, std::move(ws), std::move(bs));
}

Mlp Mlp::tracked(ad::Tape& tape) const {
  std::vector<Tensor> params;
  for (const auto& p : parameters()) params.push_back(tape.variable(p));
  return with_parameters(params);
}

ActivationTrace forward_traced(const Mlp& net, const Tensor& batch) {
  if (batch.rank() != 2 || batch.cols() != net.input_dim()) {
    throw UsageError("forward: batch of shape " + ad::to_string(batch.shape()) +
                     " does not match input dimension " + std::to_string(net.input_dim()));
  }
  ActivationTrace trace;
  trace.representations.push_back(batch);
  Tensor x = batch;
  for (std::size_t l = 0; l < net.blocks(); ++l) {
    x = ad::add_row_bias(ad::matmul(x, net.weight(l)), net.bias(l));
    if (l + 1 < net.blocks()) x = ad::relu(x);
    trace.representations.push_back(x);
  }
  return trace;
}

Tensor forward(const Mlp& net, const Tensor& batch) {
  if (batch.rank() != 2 || batch.cols() != net.input_dim()) {
    throw UsageError("forward: batch of shape " + ad::to_string(batch.shape()) +
                     " does not match input dimension " + std::to_string(net.input_dim()));
  }
  const std::size_t rows = batch.rows();
  std::vector<double> x(batch.values());
  for (std::size_t l = 0; l < net.blocks(); ++l) {
    const std::size_t in = net.layer_sizes()[l], out = net.layer_sizes()[l + 1];
    const auto w = net.weight(l).data();
    const auto b = net.bias(l).data();
    std::vector<double> y(rows * out);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < out; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < in; ++p) s += x[i * in + p] * w[p * out + j];
        s += b[j];
        y[i * out + j] = (l + 1 < net.blocks() && s < 0.0) ? 0.0 : s;
      }
    }
    x = std::move(y);
  }
  return Tensor::matrix(rows, net.output_dim(), std::move(x));
}

// ---------------------------------------------------------------- weights file

void save_weights(const Mlp& net, std::ostream& os) {
  os << "layers:";
  for (auto s : net.layer_sizes()) os << ' ' << s;
  os << '\n';
  auto write_row = [&os](std::span<const double> row) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << graph::format_sig(row[j], 17);
    os << '\n';
  };
  for (std::size_t l = 0; l < net.blocks(); ++l) {
    const auto& w = net.weight(l);
    for (std::size_t i = 0; i < w.rows(); ++i) write_row(w.data().subspan(i * w.cols(), w.cols()));
    write_row(net.bias(l).data());
  }
}

void save_weights(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save_weights(net, os);
  if (!os) throw IoError("write failed for " + path.string());
}

Mlp load_weights(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(is, line)) {
      throw FormatError("weights file: unexpected end of file after line " + std::to_string(line_no));
    }
    ++line_no;
    return line;
  };

  std::istringstream header(next_line());
  std::string tag;
  header >> tag;
  if (tag != "layers:") throw FormatError("weights file line 1: expected 'layers:' header");
  std::vector<std::size_t> sizes;
  long long s = 0;
  while (header >> s) {
    if (s <= 0) throw FormatError("weights file line 1: layer sizes must be positive");
    sizes.push_back(static_cast<std::size_t>(s));
  }
  if (!header.eof() || sizes.size() < 2) {
    throw FormatError("weights file line 1: expected at least two integer layer sizes");
  }

  auto read_row = [&](std::size_t n) {
    std::vector<double> row;
    row.reserve(n);
    const std::string& text = next_line();
    const char* p = text.c_str();
    while (*p) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (!*p) break;
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) {
        throw FormatError("weights file line " + std::to_string(line_no) + ", column " +
                          std::to_string(p - text.c_str() + 1) + ": not a number");
      }
      row.push_back(v);
      p = end;
    }
    if (row.size() != n) {
      throw FormatError("weights file line " + std::to_string(line_no) + ": expected " +
                        std::to_string(n) + " values, got " + std::to_string(row.size()));
    }
    return row;
  };

  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    std::vector<double> w;
    for (std::size_t i = 0; i < sizes[l]; ++i) {
      auto row = read_row(sizes[l + 1]);
      w.insert(w.end(), row.begin(), row.end());
    }
    ws.push_back(Tensor::matrix(sizes[l], sizes[l + 1], std::move(w)));
    bs.push_back(Tensor::matrix(1, sizes[l + 1], read_row(sizes[l + 1])));
  }
  return Mlp(std::move(sizes), std::move(ws), std::move(bs));
}

Mlp load_weights(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return load_weights(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lgg::model
