#include "lgg/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"
#include "lgg/graph.hpp"
#include "lgg/objectives.hpp"

namespace lgg::harness {

using ad::Tensor;

std::size_t Classifier::classes() const {
  return head == HeadKind::softmax ? net.output_dim() : centroids.rows();
}

Tensor Classifier::scores(const Tensor& x) const {
  const Tensor f = model::forward_traced(net, x).output();
  if (head == HeadKind::softmax) return f;
  // -|f|^2 + 2 f mu^T - |mu|^2
  const std::size_t c = centroids.rows();
  std::vector<double> mu_sq(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < centroids.cols(); ++j) mu_sq[k] += centroids.at(k, j) * centroids.at(k, j);
  }
  const Tensor cross = ad::scale(ad::matmul(f, ad::transpose(centroids)), 2.0);
  const Tensor f_sq = ad::repeat_cols(ad::row_sums(ad::square(f)), c);
  const Tensor mu_rows = ad::repeat_rows(Tensor::matrix(1, c, std::move(mu_sq)), f.rows());
  return ad::sub(ad::sub(cross, f_sq), mu_rows);
}

std::vector<int> Classifier::predict(const Tensor& x) const {
  ad::NoTapeScope quiet;
  const Tensor f = model::forward(net, x);
  const std::size_t b = f.rows(), c = classes();
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    double best = -INFINITY;
    int arg = 0;
    for (std::size_t k = 0; k < c; ++k) {
      double s = 0.0;
      if (head == HeadKind::softmax) {
        s = f.at(i, k);
      } else {
        for (std::size_t j = 0; j < f.cols(); ++j) {
          const double d = f.at(i, j) - centroids.at(k, j);
          s -= d * d;
        }
      }
      if (s > best) {
        best = s;
        arg = static_cast<int>(k);
      }
    }
    out[i] = arg;
  }
  return out;
}

Classifier softmax_classifier(model::Mlp net) { return Classifier{std::move(net), HeadKind::softmax, Tensor()}; }

Classifier centroid_classifier(model::Mlp net, const data::Batch& train, std::size_t classes) {
  const Tensor f = model::forward(net, train.x);
  const std::size_t d = f.cols();
  std::vector<double> mu(classes * d, 0.0);
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto c = static_cast<std::size_t>(train.y[i]);
    ++count[c];
    for (std::size_t j = 0; j < d; ++j) mu[c * d + j] += f.at(i, j);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (count[c] == 0) throw DegenerateInputError("centroid head: class " + std::to_string(c) + " has no sample");
    for (std::size_t j = 0; j < d; ++j) mu[c * d + j] /= static_cast<double>(count[c]);
  }
  return Classifier{std::move(net), HeadKind::centroid, Tensor::matrix(classes, d, std::move(mu))};
}

double accuracy(const Classifier& c, const data::Batch& batch) {
  const auto pred = c.predict(batch.x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == batch.y[i];
  return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
}

ClipRange feature_range(const Tensor& x) {
  ClipRange r{std::vector<double>(x.cols(), INFINITY), std::vector<double>(x.cols(), -INFINITY)};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      r.lo[j] = std::min(r.lo[j], x.at(i, j));
      r.hi[j] = std::max(r.hi[j], x.at(i, j));
    }
  }
  return r;
}

double mean_feature_std(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0 || d == 0) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += x.at(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (x.at(i, j) - m) * (x.at(i, j) - m);
    total += std::sqrt(v / static_cast<double>(n));
  }
  return total / static_cast<double>(d);
}

Tensor fgsm_attack(const Classifier& c, const Tensor& x, std::span<const int> y, double epsilon,
                   const ClipRange* clip) {
  if (!(epsilon >= 0.0)) throw UsageError("fgsm: epsilon must be >= 0");
  std::vector<double> adv(x.values());
  if (epsilon > 0.0) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const Tensor xv = tape.variable(x.detach());
    const Tensor loss = obj::cross_entropy_loss(c.scores(xv), y);
    const Tensor g = tape.backward(loss).of(xv);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double s = g.at(i) > 0.0 ? 1.0 : (g.at(i) < 0.0 ? -1.0 : 0.0);
      adv[i] += epsilon * s;
    }
  }
  if (clip) {
    const std::size_t d = x.cols();
    const auto& xs = x.data();
    for (std::size_t i = 0; i < adv.size(); ++i) {
      // A point already outside the range is never pulled further than epsilon.
      const double lo = std::min(clip->lo[i % d], xs[i]), hi = std::max(clip->hi[i % d], xs[i]);
      adv[i] = std::clamp(adv[i], lo, hi);
    }
  }
  return Tensor::matrix(x.rows(), x.cols(), std::move(adv));
}

std::vector<Corruption> default_corruption_suite() {
  return {{"gaussian_noise", CorruptionKind::gaussian_noise, {0.1, 0.2, 0.4}},
          {"uniform_noise", CorruptionKind::uniform_noise, {0.1, 0.2, 0.4}},
          {"feature_dropout", CorruptionKind::feature_dropout, {0.05, 0.10, 0.20}}};
}

Tensor corrupt(const Tensor& x, CorruptionKind kind, double severity, double feature_std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(x.values());
  switch (kind) {
    case CorruptionKind::gaussian_noise: {
      std::normal_distribution<double> n(0.0, severity * feature_std);
      for (auto& e : v) e += n(rng);
      break;
    }
    case CorruptionKind::uniform_noise: {
      // Half-width sqrt(3) sigma gives standard deviation sigma.
      const double a = std::sqrt(3.0) * severity * feature_std;
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& e : v) e += u(rng);
      break;
    }
    case CorruptionKind::feature_dropout: {
      std::bernoulli_distribution drop(std::clamp(severity, 0.0, 1.0));
      for (auto& e : v) {
        if (drop(rng)) e = 0.0;
      }
      break;
    }
  }
  return Tensor::matrix(x.rows(), x.cols(), std::move(v));
}

CorruptionTable corruption_eval(const Classifier& c, const data::Batch& test, std::span<const Corruption> suite,
                                double feature_std, std::uint64_t seed) {
  if (suite.empty()) throw UsageError("corruption_eval: empty suite");
  CorruptionTable t;
  t.suite.assign(suite.begin(), suite.end());
  t.clean_error = 1.0 - accuracy(c, test);
  for (std::size_t k = 0; k < suite.size(); ++k) {
    std::vector<double> row;
    for (std::size_t s = 0; s < suite[k].severities.size(); ++s) {
      std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(s)};
      std::uint32_t w[2];
      ss.generate(w, w + 2);
      const std::uint64_t draw = (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
      const Tensor xc = corrupt(test.x, suite[k].kind, suite[k].severities[s], feature_std, draw);
      row.push_back(1.0 - accuracy(c, data::Batch{xc, test.y}));
    }
    t.errors.push_back(std::move(row));
  }
  return t;
}

double relative_mce(const CorruptionTable& model, const CorruptionTable& baseline) {
  if (model.errors.size() != baseline.errors.size() || model.errors.empty()) {
    throw UsageError("relative_mce: tables cover different corruption suites");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < model.errors.size(); ++k) {
    if (model.errors[k].size() != baseline.errors[k].size() ||
        (k < model.suite.size() && k < baseline.suite.size() &&
         (model.suite[k].name != baseline.suite[k].name || model.suite[k].kind != baseline.suite[k].kind ||
          model.suite[k].severities != baseline.suite[k].severities))) {
      throw UsageError("relative_mce: tables cover different corruption suites");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < model.errors[k].size(); ++s) {
      num += model.errors[k][s];
      den += baseline.errors[k][s];
    }
    if (den <= 0.0) {
      const std::string name = k < baseline.suite.size() ? baseline.suite[k].name : std::to_string(k);
      throw DegenerateInputError("relative_mce: baseline error is zero for corruption " + name);
    }
    acc += num / den;
  }
  return 100.0 * (acc / static_cast<double>(model.errors.size()));
}

void write_corruption_table(std::ostream& os, const CorruptionTable& t) {
  os << "corruption,severity,error\n";
  for (std::size_t k = 0; k < t.errors.size(); ++k) {
    const std::string& name = t.suite[k].name;
    os << name << ",0," << graph::format_sig(t.clean_error, 9) << '\n';
    for (std::size_t s = 0; s < t.errors[k].size(); ++s) {
      os << name << ',' << (s + 1) << ',' << graph::format_sig(t.errors[k][s], 9) << '\n';
    }
  }
}

}  // namespace lgg::harness
