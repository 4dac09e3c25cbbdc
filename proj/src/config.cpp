#include "lgg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "lgg/errors.hpp"

namespace lgg::harness {

namespace fs = std::filesystem;

std::string_view to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::cross_entropy: return "cross-entropy";
    case ObjectiveKind::label_variation: return "label-variation";
    case ObjectiveKind::cross_entropy_regularized: return "cross-entropy+regularizer";
    case ObjectiveKind::distill: return "distill";
  }
  return "?";
}

std::string_view to_string(HeadKind k) { return k == HeadKind::softmax ? "softmax" : "centroid"; }

HeadKind ExperimentConfig::resolved_head() const {
  if (head) return *head;
  return objective == ObjectiveKind::label_variation ? HeadKind::centroid : HeadKind::softmax;
}

bool ExperimentConfig::resolved_normalize() const {
  if (graph_normalize) return *graph_normalize;
  return objective == ObjectiveKind::distill;
}

graph::GraphParams ExperimentConfig::resolved_graph() const {
  graph::GraphParams p = graph;
  p.normalize = resolved_normalize();
  return p;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Line {
  std::size_t number;
  std::string key, value;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(number) + " (" + key + "): " + what);
  }

  double real(double lo, double hi) const {
    double v = 0.0;
    const char* b = value.data();
    const char* e = b + value.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e || !std::isfinite(v)) fail("expected a number, got '" + value + "'");
    if (v < lo || v > hi) {
      std::ostringstream os;
      os << "value " << value << " outside [" << lo << ", " << hi << "]";
      fail(os.str());
    }
    return v;
  }

  std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) const {
    std::uint64_t v = 0;
    const char* b = value.data();
    const char* e = b + value.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e) fail("expected a nonnegative integer, got '" + value + "'");
    if (v < lo || v > hi) {
      fail("value " + value + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return v;
  }

  std::size_t size(std::size_t lo, std::size_t hi) const { return static_cast<std::size_t>(integer(lo, hi)); }

  bool boolean() const {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("expected true or false, got '" + value + "'");
  }

  std::vector<std::size_t> sizes(bool allow_empty) const {
    std::vector<std::size_t> out;
    if (value == "none" || value.empty()) {
      if (!allow_empty) fail("expected a comma-separated list of sizes");
      return out;
    }
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      Line sub{number, key, trim(item)};
      out.push_back(sub.size(1, 100000));
    }
    return out;
  }

  template <class Enum>
  Enum choice(std::initializer_list<std::pair<std::string_view, Enum>> options) const {
    std::string names;
    for (const auto& [name, v] : options) {
      if (value == name) return v;
      names += (names.empty() ? "" : ", ") + std::string(name);
    }
    fail("expected one of " + names + ", got '" + value + "'");
  }
};

obj::LayerPairing parse_pairing(const Line& line) {
  obj::LayerPairing out;
  std::stringstream ss(line.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos) line.fail("pairing entries take the form teacher:student");
    Line t{line.number, line.key, trim(item.substr(0, colon))};
    Line s{line.number, line.key, trim(item.substr(colon + 1))};
    out.pairs.emplace_back(t.size(1, 1000), s.size(1, 1000));
  }
  if (out.pairs.empty()) line.fail("empty pairing");
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  ExperimentConfig cfg;
  cfg.source_text = text;

  auto path_of = [&](const Line& l) {
    if (l.value.empty()) l.fail("empty path");
    fs::path p(l.value);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  using Setter = std::function<void(const Line&)>;
  const std::map<std::string, Setter, std::less<>> setters{
      {"run.seed", [&](const Line& l) { cfg.seed = l.integer(0, UINT64_MAX); }},
      {"run.out", [&](const Line& l) { cfg.out_dir = path_of(l); }},
      {"run.checked", [&](const Line& l) { cfg.checked = l.boolean(); }},

      {"data.kind", [&](const Line& l) {
         cfg.data.kind = l.choice<DataKind>(
             {{"blobs", DataKind::blobs}, {"rings", DataKind::rings}, {"csv", DataKind::csv}, {"idx", DataKind::idx}});
       }},
      {"data.classes", [&](const Line& l) { cfg.data.classes = l.size(2, 1000); }},
      {"data.per_class", [&](const Line& l) { cfg.data.per_class = l.size(1, 1000000); }},
      {"data.test_per_class", [&](const Line& l) { cfg.data.test_per_class = l.size(0, 1000000); }},
      {"data.dim", [&](const Line& l) { cfg.data.dim = l.size(2, 100000); }},
      {"data.separation", [&](const Line& l) { cfg.data.separation = l.real(0.0, 1e6); }},
      {"data.noise", [&](const Line& l) { cfg.data.noise = l.real(0.0, 10.0); }},
      {"data.seed", [&](const Line& l) { cfg.data.seed = l.integer(0, UINT64_MAX); }},
      {"data.csv_train", [&](const Line& l) { cfg.data.csv_train = path_of(l); }},
      {"data.csv_test", [&](const Line& l) { cfg.data.csv_test = path_of(l); }},
      {"data.label_column", [&](const Line& l) {
         if (l.value.empty()) l.fail("empty column name");
         cfg.data.label_column = l.value;
       }},
      {"data.idx_train_images", [&](const Line& l) { cfg.data.idx_train_images = path_of(l); }},
      {"data.idx_train_labels", [&](const Line& l) { cfg.data.idx_train_labels = path_of(l); }},
      {"data.idx_test_images", [&](const Line& l) { cfg.data.idx_test_images = path_of(l); }},
      {"data.idx_test_labels", [&](const Line& l) { cfg.data.idx_test_labels = path_of(l); }},

      {"model.hidden", [&](const Line& l) { cfg.hidden = l.sizes(true); }},
      {"model.output", [&](const Line& l) { cfg.output_dim = l.size(0, 100000); }},
      {"model.head", [&](const Line& l) {
         cfg.head = l.choice<HeadKind>({{"softmax", HeadKind::softmax}, {"centroid", HeadKind::centroid}});
       }},
      {"model.weights", [&](const Line& l) { cfg.weights = path_of(l); }},

      {"teacher.hidden", [&](const Line& l) { cfg.teacher_hidden = l.sizes(true); }},
      {"teacher.weights", [&](const Line& l) { cfg.teacher_weights = path_of(l); }},

      {"objective.kind", [&](const Line& l) {
         cfg.objective = l.choice<ObjectiveKind>({{"cross-entropy", ObjectiveKind::cross_entropy},
                                                  {"label-variation", ObjectiveKind::label_variation},
                                                  {"cross-entropy+regularizer", ObjectiveKind::cross_entropy_regularized},
                                                  {"distill", ObjectiveKind::distill}});
       }},
      {"objective.lambda_kd", [&](const Line& l) { cfg.weights_kd.lambda_kd = l.real(0.0, 1e6); }},
      {"objective.gamma", [&](const Line& l) { cfg.weights_kd.gamma = l.real(0.0, 1e6); }},
      {"objective.pairing", [&](const Line& l) {
         if (l.value == "auto") cfg.pairing.reset();
         else cfg.pairing = parse_pairing(l);
       }},
      {"objective.student_baseline", [&](const Line& l) { cfg.student_baseline = l.boolean(); }},

      {"graph.similarity", [&](const Line& l) {
         cfg.graph.similarity = l.choice<graph::Similarity>({{"cosine", graph::Similarity::cosine},
                                                             {"gaussian", graph::Similarity::gaussian},
                                                             {"auto", graph::Similarity::automatic}});
       }},
      {"graph.k", [&](const Line& l) { cfg.graph.k = l.size(1, 100000); }},
      {"graph.normalize", [&](const Line& l) {
         if (l.value == "auto") cfg.graph_normalize.reset();
         else cfg.graph_normalize = l.boolean();
       }},
      {"graph.bandwidth", [&](const Line& l) {
         if (l.value == "median") cfg.graph.bandwidth.reset();
         else cfg.graph.bandwidth = l.real(1e-12, 1e12);
       }},

      {"optim.lr", [&](const Line& l) { cfg.optim.lr = l.real(0.0, 100.0); }},
      {"optim.epochs", [&](const Line& l) { cfg.optim.epochs = l.size(1, 1000000); }},
      {"optim.batch_size", [&](const Line& l) { cfg.optim.batch_size = l.size(2, 1000000); }},
      {"optim.stratified", [&](const Line& l) { cfg.optim.stratified = l.boolean(); }},
      {"optim.lr_decay", [&](const Line& l) {
         cfg.optim.linear_decay = l.choice<bool>({{"none", false}, {"linear", true}});
       }},
      {"optim.adversarial_training", [&](const Line& l) { cfg.optim.adversarial_training = l.boolean(); }},
      {"optim.adversarial_epsilon", [&](const Line& l) { cfg.optim.adversarial_epsilon = l.real(0.0, 100.0); }},

      {"eval.fgsm_epsilon", [&](const Line& l) { cfg.eval.fgsm_epsilon = l.real(0.0, 100.0); }},
      {"eval.baseline_weights", [&](const Line& l) { cfg.eval.baseline_weights = path_of(l); }},
      {"eval.baseline_head", [&](const Line& l) {
         cfg.eval.baseline_head =
             l.choice<HeadKind>({{"softmax", HeadKind::softmax}, {"centroid", HeadKind::centroid}});
       }},

      {"inspect.per_class", [&](const Line& l) { cfg.inspect.per_class = l.size(1, 100000); }},
      {"inspect.classes", [&](const Line& l) { cfg.inspect.classes = l.size(0, 100000); }},
      {"inspect.inter_class_only", [&](const Line& l) { cfg.inspect.inter_class_only = l.boolean(); }},
  };

  std::set<std::string, std::less<>> seen;
  std::istringstream is(text);
  std::string raw;
  std::size_t number = 0;
  while (std::getline(is, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected 'section.key = value'");
    }
    Line l{number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    const auto it = setters.find(l.key);
    if (it == setters.end()) l.fail("unknown key");
    if (!seen.insert(l.key).second) l.fail("duplicate key");
    it->second(l);
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void validate_config(const ExperimentConfig& cfg, std::string_view command) {
  auto need_file = [](const fs::path& p, std::string_view key) {
    if (p.empty()) throw ConfigError(std::string(key) + " is required");
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(key) + ": no such file " + p.string());
  };

  const auto& d = cfg.data;
  switch (d.kind) {
    case DataKind::blobs:
      if (d.classes > d.dim + 1) {
        throw ConfigError("data.classes = " + std::to_string(d.classes) + " exceeds data.dim + 1 = " +
                          std::to_string(d.dim + 1));
      }
      break;
    case DataKind::rings:
      if (d.classes != 2) throw ConfigError("data.kind = rings needs data.classes = 2");
      break;
    case DataKind::csv:
      need_file(d.csv_train, "data.csv_train");
      need_file(d.csv_test, "data.csv_test");
      break;
    case DataKind::idx:
      need_file(d.idx_train_images, "data.idx_train_images");
      need_file(d.idx_train_labels, "data.idx_train_labels");
      need_file(d.idx_test_images, "data.idx_test_images");
      need_file(d.idx_test_labels, "data.idx_test_labels");
      break;
  }

  if (cfg.objective != ObjectiveKind::label_variation && cfg.resolved_head() == HeadKind::centroid &&
      command != "evaluate") {
    throw ConfigError("model.head = centroid is only trained by objective.kind = label-variation");
  }

  if (command == "distill") {
    if (cfg.objective != ObjectiveKind::distill) throw ConfigError("distill needs objective.kind = distill");
    need_file(cfg.teacher_weights, "teacher.weights");
    if (cfg.teacher_hidden.empty()) throw ConfigError("teacher.hidden must list at least one block");
    if (cfg.hidden.empty()) throw ConfigError("model.hidden must list at least one block for distillation");
  } else if (command == "train") {
    if (cfg.objective == ObjectiveKind::distill) throw ConfigError("objective.kind = distill runs under 'distill'");
  } else if (command == "evaluate" || command == "graph-inspect") {
    need_file(cfg.weights, "model.weights");
    if (command == "evaluate" && !cfg.eval.baseline_weights.empty()) {
      need_file(cfg.eval.baseline_weights, "eval.baseline_weights");
    }
  }
}

}  // namespace lgg::harness
