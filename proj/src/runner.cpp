#include "lgg/runner.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "lgg/compose.hpp"
#include "lgg/errors.hpp"

namespace lgg::harness {

namespace fs = std::filesystem;
using ad::Tensor;

namespace {

class CheckedScope {
 public:
  explicit CheckedScope(bool on) : previous_(ad::checked()) { ad::set_checked(on); }
  ~CheckedScope() { ad::set_checked(previous_); }
  CheckedScope(const CheckedScope&) = delete;
  CheckedScope& operator=(const CheckedScope&) = delete;

 private:
  bool previous_;
};

std::string num(double v) { return graph::format_sig(v, 17); }

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  std::vector<double> v(a.values());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return Tensor::matrix(a.rows() + b.rows(), a.cols(), std::move(v));
}

Classifier make_classifier(const model::Mlp& net, HeadKind head, const data::Batch& train, std::size_t classes) {
  return head == HeadKind::softmax ? softmax_classifier(net) : centroid_classifier(net, train, classes);
}

Tensor batch_objective(const TrainOptions& opt, const model::Mlp& net, const data::Batch& batch,
                       std::vector<double>* sigmas) {
  const auto trace = model::forward_traced(net, batch.x);
  switch (opt.objective) {
    case ObjectiveKind::cross_entropy:
      return obj::cross_entropy_loss(trace.output(), batch.y);
    case ObjectiveKind::label_variation:
      return obj::label_variation_loss(trace.output(), batch.y, opt.graph);
    case ObjectiveKind::cross_entropy_regularized: {
      const Tensor task = obj::cross_entropy_loss(trace.output(), batch.y);
      auto reg = obj::smoothness_regularizer(trace.representations, batch.y, opt.graph);
      if (sigmas) *sigmas = reg.sigmas;
      return ad::add(task, ad::scale(reg.value, opt.weights.gamma));
    }
    case ObjectiveKind::distill: {
      const Tensor task = obj::cross_entropy_loss(trace.output(), batch.y);
      std::vector<Tensor> kd;
      if (opt.weights.lambda_kd != 0.0) {
        const auto teacher = model::forward_traced(*opt.teacher, batch.x);
        for (const auto& [t, s] : opt.pairing.pairs) {
          const auto gt = graph::build_lgg(teacher.block(t), opt.graph);
          const auto gs = graph::build_lgg(trace.block(s), opt.graph);
          kd.push_back(obj::gkd_loss(gt, gs));
        }
      }
      return obj::distillation_objective(task, kd, opt.weights);
    }
  }
  throw UsageError("unknown objective");
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing: " + std::strerror(errno));
  body(os);
  os.flush();
  if (!os) throw IoError("write failed for " + path.string() + ": " + std::strerror(errno));
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_metrics(const fs::path& path, const std::vector<EpochMetrics>& rows) {
  write_file(path, [&](std::ostream& os) {
    const std::size_t layers = rows.empty() ? 0 : rows.front().sigmas.size();
    os << "epoch,train_loss,train_acc,test_acc";
    for (std::size_t l = 0; l < layers; ++l) os << ",sigma_" << l;
    os << '\n';
    for (const auto& r : rows) {
      os << r.epoch << ',' << num(r.train_loss) << ',' << num(r.train_acc) << ',' << num(r.test_acc);
      for (double s : r.sigmas) os << ',' << num(s);
      os << '\n';
    }
  });
}

void write_summary(const fs::path& path, const RunRecord& rec) {
  write_file(path, [&](std::ostream& os) {
    for (const auto& [k, v] : rec.summary) os << k << " = " << v << '\n';
  });
}

TrainOptions options_from(const ExperimentConfig& cfg) {
  TrainOptions opt;
  opt.objective = cfg.objective;
  opt.head = cfg.resolved_head();
  opt.weights = cfg.weights_kd;
  opt.graph = cfg.resolved_graph();
  opt.optim = cfg.optim;
  opt.seed = cfg.seed;
  return opt;
}

std::size_t output_dim(const ExperimentConfig& cfg, const data::Dataset& ds) {
  const std::size_t out = cfg.output_dim ? cfg.output_dim : ds.num_classes;
  if (cfg.resolved_head() == HeadKind::softmax && out != ds.num_classes) {
    throw ConfigError("model.output = " + std::to_string(out) + " but the data has " +
                      std::to_string(ds.num_classes) + " classes (softmax head)");
  }
  return out;
}

void check_input(const model::Mlp& net, const data::Dataset& ds, std::string_view what) {
  if (net.input_dim() != ds.dim()) {
    throw ConfigError(std::string(what) + " expects " + std::to_string(net.input_dim()) +
                      " input features, the data has " + std::to_string(ds.dim()));
  }
}

void common_summary(RunRecord& rec, const ExperimentConfig& cfg, std::string_view command) {
  rec.summary.emplace_back("command", std::string(command));
  rec.summary.emplace_back("seed", std::to_string(cfg.seed));
}

void finish_training_record(RunRecord& rec, const ExperimentConfig& cfg, const TrainResult& res) {
  rec.metrics = res.metrics;
  rec.classifier = res.classifier;
  const auto& net = res.classifier.net;
  std::string sizes;
  for (auto s : net.layer_sizes()) sizes += (sizes.empty() ? "" : ",") + std::to_string(s);
  rec.summary.emplace_back("objective", std::string(to_string(cfg.objective)));
  rec.summary.emplace_back("head", std::string(to_string(cfg.resolved_head())));
  rec.summary.emplace_back("layers", sizes);
  rec.summary.emplace_back("parameters", std::to_string(net.parameter_count()));
  rec.summary.emplace_back("epochs", std::to_string(res.metrics.size()));
  if (!res.metrics.empty()) {
    rec.summary.emplace_back("final_train_loss", num(res.metrics.back().train_loss));
    rec.summary.emplace_back("final_train_acc", num(res.metrics.back().train_acc));
    rec.summary.emplace_back("final_test_acc", num(res.metrics.back().test_acc));
  }
  rec.summary.emplace_back("weights", "weights.txt");
}

void persist_training(const RunRecord& rec, const ExperimentConfig& cfg) {
  prepare_dir(rec.out_dir);
  write_file(rec.out_dir / "config.txt", [&](std::ostream& os) { os << cfg.source_text; });
  write_metrics(rec.out_dir / "metrics.csv", rec.metrics);
  model::save_weights(rec.classifier->net, rec.out_dir / "weights.txt");
  write_summary(rec.out_dir / "summary.txt", rec);
}

}  // namespace

std::vector<std::size_t> layer_sizes(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output) {
  std::vector<std::size_t> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  return sizes;
}

model::Mlp initial_network(std::vector<std::size_t> sizes, std::uint64_t seed) {
  return model::Mlp::initialize(std::move(sizes), seed ^ 0x9e3779b97f4a7c15ULL);
}

TrainResult fit(model::Mlp net, const data::Dataset& ds, const TrainOptions& opt) {
  opt.weights.validate();
  if (opt.objective == ObjectiveKind::distill) {
    if (!opt.teacher) throw UsageError("distillation needs a teacher network");
    opt.pairing.validate(opt.teacher->blocks(), net.blocks());
    if (opt.teacher->input_dim() != net.input_dim()) throw UsageError("teacher and student inputs differ");
  }
  if (opt.optim.adversarial_training && opt.head != HeadKind::softmax) {
    throw UsageError("adversarial training needs the softmax head");
  }
  const data::StratifiedBatches batches(ds, data::Split::train, opt.optim.batch_size, opt.seed,
                                        opt.optim.stratified);
  const data::Batch train = ds.subset(data::Split::train);
  const data::Batch test = ds.subset(data::Split::test);

  ClipRange clip;
  double adv_eps = 0.0;
  if (opt.optim.adversarial_training) {
    clip = feature_range(train.x);
    adv_eps = opt.optim.adversarial_epsilon * mean_feature_std(train.x);
  }

  TrainResult out{softmax_classifier(net), {}};
  const std::size_t epochs = opt.optim.epochs;
  for (std::size_t e = 0; e < epochs; ++e) {
    const double lr = opt.optim.linear_decay
                          ? opt.optim.lr * (1.0 - static_cast<double>(e) / static_cast<double>(epochs))
                          : opt.optim.lr;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::vector<double> sigma_sum;
    const auto plan = batches.epoch(e);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      try {
        data::Batch batch = ds.gather(plan[b]);
        if (opt.optim.adversarial_training) {
          const Tensor adv = fgsm_attack(softmax_classifier(net), batch.x, batch.y, adv_eps, &clip);
          batch.x = stack_rows(batch.x, adv);
          const std::vector<int> y = batch.y;
          batch.y.insert(batch.y.end(), y.begin(), y.end());
        }
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const model::Mlp tracked = net.tracked(tape);
        std::vector<double> sigmas;
        const Tensor loss = batch_objective(opt, tracked, batch, &sigmas);
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericError("objective is " + std::to_string(value));
        const auto grads = tape.backward(loss);

        std::vector<Tensor> next;
        for (const auto& p : tracked.parameters()) {
          const Tensor g = grads.of(p);
          std::vector<double> v(p.values());
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g.at(i);
          next.push_back(Tensor(p.shape(), std::move(v)));
        }
        net = net.with_parameters(next);

        const double w = static_cast<double>(batch.y.size());
        loss_sum += w * value;
        seen += batch.y.size();
        if (!sigmas.empty()) {
          sigma_sum.resize(sigmas.size(), 0.0);
          for (std::size_t l = 0; l < sigmas.size(); ++l) sigma_sum[l] += w * sigmas[l];
        }
      } catch (const NumericError& err) {
        throw NumericError("epoch " + std::to_string(e + 1) + ", batch " + std::to_string(b + 1) + ": " +
                           err.what());
      }
    }

    EpochMetrics m;
    m.epoch = e + 1;
    m.train_loss = loss_sum / static_cast<double>(seen);
    try {
      out.classifier = make_classifier(net, opt.head, train, ds.num_classes);
      m.train_acc = accuracy(out.classifier, train);
      m.test_acc = accuracy(out.classifier, test);
    } catch (const NumericError& err) {
      throw NumericError("epoch " + std::to_string(e + 1) + ", evaluation: " + err.what());
    }
    for (double s : sigma_sum) m.sigmas.push_back(s / static_cast<double>(seen));
    out.metrics.push_back(std::move(m));
  }
  if (epochs == 0) out.classifier = make_classifier(net, opt.head, train, ds.num_classes);
  return out;
}

data::Dataset load_dataset(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  const std::uint64_t seed = d.seed.value_or(cfg.seed);
  data::Dataset ds;
  switch (d.kind) {
    case DataKind::blobs: {
      data::BlobsSpec spec;
      spec.classes = d.classes;
      spec.per_class = d.per_class;
      spec.test_per_class = d.test_per_class;
      spec.dim = d.dim;
      spec.separation = d.separation;
      spec.seed = seed;
      ds = data::make_blobs(spec);
      break;
    }
    case DataKind::rings:
      ds = data::make_rings(data::RingsSpec{d.per_class, d.test_per_class, d.noise, seed});
      break;
    case DataKind::csv:
      ds = data::concat(data::load_csv_dataset(d.csv_train, d.label_column, data::Split::train),
                        data::load_csv_dataset(d.csv_test, d.label_column, data::Split::test));
      break;
    case DataKind::idx:
      ds = data::concat(data::load_idx_pair(d.idx_train_images, d.idx_train_labels, data::Split::train),
                        data::load_idx_pair(d.idx_test_images, d.idx_test_labels, data::Split::test));
      break;
  }
  ds.validate();
  return ds;
}

RobustnessReport evaluate_robustness(const Classifier& c, const data::Dataset& ds, double eps_factor,
                                     std::uint64_t seed) {
  const data::Batch train = ds.subset(data::Split::train);
  const data::Batch test = ds.subset(data::Split::test);
  const double fstd = mean_feature_std(train.x);
  const ClipRange clip = feature_range(train.x);

  RobustnessReport r;
  r.epsilon = eps_factor * fstd;
  r.clean_acc = accuracy(c, test);
  const Tensor adv = fgsm_attack(c, test.x, test.y, r.epsilon, &clip);
  r.fgsm_acc = accuracy(c, data::Batch{adv, test.y});
  const auto suite = default_corruption_suite();
  r.corruptions = corruption_eval(c, test, suite, fstd, seed);
  return r;
}

std::vector<std::size_t> inspection_rows(const data::Dataset& ds, const InspectConfig& ic, std::uint64_t seed) {
  const std::size_t classes = ic.classes == 0 ? ds.num_classes : std::min(ic.classes, ds.num_classes);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (auto i : ds.indices(data::Split::test)) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    if (c < classes) by_class[c].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> rows;
  std::size_t present = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t take = std::min(ic.per_class, members.size());
    std::vector<std::size_t> pick(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(pick.begin(), pick.end());
    rows.insert(rows.end(), pick.begin(), pick.end());
    present += take > 0;
  }
  if (present < 2) throw UsageError("graph-inspect: the sample must hold at least two classes");
  return rows;
}

std::vector<LayerReport> inspect_layers(const model::Mlp& net, const data::Batch& sample,
                                        const graph::GraphParams& params) {
  ad::NoTapeScope quiet;
  graph::GraphParams p = params;
  p.normalize = false;
  const auto trace = model::forward_traced(net, sample.x);
  const graph::LabelIndicatorMatrix v(sample.y);
  std::vector<LayerReport> out;
  for (std::size_t l = 0; l < trace.representations.size(); ++l) {
    LayerReport r;
    r.name = l == 0 ? "input" : "block" + std::to_string(l);
    r.graph = graph::build_lgg(trace.representations[l], p);
    r.sigma = graph::normalized_label_variation(r.graph, v);
    r.eigenmap = graph::eigenmap_coords(r.graph, 2);
    out.push_back(std::move(r));
  }
  return out;
}

RunRecord run_train(const ExperimentConfig& cfg) {
  validate_config(cfg, "train");
  CheckedScope checked(cfg.checked);
  const auto ds = load_dataset(cfg);
  const auto sizes = layer_sizes(ds.dim(), cfg.hidden, output_dim(cfg, ds));
  const auto res = fit(initial_network(sizes, cfg.seed), ds, options_from(cfg));

  RunRecord rec;
  rec.out_dir = cfg.out_dir;
  common_summary(rec, cfg, "train");
  finish_training_record(rec, cfg, res);
  persist_training(rec, cfg);
  return rec;
}

RunRecord run_distill(const ExperimentConfig& cfg) {
  validate_config(cfg, "distill");
  CheckedScope checked(cfg.checked);
  const auto ds = load_dataset(cfg);
  const model::Mlp teacher = model::load_weights(cfg.teacher_weights);
  const auto teacher_sizes = layer_sizes(ds.dim(), cfg.teacher_hidden, ds.num_classes);
  if (teacher.layer_sizes() != teacher_sizes) {
    throw ConfigError("teacher.weights " + cfg.teacher_weights.string() + " do not match teacher.hidden and the data");
  }
  const auto sizes = layer_sizes(ds.dim(), cfg.hidden, output_dim(cfg, ds));
  const model::Mlp init = initial_network(sizes, cfg.seed);
  if (init.parameter_count() >= teacher.parameter_count()) {
    throw ConfigError("student has " + std::to_string(init.parameter_count()) + " parameters, not fewer than the teacher's " +
                      std::to_string(teacher.parameter_count()));
  }

  TrainOptions opt = options_from(cfg);
  opt.teacher = &teacher;
  opt.pairing = cfg.pairing.value_or(obj::LayerPairing::automatic(teacher.hidden_blocks(), init.hidden_blocks()));
  try {
    opt.pairing.validate(teacher.blocks(), init.blocks());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("objective.pairing: ") + e.what());
  }

  const auto res = fit(init, ds, opt);
  RunRecord rec;
  rec.out_dir = cfg.out_dir;
  common_summary(rec, cfg, "distill");
  finish_training_record(rec, cfg, res);
  rec.summary.emplace_back("teacher_parameters", std::to_string(teacher.parameter_count()));
  std::string pairs;
  for (const auto& [t, s] : opt.pairing.pairs) {
    pairs += (pairs.empty() ? "" : ",") + std::to_string(t) + ":" + std::to_string(s);
  }
  rec.summary.emplace_back("pairing", pairs);
  rec.summary.emplace_back("lambda_kd", num(cfg.weights_kd.lambda_kd));
  rec.summary.emplace_back("teacher_test_acc", num(accuracy(softmax_classifier(teacher), ds.subset(data::Split::test))));

  std::vector<EpochMetrics> baseline;
  if (cfg.student_baseline) {
    TrainOptions plain = opt;
    plain.objective = ObjectiveKind::cross_entropy;
    plain.teacher = nullptr;
    baseline = fit(init, ds, plain).metrics;
    rec.summary.emplace_back("baseline_test_acc", num(baseline.empty() ? 0.0 : baseline.back().test_acc));
  }
  persist_training(rec, cfg);
  if (cfg.student_baseline) write_metrics(rec.out_dir / "baseline_metrics.csv", baseline);
  return rec;
}

RunRecord run_evaluate(const ExperimentConfig& cfg) {
  validate_config(cfg, "evaluate");
  CheckedScope checked(cfg.checked);
  const auto ds = load_dataset(cfg);
  const data::Batch train = ds.subset(data::Split::train);

  model::Mlp net = model::load_weights(cfg.weights);
  check_input(net, ds, "model.weights");
  const Classifier c = make_classifier(net, cfg.resolved_head(), train, ds.num_classes);
  const auto report = evaluate_robustness(c, ds, cfg.eval.fgsm_epsilon, cfg.seed);

  RunRecord rec;
  rec.out_dir = cfg.out_dir;
  rec.classifier = c;
  common_summary(rec, cfg, "evaluate");
  rec.summary.emplace_back("head", std::string(to_string(c.head)));
  rec.summary.emplace_back("clean_acc", num(report.clean_acc));
  rec.summary.emplace_back("fgsm_epsilon_factor", num(cfg.eval.fgsm_epsilon));
  rec.summary.emplace_back("fgsm_epsilon", num(report.epsilon));
  rec.summary.emplace_back("fgsm_acc", num(report.fgsm_acc));

  std::optional<CorruptionTable> base_table;
  if (!cfg.eval.baseline_weights.empty()) {
    model::Mlp base = model::load_weights(cfg.eval.baseline_weights);
    check_input(base, ds, "eval.baseline_weights");
    const Classifier bc = make_classifier(base, cfg.eval.baseline_head.value_or(HeadKind::softmax), train,
                                          ds.num_classes);
    base_table = evaluate_robustness(bc, ds, cfg.eval.fgsm_epsilon, cfg.seed).corruptions;
    rec.summary.emplace_back("relative_mce", num(relative_mce(report.corruptions, *base_table)));
  }

  prepare_dir(rec.out_dir);
  write_file(rec.out_dir / "config.txt", [&](std::ostream& os) { os << cfg.source_text; });
  write_file(rec.out_dir / "corruption.csv",
             [&](std::ostream& os) { write_corruption_table(os, report.corruptions); });
  if (base_table) {
    write_file(rec.out_dir / "baseline_corruption.csv",
               [&](std::ostream& os) { write_corruption_table(os, *base_table); });
  }
  write_summary(rec.out_dir / "summary.txt", rec);
  return rec;
}

RunRecord run_graph_inspect(const ExperimentConfig& cfg) {
  validate_config(cfg, "graph-inspect");
  CheckedScope checked(cfg.checked);
  const auto ds = load_dataset(cfg);
  const model::Mlp net = model::load_weights(cfg.weights);
  check_input(net, ds, "model.weights");

  const auto rows = inspection_rows(ds, cfg.inspect, cfg.seed);
  const data::Batch sample = ds.gather(rows);
  const auto layers = inspect_layers(net, sample, cfg.graph);

  RunRecord rec;
  rec.out_dir = cfg.out_dir;
  common_summary(rec, cfg, "graph-inspect");
  rec.summary.emplace_back("samples", std::to_string(rows.size()));
  rec.summary.emplace_back("k", std::to_string(cfg.graph.k));
  for (const auto& l : layers) {
    rec.summary.emplace_back("similarity." + l.name, std::string(graph::to_string(l.graph.similarity)));
    rec.summary.emplace_back("sigma_raw." + l.name, num(l.sigma.raw));
    rec.summary.emplace_back("sigma_normalized." + l.name, l.sigma.normalized ? num(*l.sigma.normalized) : "n/a");
  }

  prepare_dir(rec.out_dir);
  write_file(rec.out_dir / "config.txt", [&](std::ostream& os) { os << cfg.source_text; });
  for (const auto& l : layers) {
    write_file(rec.out_dir / ("edges_" + l.name + ".tsv"), [&](std::ostream& os) {
      graph::write_edge_list(os, l.graph, sample.y, cfg.inspect.inter_class_only);
    });
    write_file(rec.out_dir / ("eigenmap_" + l.name + ".tsv"),
               [&](std::ostream& os) { graph::write_eigenmap(os, l.eigenmap, sample.y); });
  }
  write_file(rec.out_dir / "sigma.tsv", [&](std::ostream& os) {
    os << "layer\tsimilarity\traw_sigma\tnormalized_sigma\tzero_eigenvalues\n";
    for (const auto& l : layers) {
      os << l.name << '\t' << graph::to_string(l.graph.similarity) << '\t' << num(l.sigma.raw) << '\t'
         << (l.sigma.normalized ? num(*l.sigma.normalized) : "n/a") << '\t' << l.eigenmap.zero_multiplicity
         << '\n';
    }
  });
  write_summary(rec.out_dir / "summary.txt", rec);
  return rec;
}

}  // namespace lgg::harness
