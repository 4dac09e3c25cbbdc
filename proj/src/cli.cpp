#include "lgg/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "lgg/config.hpp"
#include "lgg/errors.hpp"
#include "lgg/gradcheck.hpp"
#include "lgg/runner.hpp"

namespace lgg::harness {

namespace {

enum Exit { ok = 0, checks_failed = 1, config_error = 2, numeric_error = 3, io_error = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "experiment config file");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "override run.seed");
  sub->add_option("--out", c.out, "override run.out");
}

ExperimentConfig resolve(const Common& c, std::string_view command) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  validate_config(cfg, command);
  return cfg;
}

void print(std::ostream& out, const RunRecord& rec) {
  for (const auto& [k, v] : rec.summary) out << k << " = " << v << '\n';
  out << "out = " << rec.out_dir.string() << '\n';
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent geometry graph experiments"};
  app.require_subcommand(1);

  Common train_opts, distill_opts, eval_opts, inspect_opts, grad_opts;
  auto* train = app.add_subcommand("train", "train a network with the configured objective");
  add_common(train, train_opts, true);
  auto* distill = app.add_subcommand("distill", "train a student against a teacher's graphs");
  add_common(distill, distill_opts, true);
  auto* evaluate = app.add_subcommand("evaluate", "clean, FGSM and corruption accuracy of saved weights");
  add_common(evaluate, eval_opts, true);
  auto* inspect = app.add_subcommand("graph-inspect", "per-layer graphs, eigenmaps and label variation");
  add_common(inspect, inspect_opts, true);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(gradcheck, grad_opts, false);
  std::string scope = "all";
  bool inject_fault = false;
  gradcheck->add_option("--scope", scope, "primitives, objectives or all");
  gradcheck->add_flag("--inject-fault", inject_fault, "append a case with a deliberately wrong gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return ok;
    }
    err << "error: " << e.what() << '\n';
    return config_error;
  }

  try {
    if (train->parsed()) {
      print(out, run_train(resolve(train_opts, "train")));
    } else if (distill->parsed()) {
      print(out, run_distill(resolve(distill_opts, "distill")));
    } else if (evaluate->parsed()) {
      print(out, run_evaluate(resolve(eval_opts, "evaluate")));
    } else if (inspect->parsed()) {
      print(out, run_graph_inspect(resolve(inspect_opts, "graph-inspect")));
    } else if (gradcheck->parsed()) {
      std::uint64_t seed = 1;
      if (!grad_opts.config.empty()) seed = load_config(grad_opts.config).seed;
      if (grad_opts.seed) seed = *grad_opts.seed;
      auto cases = gradcheck_cases(parse_gradcheck_scope(scope));
      if (inject_fault) cases.push_back(corrupted_gradient_case());
      const auto reports = run_gradcheck(cases, seed);
      write_gradcheck_report(out, reports);
      if (!grad_opts.out.empty()) {
        std::ofstream file(grad_opts.out, std::ios::binary);
        if (!file) throw IoError("cannot open " + grad_opts.out + " for writing");
        write_gradcheck_report(file, reports);
        if (!file.flush()) throw IoError("write failed for " + grad_opts.out);
      }
      for (const auto& r : reports) {
        if (!r.ok()) return checks_failed;
      }
    }
    return ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return config_error;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return config_error;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return io_error;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return io_error;
  } catch (const Error& e) {
    // Numeric, shape and degenerate-input failures.
    err << "numeric error: " << e.what() << '\n';
    return numeric_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return io_error;
  }
}

}  // namespace lgg::harness
