#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lgg/config.hpp"
#include "lgg/errors.hpp"

using namespace lgg;
using namespace lgg::harness;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "lgg_config_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, DefaultsWhenEmpty) {
  const auto cfg = parse_config("");
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{32, 32}));
  EXPECT_EQ(cfg.objective, ObjectiveKind::cross_entropy);
  EXPECT_DOUBLE_EQ(cfg.weights_kd.lambda_kd, 1.0);
  EXPECT_DOUBLE_EQ(cfg.weights_kd.gamma, 1.0);
  EXPECT_EQ(cfg.graph.k, 5u);
  EXPECT_DOUBLE_EQ(cfg.optim.lr, 0.05);
  EXPECT_FALSE(cfg.resolved_normalize());
  EXPECT_EQ(cfg.resolved_head(), HeadKind::softmax);
}

TEST(Config, ParsesEverySection) {
  const auto cfg = parse_config(R"(# comment line
run.seed = 42
run.out = out/dir   # trailing comment
data.kind = rings
data.classes = 2
data.per_class = 7
data.noise = 0.2
model.hidden = 16, 8
model.output = 6
teacher.hidden = 64,64,64
objective.kind = distill
objective.lambda_kd = 0.5
objective.pairing = 1:1, 3:2
graph.similarity = cosine
graph.k = 3
graph.bandwidth = 1.5
optim.lr = 0.01
optim.epochs = 4
optim.batch_size = 8
optim.lr_decay = linear
optim.stratified = false
eval.fgsm_epsilon = 0.1
inspect.per_class = 3
inspect.inter_class_only = false
)",
                                fs::path("/base"));
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.out_dir, fs::path("/base/out/dir"));
  EXPECT_EQ(cfg.data.kind, DataKind::rings);
  EXPECT_DOUBLE_EQ(cfg.data.noise, 0.2);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(cfg.output_dim, 6u);
  EXPECT_EQ(cfg.teacher_hidden.size(), 3u);
  ASSERT_TRUE(cfg.pairing.has_value());
  EXPECT_EQ(cfg.pairing->pairs.back(), (std::pair<std::size_t, std::size_t>{3, 2}));
  EXPECT_EQ(cfg.graph.similarity, graph::Similarity::cosine);
  EXPECT_EQ(cfg.graph.bandwidth, 1.5);
  EXPECT_TRUE(cfg.resolved_normalize());
  EXPECT_TRUE(cfg.optim.linear_decay);
  EXPECT_FALSE(cfg.optim.stratified);
  EXPECT_FALSE(cfg.inspect.inter_class_only);
}

TEST(Config, ObjectiveDrivenDefaults) {
  EXPECT_EQ(parse_config("objective.kind = label-variation").resolved_head(), HeadKind::centroid);
  EXPECT_FALSE(parse_config("objective.kind = distill\ngraph.normalize = false").resolved_normalize());
  EXPECT_TRUE(parse_config("graph.normalize = true").resolved_graph().normalize);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(error_of("run.seed = 1\nmodel.depth = 3").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("run.seed = 1\nrun.seed = 2").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("optim.lr = fast").find("expected a number"), std::string::npos);
  EXPECT_NE(error_of("optim.lr = -1").find("outside"), std::string::npos);
  EXPECT_NE(error_of("graph.k = 0").find("outside"), std::string::npos);
  EXPECT_NE(error_of("graph.similarity = rbf").find("expected one of"), std::string::npos);
  EXPECT_NE(error_of("no equals sign").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("objective.pairing = 1-1").find("teacher:student"), std::string::npos);
  EXPECT_NE(error_of("run.checked = maybe").find("true or false"), std::string::npos);
}

TEST(Config, SourceTextKeptVerbatim) {
  const std::string text = "run.seed = 3  \n\n# note\n";
  EXPECT_EQ(parse_config(text).source_text, text);
}

TEST(Config, LoadResolvesPathsAgainstFileDirectory) {
  const auto dir = scratch_dir();
  std::ofstream(dir / "a.cfg") << "model.weights = w.txt\n";
  EXPECT_EQ(load_config(dir / "a.cfg").weights, dir / "w.txt");
  EXPECT_THROW(load_config(dir / "missing.cfg"), IoError);
}

TEST(Config, ValidationCrossFieldRules) {
  auto cfg = parse_config("data.classes = 12\ndata.dim = 10");
  EXPECT_THROW(validate_config(cfg, "train"), ConfigError);
  EXPECT_THROW(validate_config(parse_config("data.kind = rings"), "train"), ConfigError);
  EXPECT_NO_THROW(validate_config(parse_config("data.kind = rings\ndata.classes = 2"), "train"));
  EXPECT_THROW(validate_config(parse_config("model.head = centroid"), "train"), ConfigError);
  EXPECT_THROW(validate_config(parse_config("objective.kind = distill"), "train"), ConfigError);
  EXPECT_THROW(validate_config(parse_config("data.kind = csv"), "train"), ConfigError);
  EXPECT_THROW(validate_config(parse_config(""), "evaluate"), ConfigError);
  EXPECT_THROW(validate_config(parse_config("objective.kind = distill"), "distill"), ConfigError);
  EXPECT_THROW(validate_config(parse_config(""), "distill"), ConfigError);
  EXPECT_NO_THROW(validate_config(parse_config(""), "train"));
}

TEST(Config, ValidationFindsReferencedFiles) {
  const auto dir = scratch_dir();
  std::ofstream(dir / "teacher.txt") << "layers: 2 2\n";
  std::ofstream(dir / "d.cfg") << "objective.kind = distill\nteacher.weights = teacher.txt\n";
  EXPECT_NO_THROW(validate_config(load_config(dir / "d.cfg"), "distill"));
  std::ofstream(dir / "e.cfg") << "objective.kind = distill\nteacher.weights = absent.txt\n";
  EXPECT_THROW(validate_config(load_config(dir / "e.cfg"), "distill"), ConfigError);
}
