#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sosioc/bench.hpp"

using namespace sosioc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_lqr(const fs::path& out) {
  ExperimentConfig c = preset_config("lqr");
  c.systems = 3;
  c.trials = 16;
  c.steps = 2;
  c.degrees = {{2, 1}};
  c.output_dir = out.string();
  return c;
}

std::string with_extra_key(const std::string& json, const std::string& entry) {
  const auto brace = json.find('{');
  return json.substr(0, brace + 1) + entry + "," + json.substr(brace + 1);
}

}  // namespace

TEST(Config, PresetsValidateAndRoundTrip) {
  for (const std::string& name : preset_names()) {
    const ExperimentConfig c = preset_config(name);
    EXPECT_NO_THROW(c.validate()) << name;
    const ExperimentConfig back = parse_config(config_to_json(c));
    EXPECT_EQ(back.fingerprint(), c.fingerprint()) << name;
    EXPECT_EQ(back.canonical_json(), c.canonical_json()) << name;
  }
  EXPECT_THROW(preset_config("nope"), std::invalid_argument);
}

TEST(Config, UnknownKeysAndWrongSchemaRejected) {
  const std::string text = config_to_json(preset_config("lqr"));
  EXPECT_THROW(parse_config(with_extra_key(text, "\"bogus\": 1")), std::invalid_argument);
  std::string wrong = text;
  const auto pos = wrong.find("\"schema_version\"");
  ASSERT_NE(pos, std::string::npos);
  const auto colon = wrong.find(':', pos);
  const auto end = wrong.find_first_of(",}", colon);
  wrong.replace(colon + 1, end - colon - 1, " 99");
  EXPECT_THROW(parse_config(wrong), std::invalid_argument);
  EXPECT_THROW(parse_config("{not json"), std::invalid_argument);
}

TEST(Config, ValidationCatchesBadValues) {
  ExperimentConfig c = preset_config("lqr");
  c.systems = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = preset_config("lqr");
  c.degrees = {{0, 1}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = preset_config("lqr");
  c.train_fraction = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, FingerprintIgnoresOutputLocationAndWorkers) {
  ExperimentConfig a = preset_config("temperature"), b = a;
  b.output_dir = "/elsewhere";
  b.jobs = 7;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.seed += 1;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 16u);
}

TEST(Histogram, CentralTrim) {
  std::vector<double> v;
  for (int i = 0; i < 1000; ++i) v.push_back(i);
  v.push_back(1e9);
  const auto bins = central_histogram(v, 10);
  ASSERT_EQ(bins.size(), 10u);
  int kept = 0;
  for (const auto& b : bins) kept += b.count;
  // Quantiles 0.0025 and 0.9975 of 1001 values sit at 2.5 and 997.5.
  EXPECT_EQ(kept, 995);
  EXPECT_NEAR(bins.front().lower, 2.5, 1e-12);
  EXPECT_NEAR(bins.back().upper, 997.5, 1e-9);
  EXPECT_NEAR(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5, 1e-15);
  EXPECT_NEAR(quantile({5.0}, 0.9), 5.0, 1e-15);
}

TEST(Run, SmallLqrIsBitwiseReproducible) {
  const fs::path root = fs::temp_directory_path() / "sosioc_test_bench";
  fs::remove_all(root);
  ExperimentConfig a = small_lqr(root / "a"), b = small_lqr(root / "b");
  b.jobs = 2;
  const RunReport ra = run_experiment(a), rb = run_experiment(b);
  EXPECT_TRUE(ra.all_ok);
  EXPECT_EQ(ra.fingerprint, rb.fingerprint);
  ASSERT_EQ(ra.errors.size(), 3u);
  for (const ErrorRow& r : ra.errors) {
    EXPECT_TRUE(r.ok) << r.message;
    EXPECT_TRUE(std::isfinite(r.error));
    EXPECT_GE(r.error, 0.0);
  }
  for (const char* f : {"errors.csv", "curves.csv", "histogram.csv"}) {
    const std::string x = slurp(root / "a" / f), y = slurp(root / "b" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, y) << f;
    EXPECT_EQ(x.rfind("# fingerprint=" + ra.fingerprint, 0), 0u) << f;
  }
  EXPECT_TRUE(fs::exists(root / "a" / "manifest.json"));
  fs::remove_all(root);
}

TEST(Run, DatasetDependsOnlyOnSeedAndSystem) {
  ExperimentConfig c = small_lqr("unused");
  const SystemData s0 = experiment_dataset(c, 0), s0b = experiment_dataset(c, 0), s1 = experiment_dataset(c, 1);
  EXPECT_TRUE((s0.theta_true.array() == s0b.theta_true.array()).all());
  EXPECT_FALSE((s0.theta_true.array() == s1.theta_true.array()).all());
  EXPECT_NEAR(s0.theta_true.tail(3).norm(), 1.0, 1e-12);
  EXPECT_EQ(s0.theta_true[0], 0.0);
  ASSERT_EQ(s0.data.size(), 16u);
  EXPECT_TRUE((s0.data[3].states.array() == s0b.data[3].states.array()).all());
}
