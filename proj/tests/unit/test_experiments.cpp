#include <doctest.h>

#include <cmath>

#include "rsoft/errors.hpp"
#include "rsoft/experiments.hpp"

using namespace rsoft;

namespace {

DatasetSpec small_dataset() {
  DatasetSpec d;
  d.name = "tiny";
  d.card_i = d.card_j = 8;
  d.components = 2;
  d.n_pairs = 400;
  d.sigma_range = {0.2, 0.3};
  return d;
}

TrainConfig small_config() {
  TrainConfig c;
  c.method = Method::UBS;
  c.dim = 4;
  c.batch_size = 50;
  c.epochs = 1;
  c.eval_split = "none";
  return c;
}

}  // namespace

TEST_CASE("metric names") {
  CHECK(metric_lower_is_better("kl_joint"));
  CHECK_FALSE(metric_lower_is_better("mpr"));
  CHECK_NOTHROW(check_metric_name("prec@50"));
  CHECK_THROWS_AS(check_metric_name("prec@"), ConfigError);
  CHECK_THROWS_AS(check_metric_name("accuracy"), ConfigError);
  MetricsReport r;
  r.mpr = 0.8;
  r.prec_at[10] = 0.25;
  CHECK(*metric_value(r, "mpr") == 0.8);
  CHECK(*metric_value(r, "prec@10") == 0.25);
  CHECK_FALSE(metric_value(r, "prec@5").has_value());
  CHECK_FALSE(metric_value(r, "kl_joint").has_value());
}

TEST_CASE("a one-point grid selects that point") {
  const auto data = load_dataset(small_dataset());
  const auto g = grid_search_temperature(small_config(), {2.5}, data, "kl_true");
  REQUIRE(g.best_temperature.has_value());
  CHECK(*g.best_temperature == 2.5);
  CHECK(g.rows.size() == 1);
}

TEST_CASE("grid search is deterministic and picks the best row") {
  const auto data = load_dataset(small_dataset());
  const std::vector<double> grid{0.5, 1.0, std::numeric_limits<double>::infinity()};
  const auto a = grid_search_temperature(small_config(), grid, data, "kl_true");
  const auto b = grid_search_temperature(small_config(), grid, data, "kl_true");
  REQUIRE(a.rows.size() == 3);
  double best = INFINITY;
  for (std::size_t k = 0; k < 3; ++k) {
    REQUIRE(a.rows[k].value.has_value());
    CHECK(*a.rows[k].value == *b.rows[k].value);
    best = std::min(best, *a.rows[k].value);
  }
  CHECK(*a.best_value == best);
  CHECK(a.best_temperature == b.best_temperature);
}

TEST_CASE("grid rows keep failures") {
  const auto data = load_dataset(small_dataset());
  const auto g = grid_search_temperature(small_config(), {-1.0, 1.0}, data, "kl_true");
  CHECK_FALSE(g.rows[0].error.empty());
  CHECK_FALSE(g.rows[0].value.has_value());
  CHECK(*g.best_temperature == 1.0);
  CHECK_THROWS_AS(grid_search_temperature(small_config(), {}, data, "kl_true"), ConfigError);
}

TEST_CASE("suite runs every method, dataset and seed") {
  SuiteConfig s;
  s.base = small_config().to_json();
  s.methods = {{"MLE", {{"method", "MLE"}}}, {"PBS", {{"method", "PBS"}}}};
  s.datasets = {small_dataset()};
  s.seeds = {1, 2, 3};
  s.metrics = {"kl_joint", "kl_true"};
  const auto r = run_experiment_suite(s);
  CHECK(r.runs.size() == 6);
  REQUIRE(r.table.size() == 4);
  for (const auto& row : r.table) {
    CHECK(row.n == 3);
    CHECK(row.failures == 0);
    double sum = 0.0;
    for (const auto& run : r.runs) {
      if (run.method == row.method) sum += *metric_value(run.final_metrics, row.metric);
    }
    CHECK(row.mean == doctest::Approx(sum / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("a method listed twice yields identical rows") {
  const auto s = SuiteConfig::from_json({{"base", small_config().to_json()},
                                         {"methods", {"US", "US"}},
                                         {"datasets", {small_dataset().to_json()}},
                                         {"seeds", {4, 5}},
                                         {"metrics", {"kl_true"}}});
  REQUIRE(s.methods.size() == 2);
  CHECK(s.methods[1].label == "US#2");
  const auto r = run_experiment_suite(s);
  REQUIRE(r.table.size() == 2);
  CHECK(r.table[0].mean == r.table[1].mean);
  CHECK(r.table[0].std == r.table[1].std);
}

TEST_CASE("a failing run does not stop the suite") {
  SuiteConfig s;
  s.base = small_config().to_json();
  s.methods = {{"bad", {{"method", "UBS"}, {"degeneracy", "oracle_inverse_p"},
                        {"learning_rate", 1e30}, {"lr_schedule", "constant"}}},
               {"MLE", {{"method", "MLE"}}}};
  s.datasets = {small_dataset()};
  s.seeds = {1, 2};
  s.metrics = {"kl_true"};
  std::size_t seen = 0;
  const auto r = run_experiment_suite(s, [&](const SuiteRun&) { ++seen; });
  CHECK(seen == 4);
  REQUIRE(r.table.size() == 2);
  CHECK(r.table[0].failures == 2);
  CHECK(r.table[0].n == 0);
  CHECK(std::isnan(r.table[0].mean));
  CHECK(r.table[1].n == 2);
}

TEST_CASE("suite json round trip and validation") {
  SuiteConfig s;
  s.methods = {{"PBS", {{"method", "PBS"}}}};
  s.datasets = {small_dataset()};
  const auto back = SuiteConfig::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  CHECK_THROWS_AS(SuiteConfig::from_json({{"methods", {"US"}}}), ConfigError);
  CHECK_THROWS_AS(DatasetSpec::from_json({{"kind", "pairs"}}), ConfigError);
  CHECK_THROWS_AS(DatasetSpec::from_json({{"colour", 1}}), ConfigError);
}

TEST_CASE("datasets resampled per seed differ, fixed ones do not") {
  auto spec = small_dataset();
  CHECK(load_dataset(spec, 1).data.pairs == load_dataset(spec, 2).data.pairs);
  spec.resample_per_seed = true;
  CHECK(load_dataset(spec, 1).data.pairs != load_dataset(spec, 2).data.pairs);
}
