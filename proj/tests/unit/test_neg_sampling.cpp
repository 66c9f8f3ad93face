#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rsoft/errors.hpp"
#include "rsoft/losses.hpp"
#include "rsoft/neg_sampling.hpp"
#include "test_support.hpp"

using namespace rsoft;
using rsoft::testing::chi_square_p_value;
using rsoft::testing::make_vocab;
using rsoft::testing::random_params;

namespace {

std::vector<std::uint64_t> histogram(const NegativeSampler& s, const ModelParams& p, ContextId i,
                                     std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint64_t> counts(p.card_j(), 0);
  const auto neg = s.draw(p, i, n, rng);
  for (auto t : neg.targets) ++counts[t];
  return counts;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("uniform draws") {
  const auto v = make_vocab(1, 10);
  const auto p = random_params(1, 10, 2, 1);
  const NegativeSampler s(SamplerSpec{SamplerKind::uniform}, v);
  const auto c = histogram(s, p, 0, 1000000, 5);
  for (auto x : c) CHECK(std::abs(static_cast<double>(x) / 1e6 - 0.1) < 0.002);
}

TEST_CASE("popularity draws") {
  const auto v = make_vocab(1, 2, {3, 1});
  const auto p = random_params(1, 2, 2, 1);
  const NegativeSampler s(SamplerSpec{SamplerKind::popularity}, v);
  const auto c = histogram(s, p, 0, 1000000, 6);
  CHECK(std::abs(static_cast<double>(c[0]) / 1e6 - 0.75) < 0.0025);
  CHECK(std::abs(static_cast<double>(c[1]) / 1e6 - 0.25) < 0.0025);
}

TEST_CASE("popularity_distribution closed forms") {
  CHECK(popularity_distribution(make_vocab(1, 4, {1, 1, 1, 1}), 0.3).probabilities() ==
        std::vector<double>{0.25, 0.25, 0.25, 0.25});
  const auto a = popularity_distribution(make_vocab(1, 2, {4, 1}), 1.0).probabilities();
  CHECK(a[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.2).epsilon(1e-15));
  const auto b = popularity_distribution(make_vocab(1, 2, {4, 1}), 0.5).probabilities();
  CHECK(b[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto z = popularity_distribution(make_vocab(1, 3, {2, 0, 2}), 0.0).probabilities();
  CHECK(z == std::vector<double>{0.5, 0.0, 0.5});
}

TEST_CASE("boltzmann_probs limits") {
  const std::vector<double> scores{0.3, -1.2, 2.5, 0.9, 2.4};
  const std::vector<double> uni(5, 1.0);
  CHECK(boltzmann_probs(scores, uni, 1.0) == conditional_softmax(scores));

  const std::vector<double> deg{1, 2, 3, 4, 0};
  const auto inf = boltzmann_probs(scores, deg, SamplerSpec::kInfiniteTemperature);
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(inf[k] - deg[k] / 10.0) < 1e-15);

  const auto cold = boltzmann_probs(scores, uni, 1e-6);
  CHECK(cold[2] >= 1.0 - 1e-9);
}

TEST_CASE("boltzmann_probs normalizes and sharpens monotonically") {
  Rng rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + uniform_index(rng, 50);
    std::vector<double> s(n), d(n);
    for (auto& x : s) x = 6.0 * (uniform01(rng) - 0.5);
    for (auto& x : d) x = uniform01(rng) + 0.01;
    const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    double prev = -1.0;
    for (double t : {50.0, 12.0, 3.0, 1.0, 0.3, 0.05}) {
      const auto q = boltzmann_probs(s, d, t);
      CHECK(sum(q) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(q[best] >= prev - 1e-15);
      prev = q[best];
    }
  }
}

TEST_CASE("zero degeneracy removes a target") {
  const auto q = boltzmann_probs(std::vector<double>{9, 0, 0}, std::vector<double>{0, 1, 1}, 1.0);
  CHECK(q[0] == 0.0);
  CHECK(q[1] == doctest::Approx(0.5));
}

TEST_CASE("invalid specs are rejected") {
  SamplerSpec s{SamplerKind::boltzmann, DegeneracyKind::uniform, 0.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.temperature = std::nan("");
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.temperature = 1.0;
  s.popularity_exponent = -1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("every sampler kind matches its enumeration") {
  std::vector<std::uint64_t> counts(60);
  Rng crng(4);
  for (auto& c : counts) c = 1 + uniform_index(crng, 40);
  const auto v = make_vocab(3, 60, counts);
  const auto p = random_params(3, 60, 5, 12, 0.6);
  const std::vector<SamplerSpec> specs = {
      {SamplerKind::uniform},
      {SamplerKind::popularity, DegeneracyKind::uniform, 1.0, 0.75},
      {SamplerKind::boltzmann, DegeneracyKind::uniform, 0.5},
      {SamplerKind::boltzmann, DegeneracyKind::popularity, 3.0},
      {SamplerKind::boltzmann, DegeneracyKind::popularity, SamplerSpec::kInfiniteTemperature},
  };
  std::uint64_t seed = 100;
  for (const auto& spec : specs) {
    const NegativeSampler s(spec, v);
    const auto probs = s.probabilities(p, 1);
    CHECK(sum(probs) == doctest::Approx(1.0).epsilon(1e-12));
    const auto c = histogram(s, p, 1, 1000000, ++seed);
    CHECK(chi_square_p_value(c, probs) > 0.001);
  }
}

TEST_CASE("oracle degeneracy needs a table") {
  const auto v = make_vocab(2, 3);
  CHECK_THROWS_AS(
      NegativeSampler(SamplerSpec{SamplerKind::boltzmann, DegeneracyKind::oracle_inverse_p}, v),
      ConfigError);
  const auto table = DegeneracyTable::per_context(2, 3, {1, 0, 1, 0, 1, 0});
  const NegativeSampler s(SamplerSpec{SamplerKind::boltzmann, DegeneracyKind::oracle_inverse_p,
                                      SamplerSpec::kInfiniteTemperature},
                          v, table);
  const auto p = random_params(2, 3, 2, 1);
  CHECK(s.probabilities(p, 0) == std::vector<double>{0.5, 0.0, 0.5});
  CHECK(s.probabilities(p, 1) == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("boltzmann draws follow parameter changes") {
  const auto v = make_vocab(1, 8);
  auto p = random_params(1, 8, 2, 3, 0.1);
  const NegativeSampler s(SamplerSpec{SamplerKind::boltzmann, DegeneracyKind::uniform, 1.0}, v);
  const auto before = histogram(s, p, 0, 20000, 1);
  CHECK(static_cast<double>(before[5]) / 20000.0 < 0.5);
  // Score of target 5 becomes +50: W = e1, O_5 = 50 e1.
  p.W(0, 0) = 1.0;
  p.W(0, 1) = 0.0;
  p.O(5, 0) = 50.0;
  const auto after = histogram(s, p, 0, 20000, 2);
  CHECK(static_cast<double>(after[5]) / 20000.0 > 0.99);
}

TEST_CASE("draws are reproducible from the rng state") {
  const auto v = make_vocab(2, 30);
  const auto p = random_params(2, 30, 3, 9);
  const NegativeSampler s(SamplerSpec{SamplerKind::boltzmann, DegeneracyKind::uniform, 2.0}, v);
  Rng a(5), b(5);
  CHECK(s.draw(p, 1, 100, a).targets == s.draw(p, 1, 100, b).targets);
}

TEST_CASE("CategoricalTable rejects bad weights") {
  CHECK_THROWS(CategoricalTable(std::vector<double>{0.0, 0.0}));
  CHECK_THROWS(CategoricalTable(std::vector<double>{1.0, -1.0}));
  CHECK_THROWS(CategoricalTable(std::vector<double>{1.0, std::nan("")}));
}
