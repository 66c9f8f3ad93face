// Acceptance runner: one criterion per invocation, one PASS/FAIL line each.
//
//   acceptance --criterion N [--workdir DIR]
//
// Criteria 6 to 9 train many models and write their tables and charts under
// DIR/cN. Exit status is 0 on PASS and 1 on FAIL.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "metric_oracles.hpp"
#include "rsoft/config.hpp"
#include "rsoft/errors.hpp"
#include "rsoft/evaluation.hpp"
#include "rsoft/experiments.hpp"
#include "rsoft/ingestion.hpp"
#include "rsoft/losses.hpp"
#include "rsoft/neg_sampling.hpp"
#include "rsoft/report.hpp"
#include "rsoft/synthetic.hpp"
#include "rsoft/trainer.hpp"
#include "test_support.hpp"
#include "text_corpus.hpp"

namespace fs = std::filesystem;
using namespace rsoft;
using namespace rsoft::testing;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(double v, int precision = 4) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

void note(const std::string& line) { std::cout << "  " << line << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

NegativeSet random_negatives(std::size_t card_j, std::size_t n, Rng& rng) {
  NegativeSet s;
  for (std::size_t k = 0; k < n; ++k) s.targets.push_back(uniform_index(rng, card_j));
  return s;
}

std::vector<double> random_distribution(std::size_t n, Rng& rng, double floor = 0.05) {
  std::vector<double> q(n);
  for (auto& x : q) x = floor + uniform01(rng);
  const double z = std::accumulate(q.begin(), q.end(), 0.0);
  for (auto& x : q) x /= z;
  return q;
}

std::vector<std::uint64_t> random_counts(std::size_t n, Rng& rng) {
  std::vector<std::uint64_t> c(n);
  for (auto& x : c) x = 1 + uniform_index(rng, 1000);
  return c;
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients against central differences.

Outcome gradient_correctness() {
  constexpr double kTolerance = 1e-4;
  constexpr double kStep = 1e-5;
  const char* names[] = {"MLE", "SS", "RS(+positive)", "RS(negatives only)", "BCE"};
  std::vector<double> worst(5, 0.0);
  std::size_t failures = 0;
  Rng rng(2024);
  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t cj = 2 + uniform_index(rng, 49);
    const std::size_t d = 1 + uniform_index(rng, 8);
    const std::size_t ci = 1 + uniform_index(rng, 4);
    const auto p = random_params(ci, cj, d, 100 + instance, 0.9);
    const ContextId i = uniform_index(rng, ci);
    const TargetId j = uniform_index(rng, cj);
    const auto neg = random_negatives(cj, 1 + uniform_index(rng, 10), rng);
    const auto proposal = random_distribution(cj, rng);
    std::vector<std::function<LossGrad(const ModelParams&)>> losses = {
        [&](const ModelParams& m) { return mle_loss_grad(m, i, j); },
        [&](const ModelParams& m) { return sampled_softmax_loss_grad(m, i, j, proposal, neg); },
        [&](const ModelParams& m) { return relaxed_softmax_loss_grad(m, i, j, neg, true); },
        [&](const ModelParams& m) { return relaxed_softmax_loss_grad(m, i, j, neg, false); },
        [&](const ModelParams& m) { return bce_loss_grad(m, i, j, neg); },
    };
    for (std::size_t l = 0; l < losses.size(); ++l) {
      const auto analytic = dense_gradient(losses[l](p), p, i);
      const auto numeric =
          numeric_gradient(p, [&](const ModelParams& m) { return losses[l](m).loss; }, kStep);
      const bool ok = gradients_agree(analytic, numeric, kTolerance);
      const double err = relative_error(analytic, numeric);
      if (ok) worst[l] = std::max(worst[l], err > kTolerance ? 0.0 : err);
      if (!ok) {
        ++failures;
        note(std::string(names[l]) + " instance " + std::to_string(instance) +
             ": relative error " + fmt(err));
      }
    }
  }
  std::string summary = "50 instances, card(J)<=50, d<=8, h=1e-5; max relative error";
  for (std::size_t l = 0; l < 5; ++l) summary += std::string(" ") + names[l] + "=" + fmt(worst[l], 2);
  summary += " (tolerance 1e-4)";
  return {failures == 0, summary};
}

// ---------------------------------------------------------------------------
// 2. Sampler frequencies against the enumerated distributions.

Outcome sampler_exactness() {
  constexpr std::size_t kDraws = 1'000'000;
  constexpr std::size_t kCard = 100;
  constexpr double kMinP = 1e-3;
  Rng rng(7);
  auto vocab = make_vocab(3, kCard, random_counts(kCard, rng));
  const auto params = random_params(3, kCard, 8, 5, 0.6);
  const ContextId i = 1;
  const auto scores = score_all_targets(params, i);

  std::vector<double> oracle_rows;
  for (std::size_t r = 0; r < 3; ++r) {
    const auto row = random_distribution(kCard, rng, 0.0);
    oracle_rows.insert(oracle_rows.end(), row.begin(), row.end());
  }
  oracle_rows[i * kCard + 17] = 0.0;  // a zero-weight target must never be drawn
  const auto oracle = DegeneracyTable::per_context(3, kCard, oracle_rows);

  struct Case {
    std::string name;
    SamplerSpec spec;
    std::vector<double> expected;
  };
  const auto pop1 = popularity_distribution(vocab, 1.0).probabilities();
  const auto pop075 = popularity_distribution(vocab, 0.75).probabilities();
  const std::vector<double> ones(kCard, 1.0);
  auto spec = [](SamplerKind k, DegeneracyKind d, double t, double a = 1.0) {
    SamplerSpec s;
    s.kind = k;
    s.degeneracy = d;
    s.temperature = t;
    s.popularity_exponent = a;
    return s;
  };
  std::vector<Case> cases = {
      {"uniform", spec(SamplerKind::uniform, DegeneracyKind::uniform, 1.0),
       std::vector<double>(kCard, 1.0 / kCard)},
      {"popularity a=1", spec(SamplerKind::popularity, DegeneracyKind::uniform, 1.0), pop1},
      {"popularity a=0.75", spec(SamplerKind::popularity, DegeneracyKind::uniform, 1.0, 0.75),
       pop075},
      {"boltzmann D=uniform T=0.5", spec(SamplerKind::boltzmann, DegeneracyKind::uniform, 0.5),
       boltzmann_probs(scores, ones, 0.5)},
      {"boltzmann D=popularity T=2",
       spec(SamplerKind::boltzmann, DegeneracyKind::popularity, 2.0),
       boltzmann_probs(scores, pop1, 2.0)},
      {"boltzmann D=oracle T=1", spec(SamplerKind::boltzmann, DegeneracyKind::oracle_inverse_p, 1.0),
       boltzmann_probs(scores, oracle.row(i), 1.0)},
      {"boltzmann D=popularity T=inf",
       spec(SamplerKind::boltzmann, DegeneracyKind::popularity, kInf), pop1},
  };
  bool pass = true;
  double min_p = 1.0;
  for (const auto& c : cases) {
    Rng draw_rng(derive_seed(2025, static_cast<std::uint64_t>(&c - cases.data())));
    const auto set = draw_negatives(c.spec, params, vocab, i, kDraws, draw_rng, oracle);
    std::vector<std::uint64_t> counts(kCard, 0);
    for (auto t : set.targets) ++counts[t];
    const double p = chi_square_p_value(counts, c.expected);
    min_p = std::min(min_p, p);
    note(c.name + ": chi-square p = " + fmt(p));
    if (!(p > kMinP)) pass = false;
  }

  bool identical = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pr = random_params(2, 10 + 4 * seed, 1 + seed % 8, seed, 2.0);
    const auto s = score_all_targets(pr, 0);
    const std::vector<double> u(s.size(), 1.0);
    if (boltzmann_probs(s, u, 1.0) != conditional_softmax(s)) identical = false;
  }
  note(std::string("boltzmann(uniform, T=1) == softmax bitwise on 20 rows: ") +
       (identical ? "yes" : "no"));
  return {pass && identical, std::to_string(cases.size()) + " samplers, 10^6 draws, card(J)=100, "
                                 "min p = " + fmt(min_p) + " (> 0.001); Boltzmann(uniform, T=1) " +
                                 (identical ? "==" : "!=") + " softmax"};
}

// ---------------------------------------------------------------------------
// 3. Temperature limits.

Outcome limit_behavior() {
  Rng rng(11);
  double min_mass = 1.0, max_dev = 0.0, min_empirical = 1.0;
  for (int instance = 0; instance < 30; ++instance) {
    const std::size_t cj = 5 + uniform_index(rng, 96);
    auto vocab = make_vocab(2, cj, random_counts(cj, rng));
    const auto params = random_params(2, cj, 8, 300 + instance, 0.8);
    const auto scores = score_all_targets(params, 0);
    const auto argmax = std::max_element(scores.begin(), scores.end()) - scores.begin();
    std::vector<double> oracle_rows;
    for (int r = 0; r < 2; ++r) {
      const auto row = random_distribution(cj, rng, 0.0);
      oracle_rows.insert(oracle_rows.end(), row.begin(), row.end());
    }
    const auto oracle = DegeneracyTable::per_context(2, cj, oracle_rows);
    for (auto kind : {DegeneracyKind::uniform, DegeneracyKind::popularity,
                      DegeneracyKind::oracle_inverse_p}) {
      SamplerSpec spec;
      spec.kind = SamplerKind::boltzmann;
      spec.degeneracy = kind;
      spec.temperature = 1e-6;
      NegativeSampler cold(spec, vocab, oracle);
      const auto q = cold.probabilities(params, 0);
      min_mass = std::min(min_mass, q[argmax]);
      Rng draw_rng(derive_seed(instance, static_cast<std::uint64_t>(kind)));
      const auto drawn = cold.draw(params, 0, 10000, draw_rng);
      const double hits = static_cast<double>(
          std::count(drawn.targets.begin(), drawn.targets.end(), static_cast<TargetId>(argmax)));
      min_empirical = std::min(min_empirical, hits / 10000.0);

      spec.temperature = SamplerSpec::kInfiniteTemperature;
      NegativeSampler hot(spec, vocab, oracle);
      const auto flat = hot.probabilities(params, 0);
      std::vector<double> d(cj);
      if (kind == DegeneracyKind::uniform) {
        std::fill(d.begin(), d.end(), 1.0);
      } else if (kind == DegeneracyKind::popularity) {
        for (std::size_t t = 0; t < cj; ++t) d[t] = static_cast<double>(vocab.target_counts[t]);
      } else {
        const auto row = oracle.row(0);
        d.assign(row.begin(), row.end());
      }
      const double z = std::accumulate(d.begin(), d.end(), 0.0);
      for (std::size_t t = 0; t < cj; ++t) max_dev = std::max(max_dev, std::abs(flat[t] - d[t] / z));
    }
  }
  const bool pass = min_mass >= 0.999 && min_empirical >= 0.999 && max_dev <= 1e-12;
  return {pass, "30 instances x 3 degeneracies: T=1e-6 argmax mass min " + fmt(min_mass, 6) +
                    " exact / " + fmt(min_empirical, 6) +
                    " empirical (>= 0.999); T=inf max |Q - D/sum D| = " + fmt(max_dev, 3) +
                    " (<= 1e-12)"};
}

// ---------------------------------------------------------------------------
// 4. Monte-Carlo consistency of the negatives-only RS gradient.

Outcome consistency() {
  constexpr std::size_t kSets = 100'000;
  constexpr std::size_t kNegatives = 4096;
  constexpr std::size_t kCard = 20;
  constexpr std::size_t kDim = 4;
  Rng rng(31);
  auto vocab = make_vocab(1, kCard, random_counts(kCard, rng));
  const auto params = random_params(1, kCard, kDim, 41, 0.5);
  const ContextId i = 0;
  const TargetId j = 3;
  SamplerSpec spec;
  spec.kind = SamplerKind::boltzmann;
  spec.degeneracy = DegeneracyKind::popularity;
  spec.temperature = 1.0;
  const NegativeSampler sampler(spec, vocab);
  const auto q = sampler.probabilities(params, i);
  const auto exact = dense_gradient(consistency_gradient(params, i, j, q), params, i);

  const std::size_t dims = exact.size();
  std::vector<double> sum(dims, 0.0), sum_sq(dims, 0.0);
  Rng draw_rng(2718);
  for (std::size_t s = 0; s < kSets; ++s) {
    const auto neg = sampler.draw(params, i, kNegatives, draw_rng);
    const auto g = dense_gradient(relaxed_softmax_loss_grad(params, i, j, neg, false), params, i);
    for (std::size_t k = 0; k < dims; ++k) {
      sum[k] += g[k];
      sum_sq[k] += g[k] * g[k];
    }
  }
  const double n = static_cast<double>(kSets);
  double max_z = 0.0;
  std::size_t compared = 0, outside = 0;
  for (std::size_t k = 0; k < dims; ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double dev = std::abs(mean - exact[k]);
    if (se == 0.0) {
      // Components untouched by the gradient: both sides must vanish.
      if (dev > 1e-12) ++outside;
      continue;
    }
    ++compared;
    max_z = std::max(max_z, dev / se);
    if (dev > 3.0 * se) ++outside;
  }

  // Which temperature does sampling from B(G, D, T) act at? The negatives-only
  // RS gradient's expected negative phase is Q exp(G) / sum Q exp(G).
  const auto scores = score_all_targets(params, i);
  const auto pop = popularity_distribution(vocab, 1.0).probabilities();
  std::map<std::string, double> fit_error;
  for (double t : {0.25, 0.5, 1.0, 2.0, 5.0}) {
    const auto qt = boltzmann_probs(scores, pop, t);
    std::vector<double> phase(kCard);
    for (std::size_t x = 0; x < kCard; ++x) phase[x] = qt[x] * std::exp(scores[x]);
    const double z = std::accumulate(phase.begin(), phase.end(), 0.0);
    for (auto& v : phase) v /= z;
    const std::map<std::string, double> candidates = {
        {"T", t}, {"T/(T+1)", t / (t + 1.0)}, {"(T+1)/T", (t + 1.0) / t}};
    for (const auto& [label, tc] : candidates) {
      const auto b = boltzmann_probs(scores, pop, tc);
      double e = 0.0;
      for (std::size_t x = 0; x < kCard; ++x) e = std::max(e, std::abs(b[x] - phase[x]));
      fit_error[label] = std::max(fit_error[label], e);
    }
  }
  std::string best;
  for (const auto& [label, e] : fit_error) {
    note("effective temperature candidate " + label + ": max |difference| = " + fmt(e, 3));
    if (best.empty() || e < fit_error[best]) best = label;
  }
  note("best fit: sampling at T acts as a softmax at temperature " + best);

  return {outside == 0, "card(J)=20, 10^5 sets of " + std::to_string(kNegatives) +
                            " negatives; " + std::to_string(compared) +
                            " components, max |mean - exact| / SE = " + fmt(max_z, 3) +
                            " (<= 3); effective temperature " + best};
}

// ---------------------------------------------------------------------------
// 5. Uniform Q gives the full-softmax gradient.

Outcome uniform_reduction() {
  Rng rng(5);
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t cj = 2 + uniform_index(rng, 99);
    const std::size_t d = 1 + uniform_index(rng, 16);
    const auto p = random_params(3, cj, d, 500 + instance, 1.5);
    const ContextId i = uniform_index(rng, 3);
    const TargetId j = uniform_index(rng, cj);
    const auto a = dense_gradient(
        consistency_gradient(p, i, j, std::vector<double>(cj, 1.0 / static_cast<double>(cj))), p,
        i);
    const auto b = dense_gradient(mle_loss_grad(p, i, j), p, i);
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  }
  return {worst <= 1e-10,
          "100 instances, max |consistency(uniform) - MLE| = " + fmt(worst, 3) + " (<= 1e-10)"};
}

// ---------------------------------------------------------------------------
// Shared pieces of the synthetic experiments.

DatasetSpec mixture_spec(std::size_t components, std::size_t n_pairs, std::uint64_t mixture_seed) {
  DatasetSpec d;
  d.name = std::to_string(components) + " components";
  d.card_i = d.card_j = 200;
  d.components = components;
  d.n_pairs = n_pairs;
  d.mixture_seed = mixture_seed;
  d.sample_seed = 1000 + mixture_seed;
  d.resample_per_seed = true;
  return d;
}

TrainConfig synthetic_config(Method m) {
  TrainConfig c;
  c.method = m;
  c.batch_size = 512;
  c.epochs = 20;
  c.learning_rate = 20.0;
  c.eval_split = "none";
  c.boltzmann_cache = BoltzmannCache::batch;
  return c;
}

std::string temperature_label(double t) { return std::isinf(t) ? "inf" : fmt(t); }

// ---------------------------------------------------------------------------
// 6. KL against temperature for three degeneracies.

Outcome temperature_curves(const fs::path& dir) {
  const std::vector<double> grid{0.5, 0.75, 1.0, 3.0, 6.0, 12.0, 36.0, kInf};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const std::vector<std::pair<std::string, std::string>> degeneracies{
      {"1/P_i", "oracle_inverse_p"}, {"uniform", "uniform"}, {"popularity", "popularity"}};
  const auto spec = mixture_spec(50, 300'000, 1);

  std::map<std::string, std::vector<double>> mean_curve;
  std::ostringstream csv;
  csv << "degeneracy,seed,temperature,kl_joint\n";
  for (const auto& [label, key] : degeneracies) mean_curve[label].assign(grid.size(), 0.0);
  bool all_finite = true;
  for (auto seed : seeds) {
    const auto data = load_dataset(spec, seed);
    for (const auto& [label, key] : degeneracies) {
      auto cfg = synthetic_config(Method::UBS);
      cfg.degeneracy = key;
      cfg.seed = seed;
      const auto g = grid_search_temperature(cfg, grid, data, "kl_joint");
      std::string line = label + " seed " + std::to_string(seed) + ":";
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double v = g.rows[k].value.value_or(kInf);
        if (!std::isfinite(v)) all_finite = false;
        mean_curve[label][k] += v / static_cast<double>(seeds.size());
        csv << label << ',' << seed << ',' << temperature_label(grid[k]) << ',' << fmt(v, 10)
            << '\n';
        line += " " + fmt(v);
      }
      note(line);
    }
  }

  bool pass = all_finite;
  std::map<std::string, double> best;
  std::vector<Series> series;
  std::string summary;
  for (const auto& [label, key] : degeneracies) {
    const auto& c = mean_curve.at(label);
    const auto it = std::min_element(c.begin(), c.end());
    const std::size_t arg = static_cast<std::size_t>(it - c.begin());
    best[label] = *it;
    const bool interior = *it < c.front() && *it < c.back();
    pass = pass && interior;
    std::string line = label + " mean:";
    for (double v : c) line += " " + fmt(v);
    note(line + " -> best T=" + temperature_label(grid[arg]) +
         (interior ? " (interior)" : " (NOT interior)"));
    summary += label + " best " + fmt(*it) + " at T=" + temperature_label(grid[arg]) +
               (interior ? " interior; " : " at an endpoint; ");
    series.push_back({label, grid, c});
  }
  const bool oracle_best = best["1/P_i"] < best["uniform"] && best["1/P_i"] < best["popularity"];
  pass = pass && oracle_best;
  write_text_file(dir / "kl_vs_temperature.csv", csv.str());
  ChartOptions o;
  o.title = "KL vs temperature, 50 components, mean of 3 seeds";
  o.x_label = "temperature";
  o.y_label = "KL";
  o.log_x = true;
  write_text_file(dir / "kl_vs_temperature.svg", svg_line_chart(series, o));
  summary += std::string("1/P_i best ") + (oracle_best ? "lowest" : "NOT lowest");
  return {pass, summary};
}

// ---------------------------------------------------------------------------
// 7. Generalization against training size.

Outcome training_size(const fs::path& dir) {
  const std::vector<std::size_t> sizes{10'000, 30'000, 100'000};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  auto config = [](Method m, std::uint64_t seed) {
    TrainConfig c;
    c.method = m;
    c.batch_size = 2000;
    c.max_steps = 3000;
    c.learning_rate = 20.0;
    c.eval_split = "none";
    c.boltzmann_cache = BoltzmannCache::batch;
    c.seed = seed;
    if (m == Method::UBS) {
      c.degeneracy = "oracle_inverse_p";
      c.temperature = 0.75;
    }
    return c;
  };
  std::ostringstream csv;
  csv << "seed,pairs,method,kl_true,kl_empirical\n";
  bool pass = true;
  std::vector<std::vector<double>> gaps(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    double previous_gap = kInf, previous_mle = kInf;
    for (auto n : sizes) {
      const auto data = load_dataset(mixture_spec(50, n, 1), seeds[s]);
      std::map<Method, ConditionalKl> kl;
      for (auto m : {Method::MLE, Method::UBS}) {
        TrainInputs in{&data.vocab, &data.data, &*data.ground_truth, {}};
        const auto r = train(config(m, seeds[s]), in);
        const auto emp = empirical_conditionals(data.data.subset(Split::train), 200, 200);
        kl[m] = averaged_conditional_kl(*data.ground_truth, emp, r.params);
        csv << seeds[s] << ',' << n << ',' << (m == Method::MLE ? "MLE" : "RS oracle") << ','
            << fmt(kl[m].true_kl, 10) << ',' << fmt(kl[m].empirical_kl, 10) << '\n';
      }
      const auto& mle = kl[Method::MLE];
      const auto& rs = kl[Method::UBS];
      const double gap = mle.true_kl - rs.true_kl;
      const bool rs_true_better = n > 30'000 || rs.true_kl < mle.true_kl;
      const bool mle_emp_better = mle.empirical_kl < rs.empirical_kl;
      const bool shrinking = gap < previous_gap && mle.true_kl < previous_mle;
      pass = pass && rs_true_better && mle_emp_better && shrinking;
      note("seed " + std::to_string(seeds[s]) + " pairs " + std::to_string(n) + ": true KL MLE " +
           fmt(mle.true_kl) + " / RS " + fmt(rs.true_kl) + ", empirical KL MLE " +
           fmt(mle.empirical_kl) + " / RS " + fmt(rs.empirical_kl) + ", gap " + fmt(gap) +
           (rs_true_better && mle_emp_better && shrinking ? "" : "  <-- ordering violated"));
      previous_gap = gap;
      previous_mle = mle.true_kl;
      gaps[s].push_back(gap);
    }
  }
  write_text_file(dir / "training_size.csv", csv.str());
  std::string summary = "RS oracle beats MLE on true KL at <=30k, MLE beats RS on empirical KL "
                        "(batch 2000), MLE gap shrinks with size, 3 seeds; gaps";
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    double m = 0.0;
    for (const auto& g : gaps) m += g[k] / static_cast<double>(gaps.size());
    summary += " " + std::to_string(sizes[k] / 1000) + "k:" + fmt(m, 3);
  }
  return {pass, summary};
}

// ---------------------------------------------------------------------------
// 8. Method comparison on three mixtures.

Outcome method_comparison(const fs::path& dir) {
  const std::vector<std::size_t> component_counts{10, 50, 90};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  constexpr std::uint64_t kTuningSeed = 100;
  const std::vector<double> grid{3.0, 6.0, 12.0, 36.0};
  const std::vector<std::pair<std::string, Method>> methods{
      {"MLE", Method::MLE}, {"SS", Method::SS},   {"US", Method::US},
      {"PS", Method::PS},   {"UBS", Method::UBS}, {"PBS", Method::PBS}};

  std::vector<SuiteRun> runs;
  std::vector<std::string> dataset_names;
  std::map<std::string, std::string> suffix;
  for (auto k : component_counts) {
    const auto spec = mixture_spec(k, 300'000, 10 + k);
    dataset_names.push_back(spec.name);
    // Temperatures are chosen on a seed that is not used for the comparison.
    std::map<Method, double> chosen;
    const auto tuning = load_dataset(spec, kTuningSeed);
    for (auto m : {Method::UBS, Method::PBS}) {
      auto cfg = synthetic_config(m);
      cfg.seed = kTuningSeed;
      const auto g = grid_search_temperature(cfg, grid, tuning, "kl_true");
      chosen[m] = g.best_temperature.value_or(1.0);
      suffix[to_string(m) + "|" + spec.name + "|kl_true"] = "T=" + fmt(chosen[m]);
      note(spec.name + ": " + to_string(m) + " T* = " + fmt(chosen[m]));
    }
    for (auto seed : seeds) {
      const auto data = load_dataset(spec, seed);
      for (const auto& [label, m] : methods) {
        SuiteRun run;
        run.method = label;
        run.dataset = spec.name;
        run.seed = seed;
        auto cfg = synthetic_config(m);
        cfg.seed = seed;
        if (chosen.count(m)) cfg.temperature = chosen[m];
        try {
          TrainInputs in{&data.vocab, &data.data, &*data.ground_truth, {}};
          auto r = train(cfg, in);
          run.final_metrics = r.record.snapshots.back().metrics;
          run.record = std::move(r.record);
        } catch (const Error& e) {
          run.error = e.what();
        }
        note(spec.name + " seed " + std::to_string(seed) + " " + label + ": kl_true " +
             (run.error.empty() ? fmt(run.final_metrics.kl.at("kl_true")) : run.error));
        runs.push_back(std::move(run));
      }
    }
  }
  std::vector<std::string> labels;
  for (const auto& [label, m] : methods) labels.push_back(label);
  const auto table = aggregate_runs(runs, labels, dataset_names, {"kl_true"});
  write_text_file(dir / "methods.csv", aggregate_csv(table));
  write_text_file(dir / "methods.md",
                  method_table_markdown(table, labels, suffix,
                                        "KL(P_i || g_i) averaged over training contexts, mean ± std over "
                                        "3 seeds, 20 epochs each."));
  ChartOptions o;
  o.title = "KL by method";
  o.y_label = "KL";
  write_text_file(dir / "methods.svg", svg_bar_chart(table, "kl_true", o));

  bool pass = true;
  std::string summary;
  for (const auto& ds : dataset_names) {
    auto mean = [&](const std::string& m) {
      for (const auto& r : table) {
        if (r.method == m && r.dataset == ds) return r.n == seeds.size() ? r.mean : kInf;
      }
      return kInf;
    };
    double best_baseline = kInf;
    for (const std::string b : {"MLE", "SS", "US", "PS"}) best_baseline = std::min(best_baseline, mean(b));
    const bool ok = mean("UBS") < best_baseline && mean("PBS") < best_baseline;
    pass = pass && ok;
    summary += ds + ": UBS " + fmt(mean("UBS")) + " PBS " + fmt(mean("PBS")) + " best baseline " +
               fmt(best_baseline) + (ok ? "; " : " (FAILS); ");
  }
  return {pass, summary};
}

// ---------------------------------------------------------------------------
// 9. Reduced text corpus: RS+PBS against MLE on MPR and Prec@50.

constexpr std::size_t kCorpusBytes = 10'000'000;

IngestResult text_dataset(const fs::path& dir) {
  const auto corpus = dir / "corpus.txt";
  if (!fs::exists(corpus) || fs::file_size(corpus) != kCorpusBytes) {
    TextCorpusOptions o;
    o.bytes = kCorpusBytes;
    write_text_corpus(corpus, o);
  }
  const auto tokens = read_tokens(corpus, kCorpusBytes);
  auto r = pairs_from_text(tokens, 3, 5000);
  r.data = split_dataset(std::move(r.data), {0.8, 0.1, 0.1}, 1);
  assign_train_counts(r.vocab, r.data);
  note(std::to_string(tokens.size()) + " tokens, " + std::to_string(r.data.pairs.size()) +
       " pairs, " + std::to_string(r.vocab.card_j()) + " words");
  return r;
}

// Both methods use Adagrad; each gets its learning rate from its own grid on
// the validation split, then PBS gets its temperature.
TrainConfig text_config(Method m, std::uint64_t seed, const std::string& split) {
  TrainConfig c;
  c.method = m;
  c.seed = seed;
  c.batch_size = 512;
  c.epochs = 1;
  c.optimizer = Optimizer::adagrad;
  c.lr_schedule = LrSchedule::constant;
  c.eval_split = split;
  c.prec_ks = {1, 10, 50};
  c.boltzmann_cache = BoltzmannCache::batch;
  return c;
}

Outcome text_comparison(const fs::path& dir) {
  const auto data = text_dataset(dir);
  const std::vector<double> grid{0.5, 1.0, 3.0, 6.0, 12.0, 36.0};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainInputs in{&data.vocab, &data.data, nullptr, {}};

  std::ostringstream grid_csv_out;
  grid_csv_out << "method,learning_rate,temperature,valid_mpr,valid_prec@50\n";
  auto validate = [&](Method m, double lr, double t) {
    auto cfg = text_config(m, seeds.front(), "valid");
    cfg.learning_rate = lr;
    cfg.temperature = t;
    const auto r = train(cfg, in);
    const auto& x = r.record.snapshots.back().metrics;
    const std::string name = m == Method::MLE ? "MLE" : "PBS";
    note(name + " lr=" + fmt(lr) + " T=" + fmt(t) + " valid MPR " + fmt(*x.mpr) + " Prec@50 " +
         fmt(x.prec_at.at(50)));
    grid_csv_out << name << ',' << fmt(lr) << ',' << (m == Method::MLE ? "" : fmt(t)) << ','
                 << fmt(*x.mpr, 10) << ',' << fmt(x.prec_at.at(50), 10) << '\n';
    return *x.mpr;
  };

  double mle_lr = 0.0, best = -1.0;
  for (double lr : {0.5, 2.0}) {
    if (const double v = validate(Method::MLE, lr, 1.0); v > best) best = v, mle_lr = lr;
  }
  double pbs_lr = 0.0, best_t = 1.0;
  best = -1.0;
  for (double lr : {8.0, 32.0}) {
    if (const double v = validate(Method::PBS, lr, 1.0); v > best) best = v, pbs_lr = lr;
  }
  for (double t : grid) {
    if (t == 1.0) continue;
    if (const double v = validate(Method::PBS, pbs_lr, t); v > best) best = v, best_t = t;
  }
  write_text_file(dir / "temperature_grid.csv", grid_csv_out.str());

  std::vector<SuiteRun> runs;
  const std::string ds = "text8-style 10MB";
  for (auto seed : seeds) {
    for (auto m : {Method::MLE, Method::PBS}) {
      auto cfg = text_config(m, seed, "test");
      cfg.learning_rate = m == Method::MLE ? mle_lr : pbs_lr;
      cfg.temperature = best_t;
      SuiteRun run;
      run.method = m == Method::MLE ? "MLE" : "RS-PBS";
      run.dataset = ds;
      run.seed = seed;
      auto r = train(cfg, in);
      run.final_metrics = r.record.snapshots.back().metrics;
      note("seed " + std::to_string(seed) + " " + run.method + ": MPR " +
           fmt(*run.final_metrics.mpr) + " Prec@50 " + fmt(run.final_metrics.prec_at.at(50)) +
           " (" + fmt(r.record.wall_time_s, 3) + " s)");
      run.record = std::move(r.record);
      runs.push_back(std::move(run));
    }
  }
  const std::vector<std::string> labels{"MLE", "RS-PBS"};
  const auto table = aggregate_runs(runs, labels, {ds}, {"mpr", "prec@1", "prec@10", "prec@50"});
  write_text_file(dir / "table.csv", aggregate_csv(table));
  write_text_file(dir / "table.md",
                  method_table_markdown(table, labels, {{"RS-PBS|" + ds + "|mpr", "T=" + fmt(best_t)}},
                                        "Test split, mean ± std over 5 seeds, one epoch of Adagrad each (MLE lr " +
                                            fmt(mle_lr) + ", RS-PBS lr " + fmt(pbs_lr) + ")."));
  auto mean = [&](const std::string& m, const std::string& metric) {
    for (const auto& r : table) {
      if (r.method == m && r.metric == metric) return r.mean;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double mpr_mle = mean("MLE", "mpr"), mpr_rs = mean("RS-PBS", "mpr");
  const double p_mle = mean("MLE", "prec@50"), p_rs = mean("RS-PBS", "prec@50");
  const bool pass = mpr_rs >= mpr_mle && p_rs >= p_mle;
  return {pass, "T*=" + fmt(best_t) + " lr MLE " + fmt(mle_lr) + " PBS " + fmt(pbs_lr) + "; MPR RS-PBS " + fmt(mpr_rs) + " vs MLE " + fmt(mpr_mle) +
                    ", Prec@50 RS-PBS " + fmt(p_rs) + " vs MLE " + fmt(p_mle) + " (5 seeds)"};
}

// ---------------------------------------------------------------------------
// 10. Metrics against brute-force oracles.

Outcome metric_oracles() {
  Rng rng(13);
  std::size_t checks = 0, mismatches = 0;
  double worst_similarity = 0.0;
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t ci = 4 + uniform_index(rng, 17);
    const std::size_t cj = 2 + uniform_index(rng, 19);
    const std::size_t d = 1 + uniform_index(rng, 6);
    auto p = random_params(ci, cj, d, 900 + instance, 1.0);
    // Duplicate rows so that ties occur and the tie rules are exercised.
    if (instance % 2 == 0) {
      for (std::size_t x = 0; x < d; ++x) p.O(cj - 1, x) = p.O(0, x);
      for (std::size_t x = 0; x < d; ++x) p.W(ci - 1, x) = p.W(0, x);
    }
    if (instance % 5 == 0) {
      for (std::size_t x = 0; x < d; ++x) p.O(uniform_index(rng, cj), x) = 0.0;
    }
    const auto vocab = make_vocab(ci, cj);
    std::vector<Pair> pairs(1 + uniform_index(rng, 40));
    for (auto& pr : pairs) pr = {static_cast<ContextId>(uniform_index(rng, ci)),
                                 static_cast<TargetId>(uniform_index(rng, cj))};

    const std::size_t m = 1 + uniform_index(rng, 50);
    ++checks;
    if (approx_mpr(p, pairs, m, instance) != oracle::mpr(p, pairs, m, instance)) ++mismatches;
    for (std::size_t k = 1; k <= cj; ++k) {
      ++checks;
      if (precision_at_k(p, pairs, k) != oracle::precision_at_k(p, pairs, k)) ++mismatches;
    }

    std::vector<SimilarityTriple> triples;
    for (int t = 0; t < 12; ++t) {
      triples.push_back({vocab.context_labels[uniform_index(rng, ci)],
                         uniform_index(rng, 4) == 0 ? "missing" : vocab.context_labels[uniform_index(rng, ci)],
                         10.0 * uniform01(rng)});
    }
    std::size_t usable = 0;
    for (const auto& t : triples) usable += t.b != "missing" ? 1 : 0;
    if (usable >= 3) {
      ++checks;
      const double want = oracle::similarity(p, vocab, triples);
      if (std::isfinite(want)) {
        const double got = similarity_eval(p, vocab, triples).correlation;
        worst_similarity = std::max(worst_similarity, std::abs(got - want));
        if (std::abs(got - want) > 1e-12) ++mismatches;
      } else {
        // A constant score list has no correlation; the library reports it.
        try {
          similarity_eval(p, vocab, triples);
          ++mismatches;
        } catch (const DataError&) {
        }
      }
    }

    std::vector<AnalogyQuad> quads;
    for (int t = 0; t < 15; ++t) {
      AnalogyQuad q;
      q.a = vocab.context_labels[uniform_index(rng, ci)];
      q.b = vocab.context_labels[uniform_index(rng, ci)];
      q.c = vocab.context_labels[uniform_index(rng, ci)];
      q.d = uniform_index(rng, 6) == 0 ? "missing" : vocab.context_labels[uniform_index(rng, ci)];
      q.syntactic = uniform_index(rng, 2) == 0;
      q.section = q.syntactic ? "gram-x" : "sem-x";
      quads.push_back(q);
    }
    std::vector<std::size_t> ks{1, 2, 5};
    ++checks;
    if (analogy_eval(p, vocab, quads, ks).precision != oracle::analogy(p, vocab, quads, ks)) {
      ++mismatches;
    }
  }
  return {mismatches == 0,
          std::to_string(checks) + " comparisons on card(J)<=20 instances with ties, " +
              std::to_string(mismatches) + " mismatches (MPR, Prec@k, analogy exact; similarity "
              "max |difference| " + fmt(worst_similarity, 3) + ")"};
}

// ---------------------------------------------------------------------------
// 11. Bitwise determinism of repeated runs.

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& dir) {
  const auto gt = build_mixture(30, 30, 4, 3, {0.3, 0.5});
  auto data = sample_pairs(gt, 5000, 4);
  data = split_dataset(std::move(data), {0.8, 0.1, 0.1}, 5);
  const auto vocab = grid_vocab(gt, data);
  std::vector<TrainConfig> configs;
  for (auto m : {Method::MLE, Method::SS, Method::US, Method::PS, Method::UBS, Method::PBS,
                 Method::BCE}) {
    for (auto opt : {Optimizer::sgd, Optimizer::adam}) {
      TrainConfig c;
      c.method = m;
      c.optimizer = opt;
      c.learning_rate = opt == Optimizer::sgd ? 2.0 : 0.01;
      c.dim = 16;
      c.batch_size = 64;
      c.epochs = 2;
      c.temperature = 0.8;
      c.eval_every = 25;
      c.threads = 1;
      c.checkpoint_dtype = "f64";
      configs.push_back(c);
    }
  }
  auto cached = configs.back();
  cached.method = Method::PBS;
  cached.boltzmann_cache = BoltzmannCache::batch;
  configs.push_back(cached);
  auto oracle = configs.front();
  oracle.method = Method::UBS;
  oracle.degeneracy = "oracle_inverse_p";
  configs.push_back(oracle);

  std::size_t identical = 0;
  for (const auto& c : configs) {
    std::vector<std::string> traces, checkpoints;
    for (int rep = 0; rep < 2; ++rep) {
      auto r = train(c, {&vocab, &data, &gt, {}});
      const auto out = dir / ("rep" + std::to_string(rep));
      write_run_outputs(r.record, r.params, vocab, out, CheckpointDtype::f64);
      std::string trace;
      for (double l : r.record.loss_trace) {
        trace.append(reinterpret_cast<const char*>(&l), sizeof l);
      }
      traces.push_back(trace);
      checkpoints.push_back(file_bytes(r.record.checkpoint_path));
    }
    const bool same = traces[0] == traces[1] && checkpoints[0] == checkpoints[1] &&
                      !checkpoints[0].empty();
    if (same) ++identical;
    else note(to_string(c.method) + "/" + to_string(c.optimizer) + " differs between runs");
  }
  return {identical == configs.size(),
          std::to_string(identical) + "/" + std::to_string(configs.size()) +
              " configurations repeat with bitwise-identical loss traces and f64 checkpoints"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int criterion = 0;
  std::string workdir = "acceptance_work";
  app.add_option("--criterion", criterion, "criterion number (1-11)")->required()->check(
      CLI::Range(1, 11));
  app.add_option("--workdir", workdir, "directory for reports and generated data");
  CLI11_PARSE(app, argc, argv);

  const fs::path dir = fs::path(workdir) / ("c" + std::to_string(criterion));
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    switch (criterion) {
      case 1: out = gradient_correctness(); break;
      case 2: out = sampler_exactness(); break;
      case 3: out = limit_behavior(); break;
      case 4: out = consistency(); break;
      case 5: out = uniform_reduction(); break;
      case 6: out = temperature_curves(dir); break;
      case 7: out = training_size(dir); break;
      case 8: out = method_comparison(dir); break;
      case 9: out = text_comparison(dir); break;
      case 10: out = metric_oracles(); break;
      case 11: out = determinism(dir); break;
    }
  } catch (const std::exception& e) {
    out = {false, std::string("aborted: ") + e.what()};
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream line;
  line << "criterion " << criterion << ": " << (out.pass ? "PASS" : "FAIL") << "  "
       << out.summary << "  [" << fmt(elapsed, 3) << " s]";
  std::cout << line.str() << std::endl;
  write_text_file(dir / "result.txt", line.str() + "\n");
  return out.pass ? 0 : 1;
}
