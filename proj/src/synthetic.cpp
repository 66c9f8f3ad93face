#include "rsoft/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include <json.hpp>

#include "rsoft/errors.hpp"
#include "rsoft/losses.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

double GroundTruth::marginal(ContextId i) const {
  double m = 0.0;
  for (double p : row(i)) m += p;
  return m;
}

namespace {

void check_component(const GaussianComponent& c) {
  if (!std::isfinite(c.sigma) || !(c.sigma > 0.0)) {
    throw ConfigError("mixture component has a degenerate covariance (sigma must be > 0)");
  }
  if (!std::isfinite(c.mean_x) || !std::isfinite(c.mean_y)) {
    throw ConfigError("mixture component mean must be finite");
  }
  if (!std::isfinite(c.weight) || c.weight < 0.0) {
    throw ConfigError("mixture component weight must be finite and >= 0");
  }
}

void normalize(std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DataError("joint distribution has no finite positive mass");
  }
  for (double& x : v) x /= total;
}

}  // namespace

GroundTruth mixture_from_components(std::size_t card_i, std::size_t card_j,
                                    std::vector<GaussianComponent> components,
                                    std::uint64_t seed) {
  if (card_i == 0 || card_j == 0) throw ConfigError("mixture grid must be non-empty");
  if (components.empty()) throw ConfigError("mixture needs at least one component");
  double weight_total = 0.0;
  for (const auto& c : components) {
    check_component(c);
    weight_total += c.weight;
  }
  if (!(weight_total > 0.0)) throw ConfigError("mixture weights are all zero");

  GroundTruth gt;
  gt.card_i = card_i;
  gt.card_j = card_j;
  gt.components = std::move(components);
  gt.seed = seed;
  gt.joint.assign(card_i * card_j, 0.0);
  const double ni = static_cast<double>(card_i);
  const double nj = static_cast<double>(card_j);
  std::vector<double> gy(card_j);
  for (const auto& c : gt.components) {
    const double inv2s2 = 1.0 / (2.0 * c.sigma * c.sigma);
    const double amp = c.weight / (2.0 * std::numbers::pi * c.sigma * c.sigma);
    // Offsets are formed as (cell + 0.5 - mean * n) / n so that a mean at the
    // grid center gives exactly mirrored offsets.
    for (std::size_t b = 0; b < card_j; ++b) {
      const double dy = (static_cast<double>(b) + 0.5 - c.mean_y * nj) / nj;
      gy[b] = std::exp(-dy * dy * inv2s2);
    }
    for (std::size_t a = 0; a < card_i; ++a) {
      const double dx = (static_cast<double>(a) + 0.5 - c.mean_x * ni) / ni;
      const double gx = amp * std::exp(-dx * dx * inv2s2);
      if (gx == 0.0) continue;
      double* row = gt.joint.data() + a * card_j;
      for (std::size_t b = 0; b < card_j; ++b) row[b] += gx * gy[b];
    }
  }
  normalize(gt.joint);
  return gt;
}

GroundTruth build_mixture(std::size_t card_i, std::size_t card_j, std::size_t n_components,
                          std::uint64_t seed, SigmaRange sigma_range) {
  if (n_components == 0) throw ConfigError("n_components must be >= 1");
  if (!(sigma_range.lo > 0.0) || !(sigma_range.hi >= sigma_range.lo) ||
      !std::isfinite(sigma_range.hi)) {
    throw ConfigError("sigma_range must be a positive interval");
  }
  Rng rng(seed);
  std::vector<GaussianComponent> comps(n_components);
  double wsum = 0.0;
  for (auto& c : comps) {
    c.mean_x = uniform01(rng);
    c.mean_y = uniform01(rng);
    c.sigma = sigma_range.lo + (sigma_range.hi - sigma_range.lo) * uniform01(rng);
    // Dirichlet(1) weights are normalized Exp(1) draws.
    c.weight = -std::log1p(-uniform01(rng));
    wsum += c.weight;
  }
  for (auto& c : comps) c.weight /= wsum;
  return mixture_from_components(card_i, card_j, std::move(comps), seed);
}

GroundTruth ground_truth_from_joint(std::size_t card_i, std::size_t card_j,
                                    std::vector<double> joint) {
  if (card_i == 0 || card_j == 0) throw ConfigError("joint grid must be non-empty");
  if (joint.size() != card_i * card_j) throw DataError("joint size is not card_i x card_j");
  for (double p : joint) {
    if (!std::isfinite(p) || p < 0.0) throw DataError("joint entries must be finite and >= 0");
  }
  normalize(joint);
  GroundTruth gt;
  gt.card_i = card_i;
  gt.card_j = card_j;
  gt.joint = std::move(joint);
  return gt;
}

std::vector<double> conditional(const GroundTruth& gt, ContextId i) {
  if (i >= gt.card_i) throw IndexError("conditional: context " + std::to_string(i) + " out of range");
  const double m = gt.marginal(i);
  if (!(m > 0.0)) {
    throw DataError("conditional: context " + std::to_string(i) + " has zero marginal");
  }
  const auto r = gt.row(i);
  std::vector<double> p(r.begin(), r.end());
  for (double& x : p) x /= m;
  return p;
}

PairDataset sample_pairs(const GroundTruth& gt, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) throw ConfigError("sample_pairs: n_pairs must be >= 1");
  const CategoricalTable table(gt.joint);
  Rng rng(seed);
  PairDataset data;
  data.pairs.resize(n_pairs);
  for (auto& p : data.pairs) {
    const std::size_t cell = table.sample(rng);
    p.context = static_cast<ContextId>(cell / gt.card_j);
    p.target = static_cast<TargetId>(cell % gt.card_j);
  }
  data.split.assign(n_pairs, Split::train);
  data.source_meta = "synthetic: " + std::to_string(gt.card_i) + "x" + std::to_string(gt.card_j) +
                     " grid, " + std::to_string(gt.components.size()) + " components, seed " +
                     std::to_string(gt.seed) + ", " + std::to_string(n_pairs) + " pairs";
  return data;
}

Vocab grid_vocab(const GroundTruth& gt, const PairDataset& data) {
  Vocab v;
  v.context_labels.reserve(gt.card_i);
  v.target_labels.reserve(gt.card_j);
  for (std::size_t i = 0; i < gt.card_i; ++i) v.context_labels.push_back("c" + std::to_string(i));
  for (std::size_t j = 0; j < gt.card_j; ++j) v.target_labels.push_back("t" + std::to_string(j));
  assign_train_counts(v, data);
  return v;
}

std::vector<double> oracle_degeneracy(const GroundTruth& gt, ContextId i) {
  const auto p = conditional(gt, i);
  double pmax = 0.0;
  for (double x : p) pmax = std::max(pmax, x);
  const double eps = kOracleMaskEpsilon * pmax;
  std::vector<double> d(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) d[j] = p[j] > eps ? 1.0 / p[j] : 0.0;
  return d;
}

DegeneracyTable oracle_degeneracy_table(const GroundTruth& gt) {
  std::vector<double> rows;
  rows.reserve(gt.card_i * gt.card_j);
  for (std::size_t i = 0; i < gt.card_i; ++i) {
    const auto ci = static_cast<ContextId>(i);
    if (gt.marginal(ci) > 0.0) {
      const auto d = oracle_degeneracy(gt, ci);
      rows.insert(rows.end(), d.begin(), d.end());
    } else {
      rows.insert(rows.end(), gt.card_j, 1.0);
    }
  }
  return DegeneracyTable::per_context(gt.card_i, gt.card_j, std::move(rows));
}

double kl_conditional(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DataError("kl: distributions differ in length");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    if (q[k] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl;
}

double kl_joint(const GroundTruth& gt, const ModelParams& params,
                std::span<const std::uint64_t> context_counts) {
  if (params.card_i() != gt.card_i || params.card_j() != gt.card_j) {
    throw DataError("kl_joint: model and ground-truth dimensions differ");
  }
  if (context_counts.size() != gt.card_i) throw DataError("kl_joint: context count length");
  double total = 0.0;
  for (auto c : context_counts) total += static_cast<double>(c);
  if (!(total > 0.0)) throw DataError("kl_joint: empty context popularity");

  double kl = 0.0;
  std::vector<double> scores(gt.card_j);
  for (std::size_t i = 0; i < gt.card_i; ++i) {
    const auto ci = static_cast<ContextId>(i);
    const auto row = gt.row(ci);
    const double m = gt.marginal(ci);
    if (!(m > 0.0)) continue;
    const double pop = static_cast<double>(context_counts[i]) / total;
    if (pop == 0.0) {
      std::cerr << "kl_joint: support mismatch, context " << i
                << " has true mass but no training pairs\n";
      return std::numeric_limits<double>::infinity();
    }
    score_all_targets(params, ci, scores);
    const double lse = log_sum_exp(scores);
    const double log_pop = std::log(pop);
    for (std::size_t j = 0; j < gt.card_j; ++j) {
      if (row[j] <= 0.0) continue;
      kl += row[j] * (std::log(row[j]) - log_pop - (scores[j] - lse));
    }
  }
  return kl;
}

double kl_joint(const GroundTruth& gt, const ModelParams& params, const Vocab& vocab) {
  return kl_joint(gt, params, vocab.context_counts);
}

EmpiricalConditionals empirical_conditionals(std::span<const Pair> pairs, std::size_t card_i,
                                             std::size_t card_j) {
  EmpiricalConditionals e;
  e.card_i = card_i;
  e.card_j = card_j;
  e.probs.assign(card_i * card_j, 0.0);
  e.row_counts.assign(card_i, 0);
  for (const auto& p : pairs) {
    if (p.context >= card_i || p.target >= card_j) {
      throw IndexError("empirical_conditionals: pair out of range");
    }
    e.probs[p.context * card_j + p.target] += 1.0;
    ++e.row_counts[p.context];
  }
  for (std::size_t i = 0; i < card_i; ++i) {
    if (e.row_counts[i] == 0) continue;
    const double n = static_cast<double>(e.row_counts[i]);
    for (std::size_t j = 0; j < card_j; ++j) e.probs[i * card_j + j] /= n;
  }
  return e;
}

ConditionalKl averaged_conditional_kl(const GroundTruth& gt, const EmpiricalConditionals& emp,
                                      const ModelParams& params) {
  if (emp.card_i != gt.card_i || emp.card_j != gt.card_j || params.card_i() != gt.card_i ||
      params.card_j() != gt.card_j) {
    throw DataError("averaged_conditional_kl: dimensions differ");
  }
  ConditionalKl out;
  std::vector<double> scores(gt.card_j);
  for (std::size_t i = 0; i < gt.card_i; ++i) {
    if (emp.row_counts[i] == 0) continue;
    const auto ci = static_cast<ContextId>(i);
    score_all_targets(params, ci, scores);
    const auto g = conditional_softmax(scores);
    out.true_kl += kl_conditional(conditional(gt, ci), g);
    out.empirical_kl += kl_conditional(emp.row(ci), g);
    ++out.contexts;
  }
  if (out.contexts > 0) {
    out.true_kl /= static_cast<double>(out.contexts);
    out.empirical_kl /= static_cast<double>(out.contexts);
  }
  return out;
}

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["card_i"] = gt.card_i;
  header["card_j"] = gt.card_j;
  header["dtype"] = "f64";
  header["seed"] = gt.seed;
  auto comps = nlohmann::json::array();
  for (const auto& c : gt.components) {
    comps.push_back({{"mean_x", c.mean_x}, {"mean_y", c.mean_y}, {"sigma", c.sigma},
                     {"weight", c.weight}});
  }
  header["components"] = comps;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(gt.joint.data()),
            static_cast<std::streamsize>(gt.joint.size() * sizeof(double)));
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ground truth " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("ground truth: missing header");
  GroundTruth gt;
  try {
    const auto h = nlohmann::json::parse(line);
    gt.card_i = h.at("card_i").get<std::size_t>();
    gt.card_j = h.at("card_j").get<std::size_t>();
    if (h.at("dtype").get<std::string>() != "f64") throw ParseError("ground truth: dtype must be f64");
    gt.seed = h.value("seed", std::uint64_t{0});
    for (const auto& c : h.value("components", nlohmann::json::array())) {
      gt.components.push_back({c.at("mean_x").get<double>(), c.at("mean_y").get<double>(),
                               c.at("sigma").get<double>(), c.at("weight").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ground truth header: ") + e.what());
  }
  gt.joint.resize(gt.card_i * gt.card_j);
  in.read(reinterpret_cast<char*>(gt.joint.data()),
          static_cast<std::streamsize>(gt.joint.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != gt.joint.size() * sizeof(double) ||
      in.peek() != std::char_traits<char>::eof()) {
    throw ParseError("ground truth payload: size does not match card_i x card_j");
  }
  return gt;
}

}  // namespace rsoft
