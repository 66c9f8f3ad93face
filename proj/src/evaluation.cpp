#include "rsoft/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "rsoft/errors.hpp"
#include "rsoft/losses.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

namespace {

void check_pairs(const ModelParams& params, std::span<const Pair> pairs, const char* what) {
  if (pairs.empty()) throw DataError(std::string(what) + ": empty evaluation set");
  for (const auto& p : pairs) {
    if (p.context >= params.card_i() || p.target >= params.card_j()) {
      throw IndexError(std::string(what) + ": pair out of model range");
    }
  }
}

// Calls fn(pair_index, score_row) for every pair, computing each distinct
// context's score row once. Per-pair results go into a vector indexed by pair
// so that the final sums run in pair order.
template <typename Fn>
void for_each_pair_grouped(const ModelParams& params, std::span<const Pair> pairs, Fn&& fn) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].context < pairs[b].context;
  });
  std::vector<double> scores(params.card_j());
  std::size_t k = 0;
  while (k < order.size()) {
    const ContextId i = pairs[order[k]].context;
    score_all_targets(params, i, scores);
    for (; k < order.size() && pairs[order[k]].context == i; ++k) {
      fn(order[k], std::span<const double>(scores));
    }
  }
}

double ordered_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double test_likelihood(const ModelParams& params, std::span<const Pair> pairs) {
  check_pairs(params, pairs, "test_likelihood");
  std::vector<double> per_pair(pairs.size());
  ContextId cached = 0;
  double lse = 0.0;
  bool have = false;
  for_each_pair_grouped(params, pairs, [&](std::size_t k, std::span<const double> s) {
    if (!have || cached != pairs[k].context) {
      lse = log_sum_exp(s);
      cached = pairs[k].context;
      have = true;
    }
    per_pair[k] = std::exp(s[pairs[k].target] - lse);
  });
  return ordered_mean(per_pair);
}

double approx_mpr(const ModelParams& params, std::span<const Pair> pairs,
                  std::size_t m_negatives, std::uint64_t seed) {
  if (m_negatives == 0) throw ConfigError("approx_mpr: m_negatives must be >= 1");
  check_pairs(params, pairs, "approx_mpr");
  std::vector<double> per_pair(pairs.size());
  const std::size_t card_j = params.card_j();
  for_each_pair_grouped(params, pairs, [&](std::size_t k, std::span<const double> s) {
    Rng rng(derive_seed(seed, k));
    const double pos = s[pairs[k].target];
    double wins = 0.0;
    for (std::size_t r = 0; r < m_negatives; ++r) {
      const double neg = s[uniform_index(rng, card_j)];
      wins += pos > neg ? 1.0 : (pos == neg ? 0.5 : 0.0);
    }
    per_pair[k] = wins / static_cast<double>(m_negatives);
  });
  return ordered_mean(per_pair);
}

std::size_t target_rank(std::span<const double> scores, TargetId j) {
  const double sj = scores[j];
  std::size_t rank = 1;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (scores[t] > sj || (scores[t] == sj && t < j)) ++rank;
  }
  return rank;
}

std::map<std::size_t, double> precision_at_ks(const ModelParams& params,
                                              std::span<const Pair> pairs,
                                              std::span<const std::size_t> ks) {
  for (auto k : ks) {
    if (k < 1 || k > params.card_j()) {
      throw ConfigError("precision_at_k: k = " + std::to_string(k) + " outside [1, card(J)]");
    }
  }
  check_pairs(params, pairs, "precision_at_k");
  std::vector<std::size_t> ranks(pairs.size());
  for_each_pair_grouped(params, pairs, [&](std::size_t k, std::span<const double> s) {
    ranks[k] = target_rank(s, pairs[k].target);
  });
  std::map<std::size_t, double> out;
  for (auto k : ks) {
    std::size_t hits = 0;
    for (auto r : ranks) hits += r <= k ? 1 : 0;
    out[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return out;
}

double precision_at_k(const ModelParams& params, std::span<const Pair> pairs, std::size_t k) {
  const std::size_t ks[] = {k};
  return precision_at_ks(params, pairs, ks).at(k);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) throw DataError("pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("correlation: zero-variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Average ranks, 1-based, ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t k = 0;
  while (k < idx.size()) {
    std::size_t e = k;
    while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
    const double avg = (static_cast<double>(k) + static_cast<double>(e)) / 2.0 + 1.0;
    for (std::size_t q = k; q <= e; ++q) r[idx[q]] = avg;
    k = e + 1;
  }
  return r;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

SimilarityResult similarity_eval(const ModelParams& params, const Vocab& vocab,
                                 std::span<const SimilarityTriple> triples, Correlation kind) {
  if (vocab.card_i() != params.card_i()) throw DataError("similarity: vocab/model mismatch");
  const auto index = vocab.context_index();
  SimilarityResult res;
  std::vector<double> human, model;
  for (const auto& t : triples) {
    const auto a = index.find(t.a);
    const auto b = index.find(t.b);
    if (a == index.end() || b == index.end()) {
      ++res.out_of_vocab;
      continue;
    }
    const auto wa = params.W.row(a->second);
    const auto wb = params.W.row(b->second);
    const double na = norm(wa), nb = norm(wb);
    if (na == 0.0 || nb == 0.0) throw DataError("similarity: zero-norm embedding for '" +
                                                (na == 0.0 ? t.a : t.b) + "'");
    human.push_back(t.score);
    model.push_back(dot(wa, wb) / (na * nb));
  }
  res.used = human.size();
  if (res.used < 2) throw DataError("similarity: fewer than 2 in-vocabulary triples");
  res.correlation = kind == Correlation::pearson ? pearson(human, model) : spearman(human, model);
  return res;
}

AnalogyResult analogy_eval(const ModelParams& params, const Vocab& vocab,
                           std::span<const AnalogyQuad> quads, std::span<const std::size_t> ks) {
  if (vocab.card_i() != params.card_i()) throw DataError("analogy: vocab/model mismatch");
  if (ks.empty()) throw ConfigError("analogy: no k values");
  for (auto k : ks) {
    if (k < 1) throw ConfigError("analogy: k must be >= 1");
  }
  const auto index = vocab.context_index();
  const std::size_t n = params.card_i();
  const std::size_t d = params.dim();
  std::vector<double> norms(n);
  for (std::size_t t = 0; t < n; ++t) norms[t] = norm(params.W.row(t));

  AnalogyResult res;
  std::map<std::string, std::pair<std::size_t, std::vector<std::size_t>>> tallies;  // questions, hits per k
  std::vector<double> query(d);
  for (const auto& q : quads) {
    const auto a = index.find(q.a), b = index.find(q.b), c = index.find(q.c), e = index.find(q.d);
    if (a == index.end() || b == index.end() || c == index.end() || e == index.end()) {
      ++res.out_of_vocab;
      continue;
    }
    ++res.used;
    const auto wa = params.W.row(a->second), wb = params.W.row(b->second),
               wc = params.W.row(c->second);
    for (std::size_t x = 0; x < d; ++x) query[x] = wb[x] - wa[x] + wc[x];
    const double qn = norm(query);
    auto cosine = [&](std::size_t t) {
      const double den = qn * norms[t];
      return den > 0.0 ? dot(query, params.W.row(t)) / den : 0.0;
    };
    const std::size_t target = e->second;
    const bool excluded_target =
        target == a->second || target == b->second || target == c->second;
    std::size_t rank = std::numeric_limits<std::size_t>::max();
    if (!excluded_target) {
      const double ct = cosine(target);
      rank = 1;
      for (std::size_t t = 0; t < n; ++t) {
        if (t == a->second || t == b->second || t == c->second || t == target) continue;
        const double ctt = cosine(t);
        if (ctt > ct || (ctt == ct && t < target)) ++rank;
      }
    }
    for (const std::string& cat : {std::string(q.syntactic ? "syntactic" : "semantic"),
                                  std::string("all")}) {
      auto& [count, hits] = tallies[cat];
      hits.resize(ks.size(), 0);
      ++count;
      for (std::size_t r = 0; r < ks.size(); ++r) hits[r] += rank <= ks[r] ? 1 : 0;
    }
  }
  if (res.used == 0) throw DataError("analogy: no usable questions");
  for (const auto& [cat, tally] : tallies) {
    for (std::size_t r = 0; r < ks.size(); ++r) {
      res.precision[{cat, ks[r]}] =
          static_cast<double>(tally.second[r]) / static_cast<double>(tally.first);
    }
  }
  return res;
}

void MetricsReport::validate() const {
  auto rate = [](double v, const std::string& what) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError(what + " outside [0,1]");
  };
  if (likelihood) rate(*likelihood, "likelihood");
  if (mpr) rate(*mpr, "mpr");
  for (const auto& [k, v] : prec_at) rate(v, "prec@" + std::to_string(k));
  for (const auto& [key, v] : analogy) rate(v, "analogy " + key.first);
  for (const auto& [name, v] : similarity) {
    if (!(v >= -1.0 && v <= 1.0)) throw DataError("similarity " + name + " outside [-1,1]");
  }
}

namespace {

// JSON has no infinities; non-finite values travel as "inf", "-inf" or "nan".
nlohmann::json encode_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_real(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError("metrics report: bad number '" + s + "'");
  }
  return j.get<double>();
}

nlohmann::json encode_map(const std::map<std::string, double>& m) {
  auto o = nlohmann::json::object();
  for (const auto& [k, v] : m) o[k] = encode_real(v);
  return o;
}

std::map<std::string, double> decode_map(const nlohmann::json& j) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) m[k] = decode_real(v);
  return m;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["wall_time_s"] = wall_time_s;
  j["likelihood"] = likelihood ? encode_real(*likelihood) : nlohmann::json(nullptr);
  j["mpr"] = mpr ? encode_real(*mpr) : nlohmann::json(nullptr);
  auto prec = nlohmann::json::object();
  for (const auto& [k, v] : prec_at) prec[std::to_string(k)] = v;
  j["prec_at"] = prec;
  j["similarity"] = encode_map(similarity);
  auto ana = nlohmann::json::array();
  for (const auto& [key, v] : analogy) {
    ana.push_back({{"section", key.first}, {"k", key.second}, {"precision", v}});
  }
  j["analogy"] = ana;
  j["kl"] = encode_map(kl);
  j["loss"] = encode_map(loss);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.run_id = j.value("run_id", "");
    r.seed = j.value("seed", std::uint64_t{0});
    r.config_hash = j.value("config_hash", "");
    r.wall_time_s = j.value("wall_time_s", 0.0);
    if (j.contains("likelihood") && !j["likelihood"].is_null()) r.likelihood = decode_real(j["likelihood"]);
    if (j.contains("mpr") && !j["mpr"].is_null()) r.mpr = decode_real(j["mpr"]);
    if (j.contains("prec_at")) {
      for (const auto& [k, v] : j["prec_at"].items()) r.prec_at[std::stoul(k)] = v.get<double>();
    }
    if (j.contains("similarity")) r.similarity = decode_map(j["similarity"]);
    if (j.contains("analogy")) {
      for (const auto& e : j["analogy"]) {
        r.analogy[{e.at("section").get<std::string>(), e.at("k").get<std::size_t>()}] =
            e.at("precision").get<double>();
      }
    }
    if (j.contains("kl")) r.kl = decode_map(j["kl"]);
    if (j.contains("loss")) r.loss = decode_map(j["loss"]);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
  return r;
}

std::vector<std::pair<std::string, double>> MetricsReport::long_rows() const {
  std::vector<std::pair<std::string, double>> rows;
  if (likelihood) rows.emplace_back("likelihood", *likelihood);
  if (mpr) rows.emplace_back("mpr", *mpr);
  for (const auto& [k, v] : prec_at) rows.emplace_back("prec@" + std::to_string(k), v);
  for (const auto& [name, v] : similarity) rows.emplace_back("similarity/" + name, v);
  for (const auto& [key, v] : analogy) {
    rows.emplace_back("analogy/" + key.first + "@" + std::to_string(key.second), v);
  }
  for (const auto& [name, v] : kl) rows.emplace_back(name, v);
  for (const auto& [name, v] : loss) rows.emplace_back(name, v);
  return rows;
}

std::string MetricsReport::to_csv_rows() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& [metric, value] : long_rows()) {
    out << run_id << ',' << metric << ',' << value << '\n';
  }
  return out.str();
}

}  // namespace rsoft
