#include "rsoft/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "rsoft/errors.hpp"
#include "rsoft/losses.hpp"
#include "rsoft/neg_sampling.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["config_hash"] = config_hash;
  j["loss_trace"] = loss_trace;
  auto snaps = nlohmann::json::array();
  for (const auto& s : snapshots) {
    snaps.push_back({{"step", s.step},
                     {"epoch", s.epoch},
                     {"elapsed_s", s.elapsed_s},
                     {"metrics", s.metrics.to_json()}});
  }
  j["snapshots"] = snaps;
  j["checkpoint_path"] = checkpoint_path;
  j["wall_time_s"] = wall_time_s;
  j["steps"] = steps;
  return j;
}

Matrix score_rows(const ModelParams& params, std::span<const ContextId> contexts) {
  const std::size_t d = params.dim();
  const std::size_t card_j = params.card_j();
  RowMatrix wc(static_cast<Eigen::Index>(contexts.size()), static_cast<Eigen::Index>(d));
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto w = params.W.row(contexts[c]);
    std::copy(w.begin(), w.end(), wc.row(static_cast<Eigen::Index>(c)).data());
  }
  const Eigen::Map<const RowMatrix> o(params.O.data().data(), static_cast<Eigen::Index>(card_j),
                                      static_cast<Eigen::Index>(d));
  Matrix out(contexts.size(), card_j);
  Eigen::Map<RowMatrix> s(out.data().data(), static_cast<Eigen::Index>(contexts.size()),
                          static_cast<Eigen::Index>(card_j));
  s.noalias() = wc * o.transpose();
  return out;
}

namespace {

struct MleBatch {
  std::vector<ContextId> contexts;  // distinct, ascending
  RowMatrix grad_wc;                // one row per context
  RowMatrix grad_o;                 // card(J) x d
  double loss = 0.0;
};

MleBatch mle_batch(const ModelParams& params, std::span<const Pair> batch) {
  MleBatch out;
  for (const auto& p : batch) out.contexts.push_back(p.context);
  std::sort(out.contexts.begin(), out.contexts.end());
  out.contexts.erase(std::unique(out.contexts.begin(), out.contexts.end()), out.contexts.end());
  const auto nc = static_cast<Eigen::Index>(out.contexts.size());
  const auto d = static_cast<Eigen::Index>(params.dim());
  const auto card_j = static_cast<Eigen::Index>(params.card_j());

  RowMatrix wc(nc, d);
  for (Eigen::Index c = 0; c < nc; ++c) {
    const auto w = params.W.row(out.contexts[static_cast<std::size_t>(c)]);
    std::copy(w.begin(), w.end(), wc.row(c).data());
  }
  const Eigen::Map<const RowMatrix> o(params.O.data().data(), card_j, d);
  RowMatrix coef = wc * o.transpose();

  auto slot = [&](ContextId i) {
    return static_cast<Eigen::Index>(
        std::lower_bound(out.contexts.begin(), out.contexts.end(), i) - out.contexts.begin());
  };
  std::vector<double> counts(out.contexts.size(), 0.0);
  for (const auto& p : batch) counts[static_cast<std::size_t>(slot(p.context))] += 1.0;
  for (const auto& p : batch) {
    if (!std::isfinite(coef(slot(p.context), p.target))) {
      throw NumericalError("MLE batch: non-finite score for pair (" + std::to_string(p.context) +
                           ", " + std::to_string(p.target) + ")");
    }
  }

  // Loss terms need the raw scores, so collect them before overwriting rows.
  std::vector<double> lse(out.contexts.size());
  for (Eigen::Index c = 0; c < nc; ++c) {
    auto row = coef.row(c);
    const double m = row.maxCoeff();
    double s = 0.0;
    for (Eigen::Index t = 0; t < card_j; ++t) s += std::exp(row(t) - m);
    lse[static_cast<std::size_t>(c)] = m + std::log(s);
  }
  for (const auto& p : batch) {
    const auto c = slot(p.context);
    out.loss += lse[static_cast<std::size_t>(c)] - coef(c, p.target);
  }
  for (Eigen::Index c = 0; c < nc; ++c) {
    const double l = lse[static_cast<std::size_t>(c)];
    const double n = counts[static_cast<std::size_t>(c)];
    auto row = coef.row(c);
    for (Eigen::Index t = 0; t < card_j; ++t) row(t) = n * std::exp(row(t) - l);
  }
  for (const auto& p : batch) coef(slot(p.context), p.target) -= 1.0;

  out.grad_wc.noalias() = coef * o;
  out.grad_o.noalias() = coef.transpose() * wc;
  return out;
}

}  // namespace

double mle_batch_gradient(const ModelParams& params, std::span<const Pair> batch, Matrix& grad_w,
                          Matrix& grad_o) {
  for (const auto& p : batch) {
    if (p.context >= params.card_i() || p.target >= params.card_j()) {
      throw IndexError("mle_batch_gradient: pair out of range");
    }
  }
  const auto mb = mle_batch(params, batch);
  grad_w = Matrix(params.card_i(), params.dim());
  grad_o = Matrix(params.card_j(), params.dim());
  for (std::size_t c = 0; c < mb.contexts.size(); ++c) {
    auto dst = grad_w.row(mb.contexts[c]);
    for (std::size_t x = 0; x < dst.size(); ++x) dst[x] = mb.grad_wc(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(x));
  }
  std::copy(mb.grad_o.data(), mb.grad_o.data() + mb.grad_o.size(), grad_o.data().begin());
  return mb.loss;
}

namespace {

// Dense gradient accumulators with a list of touched rows.
struct GradBuffer {
  Matrix gw, go;
  std::vector<std::uint8_t> w_mark, o_mark;
  std::vector<std::uint32_t> w_rows, o_rows;

  void init(std::size_t card_i, std::size_t card_j, std::size_t d) {
    gw = Matrix(card_i, d);
    go = Matrix(card_j, d);
    w_mark.assign(card_i, 0);
    o_mark.assign(card_j, 0);
  }
  std::span<double> w(std::uint32_t r) {
    if (!w_mark[r]) {
      w_mark[r] = 1;
      w_rows.push_back(r);
    }
    return gw.row(r);
  }
  std::span<double> o(std::uint32_t r) {
    if (!o_mark[r]) {
      o_mark[r] = 1;
      o_rows.push_back(r);
    }
    return go.row(r);
  }
  void add(const LossGrad& lg, ContextId i) {
    auto dw = w(i);
    for (std::size_t x = 0; x < dw.size(); ++x) dw[x] += lg.grad_w[x];
    for (std::size_t k = 0; k < lg.targets.size(); ++k) {
      const double c = lg.score_grads[k];
      auto dst = o(lg.targets[k]);
      for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += c * lg.w_row[x];
    }
  }
  void merge_from(GradBuffer& other) {
    for (auto r : other.w_rows) {
      auto dst = w(r);
      auto src = other.gw.row(r);
      for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += src[x];
    }
    for (auto r : other.o_rows) {
      auto dst = o(r);
      auto src = other.go.row(r);
      for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += src[x];
    }
    other.clear();
  }
  void clear() {
    for (auto r : w_rows) {
      std::fill(gw.row(r).begin(), gw.row(r).end(), 0.0);
      w_mark[r] = 0;
    }
    for (auto r : o_rows) {
      std::fill(go.row(r).begin(), go.row(r).end(), 0.0);
      o_mark[r] = 0;
    }
    w_rows.clear();
    o_rows.clear();
  }
};

class OptimizerState {
 public:
  OptimizerState(const TrainConfig& cfg, const ModelParams& p) : cfg_(cfg) {
    if (cfg.optimizer == Optimizer::sgd) return;
    a_w_ = Matrix(p.card_i(), p.dim());
    a_o_ = Matrix(p.card_j(), p.dim());
    if (cfg.optimizer == Optimizer::adam) {
      b_w_ = Matrix(p.card_i(), p.dim());
      b_o_ = Matrix(p.card_j(), p.dim());
    }
  }

  // `scale` turns the summed gradient into the batch mean.
  void apply(ModelParams& p, GradBuffer& g, double lr, double scale, std::size_t step) {
    std::sort(g.w_rows.begin(), g.w_rows.end());
    std::sort(g.o_rows.begin(), g.o_rows.end());
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(step + 1));
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(step + 1));
    for (auto r : g.w_rows) update(p.W.row(r), g.gw.row(r), a_w_, b_w_, r, lr, scale, bc1, bc2);
    for (auto r : g.o_rows) update(p.O.row(r), g.go.row(r), a_o_, b_o_, r, lr, scale, bc1, bc2);
  }

 private:
  void update(std::span<double> theta, std::span<const double> grad, Matrix& a, Matrix& b,
              std::uint32_t r, double lr, double scale, double bc1, double bc2) const {
    switch (cfg_.optimizer) {
      case Optimizer::sgd:
        for (std::size_t x = 0; x < theta.size(); ++x) theta[x] -= lr * (grad[x] * scale);
        break;
      case Optimizer::adagrad: {
        auto h = a.row(r);
        for (std::size_t x = 0; x < theta.size(); ++x) {
          const double gx = grad[x] * scale;
          h[x] += gx * gx;
          theta[x] -= lr * gx / (std::sqrt(h[x]) + cfg_.optimizer_eps);
        }
        break;
      }
      case Optimizer::adam: {
        auto m = a.row(r);
        auto v = b.row(r);
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        for (std::size_t x = 0; x < theta.size(); ++x) {
          const double gx = grad[x] * scale;
          m[x] = b1 * m[x] + (1.0 - b1) * gx;
          v[x] = b2 * v[x] + (1.0 - b2) * gx * gx;
          theta[x] -= lr * (m[x] / bc1) / (std::sqrt(v[x] / bc2) + cfg_.optimizer_eps);
        }
        break;
      }
    }
  }

  const TrainConfig& cfg_;
  Matrix a_w_, a_o_, b_w_, b_o_;
};

std::string score_range(const ModelParams& params, ContextId i) {
  const auto s = score_all_targets(params, i);
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  std::ostringstream out;
  out << "score range of context " << i << " = [" << *lo << ", " << *hi << "]";
  return out.str();
}

void check_rows_finite(const ModelParams& p, const GradBuffer& g, std::size_t step) {
  auto finite = [](std::span<const double> r) {
    return std::all_of(r.begin(), r.end(), [](double x) { return std::isfinite(x); });
  };
  for (auto r : g.w_rows) {
    if (!finite(p.W.row(r))) {
      throw NumericalError("non-finite parameters after step " + std::to_string(step) +
                           " in W row " + std::to_string(r));
    }
  }
  for (auto r : g.o_rows) {
    if (!finite(p.O.row(r))) {
      throw NumericalError("non-finite parameters after step " + std::to_string(step) +
                           " in O row " + std::to_string(r));
    }
  }
}

// Per-context negative samplers for one batch (Boltzmann batch cache).
struct BatchSamplers {
  std::vector<ContextId> contexts;
  std::vector<CdfSampler> samplers;

  const CdfSampler& at(ContextId i) const {
    const auto it = std::lower_bound(contexts.begin(), contexts.end(), i);
    return samplers[static_cast<std::size_t>(it - contexts.begin())];
  }
};

BatchSamplers build_batch_samplers(const ModelParams& params, const NegativeSampler& sampler,
                                   std::span<const Pair> batch) {
  BatchSamplers b;
  for (const auto& p : batch) b.contexts.push_back(p.context);
  std::sort(b.contexts.begin(), b.contexts.end());
  b.contexts.erase(std::unique(b.contexts.begin(), b.contexts.end()), b.contexts.end());
  const Matrix s = score_rows(params, b.contexts);
  b.samplers.reserve(b.contexts.size());
  for (std::size_t c = 0; c < b.contexts.size(); ++c) {
    b.samplers.emplace_back(sampler.probabilities_from_scores(b.contexts[c], s.row(c)));
  }
  return b;
}

}  // namespace

MetricsReport evaluate_model(const ModelParams& params, const Vocab& vocab,
                             const PairDataset& data, const GroundTruth* gt,
                             const TrainConfig& config) {
  MetricsReport r;
  r.seed = config.seed;
  if (gt != nullptr) {
    r.kl["kl_joint"] = kl_joint(*gt, params, vocab.context_counts);
    const auto train_pairs = data.subset(Split::train);
    const auto emp = empirical_conditionals(train_pairs, gt->card_i, gt->card_j);
    const auto ck = averaged_conditional_kl(*gt, emp, params);
    r.kl["kl_true"] = ck.true_kl;
    r.kl["kl_empirical"] = ck.empirical_kl;
  }
  if (config.eval_split != "none") {
    const Split which = config.eval_split == "test" ? Split::test : Split::valid;
    const auto pairs = data.subset(which);
    if (!pairs.empty()) {
      r.likelihood = test_likelihood(params, pairs);
      r.mpr = approx_mpr(params, pairs, config.mpr_negatives, config.eval_seed);
      std::vector<std::size_t> ks;
      for (auto k : config.prec_ks) {
        if (k <= params.card_j()) ks.push_back(k);
      }
      if (!ks.empty()) r.prec_at = precision_at_ks(params, pairs, ks);
    }
  }
  return r;
}

TrainResult train(const TrainConfig& config, const TrainInputs& inputs,
                  const StepCallback& on_step) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  config.validate();
  if (inputs.vocab == nullptr || inputs.data == nullptr) {
    throw ConfigError("train: vocabulary and dataset are required");
  }
  const Vocab& vocab = *inputs.vocab;
  const PairDataset& data = *inputs.data;
  data.validate(vocab);
  const std::vector<Pair> train_pairs = data.subset(Split::train);
  if (train_pairs.empty()) throw DataError("train: the train split is empty");

  TrainResult res;
  res.params = inputs.init ? *inputs.init
                           : init_params(vocab.card_i(), vocab.card_j(), config.dim,
                                         derive_seed(config.seed, 0), config.resolved_init_scale());
  ModelParams& params = res.params;
  if (params.card_i() != vocab.card_i() || params.card_j() != vocab.card_j()) {
    throw DataError("train: initial parameters do not match the vocabulary");
  }

  const SamplerSpec spec = config.sampler_spec();
  std::optional<NegativeSampler> sampler;
  if (is_sampled(config.method)) {
    std::optional<DegeneracyTable> oracle;
    if (spec.kind == SamplerKind::boltzmann &&
        spec.degeneracy == DegeneracyKind::oracle_inverse_p) {
      if (inputs.ground_truth == nullptr) {
        throw ConfigError("oracle_inverse_p degeneracy needs a ground truth");
      }
      if (inputs.ground_truth->card_i != vocab.card_i() ||
          inputs.ground_truth->card_j != vocab.card_j()) {
        throw DataError("ground truth does not match the vocabulary");
      }
      oracle = oracle_degeneracy_table(*inputs.ground_truth);
    }
    sampler.emplace(spec, vocab, std::move(oracle));
  }
  const std::size_t n_neg = config.resolved_negatives();
  const std::vector<double> ss_proposal =
      config.method == Method::SS ? sampler->static_table().probabilities() : std::vector<double>{};

  const std::size_t batch = config.batch_size;
  const std::size_t n_train = train_pairs.size();
  const std::size_t steps_per_epoch = (n_train + batch - 1) / batch;
  const std::size_t total_steps =
      config.max_steps > 0 ? config.max_steps : config.epochs * steps_per_epoch;

  res.record.config = config.to_json();
  res.record.config_hash = config.hash();
  res.record.loss_trace.reserve(total_steps);

  const std::size_t n_workers = std::max<std::size_t>(1, config.threads);
  std::vector<GradBuffer> buffers(n_workers);
  for (auto& b : buffers) b.init(vocab.card_i(), vocab.card_j(), params.dim());
  OptimizerState opt(config, params);

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Pair> batch_pairs;
  batch_pairs.reserve(batch);
  std::vector<double> pair_losses;
  std::size_t pos = n_train;  // forces a shuffle at the first step
  std::size_t epoch = 0;
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;

  auto snapshot = [&](std::size_t step) {
    Snapshot s;
    s.step = step;
    s.epoch = static_cast<double>(step) / static_cast<double>(steps_per_epoch);
    s.metrics = evaluate_model(params, vocab, data, inputs.ground_truth, config);
    s.metrics.config_hash = res.record.config_hash;
    if (interval_steps > 0) {
      s.metrics.loss["train_loss"] = interval_loss / static_cast<double>(interval_steps);
    }
    s.elapsed_s = elapsed();
    s.metrics.wall_time_s = s.elapsed_s;
    res.record.snapshots.push_back(std::move(s));
    interval_loss = 0.0;
    interval_steps = 0;
  };

  for (std::size_t step = 0; step < total_steps; ++step) {
    if (pos >= n_train) {
      if (config.shuffle) {
        Rng shuffle_rng(derive_seed(config.seed, 1000 + epoch));
        for (std::size_t k = n_train; k > 1; --k) {
          std::swap(order[k - 1], order[uniform_index(shuffle_rng, k)]);
        }
      }
      pos = 0;
      ++epoch;
    }
    const std::size_t end = std::min(n_train, pos + batch);
    batch_pairs.clear();
    for (std::size_t k = pos; k < end; ++k) batch_pairs.push_back(train_pairs[order[k]]);
    pos = end;
    const std::size_t bsize = batch_pairs.size();

    double batch_loss = 0.0;
    GradBuffer& acc = buffers[0];
    if (config.method == Method::MLE) {
      MleBatch mb;
      try {
        mb = mle_batch(params, batch_pairs);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
      }
      batch_loss = mb.loss;
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("non-finite MLE loss at step " + std::to_string(step) + "; " +
                             score_range(params, batch_pairs.front().context));
      }
      for (std::size_t c = 0; c < mb.contexts.size(); ++c) {
        auto dst = acc.w(mb.contexts[c]);
        for (std::size_t x = 0; x < dst.size(); ++x) {
          dst[x] = mb.grad_wc(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(x));
        }
      }
      for (std::uint32_t t = 0; t < params.card_j(); ++t) {
        auto dst = acc.o(t);
        for (std::size_t x = 0; x < dst.size(); ++x) {
          dst[x] = mb.grad_o(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(x));
        }
      }
    } else {
      std::optional<BatchSamplers> cached;
      if (sampler->is_dynamic() && config.boltzmann_cache == BoltzmannCache::batch) {
        try {
          cached = build_batch_samplers(params, *sampler, batch_pairs);
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
        }
      }
      pair_losses.assign(bsize, 0.0);
      const std::uint64_t step_seed = derive_seed(derive_seed(config.seed, 1), step);
      auto work = [&](std::size_t w, std::size_t lo, std::size_t hi) {
        Rng rng(derive_seed(step_seed, w));
        NegativeSet neg;
        for (std::size_t k = lo; k < hi; ++k) {
          const Pair& p = batch_pairs[k];
          if (cached) {
            const CdfSampler& cdf = cached->at(p.context);
            neg.targets.resize(n_neg);
            for (auto& t : neg.targets) t = cdf.sample(rng);
          } else {
            try {
              neg = sampler->draw(params, p.context, n_neg, rng);
            } catch (const NumericalError& e) {
              throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step));
            }
          }
          LossGrad lg;
          switch (config.method) {
            case Method::SS:
              lg = sampled_softmax_loss_grad(params, p.context, p.target, ss_proposal, neg);
              break;
            case Method::BCE:
              lg = bce_loss_grad(params, p.context, p.target, neg);
              break;
            default:
              lg = relaxed_softmax_loss_grad(params, p.context, p.target, neg,
                                             config.include_positive);
              break;
          }
          if (!std::isfinite(lg.loss) || !lg.all_finite()) {
            throw NumericalError("non-finite loss or gradient at step " + std::to_string(step) +
                                 ", pair (" + std::to_string(p.context) + ", " +
                                 std::to_string(p.target) + "); " + score_range(params, p.context));
          }
          pair_losses[k] = lg.loss;
          buffers[w].add(lg, p.context);
        }
      };
      if (n_workers == 1) {
        work(0, 0, bsize);
      } else {
        const std::size_t chunk = (bsize + n_workers - 1) / n_workers;
        std::vector<std::exception_ptr> errors(n_workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) {
          const std::size_t lo = std::min(bsize, w * chunk);
          const std::size_t hi = std::min(bsize, lo + chunk);
          pool.emplace_back([&, w, lo, hi] {
            try {
              work(w, lo, hi);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
        for (std::size_t w = 1; w < n_workers; ++w) acc.merge_from(buffers[w]);
      }
      for (double l : pair_losses) batch_loss += l;
    }

    double lr = config.learning_rate;
    if (config.lr_schedule == LrSchedule::linear) {
      const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
      lr *= std::max(config.min_lr_fraction, frac);
    }
    opt.apply(params, acc, lr, 1.0 / static_cast<double>(bsize), step);
    check_rows_finite(params, acc, step);
    acc.clear();

    const double mean_loss = batch_loss / static_cast<double>(bsize);
    res.record.loss_trace.push_back(mean_loss);
    interval_loss += mean_loss;
    ++interval_steps;
    if (on_step) on_step(step, mean_loss);
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < total_steps) {
      snapshot(step + 1);
    }
  }
  snapshot(total_steps);
  res.record.steps = total_steps;
  res.record.wall_time_s = elapsed();
  return res;
}

void write_run_outputs(RunRecord& record, const ModelParams& params, const Vocab& vocab,
                       const std::filesystem::path& dir, CheckpointDtype dtype) {
  std::filesystem::create_directories(dir);
  const auto ckpt = dir / (record.config_hash + ".ckpt");
  save_checkpoint(params, vocab, ckpt, dtype);
  record.checkpoint_path = ckpt.string();
  std::ofstream out(dir / (record.config_hash + ".json"), std::ios::trunc);
  if (!out) throw Error("cannot write run record in " + dir.string());
  out << record.to_json().dump(2) << '\n';
}

}  // namespace rsoft
