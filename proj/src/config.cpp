#include "rsoft/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "rsoft/errors.hpp"

namespace rsoft {

std::string to_string(Method m) {
  switch (m) {
    case Method::MLE: return "MLE";
    case Method::SS: return "SS";
    case Method::US: return "US";
    case Method::PS: return "PS";
    case Method::UBS: return "UBS";
    case Method::PBS: return "PBS";
    case Method::BCE: return "BCE";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::MLE, Method::SS, Method::US, Method::PS, Method::UBS, Method::PBS,
                   Method::BCE}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "' (expected MLE, SS, US, PS, UBS, PBS or BCE)");
}

bool is_sampled(Method m) { return m != Method::MLE; }

bool is_relaxed_softmax(Method m) {
  return m == Method::US || m == Method::PS || m == Method::UBS || m == Method::PBS;
}

std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::sgd: return "sgd";
    case Optimizer::adagrad: return "adagrad";
    case Optimizer::adam: return "adam";
  }
  return "?";
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adagrad") return Optimizer::adagrad;
  if (s == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

std::size_t TrainConfig::resolved_negatives() const {
  if (n_negatives > 0) return n_negatives;
  return method == Method::SS ? 50 : 5;
}

SamplerSpec TrainConfig::sampler_spec() const {
  SamplerSpec s;
  s.temperature = temperature;
  s.popularity_exponent = popularity_exponent;
  switch (method) {
    case Method::MLE:
    case Method::US:
      s.kind = SamplerKind::uniform;
      break;
    case Method::SS:
    case Method::PS:
    case Method::BCE:
      s.kind = SamplerKind::popularity;
      break;
    case Method::UBS:
      s.kind = SamplerKind::boltzmann;
      s.degeneracy = DegeneracyKind::uniform;
      break;
    case Method::PBS:
      s.kind = SamplerKind::boltzmann;
      s.degeneracy = DegeneracyKind::popularity;
      break;
  }
  if (!degeneracy.empty() && s.kind == SamplerKind::boltzmann) {
    s.degeneracy = parse_degeneracy_kind(degeneracy);
  }
  return s;
}

double TrainConfig::resolved_init_scale() const {
  return init_scale > 0.0 ? init_scale : default_init_scale(dim);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (epochs == 0 && max_steps == 0) throw ConfigError("need epochs >= 1 or max_steps >= 1");
  if (dim == 0) throw ConfigError("dim must be >= 1");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(min_lr_fraction >= 0.0 && min_lr_fraction <= 1.0)) {
    throw ConfigError("min_lr_fraction must lie in [0, 1]");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(optimizer_eps > 0.0)) throw ConfigError("optimizer_eps must be > 0");
  if (!std::isfinite(init_scale) || init_scale < 0.0) throw ConfigError("init_scale must be >= 0");
  if (!degeneracy.empty()) {
    parse_degeneracy_kind(degeneracy);
    if (method != Method::UBS && method != Method::PBS) {
      throw ConfigError("degeneracy override only applies to UBS and PBS");
    }
  }
  sampler_spec().validate();
  if (eval_split != "valid" && eval_split != "test" && eval_split != "none") {
    throw ConfigError("eval_split must be valid, test or none");
  }
  if (mpr_negatives == 0) throw ConfigError("mpr_negatives must be >= 1");
  for (auto k : prec_ks) {
    if (k == 0) throw ConfigError("prec_ks entries must be >= 1");
  }
  if (checkpoint_dtype != "f32" && checkpoint_dtype != "f64") {
    throw ConfigError("checkpoint_dtype must be f32 or f64");
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["method"] = to_string(method);
  j["n_negatives"] = n_negatives;
  j["temperature"] = std::isinf(temperature) ? nlohmann::json("inf") : nlohmann::json(temperature);
  j["degeneracy"] = degeneracy;
  j["popularity_exponent"] = popularity_exponent;
  j["include_positive"] = include_positive;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["max_steps"] = max_steps;
  j["shuffle"] = shuffle;
  j["optimizer"] = to_string(optimizer);
  j["learning_rate"] = learning_rate;
  j["lr_schedule"] = lr_schedule == LrSchedule::linear ? "linear" : "constant";
  j["min_lr_fraction"] = min_lr_fraction;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["optimizer_eps"] = optimizer_eps;
  j["dim"] = dim;
  j["init_scale"] = init_scale;
  j["seed"] = seed;
  j["threads"] = threads;
  j["boltzmann_cache"] = boltzmann_cache == BoltzmannCache::batch ? "batch" : "none";
  j["eval_every"] = eval_every;
  j["eval_split"] = eval_split;
  j["mpr_negatives"] = mpr_negatives;
  j["prec_ks"] = prec_ks;
  j["eval_seed"] = eval_seed;
  j["data"] = data;
  j["ground_truth"] = ground_truth;
  j["output_dir"] = output_dir;
  j["checkpoint_dtype"] = checkpoint_dtype;
  return j;
}

namespace {

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

std::size_t get_count(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const nlohmann::json& v, const std::string& key) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "method") c.method = parse_method(get_as<std::string>(v, key));
    else if (key == "n_negatives") c.n_negatives = get_count(v, key);
    else if (key == "temperature") c.temperature = get_real(v, key);
    else if (key == "degeneracy") c.degeneracy = get_as<std::string>(v, key);
    else if (key == "popularity_exponent") c.popularity_exponent = get_real(v, key);
    else if (key == "include_positive") c.include_positive = get_as<bool>(v, key);
    else if (key == "batch_size") c.batch_size = get_count(v, key);
    else if (key == "epochs") c.epochs = get_count(v, key);
    else if (key == "max_steps") c.max_steps = get_count(v, key);
    else if (key == "shuffle") c.shuffle = get_as<bool>(v, key);
    else if (key == "optimizer") c.optimizer = parse_optimizer(get_as<std::string>(v, key));
    else if (key == "learning_rate") c.learning_rate = get_real(v, key);
    else if (key == "lr_schedule") {
      const auto s = get_as<std::string>(v, key);
      if (s == "linear") c.lr_schedule = LrSchedule::linear;
      else if (s == "constant") c.lr_schedule = LrSchedule::constant;
      else throw ConfigError("lr_schedule must be linear or constant");
    }
    else if (key == "min_lr_fraction") c.min_lr_fraction = get_real(v, key);
    else if (key == "adam_beta1") c.adam_beta1 = get_real(v, key);
    else if (key == "adam_beta2") c.adam_beta2 = get_real(v, key);
    else if (key == "optimizer_eps") c.optimizer_eps = get_real(v, key);
    else if (key == "dim") c.dim = get_count(v, key);
    else if (key == "init_scale") c.init_scale = get_real(v, key);
    else if (key == "seed") c.seed = get_count(v, key);
    else if (key == "threads") c.threads = get_count(v, key);
    else if (key == "boltzmann_cache") {
      const auto s = get_as<std::string>(v, key);
      if (s == "none") c.boltzmann_cache = BoltzmannCache::none;
      else if (s == "batch") c.boltzmann_cache = BoltzmannCache::batch;
      else throw ConfigError("boltzmann_cache must be none or batch");
    }
    else if (key == "eval_every") c.eval_every = get_count(v, key);
    else if (key == "eval_split") c.eval_split = get_as<std::string>(v, key);
    else if (key == "mpr_negatives") c.mpr_negatives = get_count(v, key);
    else if (key == "prec_ks") {
      if (!v.is_array()) throw ConfigError("prec_ks must be an array");
      c.prec_ks.clear();
      for (const auto& e : v) c.prec_ks.push_back(get_count(e, key));
    }
    else if (key == "eval_seed") c.eval_seed = get_count(v, key);
    else if (key == "data") c.data = get_as<std::string>(v, key);
    else if (key == "ground_truth") c.ground_truth = get_as<std::string>(v, key);
    else if (key == "output_dir") c.output_dir = get_as<std::string>(v, key);
    else if (key == "checkpoint_dtype") c.checkpoint_dtype = get_as<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string TrainConfig::hash() const {
  auto j = to_json();
  // Where outputs go does not change what is computed.
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

nlohmann::json parse_setting_value(const std::string& text) {
  if (text.empty()) return "";
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

void apply_setting(nlohmann::json& target, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  target[trim(assignment.substr(0, eq))] = parse_setting_value(trim(assignment.substr(eq + 1)));
}

nlohmann::json load_settings_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + path.string() + ": " + e.what());
    }
  }
  nlohmann::json out = nlohmann::json::object();
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    apply_setting(out, line.substr(b));
  }
  return out;
}

}  // namespace rsoft
