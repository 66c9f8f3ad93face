#include "rsoft/core_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "rsoft/errors.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native little-endian floats");

void Vocab::validate() const {
  if (context_labels.empty() || target_labels.empty()) {
    throw FormatError("vocab: both context and target sets must be non-empty");
  }
  auto check_unique = [](const std::vector<std::string>& labels, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
      if (!seen.insert(l).second) {
        throw FormatError(std::string("vocab: duplicate ") + what + " label '" + l + "'");
      }
    }
  };
  check_unique(context_labels, "context");
  check_unique(target_labels, "target");
  if (context_counts.size() != card_i() || target_counts.size() != card_j()) {
    throw FormatError("vocab: count vectors do not match label cardinalities");
  }
  const auto ci = std::accumulate(context_counts.begin(), context_counts.end(), std::uint64_t{0});
  const auto cj = std::accumulate(target_counts.begin(), target_counts.end(), std::uint64_t{0});
  if (ci != cj) {
    throw FormatError("vocab: context and target counts sum to different pair totals");
  }
}

std::unordered_map<std::string, ContextId> Vocab::context_index() const {
  std::unordered_map<std::string, ContextId> index;
  index.reserve(context_labels.size());
  for (std::size_t k = 0; k < context_labels.size(); ++k) {
    index.emplace(context_labels[k], static_cast<ContextId>(k));
  }
  return index;
}

std::unordered_map<std::string, TargetId> Vocab::target_index() const {
  std::unordered_map<std::string, TargetId> index;
  index.reserve(target_labels.size());
  for (std::size_t k = 0; k < target_labels.size(); ++k) {
    index.emplace(target_labels[k], static_cast<TargetId>(k));
  }
  return index;
}

bool ModelParams::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(W.data()) && finite(O.data());
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc[0] += a[k] * b[k];
    acc[1] += a[k + 1] * b[k + 1];
    acc[2] += a[k + 2] * b[k + 2];
    acc[3] += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) acc[0] += a[k] * b[k];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

Score score(const ModelParams& params, ContextId i, TargetId j) {
  if (i >= params.card_i()) {
    throw IndexError("context id " + std::to_string(i) + " out of range [0, " +
                     std::to_string(params.card_i()) + ")");
  }
  if (j >= params.card_j()) {
    throw IndexError("target id " + std::to_string(j) + " out of range [0, " +
                     std::to_string(params.card_j()) + ")");
  }
  return dot(params.W.row(i), params.O.row(j));
}

void score_all_targets(const ModelParams& params, ContextId i, std::span<Score> out) {
  if (i >= params.card_i()) {
    throw IndexError("context id " + std::to_string(i) + " out of range [0, " +
                     std::to_string(params.card_i()) + ")");
  }
  if (out.size() != params.card_j()) {
    throw IndexError("score buffer size does not match card(J)");
  }
  const auto w = params.W.row(i);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = dot(w, params.O.row(j));
}

std::vector<Score> score_all_targets(const ModelParams& params, ContextId i) {
  std::vector<Score> out(params.card_j());
  score_all_targets(params, i, out);
  return out;
}

ModelParams init_params(std::size_t card_i, std::size_t card_j, std::size_t d,
                        std::uint64_t seed, double scale) {
  if (card_i == 0 || card_j == 0 || d == 0) {
    throw ConfigError("init_params: card(I), card(J) and d must all be positive");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("init_params: scale must be a positive finite number");
  }
  ModelParams p{Matrix(card_i, d), Matrix(card_j, d)};
  Rng rng(seed);
  for (double& x : p.W.data()) x = scale * (2.0 * uniform01(rng) - 1.0);
  for (double& x : p.O.data()) x = scale * (2.0 * uniform01(rng) - 1.0);
  return p;
}

namespace {

std::size_t element_size(CheckpointDtype dtype) {
  return dtype == CheckpointDtype::f32 ? sizeof(float) : sizeof(double);
}

void write_payload(std::ostream& out, const Matrix& m, CheckpointDtype dtype) {
  if (dtype == CheckpointDtype::f32) {
    std::vector<float> buf(m.data().size());
    std::transform(m.data().begin(), m.data().end(), buf.begin(),
                   [](double x) { return static_cast<float>(x); });
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  }
}

void read_payload(const std::string& bytes, std::size_t offset, Matrix& m,
                  CheckpointDtype dtype) {
  auto& data = m.data();
  if (dtype == CheckpointDtype::f32) {
    for (std::size_t k = 0; k < data.size(); ++k) {
      float f;
      std::memcpy(&f, bytes.data() + offset + k * sizeof(float), sizeof(float));
      data[k] = static_cast<double>(f);
    }
  } else {
    std::memcpy(data.data(), bytes.data() + offset, data.size() * sizeof(double));
  }
}

// Parses exactly `expected` newline-terminated lines filling the whole tail.
// Labels are UTF-8 without control characters other than the separators.
bool plain_text(std::string_view s) {
  std::size_t k = 0;
  while (k < s.size()) {
    const auto c = static_cast<unsigned char>(s[k]);
    if (c < 0x80) {
      if (c < 0x20 && c != '\n' && c != '\t') return false;
      if (c == 0x7f) return false;
      ++k;
      continue;
    }
    const std::size_t len = (c & 0xE0) == 0xC0   ? 2
                            : (c & 0xF0) == 0xE0 ? 3
                            : (c & 0xF8) == 0xF0 ? 4
                                                 : 0;
    if (len == 0 || c == 0xC0 || c == 0xC1 || k + len > s.size()) return false;
    for (std::size_t b = 1; b < len; ++b) {
      if ((static_cast<unsigned char>(s[k + b]) & 0xC0) != 0x80) return false;
    }
    k += len;
  }
  return true;
}

bool parse_label_block(std::string_view tail, std::size_t expected,
                       std::vector<std::string>* out) {
  if (expected == 0) return tail.empty();
  if (tail.empty() || tail.back() != '\n') return false;
  if (!plain_text(tail)) return false;
  const auto lines = static_cast<std::size_t>(std::count(tail.begin(), tail.end(), '\n'));
  if (lines != expected) return false;
  if (out != nullptr) {
    out->clear();
    out->reserve(expected);
    std::size_t start = 0;
    while (start < tail.size()) {
      const std::size_t end = tail.find('\n', start);
      out->emplace_back(tail.substr(start, end - start));
      start = end + 1;
    }
  }
  return true;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const Vocab& vocab,
                     const std::filesystem::path& path, CheckpointDtype dtype) {
  if (params.card_i() != vocab.card_i() || params.card_j() != vocab.card_j()) {
    throw FormatError("save_checkpoint: model rows do not match vocabulary sizes");
  }
  if (params.O.cols() != params.dim()) {
    throw FormatError("save_checkpoint: W and O have different embedding dimensions");
  }
  auto check_labels = [](const std::vector<std::string>& labels) {
    for (const auto& l : labels) {
      if (l.find('\n') != std::string::npos || l.find('\0') != std::string::npos) {
        throw FormatError("save_checkpoint: label contains a newline or NUL byte");
      }
    }
  };
  check_labels(vocab.context_labels);
  check_labels(vocab.target_labels);

  nlohmann::ordered_json header;
  header["card_i"] = params.card_i();
  header["card_j"] = params.card_j();
  header["d"] = params.dim();
  header["dtype"] = dtype == CheckpointDtype::f32 ? "f32" : "f64";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out << header.dump() << '\n';
  write_payload(out, params.W, dtype);
  write_payload(out, params.O, dtype);
  for (const auto& l : vocab.context_labels) out << l << '\n';
  for (const auto& l : vocab.target_labels) out << l << '\n';
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t header_end = bytes.find('\n');
  if (header_end == std::string::npos) {
    throw ParseError("checkpoint header: missing terminating newline");
  }
  std::size_t card_i = 0, card_j = 0, d = 0;
  CheckpointDtype dtype = CheckpointDtype::f32;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(0, header_end));
    card_i = header.at("card_i").get<std::size_t>();
    card_j = header.at("card_j").get<std::size_t>();
    d = header.at("d").get<std::size_t>();
    const auto dt = header.at("dtype").get<std::string>();
    if (dt == "f32") {
      dtype = CheckpointDtype::f32;
    } else if (dt == "f64") {
      dtype = CheckpointDtype::f64;
    } else {
      throw ParseError("checkpoint header: unsupported dtype '" + dt + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (card_i == 0 || card_j == 0 || d == 0) {
    throw FormatError("checkpoint header: zero dimension");
  }

  const std::size_t body = header_end + 1;
  const std::size_t rows = card_i + card_j;
  const std::size_t esize = element_size(dtype);
  const std::size_t payload = rows * d * esize;
  const std::size_t available = bytes.size() - body;

  std::vector<std::string> labels;
  const bool consistent =
      payload <= available &&
      parse_label_block(std::string_view(bytes).substr(body + payload), rows, &labels);
  if (!consistent) {
    // Distinguish a header/payload dimension mismatch from plain truncation by
    // checking whether some other embedding dimension explains the file.
    for (std::size_t alt = 1; alt * rows * esize <= available; ++alt) {
      if (alt == d) continue;
      if (parse_label_block(std::string_view(bytes).substr(body + alt * rows * esize), rows,
                            nullptr)) {
        throw FormatError("checkpoint payload: header declares d=" + std::to_string(d) +
                          " but the payload holds d=" + std::to_string(alt));
      }
    }
    if (payload > available) {
      throw ParseError("checkpoint payload: truncated (" + std::to_string(available) +
                       " bytes, expected at least " + std::to_string(payload) + ")");
    }
    throw ParseError("checkpoint labels: expected " + std::to_string(rows) +
                     " newline-terminated labels after the payload");
  }

  Checkpoint ck;
  ck.params.W = Matrix(card_i, d);
  ck.params.O = Matrix(card_j, d);
  read_payload(bytes, body, ck.params.W, dtype);
  read_payload(bytes, body + card_i * d * esize, ck.params.O, dtype);
  if (!ck.params.all_finite()) throw FormatError("checkpoint payload: non-finite parameter");
  ck.vocab.context_labels.assign(labels.begin(), labels.begin() + static_cast<long>(card_i));
  ck.vocab.target_labels.assign(labels.begin() + static_cast<long>(card_i), labels.end());
  ck.vocab.context_counts.assign(card_i, 0);
  ck.vocab.target_counts.assign(card_j, 0);
  try {
    ck.vocab.validate();
  } catch (const FormatError& e) {
    throw ParseError(std::string("checkpoint labels: ") + e.what());
  }
  return ck;
}

void export_word2vec_text(const ModelParams& params, const Vocab& vocab,
                          const std::filesystem::path& path) {
  if (params.card_i() != vocab.card_i()) {
    throw FormatError("export: W rows do not match the context vocabulary");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << params.card_i() << ' ' << params.dim() << '\n';
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t i = 0; i < params.card_i(); ++i) {
    out << vocab.context_labels[i];
    for (double x : params.W.row(i)) out << ' ' << static_cast<float>(x);
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace rsoft
