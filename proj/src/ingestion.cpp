#include "rsoft/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "rsoft/errors.hpp"
#include "rsoft/random.hpp"

namespace rsoft {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<Pair> PairDataset::subset(Split which) const {
  std::vector<Pair> out;
  out.reserve(count(which));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (split[k] == which) out.push_back(pairs[k]);
  }
  return out;
}

std::size_t PairDataset::count(Split which) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), which));
}

void PairDataset::validate(const Vocab& vocab) const {
  if (split.size() != pairs.size()) throw FormatError("pair dataset: split vector length mismatch");
  for (const auto& p : pairs) {
    if (p.context >= vocab.card_i() || p.target >= vocab.card_j()) {
      throw FormatError("pair dataset: id out of vocabulary range");
    }
  }
}

std::vector<std::string> read_tokens(const std::filesystem::path& path, std::size_t max_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::string text;
  if (max_bytes > 0) {
    text.resize(max_bytes);
    in.read(text.data(), static_cast<std::streamsize>(max_bytes));
    text.resize(static_cast<std::size_t>(in.gcount()));
    // Drop a token cut in half by the byte limit.
    if (text.size() == max_bytes && in.peek() != std::char_traits<char>::eof() &&
        !std::isspace(static_cast<unsigned char>(in.peek()))) {
      const auto last_space = text.find_last_of(" \t\r\n");
      text.resize(last_space == std::string::npos ? 0 : last_space);
    }
  } else {
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  std::vector<std::string> tokens;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) tokens.push_back(std::move(tok));
  return tokens;
}

namespace {

// Top-`limit` labels by count, ties broken lexicographically.
std::vector<std::string> top_labels(const std::unordered_map<std::string, std::uint64_t>& counts,
                                    std::size_t limit) {
  std::vector<std::pair<std::string, std::uint64_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (items.size() > limit) items.resize(limit);
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [label, _] : items) out.push_back(label);
  return out;
}

void window_pairs(std::span<const std::uint32_t> seq, std::size_t window, bool bidirectional,
                  std::vector<Pair>& out) {
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (std::size_t k = 1; k <= window && t + k < seq.size(); ++k) {
      out.push_back({seq[t], seq[t + k]});
      if (bidirectional) out.push_back({seq[t + k], seq[t]});
    }
  }
}

Vocab shared_vocab(std::vector<std::string> labels) {
  Vocab v;
  v.context_labels = labels;
  v.target_labels = std::move(labels);
  v.context_counts.assign(v.context_labels.size(), 0);
  v.target_counts.assign(v.target_labels.size(), 0);
  return v;
}

}  // namespace

IngestResult pairs_from_text(std::span<const std::string> tokens, std::size_t window,
                             std::size_t vocab_size, bool bidirectional) {
  if (tokens.empty()) throw DataError("pairs_from_text: empty token stream");
  if (window == 0) throw ConfigError("pairs_from_text: window must be >= 1");
  if (vocab_size == 0) throw ConfigError("pairs_from_text: vocab_size must be >= 1");

  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& t : tokens) ++freq[t];
  IngestResult r;
  r.vocab = shared_vocab(top_labels(freq, vocab_size));
  const auto index = r.vocab.context_index();

  std::vector<std::uint32_t> seq;
  seq.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto it = index.find(t);
    if (it != index.end()) seq.push_back(it->second);
  }
  window_pairs(seq, window, bidirectional, r.data.pairs);
  r.data.split.assign(r.data.pairs.size(), Split::train);
  r.data.source_meta = "text: " + std::to_string(tokens.size()) + " tokens, window " +
                       std::to_string(window) + (bidirectional ? " bidirectional" : " forward") +
                       ", vocab " + std::to_string(r.vocab.card_i());
  assign_train_counts(r.vocab, r.data);
  return r;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur.push_back('"');
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_number(const std::string& s, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
}

}  // namespace

std::vector<RatingEvent> load_ratings_csv(const std::filesystem::path& path,
                                          const RatingColumns& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("ratings: missing header line");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("ratings header: no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto cu = *column(columns.user);
  const auto ci = *column(columns.item);
  const auto cr = *column(columns.rating);
  const auto ct = column(columns.timestamp);

  std::vector<RatingEvent> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw ParseError("ratings line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()));
    }
    RatingEvent e;
    e.user = f[cu];
    e.item = f[ci];
    e.rating = parse_number(f[cr], line_no, "rating");
    if (ct) e.timestamp = parse_number(f[*ct], line_no, "timestamp");
    events.push_back(std::move(e));
  }
  return events;
}

IngestResult pairs_from_ratings(std::span<const RatingEvent> events, double threshold,
                                std::size_t max_items, std::size_t window) {
  if (window == 0) throw ConfigError("pairs_from_ratings: window must be >= 1");
  if (max_items == 0) throw ConfigError("pairs_from_ratings: max_items must be >= 1");

  // Users in order of first appearance, each with its retained events.
  std::unordered_map<std::string, std::size_t> user_slot;
  std::vector<std::vector<const RatingEvent*>> per_user;
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& e : events) {
    if (!(e.rating >= threshold)) continue;
    auto [it, inserted] = user_slot.emplace(e.user, per_user.size());
    if (inserted) per_user.emplace_back();
    per_user[it->second].push_back(&e);
    ++freq[e.item];
  }

  IngestResult r;
  r.vocab = shared_vocab(top_labels(freq, max_items));
  const auto index = r.vocab.context_index();
  std::vector<std::uint32_t> seq;
  for (auto& evs : per_user) {
    std::stable_sort(evs.begin(), evs.end(), [](const RatingEvent* a, const RatingEvent* b) {
      if (a->timestamp && b->timestamp) return *a->timestamp < *b->timestamp;
      return false;
    });
    seq.clear();
    for (const auto* e : evs) {
      const auto it = index.find(e->item);
      if (it != index.end()) seq.push_back(it->second);
    }
    window_pairs(seq, window, false, r.data.pairs);
  }
  r.data.split.assign(r.data.pairs.size(), Split::train);
  r.data.source_meta = "ratings: " + std::to_string(events.size()) + " events, threshold " +
                       std::to_string(threshold) + ", window " + std::to_string(window) +
                       ", items " + std::to_string(r.vocab.card_i());
  assign_train_counts(r.vocab, r.data);
  return r;
}

std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& fractions) {
  const double f[3] = {fractions.train, fractions.valid, fractions.test};
  for (double v : f) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("split fractions must be >= 0");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  std::size_t classes = 0;
  for (double v : f) classes += v > 0.0 ? 1 : 0;
  if (n < classes) {
    throw DataError("cannot split " + std::to_string(n) + " pairs into " +
                    std::to_string(classes) + " classes");
  }
  std::vector<std::size_t> sizes(3);
  double rem[3];
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * f[k];
    sizes[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(sizes[k]);
    assigned += sizes[k];
  }
  while (assigned < n) {
    int best = -1;
    for (int k = 0; k < 3; ++k) {
      if (f[k] > 0.0 && (best < 0 || rem[k] > rem[best])) best = k;
    }
    ++sizes[best];
    rem[best] = -1.0;
    ++assigned;
  }
  // Every class with a positive fraction keeps at least one pair, taken from
  // the currently largest class.
  for (int k = 0; k < 3; ++k) {
    if (f[k] > 0.0 && sizes[k] == 0) {
      const auto donor = std::max_element(sizes.begin(), sizes.end()) - sizes.begin();
      --sizes[donor];
      ++sizes[k];
    }
  }
  return sizes;
}

PairDataset split_dataset(PairDataset data, const SplitFractions& fractions,
                          std::uint64_t seed) {
  const std::size_t n = data.pairs.size();
  const auto sizes = split_sizes(n, fractions);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t k = n; k > 1; --k) {
    std::swap(order[k - 1], order[uniform_index(rng, k)]);
  }
  data.split.assign(n, Split::train);
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < sizes[0]             ? Split::train
                    : k < sizes[0] + sizes[1] ? Split::valid
                                              : Split::test;
    data.split[order[k]] = s;
  }
  return data;
}

void assign_train_counts(Vocab& vocab, const PairDataset& data) {
  vocab.context_counts.assign(vocab.card_i(), 0);
  vocab.target_counts.assign(vocab.card_j(), 0);
  for (std::size_t k = 0; k < data.pairs.size(); ++k) {
    if (data.split[k] != Split::train) continue;
    ++vocab.context_counts.at(data.pairs[k].context);
    ++vocab.target_counts.at(data.pairs[k].target);
  }
}

namespace {

std::vector<std::string> fields_of(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string f;
  while (ss >> f) out.push_back(std::move(f));
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::vector<SimilarityTriple> load_similarity_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open similarity file " + path.string());
  std::vector<SimilarityTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line) || line.front() == '#') continue;
    const auto f = fields_of(line);
    if (f.size() != 3) {
      throw ParseError("similarity line " + std::to_string(line_no) + ": expected 3 fields, got " +
                       std::to_string(f.size()));
    }
    out.push_back({f[0], f[1], parse_number(f[2], line_no, "similarity score")});
  }
  return out;
}

std::vector<AnalogyQuad> load_analogy_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open analogy file " + path.string());
  std::vector<AnalogyQuad> out;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto f = fields_of(line);
    if (f.front().front() == ':') {
      section = f.front().size() > 1 ? f.front().substr(1) : (f.size() > 1 ? f[1] : "");
      continue;
    }
    if (f.size() != 4) {
      throw ParseError("analogy line " + std::to_string(line_no) + ": expected 4 words, got " +
                       std::to_string(f.size()));
    }
    out.push_back({f[0], f[1], f[2], f[3], section, section.rfind("gram", 0) == 0});
  }
  return out;
}

void save_pair_cache(const std::filesystem::path& base, const Vocab& vocab,
                     const PairDataset& data) {
  data.validate(vocab);
  auto bin_path = base;
  bin_path += ".bin";
  auto json_path = base;
  json_path += ".json";

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write " + bin_path.string());
  std::vector<std::uint32_t> buf;
  buf.reserve(data.pairs.size() * 2);
  for (const auto& p : data.pairs) {
    buf.push_back(p.context);
    buf.push_back(p.target);
  }
  bin.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));

  nlohmann::json side;
  side["n_pairs"] = data.pairs.size();
  side["context_labels"] = vocab.context_labels;
  side["target_labels"] = vocab.target_labels;
  side["context_counts"] = vocab.context_counts;
  side["target_counts"] = vocab.target_counts;
  std::string split(data.split.size(), '0');
  for (std::size_t k = 0; k < split.size(); ++k) {
    split[k] = static_cast<char>('0' + static_cast<int>(data.split[k]));
  }
  side["split"] = split;
  side["split_legend"] = "0=train,1=valid,2=test";
  side["source_meta"] = data.source_meta;
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw Error("cannot write " + json_path.string());
  js << side.dump() << '\n';
}

IngestResult load_pair_cache(const std::filesystem::path& base) {
  auto bin_path = base;
  bin_path += ".bin";
  auto json_path = base;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw DataError("cannot open pair cache sidecar " + json_path.string());
  IngestResult r;
  std::string split;
  std::size_t n = 0;
  try {
    const auto side = nlohmann::json::parse(js);
    n = side.at("n_pairs").get<std::size_t>();
    r.vocab.context_labels = side.at("context_labels").get<std::vector<std::string>>();
    r.vocab.target_labels = side.at("target_labels").get<std::vector<std::string>>();
    r.vocab.context_counts = side.at("context_counts").get<std::vector<std::uint64_t>>();
    r.vocab.target_counts = side.at("target_counts").get<std::vector<std::uint64_t>>();
    split = side.at("split").get<std::string>();
    r.data.source_meta = side.value("source_meta", "");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("pair cache sidecar: ") + e.what());
  }
  if (split.size() != n) throw FormatError("pair cache: split length does not match n_pairs");

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot open pair cache payload " + bin_path.string());
  std::vector<std::uint32_t> buf(2 * n);
  bin.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  if (static_cast<std::size_t>(bin.gcount()) != buf.size() * sizeof(std::uint32_t) ||
      bin.peek() != std::char_traits<char>::eof()) {
    throw FormatError("pair cache payload: size does not match n_pairs");
  }
  r.data.pairs.resize(n);
  r.data.split.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    r.data.pairs[k] = {buf[2 * k], buf[2 * k + 1]};
    if (split[k] < '0' || split[k] > '2') throw ParseError("pair cache: bad split code");
    r.data.split[k] = static_cast<Split>(split[k] - '0');
  }
  r.vocab.validate();
  r.data.validate(r.vocab);
  return r;
}

}  // namespace rsoft
