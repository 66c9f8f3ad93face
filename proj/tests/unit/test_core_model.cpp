#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rsoft/core_model.hpp"
#include "rsoft/errors.hpp"
#include "test_support.hpp"

using namespace rsoft;
namespace fs = std::filesystem;

namespace {

ModelParams params_from(std::vector<std::vector<double>> w, std::vector<std::vector<double>> o) {
  ModelParams p{Matrix(w.size(), w[0].size()), Matrix(o.size(), o[0].size())};
  for (std::size_t r = 0; r < w.size(); ++r) std::copy(w[r].begin(), w[r].end(), p.W.row(r).begin());
  for (std::size_t r = 0; r < o.size(); ++r) std::copy(o[r].begin(), o[r].end(), p.O.row(r).begin());
  return p;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "rsoft_unit";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("score is the dot product of W_i and O_j") {
  CHECK(score(params_from({{1, 2}}, {{3, 4}}), 0, 0) == 11.0);
  CHECK(score(params_from({{0, 0}}, {{3, 4}}), 0, 0) == 0.0);
  CHECK(score(params_from({{1, 0}}, {{0, 1}}), 0, 0) == 0.0);
}

TEST_CASE("score_all_targets") {
  const auto p = params_from({{5, 7}}, {{1, 0}, {0, 1}});
  CHECK(score_all_targets(p, 0) == std::vector<double>{5.0, 7.0});
  const auto z = params_from({{0, 0}}, {{1, 2}, {3, 4}, {5, 6}});
  CHECK(score_all_targets(z, 0) == std::vector<double>{0.0, 0.0, 0.0});

  const auto r = testing::random_params(4, 3, 7, 11);
  for (ContextId i = 0; i < 4; ++i) {
    const auto all = score_all_targets(r, i);
    REQUIRE(all.size() == 3);
    for (TargetId j = 0; j < 3; ++j) CHECK(all[j] == score(r, i, j));
  }
}

TEST_CASE("score is linear in W_i") {
  auto p = testing::random_params(3, 5, 8, 3);
  const double before = score(p, 1, 2);
  for (auto& x : p.W.row(1)) x *= 3.5;
  CHECK(score(p, 1, 2) == doctest::Approx(3.5 * before).epsilon(1e-12));
}

TEST_CASE("init_params") {
  const auto a = init_params(6, 9, 4, 42, 0.01);
  const auto b = init_params(6, 9, 4, 42, 0.01);
  CHECK(a == b);
  for (const Matrix* m : {&a.W, &a.O}) {
    for (double x : m->data()) {
      CHECK(x >= -0.01);
      CHECK(x <= 0.01);
    }
  }
  const auto c = init_params(6, 9, 4, 43, 0.01);
  CHECK_FALSE(a == c);
  CHECK(a.card_i() == 6);
  CHECK(a.card_j() == 9);
  CHECK(a.dim() == 4);
}

TEST_CASE("checkpoint round trip") {
  const auto p = testing::random_params(4, 6, 3, 5);
  const auto v = testing::make_vocab(4, 6);
  const auto path = temp_path("rt.ckpt");

  SUBCASE("f64 is lossless and idempotent") {
    save_checkpoint(p, v, path, CheckpointDtype::f64);
    const auto c = load_checkpoint(path);
    CHECK(c.params == p);
    CHECK(c.vocab.context_labels == v.context_labels);
    CHECK(c.vocab.target_labels == v.target_labels);
    const auto path2 = temp_path("rt2.ckpt");
    save_checkpoint(c.params, c.vocab, path2, CheckpointDtype::f64);
    CHECK(load_checkpoint(path2).params == c.params);
  }
  SUBCASE("f32 rounds to single precision") {
    save_checkpoint(p, v, path, CheckpointDtype::f32);
    const auto c = load_checkpoint(path);
    for (std::size_t k = 0; k < p.W.data().size(); ++k) {
      CHECK(c.params.W.data()[k] == static_cast<double>(static_cast<float>(p.W.data()[k])));
    }
    // Saving the rounded values again reproduces them exactly.
    save_checkpoint(c.params, c.vocab, path, CheckpointDtype::f32);
    CHECK(load_checkpoint(path).params == c.params);
  }
}

TEST_CASE("truncated checkpoint fails closed") {
  const auto p = testing::random_params(4, 6, 3, 5);
  const auto v = testing::make_vocab(4, 6);
  const auto path = temp_path("trunc.ckpt");
  save_checkpoint(p, v, path, CheckpointDtype::f64);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
}

TEST_CASE("checkpoint header dimension mismatch is a format error") {
  const auto p = testing::random_params(2, 2, 3, 5);
  const auto v = testing::make_vocab(2, 2);
  const auto path = temp_path("dim.ckpt");
  save_checkpoint(p, v, path, CheckpointDtype::f64);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto pos = bytes.find("\"d\":3");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 5, "\"d\":2");
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("vocab validation") {
  auto v = testing::make_vocab(2, 3);
  CHECK_NOTHROW(v.validate());
  v.target_labels[1] = v.target_labels[0];
  CHECK_THROWS_AS(v.validate(), FormatError);
  auto w = testing::make_vocab(2, 3);
  w.target_counts[0] += 1;
  CHECK_THROWS_AS(w.validate(), FormatError);
}
