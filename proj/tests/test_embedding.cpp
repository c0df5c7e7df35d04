#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "neuronscope/embedding.hpp"
#include "neuronscope/errors.hpp"
#include "helpers.hpp"

using namespace neuronscope;
using nstest::TempDir;
using nstest::make_matrix;

TEST_CASE("EMB1 write/read echoes the payload") {
  TempDir tmp;
  const auto m = make_matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const auto path = tmp.file("a.emb");
  write_embeddings(m, path);
  const auto r = read_embeddings(path);
  CHECK(r.count == 2);
  CHECK(r.dim == 3);
  CHECK(r.values == std::vector<float>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("empty EMB1 file keeps its dim") {
  TempDir tmp;
  const auto m = make_matrix(0, 4, {});
  const auto path = tmp.file("empty.emb");
  write_embeddings(m, path);
  const auto r = read_embeddings(path);
  CHECK(r.count == 0);
  CHECK(r.dim == 4);
  // header-only size: 4 magic + 4 version + 8 count + 4 dim + 4 flags
  CHECK(std::filesystem::file_size(path) == 24);
}

TEST_CASE("NaN payload rejected as InvalidValue") {
  TempDir tmp;
  auto m = make_matrix(1, 2, {1.0f, 2.0f});
  const auto path = tmp.file("nan.emb");
  write_embeddings(m, path);
  // Corrupt one float in place.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(24);
  const float bad = std::nanf("");
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  CHECK_THROWS_AS(read_embeddings(path), InvalidValue);
}

TEST_CASE("bad magic is a FormatError") {
  TempDir tmp;
  const auto path = tmp.file("bad.bin");
  std::ofstream f(path, std::ios::binary);
  f.write("XYZ1\x01\x00\x00\x00garbage\xff\xfe", 18);
  f.close();
  CHECK_THROWS_AS(read_embeddings(path), FormatError);
}

TEST_CASE("header/payload disagreement is a CorruptFile") {
  TempDir tmp;
  const auto path = tmp.file("short.emb");
  write_embeddings(make_matrix(2, 3, {1, 2, 3, 4, 5, 6}), path);
  std::filesystem::resize_file(path, 24 + 4 * 4);  // drop two floats
  CHECK_THROWS_AS(read_embeddings(path), CorruptFile);
}

TEST_CASE("missing file is an IoError naming the path") {
  try {
    read_embeddings("/nonexistent/nowhere.emb");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("nowhere.emb") != std::string::npos);
  }
}

TEST_CASE("ids round-trip through the sidecar") {
  TempDir tmp;
  const auto m = make_matrix(2, 2, {1, 2, 3, 4}, {"cat", "dog"});
  const auto path = tmp.file("ids.emb");
  write_embeddings(m, path);
  CHECK(std::filesystem::exists(tmp.file("ids.emb.ids.json")));
  const auto r = read_embeddings(path);
  CHECK(r.item_ids == std::vector<std::string>{"cat", "dog"});
}

TEST_CASE("duplicate ids rejected") {
  auto m = make_matrix(2, 1, {1, 2}, {"same", "same"});
  CHECK_THROWS_AS(m.validate(), InvalidValue);
}

TEST_CASE("large random matrix round-trips bitwise") {
  TempDir tmp;
  const auto m = nstest::random_matrix(10000, 1024, 42);
  const auto path = tmp.file("big.emb");
  write_embeddings(m, path);
  const auto r = read_embeddings(path);
  CHECK(r.count == m.count);
  CHECK(r.dim == m.dim);
  CHECK(std::memcmp(r.values.data(), m.values.data(),
                    m.values.size() * sizeof(float)) == 0);
}

TEST_CASE("CSV import, numeric cells only") {
  TempDir tmp;
  const auto path = tmp.file("plain.csv");
  std::ofstream(path) << "1.5,2.5,3\n4,5,6.25\n";
  const auto m = read_embeddings(path);
  CHECK(m.count == 2);
  CHECK(m.dim == 3);
  CHECK(m.values[0] == doctest::Approx(1.5));
  CHECK(m.values[5] == doctest::Approx(6.25));
  CHECK_FALSE(m.has_ids());
}

TEST_CASE("CSV import with a leading id column") {
  TempDir tmp;
  const auto path = tmp.file("ids.csv");
  std::ofstream(path) << "img_a,1,2\nimg_b,3,4\n";
  const auto m = read_embeddings(path);
  CHECK(m.dim == 2);
  CHECK(m.item_ids == std::vector<std::string>{"img_a", "img_b"});
}

TEST_CASE("ragged CSV is a CorruptFile") {
  TempDir tmp;
  const auto path = tmp.file("ragged.csv");
  std::ofstream(path) << "1,2,3\n4,5\n";
  CHECK_THROWS_AS(read_embeddings(path), CorruptFile);
}

TEST_CASE("make_pairs validates shapes") {
  const auto clean = make_matrix(2, 3, {0, 0, 0, 1, 1, 1});
  const auto noisy = make_matrix(2, 3, {0, 0, 0, 2, 2, 2});
  const auto pair = make_pairs(clean, noisy, 500);
  CHECK(pair.noise_step == 500);
  CHECK(pair.clean.count == 2);

  const auto wrong = make_matrix(3, 3, std::vector<float>(9, 0.0f));
  CHECK_THROWS_AS(make_pairs(clean, wrong, 500), ShapeError);
}

TEST_CASE("identical pair gives a zero delta downstream") {
  const auto clean = make_matrix(1, 2, {3, 4});
  const auto pair = make_pairs(clean, clean, 0);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(pair.clean.values[j] == pair.noisy.values[j]);
  }
}

TEST_CASE("sample_batch from a single row repeats it") {
  const auto m = make_matrix(1, 2, {7, 8});
  const auto b = sample_batch(m, 3, 1);
  CHECK(b.count == 3);
  CHECK(b.values == std::vector<float>{7, 8, 7, 8, 7, 8});
}

TEST_CASE("sample_batch is pure in its seed") {
  const auto m = nstest::random_matrix(16, 4, 5);
  const auto b1 = sample_batch(m, 32, 99);
  const auto b2 = sample_batch(m, 32, 99);
  CHECK(b1.values == b2.values);
  const auto b3 = sample_batch(m, 32, 100);
  CHECK(b1.values != b3.values);
}

TEST_CASE("sample_batch rejects a zero batch") {
  const auto m = make_matrix(1, 1, {1});
  CHECK_THROWS_AS(sample_batch(m, 0, 1), InvalidArgument);
}

TEST_CASE("sample_batch draws uniformly with replacement") {
  // 1e5 draws over 4 rows: each frequency within 25% +/- 2%, plus a
  // chi-square sanity bound.
  EmbeddingMatrix m = make_matrix(4, 1, {0, 1, 2, 3});
  const std::size_t n = 100000;
  const auto b = sample_batch(m, n, 2024);
  std::array<std::size_t, 4> counts{0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    counts[static_cast<std::size_t>(b.values[i])] += 1;
  }
  const double expected = n / 4.0;
  double chi2 = 0.0;
  for (const auto c : counts) {
    const double f = static_cast<double>(c) / n;
    CHECK(f > 0.23);
    CHECK(f < 0.27);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(chi2 < 16.27);  // chi-square_{3, 0.999}
}

TEST_CASE("column_mean averages rows") {
  const auto m = make_matrix(2, 2, {1, 2, 3, 4});
  const auto mean = column_mean(m);
  CHECK(mean[0] == doctest::Approx(2.0));
  CHECK(mean[1] == doctest::Approx(3.0));
}
