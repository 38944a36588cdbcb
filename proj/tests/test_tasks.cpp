#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "alphamaml/glyphs.hpp"
#include "alphamaml/omniglot.hpp"
#include "alphamaml/tasks.hpp"

using namespace alphamaml;
namespace fs = std::filesystem;

namespace {

bool identical(const ad::Tensor& a, const ad::Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (long i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool identical(const Episode& a, const Episode& b) {
  return identical(a.train_inputs, b.train_inputs) && identical(a.train_targets, b.train_targets) &&
         identical(a.test_inputs, b.test_inputs) && identical(a.test_targets, b.test_targets);
}

// Shared glyph fixture: 3 alphabets x 5 characters, ingested once.
const OmniglotStore& glyph_store() {
  static OmniglotStore store = [] {
    const fs::path root = fs::temp_directory_path() / "alphamaml_test_glyphs";
    if (!fs::exists(root / "Alphabet00"))
      write_glyph_dataset(root.string(), 3, 5, kOmniglotInstances, 56, 12345);
    return ingest_omniglot(root.string(), /*train_chars=*/10, /*rotations=*/4, /*shuffle_seed=*/7);
  }();
  return store;
}

}  // namespace

TEST_CASE("sinusoid episodes follow amplitude*sin(x+phase)") {
  TaskDistribution dist;
  dist.kind = TaskKind::sinusoid;
  dist.k_shot = 10;
  dist.q_query = 15;
  Rng rng(3);
  Episode ep = sample_episode(dist, rng);
  CHECK(ep.train_inputs.shape() == ad::Shape{10, 1});
  CHECK(ep.test_inputs.shape() == ad::Shape{15, 1});

  // recover amplitude/phase from two points, then check the rest
  // y = A sin(x + p): every sample must satisfy the same (A, p)
  double best_a = 0, best_p = 0, best_err = 1e9;
  for (double p = 0.0; p < 3.1416; p += 1e-4) {
    const double a = ep.train_targets[0] / std::sin(ep.train_inputs[0] + p);
    if (a < 0.1 || a > 5.0) continue;
    const double err = std::abs(ep.train_targets[1] - a * std::sin(ep.train_inputs[1] + p));
    if (err < best_err) best_err = err, best_a = a, best_p = p;
  }
  REQUIRE(best_err < 1e-3);
  for (long i = 0; i < 10; ++i)
    CHECK(ep.train_targets[i] ==
          doctest::Approx(best_a * std::sin(ep.train_inputs[i] + best_p)).epsilon(1e-3));
  CHECK(best_a * std::sin(3.14159265358979 / 2.0) == doctest::Approx(best_a));  // sin(pi/2) = 1

  Rng r1(42), r2(42);
  CHECK(identical(sample_episode(dist, r1), sample_episode(dist, r2)));
}

TEST_CASE("blobs episodes are balanced and deterministic") {
  TaskDistribution dist;
  dist.kind = TaskKind::blobs;
  dist.n_way = 4;
  dist.k_shot = 5;
  dist.q_query = 3;
  Rng rng(8);
  Episode ep = sample_episode(dist, rng);
  CHECK(ep.train_inputs.shape() == ad::Shape{20, 2});
  CHECK(ep.test_inputs.shape() == ad::Shape{12, 2});
  std::set<double> labels;
  for (long i = 0; i < 20; ++i) labels.insert(ep.train_targets[i]);
  CHECK(labels.size() == 4);

  Rng r1(9), r2(9);
  CHECK(identical(sample_episode(dist, r1), sample_episode(dist, r2)));
}

TEST_CASE("make_batch is deterministic and independent per episode") {
  TaskDistribution dist;
  dist.kind = TaskKind::sinusoid;
  Rng r1(5), r2(5), r3(5);
  auto batch = make_batch(dist, 4, r1);
  REQUIRE(batch.size() == 4);
  // size 1 equals a single sample_episode call on the same stream
  auto single = make_batch(dist, 1, r2);
  CHECK(identical(single[0], sample_episode(dist, r3)));
  // continuous parameters: all four sinusoids distinct
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      CHECK_FALSE(identical(batch[static_cast<size_t>(i)], batch[static_cast<size_t>(j)]));
  CHECK_THROWS(make_batch(dist, 0, r1));
}

TEST_CASE("glyph fixture ingests into a valid store") {
  const OmniglotStore& store = glyph_store();
  CHECK(store.char_count() == 15);
  CHECK(store.train_count == 10);
  CHECK(store.test_count() == 5);
  CHECK(store.train_classes() == 40);  // 4 rotations per character
  CHECK(store.rotations == 4);
}

TEST_CASE("omniglot cache round-trips byte-identically") {
  const OmniglotStore& store = glyph_store();
  const fs::path dir = fs::temp_directory_path() / "alphamaml_test_cache";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.cache").string();
  const std::string p2 = (dir / "b.cache").string();
  save_omniglot_cache(store, p1);
  OmniglotStore loaded = load_omniglot_cache(p1);
  save_omniglot_cache(loaded, p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(loaded.char_count() == store.char_count());
  CHECK(loaded.characters[0].name == store.characters[0].name);

  CHECK_THROWS(load_omniglot_cache((dir / "missing.cache").string()));
}

TEST_CASE("rotation classes are exact pixel permutations") {
  const OmniglotStore& store = glyph_store();
  ad::Tensor base = omniglot_image(store, 0, 0, 0);
  ad::Tensor quarter = omniglot_image(store, 0, 0, 1);
  // rotating four times returns to the original
  const long s = kOmniglotSide;
  ad::Tensor full = omniglot_image(store, 0, 0, 0);
  for (long i = 0; i < s; ++i)
    for (long j = 0; j < s; ++j)
      CHECK(quarter[i * s + j] == base[j * s + (s - 1 - i)]);
  for (long i = 0; i < base.numel(); ++i) {
    CHECK(base[i] >= 0.0);
    CHECK(base[i] <= 1.0);
  }
  (void)full;
}

TEST_CASE("omniglot episodes: counts, disjointness, split hygiene") {
  auto store = std::make_shared<OmniglotStore>(glyph_store());
  TaskDistribution dist;
  dist.kind = TaskKind::omniglot;
  dist.store = store;
  dist.n_way = 5;
  dist.k_shot = 1;
  dist.q_query = 15;
  Rng rng(2);
  Episode ep = sample_episode(dist, rng);
  CHECK(ep.train_inputs.shape() == ad::Shape{5, 1, 28, 28});
  CHECK(ep.test_inputs.shape() == ad::Shape{75, 1, 28, 28});

  // same rng state reproduces the episode
  Rng r1(6), r2(6);
  CHECK(identical(sample_episode(dist, r1), sample_episode(dist, r2)));

  // K+Q exceeding the 20 instances per class fails
  TaskDistribution too_many = dist;
  too_many.k_shot = 10;
  too_many.q_query = 11;
  CHECK_THROWS(sample_episode(too_many, rng));

  // disjointness: support and query instances never overlap within an
  // episode (images of one class are distinct instances by construction)
  TaskDistribution heavy = dist;
  heavy.k_shot = 8;
  heavy.q_query = 12;  // uses all 20 instances
  for (int trial = 0; trial < 50; ++trial) {
    Episode e = sample_episode(heavy, rng);
    for (long c = 0; c < heavy.n_way; ++c) {
      std::set<std::vector<double>> seen;
      for (long k = 0; k < heavy.k_shot; ++k) {
        const double* p = e.train_inputs.data() + (c * heavy.k_shot + k) * 784;
        seen.insert(std::vector<double>(p, p + 784));
      }
      const size_t support = seen.size();
      CHECK(support == static_cast<size_t>(heavy.k_shot));
      for (long q = 0; q < heavy.q_query; ++q) {
        const double* p = e.test_inputs.data() + (c * heavy.q_query + q) * 784;
        seen.insert(std::vector<double>(p, p + 784));
      }
      CHECK(seen.size() == static_cast<size_t>(heavy.k_shot + heavy.q_query));
    }
  }

  // split hygiene: collect every image appearing in meta-test episodes
  // and verify none appears in any meta-train episode
  TaskDistribution test_dist = dist;
  test_dist.split = Split::meta_test;
  std::set<std::vector<double>> test_images;
  Rng hr(77);
  for (int trial = 0; trial < 200; ++trial) {
    Episode e = sample_episode(test_dist, hr);
    for (long r = 0; r < e.train_inputs.dim(0); ++r) {
      const double* p = e.train_inputs.data() + r * 784;
      test_images.insert(std::vector<double>(p, p + 784));
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    Episode e = sample_episode(dist, hr);
    for (long r = 0; r < e.train_inputs.dim(0); ++r) {
      const double* p = e.train_inputs.data() + r * 784;
      CHECK(test_images.find(std::vector<double>(p, p + 784)) == test_images.end());
    }
  }
}

TEST_CASE("reproducibility: 100-episode sequence is identical across runs") {
  TaskDistribution dist;
  dist.kind = TaskKind::blobs;
  dist.n_way = 3;
  dist.k_shot = 2;
  dist.q_query = 2;
  Rng r1(31337), r2(31337);
  for (int i = 0; i < 100; ++i) CHECK(identical(sample_episode(dist, r1), sample_episode(dist, r2)));
}

TEST_CASE("ingest rejects bad roots and undersized splits") {
  CHECK_THROWS(ingest_omniglot("/nonexistent/path"));
  const fs::path root = fs::temp_directory_path() / "alphamaml_test_glyphs";
  CHECK_THROWS(ingest_omniglot(root.string(), /*train_chars=*/15));  // needs 1 <= train < count
}

TEST_CASE("characters with the wrong instance count are skipped with a warning") {
  const fs::path root = fs::temp_directory_path() / "alphamaml_test_badchar";
  fs::remove_all(root);
  write_glyph_dataset(root.string(), 1, 3, kOmniglotInstances, 56, 1);
  // cripple one character
  fs::remove(root / "Alphabet00" / "character01" / "0000.png");
  OmniglotStore store = ingest_omniglot(root.string(), 1, 4, 0);
  CHECK(store.char_count() == 2);
}

TEST_CASE("area downsampling averages exactly on integer ratios") {
  std::vector<uint8_t> src(16, 0);
  src[0] = src[1] = src[4] = src[5] = 200;  // top-left 2x2 block of a 4x4
  auto out = downsample_area(src, 4, 4, 2, 2);
  CHECK(out[0] == 200);
  CHECK(out[1] == 0);
  CHECK(out[2] == 0);
  CHECK(out[3] == 0);
}
