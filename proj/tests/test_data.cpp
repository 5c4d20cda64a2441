#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "data.hpp"
#include "errors.hpp"

using namespace dpt;

TEST_CASE("ring mixture generates exact counts deterministically") {
  const MixtureSpec spec = ring_mixture_spec(8, 4.0, 0.3, 500, 42);
  const MixtureData a = generate_mixture(spec);
  CHECK(a.data.xs.size() == 4000);
  CHECK(a.data.dim == 2);
  for (std::size_t y = 0; y < 8; ++y) {
    const auto n = std::count(a.data.labels.begin(), a.data.labels.end(), y);
    CHECK(n == 500);
  }
  const MixtureData b = generate_mixture(spec);
  CHECK(a.data.xs == b.data.xs);
  CHECK(a.data.labels == b.data.labels);
}

TEST_CASE("empirical class means land within 3 standard errors") {
  const MixtureSpec spec = ring_mixture_spec(4, 4.0, 0.3, 2000, 7);
  const MixtureData m = generate_mixture(spec);
  const double se = std::sqrt(0.3 / 2000.0);
  for (std::size_t y = 0; y < 4; ++y) {
    double mx = 0.0, my = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.data.xs.size(); ++i) {
      if (m.data.labels[i] == y) {
        mx += m.data.xs[i][0];
        my += m.data.xs[i][1];
        ++n;
      }
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    CHECK(std::abs(mx - spec.means[y][0]) < 3.0 * se);
    CHECK(std::abs(my - spec.means[y][1]) < 3.0 * se);
  }
}

TEST_CASE("bayes oracle recovers generating classes almost everywhere") {
  const MixtureSpec spec = ring_mixture_spec(8, 4.0, 0.3, 200, 3);
  const MixtureData m = generate_mixture(spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < m.data.xs.size(); ++i) {
    if (m.bayes.classify(m.data.xs[i]) == m.data.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(m.data.xs.size()) > 0.99);
  const Vec post = m.bayes.posterior(m.data.xs[0]);
  double s = 0.0;
  for (double v : post) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("invalid covariance is rejected") {
  MixtureSpec spec = ring_mixture_spec(2, 4.0, 0.3, 10, 1);
  spec.covs[1].at(0, 0) = -1.0;
  CHECK_THROWS_AS(generate_mixture(spec), ConfigError);
}

TEST_CASE("semi split is a stratified partition") {
  const MixtureSpec spec = ring_mixture_spec(8, 4.0, 0.3, 100, 11);
  const MixtureData m = generate_mixture(spec);
  SplitSpec split;
  split.labels_per_class = 2;
  split.seed = 5;
  const SemiSplit s = split_semi(m.data, split);

  CHECK(s.semi.labeled_idx.size() == 16);
  CHECK(s.semi.unlabeled_idx.size() == 800 - 16);

  // disjoint and exhaustive
  std::vector<bool> seen(800, false);
  for (std::size_t i : s.semi.labeled_idx) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
  for (std::size_t i : s.semi.unlabeled_idx) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
  CHECK(std::count(seen.begin(), seen.end(), false) == 0);

  // exactly labels_per_class per class, and revealed labels match the truth
  std::vector<std::size_t> counts(8, 0);
  for (std::size_t i : s.semi.labeled_idx) {
    REQUIRE(s.semi.items[i].label.has_value());
    CHECK(*s.semi.items[i].label == m.data.labels[i]);
    counts[*s.semi.items[i].label] += 1;
  }
  for (std::size_t c : counts) CHECK(c == 2);

  // unlabeled items expose no label
  for (std::size_t i : s.semi.unlabeled_idx) CHECK_FALSE(s.semi.items[i].label.has_value());

  // determinism
  const SemiSplit s2 = split_semi(m.data, split);
  CHECK(s2.semi.labeled_idx == s.semi.labeled_idx);

  // truth stays aligned with the full label vector
  CHECK(s.truth.labels == m.data.labels);
}

TEST_CASE("split rejects undersized classes") {
  const MixtureSpec spec = ring_mixture_spec(2, 4.0, 0.3, 3, 2);
  const MixtureData m = generate_mixture(spec);
  SplitSpec split;
  split.labels_per_class = 4;
  CHECK_THROWS_AS(split_semi(m.data, split), ConfigError);
}

TEST_CASE("csv round trip is bit-exact and conventions hold") {
  const auto path = std::filesystem::temp_directory_path() / "dpt_test_records.csv";
  std::vector<DataRecord> records;
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    DataRecord r;
    r.id = i;
    r.label = i % 5 == 0 ? -1 : i % 3;  // some unlabeled rows
    r.provenance = i % 2 ? "real" : "pseudo";
    r.x = {rng.normal() * 1e-7, rng.normal() * 1e7, rng.normal()};
    records.push_back(std::move(r));
  }
  save_records_csv(path, records);
  const std::vector<DataRecord> back = load_records_csv(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].provenance == records[i].provenance);
    REQUIRE(back[i].x.size() == records[i].x.size());
    for (std::size_t j = 0; j < records[i].x.size(); ++j) {
      CHECK(std::bit_cast<std::uint64_t>(back[i].x[j]) ==
            std::bit_cast<std::uint64_t>(records[i].x[j]));
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("semi records carry -1 for unlabeled rows") {
  const MixtureSpec spec = ring_mixture_spec(2, 4.0, 0.3, 5, 23);
  const MixtureData m = generate_mixture(spec);
  SplitSpec split;
  split.labels_per_class = 1;
  const SemiSplit s = split_semi(m.data, split);
  const auto records = semi_to_records(s.semi);
  std::size_t unlabeled = 0;
  for (const auto& r : records) {
    if (r.label == -1) ++unlabeled;
    CHECK(r.provenance == "real");
  }
  CHECK(unlabeled == 8);
}

TEST_CASE("malformed csv rows report the line number") {
  const auto path = std::filesystem::temp_directory_path() / "dpt_test_bad.csv";
  {
    std::ofstream out(path);
    out << "id,label,provenance,x_1\n";
    out << "0,1,real,2.0\n";
    out << "1,1,real,not_a_number\n";
  }
  try {
    load_records_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_records_csv(path), MissingArtifactError);
}
