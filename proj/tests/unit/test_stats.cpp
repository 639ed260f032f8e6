#include <catch2/catch_amalgamated.hpp>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ciuseq/rng.hpp"
#include "ciuseq/stats.hpp"

using namespace ciuseq;

namespace {

// Brute-force minimal edit distance by plain recursion over the three edit
// operations; no dynamic program shared with the implementation.
long long edit_enum(std::span<const CiuId> ref, std::span<const CiuId> hyp) {
  if (ref.empty()) return static_cast<long long>(hyp.size());
  if (hyp.empty()) return static_cast<long long>(ref.size());
  const long long sub = edit_enum(ref.subspan(1), hyp.subspan(1)) + (ref[0] == hyp[0] ? 0 : 1);
  const long long del = edit_enum(ref.subspan(1), hyp) + 1;
  const long long ins = edit_enum(ref, hyp.subspan(1)) + 1;
  return std::min({sub, del, ins});
}

std::vector<std::vector<CiuId>> all_sequences(int max_len, const std::vector<CiuId>& alphabet) {
  std::vector<std::vector<CiuId>> out = {{}};
  std::vector<std::vector<CiuId>> frontier = {{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<CiuId>> next;
    for (const auto& seq : frontier)
      for (CiuId id : alphabet) {
        auto ext = seq;
        ext.push_back(id);
        out.push_back(ext);
        next.push_back(std::move(ext));
      }
    frontier = std::move(next);
  }
  return out;
}

// Normal-equations least squares, solved by Gaussian elimination with
// partial pivoting; independent of the library's QR path.
double rss_normal_equations(const std::vector<std::vector<double>>& rows, const std::vector<double>& y) {
  const std::size_t n = rows.size(), p = rows[0].size();
  std::vector<std::vector<double>> ata(p, std::vector<double>(p, 0.0));
  std::vector<double> aty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < p; ++a) {
      aty[a] += rows[i][a] * y[i];
      for (std::size_t b = 0; b < p; ++b) ata[a][b] += rows[i][a] * rows[i][b];
    }
  // Solve ata * beta = aty.
  std::vector<double> beta = aty;
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(ata[r][col]) > std::abs(ata[pivot][col])) pivot = r;
    std::swap(ata[col], ata[pivot]);
    std::swap(beta[col], beta[pivot]);
    for (std::size_t r = col + 1; r < p; ++r) {
      const double f = ata[r][col] / ata[col][col];
      for (std::size_t c = col; c < p; ++c) ata[r][c] -= f * ata[col][c];
      beta[r] -= f * beta[col];
    }
  }
  for (std::size_t col = p; col-- > 0;) {
    for (std::size_t c = col + 1; c < p; ++c) beta[col] -= ata[col][c] * beta[c];
    beta[col] /= ata[col][col];
  }
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t a = 0; a < p; ++a) fit += rows[i][a] * beta[a];
    rss += (y[i] - fit) * (y[i] - fit);
  }
  return rss;
}

double ancova_f_oracle(const std::vector<double>& feature, const std::vector<int>& group,
                       const std::vector<std::vector<double>>& covariates) {
  const std::size_t n = feature.size();
  std::vector<std::vector<double>> full(n), reduced(n);
  for (std::size_t i = 0; i < n; ++i) {
    full[i] = {1.0, static_cast<double>(group[i])};
    reduced[i] = {1.0};
    for (double c : covariates[i]) {
      full[i].push_back(c);
      reduced[i].push_back(c);
    }
  }
  const double rss_f = rss_normal_equations(full, feature);
  const double rss_r = rss_normal_equations(reduced, feature);
  const double df2 = static_cast<double>(n - full[0].size());
  return (rss_r - rss_f) / (rss_f / df2);
}

}  // namespace

TEST_CASE("t_cdf and f_sf match reference distributions") {
  for (const double nu : {1.0, 2.0, 5.0, 17.0, 100.0}) {
    const boost::math::students_t dist(nu);
    for (const double t : {-6.0, -2.5, -0.3, 0.0, 0.7, 1.8856180831641267, 4.0, 25.0}) {
      REQUIRE(t_cdf(t, nu) == Catch::Approx(boost::math::cdf(dist, t)).epsilon(0).margin(1e-12));
    }
  }
  for (const double d1 : {1.0, 3.0, 10.0}) {
    for (const double d2 : {2.0, 7.0, 40.0}) {
      const boost::math::fisher_f dist(d1, d2);
      for (const double f : {0.01, 0.5, 1.0, 3.7, 20.0, 400.0}) {
        REQUIRE(f_sf(f, d1, d2) ==
                Catch::Approx(boost::math::cdf(boost::math::complement(dist, f))).epsilon(0).margin(1e-12));
        REQUIRE(f_cdf(f, d1, d2) == Catch::Approx(boost::math::cdf(dist, f)).epsilon(0).margin(1e-12));
      }
    }
  }
}

TEST_CASE("incomplete_beta rejects bad parameters") {
  REQUIRE_THROWS_AS(incomplete_beta(0.0, 1.0, 0.5), OutOfRangeError);
  REQUIRE_THROWS_AS(incomplete_beta(1.0, -1.0, 0.5), OutOfRangeError);
  REQUIRE(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  REQUIRE(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("grouped_kfold partitions speakers deterministically") {
  std::vector<std::string> speakers;
  for (int i = 0; i < 10; ++i) speakers.push_back("spk" + std::to_string(i));
  // Duplicate entries must not change the split.
  speakers.push_back("spk3");

  const auto folds = grouped_kfold(speakers, 5, 99);
  REQUIRE(folds.size() == 5);
  std::set<std::string> seen;
  for (const auto& fold : folds) {
    REQUIRE(fold.eval_speakers.size() == 2);
    REQUIRE(fold.train_speakers.size() == 8);
    for (const auto& s : fold.eval_speakers) {
      REQUIRE(seen.insert(s).second);  // no speaker evaluated twice
      REQUIRE(std::find(fold.train_speakers.begin(), fold.train_speakers.end(), s) ==
              fold.train_speakers.end());
    }
  }
  REQUIRE(seen.size() == 10);

  const auto again = grouped_kfold(speakers, 5, 99);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    REQUIRE(folds[i].eval_speakers == again[i].eval_speakers);
    REQUIRE(folds[i].train_speakers == again[i].train_speakers);
  }
  const auto other_seed = grouped_kfold(speakers, 5, 100);
  bool any_difference = false;
  for (std::size_t i = 0; i < folds.size(); ++i)
    if (folds[i].eval_speakers != other_seed[i].eval_speakers) any_difference = true;
  REQUIRE(any_difference);
}

TEST_CASE("grouped_kfold rejects undersized inputs") {
  const std::vector<std::string> three = {"a", "b", "c"};
  REQUIRE_THROWS_AS(grouped_kfold(three, 5, 1), TooFewGroupsError);
  REQUIRE_THROWS_AS(grouped_kfold(three, 1, 1), TooFewGroupsError);
  REQUIRE_NOTHROW(grouped_kfold(three, 3, 1));
}

TEST_CASE("detection_report counts sentence-level sets") {
  using Sets = std::vector<std::vector<CiuId>>;
  SECTION("perfect predictions") {
    const Sets gold = {{CiuId::Boy, CiuId::Cookie}, {CiuId::Jar}, {}};
    const auto rep = detection_report(gold, gold);
    REQUIRE(rep.micro_precision.value() == 1.0);
    REQUIRE(rep.micro_recall.value() == 1.0);
    for (int c = 0; c < kCiuCount; ++c) {
      const auto& cell = rep.per_ciu[static_cast<std::size_t>(c)];
      if (cell.tp + cell.fn > 0) {
        REQUIRE(cell.precision.value() == 1.0);
        REQUIRE(cell.recall.value() == 1.0);
      }
    }
  }
  SECTION("empty predictions leave precision undefined") {
    const Sets gold = {{CiuId::Boy}, {CiuId::Boy, CiuId::Water}};
    const Sets pred = {{}, {}};
    const auto rep = detection_report(pred, gold);
    const auto& boy = rep.per_ciu[static_cast<std::size_t>(ciu_code(CiuId::Boy))];
    REQUIRE_FALSE(boy.precision.has_value());
    REQUIRE(boy.recall.value() == 0.0);
    REQUIRE_FALSE(rep.micro_precision.has_value());
    REQUIRE(rep.micro_recall.value() == 0.0);
  }
  SECTION("single-case audit") {
    const Sets gold = {{CiuId::Boy}};
    const Sets pred = {{CiuId::Boy, CiuId::Cookie}};
    const auto rep = detection_report(pred, gold);
    const auto& boy = rep.per_ciu[static_cast<std::size_t>(ciu_code(CiuId::Boy))];
    const auto& cookie = rep.per_ciu[static_cast<std::size_t>(ciu_code(CiuId::Cookie))];
    REQUIRE(boy.precision.value() == 1.0);
    REQUIRE(boy.recall.value() == 1.0);
    REQUIRE(cookie.precision.value() == 0.0);
    REQUIRE_FALSE(cookie.recall.has_value());
  }
  SECTION("duplicates within a sentence count once") {
    const Sets gold = {{CiuId::Boy}};
    const Sets pred = {{CiuId::Boy, CiuId::Boy}};
    const auto rep = detection_report(pred, gold);
    REQUIRE(rep.tp == 1);
    REQUIRE(rep.fp == 0);
  }
  SECTION("tp + fn equals gold positives per CIU") {
    Rng rng(55);
    Sets gold, pred;
    std::array<int, kCiuCount> gold_support{};
    for (int s = 0; s < 40; ++s) {
      std::vector<CiuId> g, p;
      for (int c = 0; c < kCiuCount; ++c) {
        if (rng.bernoulli(0.2)) {
          g.push_back(static_cast<CiuId>(c));
          ++gold_support[static_cast<std::size_t>(c)];
        }
        if (rng.bernoulli(0.2)) p.push_back(static_cast<CiuId>(c));
      }
      gold.push_back(g);
      pred.push_back(p);
    }
    const auto rep = detection_report(pred, gold);
    for (int c = 0; c < kCiuCount; ++c) {
      const auto& cell = rep.per_ciu[static_cast<std::size_t>(c)];
      REQUIRE(cell.tp + cell.fn == gold_support[static_cast<std::size_t>(c)]);
    }
  }
  SECTION("length mismatch") {
    REQUIRE_THROWS_AS(detection_report(Sets{{}}, Sets{{}, {}}), LengthMismatchError);
  }
}

TEST_CASE("summarize_folds skips undefined entries") {
  const std::vector<std::optional<double>> values = {1.0, std::nullopt, 3.0};
  const FoldSummary s = summarize_folds(values);
  REQUIRE(s.folds_defined == 2);
  REQUIRE(s.mean.value() == Catch::Approx(2.0));
  REQUIRE(s.median.value() == Catch::Approx(2.0));
  REQUIRE(s.stddev.value() == Catch::Approx(1.0));

  const FoldSummary none = summarize_folds({std::nullopt, std::nullopt});
  REQUIRE(none.folds_defined == 0);
  REQUIRE_FALSE(none.mean.has_value());
}

TEST_CASE("levenshtein_align hand cases") {
  using V = std::vector<CiuId>;
  const V bcj = {CiuId::Boy, CiuId::Cookie, CiuId::Jar};

  const auto same = levenshtein_align(bcj, bcj);
  REQUIRE(same.distance() == 0);
  REQUIRE(same.matches == 3);
  REQUIRE(same.sequence_error_rate.value() == 0.0);

  const auto del = levenshtein_align(bcj, V{CiuId::Boy, CiuId::Jar});
  REQUIRE(del.deletions == 1);
  REQUIRE(del.insertions == 0);
  REQUIRE(del.substitutions == 0);
  REQUIRE(del.sequence_error_rate.value() == Catch::Approx(1.0 / 3.0));

  const auto mixed = levenshtein_align(V{CiuId::Boy, CiuId::Cookie},
                                       V{CiuId::Girl, CiuId::Cookie, CiuId::Jar});
  REQUIRE(mixed.substitutions == 1);
  REQUIRE(mixed.insertions == 1);
  REQUIRE(mixed.deletions == 0);
  REQUIRE(mixed.sequence_error_rate.value() == Catch::Approx(1.0));
}

TEST_CASE("levenshtein_align with an empty reference returns counts only") {
  const std::vector<CiuId> hyp = {CiuId::Boy, CiuId::Jar};
  const auto rep = levenshtein_align(std::vector<CiuId>{}, hyp);
  REQUIRE(rep.insertions == 2);
  REQUIRE(rep.distance() == 2);
  REQUIRE_FALSE(rep.sequence_error_rate.has_value());
  REQUIRE_FALSE(rep.insertion_rate.has_value());

  const auto empty_hyp = levenshtein_align(hyp, std::vector<CiuId>{});
  REQUIRE(empty_hyp.deletions == 2);
  REQUIRE(empty_hyp.sequence_error_rate.value() == Catch::Approx(1.0));
}

TEST_CASE("levenshtein_align matches brute-force enumeration exhaustively") {
  const auto sequences = all_sequences(4, {CiuId::Boy, CiuId::Girl, CiuId::Sink});
  for (const auto& ref : sequences) {
    for (const auto& hyp : sequences) {
      const auto rep = levenshtein_align(std::span<const CiuId>(ref), std::span<const CiuId>(hyp));
      const long long want = edit_enum(ref, hyp);
      REQUIRE(rep.distance() == want);
      // Backtrace counts must reconstruct both lengths.
      REQUIRE(rep.matches + rep.substitutions + rep.deletions == static_cast<long long>(ref.size()));
      REQUIRE(rep.matches + rep.substitutions + rep.insertions == static_cast<long long>(hyp.size()));

      // Swapping ref and hyp swaps insertions and deletions.
      const auto swapped = levenshtein_align(std::span<const CiuId>(hyp), std::span<const CiuId>(ref));
      REQUIRE(swapped.insertions == rep.deletions);
      REQUIRE(swapped.deletions == rep.insertions);
      REQUIRE(swapped.substitutions == rep.substitutions);
    }
  }
}

TEST_CASE("pearson_r exact cases") {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> y = x;
  REQUIRE(pearson_r(x, y).r == Catch::Approx(1.0));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = -2.0 * x[i] + 3.0;
  REQUIRE(pearson_r(x, y).r == Catch::Approx(-1.0));

  const std::vector<double> y2 = {1.0, 3.0, 2.0, 4.0};
  const PearsonResult res = pearson_r(x, y2);
  REQUIRE(res.r == Catch::Approx(0.8).epsilon(0).margin(1e-12));
  const boost::math::students_t dist(2.0);
  const double t = 0.8 * std::sqrt(2.0 / (1.0 - 0.64));
  const double p_ref = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  REQUIRE(res.p == Catch::Approx(p_ref).epsilon(0).margin(1e-12));
}

TEST_CASE("pearson_r rejects degenerate input") {
  const std::vector<double> x = {1.0, 2.0};
  REQUIRE_THROWS_AS(pearson_r(x, x), DegenerateInputError);
  const std::vector<double> c = {2.0, 2.0, 2.0};
  const std::vector<double> v = {1.0, 2.0, 3.0};
  REQUIRE_THROWS_AS(pearson_r(c, v), DegenerateInputError);
  REQUIRE_THROWS_AS(pearson_r(v, c), DegenerateInputError);
  const std::vector<double> longer = {1.0, 2.0, 3.0, 4.0};
  REQUIRE_THROWS_AS(pearson_r(v, longer), LengthMismatchError);
}

TEST_CASE("pearson_r matches the direct formula on random vectors") {
  Rng rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(3, 40);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (auto& v : x) v = rng.uniform(-5.0, 5.0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.3 * x[i] + rng.normal();

    const PearsonResult res = pearson_r(x, y);

    double sx = 0.0, sy = 0.0;
    for (double v : x) sx += v;
    for (double v : y) sy += v;
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
      sxx += (x[static_cast<std::size_t>(i)] - mx) * (x[static_cast<std::size_t>(i)] - mx);
      syy += (y[static_cast<std::size_t>(i)] - my) * (y[static_cast<std::size_t>(i)] - my);
      sxy += (x[static_cast<std::size_t>(i)] - mx) * (y[static_cast<std::size_t>(i)] - my);
    }
    const double r_ref = sxy / std::sqrt(sxx * syy);
    REQUIRE(res.r == Catch::Approx(r_ref).epsilon(0).margin(1e-10));

    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double t = std::abs(r_ref) * std::sqrt((n - 2) / (1.0 - r_ref * r_ref));
    const double p_ref = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    REQUIRE(res.p == Catch::Approx(p_ref).epsilon(0).margin(1e-10));
  }
}

TEST_CASE("pearson_r affine transform behavior") {
  Rng rng(322);
  std::vector<double> x(12), y(12);
  for (auto& v : x) v = rng.uniform(0.0, 1.0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + 0.2 * rng.normal();
  const double base = pearson_r(x, y).r;

  std::vector<double> pos = x, neg = x;
  for (auto& v : pos) v = 3.5 * v + 11.0;
  for (auto& v : neg) v = -2.0 * v + 1.0;
  REQUIRE(pearson_r(pos, y).r == Catch::Approx(base).margin(1e-12));
  REQUIRE(pearson_r(neg, y).r == Catch::Approx(-base).margin(1e-12));
}

TEST_CASE("ols_fit matches normal equations and reports rank deficiency") {
  Rng rng(323);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.uniform_int(8, 40), p = rng.uniform_int(2, 5);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    std::vector<double> y(static_cast<std::size_t>(n));
    for (auto& row : rows) {
      row.push_back(1.0);
      for (int j = 1; j < p; ++j) row.push_back(rng.uniform(-3.0, 3.0));
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal();
    std::vector<std::string> names;
    for (int j = 0; j < p; ++j) names.push_back("c" + std::to_string(j));

    const OlsFit fit = ols_fit(rows, y, names);
    const double rss_ref = rss_normal_equations(rows, y);
    REQUIRE(fit.rss == Catch::Approx(rss_ref).epsilon(1e-9));
    REQUIRE(fit.n == n);
    REQUIRE(fit.p == p);
  }

  // A duplicated column is flagged by name.
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  Rng r2(324);
  for (int i = 0; i < 10; ++i) {
    const double v = r2.uniform(-1.0, 1.0);
    rows.push_back({1.0, v, 2.0 * v});
    y.push_back(r2.normal());
  }
  REQUIRE_THROWS_MATCHES(ols_fit(rows, y, {"intercept", "a", "a_doubled"}), RankDeficientError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("a_doubled")));

  REQUIRE_THROWS_AS(ols_fit({}, std::vector<double>{}, {}), TooFewRowsError);
  REQUIRE_THROWS_AS(ols_fit({{1.0}, {1.0}}, std::vector<double>{1.0}, {"i"}), LengthMismatchError);
}

TEST_CASE("ancova_f perfect separation yields an enormous F") {
  std::vector<double> feature;
  std::vector<int> group;
  std::vector<std::vector<double>> covs;
  Rng rng(325);
  for (int i = 0; i < 30; ++i) {
    const int g = i % 2;
    group.push_back(g);
    feature.push_back(static_cast<double>(g));
    covs.push_back({rng.normal()});
  }
  const AncovaResult res = ancova_f("total_path", feature, group, covs, {"noise"});
  REQUIRE(res.f_value > 1e6);
  REQUIRE(res.p_value < 1e-9);
}

TEST_CASE("ancova_f matches the normal-equations oracle on a hand-built table") {
  const std::vector<double> feature = {3.1, 4.9, 2.2, 6.0, 3.7, 5.8, 2.9, 5.1};
  const std::vector<int> group = {0, 1, 0, 1, 0, 1, 0, 1};
  const std::vector<std::vector<double>> covs = {
      {61.0, 12.0}, {72.0, 14.0}, {55.0, 16.0}, {80.0, 10.0},
      {66.0, 18.0}, {75.0, 11.0}, {59.0, 13.0}, {70.0, 15.0}};
  const AncovaResult res = ancova_f("cycles", feature, group, covs, {"age", "education"});
  const double f_ref = ancova_f_oracle(feature, group, covs);
  REQUIRE(res.f_value == Catch::Approx(f_ref).epsilon(1e-8));
  const boost::math::fisher_f dist(1.0, 8.0 - 4.0);
  REQUIRE(res.p_value ==
          Catch::Approx(boost::math::cdf(boost::math::complement(dist, f_ref))).epsilon(1e-8));
  REQUIRE(res.n_used == 8);
  REQUIRE(res.covariates == std::vector<std::string>{"age", "education"});
}

TEST_CASE("ancova_f matches the oracle on random designs") {
  Rng rng(326);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(12, 60);
    const int n_cov = rng.uniform_int(1, 3);
    std::vector<double> feature;
    std::vector<int> group;
    std::vector<std::vector<double>> covs;
    for (int i = 0; i < n; ++i) {
      const int g = static_cast<int>(rng.below(2));
      group.push_back(g);
      std::vector<double> row;
      for (int j = 0; j < n_cov; ++j) row.push_back(rng.uniform(-2.0, 2.0));
      covs.push_back(row);
      double f = 0.4 * g + rng.normal();
      for (int j = 0; j < n_cov; ++j) f += 0.3 * covs.back()[static_cast<std::size_t>(j)];
      feature.push_back(f);
    }
    std::vector<std::string> names;
    for (int j = 0; j < n_cov; ++j) names.push_back("cov" + std::to_string(j));
    const AncovaResult res = ancova_f("avg_x", feature, group, covs, names);
    const double f_ref = ancova_f_oracle(feature, group, covs);
    REQUIRE(res.f_value == Catch::Approx(f_ref).epsilon(1e-8));
  }
}

TEST_CASE("ancova_f invariances") {
  Rng rng(327);
  std::vector<double> feature;
  std::vector<int> group;
  std::vector<std::vector<double>> covs;
  for (int i = 0; i < 24; ++i) {
    group.push_back(static_cast<int>(rng.below(2)));
    covs.push_back({rng.uniform(50.0, 90.0), rng.uniform(8.0, 20.0)});
    feature.push_back(0.5 * group.back() + 0.01 * covs.back()[0] + rng.normal());
  }
  const std::vector<std::string> names = {"age", "education"};
  const double base = ancova_f("std_x", feature, group, covs, names).f_value;

  // Affine rescaling of a covariate column.
  auto scaled = covs;
  for (auto& row : scaled) row[0] = 3.0 * row[0] - 100.0;
  REQUIRE(ancova_f("std_x", feature, group, scaled, names).f_value == Catch::Approx(base).epsilon(1e-8));

  // Adding a constant to the dependent variable.
  auto shifted = feature;
  for (auto& v : shifted) v += 42.0;
  REQUIRE(ancova_f("std_x", shifted, group, covs, names).f_value == Catch::Approx(base).epsilon(1e-8));
}

TEST_CASE("ancova_design excludes the dependent feature from its covariates") {
  const std::vector<int> group = {0, 1, 0, 1};
  const std::vector<std::vector<double>> covs = {
      {61.0, 1.0, 12.0, 9.0}, {72.0, 0.0, 14.0, 11.0}, {55.0, 1.0, 16.0, 8.0}, {80.0, 0.0, 10.0, 13.0}};
  const std::vector<std::string> names = {"age", "gender", "education", "unique_nodes"};

  const AncovaDesign with = ancova_design("total_path", group, covs, names);
  REQUIRE(with.used_covariates == names);
  REQUIRE(with.full_names ==
          std::vector<std::string>{"intercept", "group", "age", "gender", "education", "unique_nodes"});
  REQUIRE(with.full_rows[0] == std::vector<double>{1.0, 0.0, 61.0, 1.0, 12.0, 9.0});

  const AncovaDesign without = ancova_design("unique_nodes", group, covs, names);
  REQUIRE(without.used_covariates == std::vector<std::string>{"age", "gender", "education"});
  REQUIRE(without.full_names ==
          std::vector<std::string>{"intercept", "group", "age", "gender", "education"});
  REQUIRE(without.full_rows[0] == std::vector<double>{1.0, 0.0, 61.0, 1.0, 12.0});
}

TEST_CASE("ancova_f null distribution is not anti-conservative") {
  // With no true group effect, p should rarely be extreme.
  int calm = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed * 7919);
    std::vector<double> feature;
    std::vector<int> group;
    std::vector<std::vector<double>> covs;
    for (int i = 0; i < 200; ++i) {
      group.push_back(static_cast<int>(rng.below(2)));
      covs.push_back({rng.normal(), rng.normal()});
      feature.push_back(rng.normal() + 0.2 * covs.back()[0]);
    }
    const AncovaResult res = ancova_f("nodes", feature, group, covs, {"a", "b"});
    if (res.p_value > 0.001) ++calm;
  }
  REQUIRE(calm >= 99);
}

TEST_CASE("ancova_f error paths") {
  const std::vector<double> tiny_f = {1.0, 2.0, 3.0};
  const std::vector<int> tiny_g = {0, 1, 0};
  const std::vector<std::vector<double>> tiny_c = {{1.0}, {2.0}, {3.0}};
  REQUIRE_THROWS_AS(ancova_f("nodes", tiny_f, tiny_g, tiny_c, {"x"}), TooFewRowsError);

  const std::vector<double> f4 = {1.0, 2.0, 3.0, 4.0};
  const std::vector<int> g4 = {0, 1, 0, 1};
  const std::vector<std::vector<double>> ragged = {{1.0}, {2.0, 9.0}, {3.0}, {4.0}};
  REQUIRE_THROWS_AS(ancova_f("nodes", f4, g4, ragged, {"x"}), LengthMismatchError);
}
