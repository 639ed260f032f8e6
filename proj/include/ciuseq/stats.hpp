#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ciuseq/ciu.hpp"
#include "ciuseq/rng.hpp"

namespace ciuseq {

// --- small-sample distribution tails ----------------------------------------

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

namespace detail {

// Continued fraction for the regularized incomplete beta, modified Lentz.
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw OutOfRangeError("incomplete_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student's t with nu degrees of freedom.
inline double t_cdf(double t, double nu) {
  if (nu <= 0.0) throw OutOfRangeError("t_cdf: degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = nu / (nu + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * nu, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

// P(F > f) for Fisher's F with (d1, d2) degrees of freedom; the upper tail is
// computed directly so tiny p-values keep relative accuracy.
inline double f_sf(double f, double d1, double d2) {
  if (d1 <= 0.0 || d2 <= 0.0) throw OutOfRangeError("f_sf: degrees of freedom must be positive");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

inline double f_cdf(double f, double d1, double d2) { return 1.0 - f_sf(f, d1, d2); }

// --- descriptive helpers -----------------------------------------------------

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double population_std(std::span<const double> v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (const double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// --- speaker-grouped cross-validation ----------------------------------------

struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train_speakers;
  std::vector<std::string> eval_speakers;
};

inline std::vector<FoldSplit> grouped_kfold(std::span<const std::string> speakers, int k, std::uint64_t seed) {
  if (k < 2) throw TooFewGroupsError("grouped_kfold: k must be at least 2");
  std::vector<std::string> unique(speakers.begin(), speakers.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (static_cast<int>(unique.size()) < k)
    throw TooFewGroupsError("grouped_kfold: " + std::to_string(unique.size()) + " distinct speakers for k=" +
                            std::to_string(k));

  Rng rng(seed);
  rng.shuffle(unique);

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) folds[static_cast<std::size_t>(f)].fold = f;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    const int f = static_cast<int>(i % static_cast<std::size_t>(k));
    for (int g = 0; g < k; ++g) {
      auto& fold = folds[static_cast<std::size_t>(g)];
      (g == f ? fold.eval_speakers : fold.train_speakers).push_back(unique[i]);
    }
  }
  for (auto& fold : folds) {
    std::sort(fold.train_speakers.begin(), fold.train_speakers.end());
    std::sort(fold.eval_speakers.begin(), fold.eval_speakers.end());
  }
  return folds;
}

// --- sentence-level detection metrics ----------------------------------------

struct CiuPrf {
  long long tp = 0, fp = 0, fn = 0;
  std::optional<double> precision;  // unset when tp + fp == 0
  std::optional<double> recall;     // unset when tp + fn == 0
};

struct ClassificationReport {
  std::array<CiuPrf, kCiuCount> per_ciu{};
  long long tp = 0, fp = 0, fn = 0;
  std::optional<double> micro_precision;
  std::optional<double> micro_recall;
};

inline ClassificationReport detection_report(const std::vector<std::vector<CiuId>>& pred,
                                             const std::vector<std::vector<CiuId>>& gold) {
  if (pred.size() != gold.size())
    throw LengthMismatchError("detection_report: " + std::to_string(pred.size()) + " predicted vs " +
                              std::to_string(gold.size()) + " gold sentences");
  ClassificationReport rep;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const std::set<CiuId> p(pred[s].begin(), pred[s].end());
    const std::set<CiuId> g(gold[s].begin(), gold[s].end());
    for (int c = 0; c < kCiuCount; ++c) {
      const bool in_p = p.count(static_cast<CiuId>(c)) > 0;
      const bool in_g = g.count(static_cast<CiuId>(c)) > 0;
      auto& cell = rep.per_ciu[static_cast<std::size_t>(c)];
      if (in_p && in_g) ++cell.tp;
      else if (in_p) ++cell.fp;
      else if (in_g) ++cell.fn;
    }
  }
  for (auto& cell : rep.per_ciu) {
    if (cell.tp + cell.fp > 0) cell.precision = static_cast<double>(cell.tp) / static_cast<double>(cell.tp + cell.fp);
    if (cell.tp + cell.fn > 0) cell.recall = static_cast<double>(cell.tp) / static_cast<double>(cell.tp + cell.fn);
    rep.tp += cell.tp;
    rep.fp += cell.fp;
    rep.fn += cell.fn;
  }
  if (rep.tp + rep.fp > 0) rep.micro_precision = static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp);
  if (rep.tp + rep.fn > 0) rep.micro_recall = static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn);
  return rep;
}

// Mean/median/std of a per-fold statistic, over the folds where it is defined.
struct FoldSummary {
  int folds_defined = 0;
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> stddev;  // population
};

inline FoldSummary summarize_folds(const std::vector<std::optional<double>>& values) {
  std::vector<double> defined;
  for (const auto& v : values)
    if (v.has_value()) defined.push_back(*v);
  FoldSummary s;
  s.folds_defined = static_cast<int>(defined.size());
  if (!defined.empty()) {
    s.mean = mean_of(defined);
    s.median = median_of(defined);
    s.stddev = population_std(defined);
  }
  return s;
}

struct AggregatedReport {
  std::array<FoldSummary, kCiuCount> precision{};
  std::array<FoldSummary, kCiuCount> recall{};
  FoldSummary micro_precision;
  FoldSummary micro_recall;
};

inline AggregatedReport aggregate_reports(const std::vector<ClassificationReport>& folds) {
  AggregatedReport agg;
  for (int c = 0; c < kCiuCount; ++c) {
    std::vector<std::optional<double>> prec, rec;
    for (const auto& fold : folds) {
      prec.push_back(fold.per_ciu[static_cast<std::size_t>(c)].precision);
      rec.push_back(fold.per_ciu[static_cast<std::size_t>(c)].recall);
    }
    agg.precision[static_cast<std::size_t>(c)] = summarize_folds(prec);
    agg.recall[static_cast<std::size_t>(c)] = summarize_folds(rec);
  }
  std::vector<std::optional<double>> mp, mr;
  for (const auto& fold : folds) {
    mp.push_back(fold.micro_precision);
    mr.push_back(fold.micro_recall);
  }
  agg.micro_precision = summarize_folds(mp);
  agg.micro_recall = summarize_folds(mr);
  return agg;
}

// --- sequence alignment --------------------------------------------------------

struct AlignmentReport {
  long long matches = 0;
  long long insertions = 0;
  long long deletions = 0;
  long long substitutions = 0;
  long long ref_len = 0;
  long long hyp_len = 0;
  // Rates are undefined for an empty reference.
  std::optional<double> insertion_rate;
  std::optional<double> deletion_rate;
  std::optional<double> substitution_rate;
  std::optional<double> sequence_error_rate;

  long long distance() const { return insertions + deletions + substitutions; }
};

// Unit-cost Levenshtein with a deterministic backtrace. Ties are broken by
// preferring the diagonal (match/substitution), then deletion, then
// insertion. The diagonal preference is global: among minimal-cost
// alignments the one with the most diagonal steps wins, which pins down the
// edit composition uniquely and keeps the insertion/deletion counts mirror
// images under swapping ref and hyp (a greedy local preference does not:
// ref "aba" vs hyp "bcab" has minimal alignments of different composition).
inline AlignmentReport levenshtein_align(std::span<const CiuId> ref, std::span<const CiuId> hyp) {
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<long long> dp((m + 1) * (n + 1));
  std::vector<long long> diag((m + 1) * (n + 1));  // max diagonal steps among min-cost paths
  const auto at = [&](std::size_t i, std::size_t j) -> long long& { return dp[i * (n + 1) + j]; };
  const auto dg = [&](std::size_t i, std::size_t j) -> long long& { return diag[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) at(i, 0) = static_cast<long long>(i);
  for (std::size_t j = 0; j <= n; ++j) at(0, j) = static_cast<long long>(j);
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j) {
      const long long sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const long long del = at(i - 1, j) + 1;
      const long long ins = at(i, j - 1) + 1;
      const long long best = std::min({sub, del, ins});
      long long steps = -1;
      if (sub == best) steps = std::max(steps, dg(i - 1, j - 1) + 1);
      if (del == best) steps = std::max(steps, dg(i - 1, j));
      if (ins == best) steps = std::max(steps, dg(i, j - 1));
      at(i, j) = best;
      dg(i, j) = steps;
    }

  AlignmentReport rep;
  rep.ref_len = static_cast<long long>(m);
  rep.hyp_len = static_cast<long long>(n);
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const long long sub_cost = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + sub_cost && dg(i, j) == dg(i - 1, j - 1) + 1) {
        (sub_cost == 0 ? rep.matches : rep.substitutions) += 1;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1 && (j == 0 || dg(i, j) == dg(i - 1, j))) {
      ++rep.deletions;
      --i;
      continue;
    }
    ++rep.insertions;
    --j;
  }
  if (m > 0) {
    const double dm = static_cast<double>(m);
    rep.insertion_rate = static_cast<double>(rep.insertions) / dm;
    rep.deletion_rate = static_cast<double>(rep.deletions) / dm;
    rep.substitution_rate = static_cast<double>(rep.substitutions) / dm;
    rep.sequence_error_rate = static_cast<double>(rep.distance()) / dm;
  }
  return rep;
}

inline AlignmentReport levenshtein_align(const CiuSequence& ref, const CiuSequence& hyp) {
  return levenshtein_align(std::span<const CiuId>(sequence_ids(ref)), std::span<const CiuId>(sequence_ids(hyp)));
}

// --- correlation ---------------------------------------------------------------

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
  int n = 0;
};

inline PearsonResult pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw LengthMismatchError("pearson_r: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  const int n = static_cast<int>(x.size());
  if (n < 3) throw DegenerateInputError("pearson_r: need at least 3 pairs, got " + std::to_string(n));

  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[static_cast<std::size_t>(i)] - mx;
    const double dy = y[static_cast<std::size_t>(i)] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("pearson_r: constant input vector");

  PearsonResult res;
  res.n = n;
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double one_minus_r2 = (1.0 - res.r) * (1.0 + res.r);
  if (one_minus_r2 <= 0.0) {
    res.p = 0.0;
  } else {
    const double nu = static_cast<double>(n - 2);
    const double t = std::abs(res.r) * std::sqrt(nu / one_minus_r2);
    res.p = std::clamp(2.0 * (1.0 - t_cdf(t, nu)), 0.0, 1.0);
  }
  return res;
}

// --- least squares and ANCOVA -----------------------------------------------------

struct OlsFit {
  std::vector<double> coef;
  double rss = 0.0;
  int n = 0;
  int p = 0;
};

// Householder QR with implicit Q^T y; detects rank deficiency from the
// remaining column norm at each elimination step.
inline OlsFit ols_fit(const std::vector<std::vector<double>>& rows, std::span<const double> y,
                      const std::vector<std::string>& col_names) {
  const int n = static_cast<int>(rows.size());
  if (n == 0) throw TooFewRowsError("ols_fit: empty design");
  const int p = static_cast<int>(rows[0].size());
  if (p == 0) throw TooFewRowsError("ols_fit: zero-column design");
  if (static_cast<int>(col_names.size()) != p)
    throw LengthMismatchError("ols_fit: " + std::to_string(col_names.size()) + " names for " + std::to_string(p) +
                              " columns");
  if (static_cast<int>(y.size()) != n)
    throw LengthMismatchError("ols_fit: " + std::to_string(y.size()) + " responses for " + std::to_string(n) + " rows");
  if (n < p) throw TooFewRowsError("ols_fit: " + std::to_string(n) + " rows for " + std::to_string(p) + " columns");

  // column-major working copy
  std::vector<double> a(static_cast<std::size_t>(n) * static_cast<std::size_t>(p));
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != p)
      throw LengthMismatchError("ols_fit: ragged design matrix at row " + std::to_string(i));
    for (int j = 0; j < p; ++j)
      a[static_cast<std::size_t>(j) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] =
          rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  std::vector<double> qty(y.begin(), y.end());

  const auto col = [&](int j) { return a.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(n); };
  std::vector<double> initial_norm(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += col(j)[i] * col(j)[i];
    initial_norm[static_cast<std::size_t>(j)] = std::sqrt(s);
  }

  std::vector<double> rdiag(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    double norm2 = 0.0;
    for (int i = k; i < n; ++i) norm2 += col(k)[i] * col(k)[i];
    const double norm = std::sqrt(norm2);
    if (norm <= 1e-10 * initial_norm[static_cast<std::size_t>(k)] || norm == 0.0)
      throw RankDeficientError("ols_fit: column '" + col_names[static_cast<std::size_t>(k)] +
                               "' is collinear with preceding columns");

    const double alpha = col(k)[k] >= 0.0 ? -norm : norm;
    col(k)[k] -= alpha;  // column k rows k.. now hold the Householder vector v
    double vnorm2 = 0.0;
    for (int i = k; i < n; ++i) vnorm2 += col(k)[i] * col(k)[i];

    for (int j = k + 1; j < p; ++j) {
      double dot = 0.0;
      for (int i = k; i < n; ++i) dot += col(k)[i] * col(j)[i];
      const double scale = 2.0 * dot / vnorm2;
      for (int i = k; i < n; ++i) col(j)[i] -= scale * col(k)[i];
    }
    double ydot = 0.0;
    for (int i = k; i < n; ++i) ydot += col(k)[i] * qty[static_cast<std::size_t>(i)];
    const double yscale = 2.0 * ydot / vnorm2;
    for (int i = k; i < n; ++i) qty[static_cast<std::size_t>(i)] -= yscale * col(k)[i];

    rdiag[static_cast<std::size_t>(k)] = alpha;
  }

  OlsFit fit;
  fit.n = n;
  fit.p = p;
  fit.coef.assign(static_cast<std::size_t>(p), 0.0);
  for (int k = p - 1; k >= 0; --k) {
    double acc = qty[static_cast<std::size_t>(k)];
    for (int j = k + 1; j < p; ++j) acc -= col(j)[k] * fit.coef[static_cast<std::size_t>(j)];
    fit.coef[static_cast<std::size_t>(k)] = acc / rdiag[static_cast<std::size_t>(k)];
  }
  for (int i = p; i < n; ++i) fit.rss += qty[static_cast<std::size_t>(i)] * qty[static_cast<std::size_t>(i)];
  return fit;
}

struct AncovaResult {
  std::string feature;
  double f_value = 0.0;
  double p_value = 1.0;
  int n_used = 0;
  std::vector<std::string> covariates;  // as actually used in the design
};

struct AncovaDesign {
  std::vector<std::vector<double>> full_rows;  // intercept, group, covariates...
  std::vector<std::string> full_names;
  std::vector<std::string> used_covariates;
};

// Assembles the one-factor design. A covariate whose name equals the
// dependent feature name is excluded (the unique-nodes rule: when unique
// nodes is the dependent variable it cannot also be a covariate).
inline AncovaDesign ancova_design(const std::string& feature_name, std::span<const int> group,
                                  const std::vector<std::vector<double>>& covariates,
                                  const std::vector<std::string>& covariate_names) {
  const std::size_t n = group.size();
  AncovaDesign design;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < covariate_names.size(); ++j)
    if (covariate_names[j] != feature_name) {
      keep.push_back(j);
      design.used_covariates.push_back(covariate_names[j]);
    }

  design.full_names.push_back("intercept");
  design.full_names.push_back("group");
  for (const auto& name : design.used_covariates) design.full_names.push_back(name);

  design.full_rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (covariates[i].size() != covariate_names.size())
      throw LengthMismatchError("ancova_design: covariate row " + std::to_string(i) + " has " +
                                std::to_string(covariates[i].size()) + " entries, expected " +
                                std::to_string(covariate_names.size()));
    auto& row = design.full_rows[i];
    row.push_back(1.0);
    row.push_back(static_cast<double>(group[i]));
    for (const std::size_t j : keep) row.push_back(covariates[i][j]);
  }
  return design;
}

// Partial F-test for the group factor: full model (intercept + group +
// covariates) against the reduced model without group.
inline AncovaResult ancova_f(const std::string& feature_name, std::span<const double> feature,
                             std::span<const int> group, const std::vector<std::vector<double>>& covariates,
                             const std::vector<std::string>& covariate_names) {
  const std::size_t n = feature.size();
  if (group.size() != n || covariates.size() != n)
    throw LengthMismatchError("ancova_f: feature/group/covariate row counts disagree");

  const AncovaDesign design = ancova_design(feature_name, group, covariates, covariate_names);
  const int p_full = design.full_rows.empty() ? 2 : static_cast<int>(design.full_rows[0].size());
  if (static_cast<int>(n) < p_full + 1)
    throw TooFewRowsError("ancova_f: " + std::to_string(n) + " rows for " + std::to_string(p_full) +
                          " full-model columns");

  std::vector<std::vector<double>> reduced_rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    reduced_rows[i] = design.full_rows[i];
    reduced_rows[i].erase(reduced_rows[i].begin() + 1);  // drop the group column
  }
  std::vector<std::string> reduced_names = design.full_names;
  reduced_names.erase(reduced_names.begin() + 1);

  const OlsFit full = ols_fit(design.full_rows, feature, design.full_names);
  const OlsFit reduced = ols_fit(reduced_rows, feature, reduced_names);

  AncovaResult res;
  res.feature = feature_name;
  res.n_used = static_cast<int>(n);
  res.covariates = design.used_covariates;
  const double df2 = static_cast<double>(full.n - full.p);
  const double num = std::max(0.0, reduced.rss - full.rss);
  if (full.rss <= 0.0) {
    res.f_value = std::numeric_limits<double>::infinity();
    res.p_value = 0.0;
  } else {
    res.f_value = num / (full.rss / df2);
    res.p_value = std::clamp(f_sf(res.f_value, 1.0, df2), 0.0, 1.0);
  }
  return res;
}

}  // namespace ciuseq
