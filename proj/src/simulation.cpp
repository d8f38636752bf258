#include "robcv/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "robcv/cross_validation.hpp"
#include "robcv/error.hpp"
#include "robcv/seed.hpp"

namespace robcv {
namespace {

enum StreamTag : std::uint64_t {
  kDesignStream = 1,
  kErrorStream = 2,
  kLeverageStream = 3,
  kContaminationStream = 4,
};

constexpr double kTauCutoff = 3.0;

double sample_sd(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

double spread(ErrorFamily family, const Eigen::VectorXd& e) {
  return family == ErrorFamily::kGaussian ? sample_sd(e) : metric_tau(e, kTauCutoff);
}

Eigen::Index sparsity_of(Eigen::Index n) {
  return static_cast<Eigen::Index>(std::floor(std::log(static_cast<double>(n))));
}

}  // namespace

std::string to_string(ErrorFamily family) {
  switch (family) {
    case ErrorFamily::kGaussian: return "gaussian";
    case ErrorFamily::kLaplace: return "laplace";
    case ErrorFamily::kStable15: return "stable";
  }
  return "unknown";
}

ErrorFamily parse_error_family(const std::string& name) {
  if (name == "gaussian" || name == "normal") return ErrorFamily::kGaussian;
  if (name == "laplace") return ErrorFamily::kLaplace;
  if (name == "stable" || name == "stable_1_5") return ErrorFamily::kStable15;
  fail(ErrorCode::kInvalidArgument,
       "unknown error family '" + name + "' (expected gaussian, laplace or stable)");
}

void SimulationConfig::validate() const {
  require(n >= 4 && p >= 2, "simulation needs n >= 4 and p >= 2");
  require(snr > 0 && contamination_snr > 0, "SNR values must be positive");
  require(leverage_fraction >= 0 && leverage_fraction <= 1, "leverage fraction must lie in [0, 1]");
  require(contamination_fraction >= 0 && contamination_fraction < 0.5,
          "contamination fraction must lie in [0, 0.5)");
  require(leverage_fraction + contamination_fraction <= 1,
          "leverage and contamination fractions exceed the sample");
  require(leverage_multiplier > 0, "leverage multiplier must be positive");
  require(correlation > -1 && correlation < 1, "AR(1) correlation must lie in (-1, 1)");
  require(p > sparsity_of(n), "p must exceed the number of active coefficients floor(log n)");
}

Eigen::Index contamination_block_size(const SimulationConfig& config) {
  return static_cast<Eigen::Index>(
      std::floor(config.contamination_fraction * static_cast<double>(config.n) / 3.0 + 1e-9));
}

Eigen::MatrixXd draw_t4_design(Eigen::Index n, Eigen::Index p, double correlation,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::chi_squared_distribution<double> chi2(4.0);
  const double innovation = std::sqrt(1 - correlation * correlation);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    // The AR(1) recursion applies the Cholesky factor of the correlation matrix.
    double prev = normal(rng);
    x(i, 0) = prev;
    for (Eigen::Index j = 1; j < p; ++j) {
      prev = correlation * prev + innovation * normal(rng);
      x(i, j) = prev;
    }
    x.row(i) /= std::sqrt(chi2(rng) / 4.0);
  }
  return x;
}

Eigen::VectorXd draw_symmetric_stable(double alpha, Eigen::Index n, std::uint64_t seed) {
  require(alpha > 0 && alpha <= 2, "stability index must lie in (0, 2]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-M_PI / 2, M_PI / 2);
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = angle(rng);
    const double w = expo(rng);
    if (alpha == 1) {
      out[i] = std::tan(v);
      continue;
    }
    out[i] = std::sin(alpha * v) / std::pow(std::cos(v), 1 / alpha) *
             std::pow(std::cos((1 - alpha) * v) / w, (1 - alpha) / alpha);
  }
  return out;
}

Eigen::VectorXd draw_errors(ErrorFamily family, Eigen::Index n, std::uint64_t seed) {
  switch (family) {
    case ErrorFamily::kGaussian: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal;
      Eigen::VectorXd out(n);
      for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
      return out;
    }
    case ErrorFamily::kLaplace: {
      std::mt19937_64 rng(seed);
      std::exponential_distribution<double> expo(1.0);
      Eigen::VectorXd out(n);
      for (Eigen::Index i = 0; i < n; ++i) out[i] = expo(rng) - expo(rng);
      return out;
    }
    case ErrorFamily::kStable15:
      return draw_symmetric_stable(1.5, n, seed);
  }
  return Eigen::VectorXd::Zero(n);
}

SimulatedDataset gen_clean(const SimulationConfig& config) {
  config.validate();
  SimulatedDataset ds;
  ds.sparsity = sparsity_of(config.n);
  ds.beta_true = Eigen::VectorXd::Zero(config.p);
  ds.beta_true.head(ds.sparsity).setOnes();
  ds.x = draw_t4_design(config.n, config.p, config.correlation,
                        derive_seed(config.seed, kDesignStream));
  const Eigen::VectorXd signal = ds.x * ds.beta_true;
  const Eigen::VectorXd raw = draw_errors(config.error_family, config.n,
                                          derive_seed(config.seed, kErrorStream));
  ds.true_error_scale = sample_sd(signal) / std::sqrt(config.snr);
  ds.error_multiplier = ds.true_error_scale / spread(config.error_family, raw);
  ds.y = signal + ds.error_multiplier * raw;
  return ds;
}

SimulatedDataset apply_leverage(SimulatedDataset ds, const SimulationConfig& config) {
  const Eigen::Index n = ds.x.rows(), p = ds.x.cols();
  const Eigen::Index s = ds.sparsity;
  require(p - s >= 2, "leverage points need at least two zero-coefficient columns");

  std::vector<char> contaminated(static_cast<std::size_t>(n), 0);
  for (const auto& block : ds.contaminated_rows) {
    for (Eigen::Index i : block) contaminated[static_cast<std::size_t>(i)] = 1;
  }
  // Without contamination bookkeeping yet, reserve the rows the blocks will use.
  if (std::all_of(ds.contaminated_rows.begin(), ds.contaminated_rows.end(),
                  [](const auto& b) { return b.empty(); })) {
    const Eigen::Index reserved = 3 * contamination_block_size(config);
    for (Eigen::Index i = 0; i < reserved; ++i) contaminated[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<Eigen::Index> pool;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!contaminated[static_cast<std::size_t>(i)]) pool.push_back(i);
  }
  const auto count = std::min<Eigen::Index>(
      static_cast<Eigen::Index>(pool.size()),
      static_cast<Eigen::Index>(std::floor(config.leverage_fraction * static_cast<double>(n) + 1e-9)));

  std::mt19937_64 rng(derive_seed(config.seed, kLeverageStream));
  for (Eigen::Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
  }
  ds.leverage_rows.assign(pool.begin(), pool.begin() + count);
  std::sort(ds.leverage_rows.begin(), ds.leverage_rows.end());

  const Eigen::Index modified = (p - s) / 2;
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(p - s));
  for (Eigen::Index i : ds.leverage_rows) {
    std::iota(cols.begin(), cols.end(), s);
    std::partial_sort(cols.begin(), cols.begin() + modified, cols.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        const double va = std::abs(ds.x(i, a)), vb = std::abs(ds.x(i, b));
                        return va > vb || (va == vb && a < b);
                      });
    for (Eigen::Index k = 0; k < modified; ++k) {
      ds.x(i, cols[static_cast<std::size_t>(k)]) *= config.leverage_multiplier;
    }
  }
  return ds;
}

Eigen::MatrixXd ar1_precision(Eigen::Index p, double correlation) {
  const double r = correlation;
  const double scale = 1 / (1 - r * r);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    out(j, j) = (j == 0 || j == p - 1) ? scale : (1 + r * r) * scale;
    if (j + 1 < p) {
      out(j, j + 1) = -r * scale;
      out(j + 1, j) = -r * scale;
    }
  }
  if (p == 1) out(0, 0) = 1;
  return out;
}

Eigen::VectorXd mahalanobis_sq(const Eigen::MatrixXd& x, const Eigen::MatrixXd& precision) {
  return ((x * precision).array() * x.array()).rowwise().sum();
}

SimulatedDataset apply_contamination(SimulatedDataset ds, const SimulationConfig& config) {
  const Eigen::Index n = ds.x.rows(), p = ds.x.cols();
  const Eigen::Index s = ds.sparsity;
  const Eigen::Index block = contamination_block_size(config);
  const auto n_cols = static_cast<Eigen::Index>(std::floor(std::log2(static_cast<double>(p))));
  require(p - s >= n_cols, "too few zero-coefficient columns for the contamination signals");
  if (block == 0) return ds;

  const Eigen::MatrixXd precision = ar1_precision(p, config.correlation);
  const Eigen::VectorXd dist_sq = mahalanobis_sq(ds.x, precision);
  double clean_max_sq = 0;
  for (Eigen::Index i = 3 * block; i < n; ++i) clean_max_sq = std::max(clean_max_sq, dist_sq[i]);
  const double target_sq = 4 * clean_max_sq;

  for (int l = 0; l < 3; ++l) {
    std::mt19937_64 rng(derive_seed(config.seed, kContaminationStream, static_cast<std::uint64_t>(l)));
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(p - s));
    std::iota(cols.begin(), cols.end(), s);
    std::shuffle(cols.begin(), cols.end(), rng);
    cols.resize(static_cast<std::size_t>(n_cols));
    std::sort(cols.begin(), cols.end());

    std::vector<Eigen::Index> rows(static_cast<std::size_t>(block));
    std::iota(rows.begin(), rows.end(), static_cast<Eigen::Index>(l) * block);

    // d^2(k) = a k^2 + 2 b k + c, splitting each row into its J* part v and the rest u.
    std::vector<double> qa, qb, qc;
    for (Eigen::Index i : rows) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
      for (Eigen::Index j : cols) v[j] = ds.x(i, j);
      const Eigen::VectorXd u = ds.x.row(i).transpose() - v;
      qa.push_back(v.dot(precision * v));
      qb.push_back(u.dot(precision * v));
      qc.push_back(u.dot(precision * u));
    }
    const auto feasible = [&](double k) {
      for (std::size_t m = 0; m < qa.size(); ++m) {
        if (qa[m] * k * k + 2 * qb[m] * k + qc[m] < target_sq) return false;
      }
      return true;
    };
    std::vector<double> candidates{1.0};
    for (std::size_t m = 0; m < qa.size(); ++m) {
      if (!(qa[m] > 0)) continue;
      const double disc = qb[m] * qb[m] - qa[m] * (qc[m] - target_sq);
      if (disc > 0) candidates.push_back((-qb[m] + std::sqrt(disc)) / qa[m]);
    }
    std::sort(candidates.begin(), candidates.end());
    double k_l = candidates.back();
    for (double k : candidates) {
      // Nudge above the root so rounding cannot leave a row short of the target.
      const double bumped = k == 1.0 ? k : k * (1 + 1e-12);
      if (k >= 1 && feasible(bumped)) {
        k_l = bumped;
        break;
      }
    }

    const double k_v = config.signal_values[static_cast<std::size_t>(l)];
    Eigen::VectorXd signal(block);
    for (Eigen::Index m = 0; m < block; ++m) {
      const Eigen::Index i = rows[static_cast<std::size_t>(m)];
      double acc = 0;
      for (Eigen::Index j : cols) {
        ds.x(i, j) *= k_l;
        acc += ds.x(i, j) * k_v;
      }
      signal[m] = acc;
    }
    std::normal_distribution<double> normal;
    const double noise_sd =
        block > 1 ? sample_sd(signal) / std::sqrt(config.contamination_snr) : 0.0;
    for (Eigen::Index m = 0; m < block; ++m) {
      ds.y[rows[static_cast<std::size_t>(m)]] = signal[m] + noise_sd * normal(rng);
    }
    ds.contaminated_rows[static_cast<std::size_t>(l)] = rows;
    ds.contamination_columns[static_cast<std::size_t>(l)] = cols;
    ds.contamination_leverage[static_cast<std::size_t>(l)] = k_l;
  }
  return ds;
}

SimulatedDataset simulate(const SimulationConfig& config) {
  SimulatedDataset ds = gen_clean(config);
  ds = apply_leverage(std::move(ds), config);
  return apply_contamination(std::move(ds), config);
}

Dataset clean_test_draw(const SimulationConfig& config, const SimulatedDataset& ds,
                        Eigen::Index n_test, std::uint64_t seed) {
  Dataset out;
  out.x = draw_t4_design(n_test, ds.beta_true.size(), config.correlation, derive_seed(seed, 1));
  const Eigen::VectorXd raw = draw_errors(config.error_family, n_test, derive_seed(seed, 2));
  out.y = out.x * ds.beta_true + ds.error_multiplier * raw;
  return out;
}

}  // namespace robcv
