#include "emenv/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "emenv/inference.hpp"
#include "emenv/parallel.hpp"
#include "emenv/selection.hpp"

namespace emenv {

namespace {

Mat uniform_matrix(Rng& rng, int rows, int cols, double lo, double hi) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = runif(rng, lo, hi);
  }
  return m;
}

Vec normal_vector(Rng& rng, int dim) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rnorm(rng);
  return v;
}

// One draw from the requested error family in `dim` coordinates with the
// family-specific scale parameter.
Vec draw_error_block(Rng& rng, ErrorFamily family, int dim, double scale) {
  switch (family) {
    case ErrorFamily::Normal: {
      return std::sqrt(scale) * normal_vector(rng, dim);
    }
    case ErrorFamily::StudentT5: {
      const Vec z = std::sqrt(scale) * normal_vector(rng, dim);
      const double w = rchisq(rng, 5.0) / 5.0;
      return z / std::sqrt(w);
    }
    case ErrorFamily::Uniform: {
      Vec v(dim);
      for (int i = 0; i < dim; ++i) v(i) = runif(rng, -scale, scale);
      return v;
    }
    case ErrorFamily::Laplace: {
      Vec v(dim);
      for (int i = 0; i < dim; ++i) v(i) = rlaplace(rng, scale);
      return v;
    }
  }
  raise(ErrorCode::InvalidArgument, "unknown error family");
}

// --- MAR mechanisms ---

struct VarRef {
  bool is_x;
  int index;  // 0-based before remapping
  double coef;
};

struct Mechanism {
  bool x_side;
  std::vector<int> targets;  // 0-based variable indices on its side
  std::vector<VarRef> terms;
  double intercept = 0.0;  // calibrated
};

// The verbatim mechanism set, remapped modulo the available dimensions.
// Conditioning terms that collide with a target of the same mechanism are
// dropped so that missingness never depends on a deleted value.
std::vector<Mechanism> build_mechanisms(int p, int r) {
  if (p < 1 || r < 1) {
    raise(ErrorCode::DimensionTooSmallForMechanism, "mechanisms need p >= 1 and r >= 1");
  }
  struct Raw {
    bool x_side;
    std::vector<int> targets;
    std::vector<VarRef> terms;
  };
  const std::vector<Raw> raw = {
      {true, {3}, {{true, 0, -1}, {true, 1, -2}, {true, 2, -3}}},
      {true, {2}, {{true, 0, -1}, {true, 3, -2}}},
      {true, {4}, {{true, 0, -1}}},
      {false, {1, 3}, {{true, 0, -1}, {false, 7, -1}, {false, 8, -3}}},
      {false, {2}, {{true, 1, -1}, {false, 3, -3}, {false, 5, -1}}},
      {false, {6, 7, 8}, {{false, 0, -2}, {false, 1, -1}, {false, 2, -3}}},
      {false, {0, 9}, {{true, 0, -1}, {true, 1, -1}}},
      {false, {4, 5}, {{true, 0, -1}, {true, 1, -1}, {false, 0, -1}, {false, 9, -1}}},
  };

  std::vector<Mechanism> out;
  for (const Raw& m : raw) {
    Mechanism mech;
    mech.x_side = m.x_side;
    const int side_dim = m.x_side ? p : r;
    for (int t : m.targets) {
      const int mapped = t % side_dim;
      if (std::find(mech.targets.begin(), mech.targets.end(), mapped) ==
          mech.targets.end()) {
        mech.targets.push_back(mapped);
      }
    }
    for (VarRef term : m.terms) {
      term.index = term.index % (term.is_x ? p : r);
      const bool hits_own_target =
          term.is_x == mech.x_side &&
          std::find(mech.targets.begin(), mech.targets.end(), term.index) !=
              mech.targets.end();
      if (!hits_own_target) mech.terms.push_back(term);
    }
    out.push_back(std::move(mech));
  }
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Vec mechanism_slopes(const Mechanism& mech, const Mat& x, const Mat& y) {
  Vec s = Vec::Zero(x.rows());
  for (const VarRef& term : mech.terms) {
    s += term.coef * (term.is_x ? x.col(term.index) : y.col(term.index));
  }
  return s;
}

// Intercept such that mean sigmoid(a + s_i) hits `target` (bisection on a
// monotone function).
double calibrate_intercept(const Vec& slopes, double target) {
  target = std::clamp(target, 1e-6, 0.95);
  const double spread = slopes.size() > 0 ? slopes.cwiseAbs().maxCoeff() : 0.0;
  double lo = -spread - 60.0;
  double hi = spread + 60.0;
  auto mean_rate = [&](double a) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < slopes.size(); ++i) acc += sigmoid(a + slopes(i));
    return acc / static_cast<double>(slopes.size());
  };
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mean_rate(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::EmEnvelope: return "em-envelope";
    case Estimator::CcEnvelope: return "cc-envelope";
    case Estimator::FullEnvelope: return "full-envelope";
    case Estimator::EmStandard: return "em-standard";
    case Estimator::CcStandard: return "cc-standard";
    case Estimator::FullStandard: return "full-mle";
  }
  return "unknown";
}

ScenarioParams gen_parameters(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.u < 0 || spec.u > spec.r) {
    raise(ErrorCode::InvalidArgument, "scenario requires 0 <= u <= r");
  }
  Rng rng = make_rng(seed, 0);
  ScenarioParams params;

  const Mat gamma_tilde = uniform_matrix(rng, spec.r, spec.u, 0.0, 1.0);
  params.gamma = spec.u > 0 ? mk::qr_orthonormalize(gamma_tilde) : Mat(spec.r, 0);
  params.gamma0 = mk::orth_complete(params.gamma);

  const Mat beta_tilde = uniform_matrix(rng, spec.r, spec.p, -10.0, 10.0);
  params.beta = params.gamma * (params.gamma.transpose() * beta_tilde);

  const Mat n_mat = uniform_matrix(rng, spec.p, spec.p, -10.0, 10.0);
  params.sigma_x = n_mat * n_mat.transpose();
  params.mu_x = uniform_matrix(rng, spec.p, 1, -10.0, 10.0).col(0);
  params.pi = spec.two_point_pi;

  params.sigma_eps = spec.omega_scale * params.gamma * params.gamma.transpose() +
                     spec.omega0_scale * params.gamma0 * params.gamma0.transpose();
  return params;
}

FullData gen_full_data(const ScenarioParams& params, const ScenarioSpec& spec,
                       std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  const int n = spec.n;
  const int r = spec.r;
  const int p = spec.p;
  const int u = spec.u;

  FullData data;
  data.x = Mat(n, p);
  data.y = Mat(n, r);

  Mat chol_x;
  if (spec.predictor_family != PredictorGenFamily::TwoPoint) {
    Eigen::LLT<Mat> llt(params.sigma_x);
    if (llt.info() != Eigen::Success) {
      raise(ErrorCode::NotPD, "sigma_x is not positive definite");
    }
    chol_x = llt.matrixL();
  }

  for (int i = 0; i < n; ++i) {
    Vec xi(p);
    switch (spec.predictor_family) {
      case PredictorGenFamily::Normal:
        xi = params.mu_x + chol_x * normal_vector(rng, p);
        break;
      case PredictorGenFamily::TwoPoint:
        for (int j = 0; j < p; ++j) {
          xi(j) = rbernoulli(rng, params.pi) ? spec.two_point_scale : 0.0;
        }
        break;
      case PredictorGenFamily::StudentT5: {
        const Vec z = chol_x * normal_vector(rng, p);
        const double w = rchisq(rng, 5.0) / 5.0;
        xi = z / std::sqrt(w);
        break;
      }
    }
    const Vec eps1 = draw_error_block(rng, spec.error_family, u, spec.omega_scale);
    const Vec eps2 = draw_error_block(rng, spec.error_family, r - u, spec.omega0_scale);
    const Vec eps = params.gamma * eps1 + params.gamma0 * eps2;
    data.x.row(i) = xi.transpose();
    data.y.row(i) = (params.beta * xi + eps).transpose();
  }
  return data;
}

MissingnessMask gen_missingness(const Mat& x, const Mat& y, const ScenarioSpec& spec,
                                std::uint64_t seed) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  const int r = static_cast<int>(y.cols());

  MissingnessMask mask;
  mask.x_observed = ObservedDataset::BoolMat::Constant(n, p, true);
  mask.y_observed = ObservedDataset::BoolMat::Constant(n, r, true);
  if (spec.disable_missingness) return mask;

  std::vector<Mechanism> mechanisms = build_mechanisms(p, r);
  std::vector<int> x_mechs, y_mechs;
  for (int m = 0; m < static_cast<int>(mechanisms.size()); ++m) {
    (mechanisms[m].x_side ? x_mechs : y_mechs).push_back(m);
  }

  // Calibrate each mechanism so the targeted variables hit the marginal
  // rates; a mechanism fires with probability 1 / (#mechanisms on its side).
  for (Mechanism& mech : mechanisms) {
    const double per_side = mech.x_side ? static_cast<double>(x_mechs.size())
                                        : static_cast<double>(y_mechs.size());
    const double target =
        (mech.x_side ? spec.target_missing_x : spec.target_missing_y) * per_side;
    mech.intercept = calibrate_intercept(mechanism_slopes(mech, x, y), target);
  }

  Rng rng = make_rng(seed, 2);
  for (int i = 0; i < n; ++i) {
    const int mx = x_mechs[static_cast<int>(runif(rng) * x_mechs.size()) % x_mechs.size()];
    const int my = y_mechs[static_cast<int>(runif(rng) * y_mechs.size()) % y_mechs.size()];

    // Conditioning variables of the chosen mechanisms stay observed.
    auto protected_var = [&](bool is_x, int idx) {
      for (int m : {mx, my}) {
        for (const VarRef& term : mechanisms[m].terms) {
          if (term.is_x == is_x && term.index == idx) return true;
        }
      }
      return false;
    };

    for (int m : {mx, my}) {
      const Mechanism& mech = mechanisms[m];
      double z = mech.intercept;
      for (const VarRef& term : mech.terms) {
        z += term.coef * (term.is_x ? x(i, term.index) : y(i, term.index));
      }
      const double p_miss = sigmoid(z);
      for (int t : mech.targets) {
        const bool fire = runif(rng) < p_miss;
        if (!fire) continue;
        if (protected_var(mech.x_side, t)) continue;
        if (mech.x_side) {
          mask.x_observed(i, t) = false;
        } else {
          mask.y_observed(i, t) = false;
        }
      }
    }
  }
  return mask;
}

namespace {

EstimatorSummary summarize(const std::string& name, const std::vector<double>& mse,
                           int failures) {
  EstimatorSummary s;
  s.name = name;
  s.mse = mse;
  s.failures = failures;
  if (mse.empty()) {
    s.min = s.q1 = s.median = s.mean = s.q3 = s.max =
        std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.min = *std::min_element(mse.begin(), mse.end());
  s.max = *std::max_element(mse.begin(), mse.end());
  s.q1 = sample_quantile(mse, 0.25);
  s.median = sample_quantile(mse, 0.5);
  s.q3 = sample_quantile(mse, 0.75);
  s.mean = std::accumulate(mse.begin(), mse.end(), 0.0) / mse.size();
  return s;
}

}  // namespace

MseSummary run_scenario(const ScenarioSpec& spec, int threads) {
  const ScenarioParams params = gen_parameters(spec, spec.seed);
  const int reps = spec.reps;
  const double denom = static_cast<double>(spec.r) * spec.p;

  constexpr int kNumEstimators = 6;
  // replicate-major storage; NaN marks failure
  std::vector<std::array<double, kNumEstimators>> mse(reps);
  std::vector<int> chosen(reps, spec.u);

  EmOptions base;
  base.tol = spec.tol;
  base.max_iter = spec.max_iter;
  base.track_loglik = false;
  if (spec.predictor_family == PredictorGenFamily::TwoPoint) {
    base.model.family = PredictorFamily::TwoPoint;
    base.model.scale = spec.two_point_scale;
  }

  parallel_for(reps, threads, [&](int k) {
    mse[k].fill(std::numeric_limits<double>::quiet_NaN());
    const FullData data =
        gen_full_data(params, spec, derive_seed(spec.seed, 2 * k + 1));
    const MissingnessMask mask =
        gen_missingness(data.x, data.y, spec, derive_seed(spec.seed, 2 * k + 2));

    auto record = [&](Estimator which, const Mat& beta_hat) {
      mse[k][static_cast<int>(which)] =
          (beta_hat - params.beta).squaredNorm() / denom;
    };

    std::optional<ObservedDataset> ds;
    try {
      ds.emplace(data.x, data.y, mask.x_observed, mask.y_observed);
    } catch (const Error&) {
      return;  // degenerate mask; the whole replicate is recorded as failed
    }

    int u_env = spec.u;
    try {
      if (spec.u_selection == ScenarioSpec::USelection::BicQ) {
        u_env = select_u_bic(*ds, base).chosen_u;
      } else if (spec.u_selection == ScenarioSpec::USelection::Bootstrap) {
        u_env = select_u_bootstrap(*ds, base, spec.bootstrap_b, 0.95,
                                   derive_seed(spec.seed, 3 * k + 7))
                    .chosen_u;
      }
    } catch (const Error&) {
      // selection failure: keep the true u so the fits can still run
    }
    chosen[k] = u_env;

    EmOptions env_opts = base;
    env_opts.u = u_env;

    try {
      record(Estimator::EmEnvelope, em_envelope_fit(*ds, env_opts).beta);
    } catch (const Error&) {}
    try {
      record(Estimator::EmStandard, em_standard_fit(*ds, base).beta);
    } catch (const Error&) {}
    try {
      record(Estimator::CcEnvelope, complete_case_fit(*ds, env_opts, true).beta);
    } catch (const Error&) {}
    try {
      record(Estimator::CcStandard, complete_case_fit(*ds, base, false).beta);
    } catch (const Error&) {}
    try {
      record(Estimator::FullEnvelope,
             full_data_fit(data.x, data.y, u_env, true, env_opts).beta);
    } catch (const Error&) {}
    try {
      record(Estimator::FullStandard,
             full_data_fit(data.x, data.y, spec.r, false, base).beta);
    } catch (const Error&) {}
  });

  MseSummary summary;
  summary.reps = reps;
  summary.chosen_u = chosen;
  for (Estimator e : kAllEstimators) {
    std::vector<double> ok;
    int failures = 0;
    for (int k = 0; k < reps; ++k) {
      const double v = mse[k][static_cast<int>(e)];
      if (std::isfinite(v)) {
        ok.push_back(v);
      } else {
        ++failures;
      }
    }
    summary.estimators.push_back(summarize(estimator_name(e), ok, failures));
  }
  return summary;
}

std::vector<std::string> scenario_names() {
  return {"normal-omega0-1000", "normal-omega0-10", "t-bernoulli",
          "t-t",                "uniform-t",        "laplace-t"};
}

std::optional<ScenarioSpec> scenario_by_name(const std::string& name) {
  ScenarioSpec spec;
  if (name == "normal-omega0-1000") {
    spec.n = 500; spec.r = 20; spec.p = 5; spec.u = 3;
    spec.omega_scale = 0.1; spec.omega0_scale = 1000.0;
    spec.reps = 1000;
    return spec;
  }
  if (name == "normal-omega0-10") {
    spec.n = 500; spec.r = 20; spec.p = 5; spec.u = 3;
    spec.omega_scale = 0.1; spec.omega0_scale = 10.0;
    spec.reps = 1000;
    return spec;
  }
  if (name == "t-bernoulli") {
    spec.n = 500; spec.r = 10; spec.p = 1; spec.u = 2;
    spec.error_family = ErrorFamily::StudentT5;
    spec.predictor_family = PredictorGenFamily::TwoPoint;
    spec.omega_scale = 1.0; spec.omega0_scale = 1000.0;
    spec.reps = 1000;
    return spec;
  }
  if (name == "t-t") {
    spec.n = 500; spec.r = 10; spec.p = 5; spec.u = 2;
    spec.error_family = ErrorFamily::StudentT5;
    spec.predictor_family = PredictorGenFamily::StudentT5;
    spec.omega_scale = 1.0; spec.omega0_scale = 1000.0;
    spec.reps = 1000;
    return spec;
  }
  if (name == "uniform-t") {
    spec.n = 500; spec.r = 10; spec.p = 5; spec.u = 2;
    spec.error_family = ErrorFamily::Uniform;
    spec.predictor_family = PredictorGenFamily::StudentT5;
    spec.omega_scale = 1.0; spec.omega0_scale = 10.0;
    spec.reps = 1000;
    return spec;
  }
  if (name == "laplace-t") {
    spec.n = 500; spec.r = 10; spec.p = 5; spec.u = 2;
    spec.error_family = ErrorFamily::Laplace;
    spec.predictor_family = PredictorGenFamily::StudentT5;
    spec.omega_scale = 1.0; spec.omega0_scale = 20.0;
    spec.reps = 1000;
    return spec;
  }
  return std::nullopt;
}

std::string format_mse_table(const MseSummary& summary) {
  std::string out = "estimator,min,q1,median,mean,q3,max,failures\n";
  char buf[256];
  for (const EstimatorSummary& s : summary.estimators) {
    std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                  s.name.c_str(), s.min, s.q1, s.median, s.mean, s.q3, s.max,
                  s.failures);
    out += buf;
  }
  return out;
}

}  // namespace emenv
