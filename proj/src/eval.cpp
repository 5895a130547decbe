#include "offirl/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "offirl/oracle.hpp"

namespace offirl {

double rbf_kernel(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y) {
  if (x.size() != y.size() || x.size() == 0) throw DimensionMismatch("rbf_kernel: dimension mismatch");
  return std::exp(-(x - y).squaredNorm() / static_cast<double>(x.size()));
}

namespace {

// Σ_{i≠j} k(x_i, x_j) via the Gram identity ‖x−y‖² = ‖x‖² + ‖y‖² − 2x·y.
Mat kernel_matrix(const Mat& x, const Mat& y) {
  const Vec nx = x.colwise().squaredNorm().transpose(), ny = y.colwise().squaredNorm().transpose();
  Mat d2 = -2.0 * x.transpose() * y;
  d2.colwise() += nx;
  d2.rowwise() += ny.transpose();
  const double inv_d = 1.0 / static_cast<double>(x.rows());
  return d2.unaryExpr([inv_d](double v) { return std::exp(-std::max(v, 0.0) * inv_d); });
}

}  // namespace

double mmd_unbiased(const Mat& x, const Mat& y) {
  if (x.cols() < 2 || y.cols() < 2) throw InvalidParameter("mmd_unbiased: need at least 2 samples on each side");
  if (x.rows() != y.rows() || x.rows() == 0) throw DimensionMismatch("mmd_unbiased: sample dimensions differ");
  const double n = static_cast<double>(x.cols()), m = static_cast<double>(y.cols());
  const Mat kxx = kernel_matrix(x, x), kyy = kernel_matrix(y, y), kxy = kernel_matrix(x, y);
  // Diagonals are exactly exp(0) = 1 because the clamp zeroes rounding noise.
  const double sxx = kxx.sum() - kxx.diagonal().sum();
  const double syy = kyy.sum() - kyy.diagonal().sum();
  return sxx / (n * (n - 1.0)) + syy / (m * (m - 1.0)) - 2.0 * kxy.sum() / (n * m);
}

double normalized_return(double raw, double random_anchor, double expert_anchor) {
  if (random_anchor == expert_anchor) throw InvalidParameter("normalized_return: anchors must differ");
  return 100.0 * (raw - random_anchor) / (expert_anchor - random_anchor);
}

Mat embed_future_samples(const Environment& env, const std::vector<FutureSample>& xs) {
  const int sf = env.state_features(), af = env.action_features();
  Mat out(2 * sf + af, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    double* col = out.col(static_cast<Eigen::Index>(j)).data();
    env.encode_state(xs[j].cond, col);
    env.encode_state(xs[j].state, col + sf);
    env.encode_action(xs[j].action, col + 2 * sf);
  }
  return out;
}

std::vector<FutureSample> sample_oracle_occupancy(const Environment& env, const TabularPolicy& policy, double gamma,
                                                  const std::vector<Vec>& starts, Rng& rng) {
  const OccupancyTable rho = exact_occupancy(env.finite(), policy, gamma);
  const int na = env.n_actions();
  std::vector<FutureSample> out;
  out.reserve(starts.size());
  for (const Vec& s0 : starts) {
    const Vec row = rho.values.row(as_index(s0)).transpose();
    const auto k = static_cast<int>(categorical(rng, row.data(), static_cast<std::size_t>(row.size())));
    out.push_back({s0, index_vec(k / na), index_vec(k % na)});
  }
  return out;
}

namespace {

// Continuous comparison samples: run π for t ~ Geometric(γ) steps (capped
// at the horizon) from each start and keep (s_t, a_t).
std::vector<FutureSample> sample_onpolicy_occupancy(const Environment& env, const Policy& policy, double gamma,
                                                    const std::vector<Vec>& starts, Rng& rng) {
  std::vector<FutureSample> out;
  out.reserve(starts.size());
  for (const Vec& s0 : starts) {
    Vec s = s0;
    int t = 0;
    while (t < env.horizon() && uniform01(rng) < gamma) {
      s = env.step(s, policy.sample(s, rng), rng);
      ++t;
    }
    out.push_back({s0, s, policy.sample(s, rng)});
  }
  return out;
}

std::vector<Vec> draw_starts(const Environment& env, const std::vector<Vec>& data_states, std::size_t n, Rng& rng) {
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (env.is_finite())
      out.push_back(index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.n_states())))));
    else
      out.push_back(data_states[uniform_index(rng, data_states.size())]);
  }
  return out;
}

}  // namespace

MmdCurveResult mmd_curve_experiment(const Environment& env, const std::vector<PolicyPtr>& policies,
                                    const TrajectoryDataset& dataset, const MmdCurveConfig& config,
                                    std::uint64_t seed) {
  if (policies.empty()) throw InvalidParameter("mmd_curve_experiment: empty policy set");
  if (dataset.empty()) throw EmptyDataset("mmd_curve_experiment: dataset is empty");
  if (config.eval_every <= 0 || config.samples < 2) throw InvalidParameter("mmd_curve_experiment: bad schedule");
  std::vector<Vec> data_states;
  for (const auto& r : dataset.records)
    data_states.push_back(Eigen::Map<const Vec>(r.state.data(), static_cast<Eigen::Index>(r.state.size())));

  const auto n = static_cast<std::size_t>(config.samples);
  MmdCurveResult result;
  for (std::size_t gi = 0; gi < config.gammas.size(); ++gi) {
    const double gamma = config.gammas[gi];
    IdleConfig ic = config.idle;
    ic.gamma = gamma;
    // Rows: checkpoints; columns: policies.
    std::vector<std::vector<double>> per_point;
    double reference = 0.0;
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      const Policy& policy = *policies[pi];
      const std::optional<TabularPolicy> table =
          env.is_finite() ? std::optional<TabularPolicy>(tabulate(env, policy)) : std::nullopt;
      const std::uint64_t run_seed = derive_seed(seed, 1000 * gi + pi);
      auto truth = [&](Rng& rng) {
        const auto starts = draw_starts(env, data_states, n, rng);
        return table ? sample_oracle_occupancy(env, *table, gamma, starts, rng)
                     : sample_onpolicy_occupancy(env, policy, gamma, starts, rng);
      };
      Rng ref_rng = make_rng(run_seed, 7);
      const auto t1 = truth(ref_rng);
      const auto t2 = truth(ref_rng);
      reference += mmd_unbiased(embed_future_samples(env, t1), embed_future_samples(env, t2));

      IdleTrainer trainer(env, ic, run_seed);
      std::size_t point = 0;
      trainer.set_observer(
          [&](int, const EvaluationFunction&, const Generator& g) {
            Rng rng = make_rng(run_seed, 11 + point);
            const auto starts = draw_starts(env, data_states, n, rng);
            const auto fake = g.sample(starts, rng);
            const auto real = truth(rng);
            const double m = mmd_unbiased(embed_future_samples(env, fake), embed_future_samples(env, real));
            if (per_point.size() <= point) per_point.emplace_back();
            per_point[point].push_back(m);
            ++point;
            return m;
          },
          config.eval_every);
      trainer.train(dataset, policy, config.iterations);
    }
    const double k = static_cast<double>(policies.size());
    for (std::size_t p = 0; p < per_point.size(); ++p) {
      const Eigen::Map<const Vec> v(per_point[p].data(), static_cast<Eigen::Index>(per_point[p].size()));
      MmdCurvePoint cp;
      cp.gamma = gamma;
      cp.iteration = static_cast<int>(p) * config.eval_every;
      cp.mmd2 = v.mean();
      cp.stderr_ = v.size() > 1 ? std::sqrt((v.array() - cp.mmd2).square().sum() / (k - 1.0) / k) : 0.0;
      result.points.push_back(cp);
    }
    const double first = result.points[result.points.size() - per_point.size()].mmd2;
    const double last = result.points.back().mmd2;
    result.final_over_initial.emplace_back(gamma, last / first);
    result.reference.emplace_back(gamma, reference / k);
  }
  return result;
}

void write_mmd_curve_csv(const MmdCurveResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(17) << "gamma,iteration,mmd2,stderr\n";
  for (const auto& p : result.points) out << p.gamma << ',' << p.iteration << ',' << p.mmd2 << ',' << p.stderr_ << '\n';
}

}  // namespace offirl
