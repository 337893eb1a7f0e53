#include "mcpq/oracles.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "mcpq/errors.hpp"
#include "mcpq/random.hpp"

namespace mcpq::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd dominant_eigenvector(const MatrixXd& column_stochastic) {
  Eigen::EigenSolver<MatrixXd> es(column_stochastic);
  Eigen::Index best = 0;
  (es.eigenvalues().array() - 1.0).abs().minCoeff(&best);
  VectorXd v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

VectorXd neumann_series(const VectorXd& mu, const MatrixXd& reversal, double gamma, int terms) {
  VectorXd total = VectorXd::Zero(mu.size());
  VectorXd term = mu;
  for (int k = 0; k < terms; ++k) {
    total += term;
    term = gamma * (reversal * term);
  }
  return total;
}

VectorXd discounted_occupancy(const DiscreteMDP& mdp, const TabularPolicy& policy, int terms) {
  const int ns = mdp.num_states();
  const int na = mdp.num_actions();
  VectorXd state = mdp.initial();
  VectorXd total = VectorXd::Zero(ns * na);
  double weight = 1.0;
  for (int t = 0; t < terms; ++t) {
    VectorXd next = VectorXd::Zero(ns);
    for (int s = 0; s < ns; ++s)
      for (int a = 0; a < na; ++a) {
        const double p = state(s) * policy(s, a);
        total(s * na + a) += weight * p;
        for (int s2 = 0; s2 < ns; ++s2) next(s2) += p * mdp.transition(s, a, s2);
      }
    state = next;
    weight *= mdp.discount();
  }
  return total;
}

std::pair<VectorXd, VectorXd> gauss_hermite(int n) {
  if (n < 1) throw InputError("nodes", "need at least one node");
  MatrixXd jacobi = MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(jacobi);
  VectorXd weights = es.eigenvectors().row(0).transpose().array().square();
  return {es.eigenvalues(), weights / weights.sum()};
}

GaussianMoments TrajectoryMap::slices(const std::vector<int>& times) const {
  const auto k = static_cast<Eigen::Index>(times.size());
  MatrixXd rows(k * dim, factor.cols());
  VectorXd m(k * dim);
  for (Eigen::Index i = 0; i < k; ++i) {
    const int t = times[static_cast<std::size_t>(i)];
    if (t < 1 || t > horizon) throw InputError("t", "slice outside the trajectory");
    rows.middleRows(i * dim, dim) = factor.middleRows((t - 1) * dim, dim);
    m.segment(i * dim, dim) = mean.segment((t - 1) * dim, dim);
  }
  return {m, rows * rows.transpose()};
}

TrajectoryMap trajectory_map(const LinearGaussianMDP& model, const GaussianPolicy& policy, int horizon) {
  policy.validate(model);
  const int ns = model.state_dim();
  const int na = model.action_dim();
  const int d = ns + na;
  const int noise = d * horizon;
  const MatrixXd chol0 = model.sigma0().llt().matrixL();
  const MatrixXd chol = model.sigma().llt().matrixL();
  const double action_sd = std::sqrt(policy.variance);

  TrajectoryMap map;
  map.dim = d;
  map.horizon = horizon;
  map.mean = VectorXd::Zero(d * horizon);
  map.factor = MatrixXd::Zero(d * horizon, noise);

  // Affine form of the current state: s = s_mean + s_factor * eps.
  VectorXd s_mean = model.mu0();
  MatrixXd s_factor = MatrixXd::Zero(ns, noise);
  s_factor.leftCols(ns) = chol0;
  for (int t = 0; t < horizon; ++t) {
    VectorXd a_mean = policy.gain * s_mean + policy.offset;
    MatrixXd a_factor = policy.gain * s_factor;
    a_factor.middleCols(t * d + ns, na) += action_sd * MatrixXd::Identity(na, na);
    map.mean.segment(t * d, ns) = s_mean;
    map.mean.segment(t * d + ns, na) = a_mean;
    map.factor.middleRows(t * d, ns) = s_factor;
    map.factor.middleRows(t * d + ns, na) = a_factor;
    if (t + 1 < horizon) {
      VectorXd next_mean = model.a() * s_mean + model.b() * a_mean;
      MatrixXd next_factor = model.a() * s_factor + model.b() * a_factor;
      next_factor.middleCols((t + 1) * d, ns) += chol;
      s_mean = std::move(next_mean);
      s_factor = std::move(next_factor);
    }
  }
  return map;
}

namespace {

struct RewardEval {
  const MixtureReward& reward;
  std::vector<MatrixXd> precision;

  explicit RewardEval(const MixtureReward& r) : reward(r) {
    for (const auto& c : r.components) precision.push_back(c.cov.inverse());
  }
  double operator()(const VectorXd& z) const {
    const VectorXd mz = reward.projection * z;
    double total = 0.0;
    for (std::size_t j = 0; j < precision.size(); ++j) {
      const VectorXd r = reward.components[j].target - mz;
      total += reward.components[j].weight * std::exp(-0.5 * r.dot(precision[j] * r));
    }
    return total;
  }
};

// Visits every tensor-product node of a Gaussian with the given moments.
template <class Fn>
void for_each_node(const GaussianMoments& g, const VectorXd& nodes, const VectorXd& weights, Fn&& fn) {
  const auto dim = g.mean.size();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g.cov);
  const MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const auto n = nodes.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(dim), 0);
  VectorXd xi(dim);
  while (true) {
    double w = 1.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      xi(k) = nodes(idx[static_cast<std::size_t>(k)]);
      w *= weights(idx[static_cast<std::size_t>(k)]);
    }
    fn(VectorXd(g.mean + root * xi), w);
    Eigen::Index k = 0;
    while (k < dim && ++idx[static_cast<std::size_t>(k)] == n) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == dim) break;
  }
}

ReferenceQMoments finish(std::vector<double> mass, std::vector<VectorXd> first, std::vector<MatrixXd> second,
                         double utility) {
  ReferenceQMoments out;
  if (!(utility > 0.0)) throw ZeroUtilityError("reference utility is zero");
  out.log_utility = std::log(utility);
  for (std::size_t i = 0; i < mass.size(); ++i) {
    out.tail.push_back(mass[i] / utility);
    out.first.push_back(first[i] / utility);
    out.second.push_back(second[i] / utility);
  }
  return out;
}

}  // namespace

ReferenceQMoments quadrature_q_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                       const MixtureReward& reward, int horizon, int nodes) {
  const TrajectoryMap map = trajectory_map(model, policy, horizon);
  const RewardEval r(reward);
  const auto [x, w] = gauss_hermite(nodes);
  const int d = map.dim;
  const auto h = static_cast<std::size_t>(horizon);
  std::vector<double> mass(h, 0.0);
  std::vector<VectorXd> first(h, VectorXd::Zero(d));
  std::vector<MatrixXd> second(h, MatrixXd::Zero(d, d));
  double utility = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const double disc = std::pow(model.discount(), t - 1);
    for (int tau = 1; tau <= t; ++tau) {
      double m0 = 0.0;
      VectorXd m1 = VectorXd::Zero(d);
      MatrixXd m2 = MatrixXd::Zero(d, d);
      if (tau == t) {
        for_each_node(map.slices({t}), x, w, [&](const VectorXd& z, double wt) {
          const double v = wt * r(z);
          m0 += v;
          m1 += v * z;
          m2 += v * z * z.transpose();
        });
        utility += disc * m0;
      } else {
        for_each_node(map.slices({tau, t}), x, w, [&](const VectorXd& zz, double wt) {
          const double v = wt * r(zz.tail(d));
          const auto z = zz.head(d);
          m0 += v;
          m1 += v * z;
          m2 += v * z * z.transpose();
        });
      }
      const auto i = static_cast<std::size_t>(tau - 1);
      mass[i] += disc * m0;
      first[i] += disc * m1;
      second[i] += disc * m2;
    }
  }
  return finish(std::move(mass), std::move(first), std::move(second), utility);
}

ReferenceQMoments joint_gaussian_q_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                           const MixtureReward& reward, int horizon) {
  const TrajectoryMap map = trajectory_map(model, policy, horizon);
  const int d = map.dim;
  const auto h = static_cast<std::size_t>(horizon);
  const MatrixXd cov = map.factor * map.factor.transpose();
  std::vector<double> mass(h, 0.0);
  std::vector<VectorXd> first(h, VectorXd::Zero(d));
  std::vector<MatrixXd> second(h, MatrixXd::Zero(d, d));
  double utility = 0.0;
  const MatrixXd& proj = reward.projection;
  for (int t = 1; t <= horizon; ++t) {
    const double disc = std::pow(model.discount(), t - 1);
    const Eigen::Index len = static_cast<Eigen::Index>(t) * d;
    const Eigen::Index at = (t - 1) * d;
    // Observation operator picking M z_t out of the stacked z_{1:t}.
    MatrixXd obs = MatrixXd::Zero(proj.rows(), len);
    obs.middleCols(at, d) = proj;
    const MatrixXd c = cov.topLeftCorner(len, len);
    const VectorXd mu = map.mean.head(len);
    for (const auto& comp : reward.components) {
      const MatrixXd s = comp.cov + obs * c * obs.transpose();
      const VectorXd resid = comp.target - obs * mu;
      const double factor = comp.weight * std::sqrt(comp.cov.determinant() / s.determinant()) *
                            std::exp(-0.5 * resid.dot(s.inverse() * resid));
      const MatrixXd gain = c * obs.transpose() * s.inverse();
      const VectorXd post_mean = mu + gain * resid;
      const MatrixXd post_cov = c - gain * s * gain.transpose();
      utility += disc * factor;
      for (int tau = 1; tau <= t; ++tau) {
        const auto i = static_cast<std::size_t>(tau - 1);
        const VectorXd m = post_mean.segment((tau - 1) * d, d);
        const MatrixXd v = post_cov.block((tau - 1) * d, (tau - 1) * d, d, d);
        mass[i] += disc * factor;
        first[i] += disc * factor * m;
        second[i] += disc * factor * (v + m * m.transpose());
      }
    }
  }
  return finish(std::move(mass), std::move(first), std::move(second), utility);
}

MonteCarloQMoments monte_carlo_q_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                         const MixtureReward& reward, int horizon, std::int64_t samples,
                                         std::uint64_t seed) {
  policy.validate(model);
  if (samples < 2) throw InputError("samples", "need at least two samples");
  const int ns = model.state_dim();
  const int na = model.action_dim();
  const int d = ns + na;
  const auto h = static_cast<std::size_t>(horizon);
  const MatrixXd chol0 = model.sigma0().llt().matrixL();
  const MatrixXd chol = model.sigma().llt().matrixL();
  const double action_sd = std::sqrt(policy.variance);
  const RewardEval r(reward);
  Rng rng(seed);

  std::vector<double> disc(h);
  for (std::size_t t = 0; t < h; ++t) disc[t] = std::pow(model.discount(), static_cast<double>(t));

  // Running sums of X and X^2 per tau.
  std::vector<VectorXd> s1(h, VectorXd::Zero(d)), q1(h, VectorXd::Zero(d));
  std::vector<MatrixXd> s2(h, MatrixXd::Zero(d, d)), q2(h, MatrixXd::Zero(d, d));
  double su = 0.0, qu = 0.0, sm = 0.0, qm = 0.0;
  VectorXd sa1 = VectorXd::Zero(d), qa1 = VectorXd::Zero(d);
  MatrixXd sa2 = MatrixXd::Zero(d, d), qa2 = MatrixXd::Zero(d, d);

  std::vector<VectorXd> z(h, VectorXd(d));
  std::vector<double> suffix(h + 1, 0.0);
  VectorXd eps_s(ns), eps_a(na), s(ns), a(na);
  VectorXd agg1(d);
  MatrixXd agg2(d, d), outer(d, d);
  for (std::int64_t n = 0; n < samples; ++n) {
    for (int i = 0; i < ns; ++i) eps_s(i) = rng.normal();
    s = model.mu0() + chol0 * eps_s;
    std::vector<double> rew(h);
    for (std::size_t t = 0; t < h; ++t) {
      for (int i = 0; i < na; ++i) eps_a(i) = rng.normal();
      a = policy.gain * s + policy.offset + action_sd * eps_a;
      z[t] << s, a;
      rew[t] = disc[t] * r(z[t]);
      if (t + 1 < h) {
        for (int i = 0; i < ns; ++i) eps_s(i) = rng.normal();
        s = model.a() * s + model.b() * a + chol * eps_s;
      }
    }
    suffix[h] = 0.0;
    for (std::size_t t = h; t-- > 0;) suffix[t] = suffix[t + 1] + rew[t];
    su += suffix[0];
    qu += suffix[0] * suffix[0];
    double agg0 = 0.0;
    agg1.setZero();
    agg2.setZero();
    for (std::size_t t = 0; t < h; ++t) {
      const double v = suffix[t];
      outer.noalias() = z[t] * z[t].transpose();
      const VectorXd x1 = v * z[t];
      s1[t] += x1;
      q1[t] += x1.cwiseProduct(x1);
      s2[t] += v * outer;
      q2[t] += (v * v) * outer.cwiseProduct(outer);
      agg0 += v;
      agg1 += x1;
      agg2 += v * outer;
    }
    sm += agg0;
    qm += agg0 * agg0;
    sa1 += agg1;
    qa1 += agg1.cwiseProduct(agg1);
    sa2 += agg2;
    qa2 += agg2.cwiseProduct(agg2);
  }

  const double nn = static_cast<double>(samples);
  auto se = [nn](auto mean_sum, auto sq_sum) {
    using T = decltype(mean_sum);
    const T mean = mean_sum / nn;
    T var = sq_sum / nn - T(mean.cwiseProduct(mean));
    var = var.cwiseMax(0.0);
    return T((var * (nn / (nn - 1.0)) / nn).cwiseSqrt());
  };
  MonteCarloQMoments out;
  out.samples = samples;
  out.utility = su / nn;
  out.utility_se = std::sqrt(std::max(0.0, qu / nn - out.utility * out.utility) / (nn - 1.0));
  for (std::size_t t = 0; t < h; ++t) {
    out.first.push_back(s1[t] / nn);
    out.first_se.push_back(se(s1[t], q1[t]));
    out.second.push_back(s2[t] / nn);
    out.second_se.push_back(se(s2[t], q2[t]));
  }
  out.aggregate_mass = sm / nn;
  out.aggregate_mass_se = std::sqrt(std::max(0.0, qm / nn - out.aggregate_mass * out.aggregate_mass) / (nn - 1.0));
  out.aggregate_first = sa1 / nn;
  out.aggregate_first_se = se(sa1, qa1);
  out.aggregate_second = sa2 / nn;
  out.aggregate_second_se = se(sa2, qa2);
  return out;
}

}  // namespace mcpq::oracle
