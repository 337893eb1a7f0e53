#include "mcpq/continuous.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mcpq/errors.hpp"

namespace mcpq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_spd(const MatrixXd& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if ((m - m.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, m.lpNorm<Eigen::Infinity>()))
    return false;
  return Eigen::LLT<MatrixXd>(m).info() == Eigen::Success;
}

void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const char* field) {
  if (m.rows() != rows || m.cols() != cols)
    throw InputError(field, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  if (!m.allFinite()) throw InputError(field, "entries must be finite");
}

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

void check_psd(const MatrixXd& cov, int t) {
  const double floor = -1e-8 * std::max(1.0, cov.lpNorm<Eigen::Infinity>());
  const double smallest = Eigen::SelfAdjointEigenSolver<MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (smallest < floor)
    throw NumericalError("forward covariance at t=" + std::to_string(t) + " lost positive semidefiniteness (min eigenvalue " +
                         std::to_string(smallest) + ")");
}

double log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double log_sum_exp(const std::vector<double>& xs) {
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// log gamma^{t-1} c_t for t = 1..H.
std::vector<double> log_terms(const std::vector<RewardMoments>& reward, double gamma) {
  std::vector<double> out(reward.size());
  const double log_gamma = gamma > 0.0 ? std::log(gamma) : kNegInf;
  for (std::size_t i = 0; i < reward.size(); ++i)
    out[i] = (i == 0 ? 0.0 : static_cast<double>(i) * log_gamma) + reward[i].log_mass;
  return out;
}

struct Prepared {
  LiftedDynamics lifted;
  std::vector<GaussianMoments> alpha;
  std::vector<RewardMoments> reward;
  std::vector<double> weight;
  double log_utility = 0.0;
};

Prepared prepare(const LinearGaussianMDP& model, const GaussianPolicy& policy, const MixtureReward& reward,
                 int horizon, OpCounter* ops) {
  if (horizon < 1) throw InputError("H", "horizon must be at least 1");
  reward.validate(model.joint_dim());
  Prepared p;
  p.lifted = lift(model, policy);
  p.alpha = forward_moments(model, policy, horizon);
  p.reward.reserve(p.alpha.size());
  for (const auto& a : p.alpha) {
    p.reward.push_back(reward_component_moments(a, reward));
    if (ops) ++ops->conditioning;
  }
  const auto terms = log_terms(p.reward, model.discount());
  p.log_utility = log_sum_exp(terms);
  if (!std::isfinite(p.log_utility)) throw ZeroUtilityError("reward mass underflowed for every horizon component");
  p.weight.resize(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) p.weight[i] = std::exp(terms[i] - p.log_utility);
  return p;
}

QMoments empty_moments(const Prepared& p, int dim) {
  QMoments q;
  const std::size_t h = p.weight.size();
  q.weight = p.weight;
  q.tail.assign(h, 0.0);
  double acc = 0.0;
  for (std::size_t i = h; i-- > 0;) {
    acc += p.weight[i];
    q.tail[i] = acc;
  }
  q.first.assign(h, VectorXd::Zero(dim));
  q.second.assign(h, MatrixXd::Zero(dim, dim));
  q.reward = p.reward;
  q.log_utility = p.log_utility;
  return q;
}

}  // namespace

LinearGaussianMDP::LinearGaussianMDP(VectorXd mu0, MatrixXd sigma0, MatrixXd a, MatrixXd b, MatrixXd sigma,
                                     double discount)
    : mu0_(std::move(mu0)),
      sigma0_(std::move(sigma0)),
      a_(std::move(a)),
      b_(std::move(b)),
      sigma_(std::move(sigma)),
      discount_(discount) {
  const auto ns = mu0_.size();
  if (ns < 1) throw InputError("n_s", "state dimension must be positive");
  if (!mu0_.allFinite()) throw InputError("mu0", "entries must be finite");
  require_shape(sigma0_, ns, ns, "Sigma0");
  require_shape(a_, ns, ns, "A");
  if (b_.cols() < 1) throw InputError("n_a", "action dimension must be positive");
  require_shape(b_, ns, b_.cols(), "B");
  require_shape(sigma_, ns, ns, "Sigma");
  if (!is_spd(sigma0_)) throw InputError("Sigma0", "must be symmetric positive definite");
  if (!is_spd(sigma_)) throw InputError("Sigma", "must be symmetric positive definite");
  if (!(discount_ >= 0.0 && discount_ <= 1.0)) throw InputError("gamma", "must lie in [0, 1]");
}

void GaussianPolicy::validate(const LinearGaussianMDP& model) const {
  require_shape(gain, model.action_dim(), model.state_dim(), "policy.K");
  if (offset.size() != model.action_dim() || !offset.allFinite())
    throw InputError("policy.m", "expected a finite vector of length n_a");
  if (!(variance > 0.0) || !std::isfinite(variance)) throw InputError("policy.pi_sigma", "must be positive");
}

void MixtureReward::validate(int joint_dim) const {
  if (components.empty()) throw InputError("reward.components", "at least one component is required");
  if (projection.cols() != joint_dim || projection.rows() < 1 || !projection.allFinite())
    throw InputError("reward.M", "expected a finite matrix with n_s + n_a columns");
  const auto k = projection.rows();
  for (std::size_t j = 0; j < components.size(); ++j) {
    const auto& c = components[j];
    const std::string field = "reward.components[" + std::to_string(j) + "]";
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw InputError(field + ".w", "must be positive");
    if (c.target.size() != k || !c.target.allFinite()) throw InputError(field + ".y", "length must match rows of M");
    require_shape(c.cov, k, k, (field + ".L").c_str());
    if (!is_spd(c.cov)) throw InputError(field + ".L", "must be symmetric positive definite");
  }
}

double MixtureReward::operator()(const VectorXd& z) const {
  const VectorXd mz = projection * z;
  double total = 0.0;
  for (const auto& c : components) {
    const VectorXd r = c.target - mz;
    total += c.weight * std::exp(-0.5 * r.dot(c.cov.llt().solve(r)));
  }
  return total;
}

LiftedDynamics lift(const LinearGaussianMDP& model, const GaussianPolicy& policy) {
  policy.validate(model);
  const int ns = model.state_dim();
  const int na = model.action_dim();
  const MatrixXd& k = policy.gain;
  LiftedDynamics out;
  out.transition.resize(ns + na, ns + na);
  out.transition << model.a(), model.b(), k * model.a(), k * model.b();
  out.offset = VectorXd::Zero(ns + na);
  out.offset.tail(na) = policy.offset;
  out.noise.resize(ns + na, ns + na);
  const MatrixXd sk = model.sigma() * k.transpose();
  out.noise << model.sigma(), sk, sk.transpose(),
      k * sk + policy.variance * MatrixXd::Identity(na, na);
  out.noise = symmetrized(out.noise);
  return out;
}

GaussianMoments initial_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy) {
  policy.validate(model);
  const int ns = model.state_dim();
  const int na = model.action_dim();
  const MatrixXd& k = policy.gain;
  GaussianMoments out;
  out.mean.resize(ns + na);
  out.mean << model.mu0(), k * model.mu0() + policy.offset;
  const MatrixXd sk = model.sigma0() * k.transpose();
  out.cov.resize(ns + na, ns + na);
  out.cov << model.sigma0(), sk, sk.transpose(), k * sk + policy.variance * MatrixXd::Identity(na, na);
  out.cov = symmetrized(out.cov);
  return out;
}

std::vector<GaussianMoments> forward_moments(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                                             int horizon) {
  if (horizon < 1) throw InputError("H", "horizon must be at least 1");
  const LiftedDynamics lifted = lift(model, policy);
  std::vector<GaussianMoments> out;
  out.reserve(static_cast<std::size_t>(horizon));
  out.push_back(initial_moments(model, policy));
  for (int t = 2; t <= horizon; ++t) {
    const auto& prev = out.back();
    GaussianMoments next;
    next.mean = lifted.transition * prev.mean + lifted.offset;
    next.cov = symmetrized(lifted.transition * prev.cov * lifted.transition.transpose() + lifted.noise);
    check_psd(next.cov, t);
    out.push_back(std::move(next));
  }
  return out;
}

GaussianReversal gaussian_reversal(const GaussianMoments& marginal, const LiftedDynamics& lifted) {
  const MatrixXd& f = lifted.transition;
  const MatrixXd innovation = symmetrized(f * marginal.cov * f.transpose() + lifted.noise);
  const Eigen::LLT<MatrixXd> llt(innovation);
  if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is not positive definite");
  const MatrixXd f_sigma = f * marginal.cov;
  GaussianReversal out;
  out.gain = llt.solve(f_sigma).transpose();
  out.offset = marginal.mean - out.gain * (f * marginal.mean + lifted.offset);
  out.cov = symmetrized(marginal.cov - out.gain * f_sigma);
  return out;
}

RewardMoments reward_component_moments(const GaussianMoments& marginal, const MixtureReward& reward) {
  const MatrixXd& proj = reward.projection;
  const MatrixXd sigma_mt = marginal.cov * proj.transpose();
  const VectorXd projected_mean = proj * marginal.mean;
  const auto n = reward.components.size();
  std::vector<double> log_mass(n);
  std::vector<VectorXd> means(n);
  std::vector<MatrixXd> covs(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = reward.components[j];
    const MatrixXd s = symmetrized(c.cov + proj * sigma_mt);
    const Eigen::LLT<MatrixXd> s_llt(s);
    const Eigen::LLT<MatrixXd> l_llt(c.cov);
    if (s_llt.info() != Eigen::Success || l_llt.info() != Eigen::Success)
      throw NumericalError("reward innovation is not positive definite");
    const VectorXd r = c.target - projected_mean;
    const VectorXd s_inv_r = s_llt.solve(r);
    log_mass[j] = std::log(c.weight) + 0.5 * log_det(l_llt) - 0.5 * log_det(s_llt) - 0.5 * r.dot(s_inv_r);
    means[j] = marginal.mean + sigma_mt * s_inv_r;
    covs[j] = symmetrized(marginal.cov - sigma_mt * s_llt.solve(sigma_mt.transpose()));
  }
  RewardMoments out;
  out.log_mass = log_sum_exp(log_mass);
  const auto dim = marginal.mean.size();
  out.mean = VectorXd::Zero(dim);
  MatrixXd second = MatrixXd::Zero(dim, dim);
  for (std::size_t j = 0; j < n; ++j) {
    const double share = std::exp(log_mass[j] - out.log_mass);
    out.mean += share * means[j];
    second += share * (covs[j] + means[j] * means[j].transpose());
  }
  out.cov = symmetrized(second - out.mean * out.mean.transpose());
  return out;
}

double QMoments::total_mass() const {
  double w = 0.0;
  for (double z : tail) w += z;
  return w;
}

VectorXd QMoments::first_sum() const {
  VectorXd s = VectorXd::Zero(first.front().size());
  for (const auto& v : first) s += v;
  return s;
}

MatrixXd QMoments::second_sum() const {
  MatrixXd s = MatrixXd::Zero(second.front().rows(), second.front().cols());
  for (const auto& m : second) s += m;
  return s;
}

QMoments q_moment_recursion(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                            const MixtureReward& reward, int horizon, OpCounter* ops) {
  const Prepared p = prepare(model, policy, reward, horizon, ops);
  QMoments q = empty_moments(p, model.joint_dim());
  const auto h = static_cast<std::size_t>(horizon);

  auto own = [&](std::size_t i) {
    const auto& r = p.reward[i];
    return std::pair<VectorXd, MatrixXd>{p.weight[i] * r.mean,
                                         p.weight[i] * (r.cov + r.mean * r.mean.transpose())};
  };
  std::tie(q.first[h - 1], q.second[h - 1]) = own(h - 1);
  for (std::size_t i = h - 1; i-- > 0;) {
    const GaussianReversal rev = gaussian_reversal(p.alpha[i], p.lifted);
    const double z_next = q.tail[i + 1];
    const VectorXd& mu_next = q.first[i + 1];
    auto [first, second] = own(i);
    first += z_next * rev.offset + rev.gain * mu_next;
    const MatrixXd cross = rev.gain * mu_next * rev.offset.transpose();
    second += z_next * (rev.cov + rev.offset * rev.offset.transpose()) +
              rev.gain * q.second[i + 1] * rev.gain.transpose() + cross + cross.transpose();
    q.first[i] = std::move(first);
    q.second[i] = symmetrized(second);
    if (ops) ++ops->conditioning;
  }
  return q;
}

QMoments fb_moment_baseline(const LinearGaussianMDP& model, const GaussianPolicy& policy,
                            const MixtureReward& reward, int horizon, OpCounter* ops) {
  const Prepared p = prepare(model, policy, reward, horizon, ops);
  QMoments q = empty_moments(p, model.joint_dim());
  const auto h = static_cast<std::size_t>(horizon);
  std::vector<GaussianReversal> reversal;
  reversal.reserve(h);
  for (std::size_t i = 0; i + 1 < h; ++i) reversal.push_back(gaussian_reversal(p.alpha[i], p.lifted));

  for (std::size_t t = 0; t < h; ++t) {
    const double w = p.weight[t];
    if (w == 0.0) continue;
    // Smoothed marginal of component t, walked back to tau = 1.
    VectorXd mean = p.reward[t].mean;
    MatrixXd cov = p.reward[t].cov;
    for (std::size_t tau = t + 1; tau-- > 0;) {
      if (tau < t) {
        const auto& rev = reversal[tau];
        mean = rev.gain * mean + rev.offset;
        cov = symmetrized(rev.cov + rev.gain * cov * rev.gain.transpose());
        if (ops) ++ops->conditioning;
      }
      q.first[tau] += w * mean;
      q.second[tau] += w * (cov + mean * mean.transpose());
    }
  }
  return q;
}

double log_utility(const LinearGaussianMDP& model, const GaussianPolicy& policy, const MixtureReward& reward,
                   int horizon) {
  reward.validate(model.joint_dim());
  const auto alpha = forward_moments(model, policy, horizon);
  std::vector<RewardMoments> r;
  r.reserve(alpha.size());
  for (const auto& a : alpha) r.push_back(reward_component_moments(a, reward));
  return log_sum_exp(log_terms(r, model.discount()));
}

namespace {

struct Regression {
  MatrixXd sxx;  // [[S_ss, S_s], [S_s^T, W]]
  MatrixXd sax;  // [S_as, S_a]
  MatrixXd saa;
  double mass = 0.0;
};

Regression regression_blocks(const QMoments& moments, int ns, int na) {
  const VectorXd s1 = moments.first_sum();
  const MatrixXd s2 = moments.second_sum();
  if (s1.size() != ns + na) throw InputError("moments", "dimension does not match n_s + n_a");
  Regression r;
  r.mass = moments.total_mass();
  r.sxx.resize(ns + 1, ns + 1);
  r.sxx << s2.topLeftCorner(ns, ns), s1.head(ns), s1.head(ns).transpose(), r.mass;
  r.sax.resize(na, ns + 1);
  r.sax << s2.bottomLeftCorner(na, ns), s1.tail(na);
  r.saa = s2.bottomRightCorner(na, na);
  return r;
}

// tr(S_aa - 2 C S_ax^T + C S_xx C^T)
double residual_trace(const Regression& r, const MatrixXd& c) {
  return (r.saa - 2.0 * c * r.sax.transpose() + c * r.sxx * c.transpose()).trace();
}

MatrixXd stacked(const GaussianPolicy& policy) {
  MatrixXd c(policy.gain.rows(), policy.gain.cols() + 1);
  c << policy.gain, policy.offset;
  return c;
}

}  // namespace

GaussianPolicy m_step_gaussian(const QMoments& moments, int state_dim, int action_dim) {
  const Regression r = regression_blocks(moments, state_dim, action_dim);
  if (!(r.mass > 0.0)) throw NumericalError("Q-potential has no mass");
  const double ridge = 1e-10 * r.sxx.trace() / static_cast<double>(r.sxx.rows());
  const MatrixXd reg = r.sxx + ridge * MatrixXd::Identity(r.sxx.rows(), r.sxx.cols());
  const Eigen::LDLT<MatrixXd> ldlt(reg);
  if (ldlt.info() != Eigen::Success) throw NumericalError("singular normal equations in the policy update");
  const MatrixXd c = ldlt.solve(r.sax.transpose()).transpose();
  if (!c.allFinite()) throw NumericalError("singular normal equations in the policy update");
  GaussianPolicy out;
  out.gain = c.leftCols(state_dim);
  out.offset = c.col(state_dim);
  out.variance = std::max(residual_trace(r, c) / (action_dim * r.mass), 1e-8);
  return out;
}

double policy_energy(const QMoments& moments, const GaussianPolicy& policy) {
  const int ns = static_cast<int>(policy.gain.cols());
  const int na = static_cast<int>(policy.gain.rows());
  const Regression r = regression_blocks(moments, ns, na);
  const double sigma = policy.variance;
  return -0.5 * na * r.mass * std::log(2.0 * M_PI * sigma) - residual_trace(r, stacked(policy)) / (2.0 * sigma);
}

double ContinuousReport::max_log_decrease() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < iterations.size(); ++i)
    worst = std::max(worst, iterations[i - 1].log_utility - iterations[i].log_utility);
  return worst;
}

void write_report_csv(std::ostream& os, const ContinuousReport& report) {
  os << "iter,utility,wall_ms,matvec_count,backend,horizon_mode\n";
  const auto precision = os.precision(17);
  for (const auto& it : report.iterations) {
    os << it.iter << ',' << std::exp(it.log_utility) << ',' << it.wall_ms << ',' << it.conditioning << ','
       << report.backend << ",finite:" << report.horizon << '\n';
  }
  os.precision(precision);
}

ContinuousReport continuous_em_solve(const LinearGaussianMDP& model, const GaussianPolicy& init,
                                     const MixtureReward& reward, int horizon, const ContinuousEmOptions& options) {
  using Clock = std::chrono::steady_clock;
  init.validate(model);
  const auto moments = [&](const GaussianPolicy& pi, OpCounter* ops) {
    return options.backend == Backend::QInference ? q_moment_recursion(model, pi, reward, horizon, ops)
                                                  : fb_moment_baseline(model, pi, reward, horizon, ops);
  };
  ContinuousReport report;
  report.backend = to_string(options.backend);
  report.horizon = horizon;

  const auto start = Clock::now();
  const auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - start).count(); };
  OpCounter ops;
  GaussianPolicy policy = init;
  QMoments q = moments(policy, &ops);
  report.iterations.push_back({0, q.log_utility, elapsed_ms(), ops.conditioning});
  report.termination = Termination::MaxIterations;
  for (int k = 1; k <= options.max_iters; ++k) {
    if (options.budget_s > 0.0 && elapsed_ms() >= 1000.0 * options.budget_s) {
      report.termination = Termination::BudgetExhausted;
      break;
    }
    policy = m_step_gaussian(q, model.state_dim(), model.action_dim());
    const double previous = q.log_utility;
    q = moments(policy, &ops);
    report.iterations.push_back({k, q.log_utility, elapsed_ms(), ops.conditioning});
    if (options.tol >= 0.0 && std::abs(q.log_utility - previous) <= options.tol) {
      report.termination = Termination::Converged;
      break;
    }
  }
  report.final_policy = policy;
  return report;
}

}  // namespace mcpq
