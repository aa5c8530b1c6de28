#include "pedfit/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "pedfit/io.hpp"

namespace pedfit {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

GmmModel::GmmModel(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                   std::vector<Eigen::MatrixXd> covariances, double frame_interval)
    : frame_interval_(frame_interval),
      weights_(std::move(weights)),
      means_(std::move(means)),
      covariances_(std::move(covariances)) {
  const size_t k = weights_.size();
  if (k == 0) throw std::invalid_argument("gmm: no components");
  if (means_.size() != k || covariances_.size() != k)
    throw std::invalid_argument("gmm: component arrays differ in length");
  if (frame_interval_ < 0.0) throw std::invalid_argument("gmm: negative frame interval");
  dim_ = static_cast<int>(means_[0].size());
  if (dim_ == 0) throw std::invalid_argument("gmm: zero dimension");
  double total = 0.0;
  for (size_t i = 0; i < k; ++i) {
    if (!(weights_[i] >= 0.0)) throw std::invalid_argument("gmm: negative weight");
    total += weights_[i];
    if (means_[i].size() != dim_ || covariances_[i].rows() != dim_ ||
        covariances_[i].cols() != dim_)
      throw DimensionError("gmm: inconsistent component dimensions");
    if (!means_[i].allFinite() || !covariances_[i].allFinite())
      throw std::invalid_argument("gmm: non-finite parameters");
    if ((covariances_[i] - covariances_[i].transpose()).cwiseAbs().maxCoeff() >
        1e-9 * std::max(1.0, covariances_[i].cwiseAbs().maxCoeff()))
      throw std::invalid_argument("gmm: covariance is not symmetric");
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("gmm: weights do not sum to 1");

  chol_.resize(k);
  log_norm_.resize(k);
  for (size_t i = 0; i < k; ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariances_[i]);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("gmm: covariance " + std::to_string(i) +
                                  " is not positive definite");
    chol_[i] = llt.matrixL();
    const double log_det = 2.0 * chol_[i].diagonal().array().log().sum();
    log_norm_[i] = std::log(weights_[i]) - 0.5 * dim_ * kLog2Pi - 0.5 * log_det;
  }
}

Eigen::VectorXd GmmModel::component_log_densities(const Eigen::VectorXd& x) const {
  if (x.size() != dim_)
    throw DimensionError("gmm: input has " + std::to_string(x.size()) + " values, model has " +
                         std::to_string(dim_));
  Eigen::VectorXd l(components());
  for (int i = 0; i < components(); ++i) {
    const Eigen::VectorXd z =
        chol_[i].triangularView<Eigen::Lower>().solve(x - means_[i]);
    l[i] = log_norm_[i] - 0.5 * z.squaredNorm();
  }
  return l;
}

double GmmModel::nll(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  if (x.size() != dim_)
    throw DimensionError("gmm: input has " + std::to_string(x.size()) + " values, model has " +
                         std::to_string(dim_));
  const int k = components();
  Eigen::VectorXd l(k);
  std::vector<Eigen::VectorXd> z(k);
  for (int i = 0; i < k; ++i) {
    z[i] = chol_[i].triangularView<Eigen::Lower>().solve(x - means_[i]);
    l[i] = log_norm_[i] - 0.5 * z[i].squaredNorm();
  }
  const double lse = log_sum_exp(l);
  if (grad) {
    grad->setZero(dim_);
    for (int i = 0; i < k; ++i) {
      const double gamma = std::exp(l[i] - lse);
      if (gamma == 0.0) continue;
      // Sigma^-1 (x - mu) = L^-T z
      *grad += gamma * chol_[i].transpose().triangularView<Eigen::Upper>().solve(z[i]);
    }
  }
  return -lse;
}

namespace {

struct EmState {
  std::vector<double> w;
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> cov;
};

// Log of w_k N(x_n) for all n, k.
Eigen::MatrixXd log_joint(const Eigen::MatrixXd& X, const EmState& s, double lambda, bool* ok) {
  const int n = static_cast<int>(X.cols());
  const int d = static_cast<int>(X.rows());
  const int k = static_cast<int>(s.w.size());
  Eigen::MatrixXd L(n, k);
  *ok = true;
  for (int c = 0; c < k; ++c) {
    Eigen::LLT<Eigen::MatrixXd> llt(s.cov[c]);
    if (llt.info() != Eigen::Success) {
      *ok = false;
      return L;
    }
    const Eigen::MatrixXd chol = llt.matrixL();
    const double log_det = 2.0 * chol.diagonal().array().log().sum();
    const Eigen::MatrixXd Z =
        chol.triangularView<Eigen::Lower>().solve(X.colwise() - s.mu[c]);
    // the covariance penalty enters as a per-component factor exp(-lambda/2 tr Sigma^-1)
    const Eigen::MatrixXd inv_l =
        chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
    const double norm = std::log(s.w[c]) - 0.5 * d * kLog2Pi - 0.5 * log_det -
                        0.5 * lambda * inv_l.squaredNorm();
    L.col(c) = (norm - 0.5 * Z.colwise().squaredNorm().array()).matrix().transpose();
  }
  return L;
}

double penalized_objective(const Eigen::MatrixXd& logj, Eigen::MatrixXd* resp) {
  const int n = static_cast<int>(logj.rows());
  double ll = 0.0;
  if (resp) resp->resize(n, logj.cols());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd row = logj.row(i).transpose();
    const double lse = log_sum_exp(row);
    ll += lse;
    if (resp) resp->row(i) = (row.array() - lse).exp().matrix().transpose();
  }
  return ll / n;
}

std::vector<int> kmeans_pp(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng) {
  const int n = static_cast<int>(X.cols());
  std::vector<int> centers;
  std::uniform_int_distribution<int> pick(0, n - 1);
  centers.push_back(pick(rng));
  Eigen::VectorXd d2 = (X.colwise() - X.col(centers[0])).colwise().squaredNorm().transpose();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    int next = 0;
    if (total <= 0.0) {
      next = pick(rng);
    } else {
      double r = unif(rng) * total;
      for (next = 0; next < n - 1; ++next) {
        r -= d2[next];
        if (r <= 0.0) break;
      }
    }
    centers.push_back(next);
    d2 = d2.cwiseMin((X.colwise() - X.col(next)).colwise().squaredNorm().transpose());
  }
  // Lloyd refinement of hard assignments
  Eigen::MatrixXd C(X.rows(), k);
  for (int c = 0; c < k; ++c) C.col(c) = X.col(centers[c]);
  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      Eigen::Index best;
      (C.colwise() - X.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (assign[i] != best || iter == 0) {
        changed = changed || assign[i] != best;
        assign[i] = static_cast<int>(best);
      }
    }
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(X.rows(), k);
    std::vector<int> cnt(k, 0);
    for (int i = 0; i < n; ++i) {
      sum.col(assign[i]) += X.col(i);
      ++cnt[assign[i]];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[c] > 0) C.col(c) = sum.col(c) / cnt[c];
    if (!changed && iter > 0) break;
  }
  return assign;
}

}  // namespace

GmmFit fit_gmm(const std::vector<Eigen::VectorXd>& samples, const GmmFitOptions& opt) {
  const int k = opt.components;
  if (k < 1) throw std::invalid_argument("fit_gmm: need at least one component");
  const int n = static_cast<int>(samples.size());
  if (n <= k) throw std::invalid_argument("fit_gmm: need more samples than components");
  const int d = static_cast<int>(samples[0].size());
  Eigen::MatrixXd X(d, n);
  for (int i = 0; i < n; ++i) {
    if (samples[i].size() != d) throw DimensionError("fit_gmm: samples differ in dimension");
    if (!samples[i].allFinite()) throw std::invalid_argument("fit_gmm: non-finite sample");
    X.col(i) = samples[i];
  }
  const double lambda = opt.regularization;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  auto m_step = [&](const Eigen::MatrixXd& resp, EmState& s) {
    s.w.assign(k, 0.0);
    s.mu.assign(k, Eigen::VectorXd::Zero(d));
    s.cov.assign(k, Eigen::MatrixXd::Zero(d, d));
    for (int c = 0; c < k; ++c) {
      const Eigen::VectorXd r = resp.col(c);
      double nk = r.sum();
      if (nk < 1e-12) nk = 1e-12;
      s.w[c] = nk / n;
      s.mu[c] = X * r / nk;
      const Eigen::MatrixXd centered = X.colwise() - s.mu[c];
      s.cov[c] = (centered * r.asDiagonal() * centered.transpose()) / nk + lambda * eye;
      s.cov[c] = 0.5 * (s.cov[c] + s.cov[c].transpose());
    }
    double total = 0.0;
    for (double w : s.w) total += w;
    for (double& w : s.w) w /= total;
  };

  std::mt19937_64 rng(opt.seed);
  const std::vector<int> assign = k == 1 ? std::vector<int>(n, 0) : kmeans_pp(X, k, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
  for (int i = 0; i < n; ++i) resp(i, assign[i]) = 1.0;
  // empty clusters get a uniform share so every component starts valid
  for (int c = 0; c < k; ++c)
    if (resp.col(c).sum() == 0.0) resp.col(c).setConstant(1.0 / n);

  EmState state;
  m_step(resp, state);

  GmmFit fit;
  bool ok = true;
  Eigen::MatrixXd logj = log_joint(X, state, lambda, &ok);
  if (!ok) throw std::runtime_error("fit_gmm: covariance lost positive definiteness");
  double obj = penalized_objective(logj, &resp);
  fit.objective.push_back(obj);

  for (int it = 0; it < opt.max_iterations; ++it) {
    m_step(resp, state);
    logj = log_joint(X, state, lambda, &ok);
    if (!ok) throw std::runtime_error("fit_gmm: covariance lost positive definiteness");
    const double next = penalized_objective(logj, &resp);
    fit.objective.push_back(next);
    fit.iterations = it + 1;
    const double slack = 1e-10 * std::max(1.0, std::abs(obj));
    if (next < obj - slack)
      throw std::logic_error("fit_gmm: EM objective decreased at iteration " +
                             std::to_string(it + 1));
    const bool done = std::abs(next - obj) <= opt.tolerance * std::max(1.0, std::abs(obj));
    obj = next;
    if (done) {
      fit.converged = true;
      break;
    }
  }
  fit.model = GmmModel(state.w, state.mu, state.cov, opt.frame_interval);
  return fit;
}

std::vector<Eigen::VectorXd> pose_deltas(const std::vector<BodyParams>& sequence,
                                         const std::vector<double>& timestamps,
                                         double target_interval) {
  if (sequence.size() < 2) throw std::invalid_argument("pose_deltas: need at least two frames");
  if (timestamps.size() != sequence.size())
    throw std::invalid_argument("pose_deltas: one timestamp per frame required");
  if (!(target_interval > 0.0)) throw std::invalid_argument("pose_deltas: bad target interval");
  std::vector<Eigen::VectorXd> out;
  out.reserve(sequence.size() - 1);
  for (size_t i = 1; i < sequence.size(); ++i) {
    const double dt = timestamps[i] - timestamps[i - 1];
    if (!(dt > 0.0)) throw std::invalid_argument("pose_deltas: timestamps must increase");
    const double scale = target_interval / dt;
    Eigen::VectorXd v(3 + kPoseDim);
    v.head<3>() = scale * (sequence[i].translation - sequence[i - 1].translation);
    v.tail<kPoseDim>() = scale * (sequence[i].pose - sequence[i - 1].pose);
    out.push_back(std::move(v));
  }
  return out;
}

Eigen::VectorXd body_pose_vector(const BodyParams& params) {
  return params.pose.tail<kPoseDim - 3>();
}

Priors train_motion_priors(const std::vector<std::vector<BodyParams>>& sequences,
                           const std::vector<std::vector<double>>& timestamps,
                           const MotionPriorOptions& opt) {
  if (sequences.size() != timestamps.size())
    throw std::invalid_argument("one timestamp list per motion sequence required");
  std::vector<double> intervals;
  for (const auto& ts : timestamps)
    for (size_t i = 1; i < ts.size(); ++i) intervals.push_back(ts[i] - ts[i - 1]);
  if (intervals.empty()) throw std::invalid_argument("motion corpus has no frame pairs");
  std::nth_element(intervals.begin(), intervals.begin() + intervals.size() / 2, intervals.end());
  const double interval = intervals[intervals.size() / 2];

  std::vector<Eigen::VectorXd> poses, deltas;
  for (size_t s = 0; s < sequences.size(); ++s) {
    for (const auto& p : sequences[s]) poses.push_back(body_pose_vector(p));
    if (sequences[s].size() >= 2) {
      auto d = pose_deltas(sequences[s], timestamps[s], interval);
      deltas.insert(deltas.end(), d.begin(), d.end());
    }
  }
  GmmFitOptions po;
  po.components = opt.pose_components;
  po.seed = opt.seed;
  po.max_iterations = opt.max_iterations;
  po.regularization = opt.pose_regularization;
  GmmFitOptions to = po;
  to.components = opt.temporal_components;
  to.regularization = opt.temporal_regularization;
  to.frame_interval = interval;
  return {fit_gmm(poses, po).model, fit_gmm(deltas, to).model};
}

void save_gmm(const std::string& path, const GmmModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "pedfit-gmm-1";
  j["dimension"] = model.dim();
  j["components"] = model.components();
  j["frame_interval"] = model.frame_interval();
  j["weights"] = model.weights();
  auto& means = j["means"] = nlohmann::ordered_json::array();
  auto& covs = j["covariances"] = nlohmann::ordered_json::array();
  for (int i = 0; i < model.components(); ++i) {
    const auto& m = model.means()[i];
    means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    const auto& c = model.covariances()[i];
    std::vector<double> flat;
    flat.reserve(c.size());
    for (int r = 0; r < c.rows(); ++r)
      for (int col = 0; col < c.cols(); ++col) flat.push_back(c(r, col));
    covs.push_back(flat);
  }
  write_file_atomic(path, j.dump(1) + "\n");
}

GmmModel load_gmm(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  try {
    if (j.at("format") != "pedfit-gmm-1") throw IoError(path + ": unknown gmm format");
    const int d = j.at("dimension").get<int>();
    const int k = j.at("components").get<int>();
    auto weights = j.at("weights").get<std::vector<double>>();
    const auto& jm = j.at("means");
    const auto& jc = j.at("covariances");
    if (static_cast<int>(weights.size()) != k || static_cast<int>(jm.size()) != k ||
        static_cast<int>(jc.size()) != k)
      throw IoError(path + ": component count mismatch");
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (int i = 0; i < k; ++i) {
      const auto m = jm[i].get<std::vector<double>>();
      const auto c = jc[i].get<std::vector<double>>();
      if (static_cast<int>(m.size()) != d || static_cast<int>(c.size()) != d * d)
        throw IoError(path + ": component " + std::to_string(i) + " has wrong size");
      means.push_back(Eigen::Map<const Eigen::VectorXd>(m.data(), d));
      Eigen::MatrixXd cov(d, d);
      for (int r = 0; r < d; ++r)
        for (int col = 0; col < d; ++col) cov(r, col) = c[r * d + col];
      covs.push_back(cov);
    }
    return GmmModel(std::move(weights), std::move(means), std::move(covs),
                    j.at("frame_interval").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace pedfit
