// prosogest/hmm.hpp
//
// Left-to-right Gaussian HMMs for gesture phonemes.
//
// A model with n states stores an n x (n+1) transition matrix: column j < n is
// the move to state j, column n is the exit. Rows are stochastic, and only
// self, next, and (for the last state) exit entries may be non-zero. Paths
// enter at state 0 and must leave through the exit of the last state, so
// every score here is comparable with the network decoder's.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "prosogest/error.hpp"
#include "prosogest/gaussian.hpp"
#include "prosogest/json_util.hpp"
#include "prosogest/phoneme.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kVarianceFloor = 1e-6;

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// ---------------------------------------------------------------------------
// Generic Viterbi on log-domain parameters

/// Best-path log score: log_start[s0] + sum b + sum log_trans + log_exit[sT].
/// `log_emission` is T x n (frame-by-state log densities).
inline double viterbi_score(const Eigen::VectorXd& log_start, const Eigen::MatrixXd& log_trans,
                            const Eigen::VectorXd& log_exit, const Eigen::MatrixXd& log_emission,
                            std::vector<int>* path = nullptr) {
  const Eigen::Index T = log_emission.rows();
  const Eigen::Index n = log_emission.cols();
  if (T == 0) return kNegInf;
  Eigen::VectorXd delta = log_start + log_emission.row(0).transpose();
  std::vector<std::vector<int>> back;
  if (path) back.assign(static_cast<std::size_t>(T), std::vector<int>(static_cast<std::size_t>(n), -1));
  Eigen::VectorXd next(n);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double best = kNegInf;
      int arg = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = delta[i] + log_trans(i, j);
        if (v > best) { best = v; arg = static_cast<int>(i); }
      }
      next[j] = best + log_emission(t, j);
      if (path) back[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] = arg;
    }
    delta.swap(next);
  }
  double best = kNegInf;
  int arg = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = delta[i] + log_exit[i];
    if (v > best) { best = v; arg = static_cast<int>(i); }
  }
  if (path) {
    path->assign(static_cast<std::size_t>(T), -1);
    for (Eigen::Index t = T - 1; t >= 0 && arg >= 0; --t) {
      (*path)[static_cast<std::size_t>(t)] = arg;
      arg = back[static_cast<std::size_t>(t)][static_cast<std::size_t>(arg)];
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Phoneme HMM

enum class CovarianceKind { Diagonal, Full };

struct PhonemeHmm {
  PhonemeClass cls = PhonemeClass::Hold;
  Eigen::MatrixXd transitions;           // n x (n+1), last column = exit
  std::vector<GaussianModel> emissions;  // one per state

  int n_states() const { return static_cast<int>(emissions.size()); }

  Eigen::VectorXd log_start() const {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n_states(), kNegInf);
    v[0] = 0.0;
    return v;
  }
  Eigen::MatrixXd log_trans() const {
    const int n = n_states();
    return transitions.leftCols(n).unaryExpr([](double p) { return safe_log(p); });
  }
  Eigen::VectorXd log_exit() const {
    return transitions.col(n_states()).unaryExpr([](double p) { return safe_log(p); });
  }

  /// T x n matrix of per-state log densities for observation rows.
  Eigen::MatrixXd log_emissions(const Eigen::MatrixXd& obs) const {
    Eigen::MatrixXd b(obs.rows(), n_states());
    for (Eigen::Index t = 0; t < obs.rows(); ++t) {
      const Eigen::VectorXd x = obs.row(t).transpose();
      for (int s = 0; s < n_states(); ++s) b(t, s) = emissions[static_cast<std::size_t>(s)].log_density(x);
    }
    return b;
  }
};

/// Log probability of the best state path through `hmm` for the observation
/// rows; kNegInf when the sequence is too short to reach the exit.
inline double viterbi_log_likelihood(const PhonemeHmm& hmm, const Eigen::MatrixXd& obs) {
  return viterbi_score(hmm.log_start(), hmm.log_trans(), hmm.log_exit(), hmm.log_emissions(obs));
}

struct HmmTrainConfig {
  int n_states = 3;
  CovarianceKind covariance = CovarianceKind::Diagonal;
  int max_iterations = 100;
  double tolerance_per_observation = 1e-4;
  double variance_floor = kVarianceFloor;
};

struct HmmTrainResult {
  PhonemeHmm hmm;
  std::vector<double> log_likelihoods;  // total data log-likelihood after each E-step
};

namespace detail {

inline GaussianModel weighted_gaussian(const std::vector<Eigen::MatrixXd>& seqs,
                                       const std::vector<Eigen::VectorXd>& weights, CovarianceKind kind,
                                       double floor) {
  const Eigen::Index d = seqs.front().cols();
  double total = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    mean += seqs[k].transpose() * weights[k];
    total += weights[k].sum();
  }
  if (!(total > 0.0)) {
    // unvisited state: unit-variance placeholder at the data mean
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
    double count = 0.0;
    for (const auto& s : seqs) { m += s.colwise().sum().transpose(); count += static_cast<double>(s.rows()); }
    return GaussianModel(m / count, Eigen::MatrixXd::Identity(d, d));
  }
  mean /= total;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const Eigen::MatrixXd c = seqs[k].rowwise() - mean.transpose();
    if (kind == CovarianceKind::Full) {
      cov += c.transpose() * weights[k].asDiagonal() * c;
    } else {
      cov.diagonal() += (c.array().square().colwise() * weights[k].array()).colwise().sum().transpose().matrix();
    }
  }
  cov /= total;
  for (Eigen::Index i = 0; i < d; ++i) cov(i, i) = std::max(cov(i, i), floor);
  return GaussianModel(mean, cov);
}

}  // namespace detail

/// Baum-Welch from a uniform-duration left-to-right start. Stops when the
/// total log-likelihood gains less than tolerance per observation, or after
/// max_iterations re-estimations.
inline HmmTrainResult train_hmm(PhonemeClass cls, const std::vector<Eigen::MatrixXd>& examples,
                                const HmmTrainConfig& cfg = {}) {
  const int n = cfg.n_states;
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n_states must be positive");
  if (examples.size() < 10) {
    throw Error(ErrorCode::InsufficientExamples,
                std::string(name_of(cls)) + ": " + std::to_string(examples.size()) +
                    " example sequences (need at least 10)");
  }
  double total_frames = 0.0;
  for (const auto& e : examples) {
    if (e.rows() < n) {
      throw Error(ErrorCode::SequenceTooShort,
                  std::string(name_of(cls)) + ": sequence of " + std::to_string(e.rows()) +
                      " frames is shorter than " + std::to_string(n) + " states");
    }
    total_frames += static_cast<double>(e.rows());
  }

  // Uniform-duration segmentation: frame t of a length-T sequence -> state floor(t n / T).
  const std::size_t K = examples.size();
  std::vector<std::vector<Eigen::VectorXd>> occ(static_cast<std::size_t>(n),
                                                std::vector<Eigen::VectorXd>(K));
  std::vector<double> frames_in_state(static_cast<std::size_t>(n), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const Eigen::Index T = examples[k].rows();
    for (int s = 0; s < n; ++s) occ[static_cast<std::size_t>(s)][k] = Eigen::VectorXd::Zero(T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto s = static_cast<std::size_t>((t * n) / T);
      occ[s][k][t] = 1.0;
      frames_in_state[s] += 1.0;
    }
  }
  PhonemeHmm hmm;
  hmm.cls = cls;
  hmm.transitions = Eigen::MatrixXd::Zero(n, n + 1);
  for (int s = 0; s < n; ++s) {
    const auto su = static_cast<std::size_t>(s);
    hmm.emissions.push_back(detail::weighted_gaussian(examples, occ[su], cfg.covariance, cfg.variance_floor));
    const double leave = std::min(1.0, static_cast<double>(K) / frames_in_state[su]);
    hmm.transitions(s, s) = 1.0 - leave;
    hmm.transitions(s, s + 1) = leave;  // s + 1 == n is the exit column
  }

  HmmTrainResult result;
  double prev = kNegInf;
  for (int iter = 0; iter <= cfg.max_iterations; ++iter) {
    const Eigen::VectorXd ls = hmm.log_start();
    const Eigen::MatrixXd la = hmm.log_trans();
    const Eigen::VectorXd le = hmm.log_exit();

    Eigen::MatrixXd trans_count = Eigen::MatrixXd::Zero(n, n + 1);
    std::vector<std::vector<Eigen::VectorXd>> gamma(static_cast<std::size_t>(n),
                                                    std::vector<Eigen::VectorXd>(K));
    double total_ll = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& obs = examples[k];
      const Eigen::Index T = obs.rows();
      const Eigen::MatrixXd b = hmm.log_emissions(obs);
      Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(T, n, kNegInf);
      Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, n, kNegInf);
      for (int j = 0; j < n; ++j) alpha(0, j) = ls[j] + b(0, j);
      for (Eigen::Index t = 1; t < T; ++t) {
        for (int j = 0; j < n; ++j) {
          double acc = kNegInf;
          for (int i = 0; i < n; ++i) acc = log_sum_exp(acc, alpha(t - 1, i) + la(i, j));
          alpha(t, j) = acc + b(t, j);
        }
      }
      for (int i = 0; i < n; ++i) beta(T - 1, i) = le[i];
      for (Eigen::Index t = T - 2; t >= 0; --t) {
        for (int i = 0; i < n; ++i) {
          double acc = kNegInf;
          for (int j = 0; j < n; ++j) acc = log_sum_exp(acc, la(i, j) + b(t + 1, j) + beta(t + 1, j));
          beta(t, i) = acc;
        }
      }
      double ll = kNegInf;
      for (int i = 0; i < n; ++i) ll = log_sum_exp(ll, alpha(T - 1, i) + le[i]);
      if (ll == kNegInf) {
        throw Error(ErrorCode::SequenceTooShort,
                    std::string(name_of(cls)) + ": sequence " + std::to_string(k) + " has zero likelihood");
      }
      total_ll += ll;

      for (int s = 0; s < n; ++s) {
        Eigen::VectorXd g(T);
        for (Eigen::Index t = 0; t < T; ++t) g[t] = std::exp(alpha(t, s) + beta(t, s) - ll);
        gamma[static_cast<std::size_t>(s)][k] = std::move(g);
      }
      for (Eigen::Index t = 0; t + 1 < T; ++t) {
        for (int i = 0; i < n; ++i) {
          if (alpha(t, i) == kNegInf) continue;
          for (int j = 0; j < n; ++j) {
            if (la(i, j) == kNegInf) continue;
            trans_count(i, j) += std::exp(alpha(t, i) + la(i, j) + b(t + 1, j) + beta(t + 1, j) - ll);
          }
        }
      }
      for (int i = 0; i < n; ++i) trans_count(i, n) += std::exp(alpha(T - 1, i) + le[i] - ll);
    }
    result.log_likelihoods.push_back(total_ll);
    const bool converged = iter > 0 && (total_ll - prev) < cfg.tolerance_per_observation * total_frames;
    if (converged || iter == cfg.max_iterations) break;
    prev = total_ll;

    // M-step
    for (int s = 0; s < n; ++s) {
      const auto su = static_cast<std::size_t>(s);
      hmm.emissions[su] = detail::weighted_gaussian(examples, gamma[su], cfg.covariance, cfg.variance_floor);
      const double row = trans_count.row(s).sum();
      if (row > 0.0) hmm.transitions.row(s) = trans_count.row(s) / row;
    }
  }
  result.hmm = std::move(hmm);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence: {class, n_states, transitions, means, variances[, covariances]}

inline nlohmann::ordered_json to_json(const PhonemeHmm& h) {
  nlohmann::ordered_json j;
  j["class"] = std::string(name_of(h.cls));
  j["n_states"] = h.n_states();
  j["transitions"] = detail::to_rows(h.transitions);
  std::vector<std::vector<double>> means, vars;
  bool full = false;
  for (const auto& e : h.emissions) {
    means.push_back(detail::to_std(e.mean()));
    vars.push_back(detail::to_std(e.covariance().diagonal()));
    full = full || !e.covariance().isDiagonal(0.0);
  }
  j["means"] = means;
  j["variances"] = vars;
  if (full) {
    auto covs = nlohmann::ordered_json::array();
    for (const auto& e : h.emissions) covs.push_back(detail::to_rows(e.covariance()));
    j["covariances"] = covs;
  }
  return j;
}

inline PhonemeHmm hmm_from_json(const nlohmann::json& j) {
  try {
    PhonemeHmm h;
    const auto name = j.at("class").get<std::string>();
    const auto cls = parse_class(name);
    if (!cls) throw Error(ErrorCode::InvalidArgument, "unknown class '" + name + "'");
    h.cls = *cls;
    const int n = j.at("n_states").get<int>();
    const auto trans = j.at("transitions").get<std::vector<std::vector<double>>>();
    const auto means = j.at("means").get<std::vector<std::vector<double>>>();
    const auto vars = j.at("variances").get<std::vector<std::vector<double>>>();
    if (n < 1 || trans.size() != static_cast<std::size_t>(n) || means.size() != trans.size() || vars.size() != trans.size()) {
      throw Error(ErrorCode::InvalidArgument, name + ": inconsistent state count");
    }
    h.transitions.resize(n, n + 1);
    for (int r = 0; r < n; ++r) {
      if (trans[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(n + 1)) {
        throw Error(ErrorCode::InvalidArgument, name + ": transition row " + std::to_string(r) + " needs n+1 entries");
      }
      for (int c = 0; c <= n; ++c) h.transitions(r, c) = trans[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    const bool full = j.contains("covariances");
    for (int s = 0; s < n; ++s) {
      const auto& m = means[static_cast<std::size_t>(s)];
      const auto& v = vars[static_cast<std::size_t>(s)];
      if (m.size() != v.size()) throw Error(ErrorCode::InvalidArgument, name + ": mean/variance size mismatch");
      const auto d = static_cast<Eigen::Index>(m.size());
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      if (full) {
        cov = detail::matrix_from_json(j.at("covariances").at(static_cast<std::size_t>(s)), m.size(), "covariance");
      } else {
        for (Eigen::Index i = 0; i < d; ++i) cov(i, i) = v[static_cast<std::size_t>(i)];
      }
      h.emissions.emplace_back(Eigen::Map<const Eigen::VectorXd>(m.data(), d), cov);
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("hmm: ") + e.what());
  }
}

inline void save_hmm(const std::filesystem::path& path, const PhonemeHmm& h) {
  write_file_atomic(path, to_json(h).dump(2) + "\n");
}

inline PhonemeHmm load_hmm(const std::filesystem::path& path) {
  try {
    return hmm_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

}  // namespace prosogest
