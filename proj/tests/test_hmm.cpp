#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "prosogest/decoder.hpp"
#include "prosogest/hmm.hpp"
#include "test_support.hpp"

namespace pg = prosogest;

namespace {

double log_normal_1d(double x, double mu, double var) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - mu) * (x - mu) / var);
}

// Left-to-right 1-D HMM with given means, unit variance, self prob p.
pg::PhonemeHmm chain(const std::vector<double>& means, double self_p, double var = 1.0) {
  pg::PhonemeHmm h;
  const int n = static_cast<int>(means.size());
  h.transitions = Eigen::MatrixXd::Zero(n, n + 1);
  for (int s = 0; s < n; ++s) {
    h.transitions(s, s) = self_p;
    h.transitions(s, s + 1) = 1.0 - self_p;
    h.emissions.emplace_back(Eigen::VectorXd::Constant(1, means[static_cast<std::size_t>(s)]),
                             Eigen::MatrixXd::Constant(1, 1, var));
  }
  return h;
}

std::vector<Eigen::MatrixXd> sample_sequences(const std::vector<double>& means, double self_p, int count,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Eigen::MatrixXd> out;
  for (int k = 0; k < count; ++k) {
    std::vector<double> xs;
    for (double mu : means) {
      do xs.push_back(mu + z(rng));
      while (u(rng) < self_p);
    }
    out.push_back(Eigen::Map<Eigen::MatrixXd>(xs.data(), static_cast<Eigen::Index>(xs.size()), 1));
  }
  return out;
}

// Enumerate every state path; exact Viterbi oracle.
double brute_force(const Eigen::VectorXd& ls, const Eigen::MatrixXd& la, const Eigen::VectorXd& le,
                   const Eigen::MatrixXd& b) {
  const auto T = b.rows();
  const auto n = b.cols();
  long total = 1;
  for (Eigen::Index t = 0; t < T; ++t) total *= n;
  double best = pg::kNegInf;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<Eigen::Index> path(static_cast<std::size_t>(T));
    for (auto& s : path) { s = c % n; c /= n; }
    double v = ls[path[0]] + b(0, path[0]);
    for (Eigen::Index t = 1; t < T; ++t) v += la(path[t - 1], path[t]) + b(t, path[t]);
    v += le[path.back()];
    best = std::max(best, v);
  }
  return best;
}

}  // namespace

TEST(Viterbi, TwoStatesThreeObservationsMatchesEnumeration) {
  auto h = chain({0.0, 2.0}, 0.6);
  Eigen::MatrixXd obs(3, 1);
  obs << 0.1, 1.5, 2.2;
  // Paths must start in state 0 and exit from state 1: the only feasible ones
  // are 0-0-1 and 0-1-1.
  const double p001 = log_normal_1d(0.1, 0, 1) + std::log(0.6) + log_normal_1d(1.5, 0, 1) + std::log(0.4) +
                      log_normal_1d(2.2, 2, 1) + std::log(0.4);
  const double p011 = log_normal_1d(0.1, 0, 1) + std::log(0.4) + log_normal_1d(1.5, 2, 1) + std::log(0.6) +
                      log_normal_1d(2.2, 2, 1) + std::log(0.4);
  EXPECT_NEAR(pg::viterbi_log_likelihood(h, obs), std::max(p001, p011), 1e-12);
}

TEST(Viterbi, SingleStateSingleObservationIsLogDensity) {
  pg::PhonemeHmm h;
  h.transitions = Eigen::MatrixXd(1, 2);
  h.transitions << 0.0, 1.0;
  Eigen::Vector2d mu(1.0, -2.0);
  Eigen::Matrix2d cov;
  cov << 2.0, 0.3, 0.3, 1.0;
  h.emissions.emplace_back(mu, cov);
  Eigen::MatrixXd obs(1, 2);
  obs << 0.5, -1.0;
  EXPECT_NEAR(pg::viterbi_log_likelihood(h, obs), h.emissions[0].log_density(obs.row(0).transpose()), 1e-14);
}

TEST(Viterbi, GeneralHmmsMatchBruteForce) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 3;
    const int T = 1 + (trial / 3) % 6;
    Eigen::VectorXd ls(n), le(n);
    Eigen::MatrixXd la(n, n), b(T, n);
    for (int i = 0; i < n; ++i) {
      ls[i] = std::log(u(rng));
      le[i] = std::log(u(rng));
      for (int j = 0; j < n; ++j) la(i, j) = (trial % 4 == 0 && j < i) ? pg::kNegInf : std::log(u(rng));
    }
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < n; ++i) b(t, i) = z(rng);
    EXPECT_NEAR(pg::viterbi_score(ls, la, le, b), brute_force(ls, la, le, b), 1e-9) << "trial " << trial;
  }
}

TEST(Viterbi, TooShortForChainIsImpossible) {
  auto h = chain({0.0, 1.0, 2.0}, 0.5);
  EXPECT_EQ(pg::viterbi_log_likelihood(h, Eigen::MatrixXd::Zero(2, 1)), pg::kNegInf);
}

TEST(TrainHmm, LikelihoodNonDecreasingAndMeansRecovered) {
  const std::vector<double> truth = {-3.0, 1.0, 5.0};
  const auto seqs = sample_sequences(truth, 0.75, 60, 7);
  pg::HmmTrainConfig cfg;
  cfg.n_states = 3;
  const auto r = pg::train_hmm(pg::PhonemeClass::Hold, seqs, cfg);
  ASSERT_GE(r.log_likelihoods.size(), 2u);
  for (std::size_t i = 1; i < r.log_likelihoods.size(); ++i) {
    EXPECT_GE(r.log_likelihoods[i], r.log_likelihoods[i - 1] - 1e-9 * std::abs(r.log_likelihoods[i - 1]))
        << "iteration " << i;
  }
  std::vector<double> got;
  for (const auto& e : r.hmm.emissions) got.push_back(e.mean()[0]);
  std::sort(got.begin(), got.end());
  for (std::size_t s = 0; s < truth.size(); ++s) EXPECT_NEAR(got[s], truth[s], 0.2);
}

TEST(TrainHmm, TransitionsStayLeftToRightAndStochastic) {
  const auto seqs = sample_sequences({0.0, 3.0, 6.0, 9.0}, 0.6, 20, 3);
  pg::HmmTrainConfig cfg;
  cfg.n_states = 4;
  const auto h = pg::train_hmm(pg::PhonemeClass::PointStroke, seqs, cfg).hmm;
  for (int s = 0; s < 4; ++s) {
    EXPECT_NEAR(h.transitions.row(s).sum(), 1.0, 1e-9);
    for (int j = 0; j <= 4; ++j) {
      if (j != s && j != s + 1) {
        EXPECT_EQ(h.transitions(s, j), 0.0);
      }
    }
  }
}

TEST(TrainHmm, Deterministic) {
  const auto seqs = sample_sequences({0.0, 2.0}, 0.7, 15, 5);
  pg::HmmTrainConfig cfg;
  cfg.n_states = 2;
  const auto a = pg::train_hmm(pg::PhonemeClass::Hold, seqs, cfg).hmm;
  const auto b = pg::train_hmm(pg::PhonemeClass::Hold, seqs, cfg).hmm;
  EXPECT_EQ(pg::to_json(a).dump(), pg::to_json(b).dump());
}

TEST(TrainHmm, VarianceFloor) {
  std::vector<Eigen::MatrixXd> seqs(12, Eigen::MatrixXd::Constant(6, 2, 0.5));
  pg::HmmTrainConfig cfg;
  cfg.n_states = 2;
  const auto h = pg::train_hmm(pg::PhonemeClass::Hold, seqs, cfg).hmm;
  for (const auto& e : h.emissions) EXPECT_GE(e.covariance().diagonal().minCoeff(), pg::kVarianceFloor);
}

TEST(TrainHmm, FullCovarianceOption) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Eigen::MatrixXd> seqs;
  for (int k = 0; k < 20; ++k) {
    Eigen::MatrixXd m(12, 2);
    for (int t = 0; t < 12; ++t) {
      const double a = z(rng);
      m(t, 0) = a;
      m(t, 1) = 0.8 * a + 0.3 * z(rng);
    }
    seqs.push_back(m);
  }
  pg::HmmTrainConfig cfg;
  cfg.n_states = 1;
  cfg.covariance = pg::CovarianceKind::Full;
  const auto h = pg::train_hmm(pg::PhonemeClass::Hold, seqs, cfg).hmm;
  EXPECT_GT(h.emissions[0].covariance()(0, 1), 0.5);
  const auto back = pg::hmm_from_json(pg::to_json(h));
  EXPECT_DOUBLE_EQ(back.emissions[0].covariance()(0, 1), h.emissions[0].covariance()(0, 1));
}

TEST(TrainHmm, Errors) {
  const auto five = sample_sequences({0.0, 1.0}, 0.5, 5, 1);
  try {
    pg::train_hmm(pg::PhonemeClass::Hold, five);
    FAIL();
  } catch (const pg::Error& e) {
    EXPECT_EQ(e.code(), pg::ErrorCode::InsufficientExamples);
  }
  std::vector<Eigen::MatrixXd> shorts(10, Eigen::MatrixXd::Zero(2, 1));
  pg::HmmTrainConfig cfg;
  cfg.n_states = 3;
  try {
    pg::train_hmm(pg::PhonemeClass::Hold, shorts, cfg);
    FAIL();
  } catch (const pg::Error& e) {
    EXPECT_EQ(e.code(), pg::ErrorCode::SequenceTooShort);
  }
}

TEST(HmmJson, RoundTripIsExact) {
  const auto seqs = sample_sequences({0.0, 2.0, 4.0}, 0.7, 12, 21);
  pg::HmmTrainConfig cfg;
  const auto h = pg::train_hmm(pg::PhonemeClass::ContourStroke, seqs, cfg).hmm;
  const auto dir = pg::testing::scratch_dir("hmm_json");
  pg::save_hmm(dir / "h.json", h);
  const auto back = pg::load_hmm(dir / "h.json");
  EXPECT_EQ(back.cls, pg::PhonemeClass::ContourStroke);
  EXPECT_EQ(back.transitions, h.transitions);
  for (int s = 0; s < h.n_states(); ++s) {
    EXPECT_EQ(back.emissions[s].mean(), h.emissions[s].mean());
    EXPECT_EQ(back.emissions[s].covariance(), h.emissions[s].covariance());
  }
  const auto j = pg::to_json(h);
  for (const char* key : {"class", "n_states", "transitions", "means", "variances"}) EXPECT_TRUE(j.contains(key));
}

// ---------------------------------------------------------------------------
// Network decoding on templated 7-D streams: class c lights up dimension c.

namespace {

pg::PhonemeHmm template_hmm(pg::PhonemeClass c, int n_states) {
  pg::PhonemeHmm h;
  h.cls = c;
  h.transitions = Eigen::MatrixXd::Zero(n_states, n_states + 1);
  for (int s = 0; s < n_states; ++s) {
    h.transitions(s, s) = 0.7;
    h.transitions(s, s + 1) = 0.3;
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(pg::kFeatureDim);
    mu[static_cast<Eigen::Index>(pg::index_of(c))] = 6.0;
    h.emissions.emplace_back(mu, Eigen::MatrixXd::Identity(pg::kFeatureDim, pg::kFeatureDim));
  }
  return h;
}

pg::PhonemeNetwork template_network() {
  pg::PhonemeNetwork net;
  for (auto c : pg::kAllClasses) net.hmms[pg::index_of(c)] = template_hmm(c, pg::is_stroke(c) ? 4 : c == pg::PhonemeClass::Hold ? 2 : 3);
  return net;
}

pg::GestureStream template_stream(const std::vector<std::pair<pg::PhonemeClass, int>>& plan, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  pg::GestureStream s;
  for (const auto& [c, frames] : plan) {
    for (int f = 0; f < frames; ++f) {
      std::array<double, pg::kFeatureDim> v{};
      for (auto& x : v) x = z(rng);
      v[pg::index_of(c)] += 6.0;
      pg::GestureFeature g;
      g.t = static_cast<double>(s.size()) * 0.04;
      g.hand_vx = v[0];
      g.hand_vy = v[1];
      g.hand_ax = v[2];
      g.hand_ay = v[3];
      g.head_vx = v[4];
      g.head_vy = v[5];
      g.hand_speed = v[6];
      s.push_back(g);
    }
  }
  return s;
}

}  // namespace

TEST(Decode, RecoversTemplateOrderAndTiles) {
  using PC = pg::PhonemeClass;
  const std::vector<std::pair<PC, int>> plan = {
      {PC::Preparation, 10}, {PC::PointStroke, 8}, {PC::Hold, 12}, {PC::Retraction, 10}};
  const auto net = template_network();
  const auto s = template_stream(plan, 42);
  const auto seg = pg::decode_stream(net, s);
  ASSERT_EQ(seg.size(), plan.size());
  double t = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    EXPECT_EQ(seg[k].label, plan[k].first);
    EXPECT_NEAR(seg[k].start_s, t, 1e-9);
    t += plan[k].second * 0.04;
    EXPECT_NEAR(seg[k].end_s, t, 1e-9);
    EXPECT_TRUE(std::isfinite(seg[k].log_likelihood));
  }
  EXPECT_TRUE(pg::tiles(seg));
  EXPECT_NEAR(seg.front().start_s, s.front().t, 1e-12);
  EXPECT_NEAR(seg.back().end_s, s.back().t + 0.04, 1e-12);
}

TEST(Decode, PureHoldIsOneInterval) {
  const auto net = template_network();
  const auto seg = pg::decode_stream(net, template_stream({{pg::PhonemeClass::Hold, 30}}, 3));
  ASSERT_EQ(seg.size(), 1u);
  EXPECT_EQ(seg[0].label, pg::PhonemeClass::Hold);
}

TEST(Decode, GrammarForbidsUnlistedTransitions) {
  using PC = pg::PhonemeClass;
  auto net = template_network();
  // Retraction -> Hold is not in the grammar: the decoder must route through
  // something else even though the data says Retraction then Hold.
  const auto s = template_stream({{PC::Retraction, 10}, {PC::Hold, 10}}, 8);
  const auto seg = pg::decode_stream(net, s);
  for (std::size_t k = 1; k < seg.size(); ++k) {
    EXPECT_TRUE(net.grammar[pg::index_of(seg[k - 1].label)][pg::index_of(seg[k].label)]);
  }
  EXPECT_TRUE(pg::tiles(seg));
}

TEST(Decode, InsertionPenaltyTradesOffSegments) {
  using PC = pg::PhonemeClass;
  auto net = template_network();
  const auto s = template_stream({{PC::Preparation, 10}, {PC::ContourStroke, 10}, {PC::Retraction, 10}}, 4);
  net.insertion_penalty = 0.0;
  const auto loose = pg::decode_stream(net, s);
  net.insertion_penalty = -1e6;
  const auto strict = pg::decode_stream(net, s);
  EXPECT_GE(loose.size(), 3u);
  EXPECT_EQ(strict.size(), 1u);
}

TEST(DefaultGrammar, StronglyConnected) {
  const auto g = pg::default_grammar();
  for (std::size_t a = 0; a < pg::kNumClasses; ++a) {
    std::array<bool, pg::kNumClasses> seen{};
    std::vector<std::size_t> stack = {a};
    seen[a] = true;
    while (!stack.empty()) {
      const auto x = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < pg::kNumClasses; ++b) {
        if (g[x][b] && !seen[b]) { seen[b] = true; stack.push_back(b); }
      }
    }
    for (bool v : seen) EXPECT_TRUE(v);
  }
}

TEST(NetworkFiles, RoundTripAndMissing) {
  const auto dir = pg::testing::scratch_dir("network");
  const auto net = template_network();
  pg::save_network(dir, net);
  const auto back = pg::load_network(dir);
  EXPECT_EQ(back.grammar, net.grammar);
  EXPECT_EQ(back.insertion_penalty, net.insertion_penalty);
  std::filesystem::remove(dir / "hmm_Hold.json");
  try {
    pg::load_network(dir);
    FAIL();
  } catch (const pg::Error& e) {
    EXPECT_EQ(e.code(), pg::ErrorCode::MissingModel);
  }
}
