// prosogest/decoder.hpp
//
// Phoneme network and continuous Viterbi decoding of a gesture stream.
//
// The network chains the six phoneme HMMs: entering a phoneme costs the
// insertion penalty plus the predecessor's exit probability, and successors
// are restricted by the grammar. Any class may start the stream; the stream
// must end in a final state's exit.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "prosogest/error.hpp"
#include "prosogest/hmm.hpp"
#include "prosogest/kinematics.hpp"
#include "prosogest/phoneme.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

inline constexpr double kDefaultInsertionPenalty = -20.0;

using Grammar = std::array<std::array<bool, kNumClasses>, kNumClasses>;  // [from][to]

/// Preparation leads into a stroke; strokes chain, hold, retract or
/// re-prepare; holds lead to a stroke or retraction; retraction re-prepares.
inline Grammar default_grammar() {
  Grammar g{};
  auto allow = [&](PhonemeClass a, PhonemeClass b) { g[index_of(a)][index_of(b)] = true; };
  for (auto c : kAllClasses) {
    if (!is_stroke(c)) continue;
    allow(PhonemeClass::Preparation, c);
    allow(PhonemeClass::Hold, c);
    for (auto d : kAllClasses) {
      if (is_stroke(d)) allow(c, d);
    }
    allow(c, PhonemeClass::Hold);
    allow(c, PhonemeClass::Retraction);
    allow(c, PhonemeClass::Preparation);
  }
  allow(PhonemeClass::Hold, PhonemeClass::Retraction);
  allow(PhonemeClass::Retraction, PhonemeClass::Preparation);
  return g;
}

struct PhonemeNetwork {
  std::array<PhonemeHmm, kNumClasses> hmms;
  Grammar grammar = default_grammar();
  double insertion_penalty = kDefaultInsertionPenalty;
};

/// Tiling segmentation of the stream; times come from the frames, and the
/// last interval ends one frame period after the final frame.
/// `entry_bonus` (T x 6, optional) is added whenever a phoneme of class c is
/// entered at frame t.
inline Segmentation decode_stream(const PhonemeNetwork& net, std::span<const GestureFeature> stream,
                                  const Eigen::MatrixXd* entry_bonus = nullptr) {
  const auto T = static_cast<Eigen::Index>(stream.size());
  if (T < 2) throw Error(ErrorCode::TooFewFrames, "gesture stream needs at least 2 frames to decode");
  if (entry_bonus && (entry_bonus->rows() != T || entry_bonus->cols() != kNumClasses)) {
    throw Error(ErrorCode::InvalidArgument, "entry bonus must be frames x classes");
  }
  auto bonus = [&](Eigen::Index t, std::size_t c) {
    return entry_bonus ? (*entry_bonus)(t, static_cast<Eigen::Index>(c)) : 0.0;
  };
  const Eigen::MatrixXd obs = feature_matrix(stream);
  const double dt = stream[1].t - stream[0].t;

  std::array<int, kNumClasses> offset{};
  int S = 0;
  std::array<Eigen::MatrixXd, kNumClasses> emis, la;
  std::array<Eigen::VectorXd, kNumClasses> le;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    offset[c] = S;
    S += net.hmms[c].n_states();
    emis[c] = net.hmms[c].log_emissions(obs);
    la[c] = net.hmms[c].log_trans();
    le[c] = net.hmms[c].log_exit();
  }

  // back[t][s]: previous global state; entered[t][s]: reached by a phoneme entry arc
  std::vector<std::vector<int>> back(static_cast<std::size_t>(T), std::vector<int>(static_cast<std::size_t>(S), -1));
  std::vector<std::vector<char>> entered(static_cast<std::size_t>(T), std::vector<char>(static_cast<std::size_t>(S), 0));
  Eigen::VectorXd delta = Eigen::VectorXd::Constant(S, kNegInf);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    delta[offset[c]] = emis[c](0, 0) + bonus(0, c);
    entered[0][static_cast<std::size_t>(offset[c])] = 1;
  }

  Eigen::VectorXd next(S);
  for (Eigen::Index t = 1; t < T; ++t) {
    auto& bt = back[static_cast<std::size_t>(t)];
    auto& et = entered[static_cast<std::size_t>(t)];
    // best exit score per class at t-1
    std::array<double, kNumClasses> exit_score;
    std::array<int, kNumClasses> exit_state{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      exit_score[c] = kNegInf;
      const int n = net.hmms[c].n_states();
      for (int i = 0; i < n; ++i) {
        const double v = delta[offset[c] + i] + le[c][i];
        if (v > exit_score[c]) { exit_score[c] = v; exit_state[c] = offset[c] + i; }
      }
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const int n = net.hmms[c].n_states();
      for (int j = 0; j < n; ++j) {
        const int gj = offset[c] + j;
        double best = kNegInf;
        int arg = -1;
        char via_entry = 0;
        for (int i = 0; i < n; ++i) {
          const double v = delta[offset[c] + i] + la[c](i, j);
          if (v > best) { best = v; arg = offset[c] + i; }
        }
        if (j == 0) {
          for (std::size_t p = 0; p < kNumClasses; ++p) {
            if (!net.grammar[p][c]) continue;
            const double v = exit_score[p] + net.insertion_penalty + bonus(t, c);
            if (v > best) { best = v; arg = exit_state[p]; via_entry = 1; }
          }
        }
        next[gj] = best + emis[c](t, j);
        bt[static_cast<std::size_t>(gj)] = arg;
        et[static_cast<std::size_t>(gj)] = via_entry;
      }
    }
    delta.swap(next);
  }

  double best = kNegInf;
  int state = -1;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (int i = 0; i < net.hmms[c].n_states(); ++i) {
      const double v = delta[offset[c] + i] + le[c][i];
      if (v > best) { best = v; state = offset[c] + i; }
    }
  }
  if (state < 0) throw Error(ErrorCode::SequenceTooShort, "no complete path through the phoneme network");

  auto class_of = [&](int s) {
    std::size_t c = kNumClasses - 1;
    while (offset[c] > s) --c;
    return c;
  };
  // Trace back; collect segment starts (frame index, class).
  std::vector<std::pair<Eigen::Index, std::size_t>> starts;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    if (entered[ts][static_cast<std::size_t>(state)]) starts.emplace_back(t, class_of(state));
    state = back[ts][static_cast<std::size_t>(state)];
  }
  std::reverse(starts.begin(), starts.end());

  Segmentation seg;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const Eigen::Index a = starts[k].first;
    const Eigen::Index b = k + 1 < starts.size() ? starts[k + 1].first : T;
    const auto c = starts[k].second;
    SegmentInterval iv;
    iv.start_s = stream[static_cast<std::size_t>(a)].t;
    iv.end_s = b < T ? stream[static_cast<std::size_t>(b)].t : stream.back().t + dt;
    iv.label = kAllClasses[c];
    iv.log_likelihood = viterbi_log_likelihood(net.hmms[c], obs.middleRows(a, b - a));
    seg.push_back(iv);
  }
  return seg;
}

/// Viterbi log-likelihood of each class HMM over the frames of an interval.
inline ClassVector interval_log_likelihoods(const PhonemeNetwork& net, std::span<const GestureFeature> stream,
                                            double start_s, double end_s) {
  const auto [lo, hi] = frames_in(stream, start_s, end_s);
  ClassVector ll;
  ll.fill(kNegInf);
  if (lo >= hi) return ll;
  const Eigen::MatrixXd obs = feature_matrix(stream.subspan(lo, hi - lo));
  for (std::size_t c = 0; c < kNumClasses; ++c) ll[c] = viterbi_log_likelihood(net.hmms[c], obs);
  return ll;
}

// ---------------------------------------------------------------------------
// network.json: {classes, successors, insertion_penalty}; HMMs live in
// hmm_<Class>.json next to it.

inline nlohmann::ordered_json network_json(const PhonemeNetwork& net) {
  nlohmann::ordered_json j;
  std::vector<std::string> names;
  for (auto c : kAllClasses) names.emplace_back(name_of(c));
  j["classes"] = names;
  nlohmann::ordered_json succ = nlohmann::ordered_json::object();
  for (auto a : kAllClasses) {
    std::vector<std::string> to;
    for (auto b : kAllClasses) {
      if (net.grammar[index_of(a)][index_of(b)]) to.emplace_back(name_of(b));
    }
    succ[std::string(name_of(a))] = to;
  }
  j["successors"] = succ;
  j["insertion_penalty"] = net.insertion_penalty;
  return j;
}

inline std::string hmm_filename(PhonemeClass c) { return "hmm_" + std::string(name_of(c)) + ".json"; }

inline void save_network(const std::filesystem::path& dir, const PhonemeNetwork& net) {
  for (auto c : kAllClasses) save_hmm(dir / hmm_filename(c), net.hmms[index_of(c)]);
  write_file_atomic(dir / "network.json", network_json(net).dump(2) + "\n");
}

inline PhonemeNetwork load_network(const std::filesystem::path& dir) {
  PhonemeNetwork net;
  const auto path = dir / "network.json";
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingModel, path.string() + " not found");
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    net.insertion_penalty = j.at("insertion_penalty").get<double>();
    net.grammar = {};
    for (const auto& [from, to] : j.at("successors").items()) {
      const auto a = parse_class(from);
      if (!a) throw Error(ErrorCode::InvalidArgument, "network: unknown class '" + from + "'");
      for (const auto& name : to.get<std::vector<std::string>>()) {
        const auto b = parse_class(name);
        if (!b) throw Error(ErrorCode::InvalidArgument, "network: unknown class '" + name + "'");
        net.grammar[index_of(*a)][index_of(*b)] = true;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  for (auto c : kAllClasses) {
    const auto hp = dir / hmm_filename(c);
    if (!std::filesystem::exists(hp)) throw Error(ErrorCode::MissingModel, hp.string() + " not found");
    auto h = load_hmm(hp);
    if (h.cls != c) throw Error(ErrorCode::InvalidArgument, hp.string() + ": class mismatch");
    net.hmms[index_of(c)] = std::move(h);
  }
  return net;
}

}  // namespace prosogest
