// prosogest/pipeline.hpp
//
// End-to-end driver pieces shared by the CLI and the acceptance suite:
// versioned JSON config, per-recording analysis (contour, segments, accents,
// gesture stream), model training from a corpus, and recognition in both
// modes.
//
// Model directory layout:
//   prominence_<speaker>.json   one per training speaker
//   hmm_<Class>.json            six phoneme HMMs
//   network.json                grammar and insertion penalty
//   cooccurrence.json

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "prosogest/cooccur.hpp"
#include "prosogest/corpus.hpp"
#include "prosogest/decoder.hpp"
#include "prosogest/error.hpp"
#include "prosogest/fusion.hpp"
#include "prosogest/hmm.hpp"
#include "prosogest/kinematics.hpp"
#include "prosogest/pitch.hpp"
#include "prosogest/prominence.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

inline constexpr int kConfigSchemaVersion = 1;

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 20240607;
  PitchConfig pitch;
  double sigma_pitch = kPitchGradientSigma;
  double sigma_velocity = kVelocityGradientSigma;
  double target_miss_rate = kDefaultMissRate;
  std::optional<double> threshold_override;
  std::array<int, kNumClasses> hmm_states = {3, 4, 4, 4, 2, 3};
  CovarianceKind covariance = CovarianceKind::Diagonal;
  int hmm_max_iterations = 100;
  double hmm_tolerance = 1e-4;
  double insertion_penalty = kDefaultInsertionPenalty;
  FusionMode mode = FusionMode::Fused;
  bool prior_injection = false;  // second decode pass with first-pass priors on the entry arcs
  double train_fraction = 0.5;
  SyntheticRecipe corpus;
  std::string corpus_dir = "corpus";
  std::string model_dir = "models";
  std::string out_dir = "out";
};

// ---------------------------------------------------------------------------
// Config JSON

namespace detail {

[[noreturn]] inline void config_error(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, field + ": " + why);
}

template <class T>
void config_get(const nlohmann::json& v, const std::string& field, T& out) {
  try {
    out = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error(field, "wrong type");
  }
}

inline void config_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) config_error(field, "must be positive");
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  using detail::config_error;
  using detail::config_positive;
  config_positive(c.pitch.f0_floor, "pitch.f0_floor");
  if (!(c.pitch.f0_ceiling > c.pitch.f0_floor)) config_error("pitch.f0_ceiling", "must exceed f0_floor");
  config_positive(c.pitch.window_s, "pitch.window_s");
  config_positive(c.pitch.hop_s, "pitch.hop_s");
  if (!(c.pitch.voicing_threshold > 0.0 && c.pitch.voicing_threshold < 1.0)) {
    config_error("pitch.voicing_threshold", "must lie in (0, 1)");
  }
  if (!(c.pitch.silence_threshold >= 0.0 && c.pitch.silence_threshold < 1.0)) {
    config_error("pitch.silence_threshold", "must lie in [0, 1)");
  }
  if (c.pitch.max_candidates < 1) config_error("pitch.max_candidates", "must be at least 1");
  if (c.pitch.max_gap_s < 0.0) config_error("pitch.max_gap_s", "must be non-negative");
  if (c.pitch.max_gap_jump_hz < 0.0) config_error("pitch.max_gap_jump_hz", "must be non-negative");
  config_positive(c.sigma_pitch, "prominence.sigma_pitch");
  config_positive(c.sigma_velocity, "prominence.sigma_velocity");
  if (!(c.target_miss_rate > 0.0 && c.target_miss_rate < 0.5)) {
    config_error("prominence.target_miss_rate", "must lie in (0, 0.5)");
  }
  if (c.threshold_override) config_positive(*c.threshold_override, "prominence.threshold_override");
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (c.hmm_states[k] < 1) config_error("hmm.states." + std::string(name_of(kAllClasses[k])), "must be at least 1");
  }
  if (c.hmm_max_iterations < 1) config_error("hmm.max_iterations", "must be at least 1");
  config_positive(c.hmm_tolerance, "hmm.tolerance");
  if (!(c.insertion_penalty <= 0.0) || !std::isfinite(c.insertion_penalty)) {
    config_error("hmm.insertion_penalty", "must be a finite non-positive log weight");
  }
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) config_error("split.train_fraction", "must lie in (0, 1)");
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["pitch"] = {{"f0_floor", c.pitch.f0_floor},
                {"f0_ceiling", c.pitch.f0_ceiling},
                {"window_s", c.pitch.window_s},
                {"hop_s", c.pitch.hop_s},
                {"voicing_threshold", c.pitch.voicing_threshold},
                {"silence_threshold", c.pitch.silence_threshold},
                {"octave_cost", c.pitch.octave_cost},
                {"octave_jump_cost", c.pitch.octave_jump_cost},
                {"voiced_unvoiced_cost", c.pitch.voiced_unvoiced_cost},
                {"max_candidates", c.pitch.max_candidates},
                {"max_gap_s", c.pitch.max_gap_s},
                {"max_gap_jump_hz", c.pitch.max_gap_jump_hz}};
  nlohmann::ordered_json prom = {{"sigma_pitch", c.sigma_pitch},
                                 {"sigma_velocity", c.sigma_velocity},
                                 {"target_miss_rate", c.target_miss_rate}};
  prom["threshold_override"] = c.threshold_override ? nlohmann::ordered_json(*c.threshold_override) : nullptr;
  j["prominence"] = prom;
  nlohmann::ordered_json states;
  for (std::size_t k = 0; k < kNumClasses; ++k) states[std::string(name_of(kAllClasses[k]))] = c.hmm_states[k];
  j["hmm"] = {{"states", states},
              {"covariance", c.covariance == CovarianceKind::Full ? "full" : "diagonal"},
              {"max_iterations", c.hmm_max_iterations},
              {"tolerance", c.hmm_tolerance},
              {"insertion_penalty", c.insertion_penalty}};
  j["fusion"] = {{"mode", mode_name(c.mode)}, {"prior_injection", c.prior_injection}};
  j["split"] = {{"train_fraction", c.train_fraction}};
  j["corpus"] = to_json(c.corpus);
  j["paths"] = {{"corpus_dir", c.corpus_dir}, {"model_dir", c.model_dir}, {"out_dir", c.out_dir}};
  return j;
}

inline FusionMode parse_mode(const std::string& s) {
  if (s == "fused") return FusionMode::Fused;
  if (s == "gesture_only" || s == "gesture-only") return FusionMode::GestureOnly;
  throw Error(ErrorCode::InvalidConfig, "fusion.mode: expected 'fused' or 'gesture_only', got '" + s + "'");
}

/// Strict reader: schema_version is required, every other field defaults,
/// and unknown or mistyped fields are errors naming the field.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::config_error;
  using detail::config_get;
  if (!j.is_object()) config_error("config", "must be a JSON object");
  PipelineConfig c;
  if (!j.contains("schema_version")) config_error("schema_version", "missing");
  auto section = [&](const nlohmann::json& v, const std::string& name, auto&& handle) {
    if (!v.is_object()) config_error(name, "must be an object");
    for (const auto& [k, x] : v.items()) {
      if (!handle(k, x)) config_error(name + "." + k, "unknown field");
    }
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "schema_version") {
      config_get(v, key, c.schema_version);
      if (c.schema_version != kConfigSchemaVersion) {
        config_error(key, "unsupported version " + std::to_string(c.schema_version));
      }
    } else if (key == "seed") {
      config_get(v, key, c.seed);
    } else if (key == "pitch") {
      section(v, key, [&](const std::string& k, const nlohmann::json& x) {
        const std::string f = "pitch." + k;
        if (k == "f0_floor") config_get(x, f, c.pitch.f0_floor);
        else if (k == "f0_ceiling") config_get(x, f, c.pitch.f0_ceiling);
        else if (k == "window_s") config_get(x, f, c.pitch.window_s);
        else if (k == "hop_s") config_get(x, f, c.pitch.hop_s);
        else if (k == "voicing_threshold") config_get(x, f, c.pitch.voicing_threshold);
        else if (k == "silence_threshold") config_get(x, f, c.pitch.silence_threshold);
        else if (k == "octave_cost") config_get(x, f, c.pitch.octave_cost);
        else if (k == "octave_jump_cost") config_get(x, f, c.pitch.octave_jump_cost);
        else if (k == "voiced_unvoiced_cost") config_get(x, f, c.pitch.voiced_unvoiced_cost);
        else if (k == "max_candidates") config_get(x, f, c.pitch.max_candidates);
        else if (k == "max_gap_s") config_get(x, f, c.pitch.max_gap_s);
        else if (k == "max_gap_jump_hz") config_get(x, f, c.pitch.max_gap_jump_hz);
        else return false;
        return true;
      });
    } else if (key == "prominence") {
      section(v, key, [&](const std::string& k, const nlohmann::json& x) {
        const std::string f = "prominence." + k;
        if (k == "sigma_pitch") config_get(x, f, c.sigma_pitch);
        else if (k == "sigma_velocity") config_get(x, f, c.sigma_velocity);
        else if (k == "target_miss_rate") config_get(x, f, c.target_miss_rate);
        else if (k == "threshold_override") {
          if (x.is_null()) {
            c.threshold_override.reset();
          } else {
            double t = 0.0;
            config_get(x, f, t);
            c.threshold_override = t;
          }
        } else return false;
        return true;
      });
    } else if (key == "hmm") {
      section(v, key, [&](const std::string& k, const nlohmann::json& x) {
        const std::string f = "hmm." + k;
        if (k == "states") {
          section(x, f, [&](const std::string& cname, const nlohmann::json& n) {
            const auto cls = parse_class(cname);
            if (!cls) return false;
            config_get(n, f + "." + cname, c.hmm_states[index_of(*cls)]);
            return true;
          });
        } else if (k == "covariance") {
          std::string s;
          config_get(x, f, s);
          if (s == "diagonal") c.covariance = CovarianceKind::Diagonal;
          else if (s == "full") c.covariance = CovarianceKind::Full;
          else config_error(f, "expected 'diagonal' or 'full'");
        } else if (k == "max_iterations") config_get(x, f, c.hmm_max_iterations);
        else if (k == "tolerance") config_get(x, f, c.hmm_tolerance);
        else if (k == "insertion_penalty") config_get(x, f, c.insertion_penalty);
        else return false;
        return true;
      });
    } else if (key == "fusion") {
      section(v, key, [&](const std::string& k, const nlohmann::json& x) {
        if (k == "prior_injection") {
          config_get(x, "fusion.prior_injection", c.prior_injection);
          return true;
        }
        if (k != "mode") return false;
        std::string s;
        config_get(x, "fusion.mode", s);
        c.mode = parse_mode(s);
        return true;
      });
    } else if (key == "split") {
      section(v, key, [&](const std::string& k, const nlohmann::json& x) {
        if (k != "train_fraction") return false;
        config_get(x, "split.train_fraction", c.train_fraction);
        return true;
      });
    } else if (key == "corpus") {
      try {
        c.corpus = recipe_from_json(v);
      } catch (const Error& e) {
        config_error("corpus", e.what());
      }
    } else if (key == "paths") {
      section(v, key, [&](const std::string& k, const nlohmann::json& x) {
        const std::string f = "paths." + k;
        if (k == "corpus_dir") config_get(x, f, c.corpus_dir);
        else if (k == "model_dir") config_get(x, f, c.model_dir);
        else if (k == "out_dir") config_get(x, f, c.out_dir);
        else return false;
        return true;
      });
    } else {
      config_error(key, "unknown field");
    }
  }
  validate(c);
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::InvalidConfig, "config: " + path.string() + " not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, "config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Parallel helper: f(i) for i in [0, n) on up to `jobs` threads. The first
// failure by index is rethrown, so errors are as deterministic as results.

template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(std::max<std::size_t>(n, 1))));
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            f(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Analysis

struct Analysis {
  PitchContour contour;  // after gap bridging
  std::vector<F0Segment> segments;
  std::vector<AccentFeatures> accents;
  GestureStream stream;
};

inline Analysis analyze(const AudioBuffer& audio, const TrajectoryTrack& track, const PipelineConfig& cfg) {
  Analysis a;
  a.contour = preprocess_contour(extract_f0(audio, cfg.pitch), cfg.pitch);
  a.segments = segment_contour(a.contour);
  a.accents = compute_accents(a.segments, 0.0, a.contour.hop, cfg.sigma_pitch);
  a.stream = differentiate(track);
  return a;
}

inline std::vector<ProminentSegment> prominent_segments(const Analysis& a, const ProminenceModel& m) {
  std::vector<ProminentSegment> out;
  for (std::size_t k = 0; k < a.segments.size(); ++k) {
    const auto& f = a.accents[k];
    if (classify_prominent(f, m)) out.push_back(prominent_segment(a.segments[k], {f.xi_dot_max, f.xi_dot_time}));
  }
  return out;
}

/// Alignment features of [start, end) against the given prominent segments.
inline std::optional<AlignmentFeatures> interval_alignment(const Analysis& a, double start, double end,
                                                           std::span<const ProminentSegment> prominent,
                                                           const PipelineConfig& cfg) {
  const auto profile = velocity_profile(a.stream, start, end, cfg.sigma_velocity);
  return compute_alignment(start, end, profile, prominent);
}

// ---------------------------------------------------------------------------
// Corpus access

struct LoadedRecording {
  ManifestEntry entry;
  AudioBuffer audio;
  TrajectoryTrack track;
  Segmentation reference;  // empty when the corpus has none
  std::vector<AccentLabel> accents;
};

inline LoadedRecording load_recording(const std::filesystem::path& dir, const ManifestEntry& e) {
  LoadedRecording r;
  r.entry = e;
  r.audio = load_audio(dir / e.audio);
  r.track = load_trajectory(dir / e.trajectory);
  if (!e.reference.empty() && std::filesystem::exists(dir / e.reference)) r.reference = load_segmentation(dir / e.reference);
  if (!e.accents.empty() && std::filesystem::exists(dir / e.accents)) r.accents = parse_accents(read_file(dir / e.accents));
  return r;
}

/// Writes every recording of `recipe` plus manifest.json into `dir`.
inline CorpusManifest generate_corpus(const SyntheticRecipe& recipe, const std::filesystem::path& dir, int jobs = 1) {
  validate(recipe);
  std::filesystem::create_directories(dir);
  CorpusManifest m;
  m.recipe = recipe;
  m.recordings.resize(static_cast<std::size_t>(recipe.n_recordings));
  parallel_for(m.recordings.size(), jobs, [&](std::size_t i) { m.recordings[i] = write_recording(dir, generate(recipe, i)); });
  write_manifest(dir, m);
  return m;
}

inline std::vector<LoadedRecording> load_recordings(const std::filesystem::path& dir, const CorpusManifest& m,
                                                    std::span<const std::size_t> indices, int jobs = 1) {
  std::vector<LoadedRecording> out(indices.size());
  parallel_for(indices.size(), jobs, [&](std::size_t k) { out[k] = load_recording(dir, m.recordings.at(indices[k])); });
  return out;
}

inline std::string speaker_name(int speaker) { return "spk" + std::to_string(speaker); }
inline std::string prominence_filename(const std::string& speaker) { return "prominence_" + speaker + ".json"; }

// ---------------------------------------------------------------------------
// Training

struct TrainedModels {
  std::map<std::string, ProminenceModel> prominence;  // by speaker
  PhonemeNetwork network;
  CooccurrenceModel cooccurrence;
};

struct TrainingRecording {
  const LoadedRecording* rec;
  Analysis analysis;
};

/// A segment is labelled prominent when it overlaps a generated accent.
inline bool overlaps_accent(const F0Segment& s, std::span<const AccentLabel> accents) {
  for (const auto& a : accents) {
    if (s.start < a.end_s && s.end > a.start_s) return true;
  }
  return false;
}

inline TrainedModels train_models(const std::vector<LoadedRecording>& recordings, const PipelineConfig& cfg,
                                  int jobs = 1) {
  std::vector<TrainingRecording> data(recordings.size());
  parallel_for(recordings.size(), jobs, [&](std::size_t i) {
    data[i] = {&recordings[i], analyze(recordings[i].audio, recordings[i].track, cfg)};
  });

  TrainedModels out;

  // prominence, per speaker
  std::map<std::string, std::vector<LabeledAccent>> by_speaker;
  for (const auto& d : data) {
    auto& v = by_speaker[speaker_name(d.rec->entry.speaker)];
    for (std::size_t k = 0; k < d.analysis.segments.size(); ++k) {
      v.push_back({d.analysis.accents[k], overlaps_accent(d.analysis.segments[k], d.rec->accents)});
    }
  }
  for (const auto& [spk, labeled] : by_speaker) {
    std::vector<AccentFeatures> feats;
    for (const auto& l : labeled) feats.push_back(l.features);
    auto m = fit_prominence(feats, spk);
    m.threshold_d2 = cfg.threshold_override ? *cfg.threshold_override : calibrate_threshold(labeled, m, cfg.target_miss_rate);
    out.prominence.emplace(spk, std::move(m));
  }

  // phoneme HMMs
  std::array<std::vector<Eigen::MatrixXd>, kNumClasses> examples;
  for (const auto& d : data) {
    for (const auto& iv : d.rec->reference) {
      const auto [lo, hi] = frames_in(d.analysis.stream, iv.start_s, iv.end_s);
      if (hi > lo) {
        examples[index_of(iv.label)].push_back(
            feature_matrix(std::span(d.analysis.stream).subspan(lo, hi - lo)));
      }
    }
  }
  for (auto c : kAllClasses) {
    if (examples[index_of(c)].size() < 10) {
      throw Error(ErrorCode::InsufficientClassData,
                  std::string(name_of(c)) + ": " + std::to_string(examples[index_of(c)].size()) +
                      " training examples (need at least 10)");
    }
  }
  parallel_for(kNumClasses, jobs, [&](std::size_t c) {
    HmmTrainConfig hc;
    hc.n_states = cfg.hmm_states[c];
    hc.covariance = cfg.covariance;
    hc.max_iterations = cfg.hmm_max_iterations;
    hc.tolerance_per_observation = cfg.hmm_tolerance;
    out.network.hmms[c] = train_hmm(kAllClasses[c], examples[c], hc).hmm;
  });
  out.network.insertion_penalty = cfg.insertion_penalty;

  // co-occurrence, on reference intervals
  std::vector<LabeledAlignment> labeled;
  for (const auto& d : data) {
    const auto prominent = prominent_segments(d.analysis, out.prominence.at(speaker_name(d.rec->entry.speaker)));
    for (const auto& iv : d.rec->reference) {
      if (auto t = interval_alignment(d.analysis, iv.start_s, iv.end_s, prominent, cfg)) labeled.emplace_back(iv.label, *t);
    }
  }
  out.cooccurrence = fit_cooccurrence(labeled);
  return out;
}

inline void save_models(const std::filesystem::path& dir, const TrainedModels& m) {
  std::filesystem::create_directories(dir);
  for (const auto& [spk, p] : m.prominence) save_prominence(dir / prominence_filename(spk), p);
  save_network(dir, m.network);
  save_cooccurrence(dir / "cooccurrence.json", m.cooccurrence);
}

inline TrainedModels load_models(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::MissingModel, dir.string() + " is not a directory");
  TrainedModels m;
  m.network = load_network(dir);
  m.cooccurrence = load_cooccurrence(dir / "cooccurrence.json");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const auto name = p.filename().string();
    if (name.rfind("prominence_", 0) == 0 && p.extension() == ".json") {
      auto pm = load_prominence(p);
      m.prominence.emplace(pm.speaker_id, std::move(pm));
    }
  }
  if (m.prominence.empty()) throw Error(ErrorCode::MissingModel, dir.string() + ": no prominence_*.json");
  return m;
}

// ---------------------------------------------------------------------------
// Recognition

struct Recognition {
  Analysis analysis;
  Segmentation decoded;  // raw decoder output
  Segmentation output;   // relabelled and consolidated
  std::optional<ErrorBreakdown> breakdown;
};

inline const ProminenceModel& prominence_for(const TrainedModels& m, const std::string& speaker) {
  const auto it = m.prominence.find(speaker);
  if (it == m.prominence.end()) {
    throw Error(ErrorCode::MissingModel, "no prominence model for speaker '" + speaker + "'");
  }
  return it->second;
}

/// Per-interval likelihoods and priors for the decoded segmentation.
inline std::vector<IntervalScores> interval_scores(const Analysis& a, const Segmentation& decoded,
                                                   const TrainedModels& m, const ProminenceModel& prom,
                                                   FusionMode mode, const PipelineConfig& cfg) {
  const auto prominent = prominent_segments(a, prom);
  std::vector<IntervalScores> out;
  for (const auto& iv : decoded) {
    IntervalScores s;
    s.start_s = iv.start_s;
    s.end_s = iv.end_s;
    s.log_likelihood = interval_log_likelihoods(m.network, a.stream, iv.start_s, iv.end_s);
    const auto t = mode == FusionMode::Fused ? interval_alignment(a, iv.start_s, iv.end_s, prominent, cfg)
                                             : std::nullopt;
    s.prior = class_prior(t, m.cooccurrence);
    out.push_back(s);
  }
  return out;
}

/// log(p_c / max_c p) of the first-pass interval covering each frame. The
/// best class pays nothing, so a uniform prior leaves the decode unchanged.
inline Eigen::MatrixXd entry_bonus(std::span<const GestureFeature> stream, std::span<const IntervalScores> first_pass) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(stream.size()), kNumClasses);
  std::size_t k = 0;
  for (std::size_t t = 0; t < stream.size() && !first_pass.empty(); ++t) {
    while (k + 1 < first_pass.size() && stream[t].t >= first_pass[k].end_s - 1e-9) ++k;
    const auto& prior = first_pass[k].prior;
    const double top = *std::max_element(prior.begin(), prior.end());
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double p = prior[c];
      b(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = p > 0.0 ? std::log(p / top) : kNegInf;
    }
  }
  return b;
}

inline Recognition recognize(const AudioBuffer& audio, const TrajectoryTrack& track, const std::string& speaker,
                             const TrainedModels& m, FusionMode mode, const PipelineConfig& cfg,
                             const Segmentation* reference = nullptr) {
  Recognition r;
  r.analysis = analyze(audio, track, cfg);
  r.decoded = decode_stream(m.network, r.analysis.stream);
  auto scores = interval_scores(r.analysis, r.decoded, m, prominence_for(m, speaker), mode, cfg);
  if (mode == FusionMode::Fused && cfg.prior_injection) {
    const Eigen::MatrixXd bonus = entry_bonus(r.analysis.stream, scores);
    r.decoded = decode_stream(m.network, r.analysis.stream, &bonus);
    scores = interval_scores(r.analysis, r.decoded, m, prominence_for(m, speaker), mode, cfg);
  }
  r.output = consolidate(fuse_posteriors(scores), m.network.grammar);
  if (reference && !reference->empty()) r.breakdown = score(r.output, *reference);
  return r;
}


// ---------------------------------------------------------------------------
// Reports and dumps. Dumps print the exact arrays the recognizer consumed.

inline std::string format_f0_dump(const PitchContour& c) {
  std::string out = "time,f0,strength\n";
  char buf[128];
  for (const auto& f : c.frames) {
    std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g\n", f.time, f.f0, f.strength);
    out += buf;
  }
  return out;
}

inline std::string format_kinematics_dump(const GestureStream& stream) {
  std::string out = "t,hand_vx,hand_vy,hand_ax,hand_ay,head_vx,head_vy,hand_speed\n";
  char buf[320];
  for (const auto& g : stream) {
    std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", g.t, g.hand_vx, g.hand_vy,
                  g.hand_ax, g.hand_ay, g.head_vx, g.head_vy, g.hand_speed);
    out += buf;
  }
  return out;
}

/// {id, segmentation: [...], breakdown?}; breakdown only with a reference.
inline nlohmann::ordered_json recognition_json(const std::string& id, const Recognition& r, FusionMode mode) {
  nlohmann::ordered_json j;
  j["id"] = id;
  auto seg = nlohmann::ordered_json::array();
  for (const auto& s : r.output) seg.push_back(to_json(s));
  j["segmentation"] = seg;
  if (r.breakdown) j["breakdown"] = report_json(mode, *r.breakdown);
  return j;
}

struct Evaluation {
  ErrorBreakdown total;
  std::vector<Recognition> recordings;
};

/// Recognizes every recording (each must carry a reference) and sums the
/// breakdowns.
inline Evaluation evaluate(const std::vector<LoadedRecording>& recs, const TrainedModels& m, FusionMode mode,
                           const PipelineConfig& cfg, int jobs = 1) {
  Evaluation ev;
  ev.recordings.resize(recs.size());
  parallel_for(recs.size(), jobs, [&](std::size_t i) {
    ev.recordings[i] = recognize(recs[i].audio, recs[i].track, speaker_name(recs[i].entry.speaker), m, mode, cfg,
                                 &recs[i].reference);
  });
  for (const auto& r : ev.recordings) {
    if (r.breakdown) ev.total += *r.breakdown;
  }
  return ev;
}

}  // namespace prosogest
