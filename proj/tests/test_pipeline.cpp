#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "prosogest/pipeline.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
namespace pg = prosogest;
using PC = pg::PhonemeClass;

namespace {

void expect_error(pg::ErrorCode code, const std::string& needle, const auto& f) {
  try {
    f();
    FAIL() << "expected " << pg::to_string(code);
  } catch (const pg::Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

nlohmann::json default_config_json() { return nlohmann::json(pg::to_json(pg::PipelineConfig{})); }

pg::PipelineConfig config_with(const nlohmann::json& patch) {
  auto j = default_config_json();
  j.merge_patch(patch);
  return pg::config_from_json(j);
}

// Just the JSON Schema keywords the config schema uses.
void check_schema(const nlohmann::json& v, const nlohmann::json& s, const std::string& at,
                  std::vector<std::string>& problems) {
  auto bad = [&](const std::string& why) { problems.push_back(at + ": " + why); };
  auto type_ok = [&](const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    return false;
  };
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || type_ok(t.get<std::string>());
    } else {
      ok = type_ok(s["type"].get<std::string>());
    }
    if (!ok) return bad("type");
  }
  if (s.contains("const") && v != s["const"]) bad("const");
  if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end()) bad("enum");
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) bad("minimum");
    if (s.contains("maximum") && x > s["maximum"].get<double>()) bad("maximum");
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) bad("exclusiveMinimum");
    if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>()) bad("exclusiveMaximum");
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) bad("minItems");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) bad("maxItems");
    if (s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) check_schema(v[i], s["items"], at + "[" + std::to_string(i) + "]", problems);
    }
  }
  if (v.is_object()) {
    for (const auto& r : s.value("required", nlohmann::json::array())) {
      if (!v.contains(r.get<std::string>())) bad("missing " + r.get<std::string>());
    }
    const auto props = s.value("properties", nlohmann::json::object());
    for (const auto& [k, x] : v.items()) {
      if (props.contains(k)) check_schema(x, props[k], at + "." + k, problems);
      else if (s.value("additionalProperties", true) == false) bad("unexpected " + k);
    }
  }
}

nlohmann::json load_schema() { return nlohmann::json::parse(pg::read_file(PROSOGEST_SCHEMA_PATH)); }

// One small corpus and its models, shared by the end-to-end tests.
struct Trained {
  pg::PipelineConfig cfg;
  fs::path dir;
  std::vector<pg::LoadedRecording> train, test;
  pg::TrainedModels models;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained t;
    t.cfg.corpus.n_recordings = 30;
    t.cfg.train_fraction = 0.7;
    t.dir = pg::testing::scratch_dir("pipeline_fixture_" + std::to_string(::getpid()));
    const auto m = pg::generate_corpus(t.cfg.corpus, t.dir / "corpus", 2);
    const auto [tr, te] = pg::split(m.recordings.size(), t.cfg.train_fraction, t.cfg.seed);
    t.train = pg::load_recordings(t.dir / "corpus", m, tr, 2);
    t.test = pg::load_recordings(t.dir / "corpus", m, te, 2);
    t.models = pg::train_models(t.train, t.cfg, 2);
    return t;
  }();
  return t;
}

std::string speaker(const pg::LoadedRecording& r) { return pg::speaker_name(r.entry.speaker); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsRoundTrip) {
  const auto j = pg::to_json(pg::PipelineConfig{});
  EXPECT_EQ(pg::to_json(pg::config_from_json(nlohmann::json(j))).dump(), j.dump());
}

TEST(Config, NonDefaultValuesRoundTrip) {
  const auto c = config_with({{"seed", 5},
                              {"pitch", {{"f0_floor", 60.0}, {"max_gap_jump_hz", 12.5}}},
                              {"prominence", {{"threshold_override", 7.5}}},
                              {"hmm", {{"states", {{"Hold", 3}}}, {"covariance", "full"}}},
                              {"fusion", {{"mode", "gesture_only"}, {"prior_injection", true}}},
                              {"split", {{"train_fraction", 0.3}}},
                              {"paths", {{"model_dir", "m2"}}}});
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.pitch.f0_floor, 60.0);
  EXPECT_EQ(c.pitch.max_gap_jump_hz, 12.5);
  EXPECT_EQ(c.threshold_override, 7.5);
  EXPECT_EQ(c.hmm_states[pg::index_of(PC::Hold)], 3);
  EXPECT_EQ(c.covariance, pg::CovarianceKind::Full);
  EXPECT_EQ(c.mode, pg::FusionMode::GestureOnly);
  EXPECT_TRUE(c.prior_injection);
  EXPECT_EQ(c.train_fraction, 0.3);
  EXPECT_EQ(c.model_dir, "m2");
  EXPECT_EQ(pg::to_json(pg::config_from_json(nlohmann::json(pg::to_json(c)))).dump(), pg::to_json(c).dump());
}

TEST(Config, OnlySchemaVersionIsRequired) {
  const auto c = pg::config_from_json({{"schema_version", 1}});
  EXPECT_EQ(pg::to_json(c).dump(), pg::to_json(pg::PipelineConfig{}).dump());
}

TEST(Config, ErrorsNameTheField) {
  expect_error(pg::ErrorCode::InvalidConfig, "schema_version", [] { pg::config_from_json({{"seed", 1}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "schema_version", [] { config_with({{"schema_version", 2}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "colour", [] { config_with({{"colour", 1}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "pitch.hop", [] { config_with({{"pitch", {{"hop", 0.01}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "fusion.mode", [] { config_with({{"fusion", {{"mode", "both"}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "fusion.prior_injection",
               [] { config_with({{"fusion", {{"prior_injection", "yes"}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "hmm.states.Wave", [] { config_with({{"hmm", {{"states", {{"Wave", 2}}}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "hmm.states.Hold", [] { config_with({{"hmm", {{"states", {{"Hold", 0}}}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "hmm.covariance", [] { config_with({{"hmm", {{"covariance", "banded"}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "hmm.insertion_penalty",
               [] { config_with({{"hmm", {{"insertion_penalty", 3.0}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "pitch.f0_ceiling", [] { config_with({{"pitch", {{"f0_ceiling", 50.0}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "prominence.target_miss_rate",
               [] { config_with({{"prominence", {{"target_miss_rate", 0.0}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "split.train_fraction", [] { config_with({{"split", {{"train_fraction", 1.0}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "corpus", [] { config_with({{"corpus", {{"n_recordings", "many"}}}}); });
  expect_error(pg::ErrorCode::InvalidConfig, "config", [] { pg::config_from_json(nlohmann::json::array()); });
}

TEST(Config, LoadFromFile) {
  const auto dir = pg::testing::scratch_dir("config_file");
  pg::write_file_atomic(dir / "ok.json", R"({"schema_version": 1, "fusion": {"mode": "gesture-only"}})");
  EXPECT_EQ(pg::load_config(dir / "ok.json").mode, pg::FusionMode::GestureOnly);
  pg::write_file_atomic(dir / "broken.json", "{\"schema_version\": 1,");
  expect_error(pg::ErrorCode::InvalidConfig, "broken.json", [&] { pg::load_config(dir / "broken.json"); });
  expect_error(pg::ErrorCode::InvalidConfig, "absent.json", [&] { pg::load_config(dir / "absent.json"); });
}

TEST(ConfigSchema, DefaultConfigConforms) {
  std::vector<std::string> problems;
  check_schema(default_config_json(), load_schema(), "$", problems);
  for (const auto& p : problems) ADD_FAILURE() << p;
}

TEST(ConfigSchema, EverySchemaFieldIsWritten) {
  // the schema and to_json describe the same tree
  std::function<void(const nlohmann::json&, const nlohmann::json&, const std::string&)> walk =
      [&](const nlohmann::json& v, const nlohmann::json& s, const std::string& at) {
        if (!s.contains("properties")) return;
        for (const auto& [k, sub] : s["properties"].items()) {
          ASSERT_TRUE(v.contains(k)) << at << "." << k << " is in the schema but not written";
          walk(v[k], sub, at + "." + k);
        }
      };
  walk(default_config_json(), load_schema(), "$");
}

TEST(ConfigSchema, RejectsWhatTheParserRejects) {
  const auto schema = load_schema();
  for (const auto& patch : {nlohmann::json{{"colour", 1}}, nlohmann::json{{"fusion", {{"mode", "both"}}}},
                            nlohmann::json{{"split", {{"train_fraction", 1.0}}}},
                            nlohmann::json{{"corpus", {{"stroke_weights", {1.0, 1.0}}}}}}) {
    auto j = default_config_json();
    j.merge_patch(patch);
    std::vector<std::string> problems;
    check_schema(j, schema, "$", problems);
    EXPECT_FALSE(problems.empty()) << patch.dump();
    EXPECT_THROW(pg::config_from_json(j), pg::Error) << patch.dump();
  }
}

// ---------------------------------------------------------------------------
// Parallel helper

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (int jobs : {1, 3, 16}) {
    std::vector<int> hits(37, 0);
    pg::parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  for (int jobs : {1, 4}) {
    try {
      pg::parallel_for(20, jobs, [](std::size_t i) {
        if (i == 7 || i == 13) throw pg::Error(pg::ErrorCode::InvalidArgument, "item " + std::to_string(i));
      });
      FAIL();
    } catch (const pg::Error& e) {
      EXPECT_NE(std::string(e.what()).find("item 7"), std::string::npos);
    }
  }
}

// ---------------------------------------------------------------------------
// Training and recognition

TEST(Train, OneProminenceModelPerTrainingSpeaker) {
  const auto& t = trained();
  std::set<std::string> speakers;
  for (const auto& r : t.train) speakers.insert(speaker(r));
  ASSERT_EQ(t.models.prominence.size(), speakers.size());
  for (const auto& [name, m] : t.models.prominence) {
    EXPECT_TRUE(speakers.count(name));
    EXPECT_GT(m.threshold_d2, 0.0);
  }
  double total = 0.0;
  for (double p : t.models.cooccurrence.pi) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Train, ModelFilesAreReproducible) {
  const auto& t = trained();
  const auto a = t.dir / "models_a";
  const auto b = t.dir / "models_b";
  pg::save_models(a, t.models);
  pg::save_models(b, pg::train_models(t.train, t.cfg, 1));  // retrained, single-threaded
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(pg::read_file(e.path()), pg::read_file(b / e.path().filename())) << e.path().filename();
  }
  EXPECT_EQ(files, 6u + 2u + t.models.prominence.size());

  // load then save again: same bytes
  const auto c = t.dir / "models_c";
  pg::save_models(c, pg::load_models(a));
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(pg::read_file(e.path()), pg::read_file(c / e.path().filename())) << e.path().filename();
  }
}

TEST(Train, MissingStrokeClassIsNamed) {
  pg::PipelineConfig cfg;
  cfg.corpus.n_recordings = 8;
  cfg.corpus.stroke_weights = {1.0, 1.0, 0.0};
  std::vector<pg::LoadedRecording> recs;
  for (int i = 0; i < cfg.corpus.n_recordings; ++i) {
    auto r = pg::generate(cfg.corpus, static_cast<std::size_t>(i));
    pg::LoadedRecording l;
    l.entry.id = r.id;
    l.entry.speaker = r.speaker;
    l.audio = std::move(r.audio);
    l.track = std::move(r.track);
    l.reference = std::move(r.reference);
    l.accents = std::move(r.accents);
    recs.push_back(std::move(l));
  }
  expect_error(pg::ErrorCode::InsufficientClassData, "CircleStroke", [&] { pg::train_models(recs, cfg); });
}

TEST(LoadModels, MissingPiecesAreMissingModel) {
  const auto& t = trained();
  const auto dir = pg::testing::scratch_dir("models_missing");
  expect_error(pg::ErrorCode::MissingModel, "not a directory", [&] { pg::load_models(dir / "nope"); });
  expect_error(pg::ErrorCode::MissingModel, "network.json", [&] { pg::load_models(dir); });
  pg::save_models(dir, t.models);
  fs::remove(dir / pg::hmm_filename(PC::Hold));
  expect_error(pg::ErrorCode::MissingModel, "hmm_Hold", [&] { pg::load_models(dir); });
  pg::save_models(dir, t.models);
  for (const auto& [spk, m] : t.models.prominence) fs::remove(dir / pg::prominence_filename(spk));
  expect_error(pg::ErrorCode::MissingModel, "prominence", [&] { pg::load_models(dir); });
}

TEST(Recognize, UnknownSpeakerIsMissingModel) {
  const auto& t = trained();
  const auto& r = t.test.front();
  expect_error(pg::ErrorCode::MissingModel, "spk99",
               [&] { pg::recognize(r.audio, r.track, "spk99", t.models, pg::FusionMode::Fused, t.cfg); });
}

TEST(Recognize, OutputTilesTheStream) {
  const auto& t = trained();
  for (const auto& r : t.test) {
    for (auto mode : {pg::FusionMode::GestureOnly, pg::FusionMode::Fused}) {
      const auto rec = pg::recognize(r.audio, r.track, speaker(r), t.models, mode, t.cfg);
      ASSERT_FALSE(rec.output.empty());
      EXPECT_DOUBLE_EQ(rec.output.front().start_s, rec.analysis.stream.front().t);
      for (std::size_t i = 1; i < rec.output.size(); ++i) {
        EXPECT_EQ(rec.output[i].start_s, rec.output[i - 1].end_s);
        EXPECT_LT(rec.output[i].start_s, rec.output[i].end_s);
      }
      EXPECT_EQ(rec.output.back().end_s, rec.decoded.back().end_s);
    }
  }
}

TEST(Recognize, BreakdownOnlyWithReference) {
  const auto& t = trained();
  const auto& r = t.test.front();
  const auto without = pg::recognize(r.audio, r.track, speaker(r), t.models, pg::FusionMode::Fused, t.cfg);
  EXPECT_FALSE(without.breakdown);
  EXPECT_FALSE(pg::recognition_json(r.entry.id, without, pg::FusionMode::Fused).contains("breakdown"));
  const auto with = pg::recognize(r.audio, r.track, speaker(r), t.models, pg::FusionMode::Fused, t.cfg, &r.reference);
  ASSERT_TRUE(with.breakdown);
  EXPECT_EQ(*with.breakdown, pg::score(with.output, r.reference));
  EXPECT_EQ(with.breakdown->n_reference, static_cast<long>(r.reference.size()));
  const auto j = pg::recognition_json(r.entry.id, with, pg::FusionMode::Fused);
  EXPECT_EQ(j["id"], r.entry.id);
  EXPECT_EQ(j["segmentation"].size(), with.output.size());
  EXPECT_EQ(j["breakdown"]["mode"], "fused");
}

TEST(Recognize, GestureOnlyIgnoresTheCooccurrenceModel) {
  const auto& t = trained();
  auto other = t.models;
  other.cooccurrence.pi = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
  for (const auto& r : t.test) {
    const auto a = pg::recognize(r.audio, r.track, speaker(r), t.models, pg::FusionMode::GestureOnly, t.cfg);
    const auto b = pg::recognize(r.audio, r.track, speaker(r), other, pg::FusionMode::GestureOnly, t.cfg);
    EXPECT_EQ(pg::format_segmentation(a.output), pg::format_segmentation(b.output));
  }
}

TEST(Recognize, EvaluateSumsPerRecordingBreakdowns) {
  const auto& t = trained();
  const auto ev = pg::evaluate(t.test, t.models, pg::FusionMode::Fused, t.cfg, 3);
  pg::ErrorBreakdown sum;
  long refs = 0;
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    ASSERT_TRUE(ev.recordings[i].breakdown);
    sum += *ev.recordings[i].breakdown;
    refs += static_cast<long>(t.test[i].reference.size());
    const auto one = pg::recognize(t.test[i].audio, t.test[i].track, speaker(t.test[i]), t.models,
                                   pg::FusionMode::Fused, t.cfg, &t.test[i].reference);
    EXPECT_EQ(pg::format_segmentation(one.output), pg::format_segmentation(ev.recordings[i].output));
  }
  EXPECT_EQ(sum, ev.total);
  EXPECT_EQ(ev.total.n_reference, refs);
  EXPECT_EQ(ev.total.hits + ev.total.deletions + ev.total.substitutions, refs);
}

// ---------------------------------------------------------------------------
// Prior injection

TEST(EntryBonus, UniformPriorGivesZeroBonus) {
  const auto& t = trained();
  const auto a = pg::analyze(t.test.front().audio, t.test.front().track, t.cfg);
  pg::IntervalScores s;
  s.start_s = 0.0;
  s.end_s = 1e9;
  s.prior.fill(1.0 / pg::kNumClasses);
  const std::vector<pg::IntervalScores> one = {s};
  const auto b = pg::entry_bonus(a.stream, one);
  EXPECT_EQ(b.rows(), static_cast<Eigen::Index>(a.stream.size()));
  EXPECT_EQ(b.cols(), static_cast<Eigen::Index>(pg::kNumClasses));
  EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
  const auto plain = pg::decode_stream(t.models.network, a.stream);
  const auto bonused = pg::decode_stream(t.models.network, a.stream, &b);
  EXPECT_EQ(pg::format_segmentation(plain), pg::format_segmentation(bonused));
}

TEST(EntryBonus, FollowsTheCoveringInterval) {
  std::vector<pg::GestureFeature> stream(10);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i].t = 0.04 * static_cast<double>(i);
  pg::IntervalScores a, b;
  a.start_s = 0.0;
  a.end_s = 0.2;
  a.prior = {0.5, 0.25, 0.25, 0.0, 0.0, 0.0};
  b.start_s = 0.2;
  b.end_s = 0.4;
  b.prior = {0.0, 0.0, 0.0, 0.0, 0.2, 0.8};
  const std::vector<pg::IntervalScores> iv = {a, b};
  const auto m = pg::entry_bonus(stream, iv);
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_NEAR(m(4, 1), std::log(0.5), 1e-15);
  EXPECT_EQ(m(4, 3), pg::kNegInf);
  EXPECT_EQ(m(5, 5), 0.0);  // t = 0.2 belongs to the second interval
  EXPECT_NEAR(m(9, 4), std::log(0.25), 1e-15);
}

TEST(EntryBonus, WrongShapeIsRejected) {
  const auto& t = trained();
  const auto a = pg::analyze(t.test.front().audio, t.test.front().track, t.cfg);
  const Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, pg::kNumClasses);
  expect_error(pg::ErrorCode::InvalidArgument, "entry bonus", [&] { pg::decode_stream(t.models.network, a.stream, &b); });
}

// ---------------------------------------------------------------------------
// Dumps

TEST(Dumps, F0DumpIsTheContourUsed) {
  const auto& t = trained();
  const auto& r = t.test.front();
  const auto rec = pg::recognize(r.audio, r.track, speaker(r), t.models, pg::FusionMode::Fused, t.cfg);
  std::istringstream in(pg::format_f0_dump(rec.analysis.contour));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time,f0,strength");
  std::size_t k = 0;
  while (std::getline(in, line)) {
    ASSERT_LT(k, rec.analysis.contour.frames.size());
    double time = 0, f0 = 0, strength = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf", &time, &f0, &strength), 3) << line;
    const auto& f = rec.analysis.contour.frames[k++];
    EXPECT_NEAR(time, f.time, 5e-7);
    EXPECT_EQ(f0, f.f0);  // %.17g round-trips exactly
    EXPECT_EQ(strength, f.strength);
  }
  EXPECT_EQ(k, rec.analysis.contour.frames.size());
  // bridged: equals a fresh preprocess of the raw extraction
  EXPECT_EQ(rec.analysis.contour, pg::preprocess_contour(pg::extract_f0(r.audio, t.cfg.pitch), t.cfg.pitch));
}

TEST(Dumps, KinematicsDumpIsTheStreamUsed) {
  const auto& t = trained();
  const auto& r = t.test.front();
  const auto a = pg::analyze(r.audio, r.track, t.cfg);
  std::istringstream in(pg::format_kinematics_dump(a.stream));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,hand_vx,hand_vy,hand_ax,hand_ay,head_vx,head_vy,hand_speed");
  std::size_t k = 0;
  while (std::getline(in, line)) {
    ASSERT_LT(k, a.stream.size());
    double v[8];
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3], &v[4], &v[5],
                          &v[6], &v[7]),
              8);
    const auto& g = a.stream[k++];
    EXPECT_EQ(v[1], g.hand_vx);
    EXPECT_EQ(v[4], g.hand_ay);
    EXPECT_EQ(v[7], g.hand_speed);
  }
  EXPECT_EQ(k, a.stream.size());
}
