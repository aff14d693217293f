// prosogest: generate / train / recognize / score.
//
// Exit codes: 0 ok, 1 other failure, 2 config or recipe error,
// 3 a class lacks training data, 4 models missing.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prosogest/pipeline.hpp"

namespace fs = std::filesystem;
namespace pg = prosogest;

namespace {

int exit_code(pg::ErrorCode c) {
  switch (c) {
    case pg::ErrorCode::InvalidConfig:
    case pg::ErrorCode::InvalidRecipe: return 2;
    case pg::ErrorCode::InsufficientClassData: return 3;
    case pg::ErrorCode::MissingModel: return 4;
    default: return 1;
  }
}

pg::PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? pg::PipelineConfig{} : pg::load_config(path);
}

std::string or_default(const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; }

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

struct Common {
  std::string config;
  int jobs = 1;
};

int run_generate(const Common& c, const std::string& out_flag) {
  const auto cfg = config_or_default(c.config);
  const fs::path out = or_default(out_flag, cfg.corpus_dir);
  const auto m = pg::generate_corpus(cfg.corpus, out, c.jobs);
  std::size_t phonemes = 0;
  for (const auto& e : m.recordings) phonemes += e.n_phonemes;
  print_json({{"corpus_dir", out.string()}, {"recordings", m.recordings.size()}, {"phonemes", phonemes}});
  return 0;
}

int run_train(const Common& c, const std::string& corpus_flag, const std::string& models_flag) {
  const auto cfg = config_or_default(c.config);
  const fs::path corpus = or_default(corpus_flag, cfg.corpus_dir);
  const fs::path models = or_default(models_flag, cfg.model_dir);
  const auto manifest = pg::load_manifest(corpus);
  const auto [train, test] = pg::split(manifest.recordings.size(), cfg.train_fraction, cfg.seed);
  const auto recs = pg::load_recordings(corpus, manifest, train, c.jobs);
  std::size_t phonemes = 0;
  for (const auto& r : recs) phonemes += r.reference.size();
  const auto m = pg::train_models(recs, cfg, c.jobs);
  pg::save_models(models, m);
  print_json({{"model_dir", models.string()},
              {"train_recordings", train.size()},
              {"test_recordings", test.size()},
              {"train_phonemes", phonemes},
              {"speakers", m.prominence.size()}});
  return 0;
}

struct RecognizeArgs {
  std::string corpus, models, split = "test", recording;
  std::string audio, trajectory, speaker, reference;
  std::string mode, out, dump_f0, dump_kinematics;
};

int run_recognize(const Common& c, const RecognizeArgs& a) {
  const auto cfg = config_or_default(c.config);
  const auto mode = a.mode.empty() ? cfg.mode : pg::parse_mode(a.mode);
  const auto models = pg::load_models(or_default(a.models, cfg.model_dir));

  std::vector<pg::LoadedRecording> recs;
  if (!a.audio.empty() || !a.trajectory.empty()) {
    if (a.audio.empty() || a.trajectory.empty() || a.speaker.empty()) {
      throw pg::Error(pg::ErrorCode::InvalidArgument, "--audio, --trajectory and --speaker go together");
    }
    pg::LoadedRecording r;
    r.entry.id = fs::path(a.audio).stem().string();
    r.audio = pg::load_audio(a.audio);
    r.track = pg::load_trajectory(a.trajectory);
    if (!a.reference.empty()) r.reference = pg::load_segmentation(a.reference);
    recs.push_back(std::move(r));
  } else {
    const fs::path corpus = or_default(a.corpus, cfg.corpus_dir);
    const auto manifest = pg::load_manifest(corpus);
    std::vector<std::size_t> idx;
    if (!a.recording.empty()) {
      for (std::size_t i = 0; i < manifest.recordings.size(); ++i) {
        if (manifest.recordings[i].id == a.recording) idx.push_back(i);
      }
      if (idx.empty()) throw pg::Error(pg::ErrorCode::InvalidArgument, "no recording '" + a.recording + "' in corpus");
    } else {
      const auto [train, test] = pg::split(manifest.recordings.size(), cfg.train_fraction, cfg.seed);
      if (a.split == "test") idx = test;
      else if (a.split == "train") idx = train;
      else for (std::size_t i = 0; i < manifest.recordings.size(); ++i) idx.push_back(i);
    }
    recs = pg::load_recordings(corpus, manifest, idx, c.jobs);
  }

  std::vector<pg::Recognition> results(recs.size());
  pg::parallel_for(recs.size(), c.jobs, [&](std::size_t i) {
    const auto speaker = a.speaker.empty() ? pg::speaker_name(recs[i].entry.speaker) : a.speaker;
    results[i] = pg::recognize(recs[i].audio, recs[i].track, speaker, models, mode, cfg,
                               recs[i].reference.empty() ? nullptr : &recs[i].reference);
  });

  nlohmann::ordered_json report;
  report["mode"] = pg::mode_name(mode);
  auto items = nlohmann::ordered_json::array();
  std::optional<pg::ErrorBreakdown> total;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& id = recs[i].entry.id;
    items.push_back(pg::recognition_json(id, results[i], mode));
    if (results[i].breakdown) {
      if (!total) total = pg::ErrorBreakdown{};
      *total += *results[i].breakdown;
    }
    if (!a.out.empty()) {
      fs::create_directories(a.out);
      pg::write_segmentation(fs::path(a.out) / (id + "." + pg::mode_name(mode) + ".jsonl"), results[i].output);
    }
    if (!a.dump_f0.empty()) {
      fs::create_directories(a.dump_f0);
      pg::write_file_atomic(fs::path(a.dump_f0) / (id + ".f0.csv"), pg::format_f0_dump(results[i].analysis.contour));
    }
    if (!a.dump_kinematics.empty()) {
      fs::create_directories(a.dump_kinematics);
      pg::write_file_atomic(fs::path(a.dump_kinematics) / (id + ".kinematics.csv"),
                            pg::format_kinematics_dump(results[i].analysis.stream));
    }
  }
  report["recordings"] = items;
  if (total) report["summary"] = pg::report_json(mode, *total);
  if (!a.out.empty()) {
    pg::write_file_atomic(fs::path(a.out) / ("report_" + pg::mode_name(mode) + ".json"), report.dump(2) + "\n");
  }
  print_json(report);
  return 0;
}

int run_score(const std::string& hyp, const std::string& ref, const std::string& mode) {
  const auto e = pg::score(pg::load_segmentation(hyp), pg::load_segmentation(ref));
  auto j = pg::report_json(mode.empty() ? pg::FusionMode::Fused : pg::parse_mode(mode), e);
  j["hits"] = e.hits;
  j["deletions"] = e.deletions;
  j["substitutions"] = e.substitutions;
  j["insertions"] = e.insertions;
  print_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prosody-gesture co-occurrence recognition pipeline"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "pipeline config JSON (defaults when omitted)");
  app.add_option("--jobs,-j", common.jobs, "worker threads")->check(CLI::PositiveNumber);

  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a synthetic corpus");
  gen->add_option("--out", gen_out, "corpus directory (default: paths.corpus_dir)");

  std::string train_corpus, train_models;
  auto* train = app.add_subcommand("train", "fit prominence, HMM and co-occurrence models");
  train->add_option("--corpus", train_corpus, "corpus directory");
  train->add_option("--models", train_models, "model directory");

  RecognizeArgs ra;
  auto* rec = app.add_subcommand("recognize", "segment and label recordings");
  rec->add_option("--models", ra.models, "model directory");
  rec->add_option("--corpus", ra.corpus, "corpus directory");
  rec->add_option("--split", ra.split, "which part of the corpus split")->check(CLI::IsMember({"test", "train", "all"}));
  rec->add_option("--recording", ra.recording, "one recording id from the corpus");
  rec->add_option("--audio", ra.audio, "WAV file (instead of a corpus)");
  rec->add_option("--trajectory", ra.trajectory, "trajectory CSV (with --audio)");
  rec->add_option("--speaker", ra.speaker, "prominence model to use, e.g. spk0");
  rec->add_option("--reference", ra.reference, "reference JSON-lines to score against");
  rec->add_option("--mode", ra.mode, "gesture-only or fused (default: fusion.mode)")
      ->check(CLI::IsMember({"gesture-only", "gesture_only", "fused"}));
  rec->add_option("--out", ra.out, "directory for segmentations and the report");
  rec->add_option("--dump-f0", ra.dump_f0, "directory for per-recording F0 CSVs");
  rec->add_option("--dump-kinematics", ra.dump_kinematics, "directory for per-recording feature CSVs");

  std::string hyp, ref, score_mode;
  auto* sc = app.add_subcommand("score", "compare two segmentations");
  sc->add_option("--hyp", hyp, "hypothesis JSON-lines")->required();
  sc->add_option("--ref", ref, "reference JSON-lines")->required();
  sc->add_option("--mode", score_mode, "mode label for the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return run_generate(common, gen_out);
    if (*train) return run_train(common, train_corpus, train_models);
    if (*rec) return run_recognize(common, ra);
    if (*sc) return run_score(hyp, ref, score_mode);
  } catch (const pg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
