// prosogest/signal_io.hpp
//
// WAV and trajectory-CSV ingestion, plus the writers used by the pipeline
// (WAV, trajectory CSV, segmentation JSON-lines). Audio and trajectory share
// t = 0 at the start of their files.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "prosogest/error.hpp"
#include "prosogest/phoneme.hpp"

namespace prosogest {

struct AudioBuffer {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate = 16000;

  double duration() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

struct TrajectoryFrame {
  double t = 0.0;
  double hand_x = 0.0;
  double hand_y = 0.0;
  double head_x = 0.0;
  double head_y = 0.0;

  bool operator==(const TrajectoryFrame&) const = default;
};

struct TrajectoryTrack {
  std::vector<TrajectoryFrame> frames;
  double frame_rate = 25.0;
};

inline constexpr double kMinAudioSeconds = 0.1;
inline constexpr double kFrameJitterTolerance = 1e-6;
inline constexpr std::string_view kTrajectoryHeader = "t,hand_x,hand_y,head_x,head_y";

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// WAV

namespace detail {

inline std::uint32_t read_u32le(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline std::uint16_t read_u16le(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Parses an in-memory RIFF/WAVE image (PCM, 16-bit, mono or stereo).
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16le;
  using detail::read_u32le;
  if (bytes.size() < 12 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != "RIFF" ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()) + 8, 4) != "WAVE") {
    throw Error(ErrorCode::CorruptHeader, "missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string_view id(reinterpret_cast<const char*>(bytes.data()) + pos, 4);
    const std::uint32_t size = read_u32le(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + size > bytes.size()) {
        throw Error(ErrorCode::CorruptHeader, "truncated fmt chunk");
      }
      const std::uint16_t format = read_u16le(bytes, body);
      channels = read_u16le(bytes, body + 2);
      rate = read_u32le(bytes, body + 4);
      bits = read_u16le(bytes, body + 14);
      if (format != 1) {
        throw Error(ErrorCode::UnsupportedFormat,
                    "audio format " + std::to_string(format) + " is not PCM");
      }
      if (bits != 16) {
        throw Error(ErrorCode::UnsupportedFormat,
                    std::to_string(bits) + "-bit samples (need 16-bit)");
      }
      if (channels != 1 && channels != 2) {
        throw Error(ErrorCode::UnsupportedFormat,
                    std::to_string(channels) + " channels (need mono or stereo)");
      }
      if (rate == 0) throw Error(ErrorCode::CorruptHeader, "zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::CorruptHeader, "data chunk before fmt chunk");
      if (body + size > bytes.size()) {
        throw Error(ErrorCode::CorruptHeader, "data chunk runs past end of file");
      }
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t n = size / frame_bytes;
      AudioBuffer audio;
      audio.sample_rate = static_cast<int>(rate);
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto raw = static_cast<std::int16_t>(read_u16le(bytes, body + i * frame_bytes + 2 * c));
          acc += static_cast<double>(raw) / 32768.0;
        }
        audio.samples[i] = acc / channels;
      }
      if (audio.duration() < kMinAudioSeconds) {
        throw Error(ErrorCode::EmptyAudio,
                    "audio is " + std::to_string(audio.duration()) + " s (minimum 0.1 s)");
      }
      return audio;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::CorruptHeader, have_fmt ? "no data chunk" : "no fmt chunk");
}

inline AudioBuffer load_audio(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return decode_wav({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()});
}

/// 16-bit PCM RIFF image with `channels` identical copies of each sample.
inline std::string encode_wav(const AudioBuffer& audio, int channels = 1) {
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  const auto ch = static_cast<std::uint16_t>(channels);
  const std::uint32_t data_bytes = n * 2u * ch;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32le(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, ch);
  detail::put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate));
  detail::put_u32le(out, static_cast<std::uint32_t>(audio.sample_rate) * 2u * ch);
  detail::put_u16le(out, static_cast<std::uint16_t>(2 * ch));
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, data_bytes);
  for (double s : audio.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    for (int c = 0; c < ch; ++c) detail::put_u16le(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

inline void write_audio(const std::filesystem::path& path, const AudioBuffer& audio) {
  write_file_atomic(path, encode_wav(audio));
}

// ---------------------------------------------------------------------------
// Trajectory CSV

namespace detail {

inline bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size() && std::isfinite(out);
}

}  // namespace detail

inline TrajectoryTrack parse_trajectory(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != kTrajectoryHeader) {
    throw Error(ErrorCode::MalformedRow,
                "header must be exactly '" + std::string(kTrajectoryHeader) + "'");
  }

  TrajectoryTrack track;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    std::vector<std::string_view> fields;
    std::string_view rest = lines[ln];
    for (auto comma = rest.find(','); comma != std::string_view::npos; comma = rest.find(',')) {
      fields.push_back(rest.substr(0, comma));
      rest.remove_prefix(comma + 1);
    }
    fields.push_back(rest);
    std::array<double, 5> v{};
    bool ok = fields.size() == v.size();
    for (std::size_t k = 0; ok && k < v.size(); ++k) ok = detail::parse_double(fields[k], v[k]);
    if (!ok) {
      throw Error(ErrorCode::MalformedRow,
                  "line " + std::to_string(ln + 1) + ": '" + std::string(lines[ln]) + "'");
    }
    track.frames.push_back({v[0], v[1], v[2], v[3], v[4]});
  }
  if (track.frames.size() < 2) {
    throw Error(ErrorCode::MalformedRow, "need at least two rows to establish a frame rate");
  }

  const auto& f = track.frames;
  for (std::size_t i = 1; i < f.size(); ++i) {
    if (!(f[i].t > f[i - 1].t)) {
      throw Error(ErrorCode::NonMonotonicTime,
                  "row " + std::to_string(i + 1) + ": t=" + std::to_string(f[i].t) +
                      " does not exceed previous t=" + std::to_string(f[i - 1].t));
    }
  }
  const double spacing = f[1].t - f[0].t;
  for (std::size_t i = 2; i < f.size(); ++i) {
    if (std::abs((f[i].t - f[i - 1].t) - spacing) > kFrameJitterTolerance) {
      throw Error(ErrorCode::NonUniformRate,
                  "row " + std::to_string(i + 1) + ": spacing deviates from " +
                      std::to_string(spacing) + " s");
    }
  }
  track.frame_rate = static_cast<double>(f.size() - 1) / (f.back().t - f.front().t);
  return track;
}

inline TrajectoryTrack load_trajectory(const std::filesystem::path& path) {
  return parse_trajectory(read_file(path));
}

/// Six decimal places per value.
inline std::string format_trajectory(const TrajectoryTrack& track) {
  std::string out(kTrajectoryHeader);
  out += '\n';
  char buf[160];
  for (const auto& fr : track.frames) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f\n", fr.t, fr.hand_x,
                  fr.hand_y, fr.head_x, fr.head_y);
    out += buf;
  }
  return out;
}

inline void write_trajectory(const std::filesystem::path& path, const TrajectoryTrack& track) {
  write_file_atomic(path, format_trajectory(track));
}

// ---------------------------------------------------------------------------
// Segmentation JSON-lines: {start_s, end_s, label, log_likelihood, prior, posterior}

inline nlohmann::ordered_json to_json(const SegmentInterval& s) {
  nlohmann::ordered_json j;
  j["start_s"] = s.start_s;
  j["end_s"] = s.end_s;
  j["label"] = std::string(name_of(s.label));
  j["log_likelihood"] = s.log_likelihood;
  j["prior"] = s.prior;
  j["posterior"] = s.posterior;
  return j;
}

inline std::string format_segmentation(const Segmentation& seg) {
  std::string out;
  for (const auto& s : seg) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

/// Accepts lines carrying at least {start_s, end_s, label}.
inline Segmentation parse_segmentation(std::string_view text) {
  Segmentation seg;
  std::size_t ln = 0;
  while (!text.empty()) {
    ++ln;
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SegmentInterval s;
      s.start_s = j.at("start_s").get<double>();
      s.end_s = j.at("end_s").get<double>();
      const auto label = j.at("label").get<std::string>();
      const auto cls = parse_class(label);
      if (!cls) throw Error(ErrorCode::MalformedRow, "unknown label '" + label + "'");
      s.label = *cls;
      s.log_likelihood = j.value("log_likelihood", 0.0);
      s.prior = j.value("prior", 1.0);
      s.posterior = j.value("posterior", 1.0);
      seg.push_back(s);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRow, "segmentation line " + std::to_string(ln) + ": " + e.what());
    }
  }
  return seg;
}

inline Segmentation load_segmentation(const std::filesystem::path& path) {
  return parse_segmentation(read_file(path));
}

inline void write_segmentation(const std::filesystem::path& path, const Segmentation& seg) {
  write_file_atomic(path, format_segmentation(seg));
}

}  // namespace prosogest
