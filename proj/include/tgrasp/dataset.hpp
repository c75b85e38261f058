#pragma once

// Episode datasets: one header line followed by one tab-separated line per
// 160 Hz frame.
//
//   #tgrasp-dataset version=1 rate_hz=160 taxels_per_finger=16 kind=gp object=ink seed=7
//   t_tick  S[32]  theta_deg  P[7]  dS[32]  dtheta_deg  label
//
// Reals are written with 9 significant digits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tgrasp/errors.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/split.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

enum class DatasetKind { gp, stab, ga };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gp: return "gp";
    case DatasetKind::stab: return "stab";
    case DatasetKind::ga: return "ga";
  }
  return "?";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "gp") return DatasetKind::gp;
  if (s == "stab") return DatasetKind::stab;
  if (s == "ga") return DatasetKind::ga;
  throw ValidationError("kind", "unknown dataset kind '" + std::string(s) + "'");
}

enum class FrameLabel { stable, unstable, dropped, na };

inline std::string_view to_string(FrameLabel l) {
  switch (l) {
    case FrameLabel::stable: return "stable";
    case FrameLabel::unstable: return "unstable";
    case FrameLabel::dropped: return "dropped";
    case FrameLabel::na: return "n/a";
  }
  return "?";
}

inline bool frame_label_from_string(std::string_view s, FrameLabel& out) {
  if (s == "stable") out = FrameLabel::stable;
  else if (s == "unstable") out = FrameLabel::unstable;
  else if (s == "dropped") out = FrameLabel::dropped;
  else if (s == "n/a") out = FrameLabel::na;
  else return false;
  return true;
}

struct DatasetHeader {
  int version = 1;
  int rate_hz = sim::kTickHz;
  int taxels_per_finger = tactile::kTaxelsPerFinger;
  DatasetKind kind = DatasetKind::gp;
  std::string object_name;
  std::uint64_t seed = 0;

  bool operator==(const DatasetHeader&) const = default;
};

struct Frame {
  std::int64_t t_tick = 0;
  TaxelArray S{};
  double theta_deg = 0.0;
  Pose P = kTopGraspPose;
  TaxelArray dS{};
  double dtheta_deg = 0.0;
  FrameLabel label = FrameLabel::na;

  bool operator==(const Frame&) const = default;
};

struct EpisodeRecord {
  DatasetHeader header;
  std::vector<Frame> frames;

  bool operator==(const EpisodeRecord&) const = default;
};

inline constexpr std::size_t kFieldsPerFrame = 1 + tactile::kTaxels + 1 + 7 + tactile::kTaxels + 1 + 1;

namespace detail {

inline void append_real(std::string& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);  // no "-0"
  out.append(buf, static_cast<std::size_t>(n));
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_real(std::string_view s, std::size_t lineno) {
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || !std::isfinite(v)) {
    throw ParseError("bad number '" + tmp + "'", lineno);
  }
  return v;
}

inline std::int64_t parse_int(std::string_view s, std::size_t lineno) {
  std::string tmp(s);
  char* end = nullptr;
  const long long v = std::strtoll(tmp.c_str(), &end, 10);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw ParseError("bad integer '" + tmp + "'", lineno);
  return v;
}

}  // namespace detail

inline std::string format_header(const DatasetHeader& h) {
  std::ostringstream os;
  os << "#tgrasp-dataset version=" << h.version << " rate_hz=" << h.rate_hz
     << " taxels_per_finger=" << h.taxels_per_finger << " kind=" << to_string(h.kind) << " object=" << h.object_name
     << " seed=" << h.seed;
  return os.str();
}

inline std::string format_frame(const Frame& f) {
  std::string line;
  line.reserve(1024);
  line += std::to_string(f.t_tick);
  auto put = [&](double v) {
    line += '\t';
    detail::append_real(line, v);
  };
  for (double v : f.S) put(v);
  put(f.theta_deg);
  for (double v : f.P) put(v);
  for (double v : f.dS) put(v);
  put(f.dtheta_deg);
  line += '\t';
  line += to_string(f.label);
  return line;
}

inline std::string format_dataset(const EpisodeRecord& rec) {
  std::string out = format_header(rec.header);
  out += '\n';
  for (const auto& f : rec.frames) {
    out += format_frame(f);
    out += '\n';
  }
  return out;
}

inline void write_dataset(const std::string& path, const EpisodeRecord& rec) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  out << format_dataset(rec);
  if (!out) throw DataError("short write to dataset '" + path + "'");
}

inline DatasetHeader parse_header(std::string_view line) {
  constexpr std::string_view tag = "#tgrasp-dataset";
  if (line.substr(0, tag.size()) != tag) throw ParseError("missing dataset header", 1);
  DatasetHeader h;
  bool seen_version = false, seen_kind = false;
  std::istringstream is{std::string(line.substr(tag.size()))};
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError("malformed header field '" + tok + "'", 1);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "version") {
      h.version = static_cast<int>(detail::parse_int(val, 1));
      seen_version = true;
    } else if (key == "rate_hz") {
      h.rate_hz = static_cast<int>(detail::parse_int(val, 1));
    } else if (key == "taxels_per_finger") {
      h.taxels_per_finger = static_cast<int>(detail::parse_int(val, 1));
    } else if (key == "kind") {
      try {
        h.kind = dataset_kind_from_string(val);
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), 1);
      }
      seen_kind = true;
    } else if (key == "object") {
      h.object_name = val;
    } else if (key == "seed") {
      h.seed = static_cast<std::uint64_t>(detail::parse_int(val, 1));
    } else {
      throw ParseError("unknown header field '" + key + "'", 1);
    }
  }
  if (!seen_version) throw ParseError("header lacks version", 1);
  if (h.version != 1) throw ParseError("unsupported dataset version " + std::to_string(h.version), 1);
  if (!seen_kind) throw ParseError("header lacks kind", 1);
  if (h.rate_hz != sim::kTickHz) throw ParseError("rate_hz must be 160", 1);
  if (h.taxels_per_finger != tactile::kTaxelsPerFinger) throw ParseError("taxels_per_finger must be 16", 1);
  return h;
}

inline Frame parse_frame(std::string_view line, std::size_t lineno) {
  const auto fields = detail::split_tabs(line);
  if (fields.size() != kFieldsPerFrame) {
    throw ParseError("expected " + std::to_string(kFieldsPerFrame) + " fields, found " + std::to_string(fields.size()),
                     lineno);
  }
  Frame f;
  std::size_t i = 0;
  f.t_tick = detail::parse_int(fields[i++], lineno);
  for (auto& v : f.S) v = detail::parse_real(fields[i++], lineno);
  f.theta_deg = detail::parse_real(fields[i++], lineno);
  for (auto& v : f.P) v = detail::parse_real(fields[i++], lineno);
  for (auto& v : f.dS) v = detail::parse_real(fields[i++], lineno);
  f.dtheta_deg = detail::parse_real(fields[i++], lineno);
  if (!frame_label_from_string(fields[i], f.label)) {
    throw ParseError("unknown label '" + std::string(fields[i]) + "'", lineno);
  }
  return f;
}

/// Parses a dataset; structural problems (version, field count, tick gaps,
/// truncation) raise ParseError with the 1-based line number.
inline EpisodeRecord parse_dataset(std::istream& in) {
  EpisodeRecord rec;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  rec.header = parse_header(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (in.eof() && !line.empty()) throw ParseError("truncated final line", lineno);
    if (line.empty()) throw ParseError("blank line", lineno);
    Frame f = parse_frame(line, lineno);
    if (!rec.frames.empty() && f.t_tick != rec.frames.back().t_tick + 1) {
      throw ParseError("tick " + std::to_string(f.t_tick) + " does not follow " +
                           std::to_string(rec.frames.back().t_tick),
                       lineno);
    }
    rec.frames.push_back(std::move(f));
  }
  return rec;
}

inline EpisodeRecord read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

struct ValidationIssue {
  std::size_t line = 0;  // 0 when not tied to a line
  std::string message;
};

/// Semantic checks beyond parsing: taxel and angle ranges, unit quaternion,
/// and dS_k == S_k - S_{k-1} for every frame after the first.
inline std::vector<ValidationIssue> validate_record(const EpisodeRecord& rec) {
  std::vector<ValidationIssue> issues;
  for (std::size_t k = 0; k < rec.frames.size(); ++k) {
    const auto& f = rec.frames[k];
    const std::size_t line = k + 2;
    for (double v : f.S) {
      if (!(v >= 0.0)) {
        issues.push_back({line, "negative taxel value"});
        break;
      }
    }
    if (!(f.theta_deg >= sim::kThetaMin && f.theta_deg <= sim::kThetaMax)) {
      issues.push_back({line, "theta outside [0, 90]"});
    }
    double qn = 0.0;
    for (std::size_t i = 3; i < 7; ++i) qn += f.P[i] * f.P[i];
    if (std::abs(std::sqrt(qn) - 1.0) > 1e-6) issues.push_back({line, "pose quaternion is not unit norm"});
    if (rec.header.kind == DatasetKind::ga && std::abs(f.dtheta_deg) > 5.0 + 1e-9) {
      issues.push_back({line, "dtheta exceeds the 5 degree actuation bound"});
    }
    if (k > 0) {
      if (f.t_tick != rec.frames[k - 1].t_tick + 1) issues.push_back({line, "tick sequence broken"});
      const auto& prev = rec.frames[k - 1];
      for (std::size_t i = 0; i < f.S.size(); ++i) {
        const double expect = f.S[i] - prev.S[i];
        const double tol = 1e-6 * (1.0 + std::abs(f.S[i]) + std::abs(prev.S[i]));
        if (std::abs(f.dS[i] - expect) > tol) {
          issues.push_back({line, "dS[" + std::to_string(i) + "] inconsistent with consecutive S"});
          break;
        }
      }
    }
  }
  return issues;
}

// Parses and validates a file; returns every issue found (empty when valid).
inline std::vector<ValidationIssue> validate_file(const std::string& path) {
  try {
    return validate_record(read_dataset(path));
  } catch (const ParseError& e) {
    return {{e.line(), e.what()}};
  } catch (const Error& e) {
    return {{0, e.what()}};
  }
}

inline std::string dataset_path(const std::filesystem::path& root, DatasetKind kind, const std::string& object,
                                std::uint64_t seed) {
  return (root / "data" / std::string(to_string(kind)) / (object + "_" + std::to_string(seed) + ".tsv")).string();
}

// Dataset files of one kind under root/data/<kind>, sorted by name.
inline std::vector<std::string> list_datasets(const std::filesystem::path& root, DatasetKind kind) {
  const auto dir = root / "data" / std::string(to_string(kind));
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tsv") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tgrasp
