#pragma once

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "poba/common.hpp"

namespace poba {

struct CameraParams {
  Vec3 rotation = Vec3::Zero();  // axis-angle, radians
  Vec3 translation = Vec3::Zero();
  double focal = 1.0;
  double k1 = 0.0;
  double k2 = 0.0;

  PoseVec to_vector() const {
    PoseVec v;
    v << rotation, translation, focal, k1, k2;
    return v;
  }
  static CameraParams from_vector(const PoseVec& v) {
    CameraParams c;
    c.rotation = v.segment<3>(0);
    c.translation = v.segment<3>(3);
    c.focal = v[6];
    c.k1 = v[7];
    c.k2 = v[8];
    return c;
  }
  bool operator==(const CameraParams&) const = default;
};

struct Observation {
  std::size_t camera = 0;
  std::size_t point = 0;
  Vec2 pixel = Vec2::Zero();
  bool operator==(const Observation&) const = default;
};

struct BalProblem {
  std::vector<CameraParams> cameras;
  std::vector<Vec3> points;
  std::vector<Observation> observations;

  std::size_t num_cameras() const { return cameras.size(); }
  std::size_t num_points() const { return points.size(); }
  std::size_t num_observations() const { return observations.size(); }
  bool operator==(const BalProblem&) const = default;
};

/// Reported with the 1-based line on which the offending token sits.
class BalParseError : public std::runtime_error {
 public:
  BalParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ParsedBal {
  BalProblem problem;
  std::size_t pruned_cameras = 0;
  std::size_t pruned_points = 0;
};

/// Wraps the rotation vector into the ball of radius 2*pi, keeping the
/// represented rotation.
inline Vec3 canonical_rotation(const Vec3& w) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double n = w.norm();
  if (n < two_pi) return w;
  const double wrapped = std::fmod(n, two_pi);
  return w * (wrapped / n);
}

/// Checks index bounds, pair uniqueness, focal > 0 and full coverage.
inline void validate(const BalProblem& p) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<char> cam_used(p.num_cameras(), 0), pt_used(p.num_points(), 0);
  for (const auto& o : p.observations) {
    if (o.camera >= p.num_cameras() || o.point >= p.num_points())
      throw std::invalid_argument("observation index out of range");
    if (!seen.emplace(o.camera, o.point).second)
      throw std::invalid_argument("duplicate (camera, point) observation");
    cam_used[o.camera] = 1;
    pt_used[o.point] = 1;
  }
  for (const auto& c : p.cameras)
    if (!(c.focal > 0.0)) throw std::invalid_argument("non-positive focal");
  for (char u : cam_used)
    if (!u) throw std::invalid_argument("camera without observations");
  for (char u : pt_used)
    if (!u) throw std::invalid_argument("point without observations");
}

namespace detail {

class BalTokenizer {
 public:
  explicit BalTokenizer(std::istream& in) : in_(in) {}

  /// Returns false at end of stream.
  bool next(std::string& tok) {
    tok.clear();
    int ch;
    while ((ch = in_.get()) != EOF) {
      if (ch == '\n') {
        ++line_;
        continue;
      }
      if (!std::isspace(ch)) break;
    }
    if (ch == EOF) return false;
    token_line_ = line_;
    tok.push_back(static_cast<char>(ch));
    while ((ch = in_.peek()) != EOF && !std::isspace(ch)) {
      tok.push_back(static_cast<char>(in_.get()));
    }
    return true;
  }

  std::string require(const char* what) {
    std::string tok;
    if (!next(tok))
      throw BalParseError(std::string("truncated stream, expected ") + what,
                          line_);
    return tok;
  }

  double real(const char* what) {
    const std::string tok = require(what);
    const char* begin = tok.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end != begin + tok.size() || errno == ERANGE || !std::isfinite(v))
      throw BalParseError("non-numeric token '" + tok + "' for " + what,
                          token_line_);
    return v;
  }

  long long integer(const char* what) {
    const std::string tok = require(what);
    const char* begin = tok.c_str();
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(begin, &end, 10);
    if (end != begin + tok.size() || errno == ERANGE)
      throw BalParseError("non-integer token '" + tok + "' for " + what,
                          token_line_);
    return v;
  }

  std::size_t token_line() const { return token_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t token_line_ = 1;
};

}  // namespace detail

/// Parses the BAL text format and drops cameras/points nobody observes.
inline ParsedBal parse_bal(std::istream& in) {
  detail::BalTokenizer tok(in);
  const long long n_cam = tok.integer("camera count");
  const long long n_pt = tok.integer("point count");
  const long long n_obs = tok.integer("observation count");
  if (n_cam < 0 || n_pt < 0 || n_obs < 0)
    throw BalParseError("negative count in header", tok.token_line());

  BalProblem raw;
  raw.observations.reserve(static_cast<std::size_t>(n_obs));
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (long long i = 0; i < n_obs; ++i) {
    const long long c = tok.integer("camera index");
    const std::size_t line = tok.token_line();
    const long long p = tok.integer("point index");
    if (c < 0 || c >= n_cam || p < 0 || p >= n_pt)
      throw BalParseError("observation index out of range (camera " +
                              std::to_string(c) + ", point " +
                              std::to_string(p) + ")",
                          line);
    Observation o;
    o.camera = static_cast<std::size_t>(c);
    o.point = static_cast<std::size_t>(p);
    o.pixel.x() = tok.real("pixel x");
    o.pixel.y() = tok.real("pixel y");
    if (!seen.emplace(o.camera, o.point).second)
      throw BalParseError("duplicate observation of point " +
                              std::to_string(p) + " by camera " +
                              std::to_string(c),
                          line);
    raw.observations.push_back(o);
  }
  raw.cameras.resize(static_cast<std::size_t>(n_cam));
  for (auto& cam : raw.cameras) {
    PoseVec v;
    for (int j = 0; j < kPoseDim; ++j) v[j] = tok.real("camera parameter");
    cam = CameraParams::from_vector(v);
    cam.rotation = canonical_rotation(cam.rotation);
    if (!(cam.focal > 0.0))
      throw BalParseError("non-positive focal length", tok.token_line());
  }
  raw.points.resize(static_cast<std::size_t>(n_pt));
  for (auto& pt : raw.points)
    for (int j = 0; j < 3; ++j) pt[j] = tok.real("point coordinate");

  std::vector<std::size_t> cam_map(raw.cameras.size(), SIZE_MAX);
  std::vector<std::size_t> pt_map(raw.points.size(), SIZE_MAX);
  for (const auto& o : raw.observations) {
    cam_map[o.camera] = 0;
    pt_map[o.point] = 0;
  }
  ParsedBal out;
  for (std::size_t i = 0; i < cam_map.size(); ++i) {
    if (cam_map[i] == SIZE_MAX) {
      ++out.pruned_cameras;
      continue;
    }
    cam_map[i] = out.problem.cameras.size();
    out.problem.cameras.push_back(raw.cameras[i]);
  }
  for (std::size_t i = 0; i < pt_map.size(); ++i) {
    if (pt_map[i] == SIZE_MAX) {
      ++out.pruned_points;
      continue;
    }
    pt_map[i] = out.problem.points.size();
    out.problem.points.push_back(raw.points[i]);
  }
  out.problem.observations = std::move(raw.observations);
  for (auto& o : out.problem.observations) {
    o.camera = cam_map[o.camera];
    o.point = pt_map[o.point];
  }
  return out;
}

inline ParsedBal load_bal(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open BAL file: " + path);
  return parse_bal(in);
}

/// Canonical text form; doubles are written with 17 significant digits so
/// parsing the output reproduces the problem exactly.
inline void serialize_bal(const BalProblem& p, std::ostream& out) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << p.num_cameras() << ' ' << p.num_points() << ' '
      << p.num_observations() << '\n';
  for (const auto& o : p.observations)
    out << o.camera << ' ' << o.point << ' ' << num(o.pixel.x()) << ' '
        << num(o.pixel.y()) << '\n';
  for (const auto& c : p.cameras) {
    const PoseVec v = c.to_vector();
    for (int j = 0; j < kPoseDim; ++j) out << num(v[j]) << '\n';
  }
  for (const auto& pt : p.points)
    for (int j = 0; j < 3; ++j) out << num(pt[j]) << '\n';
  if (!out) throw std::runtime_error("failed writing BAL output");
}

inline void save_bal(const BalProblem& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  serialize_bal(p, out);
}

/// Adds i.i.d. N(0, sigma^2) noise to every point coordinate and camera
/// translation coordinate. Rotations and intrinsics are left untouched.
inline BalProblem perturb(const BalProblem& problem, double sigma,
                          std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("perturb: negative sigma");
  BalProblem out = problem;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& pt : out.points)
    for (int j = 0; j < 3; ++j) pt[j] += noise(rng);
  for (auto& cam : out.cameras)
    for (int j = 0; j < 3; ++j) cam.translation[j] += noise(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Solver traces

struct TraceRecord {
  int iter = 0;
  double cumulative_time_s = 0.0;
  double cost = 0.0;
  int inner_iterations = 0;
  int order_m = 0;
  std::size_t peak_bytes = 0;
  double lambda = 0.0;
  bool accepted = true;
  bool max_order_hit = false;
  std::size_t invalid_observations = 0;
  bool operator==(const TraceRecord&) const = default;
};

struct SolverTrace {
  std::string problem;
  std::string solver;
  std::vector<TraceRecord> records;
  std::string termination;

  double initial_cost() const { return records.front().cost; }
  double final_cost() const { return records.back().cost; }
  double total_time_s() const { return records.back().cumulative_time_s; }
  std::size_t peak_bytes() const {
    std::size_t b = 0;
    for (const auto& r : records) b = std::max(b, r.peak_bytes);
    return b;
  }
};

inline constexpr std::string_view kTraceHeader =
    "iter,cumulative_time_s,cost,inner_iterations,order_m,peak_bytes,"
    "lambda,accepted,max_order_hit,invalid_observations";

inline void write_trace(const SolverTrace& trace, std::ostream& out) {
  if (trace.records.empty())
    throw std::invalid_argument("write_trace: empty trace");
  out << kTraceHeader << '\n';
  char buf[256];
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d,%d,%zu,%.17g,%d,%d,%zu\n",
                  r.iter, r.cumulative_time_s, r.cost, r.inner_iterations,
                  r.order_m, r.peak_bytes, r.lambda, r.accepted ? 1 : 0,
                  r.max_order_hit ? 1 : 0, r.invalid_observations);
    out << buf;
  }
  out.flush();
  if (!out) throw std::runtime_error("write_trace: sink write failure");
}

inline SolverTrace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw std::runtime_error("read_trace: missing or unexpected header");
  SolverTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    TraceRecord r;
    int acc = 0, hit = 0;
    unsigned long long peak = 0, invalid = 0;
    const int n = std::sscanf(line.c_str(), "%d,%lf,%lf,%d,%d,%llu,%lf,%d,%d,%llu",
                              &r.iter, &r.cumulative_time_s, &r.cost,
                              &r.inner_iterations, &r.order_m, &peak,
                              &r.lambda, &acc, &hit, &invalid);
    if (n != 10)
      throw std::runtime_error("read_trace: malformed row at line " +
                               std::to_string(lineno));
    r.peak_bytes = static_cast<std::size_t>(peak);
    r.invalid_observations = static_cast<std::size_t>(invalid);
    r.accepted = acc != 0;
    r.max_order_hit = hit != 0;
    trace.records.push_back(r);
  }
  return trace;
}

inline nlohmann::json summary_json(const SolverTrace& trace) {
  return nlohmann::json{{"problem", trace.problem},
                        {"solver", trace.solver},
                        {"final_cost", trace.final_cost()},
                        {"total_time_s", trace.total_time_s()},
                        {"peak_bytes", trace.peak_bytes()}};
}

}  // namespace poba
