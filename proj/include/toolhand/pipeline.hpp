#pragma once

// The sample -> plan -> evaluate workflow and the landscape plot.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "toolhand/io.hpp"

namespace toolhand {

/// Runs job(i) for i in [0, n) on `workers` threads. The first exception is
/// rethrown after all workers stop.
inline void parallelFor(int n, int workers, const std::function<void(int)>& job) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Config hash extended with the seed contents.
inline std::string runHash(const PipelineConfig& cfg, const Seed& seed) {
  return io::hex64(io::fnv1a(cfg.hash + seedToJson(seed).dump()));
}

struct Pipeline {
  PipelineConfig cfg;
  Seed seed;
  std::array<FPSpec, kNumFPs> fps;
  std::string hash;

  explicit Pipeline(PipelineConfig c, Seed s) : cfg(std::move(c)), seed(std::move(s)) {
    fps = defaultFPSpecs(seed, cfg.model, cfg.tables);
    hash = runHash(cfg, seed);
  }

  static Pipeline load(const std::filesystem::path& config) {
    PipelineConfig c = loadConfig(config);
    Seed s = loadSeed(c.seed_path);
    return Pipeline(std::move(c), std::move(s));
  }

  /// Empty when the seed reaches all FPs from its own states.
  std::string validateSeed() const { return toolhand::validateSeed(seed, fps, cfg.model); }

  CandidateRecord seedCandidate() const {
    CandidateRecord r;
    r.d = seed.design;
    r.states = seed.states;
    for (int k = 0; k < kNumFPs; ++k) r.costs[k] = fp_cost(seed.states[k], seed.design, fps[k], cfg.model.tool, cfg.model.lambda);
    return r;
  }

  PlanContext context() const { return planContext(cfg.model); }
};

inline double secondsSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::filesystem::path manifestPath(const std::filesystem::path& out) {
  return std::filesystem::path(out.string() + ".manifest.json");
}

// --- sample ---------------------------------------------------------------

inline CandidateHeader candidateHeader(const Pipeline& p) {
  CandidateHeader h;
  h.config_hash = p.hash;
  h.mode = p.cfg.sampler.mode == SampleMode::planar ? "2d" : "6d";
  h.rng_seed = p.cfg.sampler.rng_seed;
  h.bounds = p.cfg.model.bounds;
  return h;
}

struct SampleSummary {
  int candidates = 0;
  std::int64_t calls = 0;
  std::string termination;
  double seconds = 0.0;
};

/// Writes the header and one line per accepted candidate to `out`, plus a
/// manifest next to it. Throws ConfigError for an invalid seed.
inline SampleSummary cmd_sample(const Pipeline& p, const std::filesystem::path& out, std::ostream* progress = nullptr,
                                int progress_every = 100) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string bad = p.validateSeed();
  if (!bad.empty()) throw ConfigError("seed rejected: " + bad);
  const CandidateHeader h = candidateHeader(p);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  const std::filesystem::path tmp = out.string() + ".tmp";
  std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + out.string());
  f << toJson(h).dump() << '\n';
  SamplingCallbacks cb;
  cb.on_accept = [&](const CandidateRecord& r) { f << toJson(r).dump() << '\n' << std::flush; };
  if (progress)
    cb.on_progress = [&](std::int64_t calls, int cands, double eff) {
      if (calls % progress_every == 0)
        *progress << "calls " << calls << "  candidates " << cands << "  efficiency " << eff << std::endl;
    };
  const SamplingResult res = run_sampling(p.cfg.sampler, p.cfg.model, p.fps, p.seedCandidate(), cb, p.cfg.workers > 1);
  f.close();
  if (!f) throw std::runtime_error("write failed for " + out.string());
  std::filesystem::rename(tmp, out);
  SampleSummary s{static_cast<int>(res.candidates.size()), res.calls, res.termination, secondsSince(t0)};
  const Json manifest = {{"command", "sample"},       {"version", kVersion},
                         {"config_hash", p.hash},     {"candidates", s.candidates},
                         {"calls", s.calls},          {"termination", s.termination},
                         {"wall_seconds", s.seconds}, {"final_efficiency", res.efficiency.empty() ? 1.0 : res.efficiency.back()}};
  io::writeFileAtomic(manifestPath(out), manifest.dump(2) + "\n");
  if (progress)
    *progress << "accepted " << s.candidates << " candidates in " << s.calls << " calls (" << s.termination << ")"
              << std::endl;
  return s;
}

// --- plan -----------------------------------------------------------------

inline constexpr const char* kCandidateIndex = "candidates.jsonl";

struct PlanSummary {
  int planned = 0;
  int resumed = 0;
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

/// Six paths per candidate, one file each in `out_dir`. With `resume`,
/// candidates whose path file is already complete are kept.
inline PlanSummary cmd_plan(const Pipeline& p, const std::filesystem::path& candidates,
                            const std::filesystem::path& out_dir, bool resume, std::ostream* progress = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  // an empty file is an empty dataset
  const bool empty = io::readFile(candidates).find_first_not_of(" \t\r\n") == std::string::npos;
  CandidateFile cf;
  if (empty) cf.header = candidateHeader(p);
  else cf = readCandidates(candidates);
  if (cf.header.config_hash != p.hash)
    throw ConfigError(candidates.string() + ": produced with a different config or seed");
  std::filesystem::create_directories(out_dir);
  std::string index = toJson(cf.header).dump() + "\n";
  for (const auto& c : cf.candidates) index += toJson(c).dump() + "\n";
  io::writeFileAtomic(out_dir / kCandidateIndex, index);

  PlanSummary s;
  s.warnings = cf.warnings;
  std::mutex mu;
  std::atomic<int> planned{0}, resumed{0};
  const PlanContext ctx = p.context();
  parallelFor(static_cast<int>(cf.candidates.size()), p.cfg.workers, [&](int i) {
    const CandidateRecord& c = cf.candidates[i];
    const std::filesystem::path file = pathFileName(out_dir, c.id);
    if (resume && std::filesystem::exists(file)) {
      try {
        readPathFile(file, c.id);
        ++resumed;
        return;
      } catch (const ConfigError&) {
      }
    }
    const auto paths = plan_all(c.states, c.d, p.fps, ctx, p.cfg.plan);
    io::writeFileAtomic(file, pathFileContent(paths, c.id));
    const int done = ++planned;
    if (progress) {
      std::lock_guard<std::mutex> lock(mu);
      *progress << "planned candidate " << c.id << " (" << done << " this run)" << std::endl;
    }
  });
  s.planned = planned;
  s.resumed = resumed;
  s.seconds = secondsSince(t0);
  const Json manifest = {{"command", "plan"},
                         {"version", kVersion},
                         {"config_hash", p.hash},
                         {"candidates", cf.candidates.size()},
                         {"planned", s.planned},
                         {"resumed", s.resumed},
                         {"skipped_lines", s.warnings},
                         {"wall_seconds", s.seconds}};
  io::writeFileAtomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  if (progress)
    for (const auto& w : s.warnings) *progress << "warning: skipped " << w << std::endl;
  return s;
}

// --- evaluate -------------------------------------------------------------

struct EvaluateSummary {
  Json summary;
  ScoreTable table;
  std::vector<int> ids;
};

inline std::filesystem::path summaryPath(const std::filesystem::path& csv) {
  std::filesystem::path s = csv;
  s.replace_extension(".summary.json");
  return s;
}

/// Standardized design points restricted to the sampled axes.
inline std::vector<VecX> sampledPoints(const std::vector<DesignParams>& designs, const DesignBounds& b,
                                       SampleMode mode) {
  const std::vector<int> axes = sampledAxes(mode);
  std::vector<VecX> pts;
  for (const auto& d : designs) {
    const Vec6 z = standardize(d, b);
    VecX v(static_cast<Eigen::Index>(axes.size()));
    for (std::size_t i = 0; i < axes.size(); ++i) v[static_cast<Eigen::Index>(i)] = z[axes[i]];
    pts.push_back(v);
  }
  return pts;
}

inline EvaluateSummary cmd_evaluate(const Pipeline& p, const std::filesystem::path& paths_dir,
                                    const std::filesystem::path& out_csv) {
  const CandidateFile cf = readCandidates(paths_dir / kCandidateIndex);
  const int n = static_cast<int>(cf.candidates.size());
  EvaluateSummary out;
  out.table.rows.resize(n);
  const PlanContext ctx = p.context();
  parallelFor(n, p.cfg.workers, [&](int i) {
    const CandidateRecord& c = cf.candidates[i];
    ScoreRow& row = out.table.rows[i];
    row.design = c.d;
    try {
      const auto paths = readPathFile(pathFileName(paths_dir, c.id), c.id);
      row.raw = candidateMetrics(paths, c.d, p.fps, ctx, p.cfg.plan.tip_force);
    } catch (const ConfigError&) {
      row.complete = false;
      row.raw.fill(std::numeric_limits<double>::quiet_NaN());
    }
  });
  for (const auto& c : cf.candidates) out.ids.push_back(c.id);
  scoreTable(out.table);

  int complete = 0, success = 0, pareto = 0;
  std::array<int, kNumFPs> per_fp{};
  for (const auto& r : out.table.rows) {
    if (!r.complete) continue;
    ++complete;
    success += r.wielding_success;
    pareto += r.pareto;
    for (int k = 0; k < kNumFPs; ++k) per_fp[k] += r.raw[k * kNumMetrics] > 0.0;
  }
  const auto frac = [&](int v) { return complete > 0 ? static_cast<double>(v) / complete : 0.0; };
  Json fp_frac = Json::object();
  for (int k = 0; k < kNumFPs; ++k) fp_frac[fpName(static_cast<FPKind>(k))] = frac(per_fp[k]);
  const SampleMode mode = cf.header.mode == "2d" ? SampleMode::planar : SampleMode::full;
  std::vector<DesignParams> designs;
  for (const auto& c : cf.candidates) designs.push_back(c.d);
  Json coverage = nullptr;
  if (designs.size() >= 2)
    coverage = coverage_estimate(sampledPoints(designs, cf.header.bounds, mode), static_cast<int>(sampledAxes(mode).size()));
  out.summary = {{"config_hash", cf.header.config_hash},
                 {"candidates", n},
                 {"complete", complete},
                 {"success_fraction", frac(success)},
                 {"success_fraction_per_fp", fp_frac},
                 {"pareto_count", pareto},
                 {"mode", cf.header.mode},
                 {"coverage", coverage}};
  io::writeFileAtomic(out_csv, scoreCsv(out.table, out.ids));
  io::writeFileAtomic(summaryPath(out_csv), out.summary.dump(2) + "\n");
  return out;
}

// --- landscape ------------------------------------------------------------

/// Piecewise-linear color map over [0, 100].
inline std::string scoreColor(double score) {
  static const double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  if (!std::isfinite(score)) return "#bbbbbb";
  const double t = std::clamp(score, 0.0, 100.0) / 25.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

/// Scatter of two columns colored by a score column, Pareto members
/// outlined. Throws ConfigError for an unknown column.
inline std::string landscapeSvg(const Table& t, const std::string& x_col, const std::string& y_col,
                                const std::string& color_col) {
  const int xi = t.column(x_col), yi = t.column(y_col), ci = t.column(color_col), pi = t.column("pareto");
  for (const auto& [name, idx] : {std::pair{x_col, xi}, {y_col, yi}, {color_col, ci}})
    if (idx < 0) throw ConfigError("unknown column '" + name + "'");
  const double W = 640, H = 480, L = 70, R = 110, T = 30, B = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!t.rows.empty()) {
    x0 = y0 = kInf;
    x1 = y1 = -kInf;
    for (const auto& r : t.rows) {
      x0 = std::min(x0, r[xi]);
      x1 = std::max(x1, r[xi]);
      y0 = std::min(y0, r[yi]);
      y1 = std::max(y1, r[yi]);
    }
    const auto pad = [](double& lo, double& hi) {
      const double span = hi > lo ? hi - lo : std::max(1.0, std::abs(lo));
      lo -= 0.05 * span;
      hi += 0.05 * span;
    };
    pad(x0, x1);
    pad(y0, y1);
  }
  const auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  std::string s;
  char buf[256];
  const auto add = [&](const char* fmt, auto... a) {
    std::snprintf(buf, sizeof buf, fmt, a...);
    s += buf;
  };
  add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n", W, H, W, H);
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  add("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  add("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n", L, H - B, L, T);
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    add("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n", px(xv), H - B, px(xv), H - B + 5);
    add("<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">%.4g</text>\n", px(xv), H - B + 18, xv);
    add("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n", L - 5, py(yv), L, py(yv));
    add("<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"end\">%.4g</text>\n", L - 8, py(yv) + 4, yv);
  }
  add("<text x=\"%.2f\" y=\"%.2f\" font-size=\"13\" text-anchor=\"middle\">", (L + W - R) / 2, H - 15);
  s += x_col + "</text>\n";
  add("<text x=\"15\" y=\"%.2f\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 %.2f)\">",
      (T + H - B) / 2, (T + H - B) / 2);
  s += y_col + "</text>\n";
  for (const auto& r : t.rows) {
    const bool pareto = pi >= 0 && r[pi] != 0.0;
    add("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\"", px(r[xi]), py(r[yi]), scoreColor(r[ci]).c_str());
    s += pareto ? " stroke=\"black\" stroke-width=\"1.5\"/>\n" : "/>\n";
  }
  // color bar from score 0 (bottom) to 100 (top)
  const double cx = W - R + 30, cw = 16;
  for (int k = 0; k < 50; ++k) {
    const double y = py(y0) - (k + 1) * (H - T - B) / 50.0;
    add("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", cx, y, cw, (H - T - B) / 50.0 + 0.5,
        scoreColor(2.0 * k + 1.0).c_str());
  }
  add("<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\">0</text>\n", cx + cw + 4, H - B);
  add("<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\">100</text>\n", cx + cw + 4, T + 8);
  add("<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">", cx + cw / 2, T - 10);
  s += color_col + "</text>\n</svg>\n";
  return s;
}

/// Color column name of one metric score.
inline std::string scoreColumn(const std::string& fp, const std::string& metric) {
  return fp + "_" + metric + "_score";
}

inline void cmd_landscape(const std::filesystem::path& csv, const std::string& metric, const std::string& fp,
                          const std::string& x_col, const std::string& y_col, const std::filesystem::path& out_svg) {
  const Table t = parseCsv(io::readFile(csv));
  io::writeFileAtomic(out_svg, landscapeSvg(t, x_col, y_col, scoreColumn(fp, metric)));
}

}  // namespace toolhand
