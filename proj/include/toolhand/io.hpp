#pragma once

// Pipeline configuration and the on-disk record formats: JSON config and
// seed, line-delimited JSON candidates and paths, score CSV, run manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "toolhand/evaluate.hpp"
#include "toolhand/seed.hpp"

namespace toolhand {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::json;

/// Malformed or inconsistent user input (config, seed, record files).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io {

inline std::string readFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it into place.
inline void writeFileAtomic(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// --- checked access -------------------------------------------------------

inline void requireObject(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void rejectUnknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  requireObject(j, where);
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

inline const Json& member(const Json& j, const std::string& key, const std::string& where) {
  requireObject(j, where);
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + ": missing key '" + key + "'");
  return *it;
}

inline double number(const Json& j, const std::string& where) {
  if (j.is_null()) return kInf;  // non-finite values are written as null
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

inline int integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

inline std::int64_t integer64(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::uint64_t unsignedInteger(const Json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    throw ConfigError(where + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

inline bool boolean(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected a boolean");
  return j.get<bool>();
}

/// Reads an optional field into `out`.
template <class T, class F>
void optional(const Json& j, const std::string& key, T& out, F read, const std::string& where) {
  auto it = j.find(key);
  if (it != j.end()) out = read(*it, where + "." + key);
}

inline VecX vector(const Json& j, const std::string& where, int size = -1) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  if (size >= 0 && static_cast<int>(j.size()) != size)
    throw ConfigError(where + ": expected " + std::to_string(size) + " entries");
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], where);
  return v;
}

inline Json toJson(const VecX& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? Json(v[i]) : Json(nullptr));
  return a;
}
inline Json toJson(const Vec3& v) { return toJson(VecX(v)); }
inline Json toJson(const Vec6& v) { return toJson(VecX(v)); }
inline Json finite(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline int fingerIndex(const Json& j, const std::string& where) {
  const std::string s = text(j, where);
  for (int f = 0; f < kNumFingers; ++f)
    if (s == fingerName(f)) return f;
  throw ConfigError(where + ": unknown finger '" + s + "'");
}

inline FPKind fpKind(const Json& j, const std::string& where) {
  const auto k = parseFP(text(j, where));
  if (!k) throw ConfigError(where + ": unknown FP");
  return *k;
}

// --- states ---------------------------------------------------------------

inline Json toJson(const SystemState& s) {
  Json contacts = Json::array();
  for (const auto& c : s.contacts)
    contacts.push_back({{"finger", fingerName(c.finger)},
                        {"tool", {c.tool.a1, c.tool.a2, c.tool.spin}},
                        {"joints", toJson(c.joints.vector())},
                        {"finger_coords", {c.finger_a1, c.finger_a2}}});
  return {{"hand_translation", toJson(s.hand.translation)},
          {"hand_rotation", toJson(s.hand.rotation)},
          {"contacts", contacts}};
}

inline SystemState stateFromJson(const Json& j, const std::string& where) {
  rejectUnknown(j, {"hand_translation", "hand_rotation", "contacts"}, where);
  SystemState s;
  s.hand.translation = vector(member(j, "hand_translation", where), where + ".hand_translation", 3);
  s.hand.rotation = vector(member(j, "hand_rotation", where), where + ".hand_rotation", 3);
  const Json& cs = member(j, "contacts", where);
  if (!cs.is_array()) throw ConfigError(where + ".contacts: expected an array");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const std::string w = where + ".contacts[" + std::to_string(i) + "]";
    rejectUnknown(cs[i], {"finger", "tool", "joints", "finger_coords"}, w);
    ContactPair c;
    c.finger = fingerIndex(member(cs[i], "finger", w), w + ".finger");
    const VecX t = vector(member(cs[i], "tool", w), w + ".tool", 3);
    c.tool = {t[0], t[1], t[2]};
    c.joints = FingerJoints::fromVector(vector(member(cs[i], "joints", w), w + ".joints", 3));
    const VecX f = vector(member(cs[i], "finger_coords", w), w + ".finger_coords", 2);
    c.finger_a1 = f[0];
    c.finger_a2 = f[1];
    s.contacts.push_back(c);
  }
  return s;
}

/// Checks that a state matches the contact topology of an FP.
inline void checkTopology(const SystemState& s, FPKind k, const std::string& where) {
  const FPSpec topo = makeTopology(k);
  if (s.numContacts() != topo.numContacts()) throw ConfigError(where + ": wrong number of contacts");
  for (int i = 0; i < topo.numContacts(); ++i)
    if (s.contacts[i].finger != topo.contacts[i].finger)
      throw ConfigError(where + ": contact " + std::to_string(i) + " must be the " +
                        fingerName(topo.contacts[i].finger));
}

inline Json toJson(const DesignParams& d) { return toJson(d.vector()); }

inline DesignParams designFromJson(const Json& j, const std::string& where) {
  return DesignParams::fromVector(vector(j, where, 6));
}

}  // namespace io

// --- seed -----------------------------------------------------------------

inline Json seedToJson(const Seed& s) {
  Json fps = Json::object();
  for (int k = 0; k < kNumFPs; ++k) {
    Json idle = Json::array();
    for (const auto& u : s.idle[k]) idle.push_back(io::toJson(u.vector()));
    fps[fpName(static_cast<FPKind>(k))] = {{"state", io::toJson(s.states[k])}, {"idle_joints", idle}};
  }
  return {{"design", io::toJson(s.design)}, {"fps", fps}};
}

inline Seed seedFromJson(const Json& j) {
  io::rejectUnknown(j, {"design", "fps"}, "seed");
  Seed s;
  s.design = io::designFromJson(io::member(j, "design", "seed"), "seed.design");
  const Json& fps = io::member(j, "fps", "seed");
  io::rejectUnknown(fps, {"carve", "poke", "press"}, "seed.fps");
  for (int k = 0; k < kNumFPs; ++k) {
    const FPKind kind = static_cast<FPKind>(k);
    const std::string w = std::string("seed.fps.") + fpName(kind);
    const Json& e = io::member(fps, fpName(kind), "seed.fps");
    io::rejectUnknown(e, {"state", "idle_joints"}, w);
    s.states[k] = io::stateFromJson(io::member(e, "state", w), w + ".state");
    io::checkTopology(s.states[k], kind, w + ".state");
    const Json& idle = io::member(e, "idle_joints", w);
    if (!idle.is_array() || idle.size() != kNumFingers)
      throw ConfigError(w + ".idle_joints: expected one entry per finger");
    for (int f = 0; f < kNumFingers; ++f)
      s.idle[k][f] = FingerJoints::fromVector(io::vector(idle[f], w + ".idle_joints", 3));
  }
  return s;
}

// --- pipeline config ------------------------------------------------------

struct PipelineConfig {
  ModelConfig model;
  SamplerConfig sampler;
  PlanConfig plan;
  FPTableConfig tables;
  std::filesystem::path seed_path = "seed.json";  // relative paths resolve against the config file
  int workers = 1;
  std::string hash;  // of the parsed configuration

  void validate() const {
    model.validate();
    sampler.validate();
    plan.validate();
    tables.validate();
    if (workers < 1) throw DomainError("workers must be positive");
  }
};

inline Json configToJson(const PipelineConfig& c) {
  const ModelConfig& m = c.model;
  Json regions = Json::object();
  for (int k = 0; k < kNumFPs; ++k) {
    Json a = Json::array();
    for (const auto& r : c.tables.regions[k]) a.push_back({r.a1_lo, r.a1_hi, r.a2_center, r.a2_halfwidth});
    regions[fpName(static_cast<FPKind>(k))] = a;
  }
  return {
      {"design_bounds", {{"min", io::toJson(m.bounds.lo)}, {"max", io::toJson(m.bounds.hi)}}},
      {"tool", {{"radius", m.tool.radius}, {"length", m.tool.length}, {"tip_offset", m.tool.tip_offset}}},
      {"joint_limits", {{"min", io::toJson(m.limits.lo)}, {"max", io::toJson(m.limits.hi)}}},
      {"friction", {{"mu", m.friction.mu}, {"facets", m.friction.n_facets}, {"normal_min", m.friction.f_normal_min}}},
      {"fp",
       {{"tip_force", m.tip_force},
        {"collision_margin", m.collision_margin},
        {"abduction_weight", m.lambda},
        {"tol_constraint", m.tol_con},
        {"tol_optimality", m.tol_opt},
        {"max_iterations", m.nlp_max_iter},
        {"condition_max", m.cond_max},
        {"clearance_slack", m.clearance_slack},
        {"opposition_min", m.opposition_min}}},
      {"fp_tables",
       {{"wrist_translation", c.tables.wrist_translation},
        {"wrist_rotation", c.tables.wrist_rotation},
        {"joint_margin", c.tables.joint_margin},
        {"regions", regions}}},
      {"sampler",
       {{"mode", c.sampler.mode == SampleMode::planar ? "2d" : "6d"},
        {"step_size", c.sampler.step_size},
        {"min_candidate_distance", c.sampler.min_candidate_dist},
        {"target_candidates", c.sampler.target_candidates},
        {"efficiency_threshold", c.sampler.efficiency_threshold},
        {"efficiency_window", c.sampler.efficiency_window},
        {"max_calls", c.sampler.max_calls},
        {"rng_seed", c.sampler.rng_seed}}},
      {"plan",
       {{"tool_speed", c.plan.u_t_dot},
        {"dt", c.plan.dt},
        {"max_steps", c.plan.max_steps},
        {"tip_force", c.plan.tip_force},
        {"collision_margin", c.plan.collision_margin},
        {"hold_steps", c.plan.hold_steps},
        {"hold_factor", c.plan.hold_factor},
        {"projection_tol", c.plan.projection_tol},
        {"clearance_slack", c.plan.clearance_slack}}},
      {"seed", c.seed_path.generic_string()},
      {"workers", c.workers}};
}

namespace io {

inline Vec3 vec3(const Json& j, const std::string& w) { return vector(j, w, 3); }
inline Vec6 vec6(const Json& j, const std::string& w) { return vector(j, w, 6); }

}  // namespace io

/// Parses a configuration (comments allowed). Missing keys keep their
/// defaults; unknown keys are rejected.
inline PipelineConfig configFromJson(const Json& j, const std::filesystem::path& base_dir = {}) {
  using namespace io;
  PipelineConfig c;
  ModelConfig& m = c.model;
  rejectUnknown(j, {"design_bounds", "tool", "joint_limits", "friction", "fp", "fp_tables", "sampler", "plan", "seed",
                    "workers"},
                "config");
  if (auto it = j.find("design_bounds"); it != j.end()) {
    rejectUnknown(*it, {"min", "max"}, "design_bounds");
    optional(*it, "min", m.bounds.lo, vec6, "design_bounds");
    optional(*it, "max", m.bounds.hi, vec6, "design_bounds");
  }
  if (auto it = j.find("tool"); it != j.end()) {
    rejectUnknown(*it, {"radius", "length", "tip_offset"}, "tool");
    optional(*it, "radius", m.tool.radius, number, "tool");
    optional(*it, "length", m.tool.length, number, "tool");
    optional(*it, "tip_offset", m.tool.tip_offset, number, "tool");
  }
  if (auto it = j.find("joint_limits"); it != j.end()) {
    rejectUnknown(*it, {"min", "max"}, "joint_limits");
    optional(*it, "min", m.limits.lo, vec3, "joint_limits");
    optional(*it, "max", m.limits.hi, vec3, "joint_limits");
  }
  if (auto it = j.find("friction"); it != j.end()) {
    rejectUnknown(*it, {"mu", "facets", "normal_min"}, "friction");
    optional(*it, "mu", m.friction.mu, number, "friction");
    optional(*it, "facets", m.friction.n_facets, integer, "friction");
    optional(*it, "normal_min", m.friction.f_normal_min, number, "friction");
  }
  if (auto it = j.find("fp"); it != j.end()) {
    rejectUnknown(*it, {"tip_force", "collision_margin", "abduction_weight", "tol_constraint", "tol_optimality",
                        "max_iterations", "condition_max", "clearance_slack", "opposition_min"},
                  "fp");
    optional(*it, "tip_force", m.tip_force, number, "fp");
    optional(*it, "collision_margin", m.collision_margin, number, "fp");
    optional(*it, "abduction_weight", m.lambda, number, "fp");
    optional(*it, "tol_constraint", m.tol_con, number, "fp");
    optional(*it, "tol_optimality", m.tol_opt, number, "fp");
    optional(*it, "max_iterations", m.nlp_max_iter, integer, "fp");
    optional(*it, "condition_max", m.cond_max, number, "fp");
    optional(*it, "clearance_slack", m.clearance_slack, number, "fp");
    optional(*it, "opposition_min", m.opposition_min, number, "fp");
  }
  if (auto it = j.find("fp_tables"); it != j.end()) {
    rejectUnknown(*it, {"wrist_translation", "wrist_rotation", "joint_margin", "regions"}, "fp_tables");
    optional(*it, "wrist_translation", c.tables.wrist_translation, number, "fp_tables");
    optional(*it, "wrist_rotation", c.tables.wrist_rotation, number, "fp_tables");
    optional(*it, "joint_margin", c.tables.joint_margin, number, "fp_tables");
    if (auto r = it->find("regions"); r != it->end()) {
      rejectUnknown(*r, {"carve", "poke", "press"}, "fp_tables.regions");
      for (int k = 0; k < kNumFPs; ++k) {
        const char* name = fpName(static_cast<FPKind>(k));
        auto e = r->find(name);
        if (e == r->end()) continue;
        const std::string w = std::string("fp_tables.regions.") + name;
        if (!e->is_array()) throw ConfigError(w + ": expected an array");
        std::vector<ToolRegion> regs;
        for (const auto& x : *e) {
          const VecX v = vector(x, w, 4);
          regs.push_back({v[0], v[1], v[2], v[3]});
        }
        c.tables.regions[k] = regs;
      }
    }
  }
  if (auto it = j.find("sampler"); it != j.end()) {
    rejectUnknown(*it, {"mode", "step_size", "min_candidate_distance", "target_candidates", "efficiency_threshold",
                        "efficiency_window", "max_calls", "rng_seed"},
                  "sampler");
    SamplerConfig& s = c.sampler;
    if (auto mo = it->find("mode"); mo != it->end()) {
      const std::string v = text(*mo, "sampler.mode");
      if (v == "2d") s.mode = SampleMode::planar;
      else if (v == "6d") s.mode = SampleMode::full;
      else throw ConfigError("sampler.mode: expected \"2d\" or \"6d\"");
    }
    optional(*it, "step_size", s.step_size, number, "sampler");
    optional(*it, "min_candidate_distance", s.min_candidate_dist, number, "sampler");
    optional(*it, "target_candidates", s.target_candidates, integer, "sampler");
    optional(*it, "efficiency_threshold", s.efficiency_threshold, number, "sampler");
    optional(*it, "efficiency_window", s.efficiency_window, integer, "sampler");
    optional(*it, "max_calls", s.max_calls, integer64, "sampler");
    optional(*it, "rng_seed", s.rng_seed, unsignedInteger, "sampler");
  }
  if (auto it = j.find("plan"); it != j.end()) {
    rejectUnknown(*it, {"tool_speed", "dt", "max_steps", "tip_force", "collision_margin", "hold_steps", "hold_factor",
                        "projection_tol", "clearance_slack"},
                  "plan");
    PlanConfig& p = c.plan;
    optional(*it, "tool_speed", p.u_t_dot, number, "plan");
    optional(*it, "dt", p.dt, number, "plan");
    optional(*it, "max_steps", p.max_steps, integer, "plan");
    optional(*it, "tip_force", p.tip_force, number, "plan");
    optional(*it, "collision_margin", p.collision_margin, number, "plan");
    optional(*it, "hold_steps", p.hold_steps, integer, "plan");
    optional(*it, "hold_factor", p.hold_factor, number, "plan");
    optional(*it, "projection_tol", p.projection_tol, number, "plan");
    optional(*it, "clearance_slack", p.clearance_slack, number, "plan");
  }
  if (auto it = j.find("seed"); it != j.end()) {
    std::filesystem::path p = text(*it, "seed");
    c.seed_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  } else if (!base_dir.empty()) {
    c.seed_path = base_dir / c.seed_path;
  }
  optional(j, "workers", c.workers, integer, "config");
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Json canon = configToJson(c);
  canon.erase("seed");
  canon.erase("workers");
  c.hash = io::hex64(io::fnv1a(canon.dump()));
  return c;
}

inline Json parseJsonText(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline PipelineConfig loadConfig(const std::filesystem::path& p) {
  return configFromJson(parseJsonText(io::readFile(p), p.string()), p.parent_path());
}

inline Seed loadSeed(const std::filesystem::path& p) {
  return seedFromJson(parseJsonText(io::readFile(p), p.string()));
}

inline PlanContext planContext(const ModelConfig& m) { return {m.tool, m.limits, m.friction}; }

// --- candidates -----------------------------------------------------------

struct CandidateHeader {
  std::string config_hash;
  std::string mode = "2d";
  std::uint64_t rng_seed = 1;
  DesignBounds bounds;
};

inline Json toJson(const CandidateHeader& h) {
  return {{"type", "header"},
          {"format", "toolhand-candidates"},
          {"version", kVersion},
          {"config_hash", h.config_hash},
          {"mode", h.mode},
          {"rng_seed", h.rng_seed},
          {"design_min", io::toJson(h.bounds.lo)},
          {"design_max", io::toJson(h.bounds.hi)}};
}

inline CandidateHeader headerFromJson(const Json& j) {
  using namespace io;
  rejectUnknown(j, {"type", "format", "version", "config_hash", "mode", "rng_seed", "design_min", "design_max"},
                "header");
  if (text(member(j, "type", "header"), "header.type") != "header" ||
      text(member(j, "format", "header"), "header.format") != "toolhand-candidates")
    throw ConfigError("header: not a candidate file");
  CandidateHeader h;
  h.config_hash = text(member(j, "config_hash", "header"), "header.config_hash");
  h.mode = text(member(j, "mode", "header"), "header.mode");
  if (h.mode != "2d" && h.mode != "6d") throw ConfigError("header.mode: expected \"2d\" or \"6d\"");
  h.rng_seed = unsignedInteger(member(j, "rng_seed", "header"), "header.rng_seed");
  h.bounds.lo = vec6(member(j, "design_min", "header"), "header.design_min");
  h.bounds.hi = vec6(member(j, "design_max", "header"), "header.design_max");
  return h;
}

inline Json toJson(const CandidateRecord& c) {
  Json states = Json::object();
  for (int k = 0; k < kNumFPs; ++k) states[fpName(static_cast<FPKind>(k))] = io::toJson(c.states[k]);
  return {{"type", "candidate"},
          {"id", c.id},
          {"parent", c.parent},
          {"call", c.call},
          {"design", io::toJson(c.d)},
          {"costs", {c.costs[0], c.costs[1], c.costs[2]}},
          {"states", states}};
}

inline CandidateRecord candidateFromJson(const Json& j) {
  using namespace io;
  rejectUnknown(j, {"type", "id", "parent", "call", "design", "costs", "states"}, "candidate");
  if (text(member(j, "type", "candidate"), "candidate.type") != "candidate")
    throw ConfigError("candidate: wrong record type");
  CandidateRecord c;
  c.id = integer(member(j, "id", "candidate"), "candidate.id");
  c.parent = integer(member(j, "parent", "candidate"), "candidate.parent");
  c.call = integer64(member(j, "call", "candidate"), "candidate.call");
  c.d = designFromJson(member(j, "design", "candidate"), "candidate.design");
  const VecX costs = vector(member(j, "costs", "candidate"), "candidate.costs", kNumFPs);
  const Json& st = member(j, "states", "candidate");
  rejectUnknown(st, {"carve", "poke", "press"}, "candidate.states");
  for (int k = 0; k < kNumFPs; ++k) {
    const FPKind kind = static_cast<FPKind>(k);
    const std::string w = std::string("candidate.states.") + fpName(kind);
    c.costs[k] = costs[k];
    c.states[k] = stateFromJson(member(st, fpName(kind), "candidate.states"), w);
    checkTopology(c.states[k], kind, w);
  }
  return c;
}

struct CandidateFile {
  CandidateHeader header;
  std::vector<CandidateRecord> candidates;
  std::vector<std::string> warnings;  // one per skipped line
};

/// Reads a candidate file; corrupt candidate lines are skipped with a warning.
inline CandidateFile readCandidates(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  CandidateFile f;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!have_header) {
      try {
        f.header = headerFromJson(Json::parse(line));
      } catch (const std::exception& e) {
        throw ConfigError(p.string() + ":" + std::to_string(lineno) + ": bad header: " + e.what());
      }
      have_header = true;
      continue;
    }
    try {
      f.candidates.push_back(candidateFromJson(Json::parse(line)));
    } catch (const std::exception& e) {
      f.warnings.push_back(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ConfigError(p.string() + ": missing header record");
  return f;
}

// --- paths ----------------------------------------------------------------

inline Json toJson(const StepRecord& s) {
  Json forces = Json::array(), torques = Json::array();
  for (const auto& f : s.forces) forces.push_back(io::toJson(f));
  for (const auto& t : s.torques) torques.push_back(io::toJson(t));
  return {{"phi", s.phi},
          {"state", io::toJson(s.state.flatten())},
          {"rates", io::toJson(s.rates)},
          {"sliding", s.sliding},
          {"objective", s.objective},
          {"equilibrium", s.equilibrium},
          {"forces", forces},
          {"torques", torques},
          {"residual", io::finite(s.residual)},
          {"min_clearance", io::finite(s.min_clearance)}};
}

inline Json toJson(const PathRecord& p, int candidate) {
  Json steps = Json::array();
  for (const auto& s : p.steps) steps.push_back(toJson(s));
  return {{"type", "path"},
          {"candidate", candidate},
          {"fp", fpName(p.fp)},
          {"direction", p.direction},
          {"termination", toString(p.termination)},
          {"motion_range", p.motion_range},
          {"steps", steps}};
}

inline PathRecord pathFromJson(const Json& j, int* candidate = nullptr) {
  using namespace io;
  rejectUnknown(j, {"type", "candidate", "fp", "direction", "termination", "motion_range", "steps"}, "path");
  if (text(member(j, "type", "path"), "path.type") != "path") throw ConfigError("path: wrong record type");
  PathRecord p;
  if (candidate) *candidate = integer(member(j, "candidate", "path"), "path.candidate");
  p.fp = fpKind(member(j, "fp", "path"), "path.fp");
  p.direction = integer(member(j, "direction", "path"), "path.direction");
  if (p.direction != 1 && p.direction != -1) throw ConfigError("path.direction: expected 1 or -1");
  const auto t = parseTermination(text(member(j, "termination", "path"), "path.termination"));
  if (!t) throw ConfigError("path.termination: unknown reason");
  p.termination = *t;
  p.motion_range = number(member(j, "motion_range", "path"), "path.motion_range");
  const FPSpec topo = makeTopology(p.fp);
  SystemState like;
  for (const auto& c : topo.contacts) like.contacts.push_back(ContactPair{c.finger, {}, {}, 0.0, 0.0});
  const Json& steps = member(j, "steps", "path");
  if (!steps.is_array()) throw ConfigError("path.steps: expected an array");
  const auto vec3List = [](const Json& a, const std::string& w) {
    if (!a.is_array()) throw ConfigError(w + ": expected an array");
    std::vector<Vec3> out;
    for (const auto& x : a) out.push_back(vec3(x, w));
    return out;
  };
  for (const auto& s : steps) {
    const std::string w = "path.steps";
    rejectUnknown(s, {"phi", "state", "rates", "sliding", "objective", "equilibrium", "forces", "torques", "residual",
                      "min_clearance"},
                  w);
    StepRecord r;
    r.phi = number(member(s, "phi", w), w + ".phi");
    r.state = SystemState::unflatten(vector(member(s, "state", w), w + ".state", like.dimension()), like);
    r.rates = vector(member(s, "rates", w), w + ".rates");
    const VecX sl = vector(member(s, "sliding", w), w + ".sliding");
    r.sliding.assign(sl.data(), sl.data() + sl.size());
    r.objective = number(member(s, "objective", w), w + ".objective");
    r.equilibrium = boolean(member(s, "equilibrium", w), w + ".equilibrium");
    r.forces = vec3List(member(s, "forces", w), w + ".forces");
    r.torques = vec3List(member(s, "torques", w), w + ".torques");
    r.residual = number(member(s, "residual", w), w + ".residual");
    r.min_clearance = number(member(s, "min_clearance", w), w + ".min_clearance");
    p.steps.push_back(std::move(r));
  }
  return p;
}

/// One candidate's path file: six path records, one per line.
inline std::string pathFileContent(const std::vector<PathRecord>& paths, int candidate) {
  std::string out;
  for (const auto& p : paths) {
    out += toJson(p, candidate).dump();
    out += '\n';
  }
  return out;
}

/// Reads a candidate's path file; throws if it is not complete.
inline std::vector<PathRecord> readPathFile(const std::filesystem::path& p, int candidate) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::vector<PathRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int cid = -1;
    try {
      out.push_back(pathFromJson(Json::parse(line), &cid));
    } catch (const Json::exception& e) {
      throw ConfigError(p.string() + ": " + e.what());
    }
    if (cid != candidate) throw ConfigError(p.string() + ": record of another candidate");
  }
  if (out.size() != 2 * kNumFPs) throw ConfigError(p.string() + ": incomplete path set");
  for (int k = 0; k < kNumFPs; ++k)
    if (out[2 * k].fp != static_cast<FPKind>(k) || out[2 * k].direction != 1 || out[2 * k + 1].fp != out[2 * k].fp ||
        out[2 * k + 1].direction != -1)
      throw ConfigError(p.string() + ": paths out of order");
  return out;
}

inline std::filesystem::path pathFileName(const std::filesystem::path& dir, int candidate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "candidate_%06d.jsonl", candidate);
  return dir / buf;
}

// --- scores ---------------------------------------------------------------

inline std::vector<std::string> scoreColumns() {
  std::vector<std::string> cols = {"id", "d1", "d2", "d3", "d4", "d5", "d6"};
  for (const char* suffix : {"", "_score"})
    for (int k = 0; k < kNumFPs; ++k)
      for (int m = 0; m < kNumMetrics; ++m)
        cols.push_back(std::string(fpName(static_cast<FPKind>(k))) + "_" + metricName(m) + suffix);
  for (const char* c : {"pareto", "wielding_success", "complete"}) cols.push_back(c);
  return cols;
}

inline std::string formatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string scoreCsv(const ScoreTable& t, const std::vector<int>& ids) {
  std::string out;
  const auto cols = scoreColumns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const ScoreRow& row = t.rows[r];
    out += std::to_string(ids[r]);
    const Vec6 d = row.design.vector();
    for (int i = 0; i < 6; ++i) out += "," + formatNumber(d[i]);
    for (double v : row.raw) out += "," + formatNumber(v);
    for (double v : row.scores) out += "," + formatNumber(v);
    out += std::string(",") + (row.pareto ? "1" : "0") + "," + (row.wielding_success ? "1" : "0") + "," +
           (row.complete ? "1" : "0") + "\n";
  }
  return out;
}

/// Parsed CSV: header names and numeric rows.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(columns.size()); ++i)
      if (columns[i] == name) return i;
    return -1;
  }
};

inline Table parseCsv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ls(s);
    while (std::getline(ls, cur, ',')) out.push_back(cur);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) return t;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.columns = split(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size())
      throw ConfigError("csv line " + std::to_string(lineno) + ": wrong number of cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ConfigError("csv line " + std::to_string(lineno) + ": not a number '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rebuilds a score table from CSV produced by scoreCsv.
inline ScoreTable scoreTableFromCsv(const Table& t, std::vector<int>* ids = nullptr) {
  const auto cols = scoreColumns();
  if (t.columns != cols) throw ConfigError("csv: unexpected columns");
  ScoreTable out;
  for (const auto& r : t.rows) {
    ScoreRow row;
    if (ids) ids->push_back(static_cast<int>(r[0]));
    Vec6 d;
    for (int i = 0; i < 6; ++i) d[i] = r[1 + i];
    row.design = DesignParams::fromVector(d);
    for (int j = 0; j < kNumScores; ++j) {
      row.raw[j] = r[7 + j];
      row.scores[j] = r[7 + kNumScores + j];
    }
    row.pareto = r[7 + 2 * kNumScores] != 0.0;
    row.wielding_success = r[8 + 2 * kNumScores] != 0.0;
    row.complete = r[9 + 2 * kNumScores] != 0.0;
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace toolhand
