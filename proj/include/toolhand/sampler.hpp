#pragma once

// Sampling of the standardized design space: FP costs, the per-FP nonlinear
// program that moves a hand to its foundational poses, acceptance checks,
// the RRT proposal step, the sampling loop, and the coverage estimate.

#include <array>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "toolhand/mechanics.hpp"

namespace toolhand {

/// Physical and numerical settings shared by sampling, planning and evaluation.
struct ModelConfig {
  ToolGeom tool;
  DesignBounds bounds;
  JointLimits limits;
  FrictionModel friction;
  double tip_force = 10.0;        // N
  double collision_margin = 1.0;  // mm
  double lambda = 0.5;            // weight of the MCP abduction regularizer
  double tol_con = 1e-8;
  double tol_opt = 1e-6;
  int nlp_max_iter = 200;
  double cond_max = 1e6;
  double clearance_slack = 1e-6;  // collision constraints are solved to this positive slack
  double opposition_min = 0.5;    // required -z_tool . z_finger at each contact

  void validate() const {
    tool.validate();
    friction.validate();
    if (!((bounds.hi - bounds.lo).array() > 0.0).all()) throw DomainError("design bounds must satisfy d_min < d_max");
    if (!((limits.hi - limits.lo).array() >= 0.0).all()) throw DomainError("joint limits inverted");
    if (!(tip_force >= 0.0)) throw DomainError("tip force must be non-negative");
    if (!(collision_margin >= 0.0)) throw DomainError("collision margin must be non-negative");
    if (!(lambda >= 0.0)) throw DomainError("regularizer weight must be non-negative");
    if (!(tol_con > 0.0 && tol_opt > 0.0)) throw DomainError("tolerances must be positive");
  }
};

// ---------------------------------------------------------------------------
// FP cost
// ---------------------------------------------------------------------------

/// FP objective at a state with the tool at rest; optional gradient over the
/// flattened state.
///  carve: -mean_i (z_i . t)^2 with z_i the inward tool normal at contact i
///         and t the cutting tangent of the tip;
///  poke/press: sum over pinches of z_a . z_b (-1 per perfectly opposed pinch);
///  plus lambda * sum of squared MCP abduction angles.
inline double fp_cost(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                      const ToolGeom& tool, double lambda, VecX* grad = nullptr) {
  (void)d;
  const int n = s.numContacts();
  if (grad) grad->setZero(layout::dimension(n));
  std::vector<SurfacePatch> patch;
  patch.reserve(n);
  for (const auto& c : s.contacts) patch.push_back(cylinderPatch(tool, c.tool.a1, c.tool.a2));
  double cost = 0.0;
  if (fp.cost == CostSelector::carve_moment) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : patch) c += p.p;
    c /= n;
    const Vec3 ex = Vec3::UnitX();
    const Vec3 v = ex.cross(tool.tip() - c);
    const double vn = v.norm();
    if (vn < 1e-12) throw DomainError("tool tip lies on the rotation axis");
    const Vec3 t = v / vn;
    const Mat3 dt_dv = (Mat3::Identity() - t * t.transpose()) / vn;
    Vec3 dcost_dt = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      const double a = patch[i].z().dot(t);
      cost -= a * a / n;
      dcost_dt -= 2.0 * a / n * patch[i].z();
      if (grad) (*grad)[layout::toolA2(i)] += -2.0 * a / n * patch[i].dz.col(1).dot(t);
    }
    if (grad) {
      // t depends on the centroid: dv = -ex x dc, dc = dp_i / n
      const Eigen::RowVector3d g_c = -(dcost_dt.transpose() * dt_dv) * skew(ex);
      for (int i = 0; i < n; ++i) {
        const Eigen::RowVector2d g = g_c * patch[i].dp / n;
        (*grad)[layout::toolA1(i)] += g[0];
        (*grad)[layout::toolA2(i)] += g[1];
      }
    }
  } else {
    for (const auto& [a, b] : fp.pinches()) {
      cost += patch[a].z().dot(patch[b].z());
      if (grad) {
        (*grad)[layout::toolA2(a)] += patch[a].dz.col(1).dot(patch[b].z());
        (*grad)[layout::toolA2(b)] += patch[b].dz.col(1).dot(patch[a].z());
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    const double u2 = s.contacts[i].joints.mcp_abd;
    cost += lambda * u2 * u2;
    if (grad) (*grad)[layout::fingerVar(n, i) + 1] += 2.0 * lambda * u2;
  }
  return cost;
}

// ---------------------------------------------------------------------------
// Solving one FP
// ---------------------------------------------------------------------------

/// Absolute bounds on the flattened state: the FP table intersected with the
/// joint limits and the surface domains of this design.
inline std::pair<VecX, VecX> effectiveBounds(const FPSpec& fp, const DesignParams& d,
                                             const ModelConfig& cfg) {
  const int n = fp.numContacts();
  VecX lo = fp.theta_lo, hi = fp.theta_hi;
  const double end = capsuleDomainEnd(d.finger_radius, d.distalBodyLength());
  for (int i = 0; i < n; ++i) {
    const int ta = layout::toolA1(i);
    lo[ta] = std::max(lo[ta], 0.0);
    hi[ta] = std::min(hi[ta], cfg.tool.length);
    const int f = layout::fingerVar(n, i);
    for (int j = 0; j < 3; ++j) {
      lo[f + j] = std::max(lo[f + j], cfg.limits.lo[j]);
      hi[f + j] = std::min(hi[f + j], cfg.limits.hi[j]);
    }
    lo[f + 3] = std::max(lo[f + 3], 0.0);
    hi[f + 3] = std::min(hi[f + 3], end - 2.0 * kPoleGuard * d.finger_radius);
  }
  return {lo, hi};
}

struct FPSolution {
  bool ok = false;
  std::string reason;  // first failed acceptance condition
  SystemState state;
  double cost = 0.0;
  NLPStatus status = NLPStatus::iteration_limit;
  int iterations = 0;
};

namespace detail {

/// Flattened-state indices optimized by the FP program (all but the spins).
inline std::vector<int> fpVariables(int n) {
  std::vector<int> idx;
  for (int j = 0; j < layout::dimension(n); ++j) {
    bool spin = false;
    for (int i = 0; i < n; ++i) spin |= j == layout::toolSpin(i);
    if (!spin) idx.push_back(j);
  }
  return idx;
}

inline MatX selectColumns(const MatX& J, const std::vector<int>& idx) {
  MatX out(J.rows(), static_cast<int>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(k) = J.col(idx[k]);
  return out;
}

/// Opposition of the two normals per contact: -z_t . z_f - c_min >= 0.
inline VecX oppositionValues(const SystemState& s, const DesignParams& d, const ToolGeom& tool,
                             double c_min, MatX* jac) {
  const int n = s.numContacts();
  const auto ev = evaluateContacts(s, d, tool);
  VecX v(n);
  if (jac) jac->setZero(n, layout::dimension(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 zt = ev[i].Rt.col(2), zf = ev[i].Rf.col(2);
    v[i] = -zt.dot(zf) - c_min;
    if (!jac) continue;
    jac->block<1, 2>(i, layout::toolA1(i)) = -zf.transpose() * ev[i].dRt[2];
    jac->block<1, 5>(i, layout::fingerVar(n, i)) = -zt.transpose() * ev[i].dRf[2];
    jac->block<1, 6>(i, 0) = -zt.transpose() * ev[i].dRf_hand[2];
  }
  return v;
}

/// Condition number of the reduced contact-constraint Jacobian.
inline double constraintConditionNumber(const SystemState& s, const DesignParams& d,
                                        const ToolGeom& tool) {
  MatX J;
  reducedResidual(s, d, tool, Transform::Identity(), &J);
  const MatX Jr = selectColumns(J, fpVariables(s.numContacts()));
  Eigen::JacobiSVD<MatX> svd(Jr);
  const VecX sv = svd.singularValues();
  const double lo = sv[sv.size() - 1];
  return lo > 0.0 ? sv[0] / lo : kInf;
}

}  // namespace detail

/// Checks the acceptance conditions of one solved FP state; returns the first
/// failed condition or an empty string.
inline std::string checkFPState(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                                const ModelConfig& cfg) {
  const VecX r = reach_fp_residual(s, d, fp, cfg.tool);
  if (!(r.cwiseAbs().maxCoeff() < cfg.tol_con)) return "reach residual";
  const auto [lo, hi] = effectiveBounds(fp, d, cfg);
  const VecX x = s.flatten();
  const auto spins = [&](int j) {
    for (int i = 0; i < s.numContacts(); ++i)
      if (j == layout::toolSpin(i)) return true;
    return false;
  };
  for (int j = 0; j < x.size(); ++j)
    if (!spins(j) && (x[j] < lo[j] - 1e-9 || x[j] > hi[j] + 1e-9)) return "variable bounds";
  if (collision_values(s, d, fp, cfg.tool, cfg.collision_margin).min_clearance < 0.0) return "collision";
  if (!equilibriumBothDirections(s, d, fp, cfg.tool, cfg.tip_force, cfg.friction)) return "static equilibrium";
  if (detail::constraintConditionNumber(s, d, cfg.tool) > cfg.cond_max) return "kinematic singularity";
  return {};
}

/// Moves the hand to one FP: minimize the FP cost subject to the contact
/// constraints, collision clearances and bounds, starting from `init`.
inline FPSolution solveFP(const SystemState& init, const DesignParams& d, const FPSpec& fp,
                          const ModelConfig& cfg) {
  FPSolution out;
  out.state = init;
  try {
    validateDesign(d);
  } catch (const DomainError&) {
    out.reason = "design template";
    return out;
  }
  const int n = fp.numContacts();
  const std::vector<int> idx = detail::fpVariables(n);
  const int nv = static_cast<int>(idx.size());
  const VecX full0 = init.flatten();
  // lengths enter the NLP in cm so that all variables have comparable scale
  VecX sc = VecX::Ones(nv);
  for (int k = 0; k < nv; ++k) {
    const int j = idx[k];
    bool length = j < 3;
    for (int i = 0; i < n; ++i) length |= j == layout::toolA1(i) || j == layout::fingerVar(n, i) + 3;
    if (length) sc[k] = 10.0;
  }
  const auto toState = [&](const VecX& x) {
    VecX full = full0;
    for (int k = 0; k < nv; ++k) full[idx[k]] = x[k] * sc[k];
    return SystemState::unflatten(full, init);
  };
  const auto scaleCols = [&](const MatX& Jf) {
    MatX J = detail::selectColumns(Jf, idx);
    for (int k = 0; k < nv; ++k) J.col(k) *= sc[k];
    return J;
  };
  const auto [lo_full, hi_full] = effectiveBounds(fp, d, cfg);
  if (((hi_full - lo_full).array() < 0.0).any()) {
    out.reason = "variable bounds";
    return out;
  }
  NLPProblem p;
  p.x0.resize(nv);
  p.lb.resize(nv);
  p.ub.resize(nv);
  for (int k = 0; k < nv; ++k) {
    p.x0[k] = full0[idx[k]] / sc[k];
    p.lb[k] = lo_full[idx[k]] / sc[k];
    p.ub[k] = hi_full[idx[k]] / sc[k];
  }
  p.cost = [&](const VecX& x, VecX* g) {
    VecX gf;
    const double c = fp_cost(toState(x), d, fp, cfg.tool, cfg.lambda, g ? &gf : nullptr);
    if (g) {
      g->resize(nv);
      for (int k = 0; k < nv; ++k) (*g)[k] = gf[idx[k]] * sc[k];
    }
    return c;
  };
  p.eq = [&](const VecX& x, MatX* J) {
    MatX Jf;
    const VecX r = reducedResidual(toState(x), d, cfg.tool, Transform::Identity(), J ? &Jf : nullptr);
    if (J) *J = scaleCols(Jf);
    return r;
  };
  p.ineq = [&](const VecX& x, MatX* J) {
    const SystemState s = toState(x);
    const CollisionReport rep = collision_values(s, d, fp, cfg.tool, cfg.collision_margin, ToolMotion{}, J != nullptr);
    MatX Jo;
    const VecX opp = detail::oppositionValues(s, d, cfg.tool, cfg.opposition_min, J ? &Jo : nullptr);
    VecX v(rep.clearance.size() + opp.size());
    v << rep.clearance.array() - cfg.clearance_slack, opp;
    if (J) {
      J->resize(v.size(), nv);
      J->topRows(rep.clearance.size()) = scaleCols(rep.gradient);
      J->bottomRows(opp.size()) = scaleCols(Jo);
    }
    return v;
  };
  NLPOptions opt;
  opt.tol_con = cfg.tol_con;
  opt.tol_opt = cfg.tol_opt;
  opt.max_iter = cfg.nlp_max_iter;
  NLPResult res;
  try {
    res = solve_nlp(p, opt);
  } catch (const DomainError&) {
    out.reason = "surface domain";
    return out;
  }
  out.status = res.status;
  out.iterations = res.iterations;
  if (res.violation > cfg.tol_con) {
    out.reason = "reach residual";
    return out;
  }
  SystemState s = toState(res.x);
  // polish the contact equations with the non-spin variables
  std::vector<char> free(layout::dimension(n), 1);
  for (int i = 0; i < n; ++i) free[layout::toolSpin(i)] = 0;
  try {
    projectToContact(s, d, cfg.tool, Transform::Identity(), free, 1e-13);
    syncSpins(s, d, cfg.tool);
    out.state = s;
    out.cost = fp_cost(s, d, fp, cfg.tool, cfg.lambda);
    out.reason = checkFPState(s, d, fp, cfg);
  } catch (const DomainError&) {
    out.reason = "surface domain";
  }
  out.ok = out.reason.empty();
  return out;
}

// ---------------------------------------------------------------------------
// Candidates and the sampling loop
// ---------------------------------------------------------------------------

struct CandidateRecord {
  int id = 0;
  DesignParams d;
  std::array<SystemState, kNumFPs> states;
  std::array<double, kNumFPs> costs{};
  int parent = -1;
  std::int64_t call = 0;  // RRT call that produced the candidate (0 for the seed)
};

struct AttemptResult {
  bool ok = false;
  std::string reason;  // "<fp>: <condition>" for the first failure
  std::array<SystemState, kNumFPs> states;
  std::array<double, kNumFPs> costs{};
};

/// Moves a new design to all FPs starting from the parent's FP states.
inline AttemptResult attempt_fps(const DesignParams& d_new,
                                 const std::array<SystemState, kNumFPs>& init,
                                 const std::array<FPSpec, kNumFPs>& fps, const ModelConfig& cfg,
                                 bool concurrent = false) {
  std::array<FPSolution, kNumFPs> sol;
  if (concurrent) {
    std::array<std::future<FPSolution>, kNumFPs> fut;
    for (int k = 0; k < kNumFPs; ++k)
      fut[k] = std::async(std::launch::async, [&, k] { return solveFP(init[k], d_new, fps[k], cfg); });
    for (int k = 0; k < kNumFPs; ++k) sol[k] = fut[k].get();
  } else {
    for (int k = 0; k < kNumFPs; ++k) sol[k] = solveFP(init[k], d_new, fps[k], cfg);
  }
  AttemptResult out;
  for (int k = 0; k < kNumFPs; ++k) {
    if (!sol[k].ok) {
      out.reason = std::string(fpName(fps[k].kind)) + ": " + sol[k].reason;
      return out;
    }
    out.states[k] = sol[k].state;
    out.costs[k] = sol[k].cost;
  }
  out.ok = true;
  return out;
}

enum class SampleMode { planar, full };  // (d2, d3) only, or all six parameters

struct SamplerConfig {
  double step_size = 0.02;
  double min_candidate_dist = 0.015;
  int target_candidates = 100;
  double efficiency_threshold = 0.01;
  int efficiency_window = 500;
  std::uint64_t rng_seed = 1;
  SampleMode mode = SampleMode::planar;
  std::int64_t max_calls = 1000000;

  void validate() const {
    if (!(step_size > 0.0)) throw DomainError("step_size must be positive");
    if (!(min_candidate_dist > 0.0 && min_candidate_dist <= step_size))
      throw DomainError("min_candidate_dist must lie in (0, step_size]");
    if (!(efficiency_threshold > 0.0 && efficiency_threshold < 1.0))
      throw DomainError("efficiency_threshold must lie in (0, 1)");
    if (efficiency_window < 1) throw DomainError("efficiency_window must be positive");
    if (target_candidates < 1) throw DomainError("target_candidates must be positive");
  }
};

/// Coordinates sampled in each mode (indices into the standardized vector).
inline std::vector<int> sampledAxes(SampleMode mode) {
  if (mode == SampleMode::planar) return {1, 2};
  return {0, 1, 2, 3, 4, 5};
}

struct Proposal {
  Vec6 point = Vec6::Zero();  // standardized
  int nearest = 0;
  Vec6 target = Vec6::Zero();
};

inline int nearestCandidate(const std::vector<Vec6>& pts, const Vec6& q) {
  int best = 0;
  double bd = kInf;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const double dd = (pts[i] - q).squaredNorm();
    if (dd < bd) {
      bd = dd;
      best = i;
    }
  }
  return best;
}

/// Steps from the nearest candidate toward q by at most `step`.
inline Proposal steerToward(const std::vector<Vec6>& pts, const Vec6& q, double step) {
  Proposal p;
  p.target = q;
  p.nearest = nearestCandidate(pts, q);
  const Vec6 dir = q - pts[p.nearest];
  const double dist = dir.norm();
  p.point = dist <= step ? q : Vec6(pts[p.nearest] + dir * (step / dist));
  return p;
}

/// Uniform sample in the standardized box (non-sampled axes copied from
/// `frozen`), then one RRT step from the nearest candidate.
inline Proposal rrt_propose(const std::vector<Vec6>& pts, std::mt19937_64& rng,
                            const SamplerConfig& cfg, const Vec6& frozen) {
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  Vec6 q = frozen;
  for (int a : sampledAxes(cfg.mode)) q[a] = U(rng);
  return steerToward(pts, q, cfg.step_size);
}

struct SamplingResult {
  std::vector<CandidateRecord> candidates;
  std::vector<double> efficiency;  // trailing mean after each call
  std::int64_t calls = 0;
  std::string termination;  // "target" or "efficiency" or "max_calls"
};

struct SamplingCallbacks {
  std::function<void(const CandidateRecord&)> on_accept;
  std::function<void(std::int64_t calls, int candidates, double efficiency)> on_progress;
};

inline SamplingResult run_sampling(const SamplerConfig& scfg, const ModelConfig& mcfg,
                                   const std::array<FPSpec, kNumFPs>& fps,
                                   const CandidateRecord& seed, const SamplingCallbacks& cb = {},
                                   bool concurrent = false) {
  scfg.validate();
  SamplingResult res;
  res.candidates.push_back(seed);
  res.candidates.back().id = 0;
  res.candidates.back().parent = -1;
  res.candidates.back().call = 0;
  if (cb.on_accept) cb.on_accept(res.candidates.back());
  std::vector<Vec6> pts = {standardize(seed.d, mcfg.bounds)};
  const Vec6 frozen = pts[0];
  std::mt19937_64 rng(scfg.rng_seed);
  std::vector<char> hits;
  double window_sum = 0.0;
  res.termination = "target";
  while (static_cast<int>(res.candidates.size()) < scfg.target_candidates) {
    if (res.calls >= scfg.max_calls) {
      res.termination = "max_calls";
      break;
    }
    ++res.calls;
    const Proposal prop = rrt_propose(pts, rng, scfg, frozen);
    bool accepted = false;
    bool far_enough = true;
    for (const auto& p : pts)
      if ((p - prop.point).norm() < scfg.min_candidate_dist) far_enough = false;
    if (far_enough) {
      const DesignParams d_new = destandardize(prop.point, mcfg.bounds);
      const AttemptResult at = attempt_fps(d_new, res.candidates[prop.nearest].states, fps, mcfg, concurrent);
      if (at.ok) {
        CandidateRecord rec;
        rec.id = static_cast<int>(res.candidates.size());
        rec.d = d_new;
        rec.states = at.states;
        rec.costs = at.costs;
        rec.parent = prop.nearest;
        rec.call = res.calls;
        res.candidates.push_back(rec);
        pts.push_back(prop.point);
        accepted = true;
        if (cb.on_accept) cb.on_accept(rec);
      }
    }
    hits.push_back(accepted ? 1 : 0);
    window_sum += accepted ? 1.0 : 0.0;
    if (static_cast<int>(hits.size()) > scfg.efficiency_window) window_sum -= hits[hits.size() - 1 - scfg.efficiency_window];
    const int w = std::min<int>(static_cast<int>(hits.size()), scfg.efficiency_window);
    const double eff = window_sum / w;
    res.efficiency.push_back(eff);
    if (cb.on_progress) cb.on_progress(res.calls, static_cast<int>(res.candidates.size()), eff);
    if (static_cast<int>(hits.size()) >= scfg.efficiency_window && eff < scfg.efficiency_threshold) {
      res.termination = "efficiency";
      break;
    }
  }
  return res;
}

/// Volume of the unit-radius ball in `dim` dimensions.
inline double unitBallVolume(int dim) {
  return std::pow(kPi, 0.5 * dim) / std::tgamma(0.5 * dim + 1.0);
}

/// N balls of radius half the minimum pairwise distance, as a fraction of the
/// unit standardized volume (no overlap correction).
inline double coverageFromRadius(std::size_t count, double radius, int dim) {
  return static_cast<double>(count) * unitBallVolume(dim) * std::pow(radius, dim);
}

inline double coverage_estimate(const std::vector<VecX>& pts, int dim) {
  if (pts.size() < 2) throw DomainError("coverage needs at least two candidates");
  double dmin = kInf;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) dmin = std::min(dmin, (pts[i] - pts[j]).norm());
  return coverageFromRadius(pts.size(), 0.5 * dmin, dim);
}

}  // namespace toolhand
