#include <iostream>

#include "CLI11.hpp"
#include "toolhand/craft.hpp"
#include "toolhand/pipeline.hpp"

using namespace toolhand;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUser = 2;

Pipeline loadPipeline(const std::string& config, const std::string& mode, int workers) {
  PipelineConfig c = loadConfig(config);
  if (mode == "2d") c.sampler.mode = SampleMode::planar;
  else if (mode == "6d") c.sampler.mode = SampleMode::full;
  if (workers > 0) c.workers = workers;
  if (!mode.empty() || workers > 0) {
    // overrides change the configuration, so the hash is recomputed
    Json j = configToJson(c);
    j["seed"] = std::filesystem::absolute(c.seed_path).generic_string();
    c = configFromJson(j);
  }
  Seed seed = loadSeed(c.seed_path);
  return Pipeline(std::move(c), std::move(seed));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design sampling, path planning and evaluation of tool-wielding hands"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config, out, mode, input, metric = "motion_range", fp = "carve", axes = "d2,d3";
  int workers = 0, starts = 40;
  bool resume = false;
  std::uint64_t craft_seed = 7;
  std::vector<double> design;

  const auto addConfig = [&](CLI::App* sub) {
    sub->add_option("--config", config, "pipeline configuration (JSON, comments allowed)")->required()->check(CLI::ExistingFile);
  };
  const auto addWorkers = [&](CLI::App* sub) {
    sub->add_option("--workers", workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  };

  CLI::App* sample = app.add_subcommand("sample", "sample hand designs that reach all FPs");
  addConfig(sample);
  sample->add_option("--out", out, "candidate file (line-delimited JSON)")->required();
  sample->add_option("--mode", mode, "sampled design coordinates")->check(CLI::IsMember({"2d", "6d"}));
  addWorkers(sample);

  CLI::App* plan = app.add_subcommand("plan", "plan tool-wielding paths for every candidate");
  addConfig(plan);
  plan->add_option("candidates", input, "candidate file from 'sample'")->required()->check(CLI::ExistingFile);
  plan->add_option("--out", out, "output directory of the path dataset")->required();
  plan->add_flag("--resume", resume, "keep candidates whose path files are already complete");
  addWorkers(plan);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score candidates and compute the Pareto front");
  addConfig(evaluate);
  evaluate->add_option("paths", input, "path dataset directory from 'plan'")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", out, "score table (CSV); the summary goes next to it")->required();
  addWorkers(evaluate);

  CLI::App* landscape = app.add_subcommand("landscape", "scatter plot of a score over two columns");
  landscape->add_option("csv", input, "score table from 'evaluate'")->required()->check(CLI::ExistingFile);
  landscape->add_option("--metric", metric, "motion_range, mean_sliding or max_torque");
  landscape->add_option("--fp", fp, "carve, poke or press");
  landscape->add_option("--axes", axes, "two comma-separated column names");
  landscape->add_option("--out", out, "SVG file")->required();

  CLI::App* validate = app.add_subcommand("validate-seed", "check that the seed reaches all FPs");
  addConfig(validate);

  CLI::App* craft = app.add_subcommand("craft-seed", "search FP states for the seed design by multi-start");
  addConfig(craft);
  craft->add_option("--out", out, "seed file to write")->required();
  craft->add_option("--starts", starts, "random starts per FP")->check(CLI::PositiveNumber);
  craft->add_option("--rng-seed", craft_seed, "random seed of the starts");
  craft->add_option("--design", design, "d1..d6 (default: the design of the configured seed, if present)")
      ->expected(6)
      ->delimiter(',');
  addWorkers(craft);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUser;
  }

  try {
    if (*sample) {
      const Pipeline p = loadPipeline(config, mode, workers);
      cmd_sample(p, out, &std::cerr);
    } else if (*plan) {
      const Pipeline p = loadPipeline(config, "", workers);
      const PlanSummary s = cmd_plan(p, input, out, resume, &std::cerr);
      std::cerr << "planned " << s.planned << ", resumed " << s.resumed << ", skipped lines " << s.warnings.size()
                << std::endl;
    } else if (*evaluate) {
      const Pipeline p = loadPipeline(config, "", workers);
      const EvaluateSummary s = cmd_evaluate(p, input, out);
      std::cout << s.summary.dump(2) << std::endl;
    } else if (*landscape) {
      const auto comma = axes.find(',');
      if (comma == std::string::npos) throw ConfigError("--axes needs two comma-separated columns");
      cmd_landscape(input, metric, fp, axes.substr(0, comma), axes.substr(comma + 1), out);
    } else if (*validate) {
      const Pipeline p = loadPipeline(config, "", 0);
      const std::string bad = p.validateSeed();
      if (!bad.empty()) {
        std::cerr << "seed rejected: " << bad << std::endl;
        return kExitUser;
      }
      std::cout << "seed ok" << std::endl;
    } else if (*craft) {
      PipelineConfig c = loadConfig(config);
      if (workers > 0) c.workers = workers;
      DesignParams d;
      if (!design.empty()) d = DesignParams::fromVector(Vec6(design.data()));
      else if (std::filesystem::exists(c.seed_path)) d = loadSeed(c.seed_path).design;
      validateDesign(d);
      if (!c.model.bounds.contains(d)) throw ConfigError("design outside the design bounds");
      CraftConfig cc;
      cc.starts = starts;
      cc.rng_seed = craft_seed;
      cc.workers = c.workers;
      const CraftResult r = craftSeed(d, c.model, c.tables, cc, &std::cerr);
      if (!r.ok) {
        std::cerr << "craft failed: " << r.reason << std::endl;
        return kExitInternal;
      }
      io::writeFileAtomic(out, seedToJson(r.seed).dump(2) + "\n");
      std::cout << "seed written to " << out << std::endl;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUser;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << std::endl;
    return kExitInternal;
  }
  return 0;
}
