#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rtlod/errors.hpp"
#include "rtlod/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kCaseFailed = 3, kDataMissing = 4, kFailure = 5 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable LOD in Raviart-Thomas spaces: experiment runner"};
  std::string config_path;
  std::string out_dir;
  int threads = -1;
  std::string experiment;
  app.add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (default: config 'output' or ./out)");
  app.add_option("--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--experiment", experiment, "override the experiment kind")
      ->check(CLI::IsMember({"convergence", "spe10", "decay", "single"}));
  CLI11_PARSE(app, argc, argv);

  rtlod::ExperimentConfig cfg;
  try {
    nlohmann::json j;
    {
      std::ifstream in(config_path);
      j = nlohmann::json::parse(in);
    }
    if (!experiment.empty()) j["experiment"] = experiment;
    if (threads >= 0) j["threads"] = threads;
    cfg = rtlod::ExperimentConfig::from_json(j);
    if (cfg.coefficient.kind == rtlod::CoefficientSpec::Kind::Raster &&
        cfg.coefficient.path.is_relative() && !std::filesystem::exists(cfg.coefficient.path)) {
      cfg.coefficient.path = std::filesystem::path(config_path).parent_path() / cfg.coefficient.path;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
  } catch (const std::exception& e) {
    std::cerr << "rtlod: " << e.what() << '\n';
    return kUsage;
  }

  try {
    const rtlod::RunResult result = rtlod::run_experiment(cfg);
    const auto files = rtlod::write_outputs(cfg, result, cfg.out_dir);
    int failed = 0;
    for (const auto& c : result.cases) {
      const auto& r = c.report;
      if (!c.ok) {
        ++failed;
        std::fprintf(stderr, "case H=%.4g m=%d failed: %s\n", r.H, r.m, c.message.c_str());
        continue;
      }
      std::printf("H=%.4e m=%d ell=%d  err_u=%.3e err_p=%.3e err_div=%.3e  %.1fs\n", r.H, r.m,
                  r.ell, r.err_u_energy, r.err_p_l2, r.err_div, r.runtime_s);
    }
    for (const auto& d : result.decay) {
      std::printf("T=%d m=%d tail=%.3e loc=%.3e\n", d.element, d.m, d.tail, d.loc_error);
    }
    std::printf("wrote %zu files to %s (%.1fs)\n", files.size(), cfg.out_dir.string().c_str(),
                result.total_s);
    return failed ? kCaseFailed : kOk;
  } catch (const rtlod::DataMissingError& e) {
    std::cerr << "rtlod: data missing: " << e.what() << '\n';
    return kDataMissing;
  } catch (const std::exception& e) {
    std::cerr << "rtlod: " << e.what() << '\n';
    return kFailure;
  }
}
