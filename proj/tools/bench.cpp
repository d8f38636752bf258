// Serial versus OpenMP kernels on a simulated contaminated dataset.
#include <chrono>
#include <cstdlib>
#include <functional>

#include <fmt/format.h>
#include <omp.h>

#include "robcv/cross_validation.hpp"
#include "robcv/simulation.hpp"

using namespace robcv;

namespace {

double best_of(int repeats, const std::function<void()>& work) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    work();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

bool same(const std::vector<std::optional<LocalMinimum>>& a, const std::vector<std::optional<LocalMinimum>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].has_value() != b[k].has_value()) return false;
    if (a[k] && (a[k]->coef.beta != b[k]->coef.beta || a[k]->objective != b[k]->objective)) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  SimulationConfig config;
  config.n = 100;
  config.p = 50;
  config.error_family = ErrorFamily::kStable15;
  const Dataset data = simulate(config).dataset();
  const LossSpec loss = LossSpec::calibrated_s_loss(RhoKind::kBisquare, 0.4);
  PenaltyFamily family;
  family.alpha = 0.5;
  const auto grid = default_lambda_grid(data, loss, family, 8, 1e-2);
  fmt::print("threads available: {}\n", omp_get_max_threads());

  const PenaltySpec penalty = family.at(start_lambda(grid));
  const auto starts = generate_starts(data, loss, penalty, 40, 3);
  OptimizerOptions optimizer;
  std::vector<std::optional<LocalMinimum>> serial, parallel;
  const double t_serial = best_of(repeats, [&] { serial = optimize_starts_serial(data, loss, penalty, starts, optimizer); });
  const double t_parallel = best_of(repeats, [&] { parallel = optimize_starts_parallel(data, loss, penalty, starts, optimizer); });
  fmt::print("optimize_starts  serial {:8.3f}s  openmp {:8.3f}s  speedup {:5.2f}  identical {}\n", t_serial,
             t_parallel, t_serial / t_parallel, same(serial, parallel));

  PipelineOptions pipeline;
  pipeline.path.max_minima = 10;
  pipeline.path.parallel = false;
  const MinimaRegistry registry = fit_path(data, loss, family, grid, pipeline, 5);
  CvOptions options;
  options.pipeline = pipeline;
  options.replications = 2;
  for (const char* engine : {"ris", "naive"}) {
    const bool ris = std::string(engine) == "ris";
    const auto run = [&](bool concurrent) {
      CvOptions o = options;
      o.parallel = concurrent;
      if (ris) return ris_cv(registry, data, loss, family, o);
      PipelineOptions single = pipeline;
      single.path.max_minima = 1;
      o.pipeline = single;
      return naive_cv(registry, data, loss, family, o);
    };
    CvOutcome a, b;
    const double ts = best_of(repeats, [&] { a = run(false); });
    const double tp = best_of(repeats, [&] { b = run(true); });
    fmt::print("{:>5}_cv         serial {:8.3f}s  openmp {:8.3f}s  speedup {:5.2f}  identical {}\n", engine, ts, tp,
               ts / tp, a.curve() == b.curve());
  }
  return 0;
}
