#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "axialseg/gradcheck.hpp"
#include "axialseg/run_config.hpp"

namespace axialseg {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNonFinite = 3 };

/// Generation worker count: hardware concurrency, capped by AXIALSEG_THREADS when set.
std::size_t generation_threads();

/// Writes the synthetic corpus to cfg.out_dir.
int cmd_gen(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Trains cfg.model.variant on the corpus in cfg.corpus_dir. Writes to cfg.out_dir:
/// metrics.txt (one `epoch=` line per epoch), eval.txt (eval-mode metrics every
/// eval_every epochs and at the end) and the checkpoint, refreshed on the same schedule.
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Evaluates cfg.checkpoint_path() on cfg.corpus_dir. Prints per-image and mean
/// metrics, writes the same to out_dir/eval_metrics.txt and thresholded
/// predictions to out_dir/predictions/<id>.pgm.
int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct GradcheckCase {
  std::string name;
  GradCheckReport report;
  bool passed = false;
};

struct GradcheckSuiteOptions {
  double eps = 1e-4;
  double tol = 1e-5;
  bool ops = true;
  bool layer = true;
  bool model = true;
};

/// Finite-difference checks (double precision): one case per differentiable
/// op ("op:<name>"), one gated axial layer ("layer") and micro-MedT ("micro_medt").
std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& opt);

/// Runs the suite with cfg.eps / cfg.gradcheck_tol. Nonzero exit names the
/// worst param and every failing op.
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err,
                  const GradcheckSuiteOptions& base = {});

inline constexpr std::size_t kBenchMaxSize = 128;

struct BenchRow {
  std::size_t size = 0;
  std::size_t channels = 0;
  std::uint64_t full_macs = 0, full_analytic = 0;
  std::uint64_t axial_macs = 0, axial_analytic = 0;          // one positional-free width pass
  std::uint64_t axial_pos_macs = 0, axial_pos_analytic = 0;  // one pass with positional terms
  std::uint64_t axial_both_analytic = 0;                     // height + width passes
  double full_ms = 0, axial_ms = 0;

  bool exact() const {
    return full_macs == full_analytic && axial_macs == axial_analytic && axial_pos_macs == axial_pos_analytic;
  }
};

/// Analytic MAC counts per single image with d channels.
std::uint64_t full_attention_macs(std::size_t size, std::size_t channels);
std::uint64_t axial_pass_macs(std::size_t size, std::size_t channels, bool positional);

BenchRow bench_size(std::size_t size, std::size_t channels, std::uint64_t seed);

/// Table of measured vs analytic MACs and wall time over cfg.bench_sizes.
int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace axialseg
