#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "axialseg/data.hpp"
#include "axialseg/model.hpp"
#include "axialseg/training.hpp"

namespace axialseg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a CLI run reads. The file format is one `key = value` per line,
/// '#' starts a comment, blank lines are ignored, unknown or repeated keys are
/// errors. `seed` seeds model init, corpus generation and shuffling together.
///
/// Keys and defaults:
///   variant=medt img_size=64 in_channels=1 base_channels=8 heads=8
///   global_depth=2 local_depth=5 patch_grid=4 per_head_gates=false
///   epochs=400 batch_size=4 lr=0.001 gate_freeze_epochs=10 eval_every=10
///   n_samples=32 blob_count_min=1 blob_count_max=3 blob_axis_min=0.1
///   blob_axis_max=0.3 speckle_sigma=0.15 texture_scale=8
///   seed=0 corpus_dir=corpus out_dir=run checkpoint=(out_dir/model.axsg)
///   eps=1e-4 gradcheck_tol=1e-5 bench_sizes=1,2,4,8,16,32 bench_channels=4
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  data::SynthSpec synth;
  std::uint64_t seed = 0;

  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path out_dir = "run";
  std::filesystem::path checkpoint;  // empty -> out_dir / "model.axsg"

  double eps = 1e-4;
  double gradcheck_tol = 1e-5;
  std::vector<std::size_t> bench_sizes{1, 2, 4, 8, 16, 32};
  std::size_t bench_channels = 4;

  /// Copies `seed` and `img_size` into the sub-configs.
  void sync();
  std::filesystem::path checkpoint_path() const;
  /// Canonical key=value text; parse_run_config(to_text(c)) == c.
  std::string to_text() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one key=value assignment; the CLI flags go through here too.
void set_run_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace axialseg
