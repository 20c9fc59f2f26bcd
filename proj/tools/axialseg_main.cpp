#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "axialseg/autograd.hpp"
#include "axialseg/commands.hpp"
#include "axialseg/run_config.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<std::size_t> epochs;
  std::optional<double> eps;
  std::string fault_op;
  double fault_factor = 1.5;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "key=value run configuration file");
  sub->add_option("--seed", f.seed, "override seed");
  sub->add_option("--out", f.out, "override out_dir");
  sub->add_option("--variant", f.variant, "override variant");
  sub->add_option("--epochs", f.epochs, "override epochs");
  sub->add_option("--eps", f.eps, "override gradcheck eps");
}

axialseg::RunConfig resolve(const Flags& f) {
  axialseg::RunConfig cfg = f.config.empty() ? axialseg::RunConfig{} : axialseg::load_run_config(f.config);
  if (f.seed) axialseg::set_run_config_key(cfg, "seed", std::to_string(*f.seed));
  if (f.out) axialseg::set_run_config_key(cfg, "out_dir", *f.out);
  if (f.variant) axialseg::set_run_config_key(cfg, "variant", *f.variant);
  if (f.epochs) axialseg::set_run_config_key(cfg, "epochs", std::to_string(*f.epochs));
  if (f.eps) cfg.eps = *f.eps;
  cfg.sync();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated axial attention segmentation toolkit"};
  app.require_subcommand(1);
  Flags flags;
  auto* gen = app.add_subcommand("gen", "write a synthetic PGM corpus to out_dir");
  auto* train = app.add_subcommand("train", "train a variant on corpus_dir");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on corpus_dir");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  auto* bench = app.add_subcommand("bench", "MAC counts and wall time, full vs axial attention");
  for (auto* s : {gen, train, eval, grad, bench}) add_common(s, flags);
  grad->add_option("--corrupt-op", flags.fault_op, "scale the backward rule of this op (negative control)");
  grad->add_option("--corrupt-factor", flags.fault_factor, "gradient scale for --corrupt-op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? axialseg::kExitOk : axialseg::kExitUsage;
  }

  axialseg::RunConfig cfg;
  try {
    cfg = resolve(flags);
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << '\n';
    return axialseg::kExitUsage;
  }
  if (gen->parsed()) return axialseg::cmd_gen(cfg, std::cout, std::cerr);
  if (train->parsed()) return axialseg::cmd_train(cfg, std::cout, std::cerr);
  if (eval->parsed()) return axialseg::cmd_eval(cfg, std::cout, std::cerr);
  if (grad->parsed()) {
    if (!flags.fault_op.empty()) axialseg::debug::corrupt_backward(flags.fault_op, flags.fault_factor);
    return axialseg::cmd_gradcheck(cfg, std::cout, std::cerr);
  }
  return axialseg::cmd_bench(cfg, std::cout, std::cerr);
}
