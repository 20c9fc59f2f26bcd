#include "axialseg/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "axialseg/attention.hpp"
#include "axialseg/checkpoint.hpp"
#include "axialseg/mac_counter.hpp"
#include "axialseg/rng.hpp"

namespace axialseg {

namespace fs = std::filesystem;

std::size_t generation_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("AXIALSEG_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace {

std::string fixed(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::vector<data::Sample> load_matching_corpus(const RunConfig& cfg) {
  auto samples = data::read_corpus(cfg.corpus_dir);
  if (samples.empty()) throw std::runtime_error("corpus '" + cfg.corpus_dir.string() + "' is empty");
  for (const auto& s : samples) {
    if (s.image.dim(2) != cfg.model.img_size || s.image.dim(3) != cfg.model.img_size) {
      throw ShapeError("corpus sample '" + s.id + "' is " + std::to_string(s.image.dim(2)) + "x" +
                       std::to_string(s.image.dim(3)) + ", model expects " + std::to_string(cfg.model.img_size));
    }
  }
  return samples;
}

std::string eval_line(std::size_t epoch, const EvalSummary& e) {
  return "epoch=" + std::to_string(epoch) + " loss=" + fixed(e.loss) + " f1=" + fixed(e.f1_mean) +
         " iou=" + fixed(e.iou_mean) + " pooled_f1=" + fixed(e.f1_pooled) + " pooled_iou=" + fixed(e.iou_pooled);
}

}  // namespace

int cmd_gen(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.synth.validate();
    const auto samples = data::generate(cfg.synth, generation_threads());
    data::write_corpus(samples, cfg.out_dir);
    out << "wrote " << samples.size() << " samples of " << cfg.synth.img_size << "x" << cfg.synth.img_size << " to "
        << cfg.out_dir.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "gen: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.model.validate();
    cfg.train.validate();
    const auto samples = load_matching_corpus(cfg);
    Model<float> model(cfg.model);
    fs::create_directories(cfg.out_dir);
    std::ofstream metrics(cfg.out_dir / "metrics.txt", std::ios::trunc);
    std::ofstream evals(cfg.out_dir / "eval.txt", std::ios::trunc);
    if (!metrics || !evals) throw std::runtime_error("cannot write into '" + cfg.out_dir.string() + "'");
    const fs::path ckpt = cfg.checkpoint_path();

    auto checkpoint_and_eval = [&](std::size_t epoch) {
      save_checkpoint(model, ckpt);
      evals << eval_line(epoch, evaluate(model, samples)) << '\n' << std::flush;
    };
    std::size_t last_saved = SIZE_MAX;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
      const std::string line = format_epoch_line(r);
      metrics << line << '\n' << std::flush;
      out << line << '\n';
      if ((r.epoch + 1) % cfg.train.eval_every == 0) {
        checkpoint_and_eval(r.epoch);
        last_saved = r.epoch;
      }
    };
    out << "training " << to_string(cfg.model.variant) << " (" << model.parameter_count() << " params) on "
        << samples.size() << " samples\n";
    try {
      train(model, samples, cfg.train, hooks);
    } catch (const NonFiniteError& e) {
      err << "train: " << e.what() << '\n';
      return kExitNonFinite;
    }
    if (cfg.train.epochs == 0 || last_saved != cfg.train.epochs - 1) {
      checkpoint_and_eval(cfg.train.epochs == 0 ? 0 : cfg.train.epochs - 1);
    }
    out << "checkpoint " << ckpt.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    auto model = load_model<float>(cfg.checkpoint_path());
    RunConfig effective = cfg;
    effective.model = model->config();
    const auto samples = load_matching_corpus(effective);
    const EvalSummary summary = evaluate(*model, samples);

    fs::create_directories(cfg.out_dir / "predictions");
    std::ostringstream report;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& m = summary.per_image[i];
      report << "id=" << samples[i].id << " loss=" << fixed(m.loss) << " f1=" << fixed(m.f1)
             << " iou=" << fixed(m.iou) << '\n';
      Tensor<float> mask = summary.predictions[i];
      for (auto& v : mask.vec()) v = v >= 0.5f ? 1.0f : 0.0f;
      data::save_pgm(mask, cfg.out_dir / "predictions" / (samples[i].id + ".pgm"));
    }
    report << "mean loss=" << fixed(summary.loss) << " f1=" << fixed(summary.f1_mean) << " iou=" << fixed(summary.iou_mean)
           << " pooled_f1=" << fixed(summary.f1_pooled) << " pooled_iou=" << fixed(summary.iou_pooled) << '\n';
    std::ofstream f(cfg.out_dir / "eval_metrics.txt", std::ios::trunc);
    f << report.str();
    out << report.str();
    return kExitOk;
  } catch (const std::exception& e) {
    err << "eval: " << e.what() << '\n';
    return kExitFailure;
  }
}

// ---------------------------------------------------------------------------
// Gradient suite

namespace {

struct GradFixture {
  explicit GradFixture(std::uint64_t seed) : store(seed), rng(seed) {}

  Param<double>* p(const std::string& name, Shape shape, double bound = 1.0) {
    auto* q = &store.uniform(name, std::move(shape), bound);
    list.push_back(q);
    return q;
  }
  /// Fixed random projection turning any output into a scalar loss.
  Var<double> project(Var<double> y) {
    auto it = weights.find(y.shape());
    if (it == weights.end()) {
      Tensor<double> w(y.shape());
      for (auto& v : w.vec()) v = rng.uniform(-1.0, 1.0);
      it = weights.emplace(y.shape(), std::move(w)).first;
    }
    return ops::sum(ops::mul(y, y.tape()->constant(it->second)));
  }

  ParamStore<double> store;
  SplitMix64 rng;
  std::vector<Param<double>*> list;
  std::map<Shape, Tensor<double>> weights;
};

using CaseBody = std::function<Var<double>(Tape<double>&, GradFixture&)>;

struct OpCase {
  std::string name;
  std::function<void(GradFixture&)> setup;
  CaseBody body;
};

std::vector<OpCase> op_cases() {
  using V = Var<double>;
  auto P = [](GradFixture& f, const char* n) { return f.store.find(n); };
  std::vector<OpCase> c;
  auto two = [](Shape s) {
    return [s](GradFixture& f) {
      f.p("a", s);
      f.p("b", s);
    };
  };
  c.push_back({"add", two({2, 3}), [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::add(t.param(*P(f, "a")), t.param(*P(f, "b"))));
               }});
  c.push_back({"sub", two({2, 3}), [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::sub(t.param(*P(f, "a")), t.param(*P(f, "b"))));
               }});
  c.push_back({"mul", two({2, 3}), [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::mul(t.param(*P(f, "a")), t.param(*P(f, "b"))));
               }});
  c.push_back({"scale", [](GradFixture& f) { f.p("a", {2, 3}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::scale(t.param(*P(f, "a")), 1.7)); }});
  c.push_back({"relu", [](GradFixture& f) { f.p("a", {3, 4}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::relu(t.param(*P(f, "a")))); }});
  c.push_back({"sigmoid", [](GradFixture& f) { f.p("a", {3, 4}, 3.0); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::sigmoid(t.param(*P(f, "a")))); }});
  c.push_back({"sum", [](GradFixture& f) { f.p("a", {3, 4}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::sum(t.param(*P(f, "a")))); }});
  c.push_back({"mean", [](GradFixture& f) { f.p("a", {3, 4}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::mean(t.param(*P(f, "a")))); }});
  c.push_back({"matmul",
               [](GradFixture& f) {
                 f.p("a", {2, 3, 4});
                 f.p("b", {2, 4, 5});
               },
               [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::matmul(t.param(*P(f, "a")), t.param(*P(f, "b"))));
               }});
  c.push_back({"softmax", [](GradFixture& f) { f.p("a", {2, 3, 4}, 2.0); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::softmax(t.param(*P(f, "a")), 2)); }});
  c.push_back({"conv2d",
               [](GradFixture& f) {
                 f.p("x", {2, 3, 5, 5});
                 f.p("w", {4, 3, 3, 3});
                 f.p("bias", {4});
               },
               [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::conv2d(t.param(*P(f, "x")), t.param(*P(f, "w")), t.param(*P(f, "bias")), 2, 1));
               }});
  c.push_back({"batchnorm2d",
               [](GradFixture& f) {
                 f.p("x", {2, 3, 3, 3});
                 f.p("gamma", {3});
                 f.p("beta", {3});
                 f.store.buffer("running_mean", {3}, 0.0);
                 f.store.buffer("running_var", {3}, 1.0);
               },
               [P](Tape<double>& t, GradFixture& f) {
                 ops::RunningStats<double> rs{f.store.find_buffer("running_mean"), f.store.find_buffer("running_var")};
                 return f.project(ops::batchnorm2d(t.param(*P(f, "x")), t.param(*P(f, "gamma")),
                                                   t.param(*P(f, "beta")), rs, ops::NormMode::train));
               }});
  c.push_back({"upsample2x", [](GradFixture& f) { f.p("x", {1, 2, 3, 4}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::upsample2x(t.param(*P(f, "x")))); }});
  c.push_back({"transpose_hw", [](GradFixture& f) { f.p("x", {1, 2, 3, 4}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::transpose_hw(t.param(*P(f, "x")))); }});
  c.push_back({"reshape", [](GradFixture& f) { f.p("x", {1, 2, 3, 4}); },
               [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::reshape(t.param(*P(f, "x")), Shape{6, 4}));
               }});
  c.push_back({"slice_channels", [](GradFixture& f) { f.p("x", {2, 5, 2, 2}); },
               [P](Tape<double>& t, GradFixture& f) {
                 return f.project(ops::slice_channels(t.param(*P(f, "x")), 1, 3));
               }});
  c.push_back({"concat_channels",
               [](GradFixture& f) {
                 f.p("a", {2, 1, 2, 3});
                 f.p("b", {2, 3, 2, 3});
               },
               [P](Tape<double>& t, GradFixture& f) {
                 std::vector<V> parts{t.param(*P(f, "a")), t.param(*P(f, "b"))};
                 return f.project(ops::concat_channels<double>(parts));
               }});
  c.push_back({"crop", [](GradFixture& f) { f.p("x", {1, 2, 5, 6}); },
               [P](Tape<double>& t, GradFixture& f) { return f.project(ops::crop(t.param(*P(f, "x")), 1, 2, 3, 3)); }});
  c.push_back({"tile_grid",
               [](GradFixture& f) {
                 for (const char* n : {"t0", "t1", "t2", "t3"}) f.p(n, {1, 2, 2, 3});
               },
               [P](Tape<double>& t, GradFixture& f) {
                 std::vector<V> tiles;
                 for (const char* n : {"t0", "t1", "t2", "t3"}) tiles.push_back(t.param(*P(f, n)));
                 return f.project(ops::tile_grid<double>(tiles, 2));
               }});
  c.push_back({"axial_attention",
               [](GradFixture& f) {
                 for (const char* n : {"q", "k", "v"}) f.p(n, {2, 2, 3, 4});
                 for (const char* n : {"r_q", "r_k", "r_v"}) f.p(n, {7, 2});
                 for (const char* n : {"gate_q", "gate_k", "gate_v1", "gate_v2"}) f.p(n, {1});
               },
               [P](Tape<double>& t, GradFixture& f) {
                 PositionalVars<double> pos{t.param(*P(f, "r_q")), t.param(*P(f, "r_k")), t.param(*P(f, "r_v"))};
                 GateVars<double> g{t.param(*P(f, "gate_q")), t.param(*P(f, "gate_k")), t.param(*P(f, "gate_v1")),
                                    t.param(*P(f, "gate_v2"))};
                 return f.project(axial_attention_width(t.param(*P(f, "q")), t.param(*P(f, "k")),
                                                        t.param(*P(f, "v")), std::optional(pos), std::optional(g)));
               }});
  c.push_back({"bce_loss", [](GradFixture& f) { f.p("logit", {1, 1, 3, 3}, 2.0); },
               [P](Tape<double>& t, GradFixture& f) {
                 Tensor<double> target(Shape{1, 1, 3, 3});
                 for (std::size_t i = 0; i < target.numel(); ++i) target[i] = static_cast<double>(i % 2);
                 return bce_loss(ops::sigmoid(t.param(*P(f, "logit"))), t.constant(target));
               }});
  return c;
}

GradcheckCase finish(std::string name, GradCheckReport r, double tol) {
  GradcheckCase c;
  c.name = std::move(name);
  c.passed = r.passed(tol);
  c.report = std::move(r);
  return c;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& opt) {
  GradCheckOptions gopt;
  gopt.eps = opt.eps;
  std::vector<GradcheckCase> out;
  if (opt.ops) {
    std::uint64_t seed = 100;
    for (auto& oc : op_cases()) {
      GradFixture fx(seed++);
      oc.setup(fx);
      auto body = oc.body;
      const LossBuilder loss = [&fx, body](Tape<double>& t) { return body(t, fx); };
      out.push_back(finish("op:" + oc.name, grad_check(loss, fx.list, gopt), opt.tol));
    }
  }
  if (opt.layer) {
    ParamStore<double> store(11);
    AttnLayerConfig lc;
    lc.channels_in = 2;
    lc.channels_out = 4;
    lc.heads = 2;
    GatedAxialLayer<double> layer(store, "layer", lc, 8, 8, 2);
    SplitMix64 rng(12);
    for (const auto& g : layer.gates())
      for (auto* p : g.all()) p->value[0] = rng.uniform(0.5, 1.5);
    Tensor<double> x(Shape{1, 2, 8, 8}), w(Shape{1, 4, 4, 4});
    for (auto& v : x.vec()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : w.vec()) v = rng.uniform(-1.0, 1.0);
    const LossBuilder loss = [&](Tape<double>& t) {
      Var<double> y = layer.forward(t.constant(x), ops::NormMode::train);
      return ops::sum(ops::mul(y, t.constant(w)));
    };
    out.push_back(finish("layer", grad_check(loss, store.params(), gopt), opt.tol));
  }
  if (opt.model) {
    Model<double> model(ModelConfig::micro());
    const std::size_t I = model.config().img_size;
    SplitMix64 rng(13);
    Tensor<double> x(Shape{1, 1, I, I}), target(Shape{1, 1, I, I});
    for (auto& v : x.vec()) v = rng.uniform();
    for (std::size_t i = 0; i < target.numel(); ++i) target[i] = (i / I + i % I) % 3 == 0 ? 1.0 : 0.0;
    const LossBuilder loss = [&](Tape<double>& t) {
      return bce_loss(model.forward(t.constant(x), ops::NormMode::train), t.constant(target));
    };
    out.push_back(finish("micro_medt", grad_check(loss, model.store().params(), gopt), opt.tol));
  }
  return out;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err, const GradcheckSuiteOptions& base) {
  GradcheckSuiteOptions opt = base;
  opt.eps = cfg.eps;
  opt.tol = cfg.gradcheck_tol;
  std::vector<GradcheckCase> cases;
  try {
    cases = run_gradcheck_suite(opt);
  } catch (const std::exception& e) {
    err << "gradcheck: " << e.what() << '\n';
    return kExitFailure;
  }
  out << "eps=" << sci(opt.eps) << " tol=" << sci(opt.tol) << '\n';
  const GradcheckCase* worst = nullptr;
  std::vector<std::string> failing_ops;
  for (const auto& c : cases) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " max_rel_error=" << sci(c.report.max_rel_error)
        << " worst=" << c.report.worst_param << "[" << c.report.worst_index << "]"
        << " entries=" << c.report.entries_checked << '\n';
    if (!worst || c.report.max_rel_error > worst->report.max_rel_error) worst = &c;
    if (!c.passed && c.name.rfind("op:", 0) == 0) failing_ops.push_back(c.name.substr(3));
  }
  if (!worst) return kExitOk;
  const bool ok = std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
  if (ok) {
    out << "PASS max_rel_error=" << sci(worst->report.max_rel_error) << '\n';
    return kExitOk;
  }
  err << "FAIL max_rel_error=" << sci(worst->report.max_rel_error) << " in " << worst->name
      << " worst_param=" << worst->report.worst_param;
  if (!failing_ops.empty()) {
    err << " failing_ops=";
    for (std::size_t i = 0; i < failing_ops.size(); ++i) err << (i ? "," : "") << failing_ops[i];
  }
  err << '\n';
  return kExitFailure;
}

// ---------------------------------------------------------------------------
// Bench

std::uint64_t full_attention_macs(std::size_t size, std::size_t channels) {
  const std::uint64_t sites = static_cast<std::uint64_t>(size) * size;
  return 2 * sites * sites * channels;
}

std::uint64_t axial_pass_macs(std::size_t size, std::size_t channels, bool positional) {
  const std::uint64_t pairs = static_cast<std::uint64_t>(size) * size * size;
  return (positional ? 5 : 2) * pairs * channels;
}

BenchRow bench_size(std::size_t size, std::size_t channels, std::uint64_t seed) {
  if (size == 0 || size > kBenchMaxSize) {
    throw std::invalid_argument("bench: size " + std::to_string(size) + " outside [1, " +
                                std::to_string(kBenchMaxSize) + "]");
  }
  if (channels == 0) throw std::invalid_argument("bench: channels must be >= 1");
  SplitMix64 rng(derive_seed(seed, size));
  auto rand = [&](Shape s) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.vec()) v = rng.uniform(-1.0, 1.0);
    return t;
  };
  const Tensor<double> x = rand({1, channels, size, size});
  const Tensor<double> wq = rand({channels, channels, 1, 1}), wk = rand({channels, channels, 1, 1}),
                       wv = rand({channels, channels, 1, 1});
  const Tensor<double> q = rand({1, channels, size, size}), k = rand({1, channels, size, size}),
                       v = rand({1, channels, size, size});
  const Tensor<double> rq = rand({2 * size - 1, channels}), rk = rand({2 * size - 1, channels}),
                       rv = rand({2 * size - 1, channels});

  BenchRow row;
  row.size = size;
  row.channels = channels;
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };

  MacCounter::reset();
  auto t0 = clock::now();
  full_self_attention_oracle(x, wq, wk, wv, kBenchMaxSize * kBenchMaxSize);
  auto t1 = clock::now();
  row.full_macs = MacCounter::value();
  row.full_ms = ms(t0, t1);

  MacCounter::reset();
  t0 = clock::now();
  axial_width_kernel<double>(q, k, v, nullptr, nullptr, nullptr, {});
  t1 = clock::now();
  row.axial_macs = MacCounter::value();
  row.axial_ms = ms(t0, t1);

  MacCounter::reset();
  axial_width_kernel<double>(q, k, v, &rq, &rk, &rv, {});
  row.axial_pos_macs = MacCounter::value();
  MacCounter::reset();

  row.full_analytic = full_attention_macs(size, channels);
  row.axial_analytic = axial_pass_macs(size, channels, false);
  row.axial_pos_analytic = axial_pass_macs(size, channels, true);
  row.axial_both_analytic = 2 * row.axial_analytic;
  return row;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  for (auto s : cfg.bench_sizes) {
    if (s == 0 || s > kBenchMaxSize) {
      err << "bench: size " << s << " outside [1, " << kBenchMaxSize << "]\n";
      return kExitUsage;
    }
  }
  std::vector<BenchRow> rows;
  try {
    for (auto s : cfg.bench_sizes) rows.push_back(bench_size(s, cfg.bench_channels, cfg.seed));
  } catch (const std::exception& e) {
    err << "bench: " << e.what() << '\n';
    return kExitFailure;
  }
  bool ok = true;
  out << "channels=" << cfg.bench_channels << '\n';
  out << std::left << std::setw(6) << "s" << std::setw(16) << "full_macs" << std::setw(16) << "full_analytic"
      << std::setw(14) << "axial_macs" << std::setw(16) << "axial_analytic" << std::setw(16) << "axial_pos_macs"
      << std::setw(14) << "axial_2axes" << std::setw(14) << "ratio_s4:2s3" << std::setw(10) << "exact"
      << std::setw(12) << "full_ms" << "axial_ms\n";
  for (const auto& r : rows) {
    ok = ok && r.exact();
    const double s = static_cast<double>(r.size);
    out << std::left << std::setw(6) << r.size << std::setw(16) << r.full_macs << std::setw(16) << r.full_analytic
        << std::setw(14) << r.axial_macs << std::setw(16) << r.axial_analytic << std::setw(16) << r.axial_pos_macs
        << std::setw(14) << r.axial_both_analytic << std::setw(14) << fixed(s * s * s * s / (2 * s * s * s), 3)
        << std::setw(10) << (r.exact() ? "yes" : "NO") << std::setw(12) << fixed(r.full_ms, 3) << fixed(r.axial_ms, 3)
        << '\n';
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (rows[j].size != 2 * rows[i].size) continue;
      const bool full16 = rows[j].full_macs == 16 * rows[i].full_macs;
      const bool axial8 = rows[j].axial_macs == 8 * rows[i].axial_macs;
      ok = ok && full16 && axial8;
      out << "scaling s=" << rows[i].size << "->" << rows[j].size << " full x"
          << fixed(static_cast<double>(rows[j].full_macs) / static_cast<double>(rows[i].full_macs), 1) << " axial x"
          << fixed(static_cast<double>(rows[j].axial_macs) / static_cast<double>(rows[i].axial_macs), 1)
          << " wall_ratio_full=" << fixed(rows[j].full_ms / std::max(rows[i].full_ms, 1e-9), 2)
          << (full16 && axial8 ? "" : " MISMATCH") << '\n';
    }
  if (!ok) {
    err << "bench: measured MAC counts differ from analytic counts\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace axialseg
