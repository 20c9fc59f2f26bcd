// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "axialseg/attention.hpp"
#include "axialseg/commands.hpp"
#include "axialseg/gradcheck.hpp"
#include "axialseg/model.hpp"
#include "axialseg/rng.hpp"
#include "axialseg/training.hpp"

using namespace axialseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor<double> rand_tensor(Shape shape, SplitMix64& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

Param<double>& rand_param(ParamStore<double>& st, const std::string& name, Shape shape, SplitMix64& rng) {
  return st.add(name, rand_tensor(std::move(shape), rng));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("axialseg_accept_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double field(const std::string& line, const std::string& key) {
  const auto pos = line.find(" " + key + "=");
  if (pos == std::string::npos) return std::nan("");
  return std::stod(line.substr(pos + key.size() + 2));
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  if (end == std::string::npos) return {};
  auto start = text.rfind('\n', end);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

// 1 ---------------------------------------------------------------------------
Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (std::uint64_t c = 0; c < 20; ++c) {
    SplitMix64 rng(derive_seed(1, c));
    const std::size_t cin = 1 + c % 8, W = 1 + c % 16, d = 1 + (c * 3) % 8;
    ParamStore<double> st;
    ProjectionSet<double> proj{&rand_param(st, "wq", {d, cin, 1, 1}, rng), &rand_param(st, "wk", {d, cin, 1, 1}, rng),
                               &rand_param(st, "wv", {d, cin, 1, 1}, rng)};
    auto x = rand_tensor({1, cin, 1, W}, rng, -2, 2);
    Tape<double> tape(false);
    auto y = axial_attention(tape.constant(x), proj, nullptr, nullptr, Axis::width).value();
    auto ref = full_self_attention_oracle(x, proj.wq->value, proj.wk->value, proj.wv->value);
    worst = std::max(worst, max_abs_diff(y, ref));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 5, "20 cases max_abs_diff=" + fmt("%.3e", worst) + " time=" + fmt("%.3fs", secs)};
}

// 2 ---------------------------------------------------------------------------
Outcome gate_reduction() {
  int ok_full = 0, ok_free = 0;
  for (std::uint64_t c = 0; c < 10; ++c) {
    SplitMix64 rng(derive_seed(2, c));
    const std::size_t cin = 1 + c % 4, d = 1 + c % 5, H = 1 + c % 6, W = 2 + c % 7, N = 1 + c % 2;
    ParamStore<double> st;
    ProjectionSet<double> proj{&rand_param(st, "wq", {d, cin, 1, 1}, rng), &rand_param(st, "wk", {d, cin, 1, 1}, rng),
                               &rand_param(st, "wv", {d, cin, 1, 1}, rng)};
    RelPosEnc<double> enc{W, d, &rand_param(st, "rq", {2 * W - 1, d}, rng), &rand_param(st, "rk", {2 * W - 1, d}, rng),
                          &rand_param(st, "rv", {2 * W - 1, d}, rng)};
    GateSet<double> g{&st.constant("gq", {1}, 1), &st.constant("gk", {1}, 1), &st.constant("gv1", {1}, 1),
                      &st.constant("gv2", {1}, 1)};
    Tape<double> tape(false);
    auto x = tape.constant(rand_tensor({N, cin, H, W}, rng));
    auto eq2 = axial_attention(x, proj, &enc, nullptr, Axis::width).value();
    auto plain = axial_attention(x, proj, nullptr, nullptr, Axis::width).value();
    g.assign(1, 1, 1, 1);
    ok_full += bit_equal(axial_attention(x, proj, &enc, &g, Axis::width).value(), eq2);
    g.assign(0, 0, 1, 0);
    ok_free += bit_equal(axial_attention(x, proj, &enc, &g, Axis::width).value(), plain);
  }
  return {ok_full == 10 && ok_free == 10, "gates(1,1,1,1)==positional " + std::to_string(ok_full) +
                                              "/10, gates(0,0,1,0)==positional-free " + std::to_string(ok_free) + "/10"};
}

// 3 ---------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg;
  std::ostringstream out, err;
  const int rc = cmd_gradcheck(cfg, out, err);
  auto cases = run_gradcheck_suite({});
  const double secs = seconds_since(t0);
  const GradcheckCase* micro = nullptr;
  double worst = 0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.report.max_rel_error);
    if (c.name == "micro_medt") micro = &c;
  }
  if (!micro) return {false, "micro_medt case missing"};
  const std::vector<std::pair<std::string, std::string>> classes{
      {"w_q", ".w_q"}, {"w_k", ".w_k"}, {"w_v", ".w_v"}, {"r-tables", ".r_"},  {"gates", ".gate_"},
      {"conv", "conv"}, {"norm", "norm."}};
  std::string missing;
  for (const auto& [label, needle] : classes) {
    std::size_t checked = 0;
    for (const auto& p : micro->report.per_param)
      if (p.name.find(needle) != std::string::npos) checked += p.checked;
    if (checked == 0) missing += " " + label;
  }
  const bool ok = rc == kExitOk && worst < 1e-5 && missing.empty() && secs < 120;
  return {ok, "exit=" + std::to_string(rc) + " max_rel_error=" + fmt("%.3e", worst) +
                  (missing.empty() ? " all param classes checked" : " unchecked:" + missing) +
                  " time=" + fmt("%.1fs", secs)};
}

// 4 ---------------------------------------------------------------------------
Outcome parameter_delta() {
  bool ok = true;
  std::string detail;
  for (std::size_t heads : {1u, 2u, 8u}) {
    ParamStore<double> g, u;
    MultiHeadAxial<double> a(g, "a", AttnLayerConfig{8, 8, heads, true, true, Axis::width}, 8);
    MultiHeadAxial<double> b(u, "a", AttnLayerConfig{8, 8, heads, false, true, Axis::width}, 8);
    ok = ok && count_extra_gate_params(g, u) == 4;
  }
  ParamStore<double> gs, us;
  GatedAxialLayer<double> gl(gs, "l", AttnLayerConfig{8, 16, 8, true}, 16, 16, 2);
  GatedAxialLayer<double> ul(us, "l", AttnLayerConfig{8, 16, 8, false}, 16, 16, 2);
  const long long layer = count_extra_gate_params(gs, us);
  ok = ok && layer == 8;
  ModelConfig mc;
  mc.img_size = 32;
  mc.variant = Variant::gated_axial;
  Model<float> gm(mc);
  mc.variant = Variant::unet_like_axial;
  Model<float> um(mc);
  const long long model = count_extra_gate_params(gm.store(), um.store());
  ok = ok && model == static_cast<long long>(4 * 2 * mc.local_depth);
  detail = "single axis=4 for heads 1,2,8; layer (2 axes)=" + std::to_string(layer) + "; gated_axial - axial=" +
           std::to_string(model) + " over " + std::to_string(mc.local_depth) + " layers";
  return {ok, detail};
}

// 5 ---------------------------------------------------------------------------
Outcome logo_plumbing() {
  bool round = true;
  for (std::size_t g : {1u, 2u, 4u}) {
    SplitMix64 rng(50 + g);
    auto x = rand_tensor({2, 3, 16, 16}, rng);
    Tape<double> t(false);
    const auto grid = PatchGrid::make(g, 16, 16);
    round = round && bit_equal(merge_patches(extract_patches(t.constant(x), grid), grid).value(), x);
  }
  // d merged[pixel] / d patches: one-hot at the owning patch, checked by finite differences
  const auto grid = PatchGrid::make(4, 16, 16);
  ParamStore<double> st;
  SplitMix64 rng(60);
  std::vector<Param<double>*> patches;
  for (std::size_t k = 0; k < 16; ++k) patches.push_back(&rand_param(st, "p" + std::to_string(k), {1, 2, 4, 4}, rng));
  double worst = 0;
  bool routed = true;
  for (int trial = 0; trial < 2; ++trial) {
    const std::size_t c = rng.next() % 2, r = rng.next() % 16, q = rng.next() % 16;
    const std::size_t flat = (c * 16 + r) * 16 + q;
    const LossBuilder loss = [&](Tape<double>& t) {
      std::vector<Var<double>> vars;
      for (auto* p : patches) vars.push_back(t.param(*p));
      Tensor<double> sel(Shape{1, 2, 16, 16});
      sel[flat] = 1;
      return ops::sum(ops::mul(merge_patches(vars, grid), t.constant(sel)));
    };
    auto rep = grad_check(loss, patches);
    worst = std::max(worst, rep.max_rel_error);
    const std::size_t owner = (r / 4) * 4 + q / 4;
    for (std::size_t k = 0; k < 16; ++k)
      for (std::size_t i = 0; i < patches[k]->grad.numel(); ++i) {
        const bool hot = k == owner && i == (c * 4 + r % 4) * 4 + q % 4;
        routed = routed && patches[k]->grad[i] == (hot ? 1.0 : 0.0);
      }
  }
  return {round && routed && worst < 1e-8, std::string("roundtrip g=1,2,4 ") + (round ? "bit-exact" : "MISMATCH") +
                                               ", 2 pixels routed " + (routed ? "one-hot" : "WRONG") +
                                               " fd max_rel_error=" + fmt("%.2e", worst)};
}

// 6 ---------------------------------------------------------------------------
Outcome gate_freeze() {
  ModelConfig mc;
  mc.img_size = 32;
  mc.base_channels = 4;
  mc.heads = 2;
  mc.local_depth = 2;
  mc.seed = 6;
  Model<float> m(mc);
  data::SynthSpec spec;
  spec.n_samples = 4;
  spec.img_size = 32;
  spec.seed = 6;
  auto corpus = data::generate(spec);
  auto snapshot = [&] {
    std::vector<float> v;
    for (const auto& g : m.gates())
      for (auto* p : g.all()) v.push_back(p->value[0]);
    return v;
  };
  const auto initial = snapshot();
  std::size_t frozen_ok = 0;
  std::vector<float> last;
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.gate_freeze_epochs = 10;
  cfg.seed = 6;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    last = snapshot();
    if (r.epoch <= 9 && std::memcmp(last.data(), initial.data(), initial.size() * sizeof(float)) == 0) ++frozen_ok;
  };
  train(m, corpus, cfg, hooks);
  std::size_t changed = 0;
  float max_move = 0;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    changed += last[i] != initial[i];
    max_move = std::max(max_move, std::abs(last[i] - initial[i]));
  }
  return {frozen_ok == 10 && changed > 0, "epochs 0-9 bit-identical " + std::to_string(frozen_ok) +
                                              "/10; after epoch 14 " + std::to_string(changed) + "/" +
                                              std::to_string(initial.size()) + " gates moved (max " +
                                              fmt("%.3e", max_move) + ")"};
}

// 7 ---------------------------------------------------------------------------
Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = scratch("overfit");
  RunConfig cfg = parse_run_config("variant = medt\nimg_size = 64\nn_samples = 1\nepochs = 400\nbatch_size = 1\n"
                                   "eval_every = 400\nseed = 1\n");
  cfg.corpus_dir = root / "corpus";
  cfg.out_dir = root / "run";
  RunConfig gen = cfg;
  gen.out_dir = cfg.corpus_dir;
  std::ostringstream out, err;
  if (cmd_gen(gen, out, err) != kExitOk) return {false, "gen failed: " + err.str()};
  if (cmd_train(cfg, out, err) != kExitOk) return {false, "train failed: " + err.str()};
  const std::string eval_line = last_line(slurp(cfg.out_dir / "eval.txt"));
  const std::string train_line = last_line(slurp(cfg.out_dir / "metrics.txt"));
  const double f1 = field(" " + eval_line, "f1");
  const double secs = seconds_since(t0);
  fs::remove_all(root);
  return {f1 >= 0.95 && secs < 600, "eval-mode F1=" + fmt("%.4f", f1) + " (train-mode " +
                                        fmt("%.4f", field(" " + train_line, "f1")) + ") after 400 epochs, time=" +
                                        fmt("%.0fs", secs)};
}

// 8 ---------------------------------------------------------------------------
Outcome ablation_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  data::SynthSpec spec;
  spec.n_samples = 32;
  spec.img_size = 32;
  spec.seed = 8;
  const auto corpus = data::generate(spec);
  bool ok = true;
  std::string detail;
  for (Variant v : all_variants()) {
    ModelConfig mc;
    mc.variant = v;
    mc.img_size = 32;
    mc.seed = 8;
    Model<float> m(mc);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 8;
    const auto tv = std::chrono::steady_clock::now();
    try {
      auto h = train(m, corpus, cfg);
      const bool fell = h.back().loss < h.front().loss;
      ok = ok && fell;
      detail += " " + to_string(v) + ":" + fmt("%.3f", h.front().loss) + "->" + fmt("%.3f", h.back().loss) +
                (fell ? "" : "(NOT LOWER)") + "/" + fmt("%.0fs", seconds_since(tv));
    } catch (const NonFiniteError& e) {
      ok = false;
      detail += " " + to_string(v) + ":non-finite";
    }
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 1800, "loss first->last epoch" + detail + " total=" + fmt("%.0fs", secs)};
}

// 9 ---------------------------------------------------------------------------
Outcome complexity() {
  RunConfig cfg;
  std::ostringstream out, err;
  const int rc = cmd_bench(cfg, out, err);
  bool exact = true, scaling = true;
  std::vector<BenchRow> rows;
  for (std::size_t s : cfg.bench_sizes) rows.push_back(bench_size(s, cfg.bench_channels, 9));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    exact = exact && rows[i].exact();
    if (i > 0 && rows[i].size == 2 * rows[i - 1].size) {
      scaling = scaling && rows[i].full_macs == 16 * rows[i - 1].full_macs &&
                rows[i].axial_macs == 8 * rows[i - 1].axial_macs &&
                rows[i].axial_pos_macs == 8 * rows[i - 1].axial_pos_macs;
    }
  }
  return {rc == kExitOk && exact && scaling,
          "sizes 1..32 measured==analytic " + std::string(exact ? "yes" : "NO") + ", doubling s: full x16 axial x8 " +
              (scaling ? "yes" : "NO") + ", bench exit=" + std::to_string(rc)};
}

// 10 --------------------------------------------------------------------------
Outcome determinism() {
  const auto root = scratch("determinism");
  RunConfig base = parse_run_config("img_size = 32\nbase_channels = 4\nheads = 2\nlocal_depth = 2\nn_samples = 4\n"
                                    "epochs = 4\nbatch_size = 2\neval_every = 2\ngate_freeze_epochs = 1\nseed = 10\n");
  base.corpus_dir = root / "corpus";
  RunConfig gen = base;
  gen.out_dir = base.corpus_dir;
  std::ostringstream out, err;
  if (cmd_gen(gen, out, err) != kExitOk) return {false, "gen failed: " + err.str()};
  std::vector<std::string> files{"metrics.txt", "eval.txt", "model.axsg"};
  std::vector<std::string> first, second;
  for (auto* dst : {&first, &second}) {
    RunConfig c = base;
    c.out_dir = root / (dst == &first ? "a" : "b");
    if (cmd_train(c, out, err) != kExitOk) return {false, "train failed: " + err.str()};
    for (const auto& f : files) dst->push_back(slurp(c.out_dir / f));
  }
  std::string detail;
  bool ok = true;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const bool same = !first[i].empty() && first[i] == second[i];
    ok = ok && same;
    detail += " " + files[i] + (same ? "=identical(" + std::to_string(first[i].size()) + "B)" : "=DIFFERENT");
  }
  fs::remove_all(root);
  return {ok, "two runs:" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence}, {"gate reduction", gate_reduction},
      {"gradient suite", gradient_suite},         {"parameter delta", parameter_delta},
      {"logo plumbing", logo_plumbing},           {"gate freeze", gate_freeze},
      {"overfit run", overfit},                   {"ablation smoke", ablation_smoke},
      {"complexity", complexity},                 {"determinism", determinism}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
