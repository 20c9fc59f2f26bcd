#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "axialseg/checkpoint.hpp"
#include "axialseg/commands.hpp"
#include "axialseg/run_config.hpp"

using namespace axialseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("axialseg_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

RunConfig small_run(const fs::path& root) {
  RunConfig c = parse_run_config(
      "img_size = 32\nbase_channels = 2\nheads = 2\nglobal_depth = 1\nlocal_depth = 1\n"
      "n_samples = 2\nepochs = 2\nbatch_size = 2\neval_every = 1\nseed = 3\n");
  c.corpus_dir = root / "corpus";
  c.out_dir = root / "run";
  return c;
}

}  // namespace

TEST_CASE("run config: defaults, overrides and errors") {
  auto c = parse_run_config("# comment\n\nvariant = logo\nepochs=7\nseed = 5\nbench_sizes = 2,4\n");
  CHECK(c.model.variant == Variant::logo);
  CHECK(c.train.epochs == 7);
  CHECK(c.model.seed == 5);
  CHECK(c.synth.seed == 5);
  CHECK(c.train.seed == 5);
  CHECK(c.bench_sizes == std::vector<std::size_t>{2, 4});
  CHECK(c.checkpoint_path() == fs::path("run") / "model.axsg");
  CHECK(c.eps == 1e-4);

  CHECK_THROWS_AS(parse_run_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("epochs = 1\nepochs = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("epochs\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("variant = nope\n"), ConfigError);

  auto again = parse_run_config(c.to_text());
  CHECK(again.to_text() == c.to_text());
}

TEST_CASE("model config text round trip") {
  ModelConfig m;
  m.variant = Variant::gated_axial;
  m.per_head_gates = true;
  m.seed = 99;
  auto back = parse_model_config(serialize_model_config(m));
  CHECK(serialize_model_config(back) == serialize_model_config(m));
  CHECK(back.variant == Variant::gated_axial);
  CHECK(back.per_head_gates);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  const auto dir = scratch("ckpt");
  fs::create_directories(dir);
  ModelConfig cfg = ModelConfig::micro();
  Model<float> m(cfg);
  save_checkpoint(m, dir / "a.axsg");
  auto loaded = load_model<float>(dir / "a.axsg");
  save_checkpoint(*loaded, dir / "b.axsg");
  CHECK(slurp(dir / "a.axsg") == slurp(dir / "b.axsg"));
  for (std::size_t i = 0; i < m.store().params().size(); ++i)
    CHECK(bit_equal(m.store().params()[i]->value, loaded->store().params()[i]->value));
  for (std::size_t i = 0; i < m.store().buffers().size(); ++i)
    CHECK(bit_equal(*m.store().buffers()[i].second, *loaded->store().buffers()[i].second));

  auto bytes = encode_checkpoint(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "AXSG");
  auto data = decode_checkpoint(bytes);
  CHECK(data.tensors.size() == m.store().params().size() + m.store().buffers().size());

  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
  bad = bytes;
  bad.resize(bad.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
  CHECK_THROWS(read_checkpoint(dir / "missing.axsg"));

  // float checkpoint loads into a double model of the same config
  Model<double> wide(cfg);
  apply_checkpoint(data, wide);
  CHECK(static_cast<float>(wide.fuse_weight().value[0]) == m.fuse_weight().value[0]);

  ModelConfig other = cfg;
  other.variant = Variant::global_only;
  Model<float> wrong(other);
  CHECK_THROWS_AS(apply_checkpoint(data, wrong), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("gen writes n samples, n=0 writes an empty manifest") {
  const auto dir = scratch("gen");
  RunConfig c = parse_run_config("n_samples = 4\nimg_size = 32\n");
  c.out_dir = dir / "a";
  std::ostringstream out, err;
  REQUIRE(cmd_gen(c, out, err) == kExitOk);
  CHECK(data::read_corpus(c.out_dir).size() == 4);
  CHECK(count_lines(slurp(c.out_dir / "manifest.txt")) == 4);

  c.synth.n_samples = 0;
  c.out_dir = dir / "b";
  CHECK(cmd_gen(c, out, err) == kExitOk);
  CHECK(slurp(c.out_dir / "manifest.txt").empty());
  fs::remove_all(dir);
}

TEST_CASE("train then eval on a tiny corpus") {
  const auto root = scratch("train");
  RunConfig c = small_run(root);
  std::ostringstream out, err;
  RunConfig g = c;
  g.out_dir = c.corpus_dir;
  REQUIRE(cmd_gen(g, out, err) == kExitOk);

  REQUIRE_MESSAGE(cmd_train(c, out, err) == kExitOk, err.str());
  const auto metrics = slurp(c.out_dir / "metrics.txt");
  CHECK(count_lines(metrics) == 2);
  CHECK(metrics.rfind("epoch=0 loss=", 0) == 0);
  CHECK(count_lines(slurp(c.out_dir / "eval.txt")) == 2);
  CHECK(fs::exists(c.checkpoint_path()));

  std::ostringstream e1, e2, err2;
  REQUIRE(cmd_eval(c, e1, err2) == kExitOk);
  const auto first = slurp(c.out_dir / "eval_metrics.txt");
  REQUIRE(cmd_eval(c, e2, err2) == kExitOk);
  CHECK(e1.str() == e2.str());
  CHECK(first == slurp(c.out_dir / "eval_metrics.txt"));
  CHECK(e1.str().find("mean ") != std::string::npos);
  CHECK(fs::exists(c.out_dir / "predictions" / "sample_00000.pgm"));

  // image size mismatch between config and corpus is reported, not silently resized
  RunConfig wrong = c;
  wrong.model.img_size = 64;
  wrong.sync();
  std::ostringstream o3, e3;
  CHECK(cmd_train(wrong, o3, e3) != kExitOk);
  CHECK_FALSE(e3.str().empty());

  RunConfig missing = c;
  missing.corpus_dir = root / "nowhere";
  CHECK(cmd_train(missing, o3, e3) == kExitFailure);
  fs::remove_all(root);
}

TEST_CASE("bench rows match the analytic counts") {
  for (std::size_t s : {1u, 2u, 4u, 8u}) {
    auto row = bench_size(s, 3, 1);
    CHECK(row.exact());
    CHECK(row.full_analytic == 2ull * s * s * s * s * 3);
    CHECK(row.axial_analytic == 2ull * s * s * s * 3);
    CHECK(row.axial_pos_analytic == 5ull * s * s * s * 3);
    CHECK(row.axial_both_analytic == 2 * row.axial_analytic);
  }
  RunConfig c = parse_run_config("bench_sizes = 2,4,8\n");
  std::ostringstream out, err;
  CHECK(cmd_bench(c, out, err) == kExitOk);
  CHECK(out.str().find("x16") != std::string::npos);
  CHECK(out.str().find("x8") != std::string::npos);
}

TEST_CASE("gradcheck reports eps and names a corrupted op") {
  RunConfig c = parse_run_config("eps = 1e-5\n");
  GradcheckSuiteOptions only_ops;
  only_ops.layer = false;
  only_ops.model = false;
  std::ostringstream out, err;
  CHECK(cmd_gradcheck(c, out, err, only_ops) == kExitOk);
  CHECK(out.str().find("eps=1.000e-05") != std::string::npos);

  debug::corrupt_backward("softmax", 1.5);
  std::ostringstream out2, err2;
  const int rc = cmd_gradcheck(parse_run_config(""), out2, err2, only_ops);
  debug::clear_backward_fault();
  CHECK(rc != kExitOk);
  CHECK(err2.str().find("softmax") != std::string::npos);
  CHECK(out2.str().find("FAIL op:softmax") != std::string::npos);
}
