#include "axialseg/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace axialseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

double to_f64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

void RunConfig::sync() {
  model.seed = seed;
  train.seed = seed;
  synth.seed = seed;
  synth.img_size = model.img_size;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out_dir / "model.axsg" : checkpoint;
}

void set_run_config_key(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "variant") {
    try {
      c.model.variant = parse_variant(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "img_size") c.model.img_size = to_u64(key, v);
  else if (key == "in_channels") c.model.in_channels = to_u64(key, v);
  else if (key == "base_channels") c.model.base_channels = to_u64(key, v);
  else if (key == "heads") c.model.heads = to_u64(key, v);
  else if (key == "global_depth") c.model.global_depth = to_u64(key, v);
  else if (key == "local_depth") c.model.local_depth = to_u64(key, v);
  else if (key == "patch_grid") c.model.patch_grid = to_u64(key, v);
  else if (key == "per_head_gates") c.model.per_head_gates = to_bool(key, v);
  else if (key == "epochs") c.train.epochs = to_u64(key, v);
  else if (key == "batch_size") c.train.batch_size = to_u64(key, v);
  else if (key == "lr") c.train.lr = to_f64(key, v);
  else if (key == "gate_freeze_epochs") c.train.gate_freeze_epochs = to_u64(key, v);
  else if (key == "eval_every") c.train.eval_every = to_u64(key, v);
  else if (key == "n_samples") c.synth.n_samples = to_u64(key, v);
  else if (key == "blob_count_min") c.synth.blob_count_range.first = static_cast<int>(to_u64(key, v));
  else if (key == "blob_count_max") c.synth.blob_count_range.second = static_cast<int>(to_u64(key, v));
  else if (key == "blob_axis_min") c.synth.blob_axes_range.first = to_f64(key, v);
  else if (key == "blob_axis_max") c.synth.blob_axes_range.second = to_f64(key, v);
  else if (key == "speckle_sigma") c.synth.speckle_sigma = to_f64(key, v);
  else if (key == "texture_scale") c.synth.background_texture_scale = to_u64(key, v);
  else if (key == "seed") c.seed = to_u64(key, v);
  else if (key == "corpus_dir") c.corpus_dir = v;
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "checkpoint") c.checkpoint = v;
  else if (key == "eps") c.eps = to_f64(key, v);
  else if (key == "gradcheck_tol") c.gradcheck_tol = to_f64(key, v);
  else if (key == "bench_sizes") {
    std::vector<std::size_t> sizes;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) sizes.push_back(to_u64(key, trim(item)));
    if (sizes.empty()) throw ConfigError("config key 'bench_sizes': empty list");
    c.bench_sizes = std::move(sizes);
  } else if (key == "bench_channels") c.bench_channels = to_u64(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
  c.sync();
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string raw;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' repeated");
    set_run_config_key(c, key, trim(line.substr(eq + 1)));
  }
  c.sync();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "variant=" << axialseg::to_string(model.variant) << '\n'
     << "img_size=" << model.img_size << '\n'
     << "in_channels=" << model.in_channels << '\n'
     << "base_channels=" << model.base_channels << '\n'
     << "heads=" << model.heads << '\n'
     << "global_depth=" << model.global_depth << '\n'
     << "local_depth=" << model.local_depth << '\n'
     << "patch_grid=" << model.patch_grid << '\n'
     << "per_head_gates=" << (model.per_head_gates ? "true" : "false") << '\n'
     << "epochs=" << train.epochs << '\n'
     << "batch_size=" << train.batch_size << '\n'
     << "lr=" << fmt_double(train.lr) << '\n'
     << "gate_freeze_epochs=" << train.gate_freeze_epochs << '\n'
     << "eval_every=" << train.eval_every << '\n'
     << "n_samples=" << synth.n_samples << '\n'
     << "blob_count_min=" << synth.blob_count_range.first << '\n'
     << "blob_count_max=" << synth.blob_count_range.second << '\n'
     << "blob_axis_min=" << fmt_double(synth.blob_axes_range.first) << '\n'
     << "blob_axis_max=" << fmt_double(synth.blob_axes_range.second) << '\n'
     << "speckle_sigma=" << fmt_double(synth.speckle_sigma) << '\n'
     << "texture_scale=" << synth.background_texture_scale << '\n'
     << "seed=" << seed << '\n'
     << "corpus_dir=" << corpus_dir.string() << '\n'
     << "out_dir=" << out_dir.string() << '\n';
  if (!checkpoint.empty()) os << "checkpoint=" << checkpoint.string() << '\n';
  os << "eps=" << fmt_double(eps) << '\n' << "gradcheck_tol=" << fmt_double(gradcheck_tol) << '\n' << "bench_sizes=";
  for (std::size_t i = 0; i < bench_sizes.size(); ++i) os << (i ? "," : "") << bench_sizes[i];
  os << '\n' << "bench_channels=" << bench_channels << '\n';
  return os.str();
}

}  // namespace axialseg
