#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>

#include "axialseg/attention.hpp"
#include "axialseg/checkpoint.hpp"
#include "axialseg/commands.hpp"
#include "axialseg/data.hpp"
#include "axialseg/model.hpp"
#include "axialseg/training.hpp"

namespace py = pybind11;
using namespace axialseg;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const Array<T>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  return Tensor<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

ModelConfig make_config(const std::string& variant, std::size_t img_size, std::size_t base_channels,
                        std::size_t heads, std::size_t global_depth, std::size_t local_depth, std::size_t patch_grid,
                        bool per_head_gates, std::uint64_t seed) {
  ModelConfig c;
  c.variant = parse_variant(variant);
  c.img_size = img_size;
  c.base_channels = base_channels;
  c.heads = heads;
  c.global_depth = global_depth;
  c.local_depth = local_depth;
  c.patch_grid = patch_grid;
  c.per_head_gates = per_head_gates;
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<data::Sample> to_samples(const Array<float>& images, const Array<float>& masks) {
  if (images.ndim() != 4 || masks.ndim() != 4) throw py::value_error("images and masks must be [N,1,I,I]");
  const Tensor<float> x = to_tensor(images), y = to_tensor(masks);
  if (x.shape() != y.shape()) throw py::value_error("images and masks differ in shape");
  const std::size_t n = x.dim(0), per = x.numel() / n;
  std::vector<data::Sample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Shape s{1, x.dim(1), x.dim(2), x.dim(3)};
    out[i].image = Tensor<float>(s, std::vector<float>(x.data() + i * per, x.data() + (i + 1) * per));
    out[i].mask = Tensor<float>(s, std::vector<float>(y.data() + i * per, y.data() + (i + 1) * per));
    out[i].id = "sample_" + std::to_string(i);
  }
  return out;
}

class PyModel {
 public:
  explicit PyModel(const ModelConfig& cfg) : model_(std::make_unique<Model<float>>(cfg)) {}
  explicit PyModel(std::unique_ptr<Model<float>> m) : model_(std::move(m)) {}

  py::array_t<float> predict(const Array<float>& x) { return to_array(model_->predict(to_tensor(x))); }

  py::list train(const Array<float>& images, const Array<float>& masks, std::size_t epochs, std::size_t batch_size,
                 double lr, std::size_t gate_freeze_epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.lr = lr;
    cfg.gate_freeze_epochs = gate_freeze_epochs;
    cfg.seed = seed;
    const auto samples = to_samples(images, masks);
    std::vector<EpochRecord> hist;
    {
      py::gil_scoped_release release;
      hist = axialseg::train(*model_, samples, cfg);
    }
    py::list out;
    for (const auto& r : hist) out.append(py::dict(py::arg("epoch") = r.epoch, py::arg("loss") = r.loss,
                                                   py::arg("f1") = r.f1, py::arg("iou") = r.iou));
    return out;
  }

  py::dict evaluate(const Array<float>& images, const Array<float>& masks, double threshold) {
    const auto s = axialseg::evaluate(*model_, to_samples(images, masks), threshold);
    return py::dict(py::arg("f1") = s.f1_mean, py::arg("iou") = s.iou_mean, py::arg("f1_pooled") = s.f1_pooled,
                    py::arg("iou_pooled") = s.iou_pooled, py::arg("loss") = s.loss);
  }

  py::list gates() const {
    py::list out;
    for (const auto& g : model_->gates())
      out.append(py::make_tuple(g.gq->value[0], g.gk->value[0], g.gv1->value[0], g.gv2->value[0]));
    return out;
  }

  std::size_t parameter_count() const { return model_->parameter_count(); }
  std::string variant() const { return to_string(model_->config().variant); }
  std::size_t img_size() const { return model_->config().img_size; }
  void save(const std::string& path) const { save_checkpoint(*model_, path); }

 private:
  std::unique_ptr<Model<float>> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gated axial attention segmentation core";

  py::register_exception<CheckpointError>(m, "CheckpointError");
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("variants", [] {
    std::vector<std::string> out;
    for (Variant v : all_variants()) out.push_back(to_string(v));
    return out;
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& variant, std::size_t img_size, std::size_t base_channels,
                       std::size_t heads, std::size_t global_depth, std::size_t local_depth, std::size_t patch_grid,
                       bool per_head_gates, std::uint64_t seed) {
             return PyModel(make_config(variant, img_size, base_channels, heads, global_depth, local_depth,
                                        patch_grid, per_head_gates, seed));
           }),
           py::arg("variant") = "medt", py::arg("img_size") = 64, py::arg("base_channels") = 8,
           py::arg("heads") = 8, py::arg("global_depth") = 2, py::arg("local_depth") = 5, py::arg("patch_grid") = 4,
           py::arg("per_head_gates") = false, py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return PyModel(load_model<float>(path)); })
      .def("predict", &PyModel::predict, py::arg("x"), "Eval-mode probabilities for x [N,1,I,I].")
      .def("train", &PyModel::train, py::arg("images"), py::arg("masks"), py::arg("epochs"),
           py::arg("batch_size") = 4, py::arg("lr") = 1e-3, py::arg("gate_freeze_epochs") = 10, py::arg("seed") = 0)
      .def("evaluate", &PyModel::evaluate, py::arg("images"), py::arg("masks"), py::arg("threshold") = 0.5)
      .def("gates", &PyModel::gates)
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("variant", &PyModel::variant)
      .def_property_readonly("img_size", &PyModel::img_size);

  m.def(
      "generate",
      [](std::size_t n_samples, std::size_t img_size, std::uint64_t seed) {
        data::SynthSpec spec;
        spec.n_samples = n_samples;
        spec.img_size = img_size;
        spec.seed = seed;
        spec.validate();
        const auto samples = data::generate(spec);
        py::array_t<float> images({n_samples, std::size_t{1}, img_size, img_size});
        py::array_t<float> masks({n_samples, std::size_t{1}, img_size, img_size});
        const std::size_t per = img_size * img_size;
        for (std::size_t i = 0; i < samples.size(); ++i) {
          std::copy(samples[i].image.data(), samples[i].image.data() + per, images.mutable_data() + i * per);
          std::copy(samples[i].mask.data(), samples[i].mask.data() + per, masks.mutable_data() + i * per);
        }
        return py::make_tuple(images, masks);
      },
      py::arg("n_samples"), py::arg("img_size") = 64, py::arg("seed") = 0,
      "Synthetic speckled images and masks, each [N,1,I,I] float32.");

  m.def(
      "axial_attention_width",
      [](const Array<double>& q, const Array<double>& k, const Array<double>& v, std::optional<Array<double>> rq,
         std::optional<Array<double>> rk, std::optional<Array<double>> rv, std::tuple<double, double, double, double> g) {
        const auto tq = to_tensor(q), tk = to_tensor(k), tv = to_tensor(v);
        std::optional<Tensor<double>> a, b, c;
        if (rq || rk || rv) {
          if (!(rq && rk && rv)) throw py::value_error("give all of rq, rk, rv or none");
          a = to_tensor(*rq);
          b = to_tensor(*rk);
          c = to_tensor(*rv);
        }
        GateValues<double> gv{std::get<0>(g), std::get<1>(g), std::get<2>(g), std::get<3>(g)};
        auto res = axial_width_kernel(tq, tk, tv, a ? &*a : nullptr, b ? &*b : nullptr, c ? &*c : nullptr, gv);
        return py::make_tuple(to_array(res.y), to_array(res.attn));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("rq") = py::none(), py::arg("rk") = py::none(),
      py::arg("rv") = py::none(), py::arg("gates") = std::make_tuple(1.0, 1.0, 1.0, 1.0),
      "Width-axis attention for one head on projected q, k, v [N,d,H,W]. Returns (y, attention).");

  m.def(
      "full_self_attention",
      [](const Array<double>& x, const Array<double>& wq, const Array<double>& wk, const Array<double>& wv,
         std::size_t max_sites) {
        return to_array(full_self_attention_oracle(to_tensor(x), to_tensor(wq), to_tensor(wk), to_tensor(wv),
                                                   max_sites));
      },
      py::arg("x"), py::arg("wq"), py::arg("wk"), py::arg("wv"), py::arg("max_sites") = 256);

  m.def(
      "f1_iou",
      [](const Array<double>& pred, const Array<double>& target, double threshold) {
        const auto r = f1_iou(to_tensor(pred), to_tensor(target), threshold);
        return py::make_tuple(r.f1, r.iou);
      },
      py::arg("pred"), py::arg("target"), py::arg("threshold") = 0.5);

  m.def(
      "bce_loss",
      [](const Array<double>& pred, const Array<double>& target) {
        Tape<double> t(false);
        return bce_loss(t.constant(to_tensor(pred)), t.constant(to_tensor(target))).value()[0];
      },
      py::arg("pred"), py::arg("target"));

  m.def(
      "gradcheck",
      [](double eps, double tol, bool ops, bool layer, bool model) {
        GradcheckSuiteOptions opt;
        opt.eps = eps;
        opt.tol = tol;
        opt.ops = ops;
        opt.layer = layer;
        opt.model = model;
        py::list out;
        for (const auto& c : run_gradcheck_suite(opt))
          out.append(py::make_tuple(c.name, c.report.max_rel_error, c.passed));
        return out;
      },
      py::arg("eps") = 1e-4, py::arg("tol") = 1e-5, py::arg("ops") = true, py::arg("layer") = true,
      py::arg("model") = true, "Finite-difference suite; list of (case, max_rel_error, passed).");

  m.def(
      "bench",
      [](std::size_t size, std::size_t channels, std::uint64_t seed) {
        const auto r = bench_size(size, channels, seed);
        return py::dict(py::arg("size") = r.size, py::arg("full_macs") = r.full_macs,
                        py::arg("full_analytic") = r.full_analytic, py::arg("axial_macs") = r.axial_macs,
                        py::arg("axial_analytic") = r.axial_analytic, py::arg("axial_pos_macs") = r.axial_pos_macs,
                        py::arg("axial_pos_analytic") = r.axial_pos_analytic, py::arg("full_ms") = r.full_ms,
                        py::arg("axial_ms") = r.axial_ms);
      },
      py::arg("size"), py::arg("channels") = 4, py::arg("seed") = 0);
}
