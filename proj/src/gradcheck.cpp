#include "axialseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace axialseg {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape<double> tape(false);
  Var<double> l = loss(tape);
  if (l.value().numel() != 1) throw ShapeError("grad_check: loss must be scalar, got " + shape_str(l.shape()));
  return l.value()[0];
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

void require_same(double expected, double got, const char* when) {
  if (!same_bits(expected, got)) {
    std::ostringstream os;
    os.precision(17);
    os << "grad_check: loss is not deterministic (" << when << "): " << expected << " vs " << got;
    throw NonDeterministicError(os.str());
  }
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, std::span<Param<double>* const> params,
                           const GradCheckOptions& opt) {
  GradCheckReport report;
  report.eps = opt.eps;
  for (auto* p : params) p->zero_grad();

  double base;
  {
    Tape<double> tape;
    Var<double> l = loss(tape);
    if (l.value().numel() != 1) throw ShapeError("grad_check: loss must be scalar, got " + shape_str(l.shape()));
    base = l.value()[0];
    tape.backward(l);
  }
  require_same(base, evaluate(loss), "recording vs replay");

  for (auto* p : params) {
    ParamGradError pe;
    pe.name = p->name;
    const std::size_t n = p->numel();
    const std::size_t want = opt.max_entries_per_param == 0 ? n : std::min(n, opt.max_entries_per_param);
    for (std::size_t s = 0; s < want; ++s) {
      const std::size_t idx = want == n ? s : s * n / want;
      const double orig = p->value[idx];
      p->value[idx] = orig + opt.eps;
      const double fp = evaluate(loss);
      p->value[idx] = orig - opt.eps;
      const double fm = evaluate(loss);
      p->value[idx] = orig;
      const double numeric = (fp - fm) / (2.0 * opt.eps);
      const double analytic = p->grad[idx];
      const double rel =
          std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double score = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
      if (pe.checked == 0 || score > pe.max_rel_error) {
        pe.max_rel_error = score;
        pe.worst_index = idx;
        pe.analytic = analytic;
        pe.numeric = numeric;
      }
      ++pe.checked;
    }
    report.entries_checked += pe.checked;
    if (pe.checked > 0 && (report.worst_param.empty() || pe.max_rel_error > report.max_rel_error)) {
      report.max_rel_error = pe.max_rel_error;
      report.worst_param = pe.name;
      report.worst_index = pe.worst_index;
    }
    report.per_param.push_back(std::move(pe));
  }
  require_same(base, evaluate(loss), "after probing");
  return report;
}

}  // namespace axialseg
