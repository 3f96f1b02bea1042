#include "surfnet/gradcheck.hpp"

#include <cfloat>
#include <cmath>

namespace surfnet {

namespace {

double evaluate(const LossBuilder& loss, const std::vector<DenseMatrix>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const DenseMatrix& m : inputs) vars.push_back(tape.constant(m));
  return loss(tape, vars).value()(0, 0);
}

}  // namespace

GradCheckResult check_gradients(const LossBuilder& loss, std::vector<DenseMatrix> inputs,
                                const std::vector<Param*>& params, double h) {
  std::vector<DenseMatrix> analytic;
  double loss_value = 0.0;
  std::vector<DenseMatrix> saved_grads;
  for (Param* p : params) {
    saved_grads.push_back(p->grad);
    p->grad = DenseMatrix(p->value.rows(), p->value.cols());
  }
  {
    Tape tape;
    std::vector<Var> vars;
    for (const DenseMatrix& m : inputs) vars.push_back(tape.input(m));
    const Var l = loss(tape, vars);
    loss_value = l.value()(0, 0);
    tape.backward(l);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const DenseMatrix& g = tape.grad(vars[i]);
      analytic.push_back(g.empty() ? DenseMatrix(inputs[i].rows(), inputs[i].cols()) : g);
    }
  }
  for (Param* p : params) analytic.push_back(p->grad);

  GradCheckResult r;
  // Cancellation in (f(x+h) - f(x-h)) / 2h leaves noise of order
  // eps |f| / h. Entries where both sides sit below it are structural zeros
  // (for example a bias feeding a batch norm) and carry no information.
  r.noise_floor = 100.0 * DBL_EPSILON * std::max(1.0, std::abs(loss_value)) / h;
  double diff_sq = 0.0, ref_sq = 0.0;
  auto compare = [&](double a, double n, const std::string& where) {
    diff_sq += (a - n) * (a - n);
    ref_sq += a * a;
    ++r.entries;
    if (std::abs(a) <= r.noise_floor && std::abs(n) <= r.noise_floor) {
      ++r.zero_entries;
      return;
    }
    const double rel = std::abs(a - n) / (std::abs(a) + 1e-8);
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst = where;
    }
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double orig = inputs[i].data()[k];
      inputs[i].data()[k] = orig + h;
      const double up = evaluate(loss, inputs);
      inputs[i].data()[k] = orig - h;
      const double down = evaluate(loss, inputs);
      inputs[i].data()[k] = orig;
      compare(analytic[i].data()[k], (up - down) / (2 * h), "input " + std::to_string(i) + " entry " + std::to_string(k));
    }
  }
  for (std::size_t j = 0; j < params.size(); ++j) {
    Param& p = *params[j];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value.data()[k];
      p.value.data()[k] = orig + h;
      const double up = evaluate(loss, inputs);
      p.value.data()[k] = orig - h;
      const double down = evaluate(loss, inputs);
      p.value.data()[k] = orig;
      compare(analytic[inputs.size() + j].data()[k], (up - down) / (2 * h),
              "param " + std::to_string(j) + " entry " + std::to_string(k));
    }
  }
  for (std::size_t j = 0; j < params.size(); ++j) params[j]->grad = std::move(saved_grads[j]);
  r.norm_rel_error = std::sqrt(diff_sq) / (std::sqrt(ref_sq) + 1e-8);
  return r;
}

}  // namespace surfnet
