#include "surfnet/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "surfnet/error.hpp"

namespace surfnet {

namespace {

std::string shape(const DenseMatrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": " + shape(a) + " vs " + shape(b));
  }
}

void require_finite(const DenseMatrix& m, const char* op) {
  if (!all_finite(m)) throw NumericalError(std::string(op) + " produced a non-finite value");
}

DenseMatrix column_sums(const DenseMatrix& g) {
  DenseMatrix s(1, g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t c = 0; c < g.cols(); ++c) s(0, c) += g(i, c);
  }
  return s;
}

DenseMatrix scalar(double v) { return DenseMatrix(1, 1, v); }

}  // namespace

// ---------------------------------------------------------------------------

Param& ParamStore::add(const std::string& name, DenseMatrix value, bool trainable) {
  if (params_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  Param p;
  p.grad = DenseMatrix(value.rows(), value.cols());
  p.value = std::move(value);
  p.trainable = trainable;
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) {
    if (!trainable_only || p.trainable) n += p.value.size();
  }
  return n;
}

// ---------------------------------------------------------------------------

const DenseMatrix& Var::value() const { return tape->value(id); }

Var Tape::constant(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Param& param) {
  nodes_.push_back(Node{param.value, {}, {}, {}, &param, param.trainable});
  return {this, nodes_.size() - 1};
}

Var Tape::input(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
  return {this, nodes_.size() - 1};
}

Var Tape::record(DenseMatrix value, std::vector<std::size_t> parents, Backward backward) {
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, std::move(parents), needs ? std::move(backward) : Backward{},
                        nullptr, needs});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const DenseMatrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty() && !n.value.empty()) {
    n.grad = g;
    return;
  }
  require_same(n.grad, g, "gradient accumulation");
  for (std::size_t i = 0; i < g.size(); ++i) n.grad.data()[i] += g.data()[i];
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ValidationError("backward: variable belongs to another tape");
  const DenseMatrix& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) throw NotScalar("backward needs a 1x1 loss, got " + shape(lv));
  for (Node& n : nodes_) n.grad = DenseMatrix();
  accumulate(loss.id, scalar(1.0));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      // Copy: the closure may append to other nodes' gradients only, but
      // keep the handle stable regardless.
      const DenseMatrix g = n.grad;
      n.backward(*this, g);
    }
    if (n.param != nullptr && n.param->trainable) {
      DenseMatrix& pg = n.param->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += n.grad.data()[i];
    }
  }
}

// ---------------------------------------------------------------------------

double elu_value(double x) { return x > 0 ? x : std::expm1(x); }

namespace ad {

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tape& t = *a.tape;
  return t.record(a.value() + b.value(), {a.id, b.id}, [a, b](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tape& t = *a.tape;
  return t.record(a.value() - b.value(), {a.id, b.id}, [a, b](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, -1.0 * g);
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  DenseMatrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b](Tape& tp, const DenseMatrix& g) {
    DenseMatrix ga = g, gb = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data()[i] *= b.value().data()[i];
      gb.data()[i] *= a.value().data()[i];
    }
    tp.accumulate(a.id, ga);
    tp.accumulate(b.id, gb);
  });
}

Var scale(Var a, double s) {
  return a.tape->record(s * a.value(), {a.id}, [a, s](Tape& tp, const DenseMatrix& g) { tp.accumulate(a.id, s * g); });
}

Var matmul(Var a, Var b) {
  return a.tape->record(surfnet::matmul(a.value(), b.value()), {a.id, b.id},
                        [a, b](Tape& tp, const DenseMatrix& g) {
                          if (tp.requires_grad(a.id)) tp.accumulate(a.id, matmul_nt(g, b.value()));
                          if (tp.requires_grad(b.id)) tp.accumulate(b.id, matmul_tn(a.value(), g));
                        });
}

Var matmul_nt(Var a, Var b) {
  return a.tape->record(surfnet::matmul_nt(a.value(), b.value()), {a.id, b.id},
                        [a, b](Tape& tp, const DenseMatrix& g) {
                          if (tp.requires_grad(a.id)) tp.accumulate(a.id, surfnet::matmul(g, b.value()));
                          if (tp.requires_grad(b.id)) tp.accumulate(b.id, matmul_tn(g, a.value()));
                        });
}

Var linear(Var x, Var weight) {
  if (x.cols() != weight.cols()) {
    throw DimensionMismatch("linear: input has " + std::to_string(x.cols()) + " channels, weight expects " +
                            std::to_string(weight.cols()));
  }
  return matmul_nt(x, weight);
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionMismatch("add_row: row " + shape(row.value()) + " for input " + shape(x.value()));
  }
  DenseMatrix out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += row.value()(0, c);
  }
  return x.tape->record(std::move(out), {x.id, row.id}, [x, row](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(x.id, g);
    if (tp.requires_grad(row.id)) tp.accumulate(row.id, column_sums(g));
  });
}

Var linear(Var x, Var weight, Var bias) { return add_row(linear(x, weight), bias); }

Var qmix(Var x, Var c) {
  if (x.cols() % 4 != 0) throw NonQuadChannels("qmix: " + std::to_string(x.cols()) + " channels");
  if (x.cols() / 4 != c.cols()) {
    throw DimensionMismatch("qmix: " + std::to_string(x.cols() / 4) + " quaternion slots, mixing matrix " +
                            shape(c.value()));
  }
  const DenseMatrix stacked = lanes_to_rows(x.value());
  DenseMatrix out = rows_to_lanes(surfnet::matmul_nt(stacked, c.value()));
  return x.tape->record(std::move(out), {x.id, c.id}, [x, c](Tape& tp, const DenseMatrix& g) {
    const DenseMatrix gs = lanes_to_rows(g);
    if (tp.requires_grad(x.id)) tp.accumulate(x.id, rows_to_lanes(surfnet::matmul(gs, c.value())));
    if (tp.requires_grad(c.id)) tp.accumulate(c.id, matmul_tn(gs, lanes_to_rows(x.value())));
  });
}

Var spmv(const SparseOperator& op, const SparseOperator& op_t, Var x) {
  const SparseOperator* opt = &op_t;
  return x.tape->record(surfnet::spmv(op, x.value()), {x.id},
                        [x, opt](Tape& tp, const DenseMatrix& g) { tp.accumulate(x.id, surfnet::spmv(*opt, g)); });
}

Var segment_mean(Var x, std::span<const std::size_t> offsets) {
  if (offsets.empty() || offsets.back() != x.rows()) {
    throw DimensionMismatch("segment_mean: offsets do not cover the " + std::to_string(x.rows()) + " rows");
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const std::size_t segs = off.size() - 1;
  DenseMatrix out(segs, x.cols());
  for (std::size_t s = 0; s < segs; ++s) {
    const double inv = 1.0 / static_cast<double>(off[s + 1] - off[s]);
    for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
      for (std::size_t c = 0; c < x.cols(); ++c) out(s, c) += x.value()(i, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(s, c) *= inv;
  }
  return x.tape->record(std::move(out), {x.id}, [x, off](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gx(x.rows(), x.cols());
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const double inv = 1.0 / static_cast<double>(off[s + 1] - off[s]);
      for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
        for (std::size_t c = 0; c < gx.cols(); ++c) gx(i, c) = g(s, c) * inv;
      }
    }
    tp.accumulate(x.id, gx);
  });
}

Var broadcast_segments(Var h, std::span<const std::size_t> offsets) {
  if (offsets.size() != h.rows() + 1) throw DimensionMismatch("broadcast_segments: segment count mismatch");
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  DenseMatrix out(off.back(), h.cols());
  for (std::size_t s = 0; s < h.rows(); ++s) {
    for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
      for (std::size_t c = 0; c < h.cols(); ++c) out(i, c) = h.value()(s, c);
    }
  }
  return h.tape->record(std::move(out), {h.id}, [h, off](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gh(h.rows(), h.cols());
    for (std::size_t s = 0; s < h.rows(); ++s) {
      for (std::size_t i = off[s]; i < off[s + 1]; ++i) {
        for (std::size_t c = 0; c < gh.cols(); ++c) gh(s, c) += g(i, c);
      }
    }
    tp.accumulate(h.id, gh);
  });
}

Var elu(Var x) {
  DenseMatrix out = x.value();
  for (double& v : out.storage()) v = elu_value(v);
  return x.tape->record(std::move(out), {x.id}, [x](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = x.value().data()[i];
      if (v <= 0) gx.data()[i] *= std::exp(v);
    }
    tp.accumulate(x.id, gx);
  });
}

Var exp(Var x) {
  DenseMatrix out = x.value();
  for (double& v : out.storage()) v = std::exp(v);
  require_finite(out, "exp");
  Tape& t = *x.tape;
  const std::size_t id = t.size();
  return t.record(std::move(out), {x.id}, [x, id](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gx = g;
    const DenseMatrix& y = tp.value(id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] *= y.data()[i];
    tp.accumulate(x.id, gx);
  });
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("concat_cols: " + shape(a.value()) + " and " + shape(b.value()));
  const std::size_t ca = a.cols(), cb = b.cols();
  DenseMatrix out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t c = 0; c < ca; ++c) out(i, c) = a.value()(i, c);
    for (std::size_t c = 0; c < cb; ++c) out(i, ca + c) = b.value()(i, c);
  }
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b, ca, cb](Tape& tp, const DenseMatrix& g) {
    DenseMatrix ga(g.rows(), ca), gb(g.rows(), cb);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t c = 0; c < ca; ++c) ga(i, c) = g(i, c);
      for (std::size_t c = 0; c < cb; ++c) gb(i, c) = g(i, ca + c);
    }
    tp.accumulate(a.id, ga);
    tp.accumulate(b.id, gb);
  });
}

Var gather_rows(Var x, std::span<const std::size_t> idx) {
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  DenseMatrix out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) throw DimensionMismatch("gather_rows: index out of range");
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x.value()(rows[r], c);
  }
  return x.tape->record(std::move(out), {x.id}, [x, rows](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gx(x.rows(), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(rows[r], c) += g(r, c);
    }
    tp.accumulate(x.id, gx);
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) throw DimensionMismatch("slice_cols: range outside " + shape(x.value()));
  DenseMatrix out(x.rows(), end - begin);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = begin; c < end; ++c) out(i, c - begin) = x.value()(i, c);
  }
  return x.tape->record(std::move(out), {x.id}, [x, begin, end](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = begin; c < end; ++c) gx(i, c) = g(i, c - begin);
    }
    tp.accumulate(x.id, gx);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().storage()) s += v;
  return x.tape->record(scalar(s), {x.id}, [x](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(x.id, DenseMatrix(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  if (x.value().empty()) throw DimensionMismatch("mean of an empty matrix");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var smooth_l1(Var pred, const DenseMatrix& target, double beta) {
  require_same(pred.value(), target, "smooth_l1");
  const double n = static_cast<double>(target.size());
  double loss = 0.0;
  DenseMatrix dl(target.rows(), target.cols());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.value().data()[i] - target.data()[i];
    if (std::abs(d) < beta) {
      loss += 0.5 * d * d / beta;
      dl.data()[i] = d / beta / n;
    } else {
      loss += std::abs(d) - 0.5 * beta;
      dl.data()[i] = (d > 0 ? 1.0 : -1.0) / n;
    }
  }
  return pred.tape->record(scalar(loss / n), {pred.id}, [pred, dl](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(pred.id, g(0, 0) * dl);
  });
}

Var mse(Var pred, const DenseMatrix& target) {
  require_same(pred.value(), target, "mse");
  const double n = static_cast<double>(target.size());
  const DenseMatrix d = pred.value() - target;
  return pred.tape->record(scalar(inner(d, d) / n), {pred.id}, [pred, d, n](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(pred.id, (2.0 * g(0, 0) / n) * d);
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> target) {
  const DenseMatrix& z = logits.value();
  if (target.size() != z.rows()) throw DimensionMismatch("softmax_cross_entropy: one target per row required");
  DenseMatrix p(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (target[i] >= z.cols()) throw DimensionMismatch("softmax_cross_entropy: target index out of range");
    double m = z(i, 0);
    for (std::size_t j = 1; j < z.cols(); ++j) m = std::max(m, z(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) s += std::exp(z(i, j) - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < z.cols(); ++j) p(i, j) = std::exp(z(i, j) - lse);
    loss += lse - z(i, target[i]);
  }
  const double n = static_cast<double>(z.rows());
  std::vector<std::size_t> tgt(target.begin(), target.end());
  return logits.tape->record(scalar(loss / n), {logits.id}, [logits, p, tgt, n](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gz = p;
    for (std::size_t i = 0; i < gz.rows(); ++i) gz(i, tgt[i]) -= 1.0;
    tp.accumulate(logits.id, (g(0, 0) / n) * gz);
  });
}

Var gaussian_nll(Var mu, Var log_var, const DenseMatrix& target) {
  require_same(mu.value(), target, "gaussian_nll");
  if (log_var.rows() != 1 || log_var.cols() != 1) throw DimensionMismatch("gaussian_nll: log variance must be 1x1");
  const double s = log_var.value()(0, 0);
  const double inv = std::exp(-s);
  const DenseMatrix d = target - mu.value();
  const double sq = inner(d, d);
  const double n = static_cast<double>(target.size());
  const double loss = 0.5 * (sq * inv + n * s + n * std::log(2.0 * std::numbers::pi));
  return mu.tape->record(scalar(loss), {mu.id, log_var.id}, [mu, log_var, d, inv, sq, n](Tape& tp, const DenseMatrix& g) {
    if (tp.requires_grad(mu.id)) tp.accumulate(mu.id, (-g(0, 0) * inv) * d);
    if (tp.requires_grad(log_var.id)) tp.accumulate(log_var.id, scalar(g(0, 0) * 0.5 * (n - sq * inv)));
  });
}

Var kl_standard_normal(Var mu, Var log_var) {
  require_same(mu.value(), log_var.value(), "kl_standard_normal");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.value().size(); ++i) {
    const double m = mu.value().data()[i];
    const double lv = log_var.value().data()[i];
    kl += -0.5 * (1.0 + lv - m * m - std::exp(lv));
  }
  return mu.tape->record(scalar(kl), {mu.id, log_var.id}, [mu, log_var](Tape& tp, const DenseMatrix& g) {
    DenseMatrix gm = mu.value(), gl = log_var.value();
    for (std::size_t i = 0; i < gm.size(); ++i) {
      gm.data()[i] *= g(0, 0);
      gl.data()[i] = g(0, 0) * -0.5 * (1.0 - std::exp(log_var.value().data()[i]));
    }
    tp.accumulate(mu.id, gm);
    tp.accumulate(log_var.id, gl);
  });
}

Var reparameterize(Var mu, Var log_var, const DenseMatrix& eps) {
  require_same(mu.value(), log_var.value(), "reparameterize");
  require_same(mu.value(), eps, "reparameterize");
  DenseMatrix sd = log_var.value();
  for (double& v : sd.storage()) v = std::exp(0.5 * v);
  DenseMatrix z = mu.value();
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += sd.data()[i] * eps.data()[i];
  return mu.tape->record(std::move(z), {mu.id, log_var.id}, [mu, log_var, sd, eps](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(mu.id, g);
    DenseMatrix gl = g;
    for (std::size_t i = 0; i < gl.size(); ++i) gl.data()[i] *= 0.5 * sd.data()[i] * eps.data()[i];
    tp.accumulate(log_var.id, gl);
  });
}

Var batch_norm(Tape& tape, Var x, const BatchNormState& st, bool training) {
  const std::size_t n = x.rows(), c = x.cols();
  if (st.gamma->value.cols() != c) throw DimensionMismatch("batch_norm: channel count mismatch");
  const Var gamma = tape.parameter(*st.gamma);
  const Var beta = tape.parameter(*st.beta);
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (training) {
    if (n == 0) throw DimensionMismatch("batch_norm: empty batch");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) mu[k] += x.value()(i, k);
    }
    for (double& m : mu) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double d = x.value()(i, k) - mu[k];
        var[k] += d * d;
      }
    }
    for (std::size_t k = 0; k < c; ++k) {
      const double biased = var[k] / static_cast<double>(n);
      const double unbiased = n > 1 ? var[k] / static_cast<double>(n - 1) : biased;
      var[k] = biased;
      auto& rm = st.running_mean->value(0, k);
      auto& rv = st.running_var->value(0, k);
      // NaN marks a statistic that was reset: take the batch value outright.
      rm = std::isnan(rm) ? mu[k] : kBatchNormMomentum * rm + (1.0 - kBatchNormMomentum) * mu[k];
      rv = std::isnan(rv) ? unbiased : kBatchNormMomentum * rv + (1.0 - kBatchNormMomentum) * unbiased;
    }
  } else {
    for (std::size_t k = 0; k < c; ++k) {
      mu[k] = st.running_mean->value(0, k);
      var[k] = st.running_var->value(0, k);
    }
  }
  std::vector<double> inv_sd(c);
  for (std::size_t k = 0; k < c; ++k) inv_sd[k] = 1.0 / std::sqrt(var[k] + kBatchNormEps);
  DenseMatrix xhat(n, c), out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      xhat(i, k) = (x.value()(i, k) - mu[k]) * inv_sd[k];
      out(i, k) = gamma.value()(0, k) * xhat(i, k) + beta.value()(0, k);
    }
  }
  return tape.record(std::move(out), {x.id, gamma.id, beta.id},
                     [x, gamma, beta, xhat, inv_sd, training](Tape& tp, const DenseMatrix& g) {
                       const std::size_t n = g.rows(), c = g.cols();
                       DenseMatrix gg(1, c), gb(1, c);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t k = 0; k < c; ++k) {
                           gg(0, k) += g(i, k) * xhat(i, k);
                           gb(0, k) += g(i, k);
                         }
                       }
                       if (tp.requires_grad(x.id)) {
                         DenseMatrix gx(n, c);
                         const double dn = static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t k = 0; k < c; ++k) {
                             const double s = gamma.value()(0, k) * inv_sd[k];
                             gx(i, k) = training ? s * (g(i, k) - gb(0, k) / dn - xhat(i, k) * gg(0, k) / dn)
                                                 : s * g(i, k);
                           }
                         }
                         tp.accumulate(x.id, gx);
                       }
                       tp.accumulate(gamma.id, gg);
                       tp.accumulate(beta.id, gb);
                     });
}

}  // namespace ad

}  // namespace surfnet
