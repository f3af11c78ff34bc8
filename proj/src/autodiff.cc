/* Copyright 2026 The EvDistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "evdistill/autodiff.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace evdistill {

const Tensor& Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, {}});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}, {}});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::invalid_argument("tape: input recorded on a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("tape: loss recorded on a different tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("tape: backward needs a scalar, got " +
                                shape_string(nodes_[loss.id].value.dims()));
  }
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  Node& root = nodes_[loss.id];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.dims(), 1.0);
  root.has_grad = true;

  std::vector<Tensor*> slots;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    slots.assign(n.inputs.size(), nullptr);
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      Node& in = nodes_[n.inputs[i]];
      if (!in.requires_grad) continue;
      if (!in.has_grad) {
        in.grad = Tensor(in.value.dims());
        in.has_grad = true;
      }
      slots[i] = &in.grad;
    }
    n.backward(n.grad, slots);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? n.grad : Tensor(n.value.dims());
}

namespace ad {
namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("ad: vars on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.dims()) +
                                " vs " + shape_string(b.dims()));
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = evdistill::matmul(a.value(), b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor*> in) {
    if (in[0]) accumulate(in[0], evdistill::matmul(g, evdistill::transpose(b.value())));
    if (in[1]) accumulate(in[1], evdistill::matmul(evdistill::transpose(a.value()), g));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = evdistill::add(a.value(), b.value());
  return a.tape->record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor*> in) {
    accumulate(in[0], g);
    accumulate(in[1], g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor*> in) {
    accumulate(in[0], g);
    if (in[1])
      for (size_t i = 0; i < g.size(); ++i) (*in[1])[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor*> in) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (in[0])
      for (size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * bv[i];
    if (in[1])
      for (size_t i = 0; i < g.size(); ++i) (*in[1])[i] += g[i] * av[i];
  });
}

Var scale(Var a, double s) {
  return a.tape->record(evdistill::scale(a.value(), s), {a},
                        [s](const Tensor& g, std::span<Tensor*> in) {
                          for (size_t i = 0; i < g.size(); ++i) (*in[0])[i] += s * g[i];
                        });
}

Var add_bias(Var x, Var b) {
  require_same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || bv.size() != xv.cols()) {
    throw std::invalid_argument("add_bias: bias of " + shape_string(bv.dims()) +
                                " does not fit " + shape_string(xv.dims()));
  }
  Tensor out = xv;
  for (size_t r = 0; r < out.rows(); ++r)
    for (size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return x.tape->record(std::move(out), {x, b}, [](const Tensor& g, std::span<Tensor*> in) {
    accumulate(in[0], g);
    if (in[1])
      for (size_t r = 0; r < g.rows(); ++r)
        for (size_t c = 0; c < g.cols(); ++c) (*in[1])[c] += g(r, c);
  });
}

Var transpose(Var a) {
  return a.tape->record(evdistill::transpose(a.value()), {a},
                        [](const Tensor& g, std::span<Tensor*> in) {
                          accumulate(in[0], evdistill::transpose(g));
                        });
}

Var softmax_rows(Var x) {
  // The backward pass reads the output, which is the node about to be recorded.
  const Var y{x.tape, static_cast<int>(x.tape->size())};
  return x.tape->record(evdistill::softmax_rows(x.value()), {x},
                        [y](const Tensor& g, std::span<Tensor*> in) {
                          const Tensor& yv = y.value();
                          for (size_t r = 0; r < yv.rows(); ++r) {
                            double dot = 0.0;
                            for (size_t c = 0; c < yv.cols(); ++c) dot += g(r, c) * yv(r, c);
                            for (size_t c = 0; c < yv.cols(); ++c)
                              (*in[0])(r, c) += yv(r, c) * (g(r, c) - dot);
                          }
                        });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const Tensor& xv = x.value();
  const size_t n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw std::invalid_argument("layer_norm_rows: affine params do not match " +
                                shape_string(xv.dims()));
  }
  Tensor xhat(xv.dims());
  Tensor inv_std({xv.rows()});
  Tensor out(xv.dims());
  for (size_t r = 0; r < xv.rows(); ++r) {
    double mean = 0.0;
    for (size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t c = 0; c < n; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
      out(r, c) = gamma.value()[c] * xhat(r, c) + beta.value()[c];
    }
  }
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& g,
                                                                    std::span<Tensor*> in) {
        const size_t rows = g.rows(), n = g.cols();
        const Tensor& gv = gamma.value();
        for (size_t r = 0; r < rows; ++r) {
          if (in[0]) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (size_t c = 0; c < n; ++c) {
              const double d = g(r, c) * gv[c];
              mean_d += d;
              mean_dx += d * xhat(r, c);
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (size_t c = 0; c < n; ++c) {
              const double d = g(r, c) * gv[c];
              (*in[0])(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
            }
          }
          for (size_t c = 0; c < n; ++c) {
            if (in[1]) (*in[1])[c] += g(r, c) * xhat(r, c);
            if (in[2]) (*in[2])[c] += g(r, c);
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return x.tape->record(std::move(out), {x}, [x](const Tensor& g, std::span<Tensor*> in) {
    const Tensor& xv = x.value();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*in[0])[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var slice_cols(Var x, size_t begin, size_t count) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || count == 0 || begin + count > xv.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds for " + shape_string(xv.dims()));
  }
  Tensor out({xv.rows(), count});
  for (size_t r = 0; r < xv.rows(); ++r)
    for (size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  return x.tape->record(std::move(out), {x}, [begin](const Tensor& g, std::span<Tensor*> in) {
    for (size_t r = 0; r < g.rows(); ++r)
      for (size_t c = 0; c < g.cols(); ++c) (*in[0])(r, begin + c) += g(r, c);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const size_t rows = parts[0].value().rows();
  size_t total = 0;
  std::vector<size_t> widths;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rank() != 2 || p.value().rows() != rows) {
      throw std::invalid_argument("concat_cols: row counts differ");
    }
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({rows, total});
  size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
  }
  return parts[0].tape->record(
      std::move(out), std::vector<Var>(parts.begin(), parts.end()),
      [widths](const Tensor& g, std::span<Tensor*> in) {
        size_t off = 0;
        for (size_t i = 0; i < widths.size(); ++i) {
          if (in[i])
            for (size_t r = 0; r < g.rows(); ++r)
              for (size_t c = 0; c < widths[i]; ++c) (*in[i])(r, c) += g(r, off + c);
          off += widths[i];
        }
      });
}

Var select_rows(Var a, Var b, const std::vector<bool>& take_b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "select_rows");
  if (a.value().rank() != 2 || take_b.size() != a.value().rows()) {
    throw std::invalid_argument("select_rows: mask length does not match row count");
  }
  Tensor out = a.value();
  for (size_t r = 0; r < out.rows(); ++r)
    if (take_b[r])
      for (size_t c = 0; c < out.cols(); ++c) out(r, c) = b.value()(r, c);
  return a.tape->record(std::move(out), {a, b}, [take_b](const Tensor& g, std::span<Tensor*> in) {
    for (size_t r = 0; r < g.rows(); ++r) {
      Tensor* dst = take_b[r] ? in[1] : in[0];
      if (!dst) continue;
      for (size_t c = 0; c < g.cols(); ++c) (*dst)(r, c) += g(r, c);
    }
  });
}

Var normalize_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.dims());
  Tensor norms({xv.rows()});
  for (size_t r = 0; r < xv.rows(); ++r) {
    double acc = 0.0;
    for (double v : xv.row(r)) acc += v * v;
    norms[r] = std::sqrt(acc);
    if (norms[r] == 0.0) throw std::domain_error("normalize_rows: zero row");
    for (size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(r, c) / norms[r];
  }
  const Var self{x.tape, static_cast<int>(x.tape->size())};
  return x.tape->record(std::move(out), {x},
                        [self, norms = std::move(norms)](const Tensor& g, std::span<Tensor*> in) {
                          const Tensor& y = self.value();
                          for (size_t r = 0; r < g.rows(); ++r) {
                            double dot = 0.0;
                            for (size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
                            for (size_t c = 0; c < g.cols(); ++c)
                              (*in[0])(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
                          }
                        });
}

Var sum(Var x) {
  Tensor out({1}, std::vector<double>{x.value().sum()});
  return x.tape->record(std::move(out), {x}, [](const Tensor& g, std::span<Tensor*> in) {
    for (double& v : in[0]->data()) v += g[0];
  });
}

Var weighted_abs_mean(Var a, Var b, const Tensor& row_weights) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "weighted_abs_mean");
  if (av.rank() != 2 || row_weights.size() != av.rows()) {
    throw std::invalid_argument("weighted_abs_mean: weight length " +
                                std::to_string(row_weights.size()) + " does not match " +
                                shape_string(av.dims()));
  }
  const double inv_n = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (size_t r = 0; r < av.rows(); ++r)
    for (size_t c = 0; c < av.cols(); ++c) acc += row_weights[r] * std::abs(av(r, c) - bv(r, c));
  Tensor out({1}, std::vector<double>{acc * inv_n});
  return a.tape->record(std::move(out), {a, b},
                        [a, b, w = row_weights, inv_n](const Tensor& g, std::span<Tensor*> in) {
                          const Tensor& av = a.value();
                          const Tensor& bv = b.value();
                          for (size_t r = 0; r < av.rows(); ++r) {
                            for (size_t c = 0; c < av.cols(); ++c) {
                              const double d = av(r, c) - bv(r, c);
                              const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                              const double v = g[0] * w[r] * sign * inv_n;
                              if (in[0]) (*in[0])(r, c) += v;
                              if (in[1]) (*in[1])(r, c) -= v;
                            }
                          }
                        });
}

Var mean_squared_diff(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mean_squared_diff");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const double inv_n = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  Tensor out({1}, std::vector<double>{acc * inv_n});
  return a.tape->record(std::move(out), {a, b}, [a, b, inv_n](const Tensor& g, std::span<Tensor*> in) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) {
      const double v = 2.0 * (av[i] - bv[i]) * inv_n * g[0];
      if (in[0]) (*in[0])[i] += v;
      if (in[1]) (*in[1])[i] -= v;
    }
  });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: need one weight per scalar");
  }
  double acc = 0.0;
  for (size_t i = 0; i < scalars.size(); ++i) {
    require_same_tape(scalars[0], scalars[i]);
    if (scalars[i].value().size() != 1) throw std::invalid_argument("weighted_sum: non-scalar input");
    acc += weights[i] * scalars[i].value()[0];
  }
  Tensor out({1}, std::vector<double>{acc});
  return scalars[0].tape->record(
      std::move(out), std::vector<Var>(scalars.begin(), scalars.end()),
      [w = std::vector<double>(weights.begin(), weights.end())](const Tensor& g,
                                                                std::span<Tensor*> in) {
        for (size_t i = 0; i < w.size(); ++i)
          if (in[i]) (*in[i])[0] += w[i] * g[0];
      });
}

}  // namespace ad

GradCheckReport grad_check(const ScalarFunction& f, std::span<const Tensor> params, double step) {
  if (!(step > 0.0 && step <= 1e-3)) throw std::invalid_argument("grad_check: step must be in (0, 1e-3]");

  auto evaluate = [&](const std::vector<Tensor>& values) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& v : values) vars.push_back(tape.constant(v));
    const double loss = f(tape, vars).value()[0];
    if (!std::isfinite(loss)) throw std::domain_error("grad_check: non-finite loss while probing");
    return loss;
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  Var loss = f(tape, vars);
  if (!std::isfinite(loss.value()[0])) throw std::domain_error("grad_check: non-finite loss");
  tape.backward(loss);

  // Probes run on worker threads, each with its own copy of the parameters;
  // the reduction walks elements in order so the report is deterministic.
  std::vector<std::pair<size_t, size_t>> elements;
  for (size_t p = 0; p < params.size(); ++p)
    for (size_t i = 0; i < params[p].size(); ++i) elements.emplace_back(p, i);
  std::vector<double> numeric(elements.size());
  const size_t workers = std::clamp<size_t>(std::thread::hardware_concurrency(), 1, 64);
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    std::vector<Tensor> probe(params.begin(), params.end());
    try {
      for (size_t e = next++; e < elements.size(); e = next++) {
        const auto [p, i] = elements[e];
        const double original = probe[p][i];
        probe[p][i] = original + step;
        const double up = evaluate(probe);
        probe[p][i] = original - step;
        const double down = evaluate(probe);
        probe[p][i] = original;
        numeric[e] = (up - down) / (2.0 * step);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = elements.size();
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  GradCheckReport report;
  std::vector<Tensor> analytic;
  for (const Var& v : vars) analytic.push_back(tape.grad(v));
  for (size_t e = 0; e < elements.size(); ++e) {
    const auto [p, i] = elements[e];
    const double a = analytic[p][i];
    const double rel = std::abs(a - numeric[e]) / std::max({1.0, std::abs(a), std::abs(numeric[e])});
    if (e == 0 || rel > report.max_relative_error) report = {rel, p, i, a, numeric[e]};
  }
  return report;
}

}  // namespace evdistill
