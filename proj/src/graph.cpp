#include "recurnet/graph.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "recurnet/correlation.hpp"
#include "recurnet/losses.hpp"

namespace recurnet {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

template <typename T>
T logistic(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, std::span<const Var> parents, std::function<void()> backward) {
  Node node;
  node.value = std::move(value);
  for (Var p : parents) node.needs_grad = node.needs_grad || nodes_.at(p.id).needs_grad;
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, std::initializer_list<Var> parents, std::function<void()> backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::variable(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::parameter(const std::string& name, const Tensor<T>& value, bool trainable) {
  if (auto it = params_.find(name); it != params_.end()) return Var{it->second.first};
  nodes_.push_back(Node{value, {}, trainable, {}});
  params_.emplace(name, std::make_pair(nodes_.size() - 1, trainable));
  return Var{nodes_.size() - 1};
}

template <typename T>
void Graph<T>::backward(Var root) {
  require(value(root).size() == 1, "backward: root must be a scalar");
  if (!nodes_[root.id].needs_grad) return;
  grad_buffer(root.id)[0] = T(1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward();
  }
}

template <typename T>
std::map<std::string, Tensor<T>> Graph<T>::parameter_gradients() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, entry] : params_) {
    if (!entry.second) continue;
    const Node& n = nodes_[entry.first];
    out.emplace(name, n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad);
  }
  return out;
}

// --- operations ---------------------------------------------------------

template <typename T>
Var Graph<T>::conv2d(Var x, Var kernel, Var bias, const ConvGeometry& geom) {
  const std::size_t out = nodes_.size();
  auto y = conv2d_forward(value(x), value(kernel), value(bias), geom);
  return push(std::move(y), {x, kernel, bias}, [this, out, x, kernel, bias, geom] {
    conv2d_backward(nodes_[x.id].value, nodes_[kernel.id].value, nodes_[out].grad, geom,
                    wants(x.id) ? &grad_buffer(x.id) : nullptr,
                    wants(kernel.id) ? &grad_buffer(kernel.id) : nullptr,
                    wants(bias.id) ? &grad_buffer(bias.id) : nullptr);
  });
}

template <typename T>
Var Graph<T>::instance_norm(Var x, Var gain, Var shift, double eps) {
  const auto& in = value(x);
  require(in.rank() == 3, "instance_norm expects (C,H,W)");
  const std::size_t c = in.channels(), n = in.plane();
  require(value(gain).size() == c && value(shift).size() == c, "instance_norm: parameter size mismatch");
  Tensor<T> xhat(in.shape());
  std::vector<double> inv_std(c);
  Tensor<T> y(in.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = in.data() + ch * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= double(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= double(n);
    inv_std[ch] = 1.0 / std::sqrt(var + eps);
    const double g = value(gain)[ch], b = value(shift)[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (src[i] - mean) * inv_std[ch];
      xhat[ch * n + i] = static_cast<T>(h);
      y[ch * n + i] = static_cast<T>(g * h + b);
    }
  }
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x, gain, shift},
              [this, out, x, gain, shift, xhat = std::move(xhat), inv_std = std::move(inv_std), c, n] {
                const auto& dy = nodes_[out].grad;
                const auto& g = nodes_[gain.id].value;
                for (std::size_t ch = 0; ch < c; ++ch) {
                  double sum_dy = 0.0, sum_dy_h = 0.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    sum_dy += dy[ch * n + i];
                    sum_dy_h += double(dy[ch * n + i]) * xhat[ch * n + i];
                  }
                  if (wants(gain.id)) grad_buffer(gain.id)[ch] += static_cast<T>(sum_dy_h);
                  if (wants(shift.id)) grad_buffer(shift.id)[ch] += static_cast<T>(sum_dy);
                  if (wants(x.id)) {
                    auto& dx = grad_buffer(x.id);
                    const double gch = g[ch];
                    const double k = gch * inv_std[ch] / double(n);
                    for (std::size_t i = 0; i < n; ++i) {
                      dx[ch * n + i] += static_cast<T>(
                          k * (double(n) * dy[ch * n + i] - sum_dy - xhat[ch * n + i] * sum_dy_h));
                    }
                  }
                }
              });
}

template <typename T>
Var Graph<T>::silu(Var x) {
  const auto& in = value(x);
  Tensor<T> y(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] * logistic(in[i]);
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x}, [this, out, x] {
    const auto& in = nodes_[x.id].value;
    const auto& dy = nodes_[out].grad;
    auto& dx = grad_buffer(x.id);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const T s = logistic(in[i]);
      dx[i] += dy[i] * s * (T(1) + in[i] * (T(1) - s));
    }
  });
}

template <typename T>
Var Graph<T>::sigmoid(Var x) {
  const auto& in = value(x);
  Tensor<T> y(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = logistic(in[i]);
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x}, [this, out, x] {
    const auto& y = nodes_[out].value;
    const auto& dy = nodes_[out].grad;
    auto& dx = grad_buffer(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  require_same_shape(value(a).shape(), value(b).shape(), "add");
  Tensor<T> y = value(a);
  const auto& vb = value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += vb[i];
  const std::size_t out = nodes_.size();
  return push(std::move(y), {a, b}, [this, out, a, b] {
    const auto& dy = nodes_[out].grad;
    for (Var v : {a, b}) {
      if (!wants(v.id)) continue;
      auto& d = grad_buffer(v.id);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

template <typename T>
Var Graph<T>::scale(Var a, double factor) {
  Tensor<T> y = value(a);
  for (auto& v : y.values()) v = static_cast<T>(v * factor);
  const std::size_t out = nodes_.size();
  return push(std::move(y), {a}, [this, out, a, factor] {
    const auto& dy = nodes_[out].grad;
    auto& d = grad_buffer(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i) d[i] += static_cast<T>(dy[i] * factor);
  });
}

template <typename T>
Var Graph<T>::concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const auto& first = value(parts[0]);
  require(first.rank() == 3, "concat_channels expects (C,H,W) inputs");
  std::size_t channels = 0;
  for (Var p : parts) {
    const auto& v = value(p);
    require(v.rank() == 3 && v.height() == first.height() && v.width() == first.width(),
            "concat_channels: spatial shape mismatch " + shape_string(v.shape()) + " vs " +
                shape_string(first.shape()));
    channels += v.channels();
  }
  Tensor<T> y(chw(channels, first.height(), first.width()));
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = value(p);
    std::copy(v.data(), v.data() + v.size(), y.data() + offset);
    offset += v.size();
  }
  const std::size_t out = nodes_.size();
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(y), parts, [this, out, ps] {
    const auto& dy = nodes_[out].grad;
    std::size_t offset = 0;
    for (Var p : ps) {
      const std::size_t n = nodes_[p.id].value.size();
      if (wants(p.id)) {
        auto& d = grad_buffer(p.id);
        for (std::size_t i = 0; i < n; ++i) d[i] += dy[offset + i];
      }
      offset += n;
    }
  });
}

template <typename T>
Var Graph<T>::upsample2(Var x) {
  const auto& in = value(x);
  require(in.rank() == 3, "upsample2 expects (C,H,W)");
  const std::size_t c = in.channels(), h = in.height(), w = in.width();
  Tensor<T> y(chw(c, 2 * h, 2 * w));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) y.at(ch, yy, xx) = in.at(ch, yy / 2, xx / 2);
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x}, [this, out, x, c, h, w] {
    const auto& dy = nodes_[out].grad;
    auto& dx = grad_buffer(x.id);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t yy = 0; yy < 2 * h; ++yy)
        for (std::size_t xx = 0; xx < 2 * w; ++xx) dx.at(ch, yy / 2, xx / 2) += dy.at(ch, yy, xx);
  });
}

template <typename T>
Var Graph<T>::mul_spatial(Var f, Var attention) {
  const auto& fv = value(f);
  const auto& av = value(attention);
  require(fv.rank() == 3 && av.rank() == 3 && av.channels() == 1 && av.height() == fv.height() &&
              av.width() == fv.width(),
          "mul_spatial: attention must be (1,H,W) matching the feature map");
  const std::size_t c = fv.channels(), n = fv.plane();
  Tensor<T> y(fv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) y[ch * n + i] = fv[ch * n + i] * av[i];
  const std::size_t out = nodes_.size();
  return push(std::move(y), {f, attention}, [this, out, f, attention, c, n] {
    const auto& dy = nodes_[out].grad;
    const auto& fv = nodes_[f.id].value;
    const auto& av = nodes_[attention.id].value;
    if (wants(f.id)) {
      auto& df = grad_buffer(f.id);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) df[ch * n + i] += dy[ch * n + i] * av[i];
    }
    if (wants(attention.id)) {
      auto& da = grad_buffer(attention.id);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[ch * n + i] * fv[ch * n + i];
    }
  });
}

template <typename T>
Var Graph<T>::mul_channel(Var f, Var weights) {
  const auto& fv = value(f);
  const auto& wv = value(weights);
  require(fv.rank() == 3 && wv.size() == fv.channels(), "mul_channel: weight count must equal channels");
  const std::size_t c = fv.channels(), n = fv.plane();
  Tensor<T> y(fv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) y[ch * n + i] = fv[ch * n + i] * wv[ch];
  const std::size_t out = nodes_.size();
  return push(std::move(y), {f, weights}, [this, out, f, weights, c, n] {
    const auto& dy = nodes_[out].grad;
    const auto& fv = nodes_[f.id].value;
    const auto& wv = nodes_[weights.id].value;
    if (wants(f.id)) {
      auto& df = grad_buffer(f.id);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) df[ch * n + i] += dy[ch * n + i] * wv[ch];
    }
    if (wants(weights.id)) {
      auto& dw = grad_buffer(weights.id);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += double(dy[ch * n + i]) * fv[ch * n + i];
        dw[ch] += static_cast<T>(s);
      }
    }
  });
}

template <typename T>
Var Graph<T>::global_avg_pool(Var f) {
  const auto& fv = value(f);
  require(fv.rank() == 3, "global_avg_pool expects (C,H,W)");
  const std::size_t c = fv.channels(), n = fv.plane();
  Tensor<T> y(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += fv[ch * n + i];
    y[ch] = static_cast<T>(s / double(n));
  }
  const std::size_t out = nodes_.size();
  return push(std::move(y), {f}, [this, out, f, c, n] {
    const auto& dy = nodes_[out].grad;
    auto& df = grad_buffer(f.id);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T g = static_cast<T>(dy[ch] / double(n));
      for (std::size_t i = 0; i < n; ++i) df[ch * n + i] += g;
    }
  });
}

template <typename T>
Var Graph<T>::global_max_pool(Var f) {
  const auto& fv = value(f);
  require(fv.rank() == 3, "global_max_pool expects (C,H,W)");
  const std::size_t c = fv.channels(), n = fv.plane();
  Tensor<T> y(Shape{c});
  std::vector<std::size_t> arg(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (fv[ch * n + i] > fv[ch * n + best]) best = i;
    arg[ch] = ch * n + best;
    y[ch] = fv[arg[ch]];
  }
  const std::size_t out = nodes_.size();
  return push(std::move(y), {f}, [this, out, f, arg = std::move(arg)] {
    const auto& dy = nodes_[out].grad;
    auto& df = grad_buffer(f.id);
    for (std::size_t ch = 0; ch < arg.size(); ++ch) df[arg[ch]] += dy[ch];
  });
}

template <typename T>
Var Graph<T>::linear(Var x, Var weight, Var bias) {
  const auto& xv = value(x);
  const auto& wv = value(weight);
  const auto& bv = value(bias);
  require(wv.rank() == 2 && wv.dim(1) == xv.size() && bv.size() == wv.dim(0),
          "linear: weight " + shape_string(wv.shape()) + " incompatible with input of size " +
              std::to_string(xv.size()));
  const std::size_t m = wv.dim(0), n = wv.dim(1);
  Tensor<T> y(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    double s = bv[r];
    for (std::size_t k = 0; k < n; ++k) s += double(wv[r * n + k]) * xv[k];
    y[r] = static_cast<T>(s);
  }
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x, weight, bias}, [this, out, x, weight, bias, m, n] {
    const auto& dy = nodes_[out].grad;
    const auto& xv = nodes_[x.id].value;
    const auto& wv = nodes_[weight.id].value;
    if (wants(bias.id)) {
      auto& db = grad_buffer(bias.id);
      for (std::size_t r = 0; r < m; ++r) db[r] += dy[r];
    }
    if (wants(weight.id)) {
      auto& dw = grad_buffer(weight.id);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t k = 0; k < n; ++k) dw[r * n + k] += dy[r] * xv[k];
    }
    if (wants(x.id)) {
      auto& dx = grad_buffer(x.id);
      for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < m; ++r) s += double(dy[r]) * wv[r * n + k];
        dx[k] += static_cast<T>(s);
      }
    }
  });
}

template <typename T>
Var Graph<T>::slice(Var x, std::size_t begin, std::size_t count) {
  const auto& xv = value(x);
  require(begin + count <= xv.size(), "slice out of range");
  Tensor<T> y(Shape{count});
  std::copy(xv.data() + begin, xv.data() + begin + count, y.data());
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x}, [this, out, x, begin, count] {
    const auto& dy = nodes_[out].grad;
    auto& dx = grad_buffer(x.id);
    for (std::size_t i = 0; i < count; ++i) dx[begin + i] += dy[i];
  });
}

template <typename T>
Var Graph<T>::channel_quadratic(Var f, Var a, Var b, Var c) {
  const auto& fv = value(f);
  CorrelationWeights<T> w{value(a), value(b), value(c)};
  Tensor<T> y = apply_nonlinear_correlation(fv, w);
  const std::size_t channels = fv.channels(), n = fv.plane();
  const std::size_t out = nodes_.size();
  return push(std::move(y), {f, a, b, c}, [this, out, f, a, b, c, channels, n] {
    const auto& dy = nodes_[out].grad;
    const auto& fv = nodes_[f.id].value;
    const auto& av = nodes_[a.id].value;
    const auto& bv = nodes_[b.id].value;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double sa = 0.0, sb = 0.0, sc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dy[ch * n + i], x = fv[ch * n + i];
        sa += g * x * x;
        sb += g * x;
        sc += g;
      }
      if (wants(a.id)) grad_buffer(a.id)[ch] += static_cast<T>(sa);
      if (wants(b.id)) grad_buffer(b.id)[ch] += static_cast<T>(sb);
      if (wants(c.id)) grad_buffer(c.id)[ch] += static_cast<T>(sc);
      if (wants(f.id)) {
        auto& df = grad_buffer(f.id);
        for (std::size_t i = 0; i < n; ++i)
          df[ch * n + i] += dy[ch * n + i] * (T(2) * av[ch] * fv[ch * n + i] + bv[ch]);
      }
    }
  });
}

template <typename T>
Var Graph<T>::channel_affine(Var f, Var a, Var c) {
  const auto& fv = value(f);
  CorrelationWeights<T> w{value(a), Tensor<T>(), value(c)};
  Tensor<T> y = apply_linear_correlation(fv, w);
  const std::size_t channels = fv.channels(), n = fv.plane();
  const std::size_t out = nodes_.size();
  return push(std::move(y), {f, a, c}, [this, out, f, a, c, channels, n] {
    const auto& dy = nodes_[out].grad;
    const auto& fv = nodes_[f.id].value;
    const auto& av = nodes_[a.id].value;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double sa = 0.0, sc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sa += double(dy[ch * n + i]) * fv[ch * n + i];
        sc += dy[ch * n + i];
      }
      if (wants(a.id)) grad_buffer(a.id)[ch] += static_cast<T>(sa);
      if (wants(c.id)) grad_buffer(c.id)[ch] += static_cast<T>(sc);
      if (wants(f.id)) {
        auto& df = grad_buffer(f.id);
        for (std::size_t i = 0; i < n; ++i) df[ch * n + i] += dy[ch * n + i] * av[ch];
      }
    }
  });
}

template <typename T>
Var Graph<T>::softmax(Var x) {
  const auto& xv = value(x);
  const auto probs = recurnet::softmax<T>(xv.values());
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<T>(probs[i]);
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x}, [this, out, x] {
    const auto& y = nodes_[out].value;
    const auto& dy = nodes_[out].grad;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += double(dy[i]) * y[i];
    auto& dx = grad_buffer(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += static_cast<T>(y[i] * (dy[i] - s));
  });
}

template <typename T>
Var Graph<T>::divergence(Var p, Var q, Divergence kind) {
  require(value(p).size() == value(q).size(), "divergence: distribution lengths differ");
  const std::vector<double> pv(value(p).values().begin(), value(p).values().end());
  const std::vector<double> qv(value(q).values().begin(), value(q).values().end());
  Tensor<T> y(Shape{1});
  y[0] = static_cast<T>(recurnet::divergence(kind, pv, qv));
  const std::size_t out = nodes_.size();
  return push(std::move(y), {p, q}, [this, out, p, q, kind, pv, qv] {
    std::vector<double> gp(pv.size()), gq(qv.size());
    divergence_gradient(kind, pv, qv, gp, gq);
    const double dy = nodes_[out].grad[0];
    if (wants(p.id)) {
      auto& d = grad_buffer(p.id);
      for (std::size_t i = 0; i < gp.size(); ++i) d[i] += static_cast<T>(dy * gp[i]);
    }
    if (wants(q.id)) {
      auto& d = grad_buffer(q.id);
      for (std::size_t i = 0; i < gq.size(); ++i) d[i] += static_cast<T>(dy * gq[i]);
    }
  });
}

template <typename T>
Var Graph<T>::dice_loss(Var prob, const Tensor<T>& target, double epsilon) {
  const auto& pv = value(prob);
  require(pv.size() == target.size(), "dice_loss: probability map and mask shapes differ");
  Tensor<T> y(Shape{1});
  y[0] = static_cast<T>(recurnet::dice_loss<T>(pv.values(), target.values(), epsilon));
  const std::size_t out = nodes_.size();
  return push(std::move(y), {prob}, [this, out, prob, target, epsilon] {
    const auto& pv = nodes_[prob.id].value;
    std::vector<T> g(pv.size());
    dice_loss_gradient<T>(pv.values(), target.values(), epsilon, g);
    const T dy = nodes_[out].grad[0];
    auto& d = grad_buffer(prob.id);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += dy * g[i];
  });
}

template <typename T>
Var Graph<T>::weighted_sum(std::span<const std::pair<Var, double>> terms) {
  double s = 0.0;
  std::vector<Var> parents;
  for (const auto& [v, w] : terms) {
    require(value(v).size() == 1, "weighted_sum expects scalar terms");
    s += w * double(value(v)[0]);
    parents.push_back(v);
  }
  Tensor<T> y(Shape{1});
  y[0] = static_cast<T>(s);
  const std::size_t out = nodes_.size();
  std::vector<std::pair<Var, double>> ts(terms.begin(), terms.end());
  return push(std::move(y), std::span<const Var>(parents), [this, out, ts] {
    const double dy = nodes_[out].grad[0];
    for (const auto& [v, w] : ts)
      if (wants(v.id)) grad_buffer(v.id)[0] += static_cast<T>(dy * w);
  });
}

template <typename T>
Var Graph<T>::dot(Var x, const Tensor<T>& r) {
  const auto& xv = value(x);
  require(xv.size() == r.size(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += double(xv[i]) * r[i];
  Tensor<T> y(Shape{1});
  y[0] = static_cast<T>(s);
  const std::size_t out = nodes_.size();
  return push(std::move(y), {x}, [this, out, x, r] {
    const T dy = nodes_[out].grad[0];
    auto& dx = grad_buffer(x.id);
    for (std::size_t i = 0; i < r.size(); ++i) dx[i] += dy * r[i];
  });
}

template class Graph<float>;
template class Graph<double>;

}  // namespace recurnet
