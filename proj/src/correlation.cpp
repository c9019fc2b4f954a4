#include "recurnet/correlation.hpp"

#include <algorithm>
#include <cmath>

namespace recurnet {

std::string to_string(Divergence d) {
  switch (d) {
    case Divergence::kKl: return "kl";
    case Divergence::kJeffreys: return "jeffreys";
    case Divergence::kHellinger2: return "hellinger2";
  }
  return "?";
}

std::optional<Divergence> parse_divergence(const std::string& name) {
  if (name == "kl") return Divergence::kKl;
  if (name == "jeffreys") return Divergence::kJeffreys;
  if (name == "hellinger2") return Divergence::kHellinger2;
  return std::nullopt;
}

std::string to_string(CorrelationForm form) {
  switch (form) {
    case CorrelationForm::kNonlinear: return "nonlinear";
    case CorrelationForm::kLinear: return "linear";
    case CorrelationForm::kOff: return "off";
  }
  return "?";
}

std::optional<CorrelationForm> parse_correlation_form(const std::string& name) {
  if (name == "nonlinear") return CorrelationForm::kNonlinear;
  if (name == "linear") return CorrelationForm::kLinear;
  if (name == "off") return CorrelationForm::kOff;
  return std::nullopt;
}

// --- divergences ----------------------------------------------------------

namespace {

void check_lengths(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "divergence: distribution lengths differ (" + std::to_string(p.size()) +
                                    " vs " + std::to_string(q.size()) + ")");
}

double floored(double v) { return std::max(v, kProbabilityFloor); }

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_lengths(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = floored(p[i]), qi = floored(q[i]);
    s += pi * std::log(pi / qi);
  }
  return s;
}

double jeffreys_divergence(std::span<const double> p, std::span<const double> q) {
  check_lengths(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = floored(p[i]), qi = floored(q[i]);
    s += (pi - qi) * (std::log(pi) - std::log(qi));
  }
  return s;
}

double squared_hellinger(std::span<const double> p, std::span<const double> q) {
  check_lengths(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(floored(p[i])) - std::sqrt(floored(q[i]));
    s += 2.0 * d * d;
  }
  return s;
}

double divergence(Divergence kind, std::span<const double> p, std::span<const double> q) {
  switch (kind) {
    case Divergence::kKl: return kl_divergence(p, q);
    case Divergence::kJeffreys: return jeffreys_divergence(p, q);
    case Divergence::kHellinger2: return squared_hellinger(p, q);
  }
  fail(ErrorKind::kValidation, "unknown divergence");
}

void divergence_gradient(Divergence kind, std::span<const double> p, std::span<const double> q,
                         std::span<double> grad_p, std::span<double> grad_q) {
  check_lengths(p, q);
  require(grad_p.size() == p.size() && grad_q.size() == q.size(), "divergence_gradient: size mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool p_live = p[i] > kProbabilityFloor, q_live = q[i] > kProbabilityFloor;
    const double pi = floored(p[i]), qi = floored(q[i]);
    double dp = 0.0, dq = 0.0;
    switch (kind) {
      case Divergence::kKl:
        dp = std::log(pi / qi) + 1.0;
        dq = -pi / qi;
        break;
      case Divergence::kJeffreys: {
        const double lr = std::log(pi) - std::log(qi);
        dp = lr + (pi - qi) / pi;
        dq = -lr - (pi - qi) / qi;
        break;
      }
      case Divergence::kHellinger2: {
        const double d = std::sqrt(pi) - std::sqrt(qi);
        dp = 2.0 * d / std::sqrt(pi);
        dq = -2.0 * d / std::sqrt(qi);
        break;
      }
    }
    grad_p[i] = p_live ? dp : 0.0;
    grad_q[i] = q_live ? dq : 0.0;
  }
}

template <typename T>
std::vector<double> softmax(std::span<const T> values) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double shift = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(double(values[i]) - shift);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

// --- correlation mapping ----------------------------------------------------

namespace {

template <typename T>
void check_weights(const Tensor<T>& f, const Tensor<T>& a, const Tensor<T>* b, const Tensor<T>& c) {
  require(f.rank() == 3, "correlation mapping expects a (C,H,W) feature map");
  const std::size_t ch = f.channels();
  const bool ok = a.size() == ch && c.size() == ch && (!b || b->size() == ch);
  if (!ok) {
    fail(ErrorKind::kShapeMismatch, "correlation weights do not match " + std::to_string(ch) +
                                        " feature channels");
  }
}

}  // namespace

template <typename T>
Tensor<T> apply_nonlinear_correlation(const Tensor<T>& f, const CorrelationWeights<T>& w) {
  check_weights(f, w.alpha, &w.beta, w.gamma);
  const std::size_t c = f.channels(), n = f.plane();
  Tensor<T> g(f.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T a = w.alpha[ch], b = w.beta[ch], k = w.gamma[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const T x = f[ch * n + i];
      g[ch * n + i] = (a * x * x + b * x) + k;
    }
  }
  return g;
}

template <typename T>
Tensor<T> apply_linear_correlation(const Tensor<T>& f, const CorrelationWeights<T>& w) {
  check_weights(f, w.alpha, static_cast<const Tensor<T>*>(nullptr), w.gamma);
  const std::size_t c = f.channels(), n = f.plane();
  Tensor<T> g(f.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T a = w.alpha[ch], k = w.gamma[ch];
    for (std::size_t i = 0; i < n; ++i) g[ch * n + i] = a * f[ch * n + i] + k;
  }
  return g;
}

template <typename T>
FeatureDistribution feature_to_distribution(const Tensor<T>& f) {
  require(f.all_finite(), "feature_to_distribution: non-finite feature");
  return {softmax<T>(f.values())};
}

CorrelationEstimatorNames::CorrelationEstimatorNames(const std::string& prefix)
    : fc1_weight(prefix + ".fc1.weight"),
      fc1_bias(prefix + ".fc1.bias"),
      fc2_weight(prefix + ".fc2.weight"),
      fc2_bias(prefix + ".fc2.bias") {}

template <typename T>
CorrelationVars<T> estimate_correlation_weights(Graph<T>& g, Var f, Var fc1_w, Var fc1_b, Var fc2_w,
                                                Var fc2_b) {
  const std::size_t c = g.value(f).channels();
  require(g.value(fc2_w).rank() == 2 && g.value(fc2_w).dim(0) == 3 * c,
          "correlation estimator head must have 3C outputs");
  Var pooled = g.global_avg_pool(f);
  Var hidden = g.silu(g.linear(pooled, fc1_w, fc1_b));
  Var head = g.linear(hidden, fc2_w, fc2_b);
  return {g.slice(head, 0, c), g.slice(head, c, c), g.slice(head, 2 * c, c)};
}

template <typename T>
Var map_correlated_feature(Graph<T>& g, Var f, const CorrelationVars<T>& w, CorrelationForm form) {
  switch (form) {
    case CorrelationForm::kNonlinear: return g.channel_quadratic(f, w.alpha, w.beta, w.gamma);
    case CorrelationForm::kLinear: return g.channel_affine(f, w.alpha, w.gamma);
    case CorrelationForm::kOff: break;
  }
  fail(ErrorKind::kValidation, "correlation mapping requested with correlation.form=off");
}

template <typename T>
Var correlation_loss(Graph<T>& g, Var f_flair, Var f_t1c, Var g_flair, Var g_t1c, Divergence kind) {
  const auto& s = g.value(f_flair).shape();
  require(g.value(f_t1c).shape() == s && g.value(g_flair).shape() == s && g.value(g_t1c).shape() == s,
          "correlation_loss: feature shapes differ");
  Var first = g.divergence(g.softmax(f_t1c), g.softmax(g_flair), kind);
  Var second = g.divergence(g.softmax(f_flair), g.softmax(g_t1c), kind);
  const std::pair<Var, double> terms[] = {{first, 1.0}, {second, 1.0}};
  return g.weighted_sum(terms);
}

template <typename T>
double correlation_loss(const Tensor<T>& f_flair, const Tensor<T>& f_t1c, const Tensor<T>& g_flair,
                        const Tensor<T>& g_t1c, Divergence kind) {
  const auto& s = f_flair.shape();
  require(f_t1c.shape() == s && g_flair.shape() == s && g_t1c.shape() == s,
          "correlation_loss: feature shapes differ");
  return divergence(kind, feature_to_distribution(f_t1c).probs, feature_to_distribution(g_flair).probs) +
         divergence(kind, feature_to_distribution(f_flair).probs, feature_to_distribution(g_t1c).probs);
}

#define RECURNET_INSTANTIATE(T)                                                                       \
  template std::vector<double> softmax<T>(std::span<const T>);                                       \
  template Tensor<T> apply_nonlinear_correlation(const Tensor<T>&, const CorrelationWeights<T>&);     \
  template Tensor<T> apply_linear_correlation(const Tensor<T>&, const CorrelationWeights<T>&);        \
  template FeatureDistribution feature_to_distribution(const Tensor<T>&);                             \
  template CorrelationVars<T> estimate_correlation_weights(Graph<T>&, Var, Var, Var, Var, Var);       \
  template Var map_correlated_feature(Graph<T>&, Var, const CorrelationVars<T>&, CorrelationForm);    \
  template Var correlation_loss(Graph<T>&, Var, Var, Var, Var, Divergence);                           \
  template double correlation_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                   const Tensor<T>&, Divergence);

RECURNET_INSTANTIATE(float)
RECURNET_INSTANTIATE(double)

#undef RECURNET_INSTANTIATE

}  // namespace recurnet
