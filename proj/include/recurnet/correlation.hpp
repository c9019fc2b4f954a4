#pragma once

#include <optional>
#include <string>
#include <vector>

#include "recurnet/divergence.hpp"
#include "recurnet/graph.hpp"
#include "recurnet/tensor.hpp"

namespace recurnet {

enum class CorrelationForm { kNonlinear, kLinear, kOff };

std::string to_string(CorrelationForm form);
std::optional<CorrelationForm> parse_correlation_form(const std::string& name);

// Per-channel coefficients, broadcast over spatial positions. `beta` is empty
// for the linear form.
template <typename T>
struct CorrelationWeights {
  Tensor<T> alpha;
  Tensor<T> beta;
  Tensor<T> gamma;
};

// G = alpha * F^2 + beta * F + gamma
template <typename T>
Tensor<T> apply_nonlinear_correlation(const Tensor<T>& f, const CorrelationWeights<T>& w);
// G = alpha * F + gamma
template <typename T>
Tensor<T> apply_linear_correlation(const Tensor<T>& f, const CorrelationWeights<T>& w);

// Softmax over all C*H*W entries; positive and summing to one.
struct FeatureDistribution {
  std::vector<double> probs;
};

template <typename T>
FeatureDistribution feature_to_distribution(const Tensor<T>& f);

// Parameter names of one modality's weight estimator under `prefix`:
// fc1.weight (C,C), fc1.bias (C), fc2.weight (3C,C), fc2.bias (3C).
struct CorrelationEstimatorNames {
  std::string fc1_weight, fc1_bias, fc2_weight, fc2_bias;
  explicit CorrelationEstimatorNames(const std::string& prefix);
};

template <typename T>
struct CorrelationVars {
  Var alpha, beta, gamma;
};

// Global average pooling -> fc (C) -> SiLU -> fc (3C), split into alpha, beta, gamma.
template <typename T>
CorrelationVars<T> estimate_correlation_weights(Graph<T>& g, Var f, Var fc1_w, Var fc1_b, Var fc2_w,
                                                Var fc2_b);

// Applies the mapping for `form` (must not be kOff).
template <typename T>
Var map_correlated_feature(Graph<T>& g, Var f, const CorrelationVars<T>& w, CorrelationForm form);

// D(P(F_t1c) || Q(G_flair)) + D(P(F_flair) || Q(G_t1c))
template <typename T>
Var correlation_loss(Graph<T>& g, Var f_flair, Var f_t1c, Var g_flair, Var g_t1c, Divergence kind);

// Same quantity on plain tensors.
template <typename T>
double correlation_loss(const Tensor<T>& f_flair, const Tensor<T>& f_t1c, const Tensor<T>& g_flair,
                        const Tensor<T>& g_t1c, Divergence kind);

}  // namespace recurnet
