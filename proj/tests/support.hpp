#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "recurnet/binder.hpp"
#include "recurnet/data_model.hpp"
#include "recurnet/random.hpp"

namespace recurnet::test {

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline Mask random_mask(std::size_t h, std::size_t w, Rng& rng, double p = 0.3) {
  Mask m(h, w);
  for (auto& v : m.pixels) v = rng.uniform() < p ? 1 : 0;
  return m;
}

// Relative error as used by every gradient check.
inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Elements to probe in a tensor of `n` entries: all of them when small,
// otherwise a seeded sample.
inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx;
  if (n <= limit) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
  } else {
    for (std::size_t i = 0; i < limit; ++i) idx.push_back(rng.below(n));
  }
  return idx;
}

// `build` maps graph variables for `inputs` to a scalar Var. Non-scalar
// outputs should be projected with Graph::dot before returning.
using BuildFn = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

inline GradReport check_input_gradients(std::vector<Tensor<double>> inputs, const BuildFn& build,
                                        std::size_t limit = 48, double h = 1e-5, std::uint64_t seed = 7) {
  auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(g.constant(x));
    return g.value(build(g, vars))[0];
  };
  Graph<double> g;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(g.variable(x));
  const Var out = build(g, vars);
  g.backward(out);
  GradReport rep;
  Rng rng(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& grad = g.grad(vars[k]);
    for (std::size_t i : probe_indices(inputs[k].size(), limit, rng)) {
      const double a = grad.size() ? grad[i] : 0.0;
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = evaluate(inputs);
      inputs[k][i] = orig - h;
      const double down = evaluate(inputs);
      inputs[k][i] = orig;
      const double n = (up - down) / (2 * h);
      const double e = rel_error(a, n);
      ++rep.checked;
      if (e > rep.max_rel_error) {
        rep.max_rel_error = e;
        rep.worst = "input " + std::to_string(k) + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                    " numeric " + std::to_string(n);
      }
    }
  }
  return rep;
}

using ParamBuildFn = std::function<Var(ParamBinder<double>&)>;

// Same check over the leaves of a parameter tree.
inline GradReport check_param_gradients(ParamTree<double> params, const ParamBuildFn& build, std::size_t per_leaf = 6,
                                        double h = 1e-5, std::uint64_t seed = 11) {
  auto evaluate = [&](const ParamTree<double>& p) {
    Graph<double> g;
    ParamBinder<double> b(g, p);
    return g.value(build(b))[0];
  };
  std::map<std::string, Tensor<double>> grads;
  {
    Graph<double> g;
    ParamBinder<double> b(g, params);
    g.backward(build(b));
    grads = g.parameter_gradients();
  }
  GradReport rep;
  Rng rng(seed);
  for (auto& [name, leaf] : params.leaves()) {
    const auto it = grads.find(name);
    for (std::size_t i : probe_indices(leaf.size(), per_leaf, rng)) {
      const double a = it == grads.end() ? 0.0 : it->second[i];
      const double orig = leaf[i];
      leaf[i] = orig + h;
      const double up = evaluate(params);
      leaf[i] = orig - h;
      const double down = evaluate(params);
      leaf[i] = orig;
      const double n = (up - down) / (2 * h);
      const double e = rel_error(a, n);
      ++rep.checked;
      if (e > rep.max_rel_error) {
        rep.max_rel_error = e;
        rep.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                    std::to_string(n);
      }
    }
  }
  return rep;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("recurnet-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace recurnet::test
