#pragma once

#include <functional>
#include <string>

#include "recurnet/graph.hpp"
#include "recurnet/params.hpp"

namespace recurnet {

// Binds named leaves of a parameter tree into a graph on first use.
template <typename T>
class ParamBinder {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  ParamBinder(Graph<T>& graph, const ParamTree<T>& params, Predicate trainable = {})
      : graph_(graph), params_(params), trainable_(std::move(trainable)) {}

  Var operator()(const std::string& name) {
    return graph_.parameter(name, params_.at(name), !trainable_ || trainable_(name));
  }

  Graph<T>& graph() { return graph_; }
  const ParamTree<T>& params() const { return params_; }

 private:
  Graph<T>& graph_;
  const ParamTree<T>& params_;
  Predicate trainable_;
};

}  // namespace recurnet
