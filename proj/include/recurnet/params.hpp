#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "recurnet/tensor.hpp"

namespace recurnet {

// Learnable weights keyed by dotted path, e.g. "encoder_flair.level0.conv_d1.kernel".
template <typename T>
class ParamTree {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  ParamTree() = default;
  explicit ParamTree(Map leaves) : leaves_(std::move(leaves)) {}

  void set(const std::string& name, Tensor<T> value) { leaves_[name] = std::move(value); }
  bool contains(const std::string& name) const { return leaves_.contains(name); }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);

  const Map& leaves() const noexcept { return leaves_; }
  Map& leaves() noexcept { return leaves_; }
  std::size_t leaf_count() const noexcept { return leaves_.size(); }
  std::size_t scalar_count() const;
  bool has_subtree(const std::string& root) const;
  // Leaves whose path starts with "root.".
  ParamTree subtree(const std::string& root) const;
  bool all_finite() const;

  // Zero tensors with the same layout.
  ParamTree zeros_like() const;

  template <typename U>
  ParamTree<U> cast() const {
    typename ParamTree<U>::Map out;
    for (const auto& [k, v] : leaves_) out.emplace(k, v.template cast<U>());
    return ParamTree<U>(std::move(out));
  }

  friend bool operator==(const ParamTree&, const ParamTree&) = default;

 private:
  Map leaves_;
};

bool path_in_subtree(const std::string& path, const std::string& root);

// Checkpoint archive: "RNCK" magic, u32 version, length-prefixed config
// fingerprint and config text, u32 leaf count, then per leaf a
// length-prefixed path, u32 rank, u32 dims, float32 payload. Little-endian.
struct Checkpoint {
  std::string fingerprint;
  std::string config_text;
  ParamTree<float> params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Throws when the stored fingerprint differs from `expected_fingerprint`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint);

// Copies every leaf of `source` under the given subtree roots into `target`.
// Shapes must match leaf for leaf; the error lists every mismatched leaf.
void restore_subtrees(ParamTree<float>& target, const ParamTree<float>& source,
                      const std::vector<std::string>& roots);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace recurnet
