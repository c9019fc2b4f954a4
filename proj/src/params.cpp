#include "recurnet/params.hpp"

#include <cstring>
#include <fstream>

#include "recurnet/error.hpp"

namespace recurnet {

bool path_in_subtree(const std::string& path, const std::string& root) {
  return path.size() > root.size() && path.compare(0, root.size(), root) == 0 && path[root.size()] == '.';
}

template <typename T>
const Tensor<T>& ParamTree<T>::at(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) fail(ErrorKind::kValidation, "missing parameter leaf " + name);
  return it->second;
}

template <typename T>
Tensor<T>& ParamTree<T>::at(const std::string& name) {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) fail(ErrorKind::kValidation, "missing parameter leaf " + name);
  return it->second;
}

template <typename T>
std::size_t ParamTree<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : leaves_) n += v.size();
  return n;
}

template <typename T>
bool ParamTree<T>::has_subtree(const std::string& root) const {
  auto it = leaves_.lower_bound(root + ".");
  return it != leaves_.end() && path_in_subtree(it->first, root);
}

template <typename T>
ParamTree<T> ParamTree<T>::subtree(const std::string& root) const {
  Map out;
  for (const auto& [k, v] : leaves_)
    if (path_in_subtree(k, root)) out.emplace(k, v);
  return ParamTree(std::move(out));
}

template <typename T>
bool ParamTree<T>::all_finite() const {
  for (const auto& [k, v] : leaves_)
    if (!v.all_finite()) return false;
  return true;
}

template <typename T>
ParamTree<T> ParamTree<T>::zeros_like() const {
  Map out;
  for (const auto& [k, v] : leaves_) out.emplace(k, Tensor<T>(v.shape()));
  return ParamTree(std::move(out));
}

template class ParamTree<float>;
template class ParamTree<double>;

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

// --- checkpoint archive ---------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'N', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  }
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), std::streamsize(n)); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) fail(ErrorKind::kIo, "failed writing " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) fail(ErrorKind::kMissingFile, "missing checkpoint " + path.string());
  }
  void bytes(void* data, std::size_t n) {
    if (!in_.read(static_cast<char*>(data), std::streamsize(n)))
      fail(ErrorKind::kFormat, path_.string() + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) fail(ErrorKind::kFormat, path_.string() + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(checkpoint.fingerprint);
  w.str(checkpoint.config_text);
  w.u32(static_cast<std::uint32_t>(checkpoint.params.leaf_count()));
  for (const auto& [name, t] : checkpoint.params.leaves()) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      w.u32(bits);
    }
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) fail(ErrorKind::kFormat, path.string() + ": not a checkpoint");
  if (r.u32() != kCheckpointVersion) fail(ErrorKind::kFormat, path.string() + ": unsupported checkpoint version");
  Checkpoint ck;
  ck.fingerprint = r.str();
  ck.config_text = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) fail(ErrorKind::kFormat, path.string() + ": implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<float> data(element_count(shape));
    for (auto& v : data) {
      const std::uint32_t bits = r.u32();
      std::memcpy(&v, &bits, 4);
    }
    ck.params.set(name, Tensor<float>(std::move(shape), std::move(data)));
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.fingerprint != expected_fingerprint) {
    fail(ErrorKind::kValidation, "checkpoint fingerprint " + ck.fingerprint +
                                     " does not match the configured network " + expected_fingerprint);
  }
  return ck;
}

void restore_subtrees(ParamTree<float>& target, const ParamTree<float>& source,
                      const std::vector<std::string>& roots) {
  std::string mismatches;
  auto note = [&](const std::string& msg) { mismatches += "\n  " + msg; };
  for (const auto& root : roots) {
    const auto src = source.subtree(root);
    const auto dst = target.subtree(root);
    if (src.leaf_count() == 0) note(root + ": absent from source");
    for (const auto& [name, t] : dst.leaves()) {
      if (!src.contains(name)) {
        note(name + ": absent from source");
      } else if (src.at(name).shape() != t.shape()) {
        note(name + ": source " + shape_string(src.at(name).shape()) + " vs target " + shape_string(t.shape()));
      }
    }
    for (const auto& [name, t] : src.leaves())
      if (!dst.contains(name)) note(name + ": absent from target");
  }
  if (!mismatches.empty()) fail(ErrorKind::kShapeMismatch, "incompatible parameter leaves:" + mismatches);
  for (const auto& root : roots) {
    const auto src = source.subtree(root);
    for (const auto& [name, t] : src.leaves()) target.at(name) = t;
  }
}

}  // namespace recurnet
