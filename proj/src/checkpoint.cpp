#include "unimp/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unimp/errors.hpp"
#include "unimp/io.hpp"

namespace unimp {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host byte order");

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'M', 'P', 'C', 'K', '1'};

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <class T>
  T pod(const char* what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint64_t>(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (n > in_.size() - pos_) throw IntegrityError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.str(ck.config_json);
  w.str(ck.fingerprint);
  for (std::uint64_t v : {ck.seed, ck.epoch, ck.feature_dim, ck.num_classes, ck.edge_dim}) w.pod(v);
  w.pod<std::uint64_t>(ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.pod<std::uint64_t>(t.ndim());
    for (std::size_t d : t.shape()) w.pod<std::uint64_t>(d);
    w.raw(t.data().data(), t.numel() * sizeof(double));
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw IntegrityError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_json = r.str("config");
  ck.fingerprint = r.str("fingerprint");
  ck.seed = r.pod<std::uint64_t>("seed");
  ck.epoch = r.pod<std::uint64_t>("epoch");
  ck.feature_dim = r.pod<std::uint64_t>("feature_dim");
  ck.num_classes = r.pod<std::uint64_t>("num_classes");
  ck.edge_dim = r.pod<std::uint64_t>("edge_dim");
  const auto count = r.pod<std::uint64_t>("tensor count");
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.str("tensor name");
    const auto ndim = r.pod<std::uint64_t>("tensor rank");
    if (ndim > 8) throw IntegrityError("tensor '" + name + "' has implausible rank " + std::to_string(ndim));
    Shape shape;
    for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(r.pod<std::uint64_t>("tensor shape"));
    const std::size_t numel = shape_numel(shape);
    if (numel > bytes.size() / sizeof(double)) throw IntegrityError("checkpoint truncated in tensor '" + name + "'");
    std::vector<double> data(numel);
    r.raw(data.data(), numel * sizeof(double), "tensor data");
    ck.tensors.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw IntegrityError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const IntegrityError& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace unimp
