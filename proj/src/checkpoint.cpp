#include "vidode/checkpoint.hpp"

#include "vidode/config.hpp"
#include "vidode/errors.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace vidode {

namespace {

constexpr char kMagic[8] = {'V', 'I', 'D', 'O', 'D', 'E', 'C', 'K'};
constexpr std::uint64_t kMaxCount = 1ull << 32;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void array(const NamedArray& a) {
    str(a.name);
    pod<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) pod<std::int32_t>(d);
    pod<std::uint64_t>(a.values.size());
    out_.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(double));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::size_t offset() const { return pos_; }

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("truncated checkpoint", pos_);
  }
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint64_t count(std::uint64_t elem_size) {
    const std::size_t at = pos_;
    const auto n = pod<std::uint64_t>();
    if (n > kMaxCount || n * elem_size > in_.size() - pos_) throw CheckpointError("truncated checkpoint", at);
    return n;
  }
  std::string str() {
    const auto n = count(1);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  NamedArray array() {
    NamedArray a;
    a.name = str();
    const std::size_t at = pos_;
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError("implausible tensor rank " + std::to_string(rank), at);
    std::uint64_t expect = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::size_t dim_at = pos_;
      const auto d = pod<std::int32_t>();
      if (d < 0) throw CheckpointError("negative dimension", dim_at);
      a.shape.push_back(d);
      expect *= static_cast<std::uint64_t>(d);
    }
    const std::size_t count_at = pos_;
    const auto n = count(sizeof(double));
    if (n != expect) throw CheckpointError("tensor '" + a.name + "' size does not match its shape", count_at);
    a.values.resize(n);
    std::memcpy(a.values.data(), in_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return a;
  }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  if (c.adam_m.size() != c.parameters.size() || c.adam_v.size() != c.parameters.size()) {
    throw ValidationError("checkpoint: optimizer state does not match parameters");
  }
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(c.version);
  w.pod<std::int64_t>(c.step);
  w.str(c.config);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.parameters.size()));
  for (const auto& a : c.parameters) w.array(a);
  w.pod<std::int64_t>(c.adam_t);
  for (const auto& a : c.adam_m) w.array(a);
  for (const auto& a : c.adam_v) w.array(a);
  w.str(c.rng_state);
  w.pod<std::uint64_t>(fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a vidode checkpoint", 0);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.pod<char>();

  Checkpoint c;
  const std::size_t version_at = r.offset();
  c.version = r.pod<std::uint32_t>();
  if (c.version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.version) + " (expected " +
                              std::to_string(Checkpoint::kVersion) + ")",
                          version_at);
  }
  c.step = r.pod<std::int64_t>();
  c.config = r.str();
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) c.parameters.push_back(r.array());
  c.adam_t = r.pod<std::int64_t>();
  for (std::uint32_t i = 0; i < n; ++i) c.adam_m.push_back(r.array());
  for (std::uint32_t i = 0; i < n; ++i) c.adam_v.push_back(r.array());
  c.rng_state = r.str();
  const std::size_t body = r.offset();
  const auto checksum = r.pod<std::uint64_t>();
  if (checksum != fnv1a64(bytes.substr(0, body))) throw CheckpointError("checksum mismatch", body);
  if (r.offset() != bytes.size()) throw CheckpointError("trailing bytes after checkpoint", r.offset());
  for (std::uint32_t i = 0; i < n; ++i) {
    if (c.adam_m[i].shape != c.parameters[i].shape || c.adam_v[i].shape != c.parameters[i].shape) {
      throw CheckpointError("optimizer state shape mismatch for '" + c.parameters[i].name + "'", body);
    }
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace vidode
