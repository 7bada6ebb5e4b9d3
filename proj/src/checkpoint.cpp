#include "lan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lan {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint8_t kF32 = 0;
constexpr std::uint8_t kU64 = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) fail("truncated file");
    return value;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 26)) fail("implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("truncated string");
    return s;
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw CheckpointError(path_ + ": " + why);
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void Checkpoint::put(const std::string& name, const Matrix& value) {
  if (!tensors_.count(name) && !keys_.count(name)) order_.push_back(name);
  tensors_[name] = value;
}

void Checkpoint::put_keys(const std::string& name, const std::vector<std::uint64_t>& keys) {
  if (!tensors_.count(name) && !keys_.count(name)) order_.push_back(name);
  keys_[name] = keys;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
  return it->second;
}

const std::vector<std::uint64_t>& Checkpoint::keys(const std::string& name) const {
  auto it = keys_.find(name);
  if (it == keys_.end()) throw CheckpointError("checkpoint lacks key list '" + name + "'");
  return it->second;
}

std::vector<std::string> Checkpoint::tensor_names() const { return order_; }

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod(kVersion);
  w.pod(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    w.str(k);
    w.str(v);
  }
  w.pod(static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    w.str(name);
    if (auto it = tensors_.find(name); it != tensors_.end()) {
      const Matrix& m = it->second;
      w.pod(kF32);
      w.pod(static_cast<std::uint64_t>(m.rows()));
      w.pod(static_cast<std::uint64_t>(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.pod(static_cast<float>(m(i, j)));
    } else {
      const auto& keys = keys_.at(name);
      w.pod(kU64);
      w.pod(static_cast<std::uint64_t>(keys.size()));
      w.pod(std::uint64_t{1});
      for (auto k : keys) w.pod(k);
    }
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint ck;
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ck.metadata[k] = r.str();
  }
  const auto n_tensors = r.pod<std::uint32_t>();
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    std::string name = r.str();
    const auto dtype = r.pod<std::uint8_t>();
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    if (rows > (1ULL << 32) || cols > (1ULL << 20)) r.fail("implausible shape for " + name);
    if (dtype == kF32) {
      Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.pod<float>();
      ck.put(name, m);
    } else if (dtype == kU64) {
      if (cols != 1) r.fail("key list " + name + " must have one column");
      std::vector<std::uint64_t> keys(rows);
      for (auto& k : keys) k = r.pod<std::uint64_t>();
      ck.put_keys(name, keys);
    } else {
      r.fail("unknown dtype for " + name);
    }
  }
  return ck;
}

void Checkpoint::restore_params(ParamStore& params) const {
  for (ParamId id = 0; id < params.size(); ++id) {
    const Matrix& src = tensor(params.name(id));
    Matrix& dst = params[id];
    if (src.rows() != dst.rows() || src.cols() != dst.cols())
      throw CheckpointError("shape mismatch for '" + params.name(id) + "'");
    dst = src;
  }
}

void Checkpoint::store_params(const ParamStore& params) {
  for (ParamId id = 0; id < params.size(); ++id) put(params.name(id), params[id]);
}

}  // namespace lan
