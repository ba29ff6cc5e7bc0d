#include "vidswap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "vidswap/error.hpp"

namespace vidswap {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'W', 'P', 'C', 'K', 'P', 'T'};

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1, kInt64 = 2 };

DType to_dtype(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return DType::kFloat32;
    case torch::kFloat64: return DType::kFloat64;
    case torch::kInt64: return DType::kInt64;
    default: throw FormatError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType from_dtype(std::uint8_t d) {
  switch (static_cast<DType>(d)) {
    case DType::kFloat32: return torch::kFloat32;
    case DType::kFloat64: return torch::kFloat64;
    case DType::kInt64: return torch::kInt64;
  }
  throw FormatError("checkpoint: unknown dtype tag " + std::to_string(d));
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint: truncated archive");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const torch::Tensor& CheckpointArchive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint: missing tensor " + name);
}

bool CheckpointArchive::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

std::string serialize_checkpoint(const CheckpointArchive& archive) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  auto meta = archive.metadata;
  meta["format_version"] = kCheckpointFormatVersion;
  const std::string meta_text = meta.dump();
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  put<std::uint64_t>(out, archive.tensors.size());
  for (const auto& [name, t] : archive.tensors) {
    const auto c = t.detach().contiguous().cpu();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(to_dtype(c.scalar_type())));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.dim()));
    for (auto d : c.sizes()) put<std::int64_t>(out, d);
    out.append(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  }
  return out;
}

CheckpointArchive deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic, not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion) {
    throw FormatError("checkpoint: unsupported format_version " + std::to_string(version));
  }
  CheckpointArchive archive;
  const auto meta_len = r.get<std::uint64_t>();
  try {
    archive.metadata = nlohmann::json::parse(std::string(r.take(meta_len), meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len), name_len);
    const auto dtype = from_dtype(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = r.get<std::int64_t>();
    auto t = torch::empty(dims, dtype);
    const std::size_t n = t.numel() * t.element_size();
    std::memcpy(t.data_ptr(), r.take(n), n);
    archive.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after last tensor");
  return archive;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointArchive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FilesystemError("cannot write checkpoint " + path.string());
    const auto bytes = serialize_checkpoint(archive);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

CheckpointArchive read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FilesystemError("checkpoint not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace vidswap
