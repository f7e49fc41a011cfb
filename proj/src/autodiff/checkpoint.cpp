#include "imagine/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace imagine {

namespace {

constexpr char kMagic[4] = {'J', 'V', 'C', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void put_f32(std::ostream& os, double v) { put(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  template <typename T>
  T get(const char* what) {
    unsigned char buf[sizeof(T)];
    read(buf, sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
    return v;
  }

  void read(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte offset " +
                        std::to_string(offset_ + static_cast<std::size_t>(is_.gcount())));
    }
    offset_ += n;
  }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kMagic, 4);
  const bool with_manifest = !ckpt.manifest.empty();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size() + (with_manifest ? 1 : 0)));
  auto write_one = [&os](const std::string& name, const Tensor& t) {
    if (name.size() > 0xffff) throw FormatError("tensor name too long: " + name);
    if (t.rank() > 0xff) throw FormatError("tensor rank too large: " + name);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f32(os, v);
  };
  for (const auto& t : ckpt.tensors) write_one(t.name, t.value);
  if (with_manifest) {
    Tensor bytes({ckpt.manifest.size()});
    for (std::size_t i = 0; i < ckpt.manifest.size(); ++i) bytes[i] = static_cast<unsigned char>(ckpt.manifest[i]);
    write_one(kManifestTensor, bytes);
  }
  if (!os) throw FormatError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a JVC1 checkpoint (bad magic)");
  const auto count = r.get<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.read(name.data(), len, "name");
    const auto rank = r.get<std::uint8_t>("rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>("dimension");
      n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<float>(r.get<std::uint32_t>("tensor data"));
    Tensor t(std::move(shape), std::move(data));
    if (name == kManifestTensor) {
      ckpt.manifest.resize(t.size());
      for (std::size_t j = 0; j < t.size(); ++j) ckpt.manifest[j] = static_cast<char>(static_cast<unsigned char>(t[j]));
    } else {
      ckpt.tensors.push_back({std::move(name), std::move(t)});
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_checkpoint(is);
}

Checkpoint to_checkpoint(const ParamStore& params, std::string manifest) {
  Checkpoint ckpt;
  ckpt.manifest = std::move(manifest);
  for (const auto& e : params) ckpt.tensors.push_back({e.name, e.value});
  return ckpt;
}

void restore_params(ParamStore& params, const Checkpoint& ckpt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    const Tensor* t = ckpt.find(e.name);
    if (!t) throw FormatError("checkpoint is missing tensor " + e.name);
    if (t->shape() != e.value.shape()) {
      throw FormatError("checkpoint tensor " + e.name + " has shape " + t->shape_string() +
                        ", expected " + e.value.shape_string());
    }
    e.value = *t;
  }
}

}  // namespace imagine
