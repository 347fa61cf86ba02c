#include <cstring>
#include <fstream>

#include "sf/io.hpp"

namespace sf {
namespace io {

namespace detail {

void write_exact(std::ostream& f, const void* p, size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_exact(std::istream& f, void* p, size_t n, const char* what) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(f.gcount()) != n)
    throw IoError(std::string("truncated read in ") + what);
}

void serialize_tensor(std::ostream& f, const Tensor& t) {
  write_exact(f, "TNSR", 4);
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  write_exact(f, &rank, 4);
  for (long d : t.shape()) {
    const std::uint32_t dim = static_cast<std::uint32_t>(d);
    write_exact(f, &dim, 4);
  }
  write_exact(f, t.data().data(), t.data().size() * sizeof(double));
}

Tensor deserialize_tensor(std::istream& f, const char* what) {
  char magic[4];
  read_exact(f, magic, 4, what);
  if (std::memcmp(magic, "TNSR", 4) != 0)
    throw IoError(std::string("bad tensor magic in ") + what);
  std::uint32_t rank = 0;
  read_exact(f, &rank, 4, what);
  if (rank > 16) throw IoError(std::string("implausible tensor rank in ") + what);
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t dim = 0;
    read_exact(f, &dim, 4, what);
    shape[i] = static_cast<long>(dim);
  }
  std::vector<double> data(shape_numel(shape));
  read_exact(f, data.data(), data.size() * sizeof(double), what);
  return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace detail

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_tensor: cannot open " + path);
  detail::serialize_tensor(f, t);
  if (!f) throw IoError("save_tensor: write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_tensor: cannot open " + path);
  return detail::deserialize_tensor(f, path.c_str());
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  detail::write_exact(f, "SFCKPT1\n", 8);
  std::string manifest;
  for (const auto& [k, v] : ckpt.manifest) manifest += k + "=" + v + "\n";
  const std::uint32_t mlen = static_cast<std::uint32_t>(manifest.size());
  detail::write_exact(f, &mlen, 4);
  detail::write_exact(f, manifest.data(), manifest.size());
  const std::uint32_t count = static_cast<std::uint32_t>(ckpt.tensors.size());
  detail::write_exact(f, &count, 4);
  for (const auto& [name, t] : ckpt.tensors) {
    const std::uint32_t nlen = static_cast<std::uint32_t>(name.size());
    detail::write_exact(f, &nlen, 4);
    detail::write_exact(f, name.data(), name.size());
    detail::serialize_tensor(f, t);
  }
  if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  char magic[8];
  detail::read_exact(f, magic, 8, "checkpoint");
  if (std::memcmp(magic, "SFCKPT1\n", 8) != 0)
    throw IoError("load_checkpoint: bad magic in " + path);
  std::uint32_t mlen = 0;
  detail::read_exact(f, &mlen, 4, "checkpoint");
  std::string manifest(mlen, '\0');
  detail::read_exact(f, manifest.data(), mlen, "checkpoint");

  Checkpoint ckpt;
  size_t pos = 0;
  while (pos < manifest.size()) {
    size_t nl = manifest.find('\n', pos);
    if (nl == std::string::npos) nl = manifest.size();
    const std::string line = manifest.substr(pos, nl - pos);
    pos = nl + 1;
    const size_t eq = line.find('=');
    if (eq != std::string::npos) ckpt.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  std::uint32_t count = 0;
  detail::read_exact(f, &count, 4, "checkpoint");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t nlen = 0;
    detail::read_exact(f, &nlen, 4, "checkpoint");
    std::string name(nlen, '\0');
    detail::read_exact(f, name.data(), nlen, "checkpoint");
    ckpt.tensors[name] = detail::deserialize_tensor(f, "checkpoint");
  }
  return ckpt;
}

}  // namespace io
}  // namespace sf
