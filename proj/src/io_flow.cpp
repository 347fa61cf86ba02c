#include <cstring>
#include <fstream>
#include <sstream>

#include "sf/io.hpp"

namespace sf {
namespace io {

namespace {
constexpr float kFloMagic = 202021.25f;
}

void save_flo(const std::string& path, const Tensor& flow) {
  if (flow.rank() != 3 || flow.size(0) != 2) throw ShapeError("save_flo: flow must be (2,H,W)");
  const long h = flow.size(1), w = flow.size(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_flo: cannot open " + path);
  f.write(reinterpret_cast<const char*>(&kFloMagic), 4);
  const std::int32_t wi = static_cast<std::int32_t>(w), hi = static_cast<std::int32_t>(h);
  f.write(reinterpret_cast<const char*>(&wi), 4);
  f.write(reinterpret_cast<const char*>(&hi), 4);
  const std::vector<double>& d = flow.data();
  std::vector<float> row(2 * w);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      row[2 * x] = static_cast<float>(d[y * w + x]);
      row[2 * x + 1] = static_cast<float>(d[h * w + y * w + x]);
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!f) throw IoError("save_flo: write failed for " + path);
}

Tensor load_flo(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_flo: cannot open " + path);
  float magic = 0;
  std::int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&magic), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || magic != kFloMagic) throw IoError("load_flo: bad magic in " + path);
  if (w <= 0 || h <= 0) throw IoError("load_flo: bad dimensions in " + path);
  std::vector<float> raw(static_cast<size_t>(2) * w * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (static_cast<size_t>(f.gcount()) != raw.size() * 4)
    throw IoError("load_flo: truncated " + path);
  std::vector<double> d(raw.size());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      d[y * w + x] = raw[2 * (y * w + x)];
      d[static_cast<long>(h) * w + y * w + x] = raw[2 * (y * w + x) + 1];
    }
  return Tensor::from_data({2, h, w}, std::move(d));
}

void save_pfm(const std::string& path, const Tensor& map) {
  if (map.rank() != 3 || map.size(0) != 1) throw ShapeError("save_pfm: map must be (1,H,W)");
  const long h = map.size(1), w = map.size(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_pfm: cannot open " + path);
  f << "Pf\n" << w << " " << h << "\n-1.0\n";
  const std::vector<double>& d = map.data();
  std::vector<float> row(w);
  for (long y = h - 1; y >= 0; --y) {  // PFM rows run bottom-up
    for (long x = 0; x < w; ++x) row[x] = static_cast<float>(d[y * w + x]);
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w * 4));
  }
  if (!f) throw IoError("save_pfm: write failed for " + path);
}

Tensor load_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_pfm: cannot open " + path);
  std::string tag;
  long w = 0, h = 0;
  double scale = 0.0;
  f >> tag >> w >> h >> scale;
  if (tag != "Pf" || w <= 0 || h <= 0) throw IoError("load_pfm: bad header in " + path);
  if (scale >= 0.0) throw IoError("load_pfm: big-endian PFM not supported: " + path);
  f.get();  // the single whitespace after the scale
  std::vector<float> raw(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (static_cast<size_t>(f.gcount()) != raw.size() * 4)
    throw IoError("load_pfm: truncated " + path);
  std::vector<double> d(raw.size());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) d[y * w + x] = raw[(h - 1 - y) * w + x];
  return Tensor::from_data({1, h, w}, std::move(d));
}

}  // namespace io
}  // namespace sf
