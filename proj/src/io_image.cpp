#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "sf/io.hpp"

namespace sf {
namespace io {

namespace {

std::uint8_t to_byte(double v) {
  const double s = std::round(v * 255.0);
  return static_cast<std::uint8_t>(s < 0.0 ? 0.0 : (s > 255.0 ? 255.0 : s));
}

void skip_pnm_header(std::ifstream& f, const char* tag, const std::string& path, long& w, long& h) {
  std::string t;
  long maxval = 0;
  f >> t >> w >> h >> maxval;
  if (t != tag || w <= 0 || h <= 0 || maxval != 255)
    throw IoError(std::string("bad ") + tag + " header in " + path);
  f.get();
}

}  // namespace

void save_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.size(0) != 3) throw ShapeError("save_ppm: image must be (3,H,W)");
  const long h = image.size(1), w = image.size(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_ppm: cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  const std::vector<double>& d = image.data();
  std::vector<std::uint8_t> row(3 * w);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) row[3 * x + c] = to_byte(d[c * h * w + y * w + x]);
    f.write(reinterpret_cast<const char*>(row.data()), 3 * w);
  }
  if (!f) throw IoError("save_ppm: write failed for " + path);
}

Tensor load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_ppm: cannot open " + path);
  long w = 0, h = 0;
  skip_pnm_header(f, "P6", path, w, h);
  std::vector<std::uint8_t> raw(static_cast<size_t>(3) * w * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(f.gcount()) != raw.size()) throw IoError("load_ppm: truncated " + path);
  std::vector<double> d(raw.size());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        d[c * h * w + y * w + x] = raw[3 * (y * w + x) + c] / 255.0;
  return Tensor::from_data({3, h, w}, std::move(d));
}

void save_pgm(const std::string& path, const std::vector<std::uint8_t>& mask, long height,
              long width) {
  if (static_cast<long>(mask.size()) != height * width)
    throw ShapeError("save_pgm: mask size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_pgm: cannot open " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("save_pgm: write failed for " + path);
}

std::vector<std::uint8_t> load_pgm(const std::string& path, long& height, long& width) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_pgm: cannot open " + path);
  skip_pnm_header(f, "P5", path, width, height);
  std::vector<std::uint8_t> raw(static_cast<size_t>(width) * height);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(f.gcount()) != raw.size()) throw IoError("load_pgm: truncated " + path);
  for (auto& v : raw) v = v ? 1 : 0;
  return raw;
}

namespace {

std::uint32_t crc32_of(const std::uint8_t* type, const std::uint8_t* data, size_t n) {
  std::uint32_t c = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
  c = static_cast<std::uint32_t>(crc32(c, type, 4));
  if (n) c = static_cast<std::uint32_t>(crc32(c, data, static_cast<uInt>(n)));
  return c;
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_chunk(std::vector<std::uint8_t>& out, const char* type,
                 const std::vector<std::uint8_t>& data) {
  write_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::uint8_t* t = reinterpret_cast<const std::uint8_t*>(type);
  out.insert(out.end(), t, t + 4);
  out.insert(out.end(), data.begin(), data.end());
  write_be32(out, crc32_of(t, data.data(), data.size()));
}

}  // namespace

void save_png16(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.size(0) != 3)
    throw ShapeError("save_png16: image must be (3,H,W)");
  const long h = image.size(1), w = image.size(2);
  const std::vector<double>& d = image.data();

  // Raw scanlines: filter byte 0 + RGB samples, 16 bit, most significant first.
  std::vector<std::uint8_t> raw((1 + 6 * w) * h);
  size_t p = 0;
  for (long y = 0; y < h; ++y) {
    raw[p++] = 0;
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = d[c * h * w + y * w + x];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        const std::uint16_t s = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        raw[p++] = static_cast<std::uint8_t>(s >> 8);
        raw[p++] = static_cast<std::uint8_t>(s & 0xff);
      }
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> deflated(bound);
  if (compress2(deflated.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("save_png16: deflate failed");
  deflated.resize(bound);

  std::vector<std::uint8_t> ihdr;
  write_be32(ihdr, static_cast<std::uint32_t>(w));
  write_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(16);  // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  write_chunk(png, "IHDR", ihdr);
  write_chunk(png, "IDAT", deflated);
  write_chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_png16: cannot open " + path);
  f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!f) throw IoError("save_png16: write failed for " + path);
}

}  // namespace io
}  // namespace sf
