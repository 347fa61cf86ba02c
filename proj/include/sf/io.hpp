#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sf/gaussians.hpp"
#include "sf/tensor.hpp"

namespace sf {
namespace io {

// Flat tensor binary: magic "TNSR", u32 rank, u32 dims, little-endian f64
// payload. Used for network-weight checkpoints.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Middlebury .flo: magic float 202021.25, i32 width, i32 height, interleaved
// f32 (u, v) rows. Flow tensors are (2,H,W).
void save_flo(const std::string& path, const Tensor& flow);
Tensor load_flo(const std::string& path);

// Grayscale PFM ("Pf"), negative scale marks little-endian, rows bottom-up.
// Maps are (1,H,W).
void save_pfm(const std::string& path, const Tensor& map);
Tensor load_pfm(const std::string& path);

// Binary PPM (P6, maxval 255); values clamped from [0,1]. Images are (3,H,W).
void save_ppm(const std::string& path, const Tensor& image);
Tensor load_ppm(const std::string& path);

// Binary PGM (P5, maxval 255) for masks: nonzero -> 255.
void save_pgm(const std::string& path, const std::vector<std::uint8_t>& mask, long height,
              long width);
std::vector<std::uint8_t> load_pgm(const std::string& path, long& height, long& width);

// 16-bit RGB PNG (big-endian samples, zlib-deflated, filter "none").
void save_png16(const std::string& path, const Tensor& image);

// Gaussian cloud PLY, binary little-endian, float32 properties
// x y z, rot_0..3, scale_0..2, opacity, f_dc_0..2 (+ f_rest_0..8 for degree 1).
void save_ply(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_ply(const std::string& path);

// Checkpoint archive: a text manifest plus named tensor-binary entries.
struct Checkpoint {
  std::map<std::string, std::string> manifest;
  std::map<std::string, Tensor> tensors;
};
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace io
}  // namespace sf
