#include <cstring>
#include <fstream>
#include <sstream>

#include "sf/io.hpp"

namespace sf {
namespace io {

namespace {

std::vector<std::string> ply_properties(int sh_degree) {
  std::vector<std::string> p = {"x",       "y",       "z",       "rot_0",  "rot_1",
                                "rot_2",   "rot_3",   "scale_0", "scale_1", "scale_2",
                                "opacity", "f_dc_0",  "f_dc_1",  "f_dc_2"};
  if (sh_degree >= 1)
    for (int i = 0; i < 9; ++i) p.push_back("f_rest_" + std::to_string(i));
  return p;
}

}  // namespace

void save_ply(const std::string& path, const GaussianCloud& cloud) {
  const long n = cloud.count();
  const long k = sh_coeff_count(cloud.sh_degree);
  const std::vector<std::string> props = ply_properties(cloud.sh_degree);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_ply: cannot open " + path);
  f << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
  for (const std::string& p : props) f << "property float " << p << "\n";
  f << "end_header\n";

  const std::vector<double>& means = cloud.means.data();
  const std::vector<double>& rots = cloud.rotations.data();
  const std::vector<double>& scales = cloud.scales.data();
  const std::vector<double>& ops = cloud.opacities.data();
  const std::vector<double>& sh = cloud.sh.data();
  std::vector<float> rec(props.size());
  for (long i = 0; i < n; ++i) {
    size_t c = 0;
    for (int j = 0; j < 3; ++j) rec[c++] = static_cast<float>(means[3 * i + j]);
    for (int j = 0; j < 4; ++j) rec[c++] = static_cast<float>(rots[4 * i + j]);
    for (int j = 0; j < 3; ++j) rec[c++] = static_cast<float>(scales[3 * i + j]);
    rec[c++] = static_cast<float>(ops[i]);
    for (long j = 0; j < k; ++j) rec[c++] = static_cast<float>(sh[k * i + j]);
    f.write(reinterpret_cast<const char*>(rec.data()),
            static_cast<std::streamsize>(rec.size() * 4));
  }
  if (!f) throw IoError("save_ply: write failed for " + path);
}

GaussianCloud load_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_ply: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "ply") throw IoError("load_ply: not a PLY file: " + path);
  if (!std::getline(f, line) || line != "format binary_little_endian 1.0")
    throw IoError("load_ply: unsupported format in " + path);

  long n = -1;
  std::vector<std::string> props;
  while (std::getline(f, line)) {
    if (line == "end_header") break;
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word == "element") {
      std::string what;
      is >> what >> n;
      if (what != "vertex") throw IoError("load_ply: unexpected element in " + path);
    } else if (word == "property") {
      std::string type, name;
      is >> type >> name;
      if (type != "float") throw IoError("load_ply: non-float property in " + path);
      props.push_back(name);
    } else if (word != "comment") {
      throw IoError("load_ply: unexpected header line in " + path);
    }
  }
  if (n < 0) throw IoError("load_ply: missing vertex element in " + path);

  int sh_degree;
  if (props == ply_properties(1))
    sh_degree = 1;
  else if (props == ply_properties(0))
    sh_degree = 0;
  else
    throw IoError("load_ply: unexpected property layout in " + path);
  const long k = sh_coeff_count(sh_degree);

  std::vector<double> means(3 * n), rots(4 * n), scales(3 * n), ops(n), sh(k * n);
  std::vector<float> rec(props.size());
  for (long i = 0; i < n; ++i) {
    f.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size() * 4));
    if (static_cast<size_t>(f.gcount()) != rec.size() * 4)
      throw IoError("load_ply: truncated " + path);
    size_t c = 0;
    for (int j = 0; j < 3; ++j) means[3 * i + j] = rec[c++];
    for (int j = 0; j < 4; ++j) rots[4 * i + j] = rec[c++];
    for (int j = 0; j < 3; ++j) scales[3 * i + j] = rec[c++];
    ops[i] = rec[c++];
    for (long j = 0; j < k; ++j) sh[k * i + j] = rec[c++];
  }
  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.means = Tensor::from_data({n, 3}, std::move(means));
  cloud.rotations = Tensor::from_data({n, 4}, std::move(rots));
  cloud.scales = Tensor::from_data({n, 3}, std::move(scales));
  cloud.opacities = Tensor::from_data({n, 1}, std::move(ops));
  cloud.sh = Tensor::from_data({n, k}, std::move(sh));
  return cloud;
}

}  // namespace io
}  // namespace sf
