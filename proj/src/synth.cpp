#include "sf/synth.hpp"

#include <cmath>

#include "sf/rng.hpp"

namespace sf {

namespace {

using Eigen::Vector3d;

constexpr double kInf = 1e30;

// Smoothstep-interpolated lattice value noise evaluated on solid 3D
// coordinates, two octaves.
double value_noise(const Vector3d& p, double wavelength, std::uint64_t seed) {
  auto lattice = [seed](const Vector3d& q, std::uint64_t salt) {
    const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
    const std::int64_t ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
                       iz = static_cast<std::int64_t>(fz);
    double tx = q.x() - fx, ty = q.y() - fy, tz = q.z() - fz;
    tx = tx * tx * (3.0 - 2.0 * tx);
    ty = ty * ty * (3.0 - 2.0 * ty);
    tz = tz * tz * (3.0 - 2.0 * tz);
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
          acc += w * hash_unit(ix + dx, iy + dy, iz + dz, seed ^ salt);
        }
    return acc;
  };
  return 0.65 * lattice(p / wavelength, 0x51ed270b) +
         0.35 * lattice(p / (0.37 * wavelength), 0x9e3779b9);
}

struct Primitive {
  enum Kind { kPlaneZ, kPlaneXLo, kPlaneXHi, kPlaneYLo, kPlaneYHi, kPlaneZHi, kBox, kSphere };
  Kind kind = kBox;
  Vector3d pos = Vector3d::Zero();       // reference position at time 0
  Vector3d velocity = Vector3d::Zero();  // meters per frame
  Vector3d half = Vector3d::Zero();      // box half extents
  double radius = 0.0;                   // spheres
  double plane = 0.0;                    // plane coordinate
  Vector3d base_color = Vector3d::Ones();
  double wavelength = 1.0;
  std::uint64_t tex_seed = 0;
  bool dynamic() const { return velocity.squaredNorm() > 0.0; }
};

struct Hit {
  double s = kInf;  // camera-frame depth (z), see ray parameterization below
  int obj = -1;
  Vector3d point = Vector3d::Zero();
  Vector3d normal = Vector3d::Zero();
};

struct World {
  SyntheticWorldConfig cfg;
  std::vector<Primitive> prims;
  Vector3d ego_velocity = Vector3d::Zero();
  double cam_height = 1.6;
  double mount_radius = 0.5;
};

// Rays are parameterized as origin + s * dir with dir = R * K^-1 (u,v,1), so s
// equals the camera-frame z depth directly.
Hit intersect(const World& world, const Vector3d& o, const Vector3d& d, double time) {
  Hit best;
  auto consider = [&](double s, int idx, const Vector3d& n) {
    if (s > 1e-9 && s < best.s) {
      best.s = s;
      best.obj = idx;
      best.normal = n;
    }
  };
  for (size_t i = 0; i < world.prims.size(); ++i) {
    const Primitive& pr = world.prims[i];
    switch (pr.kind) {
      case Primitive::kPlaneZ:
        if (d.z() < 0.0) consider((pr.plane - o.z()) / d.z(), static_cast<int>(i), {0, 0, 1});
        break;
      case Primitive::kPlaneZHi:
        if (d.z() > 0.0) consider((pr.plane - o.z()) / d.z(), static_cast<int>(i), {0, 0, -1});
        break;
      case Primitive::kPlaneXLo:
        if (d.x() < 0.0) consider((pr.plane - o.x()) / d.x(), static_cast<int>(i), {1, 0, 0});
        break;
      case Primitive::kPlaneXHi:
        if (d.x() > 0.0) consider((pr.plane - o.x()) / d.x(), static_cast<int>(i), {-1, 0, 0});
        break;
      case Primitive::kPlaneYLo:
        if (d.y() < 0.0) consider((pr.plane - o.y()) / d.y(), static_cast<int>(i), {0, 1, 0});
        break;
      case Primitive::kPlaneYHi:
        if (d.y() > 0.0) consider((pr.plane - o.y()) / d.y(), static_cast<int>(i), {0, -1, 0});
        break;
      case Primitive::kBox: {
        const Vector3d c = pr.pos + time * pr.velocity;
        double t_near = -kInf, t_far = kInf;
        int axis = -1;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
          const double lo = c[a] - pr.half[a], hi = c[a] + pr.half[a];
          if (d[a] == 0.0) {
            if (o[a] < lo || o[a] > hi) miss = true;
            continue;
          }
          double t0 = (lo - o[a]) / d[a], t1 = (hi - o[a]) / d[a];
          if (t0 > t1) std::swap(t0, t1);
          if (t0 > t_near) {
            t_near = t0;
            axis = a;
          }
          if (t1 < t_far) t_far = t1;
          if (t_near > t_far) miss = true;
        }
        if (!miss && axis >= 0 && t_near > 1e-9) {
          Vector3d n = Vector3d::Zero();
          n[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
          consider(t_near, static_cast<int>(i), n);
        }
        break;
      }
      case Primitive::kSphere: {
        const Vector3d c = pr.pos + time * pr.velocity;
        const Vector3d oc = o - c;
        const double a = d.squaredNorm();
        const double b = 2.0 * oc.dot(d);
        const double cq = oc.squaredNorm() - pr.radius * pr.radius;
        const double disc = b * b - 4.0 * a * cq;
        if (disc >= 0.0) {
          const double root = std::sqrt(disc);
          double s = (-b - root) / (2.0 * a);
          if (s <= 1e-9) s = (-b + root) / (2.0 * a);
          if (s > 1e-9 && s < best.s) {
            const Vector3d p = o + s * d;
            consider(s, static_cast<int>(i), (p - c).normalized());
          }
        }
        break;
      }
    }
  }
  best.point = o + best.s * d;
  return best;
}

Vector3d shade(const World& world, const Hit& hit, double time) {
  const Primitive& pr = world.prims[hit.obj];
  const Vector3d local = hit.point - (pr.pos + time * pr.velocity);
  const double n = value_noise(local, pr.wavelength, pr.tex_seed);
  static const Vector3d light = Vector3d(0.3, 0.2, 0.93).normalized();
  const double lambert = 0.78 + 0.22 * std::max(0.0, hit.normal.dot(light));
  Vector3d c = pr.base_color * (0.35 + 0.65 * n) * lambert;
  for (int i = 0; i < 3; ++i) c[i] = std::min(0.98, std::max(0.02, c[i]));
  return c;
}

World build_world(const SyntheticWorldConfig& cfg, std::uint64_t seed) {
  World w;
  w.cfg = cfg;
  Rng rng(seed * 0x9E3779B97F4A7C15ull + cfg.texture_seed);
  const std::uint64_t tex = rng.next_u64();

  // Texture wavelengths track the pixel density so surfaces stay bandlimited
  // relative to the image grid at any configured resolution.
  const double fx =
      0.5 * static_cast<double>(cfg.width) / std::tan(0.5 * cfg.fov_deg * 3.14159265358979323846 / 180.0);
  const double tex_scale = std::min(4.0, std::max(0.75, 57.0 / fx));

  auto color = [&rng]() {
    return Vector3d(rng.uniform(0.3, 0.95), rng.uniform(0.3, 0.95), rng.uniform(0.3, 0.95));
  };
  auto add_plane = [&](Primitive::Kind kind, double coord, double wavelength) {
    Primitive p;
    p.kind = kind;
    p.plane = coord;
    p.base_color = color();
    p.wavelength = wavelength * tex_scale;
    p.tex_seed = rng.next_u64() ^ tex;
    w.prims.push_back(p);
  };
  // Enclosing room; the trajectory stays well inside it.
  add_plane(Primitive::kPlaneZ, 0.0, 1.5);     // textured ground plane
  add_plane(Primitive::kPlaneZHi, 7.0, 2.5);
  add_plane(Primitive::kPlaneXLo, -14.0, 2.5);
  add_plane(Primitive::kPlaneXHi, 34.0, 2.5);
  add_plane(Primitive::kPlaneYLo, -14.0, 2.5);
  add_plane(Primitive::kPlaneYHi, 14.0, 2.5);

  const double traj = cfg.ego_speed * (cfg.samples_per_scene + 1.0);
  for (int i = 0; i < cfg.static_boxes; ++i) {
    Primitive p;
    p.kind = Primitive::kBox;
    p.half = Vector3d(rng.uniform(0.5, 1.8), rng.uniform(0.5, 1.8), rng.uniform(0.6, 2.2));
    const double side = i % 2 == 0 ? 1.0 : -1.0;
    p.pos = Vector3d(rng.uniform(3.0, 26.0), side * rng.uniform(3.2 + p.half.y(), 11.0),
                     p.half.z());
    p.base_color = color();
    p.wavelength = 0.8 * tex_scale;
    p.tex_seed = rng.next_u64() ^ tex;
    w.prims.push_back(p);
  }
  for (int i = 0; i < cfg.dynamic_objects; ++i) {
    Primitive p;
    const double side = i % 2 == 0 ? 1.0 : -1.0;
    if (i % 2 == 0) {
      p.kind = Primitive::kBox;
      p.half = Vector3d(rng.uniform(1.1, 1.9), rng.uniform(1.1, 1.9), rng.uniform(1.0, 1.7));
      p.pos = Vector3d(rng.uniform(6.0, 14.0), side * rng.uniform(p.half.y() + 1.8, p.half.y() + 4.5),
                       p.half.z());
    } else {
      p.kind = Primitive::kSphere;
      p.radius = rng.uniform(1.1, 1.7);
      p.pos = Vector3d(rng.uniform(6.0, 14.0), side * rng.uniform(p.radius + 1.8, p.radius + 4.5),
                       p.radius + rng.uniform(0.0, 0.6));
    }
    const double speed = cfg.object_speed * rng.uniform(0.7, 1.3);
    const double heading = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    p.velocity = Vector3d(speed * std::cos(heading), speed * std::sin(heading), 0.0);
    // Moving objects must stay clear of the whole camera trajectory.
    const double total = cfg.samples_per_scene + 1.0;
    for (int k = 0; k < 2; ++k) {
      const Vector3d end = p.pos + total * p.velocity;
      const double reach = (p.kind == Primitive::kSphere ? p.radius : p.half.norm()) + 2.2;
      const bool bad_y = std::abs(end.y()) < reach && end.x() < traj + reach && end.x() > -reach;
      if (bad_y || std::abs(end.y()) > 12.0 || end.x() < 2.0 || end.x() > 30.0)
        p.velocity = -p.velocity;
      else
        break;
    }
    p.base_color = color();
    p.wavelength = 0.8 * tex_scale;
    p.tex_seed = rng.next_u64() ^ tex;
    w.prims.push_back(p);
  }
  w.ego_velocity = Vector3d(cfg.ego_speed, 0.0, 0.0);
  return w;
}

PinholeCamera make_camera(const World& w, int index, double time) {
  const SyntheticWorldConfig& cfg = w.cfg;
  const double yaw = 2.0 * 3.14159265358979323846 * index / cfg.num_cameras;
  const Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Vector3d down(0.0, 0.0, -1.0);
  const Vector3d center = time * w.ego_velocity + w.mount_radius * forward +
                          Vector3d(0.0, 0.0, w.cam_height);
  Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();
  c2w.block<3, 1>(0, 0) = right;
  c2w.block<3, 1>(0, 1) = down;
  c2w.block<3, 1>(0, 2) = forward;
  c2w.block<3, 1>(0, 3) = center;
  const double fx =
      0.5 * static_cast<double>(cfg.width) / std::tan(0.5 * cfg.fov_deg * 3.14159265358979323846 / 180.0);
  return PinholeCamera(fx, fx, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0, cfg.width,
                       cfg.height, c2w);
}

struct FrameRender {
  Tensor image;               // (3,H,W)
  Tensor depth;               // (1,H,W)
  std::vector<int> object;    // per pixel primitive index
  std::vector<Hit> hits;      // per pixel
};

FrameRender render_frame(const World& w, const PinholeCamera& cam, double time) {
  const long h = cam.height, wd = cam.width;
  FrameRender fr;
  std::vector<double> img(3 * h * wd), dep(h * wd);
  fr.object.resize(h * wd);
  fr.hits.resize(h * wd);
  const Eigen::Matrix3d r = cam.rotation();
  const Vector3d o = cam.center();
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < wd; ++x) {
      const Vector3d dir_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      const Vector3d dir = r * dir_cam;
      Hit hit = intersect(w, o, dir, time);
      if (hit.obj < 0) throw GenerationError("synth: ray escaped the room");
      const long i = y * wd + x;
      fr.hits[i] = hit;
      fr.object[i] = hit.obj;
      dep[i] = hit.s;
      const Vector3d c = shade(w, hit, time);
      img[i] = c.x();
      img[h * wd + i] = c.y();
      img[2 * h * wd + i] = c.z();
    }
  fr.image = Tensor::from_data({3, h, wd}, std::move(img));
  fr.depth = Tensor::from_data({1, h, wd}, std::move(dep));
  return fr;
}

// Projects a world point into the camera; returns false when behind it.
bool project_point(const PinholeCamera& cam, const Vector3d& p, double& u, double& v, double& z) {
  const Vector3d c = cam.rotation().transpose() * (p - cam.center());
  z = c.z();
  if (z <= 1e-6) return false;
  u = cam.fx * c.x() / z + cam.cx;
  v = cam.fy * c.y() / z + cam.cy;
  return true;
}

// Flow from frame (cam_a, time_a) to (cam_b, time_b) with mutual-visibility
// masking; `target` is frame b's own render (for the same-object test).
void flow_between(const World& w, const PinholeCamera& cam_a, double time_a,
                  const PinholeCamera& cam_b, double time_b, const FrameRender& fa,
                  const FrameRender& fb, Tensor& flow_out, std::vector<std::uint8_t>& vis_out) {
  const long h = cam_a.height, wd = cam_a.width;
  std::vector<double> flow(2 * h * wd, 0.0);
  vis_out.assign(h * wd, 0);
  const Eigen::Matrix3d rb = cam_b.rotation();
  const Vector3d ob = cam_b.center();
  const bool same_pose = cam_b.same_pose(cam_a);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < wd; ++x) {
      const long i = y * wd + x;
      const Hit& hit = fa.hits[i];
      const Primitive& pr = w.prims[hit.obj];
      const Vector3d point_b = hit.point + (time_b - time_a) * pr.velocity;
      double u, v, z;
      if (same_pose && (point_b.array() == hit.point.array()).all()) {
        // The point and the camera did not move: the flow is exactly zero,
        // with no projection round-trip noise.
        u = static_cast<double>(x);
        v = static_cast<double>(y);
        const Eigen::Vector3d c = cam_b.rotation().transpose() * (point_b - cam_b.center());
        z = c.z();
      } else if (!project_point(cam_b, point_b, u, v, z)) {
        continue;  // behind the camera: flow stays 0, masked
      }
      flow[i] = u - static_cast<double>(x);
      flow[h * wd + i] = v - static_cast<double>(y);
      if (u < 0.0 || u > wd - 1.0 || v < 0.0 || v > h - 1.0) continue;
      // Occlusion: re-cast the exact ray through (u,v) at time_b and demand it
      // reaches the same depth.
      const Vector3d dir = rb * Vector3d((u - cam_b.cx) / cam_b.fx, (v - cam_b.cy) / cam_b.fy, 1.0);
      const Hit back = intersect(w, ob, dir, time_b);
      if (back.s < z * (1.0 - 1e-9)) continue;
      // Resample-safety: bilinear lookups in frame b are only trusted where
      // the 3x3 patch around the target belongs to one primitive and its
      // inverse depth is locally linear. Planar surfaces have exactly linear
      // disparity (zero penalty); silhouettes and grazing sphere rims bend it
      // and are masked out.
      const long xc = std::lround(u), yc = std::lround(v);
      bool safe = xc >= 1 && xc <= wd - 2 && yc >= 1 && yc <= h - 2;
      if (safe) {
        double disp[3][3];
        for (long dy = -1; dy <= 1 && safe; ++dy)
          for (long dx = -1; dx <= 1 && safe; ++dx) {
            const long q = (yc + dy) * wd + (xc + dx);
            if (fb.object[q] != hit.obj) safe = false;
            disp[dy + 1][dx + 1] = 1.0 / fb.hits[q].s;
          }
        if (safe) {
          const double sxx = std::abs(disp[1][0] - 2 * disp[1][1] + disp[1][2]);
          const double syy = std::abs(disp[0][1] - 2 * disp[1][1] + disp[2][1]);
          const double sxy =
              std::abs(disp[0][0] - disp[0][2] - disp[2][0] + disp[2][2]) / 4.0;
          if (std::max({sxx, syy, sxy}) > 0.002) safe = false;
        }
      }
      vis_out[i] = safe ? 1 : 0;
    }
  flow_out = Tensor::from_data({2, h, wd}, std::move(flow));
}

std::vector<std::uint8_t> dynamic_mask(const World& w, const FrameRender& fr) {
  std::vector<std::uint8_t> m(fr.object.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = w.prims[fr.object[i]].dynamic() ? 1 : 0;
  return m;
}

}  // namespace

std::vector<PinholeCamera> rig_at_time(const SyntheticWorldConfig& world, double time) {
  World w = build_world(world, 0);
  std::vector<PinholeCamera> rig;
  for (int c = 0; c < world.num_cameras; ++c) rig.push_back(make_camera(w, c, time));
  return rig;
}

std::vector<SceneSample> generate_scene(const SyntheticWorldConfig& cfg, std::uint64_t seed) {
  if (cfg.num_cameras < 1 || cfg.samples_per_scene < 1 || cfg.width < 8 || cfg.height < 8)
    throw GenerationError("generate_scene: degenerate configuration");
  World w = build_world(cfg, seed);

  // Degeneracy check: no camera may sit inside (or graze) an object at any
  // sampled time.
  for (int s = 0; s <= cfg.samples_per_scene; ++s)
    for (double frac : {0.0, 0.5})
      for (int c = 0; c < cfg.num_cameras; ++c) {
        const double time = s + frac;
        const Vector3d o = make_camera(w, c, time).center();
        for (const Primitive& p : w.prims) {
          if (p.kind == Primitive::kBox) {
            const Vector3d d = (o - (p.pos + time * p.velocity)).cwiseAbs() - p.half;
            if (d.maxCoeff() < 0.5) throw GenerationError("generate_scene: camera inside object");
          } else if (p.kind == Primitive::kSphere) {
            if ((o - (p.pos + time * p.velocity)).norm() < p.radius + 0.5)
              throw GenerationError("generate_scene: camera inside object");
          }
        }
      }

  std::vector<SceneSample> samples;
  for (int s = 0; s < cfg.samples_per_scene; ++s) {
    SceneSample sample;
    sample.scene_seed = seed;
    sample.index = s;
    const double ta = s, tb = s + 1.0, tm = s + 0.5;
    for (int c = 0; c < cfg.num_cameras; ++c) {
      CameraFrame f;
      f.cam_t = make_camera(w, c, ta);
      f.cam_t1 = make_camera(w, c, tb);
      f.cam_mid = make_camera(w, c, tm);
      FrameRender fa = render_frame(w, f.cam_t, ta);
      FrameRender fb = render_frame(w, f.cam_t1, tb);
      FrameRender fm = render_frame(w, f.cam_mid, tm);
      for (double d : fa.depth.data())
        if (d < cfg.d_min || d > cfg.d_max)
          throw GenerationError("generate_scene: depth outside [d_min, d_max]");
      f.image_t = fa.image;
      f.image_t1 = fb.image;
      f.image_mid = fm.image;
      f.depth_t = fa.depth;
      f.depth_t1 = fb.depth;
      flow_between(w, f.cam_t, ta, f.cam_t1, tb, fa, fb, f.flow_fwd, f.vis_fwd);
      flow_between(w, f.cam_t1, tb, f.cam_t, ta, fb, fa, f.flow_bwd, f.vis_bwd);
      f.dyn_t = dynamic_mask(w, fa);
      f.dyn_t1 = dynamic_mask(w, fb);
      sample.cams.push_back(std::move(f));
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace sf
