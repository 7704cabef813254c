#include "cgap2/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "cgap2/error.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace cgap2::synth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

enum Joint : int {
  kPelvis = 0, kRHip, kRKnee, kRAnkle, kLHip, kLKnee, kLAnkle, kSpine, kThorax, kNeck, kHead,
  kLShoulder, kLElbow, kLWrist, kRShoulder, kRElbow, kRWrist
};

// Rest bone offsets from parent, body frame: +Y up, subject faces +Z, subject's left is +X.
constexpr std::array<Vec3, kJoints> kRestOffsets = {{
    {0, 0, 0},
    {-130, 0, 0}, {0, -450, 0}, {0, -440, 0},
    {130, 0, 0}, {0, -450, 0}, {0, -440, 0},
    {0, 230, 0}, {0, 250, 0}, {0, 100, 20}, {0, 120, 0},
    {170, -20, 0}, {0, -290, 0}, {0, -260, 0},
    {-170, -20, 0}, {0, -290, 0}, {0, -260, 0},
}};

const std::array<const char*, 15> kClassNames = {"Directions", "Discussion", "Eating",  "Greeting", "Phoning",
                                                 "Photo",      "Posing",     "Purchases", "Sitting", "SittingDown",
                                                 "Smoking",    "Waiting",    "WalkDog", "Walking", "WalkTogether"};

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
        r.m[i * 3 + j] = s;
      }
    return r;
  }
};

Mat3 rot_x(double a) { return {{1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a)}}; }
Mat3 rot_y(double a) { return {{std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)}}; }
Mat3 rot_z(double a) { return {{std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1}}; }
Mat3 euler(const Vec3& a) { return rot_z(a.z) * rot_y(a.y) * rot_x(a.x); }

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
double norm(const Vec3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Per-sequence nuisance parameters shared by every class.
struct Nuisance {
  double period, phase, phase2, phase3;
  double arm_swing, elbow_bend, sway, nod, knee_bounce;
  double scale, root_yaw;
  Vec3 root_offset;
  JointAngles posture{};
  int peak_jitter;
};

Nuisance draw_nuisance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Nuisance n{};
  n.period = uni(36.0, 44.0);
  n.phase = uni(0.0, 2 * std::numbers::pi);
  n.phase2 = uni(0.0, 2 * std::numbers::pi);
  n.phase3 = uni(0.0, 2 * std::numbers::pi);
  n.arm_swing = uni(10.0, 20.0) * kDeg;
  n.elbow_bend = uni(5.0, 15.0) * kDeg;
  n.sway = uni(3.0, 6.0) * kDeg;
  n.nod = uni(2.0, 6.0) * kDeg;
  n.knee_bounce = uni(2.0, 6.0) * kDeg;
  n.scale = uni(0.92, 1.08);
  n.root_yaw = uni(-10.0, 10.0) * kDeg;
  n.root_offset = {uni(-150.0, 150.0), 0.0, uni(-150.0, 150.0)};
  for (int j : {kSpine, kNeck, kLShoulder, kLElbow, kRShoulder, kRElbow, kLHip, kRHip, kLKnee, kRKnee})
    n.posture[j] = {uni(-4.0, 4.0) * kDeg, uni(-4.0, 4.0) * kDeg, uni(-4.0, 4.0) * kDeg};
  n.peak_jitter = int(std::uniform_int_distribution<int>(-2, 2)(rng));
  return n;
}

JointAngles shared_motion(const Nuisance& n, double t) {
  JointAngles a = n.posture;
  const double w = 2 * std::numbers::pi / n.period;
  const double s = std::sin(w * t + n.phase);
  a[kLShoulder].x += n.arm_swing * s;
  a[kRShoulder].x -= n.arm_swing * s;
  const double bend = n.elbow_bend * 0.5 * (1 + std::sin(w * t + n.phase + std::numbers::pi / 3));
  a[kLElbow].x -= bend;
  a[kRElbow].x -= bend;
  a[kSpine].z += n.sway * std::sin(0.5 * w * t + n.phase2);
  a[kNeck].x += n.nod * std::sin(w * t + n.phase3);
  a[kLKnee].x += n.knee_bounce * 0.5 * (1 + std::sin(2 * w * t + n.phase2));
  a[kRKnee].x += n.knee_bounce * 0.5 * (1 + std::sin(2 * w * t + n.phase2 + std::numbers::pi));
  a[kPelvis].y += n.root_yaw;
  return a;
}

void forward_kinematics(const JointAngles& angles, double scale, const Vec3& root, std::span<Vec3> out) {
  std::array<Mat3, kJoints> global;
  for (std::size_t j = 0; j < kJoints; ++j) {
    const int p = kParents[j];
    const Mat3 local = euler(angles[j]);
    if (p < 0) {
      global[j] = local;
      out[j] = root;
    } else {
      global[j] = global[p] * local;
      out[j] = out[p] + scale * (global[p] * kRestOffsets[j]);
    }
  }
}

}  // namespace

std::string class_name(int class_id) {
  if (class_id >= 0 && std::size_t(class_id) < kClassNames.size()) return kClassNames[class_id];
  return "class" + std::to_string(class_id);
}

const char* to_string(Split s) { return s == Split::Train ? "train" : "val"; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(seed ^ splitmix64(counter + 0x632BE59BD9B4E019ull));
}

GestureClassSpec make_class_spec(int class_id, double peak_time_fraction, double divergence_width) {
  GestureClassSpec s;
  s.class_id = class_id;
  s.peak_time_fraction = peak_time_fraction;
  s.divergence_width = divergence_width;
  auto& d = s.divergence;
  auto set = [&](int j, double x, double y, double z) { d[j] = {x * kDeg, y * kDeg, z * kDeg}; };
  switch (class_id) {
    case 0: set(kRShoulder, 0, 0, -85); break;
    case 1:
      set(kLShoulder, -20, 0, 0), set(kRShoulder, -20, 0, 0);
      set(kLElbow, -90, 0, 0), set(kRElbow, -90, 0, 0);
      break;
    case 2: set(kRShoulder, -45, 0, 0), set(kRElbow, -130, 0, 0); break;
    case 3: set(kLShoulder, 0, 0, 150), set(kLElbow, 0, 0, 15); break;
    case 4: set(kLShoulder, -20, 0, 30), set(kLElbow, -150, 0, 0); break;
    case 5:
      set(kLShoulder, -80, 0, 0), set(kRShoulder, -80, 0, 0);
      set(kLElbow, -50, 0, 0), set(kRElbow, -50, 0, 0), set(kNeck, 15, 0, 0);
      break;
    case 6: set(kLShoulder, 0, 0, 90), set(kRShoulder, 0, 0, -90); break;
    case 7: set(kSpine, 35, 0, 0), set(kLShoulder, -40, 0, 0), set(kRShoulder, -40, 0, 0); break;
    case 8: set(kRHip, -80, 0, 0), set(kLHip, -80, 0, 0), set(kRKnee, 90, 0, 0), set(kLKnee, 90, 0, 0); break;
    case 9:
      set(kRHip, -50, 0, 0), set(kLHip, -50, 0, 0), set(kRKnee, 70, 0, 0), set(kLKnee, 70, 0, 0);
      set(kSpine, 20, 0, 0);
      break;
    case 10:
      set(kLShoulder, -60, 0, 0), set(kLElbow, -100, 0, 0), set(kSpine, 0, -30, 0), set(kNeck, 0, 30, 0);
      break;
    case 11:
      set(kLShoulder, 35, 0, 0), set(kRShoulder, 35, 0, 0), set(kLElbow, -40, 0, 0), set(kRElbow, -40, 0, 0);
      set(kNeck, 20, 0, 0);
      break;
    case 12: set(kSpine, 20, 0, 0), set(kLShoulder, -60, 0, 0), set(kRHip, -40, 0, 0), set(kLKnee, 30, 0, 0); break;
    case 13:
      set(kLHip, -50, 0, 0), set(kRHip, 30, 0, 0), set(kLKnee, 30, 0, 0);
      set(kRShoulder, -40, 0, 0), set(kLShoulder, 30, 0, 0);
      break;
    case 14: set(kSpine, 0, 45, 0), set(kRShoulder, 0, 0, -45); break;
    default: {
      std::mt19937_64 rng(derive_seed(0xC1A55ull, std::uint64_t(class_id)));
      const std::array<int, 8> pool = {kLShoulder, kRShoulder, kLElbow, kRElbow, kLHip, kRHip, kSpine, kNeck};
      for (int k = 0; k < 3; ++k) {
        const int j = pool[std::uniform_int_distribution<int>(0, int(pool.size()) - 1)(rng)];
        std::uniform_real_distribution<double> ang(30.0, 90.0);
        std::bernoulli_distribution neg(0.5);
        const double v = (neg(rng) ? -1.0 : 1.0) * ang(rng);
        switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
          case 0: d[j].x += v * kDeg; break;
          case 1: d[j].y += v * kDeg; break;
          default: d[j].z += v * kDeg; break;
        }
      }
    }
  }
  return s;
}

Vec3 CameraModel::to_camera(const Vec3& w) const {
  const auto& r = rotation;
  return {r[0] * w.x + r[1] * w.y + r[2] * w.z + translation.x, r[3] * w.x + r[4] * w.y + r[5] * w.z + translation.y,
          r[6] * w.x + r[7] * w.y + r[8] * w.z + translation.z};
}

CameraModel make_orbit_camera(double azimuth, double distance, double height, std::size_t image_size,
                              double focal_scale) {
  CameraModel c;
  c.image_size = image_size;
  c.focal = focal_scale * double(image_size);
  c.cx = c.cy = 0.5 * double(image_size);
  const double s = std::sin(azimuth), co = std::cos(azimuth);
  // Rows are the camera axes in world coordinates: x right, y down, z forward.
  c.rotation = {co, 0, -s, 0, -1, 0, -s, 0, -co};
  const Vec3 center{distance * s, height, distance * co};
  const Vec3 rc = c.to_camera(center);  // translation is still zero here
  c.translation = {-rc.x, -rc.y, -rc.z};
  return c;
}

std::vector<CameraModel> default_camera_rig(std::size_t count, std::size_t image_size) {
  std::vector<CameraModel> rig;
  for (std::size_t i = 0; i < count; ++i) {
    const double az = count == 1 ? 0.0 : (-30.0 + 60.0 * double(i) / double(count - 1)) * kDeg;
    rig.push_back(make_orbit_camera(az, 4500.0, 100.0, image_size));
  }
  return rig;
}

std::vector<Pixel> project_camera(std::span<const Vec3> pts, const CameraModel& cam) {
  std::vector<Pixel> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    require(p.z > 0.0, ErrorKind::Data, "project_camera: point behind the camera");
    out.push_back({cam.focal * p.x / p.z + cam.cx, cam.focal * p.y / p.z + cam.cy});
  }
  return out;
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb limb_color(std::size_t joint) {
  switch (joint) {
    case kLHip: case kLKnee: case kLAnkle: case kLShoulder: case kLElbow: case kLWrist: return {235, 70, 60};
    case kRHip: case kRKnee: case kRAnkle: case kRShoulder: case kRElbow: case kRWrist: return {60, 120, 240};
    default: return {80, 220, 90};
  }
}

double shade_for_depth(double z) { return std::clamp(1.0 + (4500.0 - z) / 2000.0, 0.45, 1.5); }

void blend(std::vector<std::uint8_t>& img, std::size_t S, std::size_t x, std::size_t y, const Rgb& c, double alpha) {
  const std::size_t plane = S * S, at = y * S + x;
  const double ch[3] = {c.r, c.g, c.b};
  for (std::size_t k = 0; k < 3; ++k) {
    const double v = (1.0 - alpha) * img[k * plane + at] + alpha * std::min(255.0, ch[k]);
    img[k * plane + at] = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
  }
}

// Anti-aliased capsule between a and b (a == b gives a disc).
void draw_capsule(std::vector<std::uint8_t>& img, std::size_t S, Pixel a, Pixel b, double radius, const Rgb& c) {
  const double x0 = std::min(a.u, b.u) - radius - 1, x1 = std::max(a.u, b.u) + radius + 1;
  const double y0 = std::min(a.v, b.v) - radius - 1, y1 = std::max(a.v, b.v) + radius + 1;
  const long cx0 = std::max(0L, long(std::floor(x0))), cx1 = std::min(long(S) - 1, long(std::ceil(x1)));
  const long cy0 = std::max(0L, long(std::floor(y0))), cy1 = std::min(long(S) - 1, long(std::ceil(y1)));
  const double dx = b.u - a.u, dy = b.v - a.v, len2 = dx * dx + dy * dy;
  for (long y = cy0; y <= cy1; ++y)
    for (long x = cx0; x <= cx1; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      double t = len2 > 0 ? ((px - a.u) * dx + (py - a.v) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - (a.u + t * dx), ey = py - (a.v + t * dy);
      const double cover = std::clamp(radius + 0.5 - std::sqrt(ex * ex + ey * ey), 0.0, 1.0);
      if (cover > 0) blend(img, S, std::size_t(x), std::size_t(y), c, cover);
    }
}

}  // namespace

std::vector<std::uint8_t> rasterize_frame(std::span<const Pixel> joints, std::span<const double> depth,
                                          std::size_t S, const RasterStyle& style) {
  require(depth.empty() || depth.size() == joints.size(), ErrorKind::Data, "rasterize_frame: depth size mismatch");
  std::vector<std::uint8_t> img(3 * S * S, style.background);
  if (style.clutter) {
    std::mt19937_64 rng(style.clutter_seed);
    std::uniform_real_distribution<double> pos(0.0, double(S));
    std::uniform_real_distribution<double> col(20.0, 90.0);
    std::uniform_int_distribution<int> count(5, 8);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const double ax = pos(rng), ay = pos(rng), bx = pos(rng), by = pos(rng);
      const Rgb c{col(rng), col(rng), col(rng)};
      for (std::size_t y = std::size_t(std::min(ay, by)); y < std::size_t(std::max(ay, by)) && y < S; ++y)
        for (std::size_t x = std::size_t(std::min(ax, bx)); x < std::size_t(std::max(ax, bx)) && x < S; ++x)
          blend(img, S, x, y, c, 0.6);
    }
  }
  const double line_r = 0.5 * (style.line_width > 0 ? style.line_width : double(S) / 40.0);
  const double joint_r = style.joint_radius > 0 ? style.joint_radius : double(S) / 50.0;
  auto shade = [&](std::size_t j) { return depth.empty() ? 1.0 : shade_for_depth(depth[j]); };
  auto scaled = [](Rgb c, double s) { return Rgb{c.r * s, c.g * s, c.b * s}; };
  if (joints.size() == kJoints) {
    // Far bones first so nearer limbs overwrite them.
    std::vector<std::size_t> order;
    for (std::size_t j = 1; j < kJoints; ++j) order.push_back(j);
    if (!depth.empty())
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return depth[a] + depth[kParents[a]] > depth[b] + depth[kParents[b]];
      });
    for (auto j : order) {
      const std::size_t p = std::size_t(kParents[j]);
      draw_capsule(img, S, joints[p], joints[j], line_r, scaled(limb_color(j), 0.5 * (shade(j) + shade(p))));
    }
  }
  for (std::size_t j = 0; j < joints.size(); ++j)
    draw_capsule(img, S, joints[j], joints[j], joint_r, scaled(limb_color(j), shade(j) * 1.1));
  return img;
}

Kinematics simulate_skeleton(const GestureClassSpec& spec, std::size_t length, std::uint64_t seed) {
  require(length >= 2, ErrorKind::Data, "generate_sequence: length must be at least 2");
  require(spec.peak_time_fraction > 0 && spec.peak_time_fraction < 1, ErrorKind::Config,
          "generate_sequence: peak_time_fraction must lie in (0,1)");
  require(spec.divergence_width > 0, ErrorKind::Config, "generate_sequence: divergence_width must be positive");
  const Nuisance n = draw_nuisance(seed);
  Kinematics k;
  const long peak = std::lround(spec.peak_time_fraction * double(length - 1)) + n.peak_jitter;
  k.peak_frame = std::size_t(std::clamp(peak, 0L, long(length - 1)));
  k.joints.resize(length * kJoints);
  for (std::size_t t = 0; t < length; ++t) {
    JointAngles a = shared_motion(n, double(t));
    const double dt = (double(t) - double(k.peak_frame)) / spec.divergence_width;
    const double env = std::exp(-0.5 * dt * dt);
    for (std::size_t j = 0; j < kJoints; ++j) a[j] = a[j] + env * spec.divergence[j];
    forward_kinematics(a, n.scale, n.root_offset, std::span(k.joints).subspan(t * kJoints, kJoints));
  }
  for (std::size_t j = 1; j < kJoints; ++j) k.bone_lengths.push_back(n.scale * norm(kRestOffsets[j]));
  return k;
}

SyntheticSequence generate_sequence(const GestureClassSpec& spec, const CameraModel& camera, int camera_id,
                                    const SequenceOptions& options, std::uint64_t seed) {
  const Kinematics kin = simulate_skeleton(spec, options.length, seed);
  SyntheticSequence seq;
  seq.class_id = spec.class_id;
  seq.length = options.length;
  seq.image_size = options.image_size;
  seq.peak_frame = kin.peak_frame;
  seq.camera_id = camera_id;
  seq.poses.resize(options.length * kJoints * 3);
  if (options.render) seq.frames.resize(options.length * 3 * options.image_size * options.image_size);
  std::vector<Vec3> cam_pts(kJoints);
  std::vector<double> depth(kJoints);
  for (std::size_t t = 0; t < options.length; ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) {
      cam_pts[j] = camera.to_camera(kin.joints[t * kJoints + j]);
      depth[j] = cam_pts[j].z;
      float* p = seq.poses.data() + (t * kJoints + j) * 3;
      p[0] = float(cam_pts[j].x);
      p[1] = float(cam_pts[j].y);
      p[2] = float(cam_pts[j].z);
    }
    if (!options.render) continue;
    RasterStyle style = options.style;
    style.clutter_seed = derive_seed(seed, 0xBAC6'0000ull);  // static background per sequence
    auto img = rasterize_frame(project_camera(cam_pts, camera), depth, options.image_size, style);
    std::copy(img.begin(), img.end(), seq.frames.begin() + t * img.size());
  }
  return seq;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    if (sequences[i].split == split) out.push_back(i);
  return out;
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  require(cfg.num_classes >= 1, ErrorKind::Config, "dataset: num_classes must be positive");
  require(cfg.sequences_per_class >= 1, ErrorKind::Config, "dataset: sequences_per_class must be positive");
  require(cfg.num_cameras >= 1, ErrorKind::Config, "dataset: num_cameras must be positive");
  require(cfg.image_size >= 8, ErrorKind::Config, "dataset: image_size too small");
  require(cfg.train_fraction > 0 && cfg.train_fraction <= 1, ErrorKind::Config, "dataset: bad train_fraction");
  const auto rig = default_camera_rig(cfg.num_cameras, cfg.image_size);

  Dataset ds;
  ds.manifest.config = cfg;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) ds.manifest.class_names.push_back(class_name(int(c)));
  const std::size_t total = cfg.num_classes * cfg.sequences_per_class;
  ds.sequences.resize(total);

  // Per-class deterministic 80/20 split.
  std::vector<Split> splits(total, Split::Train);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    std::vector<std::size_t> order(cfg.sequences_per_class);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5B1700ull + c));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = std::size_t(std::lround(cfg.train_fraction * double(cfg.sequences_per_class)));
    for (std::size_t r = n_train; r < order.size(); ++r) splits[c * cfg.sequences_per_class + order[r]] = Split::Val;
  }

  detail::parallel_for(total, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t c = i / cfg.sequences_per_class, r = i % cfg.sequences_per_class;
      const int cam = int(r % cfg.num_cameras);
      SequenceOptions opt;
      opt.length = cfg.length;
      opt.image_size = cfg.image_size;
      opt.style.clutter = cfg.clutter;
      auto spec = make_class_spec(int(c), cfg.peak_time_fraction, cfg.divergence_width);
      ds.sequences[i] = generate_sequence(spec, rig[cam], cam, opt, derive_seed(cfg.seed, i));
      ds.sequences[i].split = splits[i];
      char id[32];
      std::snprintf(id, sizeof id, "seq_%04zu", i);
      ds.sequences[i].id = id;
    }
  });
  for (const auto& s : ds.sequences) {
    SequenceRecord r;
    r.id = s.id;
    r.class_id = s.class_id;
    r.split = s.split;
    r.peak_frame = s.peak_frame;
    r.camera_id = s.camera_id;
    r.length = s.length;
    r.poses_file = s.id + ".poses";
    r.frames_file = s.id + ".frames";
    ds.manifest.sequences.push_back(r);
  }
  return ds;
}

namespace {

template <typename T>
void write_array(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims, std::span<const T> data) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  require(n == data.size(), ErrorKind::Data, "array file: payload does not match dims");
  std::ofstream f(path, std::ios::binary);
  require(bool(f), ErrorKind::Data, "cannot write " + path.string());
  auto put_le = [&](std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) f.put(char((v >> (8 * b)) & 0xFF));
  };
  put_le(dims.size(), 4);
  for (auto d : dims) put_le(d, 8);
  if constexpr (sizeof(T) == 1) {
    f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  } else {
    for (T v : data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_le(bits, 4);
    }
  }
  require(bool(f), ErrorKind::Data, "short write to " + path.string());
}

template <typename T>
std::vector<T> read_array(const std::filesystem::path& path, std::vector<std::uint64_t>* dims_out) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), ErrorKind::Data, "cannot open " + path.string());
  auto get_le = [&](int bytes) {
    std::uint64_t v = 0;
    for (int b = 0; b < bytes; ++b) {
      const int c = f.get();
      require(c != EOF, ErrorKind::Data, "truncated header in " + path.string());
      v |= std::uint64_t(std::uint8_t(c)) << (8 * b);
    }
    return v;
  };
  const auto rank = get_le(4);
  require(rank <= 8, ErrorKind::Data, "implausible rank in " + path.string());
  std::vector<std::uint64_t> dims(rank);
  std::uint64_t n = 1;
  for (auto& d : dims) n *= (d = get_le(8));
  std::vector<T> out(n);
  if constexpr (sizeof(T) == 1) {
    f.read(reinterpret_cast<char*>(out.data()), std::streamsize(n));
  } else {
    std::vector<std::uint8_t> raw(n * 4);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint32_t bits = std::uint32_t(raw[4 * i]) | std::uint32_t(raw[4 * i + 1]) << 8 |
                                 std::uint32_t(raw[4 * i + 2]) << 16 | std::uint32_t(raw[4 * i + 3]) << 24;
      std::memcpy(&out[i], &bits, 4);
    }
  }
  require(f.gcount() == std::streamsize(n * sizeof(T)), ErrorKind::Data, "truncated payload in " + path.string());
  if (dims_out) *dims_out = std::move(dims);
  return out;
}

}  // namespace

void write_f32_array(const std::filesystem::path& p, const std::vector<std::uint64_t>& d, std::span<const float> v) {
  write_array<float>(p, d, v);
}
void write_u8_array(const std::filesystem::path& p, const std::vector<std::uint64_t>& d, std::span<const std::uint8_t> v) {
  write_array<std::uint8_t>(p, d, v);
}
std::vector<float> read_f32_array(const std::filesystem::path& p, std::vector<std::uint64_t>* d) {
  return read_array<float>(p, d);
}
std::vector<std::uint8_t> read_u8_array(const std::filesystem::path& p, std::vector<std::uint64_t>* d) {
  return read_array<std::uint8_t>(p, d);
}

std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "cgap2-synthetic-dataset";
  j["version"] = m.version;
  const auto& c = m.config;
  j["config"] = {{"num_classes", c.num_classes},
                 {"sequences_per_class", c.sequences_per_class},
                 {"length", c.length},
                 {"image_size", c.image_size},
                 {"num_cameras", c.num_cameras},
                 {"seed", c.seed},
                 {"peak_time_fraction", c.peak_time_fraction},
                 {"divergence_width", c.divergence_width},
                 {"train_fraction", c.train_fraction},
                 {"clutter", c.clutter},
                 {"ambiguity_threshold_mm", c.ambiguity_threshold_mm},
                 {"separation_threshold_mm", c.separation_threshold_mm}};
  j["pose_space"] = m.camera_space;
  j["pose_layout"] = "f32 little-endian [T,17,3] millimeters; header u32 rank, u64 dims";
  j["frame_layout"] = "u8 [T,3,S,S]; header u32 rank, u64 dims";
  j["class_names"] = m.class_names;
  auto& seqs = j["sequences"];
  seqs = nlohmann::ordered_json::array();
  for (const auto& r : m.sequences)
    seqs.push_back({{"id", r.id},
                    {"class_id", r.class_id},
                    {"split", to_string(r.split)},
                    {"peak_frame", r.peak_frame},
                    {"camera_id", r.camera_id},
                    {"length", r.length},
                    {"poses_file", r.poses_file},
                    {"frames_file", r.frames_file}});
  return j.dump(2) + "\n";
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  try {
    auto j = nlohmann::json::parse(text);
    m.version = j.at("version").get<int>();
    require(m.version == Manifest::kVersion, ErrorKind::Data,
            "dataset manifest version " + std::to_string(m.version) + " is not supported");
    const auto& c = j.at("config");
    m.config.num_classes = c.at("num_classes");
    m.config.sequences_per_class = c.at("sequences_per_class");
    m.config.length = c.at("length");
    m.config.image_size = c.at("image_size");
    m.config.num_cameras = c.at("num_cameras");
    m.config.seed = c.at("seed");
    m.config.peak_time_fraction = c.at("peak_time_fraction");
    m.config.divergence_width = c.at("divergence_width");
    m.config.train_fraction = c.at("train_fraction");
    m.config.clutter = c.at("clutter");
    m.config.ambiguity_threshold_mm = c.value("ambiguity_threshold_mm", m.config.ambiguity_threshold_mm);
    m.config.separation_threshold_mm = c.value("separation_threshold_mm", m.config.separation_threshold_mm);
    m.camera_space = j.value("pose_space", "camera");
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& s : j.at("sequences")) {
      SequenceRecord r;
      r.id = s.at("id");
      r.class_id = s.at("class_id");
      r.split = s.at("split").get<std::string>() == "train" ? Split::Train : Split::Val;
      r.peak_frame = s.at("peak_frame");
      r.camera_id = s.at("camera_id");
      r.length = s.at("length");
      r.poses_file = s.at("poses_file");
      r.frames_file = s.at("frames_file");
      m.sequences.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed dataset manifest: ") + e.what());
  }
  return m;
}

Manifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(out_dir)) {
    require(fs::is_directory(out_dir), ErrorKind::Data, out_dir.string() + " exists and is not a directory");
    const bool empty = fs::directory_iterator(out_dir) == fs::directory_iterator();
    require(empty || overwrite, ErrorKind::Data,
            "refusing to write into non-empty directory " + out_dir.string() + " (pass overwrite)");
    if (!empty)
      for (const auto& e : fs::directory_iterator(out_dir)) fs::remove_all(e.path());
  }
  fs::create_directories(out_dir);
  Dataset ds = generate_dataset(config);
  const std::uint64_t S = config.image_size;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    const auto& r = ds.manifest.sequences[i];
    write_f32_array(out_dir / r.poses_file, {s.length, kJoints, 3}, s.poses);
    write_u8_array(out_dir / r.frames_file, {s.length, 3, S, S}, s.frames);
  }
  std::ofstream(out_dir / "manifest.json") << manifest_json(ds.manifest);
  return ds.manifest;
}

Dataset load_dataset(const std::filesystem::path& dir, bool load_frames) {
  const auto mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  require(bool(f), ErrorKind::Data, "no dataset manifest at " + mpath.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Dataset ds;
  ds.manifest = parse_manifest(text);
  require(!ds.manifest.sequences.empty(), ErrorKind::Data, "dataset at " + dir.string() + " has no sequences");
  const std::uint64_t S = ds.manifest.config.image_size;
  for (const auto& r : ds.manifest.sequences) {
    SyntheticSequence s;
    s.id = r.id;
    s.class_id = r.class_id;
    s.split = r.split;
    s.peak_frame = r.peak_frame;
    s.camera_id = r.camera_id;
    s.length = r.length;
    s.image_size = S;
    std::vector<std::uint64_t> dims;
    s.poses = read_f32_array(dir / r.poses_file, &dims);
    require(dims == std::vector<std::uint64_t>{r.length, kJoints, 3}, ErrorKind::Data,
            "pose file " + r.poses_file + " has unexpected dims");
    if (load_frames) {
      s.frames = read_u8_array(dir / r.frames_file, &dims);
      require(dims == std::vector<std::uint64_t>{r.length, 3, S, S}, ErrorKind::Data,
              "frame file " + r.frames_file + " has unexpected dims");
    }
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

AnticipationSignal measure_anticipation_signal(const Dataset& ds, const SamplerConfig& sampler, std::size_t hop) {
  const std::size_t C = ds.manifest.class_names.size(), D = kJoints * 3;
  auto centred = [&](const SyntheticSequence& s, std::size_t t) {
    auto p = s.pose(t);
    std::vector<double> v(D);
    for (std::size_t j = 0; j < kJoints; ++j)
      for (std::size_t c = 0; c < 3; ++c) v[j * 3 + c] = double(p[j * 3 + c]) - double(p[c]);
    return v;
  };
  std::vector<std::vector<double>> cent_t(C, std::vector<double>(D, 0.0)), cent_c = cent_t;
  std::vector<std::size_t> count(C, 0);
  for (auto i : ds.indices(Split::Train)) {
    const auto& s = ds.sequences[i];
    for (const auto& w : enumerate_windows(sampler, s.length, hop)) {
      auto a = centred(s, w.target_indices[0]), b = centred(s, w.input_indices.back());
      for (std::size_t d = 0; d < D; ++d) cent_t[s.class_id][d] += a[d], cent_c[s.class_id][d] += b[d];
      ++count[s.class_id];
    }
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t d = 0; d < D && count[c]; ++d) cent_t[c][d] /= double(count[c]), cent_c[c][d] /= double(count[c]);
  auto nearest = [&](const std::vector<std::vector<double>>& cents, const std::vector<double>& v) {
    int best = -1;
    double bd = 0;
    for (std::size_t c = 0; c < C; ++c) {
      if (!count[c]) continue;
      double s = 0;
      for (std::size_t d = 0; d < D; ++d) s += (v[d] - cents[c][d]) * (v[d] - cents[c][d]);
      if (best < 0 || s < bd) best = int(c), bd = s;
    }
    return best;
  };
  AnticipationSignal out;
  std::size_t hit_t = 0, hit_c = 0;
  for (auto i : ds.indices(Split::Val)) {
    const auto& s = ds.sequences[i];
    for (const auto& w : enumerate_windows(sampler, s.length, hop)) {
      hit_t += nearest(cent_t, centred(s, w.target_indices[0])) == s.class_id;
      hit_c += nearest(cent_c, centred(s, w.input_indices.back())) == s.class_id;
      ++out.windows;
    }
  }
  if (out.windows) {
    out.target_accuracy = double(hit_t) / double(out.windows);
    out.last_context_accuracy = double(hit_c) / double(out.windows);
  }
  return out;
}

}  // namespace cgap2::synth
