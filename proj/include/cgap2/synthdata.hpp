#pragma once

// Synthetic gesture sequences: a 17-joint skeleton whose classes share a
// common motion and diverge only inside a Gaussian window centred on a
// class-specific peak frame, viewed by pinhole cameras and rasterized as
// colour stick figures.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cgap2/sampler.hpp"

namespace cgap2::synth {

inline constexpr std::size_t kJoints = 17;

/// Parent of each joint in the pelvis-rooted Human3.6M ordering.
inline constexpr std::array<int, kJoints> kParents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};

/// Table-style action names; classes beyond the list are named "class<id>".
std::string class_name(int class_id);

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

/// Per-joint Euler angles (radians, applied X then Y then Z in the joint frame).
using JointAngles = std::array<Vec3, kJoints>;

struct GestureClassSpec {
  int class_id = 0;
  double peak_time_fraction = 0.92;  // peak frame = fraction * (T - 1), before jitter
  double divergence_width = 6.0;     // Gaussian sigma of the class envelope, frames
  JointAngles divergence{};          // angle offsets reached at the envelope peak
};

/// Built-in divergence pattern for a class id (ids >= 15 get a seeded mix).
GestureClassSpec make_class_spec(int class_id, double peak_time_fraction = 0.92, double divergence_width = 6.0);

struct CameraModel {
  double focal = 110.0;  // pixels
  double cx = 32.0, cy = 32.0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // world -> camera, row-major
  Vec3 translation{};
  std::size_t image_size = 64;

  Vec3 to_camera(const Vec3& world) const;
};

/// Camera on a horizontal circle around the subject, looking at `target`.
CameraModel make_orbit_camera(double azimuth_rad, double distance_mm, double height_mm, std::size_t image_size,
                              double focal_scale = 1.75);

/// The default rig: `count` cameras spread over +-30 degrees of azimuth.
std::vector<CameraModel> default_camera_rig(std::size_t count, std::size_t image_size);

struct Pixel {
  double u = 0, v = 0;
};

/// Pinhole projection of camera-space points (millimeters) to pixels.
std::vector<Pixel> project_camera(std::span<const Vec3> camera_points, const CameraModel& camera);

struct RasterStyle {
  bool clutter = false;            // seeded random rectangles behind the figure
  std::uint64_t clutter_seed = 0;
  double line_width = 0.0;         // 0 selects image_size / 40
  double joint_radius = 0.0;       // 0 selects image_size / 50
  std::uint8_t background = 16;
};

/// Renders an 8-bit [3,S,S] image. With 17 joints the skeleton bones are
/// drawn; every joint gets a disc. `depth_mm` (same length as `joints`, may be
/// empty) modulates brightness so nearer parts appear brighter.
std::vector<std::uint8_t> rasterize_frame(std::span<const Pixel> joints, std::span<const double> depth_mm,
                                          std::size_t image_size, const RasterStyle& style = {});

enum class Split { Train, Val };
const char* to_string(Split s);

struct SyntheticSequence {
  std::string id;
  int class_id = 0;
  std::size_t length = 0;
  std::size_t image_size = 0;
  std::size_t peak_frame = 0;
  int camera_id = 0;
  Split split = Split::Train;
  std::vector<float> poses;          // [T,17,3] camera-space millimeters
  std::vector<std::uint8_t> frames;  // [T,3,S,S]

  std::span<const float> pose(std::size_t t) const { return std::span(poses).subspan(t * kJoints * 3, kJoints * 3); }
  std::span<const std::uint8_t> frame(std::size_t t) const {
    const std::size_t n = 3 * image_size * image_size;
    return std::span(frames).subspan(t * n, n);
  }
};

struct SequenceOptions {
  std::size_t length = 86;
  std::size_t image_size = 64;
  bool render = true;  // false skips rasterization (poses only)
  RasterStyle style{};
};

/// World-space joint positions of the skeleton for every frame, plus the
/// jittered peak frame. Deterministic in (spec, length, seed); the per-sequence
/// nuisance draws depend only on the seed, so two classes generated with one
/// seed differ only through their divergence envelopes.
struct Kinematics {
  std::vector<Vec3> joints;  // [T*17]
  std::vector<double> bone_lengths;
  std::size_t peak_frame = 0;
};
Kinematics simulate_skeleton(const GestureClassSpec& spec, std::size_t length, std::uint64_t seed);

SyntheticSequence generate_sequence(const GestureClassSpec& spec, const CameraModel& camera, int camera_id,
                                    const SequenceOptions& options, std::uint64_t seed);

/// Mixes a dataset seed and a counter into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter);

struct DatasetConfig {
  std::size_t num_classes = 6;
  std::size_t sequences_per_class = 10;
  std::size_t length = 86;
  std::size_t image_size = 64;
  std::size_t num_cameras = 4;
  std::uint64_t seed = 7;
  double peak_time_fraction = 0.92;
  double divergence_width = 6.0;
  double train_fraction = 0.8;
  bool clutter = false;
  // Self-check thresholds on mean per-joint distance between classes.
  double ambiguity_threshold_mm = 10.0;
  double separation_threshold_mm = 40.0;
};

struct SequenceRecord {
  std::string id;
  int class_id = 0;
  Split split = Split::Train;
  std::size_t peak_frame = 0;
  int camera_id = 0;
  std::size_t length = 0;
  std::string poses_file;
  std::string frames_file;
};

struct Manifest {
  static constexpr int kVersion = 1;
  int version = kVersion;
  DatasetConfig config;
  std::vector<std::string> class_names;
  std::vector<SequenceRecord> sequences;
  std::string camera_space = "camera";
};

struct Dataset {
  Manifest manifest;
  std::vector<SyntheticSequence> sequences;  // same order as manifest.sequences

  std::vector<std::size_t> indices(Split split) const;
};

/// Generates every sequence in memory (no I/O).
Dataset generate_dataset(const DatasetConfig& config);

/// Generates and writes manifest.json plus one .poses and one .frames file per
/// sequence. Refuses a non-empty directory unless `overwrite`.
Manifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir, bool overwrite = false);

Dataset load_dataset(const std::filesystem::path& dir, bool load_frames = true);

std::string manifest_json(const Manifest& manifest);
Manifest parse_manifest(const std::string& text);

// Array files: u32 rank, u64 dims, then little-endian payload.
void write_f32_array(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims, std::span<const float> data);
void write_u8_array(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                    std::span<const std::uint8_t> data);
std::vector<float> read_f32_array(const std::filesystem::path& path, std::vector<std::uint64_t>* dims);
std::vector<std::uint8_t> read_u8_array(const std::filesystem::path& path, std::vector<std::uint64_t>* dims);

/// Nearest-centroid probe of how much class information a frame carries:
/// centroids of root-centred poses are fitted on training windows and scored
/// on validation windows, once at the target frame and once at the last
/// context frame.
struct AnticipationSignal {
  double target_accuracy = 0.0;
  double last_context_accuracy = 0.0;
  std::size_t windows = 0;
};
AnticipationSignal measure_anticipation_signal(const Dataset& dataset, const SamplerConfig& sampler, std::size_t hop = 1);

}  // namespace cgap2::synth
