#pragma once
/// Flat-color segmentation renderer: object / ground / background, scanline
/// polygon fill with pixel-center sampling, no anti-aliasing. Frames are
/// bit-deterministic across runs.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dpm/geometry.hpp"

namespace dpm {

struct Frame {
  int width = 50;
  int height = 50;
  std::vector<std::uint8_t> pixels;  // row-major RGB, top row first

  Frame() : pixels(static_cast<size_t>(width) * height * 3, 0) {}
  Frame(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<size_t>(y) * width + x) * 3];
  }
  bool operator==(const Frame& o) const {
    return width == o.width && height == o.height && pixels == o.pixels;
  }
};

using Rgb = std::array<std::uint8_t, 3>;

// Fixed segmentation palette, identical for every dataset.
inline constexpr Rgb kColorBackground{255, 255, 255};
inline constexpr Rgb kColorGround{70, 70, 70};
inline constexpr Rgb kColorObject{220, 60, 50};

/// Axis-aligned world-frame camera window. Fixed per task.
struct CameraWindow {
  Vec2 center{0.0, 0.3};
  double width = 1.2;   // meters
  double height = 1.2;  // meters
};

struct Scene {
  const Polygon* object = nullptr;  // nullable: empty scene
  Pose2 pose;
  std::vector<HalfPlane> environment;
  CameraWindow camera;
  int frame_width = 50;
  int frame_height = 50;
};

Frame render_frame(const Scene& scene);

std::vector<Frame> render_video(const Polygon& object, const std::vector<Pose2>& trajectory,
                                const std::vector<HalfPlane>& environment,
                                const CameraWindow& camera, int width = 50, int height = 50);

/// Camera centered on the bounding box of the object sweep along a
/// trajectory (default window size if the sweep fits).
CameraWindow camera_for_trajectory(const Polygon& object, const std::vector<Pose2>& trajectory,
                                   double window = 1.2);

void write_ppm(const Frame& frame, const std::string& path);
Frame read_ppm(const std::string& path);

}  // namespace dpm
