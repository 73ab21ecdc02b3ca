#include "dpm/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dpm {

namespace {

void set_pixel(Frame& f, int x, int y, const Rgb& c) {
  std::uint8_t* p = f.at(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

}  // namespace

Frame render_frame(const Scene& scene) {
  Frame frame(scene.frame_width, scene.frame_height);
  const double px_w = scene.camera.width / frame.width;
  const double px_h = scene.camera.height / frame.height;
  const double x0 = scene.camera.center.x - 0.5 * scene.camera.width;
  const double y1 = scene.camera.center.y + 0.5 * scene.camera.height;

  // Background and ground. Pixel centers sample the world; row 0 is the top.
  for (int py = 0; py < frame.height; ++py) {
    const double wy = y1 - (py + 0.5) * px_h;
    for (int px = 0; px < frame.width; ++px) {
      const double wx = x0 + (px + 0.5) * px_w;
      Rgb color = kColorBackground;
      for (const HalfPlane& plane : scene.environment) {
        if (plane.distance({wx, wy}) < 0.0) {
          color = kColorGround;
          break;
        }
      }
      set_pixel(frame, px, py, color);
    }
  }

  if (scene.object == nullptr || scene.object->size() < 3) return frame;

  // World-frame edges of the object.
  const int n = scene.object->size();
  std::vector<Vec2> world(n);
  for (int i = 0; i < n; ++i) world[i] = body_to_world(scene.pose, scene.object->vertex(i));

  // Scanline fill, even-odd rule, half-open edges in y.
  for (int py = 0; py < frame.height; ++py) {
    const double wy = y1 - (py + 0.5) * px_h;
    std::vector<double> crossings;
    for (int i = 0; i < n; ++i) {
      const Vec2& a = world[i];
      const Vec2& b = world[(i + 1) % n];
      if ((a.y > wy) != (b.y > wy)) {
        crossings.push_back(a.x + (wy - a.y) / (b.y - a.y) * (b.x - a.x));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (size_t k = 0; k + 1 < crossings.size(); k += 2) {
      int px_lo = static_cast<int>(std::ceil((crossings[k] - x0) / px_w - 0.5));
      int px_hi = static_cast<int>(std::floor((crossings[k + 1] - x0) / px_w - 0.5));
      px_lo = std::max(px_lo, 0);
      px_hi = std::min(px_hi, frame.width - 1);
      for (int px = px_lo; px <= px_hi; ++px) set_pixel(frame, px, py, kColorObject);
    }
  }
  return frame;
}

std::vector<Frame> render_video(const Polygon& object, const std::vector<Pose2>& trajectory,
                                const std::vector<HalfPlane>& environment,
                                const CameraWindow& camera, int width, int height) {
  std::vector<Frame> frames;
  frames.reserve(trajectory.size());
  Scene scene;
  scene.object = &object;
  scene.environment = environment;
  scene.camera = camera;
  scene.frame_width = width;
  scene.frame_height = height;
  for (const Pose2& pose : trajectory) {
    scene.pose = pose;
    frames.push_back(render_frame(scene));
  }
  return frames;
}

CameraWindow camera_for_trajectory(const Polygon& object, const std::vector<Pose2>& trajectory,
                                   double window) {
  double lo_x = 1e30, hi_x = -1e30, lo_y = 1e30, hi_y = -1e30;
  for (const Pose2& pose : trajectory) {
    for (const Vec2& v : object.vertices) {
      const Vec2 w = body_to_world(pose, v);
      lo_x = std::min(lo_x, w.x);
      hi_x = std::max(hi_x, w.x);
      lo_y = std::min(lo_y, w.y);
      hi_y = std::max(hi_y, w.y);
    }
  }
  CameraWindow cam;
  cam.center = {0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y)};
  cam.width = std::max(window, hi_x - lo_x + 0.1);
  cam.height = std::max(window, hi_y - lo_y + 0.1);
  return cam;
}

void write_ppm(const Frame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()),
            static_cast<std::streamsize>(frame.pixels.size()));
}

Frame read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) {
    throw std::runtime_error("read_ppm: unsupported or corrupt header in " + path);
  }
  in.get();  // single whitespace after header
  Frame frame(w, h);
  in.read(reinterpret_cast<char*>(frame.pixels.data()),
          static_cast<std::streamsize>(frame.pixels.size()));
  if (!in) throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  return frame;
}

}  // namespace dpm
