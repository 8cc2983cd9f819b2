#include "vgw/trajio.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vgw/checkpoint.hpp"
#include "vgw/errors.hpp"

namespace vgw {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

void write_meta(std::ofstream& out, const std::vector<std::string>& meta) {
  for (const std::string& line : meta) out << "# " << line << "\n";
}

void write_frame_line(std::ofstream& out, const std::vector<int>& frames) {
  out << "# frame_indices:";
  for (int f : frames) out << ' ' << f;
  out << "\n";
}

std::vector<int> parse_frame_line(const std::string& line) {
  std::istringstream is(line.substr(std::string("# frame_indices:").size()));
  std::vector<int> frames;
  int f;
  while (is >> f) frames.push_back(f);
  return frames;
}

std::vector<double> parse_csv_row(const std::string& line, const std::string& path) {
  std::vector<double> vals;
  std::istringstream is(line);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    try {
      size_t used = 0;
      vals.push_back(std::stod(cell, &used));
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError("'" + path + "': bad numeric cell '" + cell + "'");
    }
  }
  return vals;
}

void check_counts(size_t frames, size_t rows, const char* what, const std::string& path) {
  if (frames != rows) {
    throw ValidationError("'" + path + "': " + std::to_string(rows) + " " + what + " rows vs " +
                          std::to_string(frames) + " frame indices");
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_depth_csv(const std::string& path, const std::vector<int>& frames,
                     const std::vector<Tensor>& maps, const std::vector<std::string>& meta) {
  if (frames.size() != maps.size()) throw ValidationError("depth export: frame/map count mismatch");
  std::ofstream out = open_out(path);
  write_meta(out, meta);
  out << "# columns: grid*grid row-major depth values, one row per frame\n";
  write_frame_line(out, frames);
  for (const Tensor& m : maps) {
    for (size_t i = 0; i < m.data.size(); ++i) {
      if (i) out << ',';
      out << format_double(m.data[i]);
    }
    out << "\n";
  }
  finish_out(out, path);
}

DepthSeries read_depth_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  DepthSeries s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# frame_indices:", 0) == 0) s.frames = parse_frame_line(line);
      continue;
    }
    const std::vector<double> vals = parse_csv_row(line, path);
    const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(vals.size()))));
    if (static_cast<size_t>(g) * static_cast<size_t>(g) != vals.size()) {
      throw ValidationError("'" + path + "': row of " + std::to_string(vals.size()) +
                            " values is not a square depth map");
    }
    s.maps.push_back(Tensor::from({g, g}, vals));
  }
  if (s.frames.empty() && !s.maps.empty()) {
    throw ValidationError("'" + path + "': missing frame_indices header");
  }
  check_counts(s.frames.size(), s.maps.size(), "depth", path);
  return s;
}

void write_poses_csv(const std::string& path, const std::vector<int>& frames,
                     const std::vector<Pose>& poses, const std::vector<std::string>& meta) {
  if (frames.size() != poses.size()) throw ValidationError("pose export: frame/pose count mismatch");
  std::ofstream out = open_out(path);
  write_meta(out, meta);
  out << "# columns: r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz (world-to-camera)\n";
  write_frame_line(out, frames);
  for (const Pose& p : poses) {
    for (int i = 0; i < 9; ++i) {
      if (i) out << ',';
      out << format_double(p.R[static_cast<size_t>(i)]);
    }
    for (int i = 0; i < 3; ++i) out << ',' << format_double(p.t[static_cast<size_t>(i)]);
    out << "\n";
  }
  finish_out(out, path);
}

PoseSeries read_poses_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  PoseSeries s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# frame_indices:", 0) == 0) s.frames = parse_frame_line(line);
      continue;
    }
    const std::vector<double> vals = parse_csv_row(line, path);
    if (vals.size() != 12) {
      throw ValidationError("'" + path + "': pose row needs 12 values, got " +
                            std::to_string(vals.size()));
    }
    Pose p;
    for (int i = 0; i < 9; ++i) p.R[static_cast<size_t>(i)] = vals[static_cast<size_t>(i)];
    for (int i = 0; i < 3; ++i) p.t[static_cast<size_t>(i)] = vals[static_cast<size_t>(9 + i)];
    s.poses.push_back(p);
  }
  if (s.frames.empty() && !s.poses.empty()) {
    throw ValidationError("'" + path + "': missing frame_indices header");
  }
  check_counts(s.frames.size(), s.poses.size(), "pose", path);
  return s;
}

void write_points_xyz(const std::string& path, const std::vector<int>& frames,
                      const std::vector<Tensor>& clouds, const std::vector<std::string>& meta) {
  if (frames.size() != clouds.size()) {
    throw ValidationError("point export: frame/cloud count mismatch");
  }
  std::ofstream out = open_out(path);
  write_meta(out, meta);
  for (size_t f = 0; f < frames.size(); ++f) {
    const Tensor& c = clouds[f];
    if (c.shape.size() != 2 || c.shape[1] != 3) {
      throw ValidationError("point export: cloud must be [n, 3], got " + shape_str(c.shape));
    }
    out << "# frame " << frames[f] << "\n";
    for (int64_t i = 0; i < c.shape[0]; ++i) {
      out << format_double(c.at(i, 0)) << ' ' << format_double(c.at(i, 1)) << ' '
          << format_double(c.at(i, 2)) << "\n";
    }
  }
  finish_out(out, path);
}

PointSeries read_points_xyz(const std::string& path) {
  std::ifstream in = open_in(path);
  PointSeries s;
  std::vector<double> cur;
  bool in_frame = false;
  const auto flush = [&] {
    if (!in_frame) return;
    if (cur.empty()) throw ValidationError("'" + path + "': frame with no points");
    const int64_t n = static_cast<int64_t>(cur.size()) / 3;
    s.clouds.push_back(Tensor::from({n, 3}, cur));
    cur.clear();
  };
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# frame ", 0) == 0) {
      flush();
      in_frame = true;
      try {
        s.frames.push_back(std::stoi(line.substr(8)));
      } catch (const std::exception&) {
        throw ValidationError("'" + path + "': bad frame marker '" + line + "'");
      }
      continue;
    }
    if (line[0] == '#') continue;
    if (!in_frame) throw ValidationError("'" + path + "': point data before any frame marker");
    std::istringstream is(line);
    double x, y, z;
    if (!(is >> x >> y >> z)) {
      throw ValidationError("'" + path + "': bad point line '" + line + "'");
    }
    cur.push_back(x);
    cur.push_back(y);
    cur.push_back(z);
  }
  flush();
  check_counts(s.frames.size(), s.clouds.size(), "point cloud", path);
  return s;
}

void save_states(const std::string& path, const std::vector<GeometryState>& states,
                 const std::string& config_json) {
  if (states.empty()) throw ValidationError("state export: empty sequence");
  const Tensor& t0 = states.front().tokens;
  const int64_t n = t0.shape[0], d = t0.shape[1];
  Tensor tokens({static_cast<int64_t>(states.size()) * n, d});
  Tensor frames({static_cast<int64_t>(states.size())});
  for (size_t f = 0; f < states.size(); ++f) {
    const Tensor& tok = states[f].tokens;
    if (!tok.same_shape(t0)) throw ValidationError("state export: token shape varies by frame");
    std::copy(tok.data.begin(), tok.data.end(),
              tokens.data.begin() + static_cast<int64_t>(f) * n * d);
    frames.data[f] = static_cast<double>(states[f].frame_index);
  }
  ParamSet ps;
  ps.add("tokens", std::move(tokens));
  ps.add("frame_indices", std::move(frames));
  save_checkpoint(path, config_json, ps);
}

StatesFile load_states(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  StatesFile out;
  out.config_json = ck.config_json;
  const Tensor& tokens = ck.params.at("tokens");
  const Tensor& frames = ck.params.at("frame_indices");
  if (tokens.shape.size() != 2 || frames.shape.size() != 1) {
    throw ValidationError("'" + path + "': unexpected tensor layout for latent states");
  }
  const int64_t t = frames.shape[0];
  if (t == 0 || tokens.shape[0] % t != 0) {
    throw ValidationError("'" + path + "': token rows not divisible by frame count");
  }
  const int64_t n = tokens.shape[0] / t, d = tokens.shape[1];
  for (int64_t f = 0; f < t; ++f) {
    GeometryState st;
    st.frame_index = static_cast<int>(frames.data[static_cast<size_t>(f)]);
    st.tokens = Tensor({n, d});
    std::copy(tokens.data.begin() + f * n * d, tokens.data.begin() + (f + 1) * n * d,
              st.tokens.data.begin());
    out.states.push_back(std::move(st));
  }
  return out;
}

void write_geometry_dir(const std::string& dir, const std::vector<int>& frames,
                        const std::vector<Tensor>& depths, const std::vector<Tensor>& points,
                        const std::vector<Pose>& poses, const std::vector<std::string>& meta) {
  ensure_dir(dir);
  write_depth_csv(dir + "/depth.csv", frames, depths, meta);
  write_points_xyz(dir + "/points.xyz", frames, points, meta);
  write_poses_csv(dir + "/poses.csv", frames, poses, meta);
}

}  // namespace vgw
