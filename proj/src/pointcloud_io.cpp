#include "plainpt/pointcloud_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "plainpt/rng.hpp"

namespace plainpt {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + what);
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

CloudFormat format_for_path(const std::filesystem::path& path) {
  return lower(path.extension().string()) == ".ply" ? CloudFormat::kPly : CloudFormat::kXyz;
}

PointCloud parse_xyz(std::istream& in, const std::string& source) {
  PointCloud pc;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    auto fields = split_ws(view);
    if (fields.empty()) continue;
    if (fields.size() != 3 && fields.size() != 6) {
      fail_at(source, line_no, "expected 3 or 6 columns, found " + std::to_string(fields.size()));
    }
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns) fail_at(source, line_no, "column count changed from " + std::to_string(columns));
    double v[6];
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_double(fields[c], v[c])) fail_at(source, line_no, "malformed number '" + std::string(fields[c]) + "'");
    }
    pc.coords.push_back({v[0], v[1], v[2]});
    for (std::size_t c = 3; c < columns; ++c) pc.extras.push_back(v[c] / 255.0);
  }
  pc.extra_channels = columns == 6 ? 3 : 0;
  if (pc.coords.empty()) throw FormatError(source + ": no points");
  return pc;
}

PointCloud parse_ply(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") fail_at(source, 1, "missing 'ply' magic");

  std::size_t vertex_count = 0;
  bool have_vertex = false, have_format = false;
  std::vector<std::string> props;
  while (true) {
    if (!next_line()) fail_at(source, line_no, "unterminated header");
    auto f = split_ws(line);
    if (f.empty()) continue;
    if (f[0] == "end_header") break;
    if (f[0] == "comment" || f[0] == "obj_info") continue;
    if (f[0] == "format") {
      if (f.size() < 2 || f[1] != "ascii") {
        throw UnsupportedFormatError(source + ":" + std::to_string(line_no) + ": unsupported PLY format '" +
                                     (f.size() > 1 ? std::string(f[1]) : std::string()) + "' (only ascii)");
      }
      have_format = true;
    } else if (f[0] == "element") {
      if (f.size() != 3) fail_at(source, line_no, "malformed element line");
      if (f[1] != "vertex" || have_vertex) {
        throw UnsupportedFormatError(source + ":" + std::to_string(line_no) + ": unsupported PLY element '" +
                                     std::string(f[1]) + "' (only a single vertex element)");
      }
      double count = 0;
      if (!parse_double(f[2], count) || count < 0 || count != std::floor(count)) {
        fail_at(source, line_no, "bad vertex count");
      }
      vertex_count = static_cast<std::size_t>(count);
      have_vertex = true;
    } else if (f[0] == "property") {
      if (!have_vertex) fail_at(source, line_no, "property before element");
      if (f.size() != 3 || f[1] == "list") {
        throw UnsupportedFormatError(source + ":" + std::to_string(line_no) + ": unsupported PLY property '" + line + "'");
      }
      props.emplace_back(f[2]);
    } else {
      fail_at(source, line_no, "unexpected header line '" + line + "'");
    }
  }
  if (!have_format || !have_vertex) fail_at(source, line_no, "header lacks format or vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const std::string& p = props[i];
    int* slot = p == "x" ? &ix : p == "y" ? &iy : p == "z" ? &iz : p == "red" ? &ir : p == "green" ? &ig
              : p == "blue" ? &ib : nullptr;
    if (slot == nullptr) {
      throw UnsupportedFormatError(source + ": unsupported PLY vertex property '" + p + "'");
    }
    *slot = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail_at(source, line_no, "vertex element lacks x, y or z");
  const bool colors = ir >= 0 || ig >= 0 || ib >= 0;
  if (colors && (ir < 0 || ig < 0 || ib < 0)) fail_at(source, line_no, "partial color properties");

  PointCloud pc;
  pc.extra_channels = colors ? 3 : 0;
  pc.coords.reserve(vertex_count);
  std::vector<double> v(props.size());
  while (pc.coords.size() < vertex_count) {
    if (!next_line()) fail_at(source, line_no, "expected " + std::to_string(vertex_count) + " vertices");
    auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != props.size()) {
      fail_at(source, line_no, "expected " + std::to_string(props.size()) + " values, found " + std::to_string(f.size()));
    }
    for (std::size_t c = 0; c < f.size(); ++c) {
      if (!parse_double(f[c], v[c])) fail_at(source, line_no, "malformed number '" + std::string(f[c]) + "'");
    }
    pc.coords.push_back({v[ix], v[iy], v[iz]});
    if (colors) {
      pc.extras.push_back(v[ir] / 255.0);
      pc.extras.push_back(v[ig] / 255.0);
      pc.extras.push_back(v[ib] / 255.0);
    }
  }
  while (next_line()) {
    if (!split_ws(line).empty()) fail_at(source, line_no, "data after the last vertex");
  }
  if (pc.coords.empty()) throw FormatError(source + ": no points");
  return pc;
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open point cloud '" + path.string() + "'");
  PointCloud pc = format_for_path(path) == CloudFormat::kPly ? parse_ply(in, path.string()) : parse_xyz(in, path.string());
  pc.validate();
  return pc;
}

std::string format_point_cloud(const PointCloud& pc, CloudFormat format) {
  pc.validate();
  if (pc.has_extras() && pc.extra_channels != 3) {
    throw std::invalid_argument("only 3-channel color extras can be written");
  }
  std::ostringstream os;
  if (format == CloudFormat::kPly) {
    os << "ply\nformat ascii 1.0\nelement vertex " << pc.size()
       << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (pc.has_extras()) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "end_header\n";
  }
  for (std::size_t i = 0; i < pc.size(); ++i) {
    os << fmt9(pc.coords[i][0]) << ' ' << fmt9(pc.coords[i][1]) << ' ' << fmt9(pc.coords[i][2]);
    for (double c : pc.extra_row(i)) {
      if (format == CloudFormat::kPly) {
        os << ' ' << static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
      } else {
        os << ' ' << fmt9(c * 255.0);
      }
    }
    os << '\n';
  }
  return os.str();
}

void save_point_cloud(const PointCloud& pc, const std::filesystem::path& path, CloudFormat format) {
  const std::string text = format_point_cloud(pc, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write point cloud '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing point cloud '" + path.string() + "'");
}

void save_point_cloud(const PointCloud& pc, const std::filesystem::path& path) {
  save_point_cloud(pc, path, format_for_path(path));
}

std::vector<std::array<double, 3>> patch_palette(std::size_t patches, std::uint64_t seed) {
  // Colors live on the 0-255 integer lattice so they survive PLY output.
  Rng rng(seed, 0xc0105);
  std::set<std::array<int, 3>> used;
  std::vector<std::array<double, 3>> palette;
  while (palette.size() < patches) {
    std::array<int, 3> c{static_cast<int>(rng.below(224)) + 32, static_cast<int>(rng.below(224)) + 32,
                         static_cast<int>(rng.below(224)) + 32};
    if (!used.insert(c).second) continue;
    palette.push_back({c[0] / 255.0, c[1] / 255.0, c[2] / 255.0});
  }
  return palette;
}

PointCloud color_by_patch(const PointCloud& pc, const PatchSet& ps, std::uint64_t seed) {
  const auto palette = patch_palette(ps.num_patches(), seed);
  PointCloud out;
  out.extra_channels = 3;
  for (std::size_t m = 0; m < ps.num_patches(); ++m) {
    auto row = ps.row(m);
    std::set<std::size_t> unique(row.begin(), row.end());
    for (std::size_t i : unique) {
      out.coords.push_back(pc.coords.at(i));
      out.extras.insert(out.extras.end(), palette[m].begin(), palette[m].end());
    }
  }
  return out;
}

std::string format_assignment(const PatchSet& ps) {
  std::ostringstream os;
  os << "# patches " << ps.num_patches() << " samples " << ps.samples << " group " << to_string(ps.grouping) << '\n';
  os << "# key_index assigned_indices...\n";
  for (std::size_t m = 0; m < ps.num_patches(); ++m) {
    os << ps.keys.source_indices[m];
    for (std::size_t i : ps.row(m)) os << ' ' << i;
    os << '\n';
  }
  return os.str();
}

}  // namespace plainpt
