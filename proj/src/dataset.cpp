#include "umif/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and are written with raw scalar dumps");

namespace umif {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(std::string("bad number in ") + what + ": '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string recipe_to_string(const Recipe& r) {
  std::string out;
  for (size_t i = 0; i < r.size(); ++i) {
    if (i) out += "|";
    const Primitive& pr = r[i];
    switch (pr.kind) {
      case Primitive::Kind::Box:
        out += "box(" + fmt_double(pr.p[0]) + "," + fmt_double(pr.p[1]) + "," +
               fmt_double(pr.p[2]) + "," + fmt_double(pr.p[3]) + "," + fmt_double(pr.p[4]) + "," +
               fmt_double(pr.p[5]) + ")";
        break;
      case Primitive::Kind::Sphere:
        out += "sphere(" + fmt_double(pr.p[0]) + "," + fmt_double(pr.p[1]) + "," +
               fmt_double(pr.p[2]) + "," + fmt_double(pr.p[3]) + ")";
        break;
      case Primitive::Kind::Cylinder:
        out += "cyl(" + std::to_string(pr.axis) + "," + fmt_double(pr.p[0]) + "," +
               fmt_double(pr.p[1]) + "," + fmt_double(pr.p[2]) + "," + fmt_double(pr.p[3]) + "," +
               fmt_double(pr.p[4]) + ")";
        break;
    }
  }
  return out;
}

Recipe parse_recipe(const std::string& s) {
  Recipe out;
  for (const std::string& part : split(s, '|')) {
    auto open = part.find('(');
    if (open == std::string::npos || part.back() != ')')
      throw ParseError("bad recipe term: '" + part + "'");
    std::string name = part.substr(0, open);
    auto args = split(part.substr(open + 1, part.size() - open - 2), ',');
    Primitive pr;
    if (name == "box") {
      if (args.size() != 6) throw ParseError("box expects 6 args");
      pr.kind = Primitive::Kind::Box;
      for (int i = 0; i < 6; ++i) pr.p[size_t(i)] = parse_double(args[size_t(i)], "recipe");
    } else if (name == "sphere") {
      if (args.size() != 4) throw ParseError("sphere expects 4 args");
      pr.kind = Primitive::Kind::Sphere;
      for (int i = 0; i < 4; ++i) pr.p[size_t(i)] = parse_double(args[size_t(i)], "recipe");
    } else if (name == "cyl") {
      if (args.size() != 6) throw ParseError("cyl expects 6 args");
      pr.kind = Primitive::Kind::Cylinder;
      pr.axis = int(parse_double(args[0], "recipe"));
      for (int i = 0; i < 5; ++i) pr.p[size_t(i)] = parse_double(args[size_t(i) + 1], "recipe");
    } else {
      throw ParseError("unknown primitive '" + name + "'");
    }
    out.push_back(pr);
  }
  return out;
}

namespace {

bool inside(const Primitive& pr, double x, double y, double z) {
  switch (pr.kind) {
    case Primitive::Kind::Box:
      return std::abs(x - pr.p[0]) <= pr.p[3] && std::abs(y - pr.p[1]) <= pr.p[4] &&
             std::abs(z - pr.p[2]) <= pr.p[5];
    case Primitive::Kind::Sphere: {
      double dx = x - pr.p[0], dy = y - pr.p[1], dz = z - pr.p[2];
      return dx * dx + dy * dy + dz * dz <= pr.p[3] * pr.p[3];
    }
    case Primitive::Kind::Cylinder: {
      double d[3] = {x - pr.p[0], y - pr.p[1], z - pr.p[2]};
      double along = d[pr.axis];
      double r2 = 0;
      for (int a = 0; a < 3; ++a)
        if (a != pr.axis) r2 += d[a] * d[a];
      return std::abs(along) <= pr.p[4] && r2 <= pr.p[3] * pr.p[3];
    }
  }
  return false;
}

}  // namespace

VoxelGrid voxelize(const Recipe& recipe, int side) {
  VoxelGrid g(side);
  for (int x = 0; x < side; ++x)
    for (int y = 0; y < side; ++y)
      for (int z = 0; z < side; ++z) {
        double cx = x + 0.5, cy = y + 0.5, cz = z + 0.5;
        for (const Primitive& pr : recipe) {
          if (inside(pr, cx, cy, cz)) {
            g.at(x, y, z) = 1.0f;
            break;
          }
        }
      }
  return g;
}

SyntheticShape gen_shape(uint64_t seed, int side) {
  if (side != 8 && side != 16 && side != 32)
    throw ContractError("gen_shape: side must be one of {8,16,32}, got " + std::to_string(side));
  Rng rng(derive_seed(seed, 0x5348u /*"SH"*/));
  double S = double(side);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Recipe recipe;
    int n_prims = int(rng.uniform_int(1, 4));
    for (int i = 0; i < n_prims; ++i) {
      Primitive pr;
      int kind = int(rng.uniform_int(0, 2));
      double cx = rng.uniform(0.3 * S, 0.7 * S);
      double cy = rng.uniform(0.3 * S, 0.7 * S);
      double cz = rng.uniform(0.3 * S, 0.7 * S);
      if (kind == 0) {
        pr.kind = Primitive::Kind::Box;
        pr.p = {cx, cy, cz, rng.uniform(0.1 * S, 0.35 * S), rng.uniform(0.1 * S, 0.35 * S),
                rng.uniform(0.1 * S, 0.35 * S)};
      } else if (kind == 1) {
        pr.kind = Primitive::Kind::Sphere;
        pr.p = {cx, cy, cz, rng.uniform(0.12 * S, 0.32 * S), 0, 0};
      } else {
        pr.kind = Primitive::Kind::Cylinder;
        pr.axis = int(rng.uniform_int(0, 2));
        pr.p = {cx, cy, cz, rng.uniform(0.12 * S, 0.28 * S), rng.uniform(0.15 * S, 0.4 * S), 0};
      }
      recipe.push_back(pr);
    }
    VoxelGrid g = voxelize(recipe, side);
    double frac = double(g.occupied()) / double(g.count());
    if (frac >= 0.01 && frac <= 0.90) return {seed, std::move(recipe), std::move(g)};
  }
  throw ContractError("gen_shape: no recipe satisfied the occupancy bounds after 16 draws (seed " +
                      std::to_string(seed) + ")");
}

const std::vector<std::array<double, 3>>& view_directions() {
  static const std::vector<std::array<double, 3>> dirs = [] {
    std::vector<std::array<double, 3>> d;
    d.push_back({1, 0, 0});
    d.push_back({-1, 0, 0});
    d.push_back({0, 1, 0});
    d.push_back({0, -1, 0});
    d.push_back({0, 0, 1});
    d.push_back({0, 0, -1});
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const double nrm = std::sqrt(1.0 + phi * phi);
    for (double a : {1.0, -1.0})
      for (double b : {phi, -phi}) {
        d.push_back({0, a / nrm, b / nrm});
        d.push_back({a / nrm, b / nrm, 0});
        d.push_back({b / nrm, 0, a / nrm});
      }
    const double s2 = std::sqrt(0.5);
    d.push_back({s2, s2, 0});
    d.push_back({-s2, -s2, 0});
    d.push_back({s2, -s2, 0});
    d.push_back({-s2, s2, 0});
    d.push_back({s2, 0, s2});
    d.push_back({-s2, 0, -s2});
    return d;
  }();
  return dirs;
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// True when d is in the canonical half of the direction sphere; exactly one
// of {d, -d} is canonical.
bool canonical_dir(const std::array<double, 3>& d) {
  if (d[2] != 0.0) return d[2] > 0.0;
  if (d[0] != 0.0) return d[0] > 0.0;
  return d[1] > 0.0;
}

// Rotation taking +z to the given unit direction (Rodrigues). The in-plane
// orientation is pinned for the lower hemisphere via R(d) = R(-d) * M with M
// the half-turn about x, which makes antipodal renders exact mirrors.
Mat3 rotation_to(const std::array<double, 3>& d) {
  if (!canonical_dir(d)) {
    Mat3 m{{{1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
    return matmul3(rotation_to({-d[0], -d[1], -d[2]}), m);
  }
  double ax = -d[1], ay = d[0];  // z cross d
  double s = std::sqrt(ax * ax + ay * ay);
  double c = d[2];
  if (s < 1e-15) return Mat3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};  // d == +z
  double ux = ax / s, uy = ay / s;
  // R = c I + s [u]x + (1-c) u u^T with u = (ux, uy, 0)
  Mat3 r{};
  r[0][0] = c + (1 - c) * ux * ux;
  r[0][1] = (1 - c) * ux * uy;
  r[0][2] = s * uy;
  r[1][0] = (1 - c) * ux * uy;
  r[1][1] = c + (1 - c) * uy * uy;
  r[1][2] = -s * ux;
  r[2][0] = -s * uy;
  r[2][1] = s * ux;
  r[2][2] = c;
  return r;
}

}  // namespace

Image render_view(const VoxelGrid& binary, const std::array<double, 3>& dir, int H, int W) {
  int S = binary.side;
  Mat3 R = rotation_to(dir);
  double ctr = (S - 1) / 2.0;
  // Silhouette at grid resolution: voxel (u,v,w) of the rotated grid samples
  // the source at R * centered(u,v,w).
  std::vector<float> sil(size_t(S) * size_t(S), 0.0f);
  for (int u = 0; u < S; ++u) {
    for (int v = 0; v < S; ++v) {
      float acc = 0.0f;
      for (int w = 0; w < S; ++w) {
        double cu = u - ctr, cv = v - ctr, cw = w - ctr;
        double sx = R[0][0] * cu + R[0][1] * cv + R[0][2] * cw + ctr;
        double sy = R[1][0] * cu + R[1][1] * cv + R[1][2] * cw + ctr;
        double sz = R[2][0] * cu + R[2][1] * cv + R[2][2] * cw + ctr;
        int ix = int(std::lround(sx));
        int iy = int(std::lround(sy));
        int iz = int(std::lround(sz));
        if (binary.in_bounds(ix, iy, iz) && binary.at(ix, iy, iz) != 0.0f) {
          acc = 1.0f;
          break;
        }
      }
      sil[size_t(u) * size_t(S) + size_t(v)] = acc;
    }
  }
  Image img;
  img.h = H;
  img.w = W;
  img.values.resize(size_t(H) * size_t(W));
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      int su = int((int64_t(i) * 2 + 1) * S / (2 * int64_t(H)));
      int sv = int((int64_t(j) * 2 + 1) * S / (2 * int64_t(W)));
      img.values[size_t(i) * size_t(W) + size_t(j)] = sil[size_t(su) * size_t(S) + size_t(sv)];
    }
  return img;
}

// --- binary formats ----------------------------------------------------------

namespace {

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }

uint32_t read_u32(std::istream& is, const char* what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ParseError(std::string("truncated ") + what);
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open: " + path);
  return is;
}

}  // namespace

void write_voxg(const std::string& path, const VoxelGrid& grid) {
  auto os = open_out(path);
  os.write("VOXG", 4);
  write_u32(os, uint32_t(grid.side));
  os.write(reinterpret_cast<const char*>(grid.values.data()),
           std::streamsize(grid.values.size() * 4));
}

VoxelGrid read_voxg(const std::string& path) {
  auto is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VOXG", 4) != 0)
    throw ParseError("bad VOXG magic in " + path);
  uint32_t side = read_u32(is, "VOXG header");
  VoxelGrid g(static_cast<int>(side));
  is.read(reinterpret_cast<char*>(g.values.data()), std::streamsize(g.values.size() * 4));
  if (!is) throw ParseError("truncated VOXG payload in " + path);
  return g;
}

void write_imgf(const std::string& path, const Image& img) {
  auto os = open_out(path);
  os.write("IMGF", 4);
  write_u32(os, uint32_t(img.h));
  write_u32(os, uint32_t(img.w));
  os.write(reinterpret_cast<const char*>(img.values.data()),
           std::streamsize(img.values.size() * 4));
}

Image read_imgf(const std::string& path) {
  auto is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "IMGF", 4) != 0)
    throw ParseError("bad IMGF magic in " + path);
  Image img;
  img.h = int(read_u32(is, "IMGF header"));
  img.w = int(read_u32(is, "IMGF header"));
  img.values.resize(size_t(img.h) * size_t(img.w));
  is.read(reinterpret_cast<char*>(img.values.data()), std::streamsize(img.values.size() * 4));
  if (!is) throw ParseError("truncated IMGF payload in " + path);
  return img;
}

VoxelGrid read_binvox(const std::vector<uint8_t>& bytes) {
  // ASCII header: "#binvox 1", "dim X Y Z", optional translate/scale, "data".
  size_t pos = 0;
  auto read_line = [&]() {
    size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size())
      throw ParseError("binvox: header truncated at byte " + std::to_string(start));
    std::string line(bytes.begin() + std::ptrdiff_t(start), bytes.begin() + std::ptrdiff_t(pos));
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  std::string magic = read_line();
  if (magic != "#binvox 1")
    throw ParseError("binvox: bad magic '" + magic + "' at byte 0");
  int dims[3] = {0, 0, 0};
  bool have_dim = false;
  while (true) {
    size_t line_at = pos;
    std::string line = read_line();
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "dim") {
      if (!(ss >> dims[0] >> dims[1] >> dims[2]))
        throw ParseError("binvox: malformed dim line at byte " + std::to_string(line_at));
      have_dim = true;
    } else if (word == "translate" || word == "scale") {
      // geometry metadata; irrelevant for occupancy
    } else if (word == "data") {
      break;
    } else {
      throw ParseError("binvox: unexpected header line '" + line + "' at byte " +
                       std::to_string(line_at));
    }
  }
  if (!have_dim) throw ParseError("binvox: missing dim line");
  if (dims[0] != dims[1] || dims[1] != dims[2])
    throw ParseError("binvox: non-cubic grid " + std::to_string(dims[0]) + "x" +
                     std::to_string(dims[1]) + "x" + std::to_string(dims[2]));
  int S = dims[0];
  if (S <= 0) throw ParseError("binvox: non-positive dimension");
  int64_t total = int64_t(S) * S * S;

  std::vector<uint8_t> flat;  // file order: x slowest, then z, then y
  flat.reserve(size_t(total));
  while (int64_t(flat.size()) < total) {
    if (pos + 2 > bytes.size())
      throw ParseError("binvox: truncated RLE at byte " + std::to_string(pos) + " (" +
                       std::to_string(flat.size()) + "/" + std::to_string(total) + " voxels)");
    uint8_t value = bytes[pos];
    uint8_t count = bytes[pos + 1];
    pos += 2;
    if (value != 0 && value != 1)
      throw ParseError("binvox: RLE value " + std::to_string(int(value)) + " at byte " +
                       std::to_string(pos - 2));
    if (int64_t(flat.size()) + count > total)
      throw ParseError("binvox: RLE overrun at byte " + std::to_string(pos - 2));
    flat.insert(flat.end(), count, value);
  }
  if (pos != bytes.size())
    throw ParseError("binvox: trailing bytes after voxel data at byte " + std::to_string(pos));

  VoxelGrid g(S);
  for (int x = 0; x < S; ++x)
    for (int z = 0; z < S; ++z)
      for (int y = 0; y < S; ++y)
        g.at(x, y, z) = flat[size_t((int64_t(x) * S + z) * S + y)] ? 1.0f : 0.0f;
  return g;
}

VoxelGrid read_binvox_file(const std::string& path) {
  auto is = open_in(path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return read_binvox(bytes);
}

std::vector<uint8_t> write_binvox(const VoxelGrid& binary) {
  std::string header = "#binvox 1\ndim " + std::to_string(binary.side) + " " +
                       std::to_string(binary.side) + " " + std::to_string(binary.side) +
                       "\ntranslate 0 0 0\nscale 1\ndata\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  int S = binary.side;
  uint8_t cur = 2;  // sentinel
  int count = 0;
  auto flush = [&]() {
    if (count > 0) {
      out.push_back(cur);
      out.push_back(uint8_t(count));
    }
  };
  for (int x = 0; x < S; ++x)
    for (int z = 0; z < S; ++z)
      for (int y = 0; y < S; ++y) {
        uint8_t v = binary.at(x, y, z) != 0.0f ? 1 : 0;
        if (v == cur && count < 255) {
          ++count;
        } else {
          flush();
          cur = v;
          count = 1;
        }
      }
  flush();
  return out;
}

// --- dataset -----------------------------------------------------------------

namespace fs = std::filesystem;

namespace {

std::string sample_voxel_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shape_%05d.voxg", i);
  return buf;
}

std::string sample_view_name(int i, int v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "shape_%05d_view%02d.imgf", i, v);
  return buf;
}

}  // namespace

void generate_dataset(const std::string& dir, uint64_t master_seed, int n_shapes, int side,
                      int image_size) {
  fs::create_directories(dir);
  const auto& dirs = view_directions();
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw ParseError("cannot write manifest in " + dir);
  for (int i = 0; i < n_shapes; ++i) {
    uint64_t seed = master_seed + uint64_t(i);
    SyntheticShape shape = gen_shape(seed, side);
    std::string vox = sample_voxel_name(i);
    write_voxg((fs::path(dir) / vox).string(), shape.voxel);
    manifest << seed << " " << recipe_to_string(shape.recipe) << " " << vox;
    for (size_t v = 0; v < dirs.size(); ++v) {
      Image img = render_view(shape.voxel, dirs[v], image_size, image_size);
      std::string name = sample_view_name(i, int(v));
      write_imgf((fs::path(dir) / name).string(), img);
      manifest << " " << name;
    }
    manifest << "\n";
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw ParseError("no manifest.txt in " + dir);
  Dataset ds;
  ds.dir = dir;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto fields = split(line, ' ');
    if (fields.size() < 3) throw ParseError("manifest line too short: '" + line + "'");
    LoadedSample s;
    s.seed = std::stoull(fields[0]);
    s.recipe = fields[1];
    s.voxel = read_voxg((fs::path(dir) / fields[2]).string());
    for (size_t i = 3; i < fields.size(); ++i)
      s.views.push_back(read_imgf((fs::path(dir) / fields[i]).string()));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<int> train_indices(const Dataset& ds) {
  std::vector<int> out;
  for (size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].seed % 2 == 0) out.push_back(int(i));
  return out;
}

std::vector<int> val_indices(const Dataset& ds) {
  std::vector<int> out;
  for (size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].seed % 2 == 1) out.push_back(int(i));
  return out;
}

}  // namespace umif
