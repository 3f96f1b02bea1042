#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "surfnet/error.hpp"
#include "surfnet/mesh.hpp"

namespace surfnet {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string_view strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return hash == std::string_view::npos ? line : line.substr(0, hash);
}

double parse_double(std::string_view token, std::size_t line_no) {
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("line " + std::to_string(line_no) + ": expected a number, got '" +
                     std::string(token) + "'");
  }
  return value;
}

long long parse_int(std::string_view token, std::size_t line_no) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": expected an integer, got '" +
                     std::string(token) + "'");
  }
  return value;
}

Index to_index(long long value, std::size_t line_no) {
  if (value < 0 || value > static_cast<long long>(std::numeric_limits<Index>::max())) {
    throw ParseError("line " + std::to_string(line_no) + ": vertex index " + std::to_string(value) +
                     " is not representable");
  }
  return static_cast<Index>(value);
}

Mesh parse_obj(std::istream& in) {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = split_ws(strip_comment(raw));
    if (tokens.empty()) continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) {
        throw ParseError("line " + std::to_string(line_no) + ": vertex needs three coordinates");
      }
      vertices.push_back({parse_double(tokens[1], line_no), parse_double(tokens[2], line_no),
                          parse_double(tokens[3], line_no)});
    } else if (tokens[0] == "f") {
      if (tokens.size() != 4) {
        throw ParseError("line " + std::to_string(line_no) + ": only triangular faces are supported");
      }
      Face f{};
      for (int k = 0; k < 3; ++k) {
        // "a", "a/b", "a//c", "a/b/c": the vertex index is the first field.
        std::string_view tok = tokens[k + 1];
        tok = tok.substr(0, tok.find('/'));
        const long long one_based = parse_int(tok, line_no);
        if (one_based < 1) {
          throw ParseError("line " + std::to_string(line_no) +
                           ": OBJ vertex indices must be positive");
        }
        f[k] = to_index(one_based - 1, line_no);
      }
      faces.push_back(f);
    }
    // vn, vt, o, g, s, usemtl, ... carry nothing we need.
  }
  return Mesh(std::move(vertices), std::move(faces));
}

Mesh parse_off(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::string_view> tokens;
  std::vector<std::string> storage;

  // Collect the non-empty, comment-free lines lazily.
  auto next_tokens = [&]() -> bool {
    while (std::getline(in, raw)) {
      ++line_no;
      storage.assign(1, std::string(strip_comment(raw)));
      tokens = split_ws(storage[0]);
      if (!tokens.empty()) return true;
    }
    return false;
  };

  if (!next_tokens() || tokens[0] != "OFF") {
    throw ParseError("line " + std::to_string(line_no) + ": missing OFF header");
  }
  tokens.erase(tokens.begin());
  if (tokens.empty() && !next_tokens()) {
    throw ParseError("line " + std::to_string(line_no) + ": missing OFF counts");
  }
  if (tokens.size() < 2) {
    throw ParseError("line " + std::to_string(line_no) + ": OFF counts need nv nf [ne]");
  }
  const long long nv = parse_int(tokens[0], line_no);
  const long long nf = parse_int(tokens[1], line_no);
  if (nv < 0 || nf < 0) throw ParseError("line " + std::to_string(line_no) + ": negative count");

  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    if (!next_tokens()) throw ParseError("unexpected end of file in vertex block");
    if (tokens.size() < 3) {
      throw ParseError("line " + std::to_string(line_no) + ": vertex needs three coordinates");
    }
    vertices.push_back({parse_double(tokens[0], line_no), parse_double(tokens[1], line_no),
                        parse_double(tokens[2], line_no)});
  }
  std::vector<Face> faces;
  faces.reserve(static_cast<std::size_t>(nf));
  for (long long f = 0; f < nf; ++f) {
    if (!next_tokens()) throw ParseError("unexpected end of file in face block");
    const long long arity = parse_int(tokens[0], line_no);
    if (arity != 3 || tokens.size() < 4) {
      throw ParseError("line " + std::to_string(line_no) + ": only triangular faces are supported");
    }
    faces.push_back({to_index(parse_int(tokens[1], line_no), line_no),
                     to_index(parse_int(tokens[2], line_no), line_no),
                     to_index(parse_int(tokens[3], line_no), line_no)});
  }
  return Mesh(std::move(vertices), std::move(faces));
}

void append_double(std::string& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".off") return MeshFormat::Off;
  throw ParseError("cannot infer mesh format from '" + path.string() + "' (expected .obj or .off)");
}

Mesh mesh_from_string(const std::string& text, MeshFormat format) {
  std::istringstream in(text);
  return format == MeshFormat::Obj ? parse_obj(in) : parse_off(in);
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file '" + path.string() + "'");
  return format == MeshFormat::Obj ? parse_obj(in) : parse_off(in);
}

Mesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

std::string mesh_to_string(const Mesh& mesh, MeshFormat format) {
  validate_mesh(mesh.vertices(), mesh.faces());
  std::string out;
  out.reserve(mesh.num_vertices() * 64 + mesh.num_faces() * 24);
  if (format == MeshFormat::Off) {
    out += "OFF\n";
    out += std::to_string(mesh.num_vertices()) + " " + std::to_string(mesh.num_faces()) + " 0\n";
  }
  for (const Vec3& v : mesh.vertices()) {
    if (format == MeshFormat::Obj) out += "v ";
    append_double(out, v.x);
    out += ' ';
    append_double(out, v.y);
    out += ' ';
    append_double(out, v.z);
    out += '\n';
  }
  for (const Face& f : mesh.faces()) {
    const Index base = format == MeshFormat::Obj ? 1 : 0;
    out += format == MeshFormat::Obj ? "f " : "3 ";
    out += std::to_string(f[0] + base) + " " + std::to_string(f[1] + base) + " " +
           std::to_string(f[2] + base) + "\n";
  }
  return out;
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  const std::string text = mesh_to_string(mesh, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mesh file '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  save_mesh(mesh, path, format_from_path(path));
}

std::filesystem::path attribute_sidecar_path(const std::filesystem::path& mesh_path) {
  return std::filesystem::path(mesh_path.string() + ".attr.json");
}

void save_attributes(const MeshAttributes& attributes, const std::filesystem::path& path) {
  nlohmann::json j;
  j["scalars"] = nlohmann::json::object();
  j["vectors"] = nlohmann::json::object();
  for (const auto& [name, values] : attributes.scalars) j["scalars"][name] = values;
  for (const auto& [name, values] : attributes.vectors) {
    auto arr = nlohmann::json::array();
    for (const Vec3& v : values) arr.push_back({v.x, v.y, v.z});
    j["vectors"][name] = std::move(arr);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write attribute file '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

MeshAttributes load_attributes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attribute file '" + path.string() + "'");
  MeshAttributes attributes;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.contains("scalars")) {
      for (const auto& [name, values] : j["scalars"].items()) {
        attributes.scalars[name] = values.get<std::vector<double>>();
      }
    }
    if (j.contains("vectors")) {
      for (const auto& [name, values] : j["vectors"].items()) {
        auto& dst = attributes.vectors[name];
        for (const auto& v : values) dst.push_back({v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("attribute file '" + path.string() + "': " + e.what());
  }
  return attributes;
}

}  // namespace surfnet
