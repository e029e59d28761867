#include "srl/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "srl/error.hpp"

namespace srl::splat {

namespace {

// Third axis given to two-scale surfels, relative to the smaller in-plane scale.
constexpr double kSurfelThickness = 1e-3;

enum class Field { kX, kY, kZ, kDc, kRest, kOpacity, kScale, kRot, kLabel, kExtra, kSkip };

struct Property {
  std::string name;
  std::size_t size = 4;
  Field field = Field::kSkip;
  int index = 0;  // channel / coefficient / axis / extra slot
};

std::size_t type_size(const std::string& type) {
  static const std::map<std::string, std::size_t> sizes = {
      {"char", 1},   {"uchar", 1},  {"int8", 1},    {"uint8", 1},  {"short", 2},
      {"ushort", 2}, {"int16", 2},  {"uint16", 2},  {"int", 4},    {"uint", 4},
      {"int32", 4},  {"uint32", 4}, {"float", 4},   {"float32", 4}, {"double", 8},
      {"float64", 8}};
  const auto it = sizes.find(type);
  return it == sizes.end() ? 0 : it->second;
}

bool parse_indexed(const std::string& name, const std::string& prefix, int& index) {
  if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) return false;
  const std::string digits = name.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  index = std::stoi(digits);
  return true;
}

float read_float(const char* p) {
  float v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

void append_float(std::string& out, float v) {
  char buf[sizeof(float)];
  std::memcpy(buf, &v, sizeof(v));
  out.append(buf, sizeof(buf));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(q / (1.0 - q));
}

Quat decode_rotation(const std::array<float, 4>& r) {
  Quat q(r[0], r[1], r[2], r[3]);
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) return Quat::Identity();
  q.coeffs() /= n;
  return q;
}

std::vector<std::string> stock_layout(const GaussianModel& model) {
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz"};
  for (int c = 0; c < 3; ++c) names.push_back(fmt::format("f_dc_{}", c));
  const int rest = 3 * (sh::coeff_count(model.l_max) - 1);
  for (int j = 0; j < rest; ++j) names.push_back(fmt::format("f_rest_{}", j));
  names.push_back("opacity");
  for (int a = 0; a < 3; ++a) names.push_back(fmt::format("scale_{}", a));
  for (int a = 0; a < 4; ++a) names.push_back(fmt::format("rot_{}", a));
  for (const auto& e : model.extra_names) {
    if (std::find(names.begin(), names.end(), e) == names.end()) names.push_back(e);
  }
  if (model.has_scores()) names.push_back("label");
  return names;
}

// Does the saved layout still describe this model?
bool layout_matches(const GaussianModel& model) {
  const auto& layout = model.ply_layout;
  if (layout.empty()) return false;
  const int rest = 3 * (sh::coeff_count(model.l_max) - 1);
  int rest_seen = 0;
  bool label = false;
  std::size_t extras = 0;
  for (const auto& name : layout) {
    int idx;
    if (parse_indexed(name, "f_rest_", idx)) {
      if (idx >= rest) return false;
      ++rest_seen;
    } else if (name == "label") {
      label = true;
    } else if (std::find(model.extra_names.begin(), model.extra_names.end(), name) !=
               model.extra_names.end()) {
      ++extras;
    }
  }
  return rest_seen == rest && label == model.has_scores() && extras == model.extra_names.size();
}

}  // namespace

GaussianModel parse_ply(std::span<const char> bytes, const PlyReadOptions& options) {
  // Header.
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(pos);
    const auto nl = std::find(begin, bytes.end(), '\n');
    if (nl == bytes.end()) throw ParseError("PLY header not terminated", static_cast<long long>(pos));
    line.assign(begin, nl);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  };

  std::string line;
  next_line(line);
  if (line != "ply") throw ParseError("missing 'ply' magic", 0);

  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  bool format_ok = false;
  GaussianModel model;
  std::vector<Property> props;
  for (;;) {
    const auto line_offset = static_cast<long long>(pos);
    next_line(line);
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) continue;
    if (keyword == "format") {
      std::string fmt_name, version;
      ls >> fmt_name >> version;
      if (fmt_name != "binary_little_endian" || version != "1.0") {
        throw ParseError(fmt::format("unsupported PLY format '{} {}'", fmt_name, version),
                         line_offset);
      }
      format_ok = true;
    } else if (keyword == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (name != "vertex" || seen_vertex || count < 0) {
        throw ParseError(fmt::format("unsupported PLY element '{}'", line), line_offset);
      }
      vertex_count = static_cast<std::size_t>(count);
      in_vertex = seen_vertex = true;
    } else if (keyword == "property") {
      if (!in_vertex) throw ParseError("property outside vertex element", line_offset);
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw ParseError("list properties are not supported", line_offset);
      Property p;
      p.name = name;
      p.size = type_size(type);
      if (p.size == 0) throw ParseError(fmt::format("unknown PLY type '{}'", type), line_offset);
      const bool is_float = type == "float" || type == "float32";
      int idx = 0;
      if (name == "x" || name == "y" || name == "z") {
        p.field = name == "x" ? Field::kX : name == "y" ? Field::kY : Field::kZ;
      } else if (parse_indexed(name, "f_dc_", idx) && idx < 3) {
        p.field = Field::kDc;
        p.index = idx;
      } else if (parse_indexed(name, "f_rest_", idx)) {
        p.field = Field::kRest;
        p.index = idx;
      } else if (name == "opacity") {
        p.field = Field::kOpacity;
      } else if (parse_indexed(name, "scale_", idx) && idx < 3) {
        p.field = Field::kScale;
        p.index = idx;
      } else if (parse_indexed(name, "rot_", idx) && idx < 4) {
        p.field = Field::kRot;
        p.index = idx;
      } else if (name == "label") {
        p.field = Field::kLabel;
      } else if (is_float && options.keep_unknown) {
        p.field = Field::kExtra;
        p.index = static_cast<int>(model.extra_names.size());
        model.extra_names.push_back(name);
      } else {
        p.field = Field::kSkip;
      }
      if (p.field != Field::kSkip && !is_float) {
        throw ParseError(fmt::format("property '{}' must be float", name), line_offset);
      }
      if (std::any_of(props.begin(), props.end(), [&](const Property& q) { return q.name == name; })) {
        throw ParseError(fmt::format("duplicate property '{}'", name), line_offset);
      }
      props.push_back(p);
    } else {
      throw ParseError(fmt::format("unexpected PLY header line '{}'", line), line_offset);
    }
  }
  if (!format_ok) throw ParseError("PLY format line missing", 0);
  if (!seen_vertex) throw ParseError("PLY vertex element missing", 0);

  // Required fields and degree.
  auto count_field = [&](Field f) {
    return std::count_if(props.begin(), props.end(), [f](const Property& p) { return p.field == f; });
  };
  for (Field f : {Field::kX, Field::kY, Field::kZ, Field::kOpacity}) {
    if (count_field(f) != 1) throw ParseError("PLY lacks x/y/z/opacity properties", 0);
  }
  if (count_field(Field::kDc) != 3) throw ParseError("PLY lacks f_dc_0..2", 0);
  if (count_field(Field::kRot) != 4) throw ParseError("PLY lacks rot_0..3", 0);
  const auto scales = count_field(Field::kScale);
  if (scales != 2 && scales != 3) throw ParseError("PLY lacks scale properties", 0);
  for (const auto& p : props) {
    if (p.field == Field::kScale && p.index >= scales) {
      throw ParseError(fmt::format("scale_{} without scale_0..{}", p.index, scales - 1), 0);
    }
  }
  const auto rest = count_field(Field::kRest);
  int l_max = -1;
  for (int l = 0; l <= sh::kMaxDegree; ++l) {
    if (3 * (sh::coeff_count(l) - 1) == rest) l_max = l;
  }
  if (l_max < 0) {
    throw ParseError(fmt::format("{} f_rest properties do not match any SH degree", rest), 0);
  }
  for (const auto& p : props) {
    if (p.field == Field::kRest && p.index >= rest) {
      throw ParseError(fmt::format("f_rest index {} out of range", p.index), 0);
    }
  }
  model.l_max = l_max;
  const bool two_scale = scales == 2;

  std::size_t stride = 0;
  for (const auto& p : props) stride += p.size;
  const std::size_t payload = bytes.size() - pos;
  if (payload < stride * vertex_count) {
    const std::size_t complete = stride == 0 ? 0 : payload / stride;
    throw ParseError(fmt::format("PLY payload truncated: {} of {} vertices present", complete,
                                 vertex_count),
                     static_cast<long long>(pos + complete * stride));
  }

  const int k = sh::coeff_count(l_max);
  model.gaussians.resize(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    const char* rec = bytes.data() + pos + v * stride;
    Gaussian& g = model.gaussians[v];
    g.sh = sh::ShCoeffs(l_max);
    g.extra.assign(model.extra_names.size(), 0.0f);
    StoredPlyValues stored;
    for (const auto& p : props) {
      if (p.field != Field::kSkip) {
        const float value = read_float(rec);
        switch (p.field) {
          case Field::kX: g.position.x() = value; break;
          case Field::kY: g.position.y() = value; break;
          case Field::kZ: g.position.z() = value; break;
          case Field::kDc: g.sh(0, p.index) = value; break;
          case Field::kRest: g.sh(1 + p.index % (k - 1), p.index / (k - 1)) = value; break;
          case Field::kOpacity: stored.opacity_logit = value; break;
          case Field::kScale: stored.log_scale[static_cast<std::size_t>(p.index)] = value; break;
          case Field::kRot: stored.rotation[static_cast<std::size_t>(p.index)] = value; break;
          case Field::kLabel: g.score = value; break;
          case Field::kExtra: g.extra[static_cast<std::size_t>(p.index)] = value; break;
          case Field::kSkip: break;
        }
      }
      rec += p.size;
    }
    g.rotation = decode_rotation(stored.rotation);
    g.opacity = sigmoid(stored.opacity_logit);
    g.scale = Vec3(std::exp(static_cast<double>(stored.log_scale[0])),
                   std::exp(static_cast<double>(stored.log_scale[1])),
                   std::exp(static_cast<double>(stored.log_scale[2])));
    if (two_scale) g.scale.z() = kSurfelThickness * std::min(g.scale.x(), g.scale.y());
    g.stored = stored;
  }

  model.ply_layout.reserve(props.size());
  for (const auto& p : props) {
    if (p.field != Field::kSkip) model.ply_layout.push_back(p.name);
  }
  model.kind = options.kind ? *options.kind : (two_scale ? ModelKind::kSurfel : detect_kind(model));
  return model;
}

GaussianModel load_ply(const std::filesystem::path& path, const PlyReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  try {
    return parse_ply(bytes, options);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {} (byte offset {})", path.string(), e.what(), e.offset()),
                     e.offset());
  }
}

std::string serialize_ply(const GaussianModel& model) {
  if (model.empty()) throw ArgumentError("cannot save an empty Gaussian model");
  validate(model);
  const std::vector<std::string> layout =
      layout_matches(model) ? model.ply_layout : stock_layout(model);
  const bool two_scale =
      std::find(layout.begin(), layout.end(), "scale_2") == layout.end();

  std::string out = fmt::format(
      "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", model.size());
  for (const auto& name : layout) out += fmt::format("property float {}\n", name);
  out += "end_header\n";

  const int k = sh::coeff_count(model.l_max);
  // Resolve each column once.
  struct Column {
    Field field;
    int index;
  };
  std::vector<Column> columns;
  for (const auto& name : layout) {
    int idx = 0;
    if (name == "x") columns.push_back({Field::kX, 0});
    else if (name == "y") columns.push_back({Field::kY, 0});
    else if (name == "z") columns.push_back({Field::kZ, 0});
    else if (parse_indexed(name, "f_dc_", idx) && idx < 3) columns.push_back({Field::kDc, idx});
    else if (parse_indexed(name, "f_rest_", idx)) columns.push_back({Field::kRest, idx});
    else if (name == "opacity") columns.push_back({Field::kOpacity, 0});
    else if (parse_indexed(name, "scale_", idx) && idx < 3) columns.push_back({Field::kScale, idx});
    else if (parse_indexed(name, "rot_", idx) && idx < 4) columns.push_back({Field::kRot, idx});
    else if (name == "label") columns.push_back({Field::kLabel, 0});
    else {
      const auto it = std::find(model.extra_names.begin(), model.extra_names.end(), name);
      columns.push_back(it == model.extra_names.end()
                            ? Column{Field::kSkip, 0}
                            : Column{Field::kExtra, static_cast<int>(it - model.extra_names.begin())});
    }
  }

  out.reserve(out.size() + model.size() * layout.size() * sizeof(float));
  for (const Gaussian& g : model.gaussians) {
    // Reuse the stored encodings for values that were not modified.
    std::array<float, 4> rot = {static_cast<float>(g.rotation.w()), static_cast<float>(g.rotation.x()),
                                static_cast<float>(g.rotation.y()), static_cast<float>(g.rotation.z())};
    std::array<float, 3> log_scale = {static_cast<float>(std::log(g.scale.x())),
                                      static_cast<float>(std::log(g.scale.y())),
                                      static_cast<float>(std::log(g.scale.z()))};
    float opacity = static_cast<float>(logit(g.opacity));
    if (g.stored) {
      const StoredPlyValues& s = *g.stored;
      if (decode_rotation(s.rotation).coeffs() == g.rotation.coeffs()) rot = s.rotation;
      const int axes = two_scale ? 2 : 3;
      for (int a = 0; a < axes; ++a) {
        if (std::exp(static_cast<double>(s.log_scale[static_cast<std::size_t>(a)])) == g.scale[a]) {
          log_scale[static_cast<std::size_t>(a)] = s.log_scale[static_cast<std::size_t>(a)];
        }
      }
      if (sigmoid(s.opacity_logit) == g.opacity) opacity = s.opacity_logit;
    }
    for (const Column& c : columns) {
      float value = 0.0f;
      switch (c.field) {
        case Field::kX: value = static_cast<float>(g.position.x()); break;
        case Field::kY: value = static_cast<float>(g.position.y()); break;
        case Field::kZ: value = static_cast<float>(g.position.z()); break;
        case Field::kDc: value = static_cast<float>(g.sh(0, c.index)); break;
        case Field::kRest:
          value = static_cast<float>(g.sh(1 + c.index % (k - 1), c.index / (k - 1)));
          break;
        case Field::kOpacity: value = opacity; break;
        case Field::kScale: value = log_scale[static_cast<std::size_t>(c.index)]; break;
        case Field::kRot: value = rot[static_cast<std::size_t>(c.index)]; break;
        case Field::kLabel: value = static_cast<float>(g.score.value_or(0.0)); break;
        case Field::kExtra: value = g.extra[static_cast<std::size_t>(c.index)]; break;
        case Field::kSkip: value = 0.0f; break;
      }
      append_float(out, value);
    }
  }
  return out;
}

void save_ply(const GaussianModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_ply(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace srl::splat
