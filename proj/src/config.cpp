#include "srl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

#include "srl/error.hpp"

namespace srl::config {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tokens(const std::string& value) {
  std::istringstream in(value);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

double to_double(const std::string& token, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size()) throw ArgumentError(fmt::format("{}: '{}' is not a number", key, token));
  return v;
}

std::vector<double> numbers(const std::string& value, std::size_t count, const std::string& key) {
  const auto t = tokens(value);
  if (t.size() != count) {
    throw ArgumentError(fmt::format("{}: expected {} numbers, got {}", key, count, t.size()));
  }
  std::vector<double> out;
  for (const auto& s : t) out.push_back(to_double(s, key));
  return out;
}

double number(const std::string& value, const std::string& key) { return numbers(value, 1, key)[0]; }

int integer(const std::string& value, const std::string& key) {
  const double v = number(value, key);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ArgumentError(fmt::format("{}: expected an integer", key));
  return static_cast<int>(v);
}

bool boolean(const std::string& value, const std::string& key) {
  const auto t = tokens(value);
  if (t.size() == 1) {
    if (t[0] == "true" || t[0] == "yes" || t[0] == "on" || t[0] == "1") return true;
    if (t[0] == "false" || t[0] == "no" || t[0] == "off" || t[0] == "0") return false;
  }
  throw ArgumentError(fmt::format("{}: expected true or false", key));
}

Vec3 vec3(const std::string& value, const std::string& key) {
  const auto v = numbers(value, 3, key);
  return {v[0], v[1], v[2]};
}

pt::ptree parse_ini(const std::string& text) {
  // '#' and ';' comment out the rest of the line, including after a value.
  std::istringstream in(text);
  std::string cleaned;
  for (std::string line; std::getline(in, line);) {
    line = line.substr(0, line.find_first_of("#;"));
    const auto last = line.find_last_not_of(" \t\r");
    cleaned += (last == std::string::npos ? std::string() : line.substr(0, last + 1)) + "\n";
  }
  pt::ptree tree;
  std::istringstream clean_in(cleaned);
  try {
    pt::read_ini(clean_in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ArgumentError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  return tree;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

// Visits every key of the tree as "section.key" or "key", rejecting unknown
// ones.
template <typename Handler>
void visit(const pt::ptree& tree, const std::set<std::string>& known, Handler&& handle) {
  for (const auto& [name, node] : tree) {
    if (!node.empty()) {
      for (const auto& [key, leaf] : node) {
        const std::string full = name + "." + key;
        if (!leaf.empty()) throw ArgumentError(fmt::format("{}: nested sections are not supported", full));
        if (!known.count(full)) throw ArgumentError(fmt::format("unknown config key '{}'", full));
        handle(full, leaf.data());
      }
    } else {
      if (!known.count(name)) throw ArgumentError(fmt::format("unknown config key '{}'", name));
      handle(name, node.data());
    }
  }
}

void apply_placement_key(splat::Placement& p, const std::string& key, const std::string& value) {
  const std::string leaf = key.substr(key.rfind('.') + 1);
  if (leaf == "rotation") {
    const auto q = numbers(value, 4, key);
    Quat quat(q[0], q[1], q[2], q[3]);
    if (!(quat.norm() > 1e-12)) throw ArgumentError(fmt::format("{}: zero quaternion", key));
    p.rotation = quat.normalized().toRotationMatrix();
  } else if (leaf == "translation") {
    p.translation = vec3(value, key);
  } else if (leaf == "scale") {
    p.scale = number(value, key);
    if (!(p.scale > 0.0)) throw ArgumentError(fmt::format("{}: scale must be positive", key));
  }
}

}  // namespace

std::vector<raster::Camera> parse_cameras(const std::string& text) {
  std::vector<raster::Camera> cameras;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string key = fmt::format("camera line {}", line_no);
    const auto v = numbers(line, 18, key);
    raster::Camera c;
    if (v[0] != std::floor(v[0]) || v[1] != std::floor(v[1])) {
      throw ArgumentError(fmt::format("{}: image size must be integral", key));
    }
    c.width = static_cast<int>(v[0]);
    c.height = static_cast<int>(v[1]);
    c.fx = v[2];
    c.fy = v[3];
    c.cx = v[4];
    c.cy = v[5];
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) c.rotation(r, col) = v[static_cast<std::size_t>(6 + 3 * r + col)];
    }
    c.translation = Vec3(v[15], v[16], v[17]);
    try {
      c.validate();
    } catch (const ArgumentError& e) {
      throw ArgumentError(fmt::format("{}: {}", key, e.what()));
    }
    cameras.push_back(c);
  }
  return cameras;
}

std::vector<raster::Camera> load_cameras(const fs::path& path) { return parse_cameras(read_text(path)); }

std::string format_cameras(const std::vector<raster::Camera>& cameras) {
  std::string out;
  for (const auto& c : cameras) {
    out += fmt::format("{} {} {:.17g} {:.17g} {:.17g} {:.17g}", c.width, c.height, c.fx, c.fy, c.cx, c.cy);
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) out += fmt::format(" {:.17g}", c.rotation(r, col));
    }
    out += fmt::format(" {:.17g} {:.17g} {:.17g}\n", c.translation.x(), c.translation.y(), c.translation.z());
  }
  return out;
}

splat::Placement parse_placement(const std::string& text) {
  splat::Placement p;
  visit(parse_ini(text), {"rotation", "translation", "scale"},
        [&](const std::string& key, const std::string& value) { apply_placement_key(p, key, value); });
  return p;
}

splat::Placement load_placement(const fs::path& path) { return parse_placement(read_text(path)); }

env::SamplingStrategy parse_strategy(const std::string& name) {
  if (name == "equal-area") return env::SamplingStrategy::kEqualArea;
  if (name == "sin-weighted") return env::SamplingStrategy::kEquirectSinWeighted;
  if (name == "uniform-uv") return env::SamplingStrategy::kUniformUv;
  throw ArgumentError(fmt::format("unknown sampling strategy '{}'", name));
}

const char* to_string(env::SamplingStrategy strategy) {
  switch (strategy) {
    case env::SamplingStrategy::kEqualArea: return "equal-area";
    case env::SamplingStrategy::kEquirectSinWeighted: return "sin-weighted";
    case env::SamplingStrategy::kUniformUv: return "uniform-uv";
  }
  return "?";
}

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir,
                            const std::map<std::string, std::string>& overrides) {
  static const std::set<std::string> kKnown = {
      "seed",
      "input.source_model", "input.target_model", "input.cameras", "input.masks",
      "input.source_env", "input.target_env", "input.render_cameras", "input.output_dir",
      "placement.rotation", "placement.translation", "placement.scale",
      "transfer.epsilon", "transfer.tau_min", "transfer.tau_max", "transfer.l_max",
      "transfer.n_samples", "transfer.per_gaussian_shading", "transfer.strategy",
      "segment.threshold",
      "capture.face_res", "capture.height", "capture.hdr", "capture.background",
      "capture.source_center", "capture.target_center", "capture.gamma", "capture.boost",
      "capture.knee",
      "shadow.enabled", "shadow.lobes", "shadow.smooth_degree", "shadow.suppression_degrees",
      "shadow.plane_point", "shadow.plane_normal", "shadow.strength", "shadow.res",
      "shadow.extent", "shadow.band"};

  pt::ptree tree = parse_ini(text);
  for (const auto& [key, value] : overrides) {
    if (!kKnown.count(key)) throw ArgumentError(fmt::format("unknown config key '{}'", key));
    tree.put(key, value);
  }

  PipelineConfig c;
  std::optional<Vec3> plane_point, plane_normal;
  visit(tree, kKnown, [&](const std::string& key, const std::string& value) {
    if (key == "seed") {
      const double s = number(value, key);
      if (s < 0 || s != std::floor(s)) throw ArgumentError("seed must be a nonnegative integer");
      c.seed = static_cast<std::uint64_t>(s);
    } else if (key == "input.source_model") {
      c.source_model = resolve(base_dir, value);
    } else if (key == "input.target_model") {
      c.target_model = resolve(base_dir, value);
    } else if (key == "input.cameras") {
      c.cameras = resolve(base_dir, value);
    } else if (key == "input.masks") {
      c.masks.clear();
      for (const auto& t : tokens(value)) c.masks.push_back(resolve(base_dir, t));
    } else if (key == "input.source_env") {
      c.source_env = resolve(base_dir, value);
    } else if (key == "input.target_env") {
      c.target_env = resolve(base_dir, value);
    } else if (key == "input.render_cameras") {
      c.render_cameras = resolve(base_dir, value);
    } else if (key == "input.output_dir") {
      c.output_dir = resolve(base_dir, value);
    } else if (key.starts_with("placement.")) {
      apply_placement_key(c.placement, key, value);
    } else if (key == "transfer.epsilon") {
      c.transfer.epsilon = number(value, key);
    } else if (key == "transfer.tau_min") {
      c.transfer.tau_min = number(value, key);
    } else if (key == "transfer.tau_max") {
      c.transfer.tau_max = number(value, key);
    } else if (key == "transfer.l_max") {
      c.transfer.l_max = integer(value, key);
    } else if (key == "transfer.n_samples") {
      c.transfer.n_samples = integer(value, key);
    } else if (key == "transfer.per_gaussian_shading") {
      c.transfer.per_gaussian_shading = boolean(value, key);
    } else if (key == "transfer.strategy") {
      c.transfer.strategy = parse_strategy(value);
    } else if (key == "segment.threshold") {
      c.threshold = number(value, key);
    } else if (key == "capture.face_res") {
      c.capture.face_res = integer(value, key);
    } else if (key == "capture.height") {
      c.capture.height = integer(value, key);
    } else if (key == "capture.hdr") {
      c.capture.hdr = boolean(value, key);
    } else if (key == "capture.background") {
      if (value == "mean") {
        c.capture.background.reset();
      } else {
        const Vec3 b = vec3(value, key);
        c.capture.background = Rgb(b.x(), b.y(), b.z());
      }
    } else if (key == "capture.source_center") {
      c.source_center = vec3(value, key);
    } else if (key == "capture.target_center") {
      c.target_center = vec3(value, key);
    } else if (key == "capture.gamma") {
      c.capture.ldr.gamma = number(value, key);
    } else if (key == "capture.boost") {
      c.capture.ldr.boost = number(value, key);
    } else if (key == "capture.knee") {
      c.capture.ldr.knee = number(value, key);
    } else if (key == "shadow.enabled") {
      c.shadow.enabled = boolean(value, key);
    } else if (key == "shadow.lobes") {
      c.shadow.lobes.count = integer(value, key);
    } else if (key == "shadow.smooth_degree") {
      c.shadow.lobes.smooth_degree = integer(value, key);
    } else if (key == "shadow.suppression_degrees") {
      c.shadow.lobes.suppression_degrees = number(value, key);
    } else if (key == "shadow.plane_point") {
      plane_point = vec3(value, key);
    } else if (key == "shadow.plane_normal") {
      plane_normal = vec3(value, key);
    } else if (key == "shadow.strength") {
      c.shadow.strength = number(value, key);
    } else if (key == "shadow.res") {
      c.shadow.res = integer(value, key);
    } else if (key == "shadow.extent") {
      c.shadow.extent = number(value, key);
    } else if (key == "shadow.band") {
      c.shadow.band = number(value, key);
    }
  });
  if (plane_point.has_value() != plane_normal.has_value()) {
    throw ArgumentError("shadow.plane_point and shadow.plane_normal must be given together");
  }
  if (plane_point) {
    if (!(plane_normal->norm() > 1e-12)) throw ArgumentError("shadow.plane_normal must be nonzero");
    c.shadow.plane = shadow::ReceiverPlane{*plane_point, plane_normal->normalized()};
  }
  c.transfer.seed = c.seed;
  return c;
}

PipelineConfig load_config(const fs::path& path, const std::map<std::string, std::string>& overrides) {
  return parse_config(read_text(path), path.parent_path(), overrides);
}

void PipelineConfig::validate(bool require_target) const {
  transfer.validate();
  const auto require_file = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ValidationError(fmt::format("{} is required", what));
    if (!fs::is_regular_file(p)) throw ValidationError(fmt::format("{} not found: {}", what, p.string()));
  };
  require_file(source_model, "source model");
  if (require_target || !target_env) require_file(target_model, "target model");
  if (source_env) require_file(*source_env, "source environment");
  if (target_env) require_file(*target_env, "target environment");
  if (render_cameras) require_file(*render_cameras, "render camera list");
  if (!masks.empty()) {
    require_file(cameras, "camera list");
    for (const auto& m : masks) require_file(m, "mask");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("segment.threshold must lie in [0, 1]");
  if (capture.face_res < 1 || capture.height < 2) throw ArgumentError("capture resolution too small");
  env::ldr_to_hdr_value(0.5, capture.ldr);  // throws on bad curve parameters
  if (capture.background && (capture.background->minCoeff() < 0.0 || !capture.background->allFinite())) {
    throw ArgumentError("capture.background must be finite and nonnegative");
  }
  if (!(shadow.strength >= 0.0 && shadow.strength <= 1.0)) throw ArgumentError("shadow.strength must lie in [0, 1]");
  if (shadow.lobes.count < 1) throw ArgumentError("shadow.lobes must be at least 1");
  if (shadow.res < 1) throw ArgumentError("shadow.res must be positive");
  if (!(placement.scale > 0.0)) throw ArgumentError("placement.scale must be positive");
}

}  // namespace srl::config
