// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wdda/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace wdda {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int parse_integer(std::string_view s) {
  Int v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::array<double, 2> parse_betas(std::string_view s) {
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) {
    throw ConfigError("expected 'b1, b2', got '" + std::string(s) + "'");
  }
  return {parse_double(trim(s.substr(0, comma))),
          parse_double(trim(s.substr(comma + 1)))};
}

struct Field {
  const char* key;
  bool alignment;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define WDDA_DOUBLE(name, member)                                        \
  Field{name, true,                                                     \
        [](const RunConfig& c) { return format_double(c.align.member); }, \
        [](RunConfig& c, std::string_view v) { c.align.member = parse_double(v); }}
#define WDDA_INT(name, member)                                            \
  Field{name, true,                                                      \
        [](const RunConfig& c) { return std::to_string(c.align.member); }, \
        [](RunConfig& c, std::string_view v) {                           \
          c.align.member = parse_integer<decltype(c.align.member)>(v);   \
        }}
#define WDDA_BOOL(name, member)                                           \
  Field{name, true,                                                      \
        [](const RunConfig& c) {                                         \
          return std::string(c.align.member ? "true" : "false");         \
        },                                                               \
        [](RunConfig& c, std::string_view v) { c.align.member = parse_bool(v); }}
#define WDDA_BETAS(name, member)                                          \
  Field{name, true,                                                      \
        [](const RunConfig& c) {                                         \
          return format_double(c.align.member[0]) + ", " +               \
                 format_double(c.align.member[1]);                       \
        },                                                               \
        [](RunConfig& c, std::string_view v) { c.align.member = parse_betas(v); }}
#define WDDA_STRING(name, member)                                          \
  Field{name, false, [](const RunConfig& c) { return c.member; },         \
        [](RunConfig& c, std::string_view v) { c.member = std::string(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      WDDA_DOUBLE("alpha", alpha),
      WDDA_DOUBLE("gamma", gamma),
      WDDA_DOUBLE("clip_norm", clip_norm),
      WDDA_INT("batch_size", batch_size),
      WDDA_INT("proposals", proposals),
      WDDA_INT("critic_steps", critic_steps),
      WDDA_BETAS("betas_align", betas_align),
      WDDA_BETAS("betas_det", betas_det),
      WDDA_DOUBLE("source_alpha", source_alpha),
      WDDA_INT("source_steps", source_steps),
      WDDA_INT("phase1_steps", phase1_steps),
      WDDA_INT("phase2_steps", phase2_steps),
      WDDA_INT("seed", seed),
      WDDA_BOOL("freeze_first_block", freeze_first_block),
      WDDA_BOOL("flip_augment", flip_augment),
      WDDA_BOOL("local_detection_term", local_detection_term),
      WDDA_DOUBLE("score_threshold", score_threshold),
      WDDA_DOUBLE("nms_iou", nms_iou),
      WDDA_INT("image_short_side", image_short_side),
      WDDA_BOOL("log_wall_time", log_wall_time),
      WDDA_STRING("scenario", scenario),
      WDDA_STRING("source_data", source_data),
      WDDA_STRING("target_data", target_data),
      WDDA_STRING("output_dir", output_dir),
      Field{"eval_iou", false,
            [](const RunConfig& c) { return format_double(c.eval_iou); },
            [](RunConfig& c, std::string_view v) { c.eval_iou = parse_double(v); }},
  };
  return table;
}

#undef WDDA_DOUBLE
#undef WDDA_INT
#undef WDDA_BOOL
#undef WDDA_BETAS
#undef WDDA_STRING

RunConfig parse_fields(std::string_view text, bool alignment_only) {
  RunConfig config;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    // '#' starts a comment anywhere on the line.
    const std::string_view line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (key == f.key && (f.alignment || !alignment_only)) field = &f;
    }
    if (!field) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) {
      throw ConfigError(where + "duplicate key '" + key + "'");
    }
    try {
      field->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  validate(config.align);
  return config;
}

std::string serialize_fields(const RunConfig& config, bool alignment_only) {
  std::string out;
  for (const Field& f : fields()) {
    if (alignment_only && !f.alignment) continue;
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

}  // namespace

void validate(const AlignmentConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid config: ") + what);
  };
  require(c.alpha > 0, "alpha must be > 0");
  require(c.gamma >= 0, "gamma must be >= 0");
  require(c.clip_norm > 0, "clip_norm must be > 0");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.proposals >= 1, "proposals must be >= 1");
  require(c.critic_steps >= 1, "critic_steps must be >= 1");
  for (double b : {c.betas_align[0], c.betas_align[1], c.betas_det[0],
                   c.betas_det[1]}) {
    require(b >= 0 && b < 1, "betas must lie in [0, 1)");
  }
  require(c.source_alpha > 0, "source_alpha must be > 0");
  require(c.source_steps >= 0, "source_steps must be >= 0");
  require(c.phase1_steps >= 0, "phase1_steps must be >= 0");
  require(c.phase2_steps >= 0, "phase2_steps must be >= 0");
  require(c.score_threshold >= 0 && c.score_threshold <= 1,
          "score_threshold must lie in [0, 1]");
  require(c.nms_iou > 0 && c.nms_iou <= 1, "nms_iou must lie in (0, 1]");
  require(c.image_short_side >= 1, "image_short_side must be >= 1");
}

RunConfig parse_config(std::string_view text) {
  RunConfig c = parse_fields(text, false);
  if (!(c.eval_iou > 0 && c.eval_iou <= 1)) {
    throw ConfigError("invalid config: eval_iou must lie in (0, 1]");
  }
  return c;
}

std::string serialize_config(const RunConfig& config) {
  return serialize_fields(config, false);
}

std::string serialize_alignment(const AlignmentConfig& config) {
  RunConfig c;
  c.align = config;
  return serialize_fields(c, true);
}

AlignmentConfig parse_alignment(std::string_view text) {
  return parse_fields(text, true).align;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize_config(config);
}

}  // namespace wdda
