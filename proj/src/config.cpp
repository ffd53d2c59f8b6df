#include "manai/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "manai/error.hpp"
#include "text_util.hpp"

namespace manai {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& what) {
  throw Error(ErrorCode::ConfigError, what);
}

fs::path resolve_path(std::string_view value, const fs::path& base_dir) {
  if (value.empty()) return {};
  fs::path path(value);
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  return path.lexically_normal();
}

double parse_positive(std::string_view key, std::string_view value) {
  auto parsed = detail::parse_double(value);
  if (!parsed || !std::isfinite(*parsed) || *parsed <= 0.0) {
    config_error(std::string(key) + " must be a positive number, got '" +
                 std::string(value) + "'");
  }
  return *parsed;
}

}  // namespace

std::vector<std::string> split_args(std::string_view text) {
  std::vector<std::string> args;
  std::string current;
  bool in_token = false;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' && i + 1 < text.size()) {
      current += text[++i];
      in_token = true;
    } else if (c == '"') {
      quoted = !quoted;
      in_token = true;
    } else if (!quoted && (c == ' ' || c == '\t')) {
      if (in_token) args.push_back(std::exchange(current, {}));
      in_token = false;
    } else {
      current += c;
      in_token = true;
    }
  }
  if (quoted) config_error("unterminated quote in argument list");
  if (in_token) args.push_back(current);
  return args;
}

std::string join_args(const std::vector<std::string>& args) {
  std::string out;
  for (const auto& arg : args) {
    if (!out.empty()) out += ' ';
    const bool needs_quotes =
        arg.empty() || arg.find_first_of(" \t") != std::string::npos;
    if (needs_quotes) out += '"';
    for (char c : arg) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    if (needs_quotes) out += '"';
  }
  return out;
}

void apply_setting(ExperimentConfig& config, std::string_view key,
                   std::string_view value, const fs::path& base_dir) {
  value = detail::trim(value);
  auto& harness = config.harness;
  if (key == "harness.program") {
    const bool has_slash = value.find('/') != std::string_view::npos;
    harness.program = has_slash ? resolve_path(value, base_dir).string()
                                : std::string(value);
  } else if (key == "harness.args") {
    harness.args = split_args(value);
  } else if (key == "harness.list_args") {
    harness.list_args = split_args(value);
  } else if (key == "harness.working_dir") {
    harness.working_dir = resolve_path(value, base_dir);
  } else if (key == "harness.timeout_s") {
    harness.timeout_ns =
        static_cast<std::int64_t>(std::llround(parse_positive(key, value) * 1e9));
  } else if (key.starts_with("harness.env.")) {
    const std::string name(key.substr(12));
    if (name.empty() || name.find('=') != std::string::npos) {
      config_error("invalid environment variable name in '" + std::string(key) + "'");
    }
    harness.env[name] = std::string(value);
  } else if (key == "probe.backend") {
    auto backend = parse_probe_backend(value);
    if (!backend) config_error("probe.backend must be rapl or simulated");
    config.probe.backend = *backend;
  } else if (key == "probe.scenario") {
    config.probe.scenario = resolve_path(value, base_dir);
  } else if (key == "probe.powercap_root") {
    config.probe.powercap_root = value.empty() ? fs::path(kDefaultPowercapRoot)
                                               : resolve_path(value, base_dir);
  } else if (key == "probe.update_interval_ns") {
    if (value.empty()) {
      config.probe.update_interval_ns.reset();
    } else {
      auto parsed = detail::parse_int64(value);
      if (!parsed || *parsed <= 0) {
        config_error("probe.update_interval_ns must be a positive integer");
      }
      config.probe.update_interval_ns = *parsed;
    }
  } else if (key == "probe.timeline") {
    auto timeline = parse_timeline(value);
    if (!timeline) config_error("probe.timeline must be auto, realtime or virtual");
    config.timeline = *timeline;
  } else if (key == "experiment.rate") {
    config.sampling_rate_hz = parse_positive(key, value);
  } else if (key == "experiment.iterations") {
    auto parsed = detail::parse_int64(value);
    if (!parsed || *parsed < 1 || *parsed > 1'000'000) {
      config_error("experiment.iterations must be an integer >= 1");
    }
    config.iterations = static_cast<int>(*parsed);
  } else if (key == "experiment.select") {
    config.selection.clear();
    for (const auto& part : detail::split(value, ',')) {
      auto trimmed = detail::trim(part);
      if (trimmed.empty()) continue;
      auto id = TestId::try_parse(trimmed);
      if (!id) config_error("malformed test id '" + std::string(trimmed) + "'");
      config.selection.push_back(*id);
    }
  } else if (key == "experiment.revision") {
    if (!value.empty()) validate_revision_label(value);
    config.revision_label = std::string(value);
  } else if (key == "experiment.baseline") {
    config.baseline = BaselineSetting::parse(value);
  } else if (key == "store.data_dir") {
    if (value.empty()) config_error("store.data_dir must not be empty");
    config.data_dir = resolve_path(value, base_dir);
  } else {
    config_error("unknown config key '" + std::string(key) + "'");
  }
}

void parse_config_text(ExperimentConfig& config, std::string_view text,
                       const fs::path& base_dir) {
  std::string section;
  std::size_t line_no = 0;
  for (std::string_view raw : detail::split_lines(text)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') config_error("malformed section header");
        section = std::string(detail::trim(line.substr(1, line.size() - 2)));
        if (section != "harness" && section != "probe" && section != "experiment" &&
            section != "store") {
          config_error("unknown section [" + section + "]");
        }
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string_view::npos) config_error("expected key=value");
      if (section.empty()) config_error("key outside of any section");
      const std::string key =
          section + "." + std::string(detail::trim(line.substr(0, eq)));
      apply_setting(config, key, line.substr(eq + 1), base_dir);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError,
                  "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config_file(ExperimentConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot read config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    parse_config_text(config, buffer.str(), fs::absolute(path).parent_path());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

namespace {

using Entry = std::tuple<std::string, std::string, std::string>;

std::vector<Entry> ordered_entries(const ExperimentConfig& config) {
  std::vector<Entry> entries;
  const auto& h = config.harness;
  entries.emplace_back("harness", "program", h.program);
  entries.emplace_back("harness", "args", join_args(h.args));
  entries.emplace_back("harness", "list_args", join_args(h.list_args));
  entries.emplace_back("harness", "working_dir", h.working_dir.string());
  entries.emplace_back("harness", "timeout_s",
                       detail::format_exact(static_cast<double>(h.timeout_ns) / 1e9));
  for (const auto& [name, value] : h.env) {
    entries.emplace_back("harness", "env." + name, value);
  }
  entries.emplace_back("probe", "backend", std::string(to_string(config.probe.backend)));
  entries.emplace_back("probe", "scenario", config.probe.scenario.string());
  entries.emplace_back("probe", "powercap_root", config.probe.powercap_root.string());
  entries.emplace_back("probe", "update_interval_ns",
                       config.probe.update_interval_ns
                           ? std::to_string(*config.probe.update_interval_ns)
                           : std::string());
  entries.emplace_back("probe", "timeline", std::string(to_string(config.timeline)));
  entries.emplace_back("experiment", "rate",
                       detail::format_exact(config.sampling_rate_hz));
  entries.emplace_back("experiment", "iterations", std::to_string(config.iterations));
  std::string select;
  for (const auto& id : config.selection) {
    if (!select.empty()) select += ',';
    select += id.str();
  }
  entries.emplace_back("experiment", "select", select);
  entries.emplace_back("experiment", "revision", config.revision_label);
  entries.emplace_back("experiment", "baseline", config.baseline.str());
  entries.emplace_back("store", "data_dir", config.data_dir.string());
  return entries;
}

std::string render(const std::vector<Entry>& entries, bool include_store) {
  std::string out;
  std::string section;
  for (const auto& [sec, key, value] : entries) {
    if (sec == "store" && !include_store) continue;
    if (sec != section) {
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key + "=" + value + "\n";
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> config_entries(const ExperimentConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& [sec, key, value] : ordered_entries(config)) {
    if (sec == "store") continue;
    out[sec + "." + key] = value;
  }
  return out;
}

std::string render_config(const ExperimentConfig& config) {
  return render(ordered_entries(config), true);
}

std::string config_digest(const ExperimentConfig& config) {
  const std::string text = render(ordered_entries(config), false);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(ErrorCode::Internal, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

}  // namespace manai
