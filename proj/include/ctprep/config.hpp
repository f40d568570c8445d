#pragma once

// Flat `key = value` configuration for a pipeline run. Blank lines and
// `#` comments are ignored; unknown keys are errors so typos surface early.

#include <charconv>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "ctprep/dicom.hpp"
#include "ctprep/error.hpp"
#include "ctprep/io.hpp"

namespace ctprep {

struct PipelineConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  double bone_threshold_hu = 300.0;
  std::size_t crop_margin = 5;
  std::size_t target_height = 500;
  std::size_t target_width = 400;
  double hu_window_min = 0.0;
  double hu_window_max = 100.0;
  std::size_t split_review_threshold = 25;
  std::size_t localiser_slice_threshold = 3;
  int age_cutoff = 72;
  int gmm_k_min = 1;
  int gmm_k_max = 6;
  std::size_t parallelism = 1;
  std::size_t registration_max_dim = 64;
  std::set<std::string> bone_kernels{"BONE", "BONEPLUS", "H60S", "H70H"};

  // Defaults below are filled in relative to input_dir / output_dir.
  std::filesystem::path template_dir;
  std::filesystem::path review_file;
  std::filesystem::path decisions_file;
  std::filesystem::path age_sidecar;

  void fill_defaults() {
    if (template_dir.empty()) template_dir = output_dir / "templates";
    if (review_file.empty()) review_file = output_dir / "review.txt";
    if (decisions_file.empty()) decisions_file = output_dir / "qc" / "decisions.txt";
    if (age_sidecar.empty()) age_sidecar = input_dir / "series_ages.txt";
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
    if (input_dir.empty()) fail("input_dir is required");
    if (output_dir.empty()) fail("output_dir is required");
    if (target_height == 0 || target_width == 0) fail("target_height and target_width must be positive");
    if (!(hu_window_max > hu_window_min)) fail("hu_window_max must exceed hu_window_min");
    if (gmm_k_min < 1 || gmm_k_max < gmm_k_min) fail("need 1 <= gmm_k_min <= gmm_k_max");
    if (parallelism == 0) fail("parallelism must be at least 1");
    if (registration_max_dim < 8) fail("registration_max_dim must be at least 8");
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ConfigError, "bad value for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

/// Parses config text. Relative paths are resolved against `base_dir`.
inline PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  PipelineConfig cfg;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  auto path_value = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto view = dicom::trim(line);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(dicom::trim(view.substr(0, eq)));
    std::string_view value = dicom::trim(view.substr(eq + 1));
    using detail::parse_number;
    if (key == "input_dir") cfg.input_dir = path_value(value);
    else if (key == "output_dir") cfg.output_dir = path_value(value);
    else if (key == "template_dir") cfg.template_dir = path_value(value);
    else if (key == "review_file") cfg.review_file = path_value(value);
    else if (key == "decisions_file") cfg.decisions_file = path_value(value);
    else if (key == "age_sidecar") cfg.age_sidecar = path_value(value);
    else if (key == "bone_threshold_hu") cfg.bone_threshold_hu = parse_number<double>(key, value);
    else if (key == "crop_margin") cfg.crop_margin = parse_number<std::size_t>(key, value);
    else if (key == "target_height") cfg.target_height = parse_number<std::size_t>(key, value);
    else if (key == "target_width") cfg.target_width = parse_number<std::size_t>(key, value);
    else if (key == "hu_window_min") cfg.hu_window_min = parse_number<double>(key, value);
    else if (key == "hu_window_max") cfg.hu_window_max = parse_number<double>(key, value);
    else if (key == "split_review_threshold") cfg.split_review_threshold = parse_number<std::size_t>(key, value);
    else if (key == "localiser_slice_threshold") cfg.localiser_slice_threshold = parse_number<std::size_t>(key, value);
    else if (key == "age_cutoff") cfg.age_cutoff = parse_number<int>(key, value);
    else if (key == "gmm_k_min") cfg.gmm_k_min = parse_number<int>(key, value);
    else if (key == "gmm_k_max") cfg.gmm_k_max = parse_number<int>(key, value);
    else if (key == "parallelism") cfg.parallelism = parse_number<std::size_t>(key, value);
    else if (key == "registration_max_dim") cfg.registration_max_dim = parse_number<std::size_t>(key, value);
    else if (key == "bone_kernels") {
      cfg.bone_kernels.clear();
      std::string item;
      std::istringstream items{std::string(value)};
      while (std::getline(items, item, ',')) {
        auto t = std::string(dicom::trim(item));
        for (auto& ch : t) ch = char(std::toupper(static_cast<unsigned char>(ch)));
        if (!t.empty()) cfg.bone_kernels.insert(t);
      }
    } else {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  cfg.fill_defaults();
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  }
  return parse_config(text, path.parent_path());
}

}  // namespace ctprep
