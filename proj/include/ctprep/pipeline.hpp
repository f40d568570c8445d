#pragma once

// Stage orchestration over the manifest. Every stage looks at the replayed
// state, does the work that is still missing, and appends one event per scan.
// Outputs are written atomically before their event, so a crash at any point
// loses at most the in-flight scan's current stage.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ctprep/config.hpp"
#include "ctprep/dicom.hpp"
#include "ctprep/manifest.hpp"
#include "ctprep/nifti.hpp"
#include "ctprep/phantom.hpp"
#include "ctprep/png.hpp"
#include "ctprep/reg_qc.hpp"
#include "ctprep/registration.hpp"
#include "ctprep/report.hpp"
#include "ctprep/standardize.hpp"
#include "ctprep/triage.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

namespace fs = std::filesystem;

/// Runs `fn(i)` for i in [0, n) on up to `width` threads. The first exception
/// stops new work and is rethrown after all threads join.
inline void parallel_for(std::size_t n, std::size_t width, const std::function<void(std::size_t)>& fn) {
  if (width <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(width, n); ++t) {
    pool.emplace_back([&] {
      while (!stop) {
        std::size_t i = next++;
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!first) first = std::current_exception();
          stop = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

enum class RunStatus { Complete, AwaitingDecisions, AwaitingReview };

constexpr std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Complete: return "complete";
    case RunStatus::AwaitingDecisions: return "awaiting-qc-decisions";
    case RunStatus::AwaitingReview: return "awaiting-review";
  }
  return "?";
}

struct RunOptions {
  /// Test hook: the manifest writer "crashes" instead of writing event N+1.
  std::optional<std::size_t> crash_after_events;
  bool torn_crash = false;
  /// Last stage to execute in `run` (one of kStages); empty runs all.
  std::string stop_after;
  std::ostream* log = nullptr;
};

struct RunSummary {
  RunStatus status = RunStatus::Complete;
  std::size_t executions = 0;
  ExclusionReport report;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, RunOptions opt = {}) : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    cfg_.fill_defaults();
    cfg_.validate();
    if (!fs::is_directory(cfg_.input_dir)) {
      throw Error(ErrorCode::ConfigError, "input_dir is not a directory: " + cfg_.input_dir.string());
    }
    fs::create_directories(cfg_.output_dir);
    auto loaded = read_manifest(manifest_path(), true);
    if (loaded.torn_tail) {
      log("manifest: dropping interrupted final line");
      fs::resize_file(manifest_path(), loaded.good_bytes);
    }
    if (!fs::exists(manifest_path())) io::write_text_atomic(manifest_path(), "");
    state_ = PipelineState::replay(loaded.events);
    writer_ = std::make_unique<ManifestWriter>(manifest_path(), opt_.crash_after_events, opt_.torn_crash);
  }

  fs::path manifest_path() const { return cfg_.output_dir / "manifest.jsonl"; }
  const PipelineState& state() const { return state_; }
  const PipelineConfig& config() const { return cfg_; }
  std::size_t executions() const { return writer_->appended(); }
  ExclusionReport report() const { return make_report(state_); }

  // ---- ingest ----

  std::size_t ingest() {
    const std::size_t before = executions();
    std::vector<fs::path> fresh;
    for (const auto& p : list_files_recursive(cfg_.input_dir)) {
      std::string rel = relative_input(p);
      if (state_.known_source(rel) || !looks_like_dicom(p)) continue;
      fresh.push_back(p);
    }
    std::vector<std::optional<DicomSlice>> parsed(fresh.size());
    std::vector<std::optional<Error>> failures(fresh.size());
    parallel_for(fresh.size(), cfg_.parallelism, [&](std::size_t i) {
      try {
        parsed[i] = parse_file(fresh[i]);
      } catch (const Error& e) {
        failures[i] = e;
      }
    });

    std::map<std::string, std::vector<std::pair<fs::path, DicomSlice>>> by_uid;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      if (failures[i]) {
        record_error("file:" + relative_input(fresh[i]), "ingest", *failures[i], {relative_input(fresh[i])});
        continue;
      }
      by_uid[parsed[i]->series_uid].emplace_back(fresh[i], std::move(*parsed[i]));
    }
    const auto ages = load_age_sidecar(cfg_.age_sidecar);
    std::set<std::string> known_uids;
    for (const auto& [id, r] : state_.scans) known_uids.insert(r.series_uid);

    for (auto& [uid, slices] : by_uid) {
      std::vector<std::string> rel_files;
      for (const auto& [p, s] : slices) rel_files.push_back(relative_input(p));
      std::sort(rel_files.begin(), rel_files.end());
      if (known_uids.count(uid)) {
        record_error("file:" + rel_files.front(), "ingest",
                     Error(ErrorCode::InconsistentGeometry, "files added to already-ingested series " + uid), rel_files);
        continue;
      }
      try {
        auto series = group_series(std::move(slices));
        if (series.size() != 1) throw Error(ErrorCode::InconsistentGeometry, "series uid split during grouping");
        ingest_series(series.front(), ages);
      } catch (const Error& e) {
        record_error(uid, "ingest", e, rel_files);
      }
    }
    return executions() - before;
  }

  // ---- triage ----

  std::size_t triage() {
    const std::size_t before = executions();
    TriageConfig tc;
    tc.localiser_slice_threshold = cfg_.localiser_slice_threshold;
    tc.split_review_threshold = cfg_.split_review_threshold;
    tc.bone_tokens = cfg_.bone_kernels;
    for (const auto& id : scans_at("ingest")) {
      const auto& r = state_.scans.at(id);
      DicomSeries probe;
      probe.series_uid = r.series_uid;
      DicomSlice first;
      first.image_type = r.image_type;
      first.convolution_kernel = r.convolution_kernel;
      probe.slices.push_back(first);
      auto v = triage_series(probe, r.orientation, r.volume_slices, tc);
      if (v.decision == Decision::NeedsReview) {
        try {
          write_review_preview(r);
        } catch (const Error& e) {
          record_error(id, "triage", e);
          continue;
        }
      }
      emit(id, "triage",
           {{"orientation", std::string(to_string(v.orientation))},
            {"decision", std::string(to_string(v.decision))},
            {"reason", std::string(to_string(v.reason))},
            {"volume_slices", r.volume_slices}});
    }
    return executions() - before;
  }

  /// Applies `scan_id exclude|accept` lines from the review file to scans
  /// awaiting review. Unknown ids and already-resolved scans are ignored.
  std::size_t apply_review() {
    const std::size_t before = executions();
    if (!fs::exists(cfg_.review_file)) return 0;
    std::istringstream lines(io::read_text(cfg_.review_file));
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream in(line);
      std::string id, action;
      if (!(in >> id)) continue;
      in >> action;
      if (action != "exclude" && action != "accept") {
        throw Error(ErrorCode::ConfigError, cfg_.review_file.string() + ":" + std::to_string(line_no) +
                                                ": expected '<scan_id> exclude|accept'");
      }
      auto it = state_.scans.find(id);
      if (it == state_.scans.end() || !it->second.at("triage") || it->second.review || !it->second.verdict ||
          it->second.verdict->decision != Decision::NeedsReview) {
        continue;
      }
      emit(id, "review", {{"action", action}});
    }
    return executions() - before;
  }

  // ---- convert ----

  std::size_t convert() {
    const std::size_t before = executions();
    std::vector<std::string> todo;
    for (const auto& id : scans_at("triage"))
      if (state_.scans.at(id).cleared_triage()) todo.push_back(id);
    for_each_scan(todo, [&](const std::string& id) {
      ScanRecord r = snapshot(id);
      auto series = load_series(r);
      Volume v = assemble(series);
      std::string rel = "nifti/" + id + ".nii";
      write_nifti(v, cfg_.output_dir / rel);
      emit(id, "convert",
           {{"nifti", rel}, {"shape", {v.n_slices(), v.height(), v.width()}}, {"spacing", v.spacing}});
    }, "convert");
    return executions() - before;
  }

  // ---- register ----

  std::size_t register_scans() {
    const std::size_t before = executions();
    auto todo = scans_at("convert");
    if (todo.empty()) return 0;
    const TemplateBank& bank = templates();
    RegistrationConfig rc;
    rc.ct_window_min = cfg_.hu_window_min;
    rc.ct_window_max = cfg_.hu_window_max;
    rc.max_working_dim = cfg_.registration_max_dim;
    for_each_scan(todo, [&](const std::string& id) {
      ScanRecord r = snapshot(id);
      Volume ct = read_nifti(cfg_.output_dir / *r.nifti_path);
      auto choice = choose_template(r.age_years, bank);
      auto result = register_template(select_template(r.age_years, bank), ct, rc);
      std::string mat = "reg/" + id + ".mat";
      std::string resampled = "reg/" + id + "_template.nii";
      io::write_text_atomic(cfg_.output_dir / mat, result.transform.to_text());
      write_nifti(result.resampled_template, cfg_.output_dir / resampled);
      emit(id, "register",
           {{"transform", mat},
            {"resampled_template", resampled},
            {"template", std::string(to_string(choice))},
            {"similarity", result.similarity}});
    }, "register");
    return executions() - before;
  }

  // ---- qc ----

  fs::path model_path() const { return cfg_.output_dir / "qc" / "model.txt"; }

  /// Refits when the set of registered scans differs from the last fit.
  std::size_t qc_fit() {
    const std::size_t before = executions();
    auto population = registered_scans();
    if (population.empty()) return 0;
    if (state_.qc_fit && state_.qc_fit->scans == population && fs::exists(model_path())) return 0;

    std::vector<TransformFeature> features;
    for (const auto& id : population) {
      const auto& r = state_.scans.at(id);
      features.push_back(make_feature(id, AffineTransform::from_text(io::read_text(cfg_.output_dir / *r.transform_path))));
    }
    GmmConfig gc;
    gc.k_min = cfg_.gmm_k_min;
    gc.k_max = cfg_.gmm_k_max;
    ClusterModel model = fit_cluster_model(features, gc);
    io::write_text_atomic(model_path(), model_to_text(model));
    for (int c = 0; c < model.n_clusters(); ++c) write_montage(model, c);
    bool stale = true;
    if (fs::exists(cfg_.decisions_file)) {
      std::string text = io::read_text(cfg_.decisions_file);
      stale = text.find("# model " + model.fingerprint()) == std::string::npos;
    }
    if (stale) io::write_text_atomic(cfg_.decisions_file, decisions_template(model));
    emit("", "qc-fit", {{"fingerprint", model.fingerprint()}, {"scans", population}, {"clusters", model.n_clusters()}});
    return executions() - before;
  }

  /// Records verdicts for registered scans without one. Returns nullopt
  /// when the decisions file still has undecided clusters.
  std::optional<std::size_t> qc_apply() {
    const std::size_t before = executions();
    auto todo = scans_at("register");
    if (todo.empty()) return 0;
    if (!state_.qc_fit || !fs::exists(model_path())) return std::nullopt;
    ClusterModel model = model_from_text(io::read_text(model_path()));
    std::map<std::string, RegistrationVerdict> verdicts;
    try {
      std::string text = fs::exists(cfg_.decisions_file) ? io::read_text(cfg_.decisions_file) : "";
      verdicts = apply_decisions(model, parse_decisions(text, model.fingerprint()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndecidedCluster) throw;
      log(std::string("qc: ") + e.what() + "; edit " + cfg_.decisions_file.string());
      return std::nullopt;
    }
    for (const auto& id : todo) {
      auto it = verdicts.find(id);
      if (it == verdicts.end()) continue;
      emit(id, "qc",
           {{"cluster", model.assignments.at(id)},
            {"verdict", std::string(to_string(it->second))},
            {"model", model.fingerprint()}});
    }
    return executions() - before;
  }

  // ---- standardize ----

  std::size_t standardize_scans() {
    const std::size_t before = executions();
    std::vector<std::string> todo;
    for (const auto& id : scans_at("qc"))
      if (state_.scans.at(id).qc_verdict == RegistrationVerdict::Accepted) todo.push_back(id);
    StandardizeConfig sc;
    sc.bone_threshold_hu = cfg_.bone_threshold_hu;
    sc.crop_margin = cfg_.crop_margin;
    sc.target_height = cfg_.target_height;
    sc.target_width = cfg_.target_width;
    sc.hu_window_min = cfg_.hu_window_min;
    sc.hu_window_max = cfg_.hu_window_max;
    for_each_scan(todo, [&](const std::string& id) {
      ScanRecord r = snapshot(id);
      Volume v = standardize(read_nifti(cfg_.output_dir / *r.nifti_path), sc);
      std::string rel = id + "_std.nii";
      write_nifti(v, cfg_.output_dir / rel);
      emit(id, "standardize", {{"output", rel}, {"shape", {v.n_slices(), v.height(), v.width()}}});
    }, "standardize");
    for (const auto& id : scans_at("standardize")) emit(id, "done", Json::object());
    return executions() - before;
  }

  /// All stages in order, stopping after `opt.stop_after` when set.
  RunSummary run() {
    RunSummary out;
    const std::size_t before = executions();
    auto stop_here = [&](std::string_view s) { return opt_.stop_after == s; };
    out.status = [&] {
      ingest();
      if (stop_here("ingest")) return RunStatus::Complete;
      triage();
      apply_review();
      if (stop_here("triage")) return RunStatus::Complete;
      convert();
      if (stop_here("convert")) return RunStatus::Complete;
      register_scans();
      if (stop_here("register")) return RunStatus::Complete;
      qc_fit();
      if (!qc_apply()) return RunStatus::AwaitingDecisions;
      if (stop_here("qc")) return RunStatus::Complete;
      standardize_scans();
      for (const auto& [id, r] : state_.scans) {
        if (r.at("triage") && r.verdict && r.verdict->decision == Decision::NeedsReview && !r.review && !r.error) {
          return RunStatus::AwaitingReview;
        }
      }
      return RunStatus::Complete;
    }();
    out.executions = executions() - before;
    out.report = report();
    return out;
  }

 private:
  void log(const std::string& msg) const {
    if (opt_.log) *opt_.log << msg << "\n";
  }

  std::string relative_input(const fs::path& p) const {
    return fs::relative(p, cfg_.input_dir).generic_string();
  }

  void emit(const std::string& id, const std::string& stage, Json payload) {
    ManifestEvent e{id, stage, std::move(payload), {}};
    std::lock_guard lock(state_mutex_);
    writer_->append(e);
    state_.apply(e);
  }

  void record_error(const std::string& id, const std::string& stage, const Error& err,
                    const std::vector<std::string>& files = {}) {
    Json p{{"error", err.what()}, {"code", std::string(to_string(err.code()))}};
    if (!files.empty()) p["files"] = files;
    log(id + ": " + stage + " failed: " + err.what());
    emit(id, stage, std::move(p));
  }

  ScanRecord snapshot(const std::string& id) {
    std::lock_guard lock(state_mutex_);
    return state_.scans.at(id);
  }

  std::vector<std::string> scans_at(std::string_view stage) const {
    std::vector<std::string> out;
    for (const auto& [id, r] : state_.scans)
      if (r.at(stage) && !r.error) out.push_back(id);
    return out;
  }

  std::vector<std::string> registered_scans() const {
    std::vector<std::string> out;
    for (const auto& [id, r] : state_.scans)
      if (r.stage >= stage_index("register")) out.push_back(id);
    return out;
  }

  void for_each_scan(const std::vector<std::string>& ids, const std::function<void(const std::string&)>& fn,
                     const std::string& stage) {
    parallel_for(ids.size(), cfg_.parallelism, [&](std::size_t i) {
      try {
        fn(ids[i]);
      } catch (const Error& e) {
        record_error(ids[i], stage, e);
      }
    });
  }

  void ingest_series(const DicomSeries& series, const std::map<std::string, int>& ages) {
    std::optional<int> age = series.patient_age_years;
    if (!age) {
      if (auto it = ages.find(series.series_uid); it != ages.end()) age = it->second;
    }
    auto parts = split_mixed_series(series);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const auto& [orientation, part] = parts[i];
      std::string id = i == 0 ? series.series_uid : series.series_uid + "_" + std::string(to_string(orientation));
      std::vector<std::string> files;
      for (const auto& p : part.source_paths) files.push_back(relative_input(p));
      std::size_t volume_slices = part.slices.size();
      try {
        volume_slices = assembled_slice_count(part);
      } catch (const Error&) {
        // Geometry problems surface at convert; triage uses the raw count.
      }
      const auto& first = part.slices.front();
      Json payload{{"patient_id", series.patient_id},
                   {"series_uid", series.series_uid},
                   {"orientation", std::string(to_string(orientation))},
                   {"files", files},
                   {"image_type", first.image_type},
                   {"volume_slices", volume_slices}};
      if (first.convolution_kernel) payload["kernel"] = *first.convolution_kernel;
      if (age) payload["age"] = *age;
      emit(id, "ingest", std::move(payload));
    }
  }

  DicomSeries load_series(const ScanRecord& r) const {
    std::vector<std::pair<fs::path, DicomSlice>> slices;
    for (const auto& rel : r.source_paths) {
      fs::path p = cfg_.input_dir / rel;
      slices.emplace_back(p, parse_file(p));
    }
    auto series = group_series(std::move(slices));
    if (series.size() != 1) throw Error(ErrorCode::InconsistentGeometry, "scan files no longer form one series");
    return series.front();
  }

  /// 8-bit middle slice (window 0..100 HU) for the split-brain reviewer.
  void write_review_preview(const ScanRecord& r) const {
    Volume v = assemble(load_series(r));
    std::size_t s = v.n_slices() / 2;
    Image8 img(v.width(), v.height(), 1);
    for (std::size_t row = 0; row < v.height(); ++row)
      for (std::size_t col = 0; col < v.width(); ++col)
        *img.at(row, col) = std::uint8_t(std::lround(255.0 * window_scale_value(v(s, row, col), 0.0, 100.0)));
    write_png(img, cfg_.output_dir / "review" / (r.scan_id + ".png"));
  }

  void write_montage(const ClusterModel& model, int cluster) const {
    std::vector<Volume> cts, tmpls;
    for (const auto& id : representatives(model, cluster)) {
      const auto& r = state_.scans.at(id);
      cts.push_back(read_nifti(cfg_.output_dir / *r.nifti_path));
      tmpls.push_back(read_nifti(cfg_.output_dir / *r.resampled_template_path));
    }
    std::vector<MontageTile> tiles;
    for (std::size_t i = 0; i < cts.size(); ++i) tiles.push_back({&cts[i], &tmpls[i]});
    write_png(render_montage(tiles), cfg_.output_dir / "qc" / ("cluster_" + std::to_string(cluster) + ".png"));
  }

  const TemplateBank& templates() {
    if (!bank_) {
      auto paths = phantom::template_paths(cfg_.template_dir);
      if (!fs::exists(paths.younger) || !fs::exists(paths.older)) {
        log("templates: generating phantom templates in " + cfg_.template_dir.string());
        phantom::generate_templates(cfg_.template_dir);
      }
      bank_ = phantom::load_templates(cfg_.template_dir);
      bank_->age_cutoff = cfg_.age_cutoff;
    }
    return *bank_;
  }

  PipelineConfig cfg_;
  RunOptions opt_;
  PipelineState state_;
  std::unique_ptr<ManifestWriter> writer_;
  std::mutex state_mutex_;
  std::optional<TemplateBank> bank_;
};

}  // namespace ctprep
