#pragma once

// Append-only JSON-Lines event log and the per-scan state it replays into.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctprep/error.hpp"
#include "ctprep/reg_qc.hpp"
#include "ctprep/triage.hpp"

namespace ctprep {

using Json = nlohmann::json;

/// Stage names in processing order. `review` (split-brain resolution) and
/// `qc-fit` (global, empty scan_id) are events outside the per-scan chain.
inline constexpr std::array<std::string_view, 7> kStages{"ingest", "triage",      "convert", "register",
                                                         "qc",     "standardize", "done"};

inline int stage_index(std::string_view stage) {
  for (std::size_t i = 0; i < kStages.size(); ++i)
    if (kStages[i] == stage) return int(i);
  return -1;
}

struct ManifestEvent {
  std::string scan_id;
  std::string stage;
  Json payload = Json::object();
  std::string timestamp;

  Json to_json() const { return {{"scan_id", scan_id}, {"stage", stage}, {"payload", payload}, {"timestamp", timestamp}}; }
  static ManifestEvent from_json(const Json& j) {
    ManifestEvent e;
    e.scan_id = j.at("scan_id").get<std::string>();
    e.stage = j.at("stage").get<std::string>();
    e.payload = j.at("payload");
    e.timestamp = j.value("timestamp", "");
    return e;
  }
};

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Thrown by the writer's fault hook; simulates the process dying.
struct SimulatedCrash : std::runtime_error {
  SimulatedCrash() : std::runtime_error("simulated crash") {}
};

struct LoadedManifest {
  std::vector<ManifestEvent> events;
  bool torn_tail = false;
  std::uintmax_t good_bytes = 0;
};

/// Reads a manifest. A missing file is an empty log. With `allow_torn_tail`,
/// an unterminated or unparsable final line (an interrupted append) is
/// dropped; anything else malformed is CorruptManifest.
inline LoadedManifest read_manifest(const std::filesystem::path& path, bool allow_torn_tail) {
  LoadedManifest out;
  if (!std::filesystem::exists(path)) return out;
  std::string text = io::read_text(path);
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    std::size_t nl = text.find('\n', pos);
    bool last = nl == std::string::npos || nl + 1 == text.size();
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    auto fail = [&](const std::string& why) {
      if (allow_torn_tail && last) {
        out.torn_tail = true;
        return true;
      }
      throw Error(ErrorCode::CorruptManifest, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (nl == std::string::npos) {
      if (fail("unterminated final line")) break;
    }
    if (!line.empty()) {
      try {
        out.events.push_back(ManifestEvent::from_json(Json::parse(line)));
      } catch (const Json::exception& e) {
        if (fail(std::string("invalid event: ") + e.what())) break;
      }
    }
    pos = nl + 1;
    out.good_bytes = pos;
  }
  return out;
}

/// Serializes appends from concurrent workers.
class ManifestWriter {
 public:
  explicit ManifestWriter(std::filesystem::path path, std::optional<std::size_t> crash_after = std::nullopt,
                          bool torn_crash = false)
      : path_(std::move(path)), crash_after_(crash_after), torn_crash_(torn_crash) {}

  void append(ManifestEvent e) {
    std::lock_guard lock(mutex_);
    if (e.timestamp.empty()) e.timestamp = utc_timestamp();
    std::string line = e.to_json().dump() + "\n";
    if (crash_after_ && appended_ >= *crash_after_) {
      if (torn_crash_) {
        std::ofstream f(path_, std::ios::binary | std::ios::app);
        f << line.substr(0, line.size() / 2);
      }
      throw SimulatedCrash();
    }
    std::filesystem::create_directories(path_.parent_path());
    std::ofstream f(path_, std::ios::binary | std::ios::app);
    f << line;
    f.flush();
    if (!f) throw Error(ErrorCode::IoFailure, "cannot append to " + path_.string());
    ++appended_;
    events_.push_back(std::move(e));
  }

  std::size_t appended() const { return appended_; }
  std::vector<ManifestEvent> take_events() {
    std::lock_guard lock(mutex_);
    return std::exchange(events_, {});
  }

 private:
  std::filesystem::path path_;
  std::optional<std::size_t> crash_after_;
  bool torn_crash_ = false;
  std::mutex mutex_;
  std::size_t appended_ = 0;
  std::vector<ManifestEvent> events_;
};

struct ScanError {
  std::string stage;
  std::string code;
  std::string message;
};

struct ScanRecord {
  std::string scan_id;
  std::string patient_id;
  std::string series_uid;
  Orientation orientation = Orientation::Axial;
  std::vector<std::string> source_paths;
  std::optional<int> age_years;
  std::vector<std::string> image_type;
  std::optional<std::string> convolution_kernel;
  std::size_t volume_slices = 0;

  /// Index into kStages of the last completed stage; -1 before ingest.
  int stage = -1;
  std::optional<TriageVerdict> verdict;
  std::optional<std::string> review;  // "accept" or "exclude"
  std::optional<std::string> nifti_path;
  std::optional<std::string> transform_path;
  std::optional<std::string> resampled_template_path;
  std::optional<std::string> template_choice;
  std::optional<int> qc_cluster;
  std::optional<RegistrationVerdict> qc_verdict;
  std::optional<std::string> final_output_path;
  std::optional<ScanError> error;

  std::string stage_name() const { return stage < 0 ? "none" : std::string(kStages[std::size_t(stage)]); }
  bool at(std::string_view s) const { return stage == stage_index(s); }
  /// Accepted by triage, or split-brain suspicion overruled by review.
  bool cleared_triage() const {
    if (!verdict) return false;
    if (verdict->decision == Decision::Accepted) return true;
    return verdict->decision == Decision::NeedsReview && review == "accept";
  }
};

struct QcFitState {
  std::string fingerprint;
  std::vector<std::string> scans;
  int clusters = 0;
};

/// In-memory state reconstructed by replaying events in order.
struct PipelineState {
  std::map<std::string, ScanRecord> scans;
  std::optional<QcFitState> qc_fit;

  bool known_source(const std::string& rel) const {
    for (const auto& [id, r] : scans)
      for (const auto& p : r.source_paths)
        if (p == rel) return true;
    return false;
  }

  void apply(const ManifestEvent& e) {
    auto corrupt = [&](const std::string& why) {
      throw Error(ErrorCode::CorruptManifest, "event " + e.stage + " for '" + e.scan_id + "': " + why);
    };
    try {
      const Json& p = e.payload;
      if (e.stage == "qc-fit") {
        QcFitState q;
        q.fingerprint = p.at("fingerprint").get<std::string>();
        q.scans = p.at("scans").get<std::vector<std::string>>();
        q.clusters = p.at("clusters").get<int>();
        qc_fit = q;
        return;
      }
      if (p.contains("error")) {
        auto& r = scans[e.scan_id];
        r.scan_id = e.scan_id;
        if (p.contains("files")) r.source_paths = p.at("files").get<std::vector<std::string>>();
        r.error = ScanError{e.stage, p.at("code").get<std::string>(), p.at("error").get<std::string>()};
        return;
      }
      if (e.stage == "review") {
        auto it = scans.find(e.scan_id);
        if (it == scans.end() || !it->second.verdict || it->second.verdict->decision != Decision::NeedsReview) {
          corrupt("review for a scan that is not awaiting review");
        }
        it->second.review = p.at("action").get<std::string>();
        return;
      }
      int idx = stage_index(e.stage);
      if (idx < 0) corrupt("unknown stage");
      auto& r = scans[e.scan_id];
      if (r.stage != idx - 1) corrupt("out of order after stage " + r.stage_name());
      if (idx >= stage_index("convert") && !r.cleared_triage()) corrupt("scan did not clear triage");
      r.scan_id = e.scan_id;
      r.stage = idx;
      r.error.reset();
      switch (idx) {
        case 0:
          r.patient_id = p.at("patient_id").get<std::string>();
          r.series_uid = p.at("series_uid").get<std::string>();
          r.orientation = parse_orientation(p.at("orientation").get<std::string>());
          r.source_paths = p.at("files").get<std::vector<std::string>>();
          if (p.contains("age")) r.age_years = p.at("age").get<int>();
          r.image_type = p.at("image_type").get<std::vector<std::string>>();
          if (p.contains("kernel")) r.convolution_kernel = p.at("kernel").get<std::string>();
          r.volume_slices = p.at("volume_slices").get<std::size_t>();
          break;
        case 1: {
          TriageVerdict v;
          v.series_uid = r.series_uid;
          v.orientation = parse_orientation(p.at("orientation").get<std::string>());
          v.decision = parse_decision(p.at("decision").get<std::string>());
          v.reason = parse_reason(p.at("reason").get<std::string>());
          r.verdict = v;
          break;
        }
        case 2: r.nifti_path = p.at("nifti").get<std::string>(); break;
        case 3:
          r.transform_path = p.at("transform").get<std::string>();
          r.resampled_template_path = p.at("resampled_template").get<std::string>();
          r.template_choice = p.at("template").get<std::string>();
          break;
        case 4:
          r.qc_cluster = p.at("cluster").get<int>();
          r.qc_verdict = p.at("verdict").get<std::string>() == "Accepted" ? RegistrationVerdict::Accepted
                                                                           : RegistrationVerdict::RegistrationRejected;
          break;
        case 5:
          if (r.qc_verdict != RegistrationVerdict::Accepted) corrupt("standardized a rejected registration");
          r.final_output_path = p.at("output").get<std::string>();
          break;
        default: break;
      }
    } catch (const Json::exception& ex) {
      corrupt(std::string("bad payload: ") + ex.what());
    } catch (const Error& ex) {
      if (ex.code() == ErrorCode::CorruptManifest) throw;
      corrupt(ex.what());
    }
  }

  static PipelineState replay(const std::vector<ManifestEvent>& events) {
    PipelineState s;
    for (const auto& e : events) s.apply(e);
    return s;
  }
};

}  // namespace ctprep
