#pragma once

// Exclusion accounting. Counts are per scan (one orientation partition of
// one series), not per patient.

#include <cstdio>
#include <string>

#include <json.hpp>

#include "ctprep/manifest.hpp"

namespace ctprep {

struct ExclusionReport {
  std::size_t non_axial = 0;
  std::size_t localiser = 0;
  std::size_t bone_reformat = 0;
  std::size_t separated_skull_base_vault = 0;
  std::size_t poor_positioning = 0;
  std::size_t total_excluded = 0;
  std::size_t total_accepted = 0;
  std::size_t pending = 0;
  std::size_t total_ingested = 0;
  std::size_t errors = 0;

  bool operator==(const ExclusionReport&) const = default;

  void recompute_totals() {
    total_excluded = non_axial + localiser + bone_reformat + separated_skull_base_vault + poor_positioning;
  }

  Json to_json() const {
    return {{"NonAxial", non_axial},
            {"Localiser", localiser},
            {"BoneReformat", bone_reformat},
            {"SeparatedSkullBaseVault", separated_skull_base_vault},
            {"PoorPositioning", poor_positioning},
            {"total_excluded", total_excluded},
            {"total_accepted", total_accepted},
            {"pending", pending},
            {"total_ingested", total_ingested},
            {"errors", errors}};
  }

  static ExclusionReport from_json(const Json& j) {
    ExclusionReport r;
    r.non_axial = j.at("NonAxial").get<std::size_t>();
    r.localiser = j.at("Localiser").get<std::size_t>();
    r.bone_reformat = j.at("BoneReformat").get<std::size_t>();
    r.separated_skull_base_vault = j.at("SeparatedSkullBaseVault").get<std::size_t>();
    r.poor_positioning = j.at("PoorPositioning").get<std::size_t>();
    r.total_accepted = j.value("total_accepted", std::size_t{0});
    r.pending = j.value("pending", std::size_t{0});
    r.total_ingested = j.value("total_ingested", std::size_t{0});
    r.errors = j.value("errors", std::size_t{0});
    r.recompute_totals();
    return r;
  }

  std::string to_text() const {
    std::string out;
    char buf[96];
    auto row = [&](const char* label, std::size_t n) {
      std::snprintf(buf, sizeof buf, "%-40s %8zu\n", label, n);
      out += buf;
    };
    out += "Reason for exclusion                     Count\n";
    out += "---------------------------------------- --------\n";
    row("Non-axial", non_axial);
    row("Localiser", localiser);
    row("Bone reformat", bone_reformat);
    row("Separated skull base and vault", separated_skull_base_vault);
    row("Poor positioning (registration QC)", poor_positioning);
    out += "---------------------------------------- --------\n";
    row("Total excluded", total_excluded);
    row("Accepted", total_accepted);
    row("Pending", pending);
    row("Ingested", total_ingested);
    row("Errors", errors);
    return out;
  }
};

inline ExclusionReport make_report(const PipelineState& state) {
  ExclusionReport r;
  for (const auto& [id, rec] : state.scans) {
    if (rec.error) ++r.errors;
    if (rec.stage < 0) continue;  // file-level failures never became scans
    ++r.total_ingested;
    if (rec.verdict && rec.verdict->decision == Decision::Excluded) {
      switch (rec.verdict->reason) {
        case ExclusionReason::NonAxial: ++r.non_axial; break;
        case ExclusionReason::Localiser: ++r.localiser; break;
        case ExclusionReason::BoneReformat: ++r.bone_reformat; break;
        default: ++r.pending; break;
      }
    } else if (rec.verdict && rec.verdict->decision == Decision::NeedsReview && rec.review == "exclude") {
      ++r.separated_skull_base_vault;
    } else if (rec.qc_verdict == RegistrationVerdict::RegistrationRejected) {
      ++r.poor_positioning;
    } else if (rec.at("done")) {
      ++r.total_accepted;
    } else {
      ++r.pending;
    }
  }
  r.recompute_totals();
  return r;
}

/// Strict read: a torn or malformed line is CorruptManifest.
inline ExclusionReport report_from_manifest(const std::filesystem::path& manifest) {
  if (!std::filesystem::exists(manifest)) {
    throw Error(ErrorCode::CorruptManifest, "no manifest at " + manifest.string());
  }
  return make_report(PipelineState::replay(read_manifest(manifest, false).events));
}

}  // namespace ctprep
