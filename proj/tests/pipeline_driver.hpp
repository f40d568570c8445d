#pragma once

// Drives a pipeline run to completion, standing in for the human reviewer:
// split-brain suspects and QC clusters are decided from ground-truth labels.

#include <map>
#include <sstream>
#include <string>

#include "ctprep/ctprep.hpp"

namespace ctprep::testing {

using LabelIndex = std::map<std::string, phantom::GroundTruth>;

inline LabelIndex index_labels(const std::vector<phantom::GroundTruth>& labels) {
  LabelIndex out;
  for (const auto& gt : labels) out[gt.series_uid] = gt;
  return out;
}

/// Series UID of a scan id ("<uid>" or "<uid>_<Orientation>").
inline std::string series_of_scan(const std::string& scan_id) { return scan_id.substr(0, scan_id.find('_')); }

inline phantom::Category category_of(const LabelIndex& labels, const std::string& scan_id) {
  return labels.at(series_of_scan(scan_id)).category;
}

/// Excludes suspected split brains whose labels say they are split.
inline void write_review(const Pipeline& p, const LabelIndex& labels) {
  std::string text;
  for (const auto& [id, r] : p.state().scans) {
    if (!r.verdict || r.verdict->decision != Decision::NeedsReview || r.review) continue;
    auto c = category_of(labels, id);
    bool split = c == phantom::Category::SplitBase || c == phantom::Category::SplitVault;
    text += id + (split ? " exclude\n" : " accept\n");
  }
  io::write_text_atomic(p.config().review_file, text);
}

/// Marks each cluster invalid when most of its members are planted flips.
inline void write_decisions(const Pipeline& p, const LabelIndex& labels) {
  ClusterModel model = model_from_text(io::read_text(p.config().output_dir / "qc" / "model.txt"));
  std::string text = "# model " + model.fingerprint() + "\n";
  for (int c = 0; c < model.n_clusters(); ++c) {
    std::size_t flipped = 0, total = 0;
    for (const auto& id : model.members(c)) {
      ++total;
      flipped += category_of(labels, id) == phantom::Category::FlippedAxial;
    }
    text += std::to_string(c) + (2 * flipped > total ? " invalid\n" : " valid\n");
  }
  io::write_text_atomic(p.config().decisions_file, text);
}

struct DrivenRun {
  ExclusionReport report;
  std::size_t runs = 0;
  std::size_t executions = 0;
};

/// Runs, answers whatever the pipeline waits on, and reruns until complete.
inline DrivenRun drive_to_completion(const PipelineConfig& cfg, const LabelIndex& labels, RunOptions opt = {}) {
  DrivenRun out;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Pipeline p(cfg, opt);
    auto summary = p.run();
    ++out.runs;
    out.executions += summary.executions;
    out.report = summary.report;
    switch (summary.status) {
      case RunStatus::Complete: return out;
      case RunStatus::AwaitingReview: write_review(p, labels); break;
      case RunStatus::AwaitingDecisions:
        write_review(p, labels);
        write_decisions(p, labels);
        break;
    }
  }
  throw std::runtime_error("pipeline did not complete after six runs");
}

/// Expected report buckets from the labels.
inline ExclusionReport expected_report(const std::vector<phantom::GroundTruth>& labels) {
  ExclusionReport r;
  for (const auto& gt : labels) {
    for (const auto& e : gt.expected) {
      ++r.total_ingested;
      if (e.final_outcome == "Accepted") ++r.total_accepted;
      else if (e.final_outcome == "NonAxial") ++r.non_axial;
      else if (e.final_outcome == "Localiser") ++r.localiser;
      else if (e.final_outcome == "BoneReformat") ++r.bone_reformat;
      else if (e.final_outcome == "SeparatedSkullBaseVault") ++r.separated_skull_base_vault;
      else if (e.final_outcome == "PoorPositioning") ++r.poor_positioning;
    }
  }
  r.recompute_totals();
  return r;
}

inline PipelineConfig config_for(const std::filesystem::path& in, const std::filesystem::path& out,
                                 std::size_t parallelism = 1) {
  PipelineConfig cfg;
  cfg.input_dir = in;
  cfg.output_dir = out;
  cfg.parallelism = parallelism;
  cfg.fill_defaults();
  return cfg;
}

}  // namespace ctprep::testing
