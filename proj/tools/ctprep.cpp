// Command-line front end: phantom corpus generation and the pipeline stages.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ctprep/ctprep.hpp"

namespace {

using namespace ctprep;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitScanErrors = 2;

void emit_report(const Pipeline& p) {
  auto r = p.report();
  io::write_text_atomic(p.config().output_dir / "report.json", r.to_json().dump(2) + "\n");
  std::cout << r.to_text();
}

int finish(const Pipeline& p) {
  emit_report(p);
  return p.report().errors > 0 ? kExitScanErrors : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctprep: head CT triage, registration QC and standardization"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_stage = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "pipeline config file")->required();
    return sub;
  };

  auto* synth = app.add_subcommand("synth", "generate a phantom DICOM corpus with ground-truth labels");
  std::string synth_out, preset = "balanced";
  std::size_t per_category = 6, rows = 128, slices = 40;
  std::uint64_t seed = 1;
  std::string templates_out;
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--preset", preset, "balanced | small")->check(CLI::IsMember({"balanced", "small"}));
  synth->add_option("--per-category", per_category, "scans per category for the balanced preset");
  synth->add_option("--seed", seed, "corpus seed");
  synth->add_option("--size", rows, "in-plane matrix size (square, >= 64)");
  synth->add_option("--slices", slices, "slices per full axial scan");
  synth->add_option("--templates", templates_out, "also write the two phantom templates here");

  auto* ingest = add_stage("ingest", "discover and parse DICOM series");
  auto* triage = add_stage("triage", "classify series and apply the review file");
  auto* convert = add_stage("convert", "assemble accepted series into NIfTI volumes");
  auto* reg = add_stage("register", "register the age-matched template to each volume");
  auto* qcfit = add_stage("qc-fit", "cluster registration matrices and write montages");
  auto* qcapply = add_stage("qc-apply", "apply cluster decisions");
  auto* stdz = add_stage("standardize", "crop, pad/resize and window accepted volumes");
  auto* run = add_stage("run", "all stages in order");
  std::string stop_after;
  run->add_option("--stop-after", stop_after, "last stage to execute")
      ->check(CLI::IsMember({"ingest", "triage", "convert", "register", "qc", "standardize"}));
  auto* report = app.add_subcommand("report", "print the exclusion report from a manifest");
  std::string manifest_path;
  bool as_json = false;
  report->add_option("-c,--config", config_path, "pipeline config file");
  report->add_option("-m,--manifest", manifest_path, "manifest file (instead of --config)");
  report->add_flag("--json", as_json, "print JSON instead of the table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto spec = preset == "small" ? phantom::small_mixed_corpus(seed) : phantom::balanced_corpus(per_category, seed);
      spec.rows = spec.cols = rows;
      spec.n_slices = slices;
      auto truths = phantom::generate_corpus(spec, synth_out);
      if (!templates_out.empty()) phantom::generate_templates(templates_out);
      std::cout << "wrote " << truths.size() << " series to " << synth_out << "\n";
      return kExitOk;
    }
    if (report->parsed()) {
      fs::path m = manifest_path;
      if (m.empty()) {
        if (config_path.empty()) throw Error(ErrorCode::ConfigError, "report needs --config or --manifest");
        m = load_config(config_path).output_dir / "manifest.jsonl";
      }
      auto r = report_from_manifest(m);
      std::cout << (as_json ? r.to_json().dump(2) + "\n" : r.to_text());
      return kExitOk;
    }

    RunOptions opt;
    opt.log = &std::cerr;
    opt.stop_after = stop_after;
    Pipeline p(load_config(config_path), opt);
    if (ingest->parsed()) p.ingest();
    if (triage->parsed()) {
      p.triage();
      p.apply_review();
    }
    if (convert->parsed()) p.convert();
    if (reg->parsed()) p.register_scans();
    if (qcfit->parsed()) p.qc_fit();
    if (qcapply->parsed() && !p.qc_apply()) {
      std::cerr << "qc: waiting for decisions in " << p.config().decisions_file << "\n";
    }
    if (stdz->parsed()) p.standardize_scans();
    if (run->parsed()) {
      auto summary = p.run();
      std::cerr << "run: " << summary.executions << " stage executions, status " << to_string(summary.status)
                << "\n";
    }
    return finish(p);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kExitConfig : kExitScanErrors;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitScanErrors;
  }
}
