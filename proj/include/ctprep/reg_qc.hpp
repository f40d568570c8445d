#pragma once

// Registration QC: PCA of the 3x3 linear parts down to 3-D, Gaussian mixture
// clustering with BIC model selection, and cluster-level human decisions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctprep/affine.hpp"
#include "ctprep/error.hpp"
#include "ctprep/io.hpp"
#include "ctprep/png.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

using Vector9 = Eigen::Matrix<double, 9, 1>;

struct TransformFeature {
  std::string scan_id;
  Vector9 vector9 = Vector9::Zero();
};

inline TransformFeature make_feature(std::string scan_id, const AffineTransform& t) {
  TransformFeature f;
  f.scan_id = std::move(scan_id);
  Eigen::Matrix3d l = t.linear_part();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) f.vector9(r * 3 + c) = l(r, c);
  if (!f.vector9.allFinite()) throw Error(ErrorCode::DegenerateVolume, "transform has non-finite entries");
  return f;
}

struct PcaModel {
  Vector9 mean = Vector9::Zero();
  Eigen::Matrix<double, 3, 9> components = Eigen::Matrix<double, 3, 9>::Zero();
  std::array<double, 3> explained_variance_ratio{0, 0, 0};
  bool zero_variance = false;

  Eigen::Vector3d project(const Vector9& x) const {
    if (zero_variance) return Eigen::Vector3d::Zero();
    return components * (x - mean);
  }
  Vector9 reconstruct(const Eigen::Vector3d& y) const { return mean + components.transpose() * y; }
};

struct PcaResult {
  PcaModel model;
  std::vector<Eigen::Vector3d> projected;
};

/// Centered (not scaled) PCA onto the top three eigenvectors of the sample
/// covariance. Each component's largest-magnitude entry is made positive.
inline PcaResult fit_pca(const std::vector<TransformFeature>& features) {
  const std::size_t n = features.size();
  if (n < 4) throw Error(ErrorCode::TooFewSamples, "PCA needs at least 4 transforms, got " + std::to_string(n));
  PcaResult out;
  auto& m = out.model;
  for (const auto& f : features) m.mean += f.vector9;
  m.mean /= double(n);
  Eigen::Matrix<double, 9, 9> cov = Eigen::Matrix<double, 9, 9>::Zero();
  for (const auto& f : features) {
    Vector9 d = f.vector9 - m.mean;
    cov += d * d.transpose();
  }
  cov /= double(n - 1);

  const double total = cov.trace();
  if (!(total > 1e-24 * std::max(1.0, m.mean.squaredNorm()))) {
    m.zero_variance = true;
    for (int k = 0; k < 3; ++k) m.components(k, k) = 1.0;
    out.projected.assign(n, Eigen::Vector3d::Zero());
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(cov);
  for (int k = 0; k < 3; ++k) {
    Vector9 v = eig.eigenvectors().col(8 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.components.row(k) = v.transpose();
    m.explained_variance_ratio[std::size_t(k)] = std::max(0.0, eig.eigenvalues()(8 - k)) / total;
  }
  for (const auto& f : features) out.projected.push_back(m.project(f.vector9));
  return out;
}

struct GmmComponent {
  double weight = 1.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

struct GmmConfig {
  int k_min = 1;
  int k_max = 6;
  int restarts = 10;
  int max_iterations = 500;
  double tolerance = 1e-8;  // per-point objective change
  double ridge = 1e-6;
  std::uint64_t seed = 20240229;
};

struct GmmFit {
  std::vector<GmmComponent> components;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  /// Objective EM maximizes: log-likelihood minus ridge/2 * sum tr(inv(cov)).
  double penalized_log_likelihood = -std::numeric_limits<double>::infinity();
  double bic = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

namespace gmm {

constexpr double kLog2Pi = 1.8378770664093453;

inline int parameter_count(int k) { return (k - 1) + 3 * k + 6 * k; }

inline double bic(double log_likelihood, int k, std::size_t n) {
  return -2.0 * log_likelihood + double(parameter_count(k)) * std::log(double(n));
}

struct Prepared {
  Eigen::LLT<Eigen::Matrix3d> llt;
  double log_norm = 0.0;
};

inline std::vector<Prepared> prepare(const std::vector<GmmComponent>& comps) {
  std::vector<Prepared> out;
  for (const auto& c : comps) {
    Prepared p;
    p.llt.compute(c.covariance);
    if (p.llt.info() != Eigen::Success) throw Error(ErrorCode::EmNonConvergence, "covariance lost positive definiteness");
    double log_det = 2.0 * p.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    p.log_norm = -0.5 * (3.0 * kLog2Pi + log_det);
    out.push_back(std::move(p));
  }
  return out;
}

/// Log responsibilities (n x K) and total log-likelihood.
inline double e_step(const std::vector<Eigen::Vector3d>& pts, const std::vector<GmmComponent>& comps,
                     Eigen::MatrixXd& log_resp) {
  auto prep = prepare(comps);
  const std::size_t n = pts.size(), k = comps.size();
  log_resp.resize(Eigen::Index(n), Eigen::Index(k));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      Eigen::Vector3d z = prep[j].llt.matrixL().solve(pts[i] - comps[j].mean);
      double v = std::log(comps[j].weight) + prep[j].log_norm - 0.5 * z.squaredNorm();
      log_resp(Eigen::Index(i), Eigen::Index(j)) = v;
      best = std::max(best, v);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(log_resp(Eigen::Index(i), Eigen::Index(j)) - best);
    double lse = best + std::log(sum);
    total += lse;
    log_resp.row(Eigen::Index(i)).array() -= lse;
  }
  return total;
}

inline double penalty(const std::vector<GmmComponent>& comps, double ridge) {
  double p = 0.0;
  // Cholesky solve rather than a cofactor inverse; near-singular covariances
  // are routine here and the cofactor form loses about 1e-6 relative.
  for (const auto& c : comps) p += c.covariance.llt().solve(Eigen::Matrix3d::Identity()).trace();
  return 0.5 * ridge * p;
}

/// M-step from responsibilities. The covariance update (S + ridge*I) / N_k
/// is the exact maximizer of the penalized objective, so EM stays monotone.
inline std::vector<GmmComponent> m_step(const std::vector<Eigen::Vector3d>& pts, const Eigen::MatrixXd& resp,
                                        double ridge) {
  const std::size_t n = pts.size();
  const Eigen::Index k = resp.cols();
  std::vector<GmmComponent> out(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    double nk = resp.col(j).sum() + 10.0 * std::numeric_limits<double>::epsilon();
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) mean += resp(Eigen::Index(i), j) * pts[i];
    mean /= nk;
    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector3d d = pts[i] - mean;
      s += resp(Eigen::Index(i), j) * d * d.transpose();
    }
    auto& c = out[std::size_t(j)];
    c.weight = nk / (double(n) + 10.0 * std::numeric_limits<double>::epsilon() * double(k));
    c.mean = mean;
    c.covariance = (s + ridge * Eigen::Matrix3d::Identity()) / nk;
  }
  return out;
}

/// k-means++ seeding followed by one hard assignment pass.
inline Eigen::MatrixXd seed_responsibilities(const std::vector<Eigen::Vector3d>& pts, int k, std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  std::vector<Eigen::Vector3d> centers;
  centers.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (int(centers.size()) < k) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (pts[i] - c).squaredNorm());
      d2[i] = best;
    }
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> dist(d2.begin(), d2.end());
      pick = dist(rng);
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.push_back(pts[pick]);
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(Eigen::Index(n), k);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      double d = (pts[i] - centers[std::size_t(j)]).squaredNorm();
      if (d < best_d) best_d = d, best = j;
    }
    resp(Eigen::Index(i), best) = 1.0;
  }
  return resp;
}

inline GmmFit run_em(const std::vector<Eigen::Vector3d>& pts, Eigen::MatrixXd resp, const GmmConfig& cfg) {
  GmmFit fit;
  const double n = double(pts.size());
  fit.components = m_step(pts, resp, cfg.ridge);
  Eigen::MatrixXd log_resp;
  double ll = e_step(pts, fit.components, log_resp);
  double obj = ll - penalty(fit.components, cfg.ridge);
  fit.objective_trace.push_back(obj);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    auto comps = m_step(pts, log_resp.array().exp().matrix(), cfg.ridge);
    Eigen::MatrixXd next_log_resp;
    double next_ll = e_step(pts, comps, next_log_resp);
    double next_obj = next_ll - penalty(comps, cfg.ridge);
    fit.objective_trace.push_back(next_obj);
    fit.iterations = it;
    fit.components = std::move(comps);
    log_resp = std::move(next_log_resp);
    double gain = next_obj - obj;
    ll = next_ll;
    obj = next_obj;
    if (std::abs(gain) / n <= cfg.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.log_likelihood = ll;
  fit.penalized_log_likelihood = obj;
  fit.bic = bic(ll, int(fit.components.size()), pts.size());
  return fit;
}

/// Best of `restarts` seeded EM runs for a fixed K.
inline GmmFit fit_fixed_k(const std::vector<Eigen::Vector3d>& pts, int k, const GmmConfig& cfg) {
  GmmFit best;
  bool any_converged = false;
  for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
    std::mt19937_64 rng(cfg.seed + std::uint64_t(k) * 1000u + std::uint64_t(r));
    GmmFit fit = run_em(pts, seed_responsibilities(pts, k, rng), cfg);
    if (!fit.converged) continue;
    any_converged = true;
    if (fit.log_likelihood > best.log_likelihood) best = std::move(fit);
  }
  if (!any_converged) {
    throw Error(ErrorCode::EmNonConvergence,
                "EM did not converge within " + std::to_string(cfg.max_iterations) + " iterations for K=" +
                    std::to_string(k));
  }
  return best;
}

}  // namespace gmm

struct GmmSelection {
  GmmFit fit;
  std::map<int, double> bic_by_k;
};

inline std::vector<double> responsibilities(const std::vector<GmmComponent>& comps, const Eigen::Vector3d& x) {
  Eigen::MatrixXd log_resp;
  gmm::e_step({x}, comps, log_resp);
  std::vector<double> out;
  for (Eigen::Index j = 0; j < log_resp.cols(); ++j) out.push_back(std::exp(log_resp(0, j)));
  return out;
}

/// Fits K = k_min..k_max and keeps the lowest BIC (ties go to smaller K).
/// Components are reordered by weight descending, then mean lexicographic.
inline GmmSelection fit_gmm(const std::vector<Eigen::Vector3d>& points, const GmmConfig& cfg = {}) {
  if (cfg.k_min < 1 || cfg.k_max < cfg.k_min) throw Error(ErrorCode::ConfigError, "invalid GMM k range");
  if (points.size() < 2 * std::size_t(cfg.k_max)) {
    throw Error(ErrorCode::TooFewSamples, "GMM with k_max=" + std::to_string(cfg.k_max) + " needs at least " +
                                              std::to_string(2 * cfg.k_max) + " points, got " +
                                              std::to_string(points.size()));
  }
  GmmSelection sel;
  for (int k = cfg.k_min; k <= cfg.k_max; ++k) {
    GmmFit fit = gmm::fit_fixed_k(points, k, cfg);
    sel.bic_by_k[k] = fit.bic;
    if (fit.bic < sel.fit.bic) sel.fit = std::move(fit);
  }
  auto& comps = sel.fit.components;
  std::stable_sort(comps.begin(), comps.end(), [](const GmmComponent& a, const GmmComponent& b) {
    if (std::abs(a.weight - b.weight) > 1e-9) return a.weight > b.weight;
    return std::lexicographical_compare(a.mean.data(), a.mean.data() + 3, b.mean.data(), b.mean.data() + 3);
  });
  return sel;
}

inline int assign(const std::vector<GmmComponent>& comps, const Eigen::Vector3d& x) {
  auto r = responsibilities(comps, x);
  return int(std::max_element(r.begin(), r.end()) - r.begin());
}

enum class ClusterLabel { Valid, Invalid, Undecided };
enum class RegistrationVerdict { Accepted, RegistrationRejected };

constexpr std::string_view to_string(ClusterLabel l) {
  switch (l) {
    case ClusterLabel::Valid: return "valid";
    case ClusterLabel::Invalid: return "invalid";
    case ClusterLabel::Undecided: return "undecided";
  }
  return "?";
}
constexpr std::string_view to_string(RegistrationVerdict v) {
  return v == RegistrationVerdict::Accepted ? "Accepted" : "RegistrationRejected";
}

struct ClusterModel {
  PcaModel pca;
  std::vector<GmmComponent> gmm;
  std::map<int, double> bic_by_k;
  double log_likelihood = 0.0;
  std::map<std::string, int> assignments;
  std::map<std::string, Eigen::Vector3d> projected;
  std::map<int, ClusterLabel> cluster_labels;

  int n_clusters() const { return int(gmm.size()); }
  std::vector<std::string> members(int cluster) const {
    std::vector<std::string> out;
    for (const auto& [id, c] : assignments)
      if (c == cluster) out.push_back(id);
    return out;
  }
  /// FNV-1a over the assignment table; ties decisions files to one fit.
  std::string fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::string_view s) {
      for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ull;
    };
    for (const auto& [id, c] : assignments) {
      mix(id);
      mix(":" + std::to_string(c) + ";");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

/// Full QC fit. With fewer than 4 transforms there is nothing to cluster and
/// every scan lands in cluster 0. k_max is clamped to n/2.
inline ClusterModel fit_cluster_model(const std::vector<TransformFeature>& features, GmmConfig cfg = {}) {
  ClusterModel model;
  if (features.empty()) return model;
  if (features.size() < 4) {
    GmmComponent only;
    for (const auto& f : features) model.assignments[f.scan_id] = 0;
    for (const auto& f : features) model.projected[f.scan_id] = Eigen::Vector3d::Zero();
    model.gmm.push_back(only);
    model.cluster_labels[0] = ClusterLabel::Undecided;
    return model;
  }
  auto pca = fit_pca(features);
  model.pca = pca.model;
  cfg.k_max = std::min<int>(cfg.k_max, int(features.size() / 2));
  cfg.k_min = std::min(cfg.k_min, cfg.k_max);
  auto sel = fit_gmm(pca.projected, cfg);
  model.gmm = sel.fit.components;
  model.bic_by_k = sel.bic_by_k;
  model.log_likelihood = sel.fit.log_likelihood;
  for (std::size_t i = 0; i < features.size(); ++i) {
    model.assignments[features[i].scan_id] = assign(model.gmm, pca.projected[i]);
    model.projected[features[i].scan_id] = pca.projected[i];
  }
  for (int c = 0; c < model.n_clusters(); ++c) model.cluster_labels[c] = ClusterLabel::Undecided;
  return model;
}

inline std::map<std::string, RegistrationVerdict> apply_decisions(const ClusterModel& model,
                                                                  const std::map<int, ClusterLabel>& decisions) {
  std::map<std::string, RegistrationVerdict> out;
  std::vector<int> undecided;
  for (int c = 0; c < model.n_clusters(); ++c) {
    auto it = decisions.find(c);
    if (it == decisions.end() || it->second == ClusterLabel::Undecided) undecided.push_back(c);
  }
  if (!undecided.empty()) {
    std::string list;
    for (int c : undecided) list += (list.empty() ? "" : ", ") + std::to_string(c);
    throw Error(ErrorCode::UndecidedCluster, "clusters without a decision: " + list);
  }
  for (const auto& [id, c] : model.assignments) {
    out[id] = decisions.at(c) == ClusterLabel::Valid ? RegistrationVerdict::Accepted
                                                     : RegistrationVerdict::RegistrationRejected;
  }
  return out;
}

// ---- persistence ----

namespace detail {

inline void put_numbers(std::string& out, const double* v, int n) {
  char buf[40];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", v[i]);
    out += buf;
  }
}

template <typename Derived>
void read_numbers(std::istringstream& in, Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!(in >> m.derived().data()[i])) throw Error(ErrorCode::CorruptManifest, "QC model: truncated numbers");
  }
}

}  // namespace detail

/// Plain-text dump of the model for audit and for reloading between runs.
inline std::string model_to_text(const ClusterModel& m) {
  std::string out = "ctprep-qc-model 1\nfingerprint " + m.fingerprint() + "\n";
  out += "pca_mean";
  detail::put_numbers(out, m.pca.mean.data(), 9);
  out += "\n";
  for (int k = 0; k < 3; ++k) {
    Vector9 row = m.pca.components.row(k).transpose();
    out += "pca_component " + std::to_string(k);
    detail::put_numbers(out, row.data(), 9);
    out += "\n";
  }
  out += "explained_variance_ratio";
  detail::put_numbers(out, m.pca.explained_variance_ratio.data(), 3);
  out += "\nzero_variance " + std::string(m.pca.zero_variance ? "1" : "0") + "\n";
  out += "log_likelihood";
  detail::put_numbers(out, &m.log_likelihood, 1);
  out += "\n";
  for (const auto& [k, b] : m.bic_by_k) {
    out += "bic " + std::to_string(k);
    detail::put_numbers(out, &b, 1);
    out += "\n";
  }
  for (int c = 0; c < m.n_clusters(); ++c) {
    const auto& g = m.gmm[std::size_t(c)];
    out += "component " + std::to_string(c) + " weight";
    detail::put_numbers(out, &g.weight, 1);
    out += " mean";
    detail::put_numbers(out, g.mean.data(), 3);
    out += " covariance";
    detail::put_numbers(out, g.covariance.data(), 9);
    out += "\n";
  }
  for (const auto& [id, c] : m.assignments) {
    const auto& p = m.projected.at(id);
    out += "assignment " + id + " " + std::to_string(c);
    detail::put_numbers(out, p.data(), 3);
    out += "\n";
  }
  return out;
}

inline ClusterModel model_from_text(const std::string& text) {
  ClusterModel m;
  std::istringstream lines(text);
  std::string line;
  bool header = false;
  while (std::getline(lines, line)) {
    std::istringstream in(line);
    std::string key;
    if (!(in >> key)) continue;
    if (key == "ctprep-qc-model") {
      header = true;
    } else if (key == "fingerprint") {
    } else if (key == "pca_mean") {
      detail::read_numbers(in, m.pca.mean);
    } else if (key == "pca_component") {
      int k = -1;
      in >> k;
      if (k < 0 || k > 2) throw Error(ErrorCode::CorruptManifest, "QC model: bad component index");
      Vector9 row;
      detail::read_numbers(in, row);
      m.pca.components.row(k) = row.transpose();
    } else if (key == "explained_variance_ratio") {
      for (auto& v : m.pca.explained_variance_ratio) in >> v;
    } else if (key == "zero_variance") {
      int z = 0;
      in >> z;
      m.pca.zero_variance = z != 0;
    } else if (key == "log_likelihood") {
      in >> m.log_likelihood;
    } else if (key == "bic") {
      int k = 0;
      double b = 0;
      in >> k >> b;
      m.bic_by_k[k] = b;
    } else if (key == "component") {
      int c = -1;
      std::string word;
      GmmComponent g;
      in >> c >> word >> g.weight >> word;
      detail::read_numbers(in, g.mean);
      in >> word;
      detail::read_numbers(in, g.covariance);
      if (c != m.n_clusters()) throw Error(ErrorCode::CorruptManifest, "QC model: components out of order");
      m.gmm.push_back(g);
    } else if (key == "assignment") {
      std::string id;
      int c = -1;
      Eigen::Vector3d p;
      in >> id >> c;
      detail::read_numbers(in, p);
      m.assignments[id] = c;
      m.projected[id] = p;
    } else {
      throw Error(ErrorCode::CorruptManifest, "QC model: unknown key '" + key + "'");
    }
  }
  if (!header) throw Error(ErrorCode::CorruptManifest, "QC model: missing header");
  for (const auto& [id, c] : m.assignments) {
    if (c < 0 || c >= m.n_clusters()) throw Error(ErrorCode::CorruptManifest, "QC model: assignment out of range");
  }
  for (int c = 0; c < m.n_clusters(); ++c) m.cluster_labels[c] = ClusterLabel::Undecided;
  return m;
}

/// Blank decisions file listing every cluster as undecided.
inline std::string decisions_template(const ClusterModel& m) {
  std::string out = "# model " + m.fingerprint() + "\n";
  out += "# one line per cluster: <cluster_index> valid|invalid\n";
  for (int c = 0; c < m.n_clusters(); ++c) {
    out += "# cluster " + std::to_string(c) + ": " + std::to_string(m.members(c).size()) + " scans, see qc/cluster_" +
           std::to_string(c) + ".png\n";
    out += std::to_string(c) + " undecided\n";
  }
  return out;
}

/// Parses `cluster_index valid|invalid|undecided` lines. A `# model <fp>`
/// line naming a different fit makes the whole file stale (all undecided).
inline std::map<int, ClusterLabel> parse_decisions(const std::string& text, const std::string& expected_fingerprint = {}) {
  std::map<int, ClusterLabel> out;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::istringstream in(line);
    std::string first;
    if (!(in >> first)) continue;
    if (first[0] == '#') {
      std::string word, fp;
      if (first == "#" && (in >> word >> fp) && word == "model" && !expected_fingerprint.empty() &&
          fp != expected_fingerprint) {
        return {};
      }
      continue;
    }
    std::string label;
    in >> label;
    for (auto& ch : label) ch = char(std::tolower(static_cast<unsigned char>(ch)));
    int index = 0;
    try {
      std::size_t used = 0;
      index = std::stoi(first, &used);
      if (used != first.size() || index < 0) throw std::invalid_argument("index");
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "decisions line " + std::to_string(line_no) + ": bad cluster index");
    }
    if (label == "valid") out[index] = ClusterLabel::Valid;
    else if (label == "invalid") out[index] = ClusterLabel::Invalid;
    else if (label == "undecided") out[index] = ClusterLabel::Undecided;
    else throw Error(ErrorCode::ConfigError, "decisions line " + std::to_string(line_no) + ": expected valid|invalid");
  }
  return out;
}

// ---- montage ----

struct MontageTile {
  const Volume* ct = nullptr;
  const Volume* template_on_ct = nullptr;
};

inline constexpr std::size_t kMontageTile = 160;
inline constexpr std::size_t kMontageMaxTiles = 9;

/// Middle axial slice of each CT (window 0..100 HU, grey) with the resampled
/// template blended in red; up to nine tiles in a 3-column grid.
inline Image8 render_montage(const std::vector<MontageTile>& tiles) {
  const std::size_t n = std::min(tiles.size(), kMontageMaxTiles);
  const std::size_t cols = std::max<std::size_t>(1, std::min<std::size_t>(3, n));
  const std::size_t rows = std::max<std::size_t>(1, (n + cols - 1) / cols);
  Image8 img(cols * kMontageTile, rows * kMontageTile, 3, 0);
  for (std::size_t t = 0; t < n; ++t) {
    const Volume& ct = *tiles[t].ct;
    const Volume* tmpl = tiles[t].template_on_ct;
    const std::size_t s = ct.n_slices() / 2;
    float tmax = 0.0f;
    if (tmpl) {
      for (float v : tmpl->data.slice(s)) tmax = std::max(tmax, v);
    }
    const double scale = double(std::max(ct.height(), ct.width())) / double(kMontageTile);
    const std::size_t oy = (t / cols) * kMontageTile, ox = (t % cols) * kMontageTile;
    for (std::size_t y = 0; y < kMontageTile; ++y) {
      for (std::size_t x = 0; x < kMontageTile; ++x) {
        auto r = std::size_t(double(y) * scale), c = std::size_t(double(x) * scale);
        if (r >= ct.height() || c >= ct.width()) continue;
        double gray = std::clamp(double(ct(s, r, c)) / 100.0, 0.0, 1.0) * 255.0;
        double red = tmpl && tmax > 0 ? std::clamp(double((*tmpl)(s, r, c)) / double(tmax), 0.0, 1.0) : 0.0;
        std::uint8_t* px = img.at(oy + y, ox + x);
        px[0] = std::uint8_t(std::lround(gray * (1 - 0.6 * red) + 255.0 * 0.6 * red));
        px[1] = std::uint8_t(std::lround(gray * (1 - 0.6 * red)));
        px[2] = std::uint8_t(std::lround(gray * (1 - 0.6 * red)));
      }
    }
  }
  return img;
}

/// Up to nine members of `cluster`, closest to the component mean first.
inline std::vector<std::string> representatives(const ClusterModel& m, int cluster) {
  auto ids = m.members(cluster);
  const Eigen::Vector3d mean = m.gmm.at(std::size_t(cluster)).mean;
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return (m.projected.at(a) - mean).squaredNorm() < (m.projected.at(b) - mean).squaredNorm();
  });
  if (ids.size() > kMontageMaxTiles) ids.resize(kMontageMaxTiles);
  return ids;
}

}  // namespace ctprep
