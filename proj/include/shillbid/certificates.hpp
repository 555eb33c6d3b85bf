#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "shillbid/instance.hpp"
#include "shillbid/piecewise_cdf.hpp"

namespace shillbid {

struct IndexSpan {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
  std::size_t size() const { return last - first + 1; }
};

// G_m = {j 2^-m : 0 <= j <= 2^m}.
class DyadicGrid {
 public:
  explicit DyadicGrid(int level);
  int level() const { return level_; }
  double mesh() const { return mesh_; }
  std::size_t size() const { return size_; }
  double point(std::size_t j) const { return static_cast<double>(j) * mesh_; }
  // Throws DomainError when q is not a grid point.
  std::size_t index_of(double q) const;
  // Inclusive index range of grid points inside `iv`; nullopt when empty.
  std::optional<IndexSpan> span(const Interval& iv) const;

 private:
  int level_;
  double mesh_;
  std::size_t size_;
};

class RobustCertificate {
 public:
  explicit RobustCertificate(const DyadicGrid& grid);
  const DyadicGrid& grid() const { return grid_; }
  void update(double q, bool outcome);
  void update_index(std::size_t j, bool outcome);
  std::size_t count(std::size_t j) const { return count_[j]; }
  double mean(std::size_t j) const { return mean_[j]; }
  // (v - q) F(q) - (v - p) F(p); throws DomainError if either point is unvisited.
  double gap(double v, double q, double p) const;
  double gap_index(double v, std::size_t q, std::size_t p) const;
  // max_q sqrt(2 log_term / N(q)) over the span; +inf if some point is unvisited.
  double radius(IndexSpan span, double log_term) const;

 private:
  DyadicGrid grid_;
  std::vector<std::size_t> count_;
  std::vector<double> mean_;
};

double robust_log_term(double horizon, double delta);
double optimistic_log_term(double horizon, double delta, std::size_t candidates);
// r_hat + sqrt(log_term / (2 tau)) <= 2^-(m+1).
bool validate_certificate(double r_hat, std::size_t tau, int epoch, double log_term);

// 1 if won, else 1{o <= q} / F_S(q). Throws DomainError if F_S(q) <= 0.
double debiased_suffix_obs(bool won, double report, double q, double fs_q);

enum class MeasurementKind { kDirect, kSuffix };

struct MeasurementKey {
  MeasurementKind kind = MeasurementKind::kDirect;
  std::size_t value = 0;  // value-grid index, suffix rows only
  std::size_t lower = 0;  // grid index (lower point of the pair for suffix rows)
  bool operator<(const MeasurementKey& o) const {
    return std::tie(kind, value, lower) < std::tie(o.kind, o.value, o.lower);
  }
};

struct Measurement {
  MeasurementKey key;
  // Global grid indices with coefficients; one entry (1) for direct rows,
  // two entries (-(v - q_j), v - q_{j+1}) for suffix rows.
  std::vector<std::size_t> index;
  std::vector<double> coef;
  std::size_t count = 0;
  double response_sum = 0.0;
};

Measurement direct_measurement(std::size_t grid_index, bool won);

// One row per adjacent pair (q_j, q_{j+1}) of active points with q_j >= p.
// `y[i]` is Y(q) at active point i (ignored below p).
std::vector<Measurement> suffix_difference_rows(double v, std::size_t value_key,
                                                const DyadicGrid& grid, IndexSpan active,
                                                double bid, const std::vector<double>& y);

double candidate_weight(double gamma_bar, int epoch, double mesh, double c_suf);
// {2^-l : 0 <= l <= ceil(log2 T)}, largest first.
std::vector<double> dyadic_candidates(double horizon);
// Candidates with F_S(q) >= gbar on every active point and
// F_S(q_{j+1}) - F_S(q_j) <= c_val gbar mesh on every adjacent pair.
std::vector<double> admissible_candidates(const PiecewiseCdf& shill, const DyadicGrid& grid,
                                          const std::vector<IndexSpan>& active,
                                          const std::vector<double>& candidates, double c_val);

class OptimisticAccumulator {
 public:
  explicit OptimisticAccumulator(const DyadicGrid& grid);
  const DyadicGrid& grid() const { return grid_; }
  void add(const Measurement& m);
  bool empty() const { return rows_.empty(); }
  std::size_t dimension() const { return global_.size(); }
  std::optional<std::size_t> local(std::size_t global_index) const;
  std::size_t global(std::size_t local_index) const { return global_[local_index]; }
  const std::map<MeasurementKey, Measurement>& rows() const { return rows_; }
  const Eigen::MatrixXd& gram_direct() const { return g_dir_; }
  const Eigen::MatrixXd& gram_suffix() const { return g_suf_; }
  const Eigen::VectorXd& moment_direct() const { return z_dir_; }
  const Eigen::VectorXd& moment_suffix() const { return z_suf_; }

 private:
  std::size_t ensure(std::size_t global_index);
  DyadicGrid grid_;
  std::map<MeasurementKey, Measurement> rows_;
  std::map<std::size_t, std::size_t> local_;
  std::vector<std::size_t> global_;
  Eigen::MatrixXd g_dir_, g_suf_;
  Eigen::VectorXd z_dir_, z_suf_;
};

struct PseudoInverse {
  Eigen::MatrixXd pinv;
  Eigen::MatrixXd projector;  // G G^+
  double cutoff = 0.0;
  int rank = 0;
};

// Symmetric eigendecomposition; eigenvalues <= 64 k sigma_max eps are dropped.
PseudoInverse pseudo_inverse(const Eigen::MatrixXd& gram);

inline constexpr double kRangeTolerance = 1e-8;
bool range_membership(const Eigen::MatrixXd& gram, const Eigen::VectorXd& g);
bool range_membership(const PseudoInverse& pi, const Eigen::VectorXd& g);

struct WlsSolution {
  double omega = 0.0;
  Eigen::MatrixXd gram;
  Eigen::VectorXd estimate;  // F_hat over the accumulator's local indices
  PseudoInverse pi;
  // Column s is G^+ phi_s for the s-th stored row (map order).
  Eigen::MatrixXd influence;
  std::vector<bool> suffix_row;
};

// G = G_dir + w G_suf, z = z_dir + w z_suf, F_hat = G^+ z.
WlsSolution solve_wls(const OptimisticAccumulator& acc, double omega);

// (v - q_i) F_i - (v - q_j) F_j.
double optimistic_gap(const Eigen::VectorXd& estimate, double v, double qi, std::size_t i,
                      double qj, std::size_t j);
// Same on global grid indices; nullopt unless g_{v,i,j} is in range(G).
std::optional<double> optimistic_gap(const OptimisticAccumulator& acc, const WlsSolution& sol,
                                     double v, std::size_t qi, std::size_t qj);

struct RadiusReport {
  double q = 0.0;
  double b = 0.0;
  double radius = 0.0;
};

// Q = max_pairs g' G^+ g, B = max_pairs max_rows alpha |g' G^+ phi| R,
// radius = sqrt(2 L Q) + (2/3) L B. All +inf if some pair leaves range(G).
RadiusReport optimistic_radius(const OptimisticAccumulator& acc, const WlsSolution& sol,
                               double gamma_bar, double v, IndexSpan active, double log_term);

}  // namespace shillbid
