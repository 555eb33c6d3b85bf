#include "shillbid/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "shillbid/errors.hpp"

namespace shillbid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSnap = 1e-9;

}  // namespace

DyadicGrid::DyadicGrid(int level) : level_(level) {
  if (level < 0 || level > 40) throw DomainError("dyadic level outside [0, 40]");
  mesh_ = std::ldexp(1.0, -level);
  size_ = (std::size_t{1} << level) + 1;
}

std::size_t DyadicGrid::index_of(double q) const {
  const double x = q / mesh_;
  const double j = std::round(x);
  if (!(j >= 0.0 && j < static_cast<double>(size_)) || std::abs(x - j) > kSnap) {
    throw DomainError("bid " + std::to_string(q) + " is not on the level-" +
                      std::to_string(level_) + " grid");
  }
  return static_cast<std::size_t>(j);
}

std::optional<IndexSpan> DyadicGrid::span(const Interval& iv) const {
  const double lo = std::max(0.0, std::ceil(iv.lo / mesh_ - kSnap));
  const double hi = std::min(static_cast<double>(size_ - 1), std::floor(iv.hi / mesh_ + kSnap));
  if (lo > hi) return std::nullopt;
  return IndexSpan{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

RobustCertificate::RobustCertificate(const DyadicGrid& grid)
    : grid_(grid), count_(grid.size(), 0), mean_(grid.size(), 0.0) {}

void RobustCertificate::update(double q, bool outcome) { update_index(grid_.index_of(q), outcome); }

void RobustCertificate::update_index(std::size_t j, bool outcome) {
  if (j >= count_.size()) throw DomainError("robust update outside the grid");
  ++count_[j];
  mean_[j] += ((outcome ? 1.0 : 0.0) - mean_[j]) / static_cast<double>(count_[j]);
}

double RobustCertificate::gap_index(double v, std::size_t q, std::size_t p) const {
  if (count_.at(q) == 0 || count_.at(p) == 0) throw DomainError("robust gap at an unvisited point");
  return (v - grid_.point(q)) * mean_[q] - (v - grid_.point(p)) * mean_[p];
}

double RobustCertificate::gap(double v, double q, double p) const {
  return gap_index(v, grid_.index_of(q), grid_.index_of(p));
}

double RobustCertificate::radius(IndexSpan span, double log_term) const {
  std::size_t least = std::numeric_limits<std::size_t>::max();
  for (std::size_t j = span.first; j <= span.last; ++j) least = std::min(least, count_[j]);
  if (least == 0) return kInf;
  return std::sqrt(2.0 * log_term / static_cast<double>(least));
}

double robust_log_term(double horizon, double delta) { return std::log(2.0 * horizon / delta); }

double optimistic_log_term(double horizon, double delta, std::size_t candidates) {
  return std::log(2.0 * horizon * static_cast<double>(candidates) / delta);
}

bool validate_certificate(double r_hat, std::size_t tau, int epoch, double log_term) {
  if (tau == 0) return false;
  return r_hat + std::sqrt(log_term / (2.0 * static_cast<double>(tau))) <=
         std::ldexp(1.0, -(epoch + 1));
}

double debiased_suffix_obs(bool won, double report, double q, double fs_q) {
  if (won) return 1.0;
  if (!(fs_q > 0.0)) throw DomainError("debiasing needs F_S(q) > 0");
  return report <= q ? 1.0 / fs_q : 0.0;
}

Measurement direct_measurement(std::size_t grid_index, bool won) {
  Measurement m;
  m.key = {MeasurementKind::kDirect, 0, grid_index};
  m.index = {grid_index};
  m.coef = {1.0};
  m.count = 1;
  m.response_sum = won ? 1.0 : 0.0;
  return m;
}

std::vector<Measurement> suffix_difference_rows(double v, std::size_t value_key,
                                                const DyadicGrid& grid, IndexSpan active,
                                                double bid, const std::vector<double>& y) {
  if (y.size() != active.size()) throw DomainError("suffix observations do not match the active grid");
  std::vector<Measurement> out;
  for (std::size_t j = active.first; j < active.last; ++j) {
    const double qj = grid.point(j);
    if (qj < bid - kSnap * grid.mesh()) continue;
    const double qn = grid.point(j + 1);
    const std::size_t i = j - active.first;
    Measurement m;
    m.key = {MeasurementKind::kSuffix, value_key, j};
    m.index = {j, j + 1};
    m.coef = {-(v - qj), v - qn};
    m.count = 1;
    m.response_sum = (v - qn) * y[i + 1] - (v - qj) * y[i];
    out.push_back(std::move(m));
  }
  return out;
}

double candidate_weight(double gamma_bar, int epoch, double mesh, double c_suf) {
  return gamma_bar / (c_suf * (std::ldexp(1.0, -epoch) + mesh));
}

std::vector<double> dyadic_candidates(double horizon) {
  if (!(horizon >= 1.0)) throw DomainError("candidate set needs T >= 1");
  const int top = static_cast<int>(std::ceil(std::log2(horizon) - 1e-12));
  std::vector<double> out;
  for (int l = 0; l <= std::max(top, 0); ++l) out.push_back(std::ldexp(1.0, -l));
  return out;
}

std::vector<double> admissible_candidates(const PiecewiseCdf& shill, const DyadicGrid& grid,
                                          const std::vector<IndexSpan>& active,
                                          const std::vector<double>& candidates, double c_val) {
  // Only the weakest point and the steepest increment matter.
  double low = 1.0;
  double steep = 0.0;
  for (const IndexSpan& s : active) {
    double prev = shill.eval(grid.point(s.first));
    low = std::min(low, prev);
    for (std::size_t j = s.first + 1; j <= s.last; ++j) {
      const double cur = shill.eval(grid.point(j));
      low = std::min(low, cur);
      steep = std::max(steep, cur - prev);
      prev = cur;
    }
  }
  std::vector<double> out;
  for (double g : candidates) {
    if (low >= g * (1.0 - 1e-12) && steep <= c_val * g * grid.mesh() + 1e-12) out.push_back(g);
  }
  return out;
}

OptimisticAccumulator::OptimisticAccumulator(const DyadicGrid& grid) : grid_(grid) {}

std::optional<std::size_t> OptimisticAccumulator::local(std::size_t global_index) const {
  auto it = local_.find(global_index);
  if (it == local_.end()) return std::nullopt;
  return it->second;
}

std::size_t OptimisticAccumulator::ensure(std::size_t global_index) {
  auto [it, inserted] = local_.try_emplace(global_index, global_.size());
  if (inserted) {
    global_.push_back(global_index);
    const Eigen::Index n = static_cast<Eigen::Index>(global_.size());
    g_dir_.conservativeResize(n, n);
    g_suf_.conservativeResize(n, n);
    z_dir_.conservativeResize(n);
    z_suf_.conservativeResize(n);
    g_dir_.row(n - 1).setZero();
    g_dir_.col(n - 1).setZero();
    g_suf_.row(n - 1).setZero();
    g_suf_.col(n - 1).setZero();
    z_dir_(n - 1) = 0.0;
    z_suf_(n - 1) = 0.0;
  }
  return it->second;
}

void OptimisticAccumulator::add(const Measurement& m) {
  if (m.index.size() != m.coef.size() || m.index.empty()) {
    throw DomainError("malformed measurement row");
  }
  std::vector<std::size_t> loc;
  for (std::size_t g : m.index) {
    if (g >= grid_.size()) throw DomainError("measurement outside the grid");
    loc.push_back(ensure(g));
  }
  auto [it, inserted] = rows_.try_emplace(m.key, m);
  if (!inserted) {
    it->second.count += m.count;
    it->second.response_sum += m.response_sum;
  }
  const bool suffix = m.key.kind == MeasurementKind::kSuffix;
  Eigen::MatrixXd& g = suffix ? g_suf_ : g_dir_;
  Eigen::VectorXd& z = suffix ? z_suf_ : z_dir_;
  const double n = static_cast<double>(m.count);
  for (std::size_t a = 0; a < loc.size(); ++a) {
    z(loc[a]) += m.coef[a] * m.response_sum;
    for (std::size_t b = 0; b < loc.size(); ++b) g(loc[a], loc[b]) += n * m.coef[a] * m.coef[b];
  }
}

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& gram) {
  PseudoInverse out;
  const Eigen::Index k = gram.rows();
  out.pinv = Eigen::MatrixXd::Zero(k, k);
  out.projector = Eigen::MatrixXd::Zero(k, k);
  if (k == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const Eigen::MatrixXd& u = eig.eigenvectors();
  const double sigma = lambda.cwiseAbs().maxCoeff();
  out.cutoff = 64.0 * static_cast<double>(k) * sigma * std::numeric_limits<double>::epsilon();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (lambda(i) <= out.cutoff) continue;
    out.pinv.noalias() += u.col(i) * u.col(i).transpose() / lambda(i);
    out.projector.noalias() += u.col(i) * u.col(i).transpose();
    ++out.rank;
  }
  return out;
}

bool range_membership(const PseudoInverse& pi, const Eigen::VectorXd& g) {
  const double norm = g.norm();
  if (norm == 0.0) return true;
  return (g - pi.projector * g).norm() <= kRangeTolerance * norm;
}

bool range_membership(const Eigen::MatrixXd& gram, const Eigen::VectorXd& g) {
  return range_membership(pseudo_inverse(gram), g);
}

WlsSolution solve_wls(const OptimisticAccumulator& acc, double omega) {
  WlsSolution sol;
  sol.omega = omega;
  sol.gram = acc.gram_direct() + omega * acc.gram_suffix();
  const Eigen::VectorXd z = acc.moment_direct() + omega * acc.moment_suffix();
  sol.pi = pseudo_inverse(sol.gram);
  sol.estimate = sol.pi.pinv * z;

  const Eigen::Index n = static_cast<Eigen::Index>(acc.dimension());
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(acc.rows().size()));
  Eigen::Index s = 0;
  for (const auto& [key, row] : acc.rows()) {
    for (std::size_t a = 0; a < row.index.size(); ++a) {
      phi(static_cast<Eigen::Index>(*acc.local(row.index[a])), s) = row.coef[a];
    }
    sol.suffix_row.push_back(key.kind == MeasurementKind::kSuffix);
    ++s;
  }
  sol.influence = sol.pi.pinv * phi;
  return sol;
}

double optimistic_gap(const Eigen::VectorXd& estimate, double v, double qi, std::size_t i,
                      double qj, std::size_t j) {
  return (v - qi) * estimate(static_cast<Eigen::Index>(i)) -
         (v - qj) * estimate(static_cast<Eigen::Index>(j));
}

namespace {

// g_{v,i,j} on local coordinates: two (local index, coefficient) pairs.
// Returns false when a nonzero coefficient falls on an unmeasured point.
struct Direction {
  Eigen::Index idx[2] = {0, 0};
  double coef[2] = {0.0, 0.0};
  int nnz = 0;
};

bool make_direction(const OptimisticAccumulator& acc, double v, std::size_t qi, std::size_t qj,
                    Direction& d) {
  const double ci = v - acc.grid().point(qi);
  const double cj = -(v - acc.grid().point(qj));
  d.nnz = 0;
  for (auto [g, c] : {std::pair{qi, ci}, std::pair{qj, cj}}) {
    if (c == 0.0) continue;
    auto loc = acc.local(g);
    if (!loc) return false;
    d.idx[d.nnz] = static_cast<Eigen::Index>(*loc);
    d.coef[d.nnz] = c;
    ++d.nnz;
  }
  return true;
}

bool in_range(const WlsSolution& sol, const Direction& d) {
  if (d.nnz == 0) return true;
  const Eigen::Index n = sol.gram.rows();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (int a = 0; a < d.nnz; ++a) g(d.idx[a]) += d.coef[a];
  return range_membership(sol.pi, g);
}

}  // namespace

std::optional<double> optimistic_gap(const OptimisticAccumulator& acc, const WlsSolution& sol,
                                     double v, std::size_t qi, std::size_t qj) {
  if (qi == qj) return 0.0;
  Direction d;
  if (!make_direction(acc, v, qi, qj, d) || !in_range(sol, d)) return std::nullopt;
  double gap = 0.0;
  for (int a = 0; a < d.nnz; ++a) gap += d.coef[a] * sol.estimate(d.idx[a]);
  return gap;
}

RadiusReport optimistic_radius(const OptimisticAccumulator& acc, const WlsSolution& sol,
                               double gamma_bar, double v, IndexSpan active, double log_term) {
  const RadiusReport unbounded{kInf, kInf, kInf};
  const Eigen::Index rows = sol.influence.cols();
  Eigen::VectorXd scale(rows);
  for (Eigen::Index s = 0; s < rows; ++s) {
    scale(s) = sol.suffix_row[static_cast<std::size_t>(s)] ? sol.omega * 4.0 / gamma_bar : 1.0;
  }
  RadiusReport out;
  Direction d;
  for (std::size_t i = active.first; i <= active.last; ++i) {
    for (std::size_t j = i + 1; j <= active.last; ++j) {
      if (!make_direction(acc, v, i, j, d) || !in_range(sol, d)) return unbounded;
      double quad = 0.0;
      for (int a = 0; a < d.nnz; ++a) {
        for (int b = 0; b < d.nnz; ++b) quad += d.coef[a] * d.coef[b] * sol.pi.pinv(d.idx[a], d.idx[b]);
      }
      out.q = std::max(out.q, quad);
      if (rows == 0 || d.nnz == 0) continue;
      Eigen::VectorXd resp = d.coef[0] * sol.influence.row(d.idx[0]).transpose();
      if (d.nnz == 2) resp += d.coef[1] * sol.influence.row(d.idx[1]).transpose();
      out.b = std::max(out.b, resp.cwiseAbs().cwiseProduct(scale).maxCoeff());
    }
  }
  out.radius = std::sqrt(2.0 * log_term * out.q) + 2.0 / 3.0 * log_term * out.b;
  return out;
}

}  // namespace shillbid
