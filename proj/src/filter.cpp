#include "rigcalib/filter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "rigcalib/errors.hpp"

namespace rigcalib {

namespace {

// chi2 inverse CDF at 0.997 for 1..12 degrees of freedom.
constexpr double kChi2_997[12] = {
    8.8074683936, 11.6182859806, 13.9314226655, 16.0143263149,
    17.9576122674, 19.8046523588, 21.5801453935, 23.2997345003,
    24.9740684528, 26.6107851238, 28.2155843855, 29.7928543593};

Eigen::LDLT<Eigen::MatrixXd> checked_innovation(const Eigen::MatrixXd& s,
                                                double condition_limit) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin <= 0.0 || lmax / lmin > condition_limit) {
    throw DegenerateMeasurementError("innovation covariance ill conditioned");
  }
  return s.ldlt();
}

// Gated Joseph-form step on an arbitrary-dimension error covariance. On
// acceptance fills delta, updates p in place, and (when requested) stores
// I - K H so callers can carry the same linear map onto auxiliary terms.
UpdateResult kalman_step(Eigen::MatrixXd& p, const LinearizedMeasurement& meas,
                         const UpdateOptions& opts, Eigen::VectorXd& delta,
                         Eigen::MatrixXd* ikh_out = nullptr) {
  const Eigen::MatrixXd& h = meas.jacobian;
  const Eigen::VectorXd& r = meas.residual;
  const int m = static_cast<int>(r.size());
  if (h.rows() != m || meas.noise_cov.rows() != m || meas.noise_cov.cols() != m ||
      h.cols() != p.cols()) {
    throw InvalidArgumentError("ekf_update: inconsistent measurement dimensions");
  }

  Eigen::MatrixXd s = h * p * h.transpose() + meas.noise_cov;
  const Eigen::MatrixXd ssym = 0.5 * (s + s.transpose());
  const Eigen::LDLT<Eigen::MatrixXd> sldlt = checked_innovation(ssym, opts.condition_limit);

  UpdateResult result;
  result.mahalanobis = r.dot(sldlt.solve(r));
  if (opts.gate && m <= 12 && result.mahalanobis > chi_square_997_quantile(m)) {
    result.accepted = false;
    return result;
  }

  const Eigen::MatrixXd k =
      p * h.transpose() * sldlt.solve(Eigen::MatrixXd::Identity(m, m));
  delta = k * r;
  Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(p.rows(), p.cols()) - k * h;
  p = ikh * p * ikh.transpose() + k * meas.noise_cov * k.transpose();
  symmetrize(p);
  if (ikh_out != nullptr) *ikh_out = std::move(ikh);
  result.accepted = true;
  return result;
}

}  // namespace

double chi_square_997_quantile(int dim) {
  if (dim < 1 || dim > 12) {
    throw UnsupportedDimensionError("chi-square gate table covers 1..12 dof");
  }
  return kChi2_997[dim - 1];
}

bool chi_square_gate(const Eigen::VectorXd& r, const Eigen::MatrixXd& s) {
  const double q = chi_square_997_quantile(static_cast<int>(r.size()));
  const Eigen::LLT<Eigen::MatrixXd> llt = s.llt();
  if (llt.info() != Eigen::Success) {
    throw DegenerateMeasurementError("chi_square_gate: S not positive definite");
  }
  return r.dot(llt.solve(r)) <= q;
}

void symmetrize(Eigen::MatrixXd& m) { m = (0.5 * (m + m.transpose())).eval(); }
void symmetrize(CovMatrix& m) { m = (0.5 * (m + m.transpose())).eval(); }

FilterState inject_error(const FilterState& state, const ErrorVector& delta) {
  if (!delta.allFinite()) throw InvalidArgumentError("inject_error: non-finite delta");
  FilterState out = state;
  out.imu_pose = pose_boxplus(
      state.imu_pose,
      Twist(delta.segment<3>(err::kImuPos), delta.segment<3>(err::kImuRot)));
  out.velocity += delta.segment<3>(err::kVel);
  out.bias_gyro += delta.segment<3>(err::kBg);
  out.bias_accel += delta.segment<3>(err::kBa);
  out.extr_lidar = pose_boxplus(
      state.extr_lidar,
      Twist(delta.segment<3>(err::kLidarPos), delta.segment<3>(err::kLidarRot)));
  out.extr_cam = pose_boxplus(
      state.extr_cam,
      Twist(delta.segment<3>(err::kCamPos), delta.segment<3>(err::kCamRot)));
  return out;
}

ErrorVector state_error(const FilterState& state, const FilterState& ref) {
  ErrorVector e;
  const Twist d_imu = pose_boxminus(state.imu_pose, ref.imu_pose);
  const Twist d_lidar = pose_boxminus(state.extr_lidar, ref.extr_lidar);
  const Twist d_cam = pose_boxminus(state.extr_cam, ref.extr_cam);
  e.segment<3>(err::kImuRot) = d_imu.phi;
  e.segment<3>(err::kImuPos) = d_imu.rho;
  e.segment<3>(err::kVel) = state.velocity - ref.velocity;
  e.segment<3>(err::kBg) = state.bias_gyro - ref.bias_gyro;
  e.segment<3>(err::kBa) = state.bias_accel - ref.bias_accel;
  e.segment<3>(err::kLidarRot) = d_lidar.phi;
  e.segment<3>(err::kLidarPos) = d_lidar.rho;
  e.segment<3>(err::kCamRot) = d_cam.phi;
  e.segment<3>(err::kCamPos) = d_cam.rho;
  return e;
}

UpdateResult ekf_update(FilterState& state, CovMatrix& cov,
                        const LinearizedMeasurement& meas, const UpdateOptions& opts) {
  Eigen::MatrixXd p = cov;
  Eigen::VectorXd delta;
  const UpdateResult result = kalman_step(p, meas, opts, delta);
  if (result.accepted) {
    state = inject_error(state, delta);
    cov = p;
  }
  return result;
}

void EskfFilter::apply_propagation(
    const FilterState& new_state, const CovMatrix& new_cov,
    const Eigen::Matrix<double, err::kImuDim, err::kImuDim>& phi_imu) {
  state_ = new_state;
  cov_ = new_cov;
  for (HistoryEntry& e : history_) {
    e.cross.topRows<err::kImuDim>() =
        (phi_imu * e.cross.topRows<err::kImuDim>()).eval();
  }
}

UpdateResult EskfFilter::update(const LinearizedMeasurement& meas) {
  Eigen::MatrixXd p = cov_;
  Eigen::VectorXd delta;
  Eigen::MatrixXd ikh;
  const UpdateResult result = kalman_step(p, meas, opts_, delta, &ikh);
  if (!result.accepted) return result;
  state_ = inject_error(state_, delta);
  cov_ = p;
  for (HistoryEntry& e : history_) {
    e.cross = (ikh * e.cross).eval();
  }
  return result;
}

std::uint64_t EskfFilter::mark_history(double stamp) {
  HistoryEntry e;
  e.id = next_id_++;
  e.stamp = stamp;
  e.imu_pose = state_.imu_pose;
  e.self_cov = cov_.topLeftCorner<err::kCloneDim, err::kCloneDim>();
  e.cross = cov_.leftCols<err::kCloneDim>();
  for (const HistoryEntry& k : history_) {
    e.cross_older[k.id] = k.cross.topRows<err::kCloneDim>();
  }
  history_.push_back(std::move(e));
  return history_.back().id;
}

const EskfFilter::HistoryEntry* EskfFilter::find_entry(double stamp) const {
  for (const HistoryEntry& e : history_) {
    if (std::abs(e.stamp - stamp) < 1e-9) return &e;
  }
  return nullptr;
}

Mat6 EskfFilter::clone_cross(const HistoryEntry& a, const HistoryEntry& b) const {
  // E[dc_a dc_b^T]; the younger entry stores the snapshot against the older.
  if (a.id == b.id) return a.self_cov;
  if (a.id > b.id) return a.cross_older.at(b.id);
  return b.cross_older.at(a.id).transpose();
}

ClonePair EskfFilter::clone_states(double stamp_i, double stamp_j) const {
  const HistoryEntry* ei = find_entry(stamp_i);
  const HistoryEntry* ej = find_entry(stamp_j);
  if (ei == nullptr || ej == nullptr) {
    throw HistoryExpiredError("clone_states: stamp not in kept history");
  }
  ClonePair pair;
  pair.stamp_i = stamp_i;
  pair.stamp_j = stamp_j;
  pair.pose_i = ei->imu_pose;
  pair.pose_j = ej->imu_pose;
  pair.id_i = ei->id;
  pair.id_j = ej->id;

  constexpr int n = err::kDim;
  constexpr int c = err::kCloneDim;
  pair.aug_cov.resize(n + 2 * c, n + 2 * c);
  pair.aug_cov.topLeftCorner<n, n>() = cov_;
  pair.aug_cov.block<n, c>(0, n) = ei->cross;
  pair.aug_cov.block<n, c>(0, n + c) = ej->cross;
  pair.aug_cov.block<c, n>(n, 0) = ei->cross.transpose();
  pair.aug_cov.block<c, n>(n + c, 0) = ej->cross.transpose();
  pair.aug_cov.block<c, c>(n, n) = ei->self_cov;
  pair.aug_cov.block<c, c>(n + c, n + c) = ej->self_cov;
  const Mat6 xij = clone_cross(*ei, *ej);
  pair.aug_cov.block<c, c>(n, n + c) = xij;
  pair.aug_cov.block<c, c>(n + c, n) = xij.transpose();
  return pair;
}

UpdateResult EskfFilter::update_with_clones(const ClonePair& pair,
                                            const LinearizedMeasurement& meas) {
  constexpr int n = err::kDim;
  constexpr int c = err::kCloneDim;
  const int aug = n + 2 * c;
  if (meas.jacobian.cols() != aug) {
    throw InvalidArgumentError("update_with_clones: jacobian must have clone columns");
  }

  // Snapshot the cross blocks of the two clones against every bystander
  // before consuming them.
  const HistoryEntry* ei_ptr = nullptr;
  const HistoryEntry* ej_ptr = nullptr;
  for (const HistoryEntry& e : history_) {
    if (e.id == pair.id_i) ei_ptr = &e;
    if (e.id == pair.id_j) ej_ptr = &e;
  }
  std::map<std::uint64_t, std::pair<Mat6, Mat6>> bystander_cross;
  if (ei_ptr != nullptr && ej_ptr != nullptr) {
    for (const HistoryEntry& e : history_) {
      if (e.id == pair.id_i || e.id == pair.id_j) continue;
      bystander_cross[e.id] = {clone_cross(*ei_ptr, e), clone_cross(*ej_ptr, e)};
    }
  }
  const auto consume = [&] {
    history_.erase(std::remove_if(history_.begin(), history_.end(),
                                  [&](const HistoryEntry& e) {
                                    return e.id == pair.id_i || e.id == pair.id_j;
                                  }),
                   history_.end());
  };

  Eigen::MatrixXd p = pair.aug_cov;
  Eigen::VectorXd delta;
  Eigen::MatrixXd ikh;
  const UpdateResult result = kalman_step(p, meas, opts_, delta, &ikh);
  if (!result.accepted) {
    consume();
    return result;
  }

  state_ = inject_error(state_, delta.head<n>());
  cov_ = p.topLeftCorner<n, n>();

  // Bystander clones keep their correlation with the live state through the
  // same linear map, restricted to the live rows.
  const Eigen::MatrixXd ikh_live = ikh.topRows(n);
  for (HistoryEntry& e : history_) {
    if (e.id == pair.id_i || e.id == pair.id_j) continue;
    const auto it = bystander_cross.find(e.id);
    if (it == bystander_cross.end()) continue;
    Eigen::MatrixXd b(aug, c);
    b.topRows(n) = e.cross;
    b.middleRows(n, c) = it->second.first;
    b.bottomRows(c) = it->second.second;
    e.cross = ikh_live * b;
  }
  consume();
  return result;
}

void EskfFilter::prune_history(double now, double horizon) {
  history_.erase(std::remove_if(history_.begin(), history_.end(),
                                [&](const HistoryEntry& e) {
                                  return e.stamp < now - horizon;
                                }),
                 history_.end());
}

}  // namespace rigcalib
