// Composite-manifold error-state EKF: state container, covariance
// bookkeeping, generic gated Kalman update (Joseph form), error injection,
// and the pose-clone history needed by cross-time measurements.

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "rigcalib/geometry.hpp"

namespace rigcalib {

// Error-state layout, one 3-dim block each:
// [imu-rot, imu-pos, vel, b_g, b_a, lidar-rot, lidar-pos, cam-rot, cam-pos]
namespace err {
constexpr int kImuRot = 0;
constexpr int kImuPos = 3;
constexpr int kVel = 6;
constexpr int kBg = 9;
constexpr int kBa = 12;
constexpr int kLidarRot = 15;
constexpr int kLidarPos = 18;
constexpr int kCamRot = 21;
constexpr int kCamPos = 24;
constexpr int kDim = 27;
constexpr int kImuDim = 15;  // dims carrying process noise / IMU dynamics
constexpr int kCloneDim = 6;
}  // namespace err

using CovMatrix = Eigen::Matrix<double, err::kDim, err::kDim>;
using ErrorVector = Eigen::Matrix<double, err::kDim, 1>;

struct FilterState {
  Pose imu_pose;              // T^G_I
  Vec3 velocity = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
  Pose extr_lidar;            // T^I_L
  Pose extr_cam;              // T^I_C
  Pose anchor_pose;           // T^G_I1, frozen at the first accepted scan
  bool anchor_set = false;
  double stamp = 0.0;
};

struct LinearizedMeasurement {
  Eigen::VectorXd residual;   // m
  Eigen::MatrixXd jacobian;   // m x kDim (or m x (kDim + 12) for clone updates)
  Eigen::MatrixXd noise_cov;  // m x m, symmetric positive definite
};

struct UpdateOptions {
  bool gate = true;
  double condition_limit = 1e12;
};

struct UpdateResult {
  bool accepted = false;
  double mahalanobis = 0.0;
};

// 99.7% chi-square quantile for dimensions 1..12; throws
// UnsupportedDimensionError above that.
double chi_square_997_quantile(int dim);
bool chi_square_gate(const Eigen::VectorXd& r, const Eigen::MatrixXd& s);

FilterState inject_error(const FilterState& state, const ErrorVector& delta);
// Per-block boxminus against a reference; inverse of inject_error to first
// order. Used by transition-matrix checks and NEES evaluation.
ErrorVector state_error(const FilterState& state, const FilterState& ref);

void symmetrize(Eigen::MatrixXd& m);
void symmetrize(CovMatrix& m);

// One gated Joseph-form EKF update on the 27-dim error state.
UpdateResult ekf_update(FilterState& state, CovMatrix& cov,
                        const LinearizedMeasurement& meas,
                        const UpdateOptions& opts = {});

// Covariance blocks tying a pair of past IMU-pose clones to the live state.
struct ClonePair {
  double stamp_i = 0.0;
  double stamp_j = 0.0;
  Pose pose_i;  // T^G_Ii
  Pose pose_j;  // T^G_Ij
  // Augmented covariance, order [live(27), clone_i(6), clone_j(6)];
  // clone dims are [rot, pos].
  Eigen::MatrixXd aug_cov;
  std::uint64_t id_i = 0;
  std::uint64_t id_j = 0;
};

// Filter owning the live state, covariance and the clone history. Single
// owner; all calls are serialized by the caller.
class EskfFilter {
 public:
  EskfFilter() = default;
  EskfFilter(const FilterState& s, const CovMatrix& p) : state_(s), cov_(p) {}

  FilterState& state() { return state_; }
  const FilterState& state() const { return state_; }
  CovMatrix& cov() { return cov_; }
  const CovMatrix& cov() const { return cov_; }

  UpdateOptions& update_options() { return opts_; }

  // Installs a propagation step result: new nominal state/covariance plus the
  // 15x15 IMU-block transition, which also advances the clone cross terms.
  void apply_propagation(const FilterState& new_state, const CovMatrix& new_cov,
                         const Eigen::Matrix<double, err::kImuDim, err::kImuDim>& phi_imu);

  UpdateResult update(const LinearizedMeasurement& meas);

  // Records the current IMU pose as a clonable point (unit cross-correlation
  // with the live pose error). Returns the entry id.
  std::uint64_t mark_history(double stamp);
  // Exact copies of the IMU pose error blocks at the two stamps with their
  // full cross-covariance. Throws HistoryExpiredError when a stamp is not in
  // the kept history.
  ClonePair clone_states(double stamp_i, double stamp_j) const;
  // Gated update whose jacobian has 27 live columns plus 6 per clone; the
  // clones are marginalized away afterwards and their entries consumed.
  UpdateResult update_with_clones(const ClonePair& pair, const LinearizedMeasurement& meas);

  void prune_history(double now, double horizon = 2.0);
  std::size_t history_size() const { return history_.size(); }
  bool has_history(double stamp) const { return find_entry(stamp) != nullptr; }

 private:
  struct HistoryEntry {
    std::uint64_t id = 0;
    double stamp = 0.0;
    Pose imu_pose;
    Mat6 self_cov = Mat6::Zero();
    // E[dx_live dclone^T], kept current through propagation and updates.
    Eigen::Matrix<double, err::kDim, err::kCloneDim> cross;
    // E[dclone_this dclone_older^T] snapshots, keyed by the older entry id.
    std::map<std::uint64_t, Mat6> cross_older;
  };

  const HistoryEntry* find_entry(double stamp) const;
  Mat6 clone_cross(const HistoryEntry& a, const HistoryEntry& b) const;  // E[dc_a dc_b^T]

  FilterState state_;
  CovMatrix cov_ = CovMatrix::Zero();
  UpdateOptions opts_;
  std::vector<HistoryEntry> history_;
  std::uint64_t next_id_ = 1;
};

}  // namespace rigcalib
