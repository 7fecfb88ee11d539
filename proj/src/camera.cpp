#include "rigcalib/camera.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "rigcalib/errors.hpp"

namespace rigcalib {

BoardGeometry make_board(int rows, int cols, double spacing, const Pose& board_to_global) {
  if (rows < 2 || cols < 2 || spacing <= 0.0) {
    throw InvalidArgumentError("make_board: need >= 2x2 corners and positive spacing");
  }
  BoardGeometry b;
  b.rows = rows;
  b.cols = cols;
  b.spacing = spacing;
  b.board_to_global = board_to_global;
  b.corner_positions.reserve(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows * cols; ++i) {
    b.corner_positions.push_back(board_to_global.rot * b.corner_in_board(i) +
                                 board_to_global.trans);
  }
  return b;
}

Vec2 distort_normalized(const Vec2& xy, const Eigen::Vector4d& dist) {
  const double k1 = dist[0], k2 = dist[1], p1 = dist[2], p2 = dist[3];
  const double x = xy.x(), y = xy.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
  return Vec2(x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
              y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y);
}

Vec2 undistort_normalized(const Vec2& xy_d, const Eigen::Vector4d& dist) {
  Vec2 xy = xy_d;
  for (int i = 0; i < 5; ++i) {
    const Vec2 delta = distort_normalized(xy, dist) - xy;
    xy = xy_d - delta;
  }
  return xy;
}

std::optional<Vec2> project_camera_point(const Vec3& x_c, const CameraIntrinsics& intr) {
  if (x_c.z() <= kMinProjectionDepth) return std::nullopt;
  const Vec2 xy(x_c.x() / x_c.z(), x_c.y() / x_c.z());
  const Vec2 d = distort_normalized(xy, intr.distortion);
  return Vec2(intr.fx * d.x() + intr.cx, intr.fy * d.y() + intr.cy);
}

std::optional<Vec2> project_corner(const Pose& t_gi, const Pose& t_ic, const Vec3& x_g,
                                   const CameraIntrinsics& intr) {
  const Pose t_gc = pose_compose(t_gi, t_ic);
  const Vec3 x_c = pose_inverse(t_gc).rot * x_g + pose_inverse(t_gc).trans;
  return project_camera_point(x_c, intr);
}

namespace {

// d(pixel)/d(camera point), including the distortion model.
Eigen::Matrix<double, 2, 3> pixel_jacobian(const Vec3& x_c, const CameraIntrinsics& intr) {
  const double z = x_c.z();
  const double x = x_c.x() / z, y = x_c.y() / z;
  Eigen::Matrix<double, 2, 3> d_norm;
  d_norm << 1.0 / z, 0.0, -x / z, 0.0, 1.0 / z, -y / z;

  const double k1 = intr.distortion[0], k2 = intr.distortion[1];
  const double p1 = intr.distortion[2], p2 = intr.distortion[3];
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
  const double dradial = k1 + 2.0 * k2 * r2;
  Eigen::Matrix2d d_dist;
  d_dist(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x;
  d_dist(0, 1) = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y;
  d_dist(1, 0) = d_dist(0, 1);
  d_dist(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x;

  Eigen::Matrix2d focal = Eigen::Matrix2d::Zero();
  focal(0, 0) = intr.fx;
  focal(1, 1) = intr.fy;
  return focal * d_dist * d_norm;
}

}  // namespace

LinearizedMeasurement camera_imu_residual(const CornerObservationSet& obs,
                                          const FilterState& state,
                                          const BoardGeometry& board,
                                          const CameraIntrinsics& intr, double sigma_px) {
  const Pose& t_gi = state.imu_pose;
  const Pose& t_ic = state.extr_cam;
  const Mat3 r_ic_t = t_ic.rot.matrix().transpose();

  struct Row {
    Vec2 residual;
    Vec3 x_i;  // corner in IMU frame
    Vec3 x_c;  // corner in camera frame
  };
  std::vector<Row> rows;
  rows.reserve(obs.corners.size());
  for (const CornerObservation& c : obs.corners) {
    if (c.board_index < 0 ||
        c.board_index >= static_cast<int>(board.corner_positions.size())) {
      continue;
    }
    const Vec3 x_g = board.corner_positions[c.board_index];
    const Vec3 x_i = pose_inverse(t_gi).rot * x_g + pose_inverse(t_gi).trans;
    const Vec3 x_c = r_ic_t * (x_i - t_ic.trans);
    const std::optional<Vec2> predicted = project_camera_point(x_c, intr);
    if (!predicted) continue;  // behind the camera: dropped from the stack
    rows.push_back({c.pixel - *predicted, x_i, x_c});
  }
  if (static_cast<int>(rows.size()) < kMinCornersForUpdate) {
    throw InsufficientObservationsError("camera_imu_residual: fewer than 6 usable corners");
  }

  LinearizedMeasurement meas;
  const int m = static_cast<int>(rows.size());
  meas.residual.resize(2 * m);
  meas.jacobian = Eigen::MatrixXd::Zero(2 * m, err::kDim);
  for (int k = 0; k < m; ++k) {
    const Row& row = rows[k];
    meas.residual.segment<2>(2 * k) = row.residual;
    const Eigen::Matrix<double, 2, 3> duv = pixel_jacobian(row.x_c, intr);
    // residual = z - h: negate the prediction derivatives
    meas.jacobian.block<2, 3>(2 * k, err::kImuRot) = -duv * r_ic_t * skew(row.x_i);
    meas.jacobian.block<2, 3>(2 * k, err::kImuPos) = duv * r_ic_t;
    meas.jacobian.block<2, 3>(2 * k, err::kCamRot) = -duv * skew(row.x_c);
    meas.jacobian.block<2, 3>(2 * k, err::kCamPos) = duv;
  }
  meas.noise_cov =
      sigma_px * sigma_px * Eigen::MatrixXd::Identity(2 * m, 2 * m);
  return meas;
}

PlaneObservation camera_plane_params(const Pose& board_pose_in_camera) {
  PlaneObservation p;
  p.source = PlaneSource::kCamera;
  Vec3 n = board_pose_in_camera.rot.matrix().col(2);
  double d = -n.dot(board_pose_in_camera.trans);
  canonicalize_plane(n, d);
  p.normal = n;
  p.offset = d;
  return p;
}

Pose board_pose_from_corners(const CornerObservationSet& obs, const BoardGeometry& board,
                             const CameraIntrinsics& intr) {
  const int n = static_cast<int>(obs.corners.size());
  if (n < 4) {
    throw InsufficientObservationsError("board_pose_from_corners: need >= 4 corners");
  }

  // Normalized undistorted image coordinates vs board-plane coordinates.
  std::vector<Vec2> img(n), brd(n);
  for (int k = 0; k < n; ++k) {
    const CornerObservation& c = obs.corners[k];
    const Vec2 xy((c.pixel.x() - intr.cx) / intr.fx, (c.pixel.y() - intr.cy) / intr.fy);
    img[k] = undistort_normalized(xy, intr.distortion);
    brd[k] = board.corner_in_board(c.board_index).head<2>();
  }

  // Hartley-normalized DLT homography board -> normalized image.
  const auto normalizer = [](const std::vector<Vec2>& pts) {
    Vec2 mean = Vec2::Zero();
    for (const Vec2& p : pts) mean += p;
    mean /= pts.size();
    double scale = 0.0;
    for (const Vec2& p : pts) scale += (p - mean).norm();
    scale = std::sqrt(2.0) * pts.size() / std::max(scale, 1e-12);
    Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
    t(0, 0) = t(1, 1) = scale;
    t(0, 2) = -scale * mean.x();
    t(1, 2) = -scale * mean.y();
    return t;
  };
  const Eigen::Matrix3d t_img = normalizer(img);
  const Eigen::Matrix3d t_brd = normalizer(brd);

  Eigen::MatrixXd a(2 * n, 9);
  for (int k = 0; k < n; ++k) {
    const Vec3 p = t_brd * Vec3(brd[k].x(), brd[k].y(), 1.0);
    const Vec3 q = t_img * Vec3(img[k].x(), img[k].y(), 1.0);
    a.row(2 * k) << -p.x(), -p.y(), -1.0, 0.0, 0.0, 0.0, q.x() * p.x(), q.x() * p.y(), q.x();
    a.row(2 * k + 1) << 0.0, 0.0, 0.0, -p.x(), -p.y(), -1.0, q.y() * p.x(), q.y() * p.y(),
        q.y();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::Matrix<double, 9, 1> hv = svd.matrixV().col(8);
  Eigen::Matrix3d h;
  h << hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8];
  h = t_img.inverse() * h * t_brd;

  // Decompose into rotation columns and translation.
  const double lambda = 0.5 * (h.col(0).norm() + h.col(1).norm());
  Eigen::Matrix3d rt = h / lambda;
  if (rt.col(2).z() < 0.0) rt = -rt;  // board in front of the camera
  Mat3 r_approx;
  r_approx.col(0) = rt.col(0);
  r_approx.col(1) = rt.col(1);
  r_approx.col(2) = rt.col(0).cross(rt.col(1));
  const Eigen::JacobiSVD<Mat3> rsvd(r_approx, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = rsvd.matrixU() * rsvd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = rsvd.matrixU() * flip * rsvd.matrixV().transpose();
  }
  Pose pose(Rotation(r), rt.col(2));

  // Gauss-Newton on the full reprojection model.
  for (int iter = 0; iter < 15; ++iter) {
    Mat6 hess = Mat6::Zero();
    Vec6 grad = Vec6::Zero();
    double sq = 0.0;
    int used = 0;
    for (int k = 0; k < n; ++k) {
      const Vec3 x_b = board.corner_in_board(obs.corners[k].board_index);
      const Vec3 x_c = pose.rot * x_b + pose.trans;
      const std::optional<Vec2> predicted = project_camera_point(x_c, intr);
      if (!predicted) continue;
      const Vec2 res = obs.corners[k].pixel - *predicted;
      const Eigen::Matrix<double, 2, 3> duv = pixel_jacobian(x_c, intr);
      Eigen::Matrix<double, 2, 6> jac;  // twist order [rho; phi], right perturbation
      jac.leftCols<3>() = duv * pose.rot.matrix();
      jac.rightCols<3>() = -duv * pose.rot.matrix() * skew(x_b);
      hess += jac.transpose() * jac;
      grad += jac.transpose() * res;
      sq += res.squaredNorm();
      ++used;
    }
    if (used < 4) {
      throw InsufficientObservationsError("board_pose_from_corners: degenerate view");
    }
    const Vec6 step = hess.ldlt().solve(grad);
    pose = pose_boxplus(pose, Twist(step.head<3>(), step.tail<3>()));
    if (step.norm() < 1e-12) break;
  }
  return pose;
}

}  // namespace rigcalib
