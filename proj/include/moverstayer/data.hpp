#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "moverstayer/error.hpp"

namespace moverstayer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Covariate histories: row t holds the covariates observed at time t.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One observed panel record.
struct Subject {
  std::string id;
  int y = 0;      // last observation time
  int delta = 0;  // 1: moved during (y, y+1]; 0: censored at y
  Vector x;       // time-fixed covariates, intercept not stored
  RowMatrix z;    // (y+1) x q time-varying covariates

  void validate(Eigen::Index d, Eigen::Index q) const {
    auto fail = [&](const std::string& msg) {
      throw DataError(DataError::Code::invalid_subject, msg, 0, id);
    };
    if (y < 0) fail("negative observation time");
    if (delta != 0 && delta != 1) fail("delta must be 0 or 1");
    if (x.size() != d)
      fail("expected " + std::to_string(d) + " fixed covariates, got " +
           std::to_string(x.size()));
    if (z.rows() != y + 1)
      fail("covariate history must have y+1 = " + std::to_string(y + 1) +
           " rows, got " + std::to_string(z.rows()));
    if (z.cols() != q)
      fail("expected " + std::to_string(q) +
           " time-varying covariates, got " + std::to_string(z.cols()));
    if (!x.allFinite() || !z.allFinite()) fail("non-finite covariate");
  }
};

class PanelDataset {
 public:
  PanelDataset() = default;

  PanelDataset(std::vector<Subject> subjects, Eigen::Index d, Eigen::Index q)
      : subjects_(std::move(subjects)), d_(d), q_(q) {
    for (const auto& s : subjects_) s.validate(d_, q_);
  }

  const std::vector<Subject>& subjects() const { return subjects_; }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  std::size_t size() const { return subjects_.size(); }
  bool empty() const { return subjects_.empty(); }
  Eigen::Index fixed_dim() const { return d_; }
  Eigen::Index varying_dim() const { return q_; }

  // K: the largest y+1 over subjects.
  int max_time() const {
    int k = 0;
    for (const auto& s : subjects_) k = std::max(k, s.y + 1);
    return k;
  }

  // Dataset made of the given subject indices (duplicates allowed).
  PanelDataset subset(const std::vector<std::size_t>& index) const {
    std::vector<Subject> out;
    out.reserve(index.size());
    for (auto i : index) out.push_back(subjects_.at(i));
    PanelDataset ds;
    ds.subjects_ = std::move(out);
    ds.d_ = d_;
    ds.q_ = q_;
    return ds;
  }

 private:
  std::vector<Subject> subjects_;
  Eigen::Index d_ = 0;
  Eigen::Index q_ = 0;
};

// Appends deterministic time covariates t, t^2, ..., t^degree to a
// covariate row observed at time t.
inline Vector time_augmented_row(const Eigen::Ref<const Vector>& z_t, int t,
                                 int degree) {
  Vector out(z_t.size() + degree);
  out.head(z_t.size()) = z_t;
  double power = 1.0;
  for (int k = 0; k < degree; ++k) {
    power *= t;
    out[z_t.size() + k] = power;
  }
  return out;
}

inline RowMatrix append_time_polynomial(const RowMatrix& z, int degree) {
  RowMatrix out(z.rows(), z.cols() + degree);
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    out.row(t) =
        time_augmented_row(z.row(t).transpose(), static_cast<int>(t), degree)
            .transpose();
  return out;
}

// Time-varying intercept as a polynomial in t: the raw powers t..t^degree
// become extra time-varying covariates.
inline PanelDataset append_time_polynomial(const PanelDataset& data,
                                           int degree) {
  if (degree < 0) throw std::invalid_argument("negative polynomial degree");
  if (degree == 0) return data;
  std::vector<Subject> out = data.subjects();
  for (auto& s : out) s.z = append_time_polynomial(s.z, degree);
  return PanelDataset(std::move(out), data.fixed_dim(),
                      data.varying_dim() + degree);
}

}  // namespace moverstayer
