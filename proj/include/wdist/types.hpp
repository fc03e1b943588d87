#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace wdist {

using Index = Eigen::Index;

template <class T>
using vector_type = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
using matrix_type = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Observations are stored one per row; row-major keeps a row contiguous so
// it can be handed to the per-row model evaluations without a copy.
template <class T>
using row_matrix_type = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using cref_vector_type = Eigen::Ref<const vector_type<T>>;

template <class T>
using cref_matrix_type = Eigen::Ref<const matrix_type<T>>;

/// Caller broke a documented precondition (dimension mismatch, bad size, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model evaluation left its domain or produced a non-finite value.
class EvaluationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Coordinator could not form an estimate from the summaries it received.
class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

/// Block parameter theta_k = (phi, lambda_k), stored flat with the common
/// part first.
template <class T>
class ParameterVector {
 public:
  ParameterVector() = default;

  ParameterVector(vector_type<T> flat, Index common_dim)
      : flat_(std::move(flat)), common_dim_(common_dim) {
    require(common_dim_ >= 1, "ParameterVector: common dimension must be >= 1");
    require(flat_.size() >= common_dim_, "ParameterVector: flat vector shorter than common part");
  }

  ParameterVector(const vector_type<T>& common, const vector_type<T>& block)
      : flat_(common.size() + block.size()), common_dim_(common.size()) {
    require(common_dim_ >= 1, "ParameterVector: common dimension must be >= 1");
    flat_ << common, block;
  }

  Index size() const { return flat_.size(); }
  Index common_dim() const { return common_dim_; }
  Index block_dim() const { return flat_.size() - common_dim_; }

  const vector_type<T>& flat() const { return flat_; }
  vector_type<T>& flat() { return flat_; }

  auto common() const { return flat_.head(common_dim_); }
  auto common() { return flat_.head(common_dim_); }
  auto block() const { return flat_.tail(block_dim()); }
  auto block() { return flat_.tail(block_dim()); }

 private:
  vector_type<T> flat_;
  Index common_dim_ = 0;
};

/// Compact parameter box Theta_k and the box Phi for the common part.
template <class T>
struct ParameterBox {
  vector_type<T> lower;
  vector_type<T> upper;
  vector_type<T> common_lower;
  vector_type<T> common_upper;

  static ParameterBox symmetric(Index dim, Index common_dim, T radius) {
    require(radius > T(0), "ParameterBox: radius must be positive");
    require(common_dim >= 1 && common_dim <= dim, "ParameterBox: bad common dimension");
    ParameterBox box;
    box.lower = vector_type<T>::Constant(dim, -radius);
    box.upper = vector_type<T>::Constant(dim, radius);
    box.common_lower = box.lower.head(common_dim);
    box.common_upper = box.upper.head(common_dim);
    return box;
  }

  static ParameterBox from_bounds(vector_type<T> lower, vector_type<T> upper, Index common_dim) {
    ParameterBox box;
    box.common_lower = lower.head(common_dim);
    box.common_upper = upper.head(common_dim);
    box.lower = std::move(lower);
    box.upper = std::move(upper);
    box.validate();
    return box;
  }

  Index dim() const { return lower.size(); }
  Index common_dim() const { return common_lower.size(); }

  void validate() const {
    require(lower.size() == upper.size(), "ParameterBox: bound sizes differ");
    require(common_lower.size() == common_upper.size(), "ParameterBox: common bound sizes differ");
    require(common_lower.size() >= 1 && common_lower.size() <= lower.size(),
            "ParameterBox: bad common dimension");
    require((lower.array() < upper.array()).all(), "ParameterBox: lower must be < upper");
    require((common_lower.array() < common_upper.array()).all(),
            "ParameterBox: common lower must be < common upper");
    require((common_lower.array() >= lower.head(common_dim()).array()).all() &&
                (common_upper.array() <= upper.head(common_dim()).array()).all(),
            "ParameterBox: common box must lie inside the projection of the full box");
  }

  template <class Derived>
  bool contains(const Eigen::MatrixBase<Derived>& theta) const {
    return theta.size() == lower.size() && (theta.array() >= lower.array()).all() &&
           (theta.array() <= upper.array()).all();
  }

  template <class Derived>
  bool contains_common(const Eigen::MatrixBase<Derived>& phi) const {
    return phi.size() == common_lower.size() && (phi.array() >= common_lower.array()).all() &&
           (phi.array() <= common_upper.array()).all();
  }

  template <class Derived>
  vector_type<T> clamp(const Eigen::MatrixBase<Derived>& theta) const {
    return theta.cwiseMax(lower).cwiseMin(upper);
  }
};

/// Observations X_{k,1..n_k} held by one worker.
template <class T>
struct DataBlock {
  std::int64_t id = 0;
  row_matrix_type<T> rows;

  Index n() const { return rows.rows(); }
  Index arity() const { return rows.cols(); }

  void validate() const {
    require(rows.rows() >= 1, "DataBlock: needs at least one row");
    require(rows.allFinite(), "DataBlock: rows must be finite");
  }
};

}  // namespace wdist
