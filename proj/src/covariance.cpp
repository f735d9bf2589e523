#include "svecchia/covariance.hpp"

#include "svecchia/diagnostics.hpp"

#include <cmath>
#include <sstream>

namespace svecchia {

void Dataset::validate() const {
  if (inputs.rows() < 1 || inputs.cols() < 1) throw Error("dataset must have n >= 1 and d >= 1");
  if (responses.size() != inputs.rows()) {
    std::ostringstream os;
    os << "dataset has " << inputs.rows() << " input rows but " << responses.size()
       << " responses";
    throw Error(os.str());
  }
  for (Index i = 0; i < inputs.rows(); ++i) {
    for (Index l = 0; l < inputs.cols(); ++l) {
      if (!std::isfinite(inputs(i, l))) {
        std::ostringstream os;
        os << "non-finite input at row " << i << ", column " << l;
        throw Error(os.str());
      }
    }
    if (!std::isfinite(responses[i])) {
      std::ostringstream os;
      os << "non-finite response at row " << i;
      throw Error(os.str());
    }
  }
}

std::vector<Index> CovarianceConfig::active_dims() const {
  std::vector<Index> out;
  for (Index l = 0; l < dim(); ++l)
    if (!eliminated(l)) out.push_back(l);
  return out;
}

void CovarianceConfig::validate() const {
  if (!(smoothness > 0)) throw Error("smoothness must be positive");
  if (!(variance > 0) || !std::isfinite(variance)) throw Error("variance must be positive and finite");
  if (!(nugget >= 0) || !std::isfinite(nugget)) throw Error("nugget must be non-negative and finite");
  if (ranges.empty()) throw Error("covariance needs at least one range");
  for (std::size_t l = 0; l < ranges.size(); ++l) {
    if (!(ranges[l] > 0)) {
      std::ostringstream os;
      os << "range " << l << " must be positive or +inf, got " << ranges[l];
      throw Error(os.str());
    }
  }
}

bool is_supported_smoothness(double nu) {
  return nu == 0.5 || nu == 1.5 || nu == 2.5 || nu == 3.5 || nu == 4.5;
}

namespace {

[[noreturn]] void unsupported(double nu) {
  std::ostringstream os;
  os << "smoothness " << nu << " is not supported; use one of 0.5, 1.5, 2.5, 3.5, 4.5";
  throw Error(os.str());
}

// Polynomial factor of the half-integer Matern, p(q) with M(q) = p(q) exp(-q).
double matern_poly(double q, int half_order) {
  switch (half_order) {
    case 0: return 1.0;
    case 1: return 1.0 + q;
    case 2: return 1.0 + q + q * q / 3.0;
    case 3: return 1.0 + q + q * q * (2.0 / 5.0) + q * q * q / 15.0;
    case 4: return 1.0 + q + q * q * (3.0 / 7.0) + q * q * q * (2.0 / 21.0) + q * q * q * q / 105.0;
  }
  return 0.0;
}

int half_order(double nu) {
  if (!is_supported_smoothness(nu)) unsupported(nu);
  return static_cast<int>(nu - 0.5);
}

}  // namespace

double scaled_distance(std::span<const double> xi, std::span<const double> xj,
                       std::span<const double> ranges) {
  if (xi.size() != xj.size() || xi.size() != ranges.size())
    throw Error("scaled_distance: dimension mismatch between points and ranges");
  double s = 0.0;
  for (std::size_t l = 0; l < xi.size(); ++l) {
    if (std::isnan(xi[l]) || std::isnan(xj[l])) throw Error("scaled_distance: NaN coordinate");
    if (ranges[l] == kInfiniteRange) continue;
    const double z = (xi[l] - xj[l]) / ranges[l];
    s += z * z;
  }
  return std::sqrt(s);
}

double matern_correlation(double q, double nu) {
  const int p = half_order(nu);
  return matern_poly(q, p) * std::exp(-q);
}

double matern_derivative_over_q(double q, double nu) {
  // For half-integer smoothness, M'_nu(q) / q = -M_{nu-1}(q) / (2 (nu - 1)).
  const int p = half_order(nu);
  if (p == 0) return -std::exp(-q) / q;
  return -matern_poly(q, p - 1) * std::exp(-q) / (2.0 * (nu - 1.0));
}

Points scale_inputs(const Points& X, std::span<const double> ranges) {
  if (static_cast<Index>(ranges.size()) != X.cols())
    throw Error("scale_inputs: number of ranges does not match input dimension");
  Index active = 0;
  for (double r : ranges) active += (r != kInfiniteRange);
  Points Z(X.rows(), active);
  Index c = 0;
  for (Index l = 0; l < X.cols(); ++l) {
    if (ranges[l] == kInfiniteRange) continue;
    Z.col(c++) = X.col(l) / ranges[l];
  }
  return Z;
}

// ---------------------------------------------------------------------------

BlockKernel::BlockKernel(const CovarianceConfig& config)
    : smoothness_(config.smoothness), variance_(config.variance), nugget_(config.nugget) {
  half_order(smoothness_);
}

BlockKernel::BlockKernel(const CovarianceConfig& config, const ParameterVector& params)
    : BlockKernel(config) {
  if (params.dim() != config.dim()) throw Error("parameter vector does not match covariance dimension");
  std::vector<Index> column_of(config.dim(), -1);
  Index c = 0;
  for (Index l = 0; l < config.dim(); ++l)
    if (!config.eliminated(l)) column_of[l] = c++;
  for (Index k : params.free_indices()) {
    if (k == ParameterVector::variance_index()) {
      free_.push_back({Kind::variance, -1});
    } else if (k == params.nugget_index()) {
      free_.push_back({Kind::nugget, -1});
    } else {
      const Index l = k - 1;
      if (column_of[l] < 0) throw Error("free range parameter on an eliminated dimension");
      free_.push_back({Kind::range, column_of[l]});
    }
  }
}

void BlockKernel::covariance(const Points& Z, std::span<const Index> rows, Matrix& K,
                             bool include_nugget) const {
  const Index b = static_cast<Index>(rows.size());
  const Index d = Z.cols();
  K.resize(b, b);
  const int p = half_order(smoothness_);
  for (Index j = 0; j < b; ++j) {
    const double* zj = Z.data() + rows[j] * d;
    K(j, j) = variance_ + (include_nugget ? nugget_ : 0.0);
    for (Index i = j + 1; i < b; ++i) {
      const double* zi = Z.data() + rows[i] * d;
      double s = 0.0;
      for (Index l = 0; l < d; ++l) {
        const double t = zi[l] - zj[l];
        s += t * t;
      }
      const double q = std::sqrt(s);
      const double v = variance_ * matern_poly(q, p) * std::exp(-q);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
}

void BlockKernel::cross_covariance(const Points& Za, std::span<const Index> rows_a,
                                   const Points& Zb, std::span<const Index> rows_b,
                                   Matrix& K) const {
  const Index d = Za.cols();
  const int p = half_order(smoothness_);
  K.resize(static_cast<Index>(rows_a.size()), static_cast<Index>(rows_b.size()));
  for (Index j = 0; j < K.cols(); ++j) {
    const double* zj = Zb.data() + rows_b[j] * d;
    for (Index i = 0; i < K.rows(); ++i) {
      const double* zi = Za.data() + rows_a[i] * d;
      double s = 0.0;
      for (Index l = 0; l < d; ++l) {
        const double t = zi[l] - zj[l];
        s += t * t;
      }
      const double q = std::sqrt(s);
      K(i, j) = variance_ * matern_poly(q, p) * std::exp(-q);
    }
  }
}

void BlockKernel::gradients(const Points& Z, std::span<const Index> rows,
                            std::vector<Matrix>& dK) const {
  const Index b = static_cast<Index>(rows.size());
  const Index d = Z.cols();
  const Index nf = num_free();
  dK.resize(nf);
  for (auto& M : dK) M.resize(b, b);
  const int p = half_order(smoothness_);
  for (Index j = 0; j < b; ++j) {
    const double* zj = Z.data() + rows[j] * d;
    for (Index i = j; i < b; ++i) {
      const double* zi = Z.data() + rows[i] * d;
      double s = 0.0;
      for (Index l = 0; l < d; ++l) {
        const double t = zi[l] - zj[l];
        s += t * t;
      }
      const double q = std::sqrt(s);
      const double e = std::exp(-q);
      const double corr = matern_poly(q, p) * e;
      double dq = 0.0;  // variance * M'(q)/q
      if (q > 0.0) {
        dq = p == 0 ? -variance_ * e / q
                    : -variance_ * matern_poly(q, p - 1) * e / (2.0 * (smoothness_ - 1.0));
      }
      for (Index k = 0; k < nf; ++k) {
        double v = 0.0;
        switch (free_[k].kind) {
          case Kind::variance: v = variance_ * corr; break;
          case Kind::nugget: v = (i == j) ? nugget_ : 0.0; break;
          case Kind::range: {
            const double t = zi[free_[k].active_column] - zj[free_[k].active_column];
            v = -dq * t * t;
            break;
          }
        }
        dK[k](i, j) = v;
        dK[k](j, i) = v;
      }
    }
  }
}

Matrix cov_matrix(const Points& X, const CovarianceConfig& config, bool include_nugget) {
  config.validate();
  if (X.rows() < 1) throw Error("cov_matrix needs at least one point");
  const Points Z = scale_inputs(X, config.ranges);
  std::vector<Index> rows(X.rows());
  for (Index i = 0; i < X.rows(); ++i) rows[i] = i;
  Matrix K;
  BlockKernel(config).covariance(Z, rows, K, include_nugget);
  if (!(include_nugget && config.nugget > 0)) {
    for (Index j = 0; j < X.rows(); ++j) {
      for (Index i = j + 1; i < X.rows(); ++i) {
        if ((X.row(i).array() == X.row(j).array()).all()) {
          std::ostringstream os;
          os << "duplicate input rows " << j << " and " << i
             << " with zero nugget; covariance matrix is singular";
          warn(os.str());
          return K;
        }
      }
    }
  }
  return K;
}

std::vector<Matrix> cov_gradients(const Points& X, const CovarianceConfig& config,
                                  const ParameterVector& params) {
  config.validate();
  const Points Z = scale_inputs(X, config.ranges);
  std::vector<Index> rows(X.rows());
  for (Index i = 0; i < X.rows(); ++i) rows[i] = i;
  std::vector<Matrix> dK;
  BlockKernel(config, params).gradients(Z, rows, dK);
  return dK;
}

// ---------------------------------------------------------------------------

MeanBasis parse_basis(const std::string& name) {
  if (name == "none" || name == "zero") return MeanBasis::none;
  if (name == "constant") return MeanBasis::constant;
  if (name == "linear") return MeanBasis::linear;
  throw Error("unknown mean basis '" + name + "' (expected none, constant or linear)");
}

std::string to_string(MeanBasis basis) {
  switch (basis) {
    case MeanBasis::none: return "none";
    case MeanBasis::constant: return "constant";
    case MeanBasis::linear: return "linear";
  }
  return "none";
}

Index basis_size(MeanBasis basis, Index dim) {
  switch (basis) {
    case MeanBasis::none: return 0;
    case MeanBasis::constant: return 1;
    case MeanBasis::linear: return dim + 1;
  }
  return 0;
}

Matrix design_matrix(MeanBasis basis, const Points& X) {
  const Index p = basis_size(basis, X.cols());
  Matrix F(X.rows(), p);
  if (p == 0) return F;
  F.col(0).setOnes();
  if (basis == MeanBasis::linear) F.rightCols(X.cols()) = X;
  return F;
}

Vector MeanModel::features(std::span<const double> x) const {
  const Index d = static_cast<Index>(x.size());
  const Index p = basis_size(basis, d);
  Vector f(p);
  if (p == 0) return f;
  f[0] = 1.0;
  if (basis == MeanBasis::linear)
    for (Index l = 0; l < d; ++l) f[1 + l] = x[l];
  return f;
}

double MeanModel::mean(std::span<const double> x) const {
  const Vector f = features(x);
  if (f.size() != coefficients.size()) throw Error("mean model: feature/coefficient length mismatch");
  return f.size() == 0 ? 0.0 : f.dot(coefficients);
}

Vector MeanModel::means(const Points& X) const {
  const Matrix F = design_matrix(basis, X);
  if (F.cols() != coefficients.size()) throw Error("mean model: feature/coefficient length mismatch");
  if (F.cols() == 0) return Vector::Zero(X.rows());
  return F * coefficients;
}

// ---------------------------------------------------------------------------

ParameterVector::ParameterVector(const CovarianceConfig& config, bool fix_nugget) {
  config.validate();
  const Index d = config.dim();
  theta_.resize(d + 2);
  fixed_.assign(d + 2, 0);
  theta_[0] = std::log(config.variance);
  for (Index l = 0; l < d; ++l) theta_[1 + l] = std::log(config.ranges[l]);
  theta_[d + 1] = std::log(config.nugget);
  if (fix_nugget) fixed_[d + 1] = 1;
  for (Index k = 0; k < d + 2; ++k)
    if (!std::isfinite(theta_[k])) fixed_[k] = 1;
}

std::vector<Index> ParameterVector::free_indices() const {
  std::vector<Index> out;
  for (Index k = 0; k < size(); ++k)
    if (!fixed_[k]) out.push_back(k);
  return out;
}

Index ParameterVector::num_free() const {
  Index c = 0;
  for (char f : fixed_) c += !f;
  return c;
}

Vector ParameterVector::free_values() const {
  const auto idx = free_indices();
  Vector v(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) v[k] = theta_[idx[k]];
  return v;
}

ParameterVector ParameterVector::with_free(const Vector& free) const {
  const auto idx = free_indices();
  if (free.size() != static_cast<Index>(idx.size())) throw Error("with_free: wrong number of free values");
  ParameterVector out = *this;
  for (std::size_t k = 0; k < idx.size(); ++k) out.theta_[idx[k]] = free[k];
  return out;
}

CovarianceConfig ParameterVector::to_config(double smoothness) const {
  CovarianceConfig c;
  c.smoothness = smoothness;
  c.variance = std::exp(theta_[0]);
  c.ranges.resize(dim());
  for (Index l = 0; l < dim(); ++l) c.ranges[l] = std::exp(theta_[1 + l]);
  c.nugget = std::exp(theta_[nugget_index()]);
  return c;
}

}  // namespace svecchia
