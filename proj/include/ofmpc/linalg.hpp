#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ofmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NotPSD : public Error {
public:
    using Error::Error;
};

namespace linalg {

Mat kron(const Mat& a, const Mat& b);

/// Column-stacking vectorization.
Vec vec(const Mat& a);
Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols);

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

Mat block_diag(const Mat& a, const Mat& b);
Mat block_diag(const Mat& a, const Mat& b, const Mat& c);

/// I_n (x) a
Mat repeat_diag(const Mat& a, int n);

double spectral_radius(const Mat& a);

/// Smallest eigenvalue of the symmetric part.
double min_eigenvalue(const Mat& a);

bool is_symmetric(const Mat& a, double rel_tol = 1e-9);

/// Symmetric PSD up to -tol * max(1, trace).
bool is_psd(const Mat& a, double rel_tol = 1e-9);

/// Returns G with G^T G = a, built from the eigendecomposition of a with
/// negative eigenvalues clipped to zero. Rows with eigenvalue below
/// rank_tol * max eigenvalue are dropped, so G is (rank x n).
Mat psd_factor(const Mat& a, double rank_tol = 1e-13);

/// Returns square F with F F^T = a; negative eigenvalues are clipped to zero.
Mat psd_sqrt(const Mat& a);

/// Throws DimensionMismatch unless m is rows x cols.
void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const std::string& what);

}  // namespace linalg
}  // namespace ofmpc
