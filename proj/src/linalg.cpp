#include "ofmpc/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ofmpc::linalg {

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

Vec vec(const Mat& a) {
    return Eigen::Map<const Vec>(a.data(), a.size());
}

Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) {
        throw DimensionMismatch("unvec: size mismatch");
    }
    return Eigen::Map<const Mat>(v.data(), rows, cols);
}

Mat block_diag(const Mat& a, const Mat& b) {
    Mat out = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

Mat block_diag(const Mat& a, const Mat& b, const Mat& c) {
    return block_diag(block_diag(a, b), c);
}

Mat repeat_diag(const Mat& a, int n) {
    Mat out = Mat::Zero(a.rows() * n, a.cols() * n);
    for (int i = 0; i < n; ++i) {
        out.block(i * a.rows(), i * a.cols(), a.rows(), a.cols()) = a;
    }
    return out;
}

double spectral_radius(const Mat& a) {
    if (a.size() == 0) {
        return 0.0;
    }
    Eigen::EigenSolver<Mat> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Mat& a) {
    if (a.size() == 0) {
        return 0.0;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool is_symmetric(const Mat& a, double rel_tol) {
    if (a.rows() != a.cols()) {
        return false;
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool is_psd(const Mat& a, double rel_tol) {
    if (!is_symmetric(a, rel_tol)) {
        return false;
    }
    const double scale = std::max(1.0, std::abs(a.trace()));
    return min_eigenvalue(a) >= -rel_tol * scale;
}

Mat psd_factor(const Mat& a, double rank_tol) {
    const Eigen::Index n = a.rows();
    if (n == 0) {
        return Mat(0, 0);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
    const Vec& ev = es.eigenvalues();
    const double top = std::max(ev.maxCoeff(), 0.0);
    const double cut = rank_tol * top;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (ev(i) > cut && ev(i) > 0.0) {
            ++rank;
        }
    }
    Mat g(rank, n);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (ev(i) > cut && ev(i) > 0.0) {
            g.row(r++) = std::sqrt(ev(i)) * es.eigenvectors().col(i).transpose();
        }
    }
    return g;
}

Mat psd_sqrt(const Mat& a) {
    if (a.rows() == 0) {
        return Mat(0, 0);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
    const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        std::ostringstream os;
        os << what << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
        throw DimensionMismatch(os.str());
    }
}

}  // namespace ofmpc::linalg
