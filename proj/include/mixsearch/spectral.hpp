#pragma once

#include <mixsearch/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixsearch {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * @brief Dense real symmetric matrix.
 *
 * The input is symmetrized as (M + M^T)/2 on construction, so entries(i,j) == entries(j,i)
 * holds bit-exactly afterwards. Non-square or non-finite input is rejected.
 */
class SymMatrix {
public:
	SymMatrix() = default;

	explicit SymMatrix(const Matrix& m) {
		detail::require(m.rows() == m.cols(), ErrorCode::InvalidInput, "SymMatrix requires a square matrix");
		detail::require(m.allFinite(), ErrorCode::InvalidInput, "SymMatrix entries must be finite");
		m_ = 0.5 * (m + m.transpose());
	}

	static SymMatrix zero(Eigen::Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }
	static SymMatrix identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

	Eigen::Index dim() const noexcept { return m_.rows(); }
	const Matrix& matrix() const noexcept { return m_; }
	double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

	SymMatrix operator+(const SymMatrix& o) const { return SymMatrix(m_ + o.m_); }
	SymMatrix operator-(const SymMatrix& o) const { return SymMatrix(m_ - o.m_); }
	SymMatrix operator*(double c) const { return SymMatrix(c * m_); }

private:
	Matrix m_;
};

inline SymMatrix operator*(double c, const SymMatrix& m) { return m * c; }

/// Eigenpairs with values sorted non-increasing and orthonormal columns in `vectors`.
struct EigenSystem {
	Vector values;
	Matrix vectors;

	Eigen::Index size() const noexcept { return values.size(); }
};

namespace detail {

// Flip each column so its largest-magnitude entry is positive; ties go to the lowest index.
inline void fix_signs(Matrix& vectors) {
	for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
		Eigen::Index best = 0;
		double best_abs = -1.0;
		for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
			const double a = std::abs(vectors(r, c));
			if (a > best_abs) {
				best_abs = a;
				best = r;
			}
		}
		if (vectors(best, c) < 0.0)
			vectors.col(c) *= -1.0;
	}
}

} // namespace detail

/// Full eigendecomposition, values non-increasing, deterministic column signs.
inline EigenSystem sym_eig(const SymMatrix& m) {
	const Eigen::Index d = m.dim();
	if (d == 0)
		return {Vector(0), Matrix(0, 0)};
	Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix());
	detail::require(solver.info() == Eigen::Success, ErrorCode::InvalidInput, "eigensolver failed");
	// Eigen returns ascending order.
	EigenSystem out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
	detail::fix_signs(out.vectors);
	return out;
}

/// The k algebraically-largest eigenpairs.
inline EigenSystem top_k_eig(const SymMatrix& m, Eigen::Index k) {
	detail::require(k >= 1 && k <= m.dim(), ErrorCode::InvalidInput, "top_k_eig: k must be in [1, dim]");
	EigenSystem full = sym_eig(m);
	return {full.values.head(k), full.vectors.leftCols(k)};
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
inline double spectral_norm(const SymMatrix& m) {
	if (m.dim() == 0)
		return 0.0;
	Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
	return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Spectral norm of an arbitrary matrix.
inline double spectral_norm(const Matrix& m) {
	if (m.size() == 0)
		return 0.0;
	Eigen::JacobiSVD<Matrix> svd(m);
	return svd.singularValues()(0);
}

inline double min_eigenvalue(const SymMatrix& m) {
	Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
	return solver.eigenvalues()(0);
}

/// Scale-relative PSD tolerance 1e-8 * max(1, ||M||).
inline double default_psd_tol(const SymMatrix& m) { return 1e-8 * std::max(1.0, spectral_norm(m)); }

/// True iff the minimum eigenvalue of m is >= -tol.
inline bool is_psd(const SymMatrix& m, double tol) {
	if (m.dim() == 0)
		return true;
	return min_eigenvalue(m) >= -tol;
}

inline bool is_psd(const SymMatrix& m) { return is_psd(m, default_psd_tol(m)); }

/// x - basis * basis^T * x. `basis` must have orthonormal columns (within 1e-8).
inline Vector project_off(const Matrix& basis, const Vector& x) {
	detail::require(basis.cols() == 0 || basis.rows() == x.size(), ErrorCode::InvalidInput,
	                "project_off: dimension mismatch");
	if (basis.cols() == 0)
		return x;
	const Matrix gram = basis.transpose() * basis;
	const double dev = (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
	detail::require(dev <= 1e-8, ErrorCode::InvalidInput, "project_off: basis is not orthonormal");
	return x - basis * (basis.transpose() * x);
}

/// Orthonormal basis for the column span of m (thin QR); columns follow the input order.
inline Matrix orthonormalize(const Matrix& m) {
	Eigen::HouseholderQR<Matrix> qr(m);
	Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
	// Make the basis independent of Householder sign choices.
	const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
	for (Eigen::Index c = 0; c < q.cols(); ++c)
		if (r(c, c) < 0.0)
			q.col(c) *= -1.0;
	return q;
}

/// Spectral norm of the difference of the orthogonal projectors onto col(u) and col(w).
inline double projector_distance(const Matrix& u, const Matrix& w) {
	return spectral_norm(SymMatrix(u * u.transpose() - w * w.transpose()));
}

} // namespace mixsearch
