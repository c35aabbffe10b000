#pragma once

#include <mixsearch/error.hpp>
#include <mixsearch/models.hpp>
#include <mixsearch/spectral.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace mixsearch {

/// Nonzero finite side-information vector.
class SideInfo {
public:
	explicit SideInfo(Vector v) : v_(std::move(v)) {
		detail::require(v_.size() > 0 && v_.allFinite(), ErrorCode::InvalidInput, "side information must be finite");
		detail::require(v_.norm() > 0.0, ErrorCode::InvalidInput, "side information must be nonzero");
	}

	const Vector& vector() const noexcept { return v_; }
	Eigen::Index dim() const noexcept { return v_.size(); }

private:
	Vector v_;
};

struct SearchDiagnostics {
	/// Gap between the two largest eigenvalues of the whitened B (infinite when k == 1).
	double spectral_gap = std::numeric_limits<double>::infinity();
	std::optional<double> lambda_star;
	/// -1 when the cancellation search ran on the negated problem.
	int branch_sign = 1;
	bool ambiguous_top_component = false;
};

struct ComponentEstimate {
	Vector mu;
	double alpha = 0.0;
	SearchDiagnostics diagnostics;
};

enum class LambdaMethod { Bisection, NuclearNorm };

struct CancellationOptions {
	LambdaMethod lambda_method = LambdaMethod::Bisection;
	/// Recover from m' = A v and B instead of m and A.
	bool use_av_variant = false;
	/// PSD tolerance for the line search; defaults to 1e-8 * sigma_1(A).
	std::optional<double> psd_tol;
	double lambda_cap = 1e10;
	/// Linear weight in ||V^T Z_lambda V||_* + weight * lambda. Defaults to tr(V^T B V)(1 - slack sign).
	std::optional<double> nuclear_weight;
	double nuclear_slack = 1e-3;
};

/// Top-k eigenbasis of A used for whitening: A ~ V diag(D) V^T.
struct Whitener {
	Matrix V;
	Vector D;

	Matrix inv_sqrt_basis() const { return V * D.cwiseSqrt().cwiseInverse().asDiagonal(); }
	Matrix sqrt_basis() const { return V * D.cwiseSqrt().asDiagonal(); }
};

/// Top-q eigenpairs of A with negative eigenvalues clamped; throws RankDeficient if sigma_q is too small.
inline Whitener make_whitener(const SymMatrix& a, Eigen::Index q) {
	detail::require(q >= 1 && q <= a.dim(), ErrorCode::InvalidInput, "whitening rank must be in [1, d]");
	EigenSystem top = top_k_eig(a, q);
	const double s1 = top.values(0);
	const double sq = top.values(q - 1);
	const double threshold = 1e3 * std::numeric_limits<double>::epsilon() * std::abs(s1);
	if (!(s1 > 0.0) || !(sq > threshold))
		throw Error(ErrorCode::RankDeficient, "A has fewer than " + std::to_string(q) + " well-conditioned directions");
	return {std::move(top.vectors), top.values.cwiseMax(0.0)};
}

struct WhitenedB {
	SymMatrix W;
	Whitener whitener;
};

/// D^{-1/2} V^T B V D^{-1/2} for the top-k eigenbasis of A.
inline WhitenedB whiten_B(const MomentTriple& t, Eigen::Index k) {
	Whitener wh = make_whitener(t.A, k);
	const Matrix p = wh.inv_sqrt_basis();
	return {SymMatrix(p.transpose() * t.B.matrix() * p), std::move(wh)};
}

namespace detail {

inline SearchDiagnostics whitened_diagnostics(const EigenSystem& es) {
	SearchDiagnostics diag;
	if (es.size() > 1) {
		diag.spectral_gap = es.values(0) - es.values(1);
		const double scale = es.values.cwiseAbs().maxCoeff();
		diag.ambiguous_top_component = diag.spectral_gap <= 1e-10 * scale;
	}
	return diag;
}

} // namespace detail

/**
 * @brief Whitening search.
 *
 * u is the top eigenvector of the whitened B and w = V D^{1/2} u. Writing V V^T m = a w + y with y in the
 * image of u's orthogonal complement reduces to a = u^T D^{-1/2} V^T m. Returns (w / a, a^2).
 */
inline ComponentEstimate whitening_search(const MomentTriple& t, Eigen::Index k) {
	detail::require(t.m.size() == t.dim(), ErrorCode::InvalidInput, "whitening_search: m has wrong dimension");
	const WhitenedB wb = whiten_B(t, k);
	const EigenSystem es = sym_eig(wb.W);
	Vector u = es.vectors.col(0);

	const Vector mw = wb.whitener.inv_sqrt_basis().transpose() * t.m;
	double a = u.dot(mw);
	if (a < 0.0) {
		u = -u;
		a = -a;
	}
	if (!(a > 1e-12 * mw.norm()))
		throw Error(ErrorCode::DegenerateMean, "m has no component along the selected direction");

	const Vector w = wb.whitener.sqrt_basis() * u;
	return {w / a, a * a, detail::whitened_diagnostics(es)};
}

struct LambdaSearch {
	double lambda = 0.0;
	/// Top-k eigenvectors of A spanning the reduced problem.
	Matrix basis;
	/// +1, or -1 when v and B were negated internally.
	int sign = 1;
};

namespace detail {

inline double nuclear_norm(const SymMatrix& m) {
	Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
	return solver.eigenvalues().cwiseAbs().sum();
}

} // namespace detail

/**
 * @brief Largest lambda for which V^T (A - lambda B) V stays PSD, on the k x k reduced problem.
 *
 * The branch follows the sign of the largest-magnitude eigenvalue of the whitened B; on the negative
 * branch the search runs on -B (equivalently -v).
 */
inline LambdaSearch find_lambda_star(const MomentTriple& t, Eigen::Index k, const CancellationOptions& opts = {}) {
	detail::require(opts.lambda_cap > 0.0, ErrorCode::InvalidInput, "lambda_cap must be positive");
	detail::require(!opts.psd_tol || *opts.psd_tol >= 0.0, ErrorCode::InvalidInput, "psd_tol must be nonnegative");
	const WhitenedB wb = whiten_B(t, k);
	const EigenSystem es = sym_eig(wb.W);
	const double top = es.values(0);
	const double bottom = es.values(es.size() - 1);
	const double w_norm = std::max(std::abs(top), std::abs(bottom));
	if (!(w_norm > 0.0))
		throw Error(ErrorCode::NonInformativeSideInfo, "B vanishes on the range of A");
	const int sign = std::abs(top) >= std::abs(bottom) ? 1 : -1;

	const Matrix& v_hat = wb.whitener.V;
	const SymMatrix ka(v_hat.transpose() * t.A.matrix() * v_hat);
	const SymMatrix kb(static_cast<double>(sign) * (v_hat.transpose() * t.B.matrix() * v_hat));
	const auto reduced = [&](double lambda) { return SymMatrix(ka.matrix() - lambda * kb.matrix()); };

	// 1 / |w|_max <= lambda*, so the bracket search starts below the answer.
	const double start = 1.0 / w_norm;
	LambdaSearch out{0.0, v_hat, sign};

	if (opts.lambda_method == LambdaMethod::Bisection) {
		const double tol = opts.psd_tol.value_or(1e-8 * wb.whitener.D(0));
		double lo = 0.0;
		double hi = start;
		while (is_psd(reduced(hi), tol)) {
			lo = hi;
			hi *= 2.0;
			if (hi > opts.lambda_cap)
				throw Error(ErrorCode::NonInformativeSideInfo, "A - lambda B stays PSD up to lambda_cap");
		}
		while (hi - lo > 1e-10 * hi) {
			const double mid = 0.5 * (lo + hi);
			if (is_psd(reduced(mid), tol))
				lo = mid;
			else
				hi = mid;
		}
		out.lambda = lo;
		return out;
	}

	const double trace_b = kb.matrix().trace();
	const double weight = opts.nuclear_weight.value_or(trace_b - opts.nuclear_slack * std::abs(trace_b));
	const auto objective = [&](double lambda) { return detail::nuclear_norm(reduced(lambda)) + weight * lambda; };

	// The objective is convex; find an upper end past the minimizer.
	double hi = start;
	while (objective(2.0 * hi) < objective(hi)) {
		hi *= 2.0;
		if (hi > opts.lambda_cap)
			throw Error(ErrorCode::NonInformativeSideInfo, "nuclear-norm objective keeps decreasing past lambda_cap");
	}
	hi *= 2.0;

	const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
	double a = 0.0;
	double b = hi;
	double c = b - inv_phi * (b - a);
	double d = a + inv_phi * (b - a);
	double fc = objective(c);
	double fd = objective(d);
	while (b - a > 1e-10 * b) {
		if (fc <= fd) {
			b = d;
			d = c;
			fd = fc;
			c = b - inv_phi * (b - a);
			fc = objective(c);
		} else {
			a = c;
			c = d;
			fc = fd;
			d = a + inv_phi * (b - a);
			fd = objective(d);
		}
	}
	out.lambda = 0.5 * (a + b);
	return out;
}

/**
 * @brief Cancellation search.
 *
 * Z = A - lambda* B loses the target's rank-one term, so its top k-1 singular vectors span the other
 * components. Projecting m off that span isolates the target direction v1, and the coefficients
 * c_i = v1^T A v_i / |x1| give mu in the basis {v1, v2..vk}.
 */
inline ComponentEstimate cancellation_search(const MomentTriple& t, Eigen::Index k,
                                             const CancellationOptions& opts = {}) {
	const Eigen::Index d = t.dim();
	const LambdaSearch ls = find_lambda_star(t, k, opts);
	const double s = static_cast<double>(ls.sign);
	const Matrix b_signed = s * t.B.matrix();

	// Top k-1 singular vectors of Z (eigenvectors by absolute eigenvalue).
	const EigenSystem z = sym_eig(SymMatrix(t.A.matrix() - ls.lambda * b_signed));
	std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
	std::iota(order.begin(), order.end(), Eigen::Index{0});
	std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
		return std::abs(z.values(i)) > std::abs(z.values(j));
	});
	Matrix rest(d, k - 1);
	for (Eigen::Index i = 0; i + 1 < k; ++i)
		rest.col(i) = z.vectors.col(order[static_cast<std::size_t>(i)]);

	Vector base;
	if (opts.use_av_variant) {
		detail::require(t.v.size() == d, ErrorCode::InvalidInput, "cancellation_search: triple carries no v");
		base = t.A.matrix() * (s * t.v);
	} else {
		detail::require(t.m.size() == d, ErrorCode::InvalidInput, "cancellation_search: m has wrong dimension");
		base = t.m;
	}
	const Vector x1 = project_off(rest, base);
	const double x1_norm = x1.norm();
	if (!(x1_norm > 1e-10 * base.norm()))
		throw Error(ErrorCode::DegenerateMean, "mean has no component outside the cancelled span");

	Matrix basis(d, k);
	basis.col(0) = x1 / x1_norm;
	basis.rightCols(k - 1) = rest;

	const Matrix& mixing = opts.use_av_variant ? b_signed : t.A.matrix();
	const Vector c = basis.transpose() * (mixing * basis.col(0));
	const Vector coeffs = c / x1_norm;
	const double a1 = coeffs(0);
	if (!(std::abs(a1) > 0.0))
		throw Error(ErrorCode::DegenerateMean, "leading coefficient vanished");
	const double c1 = opts.use_av_variant ? basis.col(0).dot(t.A.matrix() * basis.col(0)) : c(0);

	ComponentEstimate out{basis * coeffs, c1 / (a1 * a1), {}};
	const WhitenedB wb = whiten_B(t, k);
	out.diagnostics = detail::whitened_diagnostics(sym_eig(wb.W));
	out.diagnostics.lambda_star = ls.lambda;
	out.diagnostics.branch_sign = ls.sign;
	return out;
}

} // namespace mixsearch
