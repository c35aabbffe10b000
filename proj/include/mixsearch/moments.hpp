#pragma once

#include <mixsearch/bow.hpp>
#include <mixsearch/error.hpp>
#include <mixsearch/models.hpp>
#include <mixsearch/spectral.hpp>

#include <optional>
#include <span>
#include <vector>

namespace mixsearch {

/// Sample-average accumulation is split into this many contiguous row blocks and merged.
struct EstimatorOptions {
	std::size_t shards = 1;
};

namespace detail {

template <class Fn>
void for_each_shard(Eigen::Index n, std::size_t shards, Fn&& fn) {
	const auto s = static_cast<Eigen::Index>(std::max<std::size_t>(1, shards));
	for (Eigen::Index b = 0; b < s; ++b) {
		const Eigen::Index start = n * b / s;
		const Eigen::Index stop = n * (b + 1) / s;
		if (stop > start)
			fn(start, stop - start);
	}
}

// sum_j w_j x_j x_j^T over the rows of x.
inline Matrix weighted_gram(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& w) {
	return x.transpose() * (x.array().colwise() * w.array()).matrix();
}

} // namespace detail

/**
 * @brief Spherical GMM moments from raw samples (n x d).
 *
 * sigma^2 is the (k+1)-th largest eigenvalue of the sample covariance and u its eigenvector;
 * m~ = mean of x (u^T(x - m))^2; A = E[xx^T] - sigma^2 I;
 * B = E[<x,v> xx^T] - m~ v^T - v m~^T - <m~, v> I.
 * The third-order term is accumulated as one d x d matrix; m~ needs a second pass once u is known.
 */
inline MomentTriple estimate_gmm(const Matrix& samples, Eigen::Index k, const Vector& v,
                                 EstimatorOptions opts = {}) {
	const Eigen::Index n = samples.rows();
	const Eigen::Index d = samples.cols();
	detail::require(k >= 1 && d > k, ErrorCode::InvalidInput, "estimate_gmm: requires d > k");
	detail::require(v.size() == d && v.allFinite(), ErrorCode::InvalidInput, "estimate_gmm: bad side-information vector");
	detail::require(n >= d + 1, ErrorCode::InsufficientSamples, "estimate_gmm: requires n >= d + 1");

	Vector sum_x = Vector::Zero(d);
	Matrix sum_xx = Matrix::Zero(d, d);
	Matrix sum_vxx = Matrix::Zero(d, d);
	detail::for_each_shard(n, opts.shards, [&](Eigen::Index start, Eigen::Index len) {
		const auto block = samples.middleRows(start, len);
		const Vector proj = block * v;
		sum_x += block.colwise().sum().transpose();
		sum_xx += block.transpose() * block;
		sum_vxx += detail::weighted_gram(block, proj);
	});
	const double inv_n = 1.0 / static_cast<double>(n);
	const Vector mean = sum_x * inv_n;
	const Matrix second = sum_xx * inv_n;

	const EigenSystem cov = sym_eig(SymMatrix(second - mean * mean.transpose()));
	const double sigma2 = cov.values(k);
	const Vector u = cov.vectors.col(k);

	Vector sum_mt = Vector::Zero(d);
	detail::for_each_shard(n, opts.shards, [&](Eigen::Index start, Eigen::Index len) {
		const auto block = samples.middleRows(start, len);
		const Vector c = (block * u).array() - u.dot(mean);
		sum_mt += block.transpose() * c.array().square().matrix();
	});
	const Vector m_tilde = sum_mt * inv_n;

	MomentTriple t;
	t.kind = ModelKind::Gmm;
	t.m = mean;
	t.A = SymMatrix(second - sigma2 * Matrix::Identity(d, d));
	t.B = SymMatrix(sum_vxx * inv_n - m_tilde * v.transpose() - v * m_tilde.transpose()
	                - m_tilde.dot(v) * Matrix::Identity(d, d));
	t.v = v;
	t.nuisance.sigma2 = sigma2;
	t.nuisance.m_tilde = m_tilde;
	return t;
}

namespace lda {

/// Per-document unbiased estimate of E[x1 x2^T]: (cc^T - diag(c)) / (l(l-1)). Requires l >= 2.
inline Matrix pair_estimate(const BowDoc& doc, Eigen::Index vocab) {
	const double l = static_cast<double>(doc.length());
	detail::require(doc.length() >= 2, ErrorCode::InsufficientSamples, "pair estimate needs >= 2 words");
	const Vector c = doc.dense(vocab);
	Matrix out = c * c.transpose();
	out.diagonal() -= c;
	return out / (l * (l - 1.0));
}

/**
 * Per-document unbiased estimate of E[<x3, v> x1 x2^T] over ordered distinct positions:
 * [(v.c)(cc^T - diag c) - (c.v)c^T - c(c.v)^T + 2 diag(c.v)] / (l(l-1)(l-2)), with c.v entrywise.
 * Requires l >= 3.
 */
inline Matrix triple_estimate(const BowDoc& doc, const Vector& v) {
	const Eigen::Index vocab = v.size();
	const double l = static_cast<double>(doc.length());
	detail::require(doc.length() >= 3, ErrorCode::InsufficientSamples, "triple estimate needs >= 3 words");
	const Vector c = doc.dense(vocab);
	const Vector cv = c.cwiseProduct(v);
	Matrix cc = c * c.transpose();
	cc.diagonal() -= c;
	Matrix out = v.dot(c) * cc - cv * c.transpose() - c * cv.transpose();
	out.diagonal() += 2.0 * cv;
	return out / (l * (l - 1.0) * (l - 2.0));
}

/// Mergeable sums of the per-document estimators.
struct Sums {
	Vector freq;
	Matrix pair;
	Matrix triple;
	std::int64_t n1 = 0, n2 = 0, n3 = 0;

	explicit Sums(Eigen::Index d) : freq(Vector::Zero(d)), pair(Matrix::Zero(d, d)), triple(Matrix::Zero(d, d)) {}

	// Sparse form of pair_estimate / triple_estimate; cost is quadratic in the number of distinct words.
	void add(const BowDoc& doc, const Vector& v) {
		const auto& e = doc.entries();
		const double l = static_cast<double>(doc.length());
		if (doc.length() < 1)
			return;
		for (const auto& [w, c] : e) {
			detail::require(w < freq.size(), ErrorCode::InvalidInput, "document word index outside vocabulary");
			freq(w) += static_cast<double>(c) / l;
		}
		++n1;
		if (doc.length() < 2)
			return;
		const double s2 = 1.0 / (l * (l - 1.0));
		for (const auto& [wi, ci] : e) {
			for (const auto& [wj, cj] : e)
				pair(wi, wj) += s2 * static_cast<double>(ci) * static_cast<double>(cj);
			pair(wi, wi) -= s2 * static_cast<double>(ci);
		}
		++n2;
		if (doc.length() < 3)
			return;
		const double s3 = s2 / (l - 2.0);
		double vc = 0.0;
		for (const auto& [w, c] : e)
			vc += v(w) * static_cast<double>(c);
		for (const auto& [wi, ci] : e) {
			const double a = static_cast<double>(ci);
			const double av = a * v(wi);
			for (const auto& [wj, cj] : e) {
				const double b = static_cast<double>(cj);
				triple(wi, wj) += s3 * (vc * a * b - av * b - a * b * v(wj));
			}
			triple(wi, wi) += s3 * (-vc * a + 2.0 * av);
		}
		++n3;
	}

	void merge(const Sums& o) {
		freq += o.freq;
		pair += o.pair;
		triple += o.triple;
		n1 += o.n1;
		n2 += o.n2;
		n3 += o.n3;
	}
};

} // namespace lda

/**
 * @brief LDA moments from a corpus with known alpha0.
 *
 * m = a0 E[x1], A = a0(a0+1) E[x1 x2^T] - m m^T,
 * B = a0(a0+1)(a0+2)/2 E[<x3,v> x1 x2^T]
 *     - a0(a0+1)/2 (<m,v> E[x1 x2^T] + E[<x3,v> x1] m^T + m E[<x3,v> x2]^T) + <m,v> m m^T,
 * where E[<x3,v> x1] = E[x1 x3^T] v uses the pair estimate.
 */
inline MomentTriple estimate_lda(std::span<const BowDoc> docs, double alpha0, const Vector& v,
                                 EstimatorOptions opts = {}) {
	const Eigen::Index d = v.size();
	detail::require(alpha0 > 0.0, ErrorCode::InvalidInput, "estimate_lda: alpha0 must be positive");
	detail::require(d > 0 && v.allFinite(), ErrorCode::InvalidInput, "estimate_lda: bad side-information vector");

	lda::Sums total(d);
	detail::for_each_shard(static_cast<Eigen::Index>(docs.size()), opts.shards,
	                       [&](Eigen::Index start, Eigen::Index len) {
		                       lda::Sums part(d);
		                       for (Eigen::Index j = start; j < start + len; ++j)
			                       part.add(docs[static_cast<std::size_t>(j)], v);
		                       total.merge(part);
	                       });
	detail::require(total.n1 > 0, ErrorCode::InsufficientSamples, "estimate_lda: no document with >= 1 word");
	detail::require(total.n2 > 0, ErrorCode::InsufficientSamples, "estimate_lda: no document with >= 2 words");
	detail::require(total.n3 > 0, ErrorCode::InsufficientSamples, "estimate_lda: no document with >= 3 words");

	const Vector m = alpha0 * total.freq / static_cast<double>(total.n1);
	const Matrix pair = total.pair / static_cast<double>(total.n2);
	const Matrix triple = total.triple / static_cast<double>(total.n3);
	const Vector pv = pair * v;
	const double mv = m.dot(v);
	const double c2 = alpha0 * (alpha0 + 1.0) / 2.0;
	const double c3 = c2 * (alpha0 + 2.0);

	MomentTriple t;
	t.kind = ModelKind::Lda;
	t.m = m;
	t.A = SymMatrix(alpha0 * (alpha0 + 1.0) * pair - m * m.transpose());
	t.B = SymMatrix(c3 * triple - c2 * (mv * pair + pv * m.transpose() + m * pv.transpose())
	                + mv * m * m.transpose());
	t.v = v;
	t.nuisance.alpha0 = alpha0;
	return t;
}

/**
 * @brief Mixed-regression moments from (x, y) pairs.
 *
 * tau^2 is the smallest eigenvalue of M22 = E[y^2 xx^T]; A = (M22 - tau^2 I)/2;
 * B = (M33 - (M31 v^T + v M31^T + <M31, v> I))/6 with M31 = E[y^3 x], M33 = E[y^3 <x,v> xx^T].
 */
inline MomentTriple estimate_mixreg(const Matrix& x, const Vector& y, Eigen::Index k, const Vector& v,
                                    EstimatorOptions opts = {}) {
	const Eigen::Index n = x.rows();
	const Eigen::Index d = x.cols();
	detail::require(y.size() == n, ErrorCode::InvalidInput, "estimate_mixreg: x and y row counts differ");
	detail::require(k >= 1 && d > k, ErrorCode::InvalidInput, "estimate_mixreg: requires d > k");
	detail::require(v.size() == d && v.allFinite(), ErrorCode::InvalidInput, "estimate_mixreg: bad side-information vector");
	detail::require(n >= d + 1, ErrorCode::InsufficientSamples, "estimate_mixreg: requires n >= d + 1");

	Vector m11 = Vector::Zero(d);
	Vector m31 = Vector::Zero(d);
	Matrix m22 = Matrix::Zero(d, d);
	Matrix m33 = Matrix::Zero(d, d);
	detail::for_each_shard(n, opts.shards, [&](Eigen::Index start, Eigen::Index len) {
		const auto xb = x.middleRows(start, len);
		const Vector yb = y.segment(start, len);
		const Vector y2 = yb.array().square();
		const Vector y3 = yb.array().cube();
		m11 += xb.transpose() * yb;
		m31 += xb.transpose() * y3;
		m22 += detail::weighted_gram(xb, y2);
		m33 += detail::weighted_gram(xb, (y3.array() * (xb * v).array()).matrix());
	});
	const double inv_n = 1.0 / static_cast<double>(n);
	m11 *= inv_n;
	m31 *= inv_n;
	const SymMatrix m22s(m22 * inv_n);
	m33 *= inv_n;

	const double tau2 = min_eigenvalue(m22s);
	const Matrix id = Matrix::Identity(d, d);

	MomentTriple t;
	t.kind = ModelKind::MixReg;
	t.m = m11;
	t.A = SymMatrix(0.5 * (m22s.matrix() - tau2 * id));
	t.B = SymMatrix((m33 - (m31 * v.transpose() + v * m31.transpose() + m31.dot(v) * id)) / 6.0);
	t.v = v;
	t.nuisance.tau2 = tau2;
	return t;
}

/**
 * @brief Subspace-model moments from samples (n x d).
 *
 * M2 = E[xx^T]; sigma^2 is the (k r + 1)-th largest eigenvalue of M2 unless supplied; A = M2 - sigma^2 I;
 * B = E[<x,v>^2 xx^T] - sigma^2 (v^T A v) I - sigma^2 |v|^2 A - sigma^4 (|v|^2 I + 2 v v^T)
 *     - 2 sigma^2 (A v v^T + v v^T A).
 * The returned m is zero.
 */
inline MomentTriple estimate_subspace(const Matrix& samples, Eigen::Index k, Eigen::Index r, const Vector& v,
                                      std::optional<double> known_sigma2 = std::nullopt,
                                      EstimatorOptions opts = {}) {
	const Eigen::Index n = samples.rows();
	const Eigen::Index d = samples.cols();
	detail::require(k >= 1 && r >= 1 && d > k * r, ErrorCode::InvalidInput, "estimate_subspace: requires d > k*r");
	detail::require(v.size() == d && v.allFinite(), ErrorCode::InvalidInput, "estimate_subspace: bad side-information vector");
	detail::require(n >= 1, ErrorCode::InsufficientSamples, "estimate_subspace: no samples");
	detail::require(!known_sigma2 || *known_sigma2 >= 0.0, ErrorCode::InvalidInput, "estimate_subspace: negative sigma^2");

	Matrix m2 = Matrix::Zero(d, d);
	Matrix m4 = Matrix::Zero(d, d);
	detail::for_each_shard(n, opts.shards, [&](Eigen::Index start, Eigen::Index len) {
		const auto block = samples.middleRows(start, len);
		const Vector proj = block * v;
		m2 += block.transpose() * block;
		m4 += detail::weighted_gram(block, proj.array().square().matrix());
	});
	const double inv_n = 1.0 / static_cast<double>(n);
	const SymMatrix m2s(m2 * inv_n);
	m4 *= inv_n;

	const double s2 = known_sigma2 ? *known_sigma2 : sym_eig(m2s).values(k * r);
	const Matrix id = Matrix::Identity(d, d);
	const Matrix a = m2s.matrix() - s2 * id;
	const Vector av = a * v;
	const double vv = v.squaredNorm();

	MomentTriple t;
	t.kind = ModelKind::Subspace;
	t.m = Vector::Zero(d);
	t.A = SymMatrix(a);
	t.B = SymMatrix(m4 - s2 * v.dot(av) * id - s2 * vv * a - s2 * s2 * (vv * id + 2.0 * v * v.transpose())
	                - 2.0 * s2 * (av * v.transpose() + v * av.transpose()));
	t.v = v;
	t.nuisance.sigma2 = s2;
	return t;
}

} // namespace mixsearch
