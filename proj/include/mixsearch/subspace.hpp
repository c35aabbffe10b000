#pragma once

#include <mixsearch/error.hpp>
#include <mixsearch/random.hpp>
#include <mixsearch/search.hpp>
#include <mixsearch/spectral.hpp>

#include <limits>
#include <vector>

namespace mixsearch {

struct SubspaceEstimate {
	Matrix U_hat;
	/// sigma_r(R) - sigma_{r+1}(R) for the whitened B; infinite when k == 1.
	double spectral_gap = std::numeric_limits<double>::infinity();
	bool ambiguous_subspace = false;
};

/**
 * @brief Subspace search.
 *
 * Whitens B with the top k*r eigenpairs of A, takes the top r eigenvectors Y of the whitened matrix R,
 * and returns an orthonormal basis of V D^{1/2} Y.
 */
inline SubspaceEstimate subspace_search(const SymMatrix& a_hat, const SymMatrix& b_hat, Eigen::Index k,
                                        Eigen::Index r) {
	detail::require(a_hat.dim() == b_hat.dim(), ErrorCode::InvalidInput, "subspace_search: A and B differ in size");
	detail::require(k >= 1 && r >= 1, ErrorCode::InvalidInput, "subspace_search: k and r must be positive");
	const Eigen::Index q = k * r;
	detail::require(a_hat.dim() > q || (k == 1 && a_hat.dim() >= r), ErrorCode::InvalidInput,
	                "subspace_search: requires d > k * r");

	const Whitener wh = make_whitener(a_hat, q);
	const Matrix p = wh.inv_sqrt_basis();
	const EigenSystem es = sym_eig(SymMatrix(p.transpose() * b_hat.matrix() * p));

	SubspaceEstimate out;
	if (q > r) {
		out.spectral_gap = es.values(r - 1) - es.values(r);
		const double scale = es.values.cwiseAbs().maxCoeff();
		out.ambiguous_subspace = out.spectral_gap <= 1e-10 * scale;
	}
	const Matrix z = wh.sqrt_basis() * es.vectors.leftCols(r);
	out.U_hat = top_k_eig(SymMatrix(z * z.transpose()), r).vectors;
	return out;
}

/// ||U_hat U_hat^T - U U^T||_2 / ||U U^T||_2.
inline double subspace_error(const Matrix& u_hat, const Matrix& u_true) {
	detail::require(u_true.cols() > 0, ErrorCode::InvalidInput, "subspace_error: empty reference basis");
	return projector_distance(u_hat, u_true);
}

struct KMeansResult {
	Matrix centroids; // k x d
	std::vector<int> labels;
	double objective = 0.0;
	int iterations = 0;
};

namespace detail {

/// Squared distances from every row of x to every row of c (n x k).
inline Matrix sq_distances(const Matrix& x, const Vector& x_sq, const Matrix& c) {
	Matrix dist = -2.0 * (x * c.transpose());
	dist.colwise() += x_sq;
	dist.rowwise() += c.rowwise().squaredNorm().transpose();
	return dist.cwiseMax(0.0);
}

inline Matrix kmeanspp_init(const Matrix& x, const Vector& x_sq, Eigen::Index k, Rng& rng) {
	const Eigen::Index n = x.rows();
	Matrix c(k, x.cols());
	c.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
	Vector best = sq_distances(x, x_sq, c.topRows(1)).col(0);
	for (Eigen::Index j = 1; j < k; ++j) {
		const double total = best.sum();
		Eigen::Index pick = 0;
		if (total > 0.0) {
			const double target = rng.uniform() * total;
			double acc = 0.0;
			pick = n - 1;
			for (Eigen::Index i = 0; i < n; ++i) {
				acc += best(i);
				if (acc > target) {
					pick = i;
					break;
				}
			}
		} else {
			pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
		}
		c.row(j) = x.row(pick);
		best = best.cwiseMin(sq_distances(x, x_sq, c.row(j)).col(0));
	}
	return c;
}

inline KMeansResult lloyd(const Matrix& x, const Vector& x_sq, Matrix c, int max_iter, double shift_tol) {
	const Eigen::Index n = x.rows();
	const Eigen::Index k = c.rows();
	KMeansResult out;
	out.labels.assign(static_cast<std::size_t>(n), 0);
	Vector nearest(n);

	const auto assign = [&] {
		const Matrix dist = sq_distances(x, x_sq, c);
		for (Eigen::Index i = 0; i < n; ++i) {
			Eigen::Index j = 0;
			nearest(i) = dist.row(i).minCoeff(&j);
			out.labels[static_cast<std::size_t>(i)] = static_cast<int>(j);
		}
	};

	for (int it = 0; it < max_iter; ++it) {
		assign();
		Matrix next = Matrix::Zero(k, x.cols());
		Vector counts = Vector::Zero(k);
		for (Eigen::Index i = 0; i < n; ++i) {
			const auto j = out.labels[static_cast<std::size_t>(i)];
			next.row(j) += x.row(i);
			counts(j) += 1.0;
		}
		for (Eigen::Index j = 0; j < k; ++j) {
			if (counts(j) > 0.0) {
				next.row(j) /= counts(j);
				continue;
			}
			// Empty cluster: move it to the point farthest from its centroid.
			Eigen::Index far = 0;
			nearest.maxCoeff(&far);
			next.row(j) = x.row(far);
			nearest(far) = 0.0;
		}
		const double shift = (next - c).rowwise().norm().maxCoeff();
		c = std::move(next);
		out.iterations = it + 1;
		if (shift <= shift_tol)
			break;
	}
	assign();
	out.objective = nearest.sum();
	out.centroids = std::move(c);
	return out;
}

} // namespace detail

/**
 * @brief Lloyd's k-means with k-means++ seeding, best objective over `restarts`.
 *
 * Restart i draws from its own stream derive_seed({base, i}) where base is taken from `rng`, so the
 * result does not depend on the order restarts are run in. Ties keep the lowest restart index.
 */
inline KMeansResult kmeans(const Matrix& x, Eigen::Index k, int restarts, Rng& rng, int max_iter = 100,
                           double shift_tol = 1e-6) {
	detail::require(k >= 1 && x.rows() >= k, ErrorCode::InsufficientSamples, "kmeans: need at least k points");
	detail::require(restarts >= 1, ErrorCode::InvalidInput, "kmeans: restarts must be positive");
	const Vector x_sq = x.rowwise().squaredNorm();
	const std::uint64_t base = rng.next_u64();
	KMeansResult best;
	best.objective = std::numeric_limits<double>::infinity();
	for (int i = 0; i < restarts; ++i) {
		Rng stream(derive_seed({base, static_cast<std::uint64_t>(i)}));
		KMeansResult res = detail::lloyd(x, x_sq, detail::kmeanspp_init(x, x_sq, k, stream), max_iter, shift_tol);
		if (res.objective < best.objective)
			best = std::move(res);
	}
	return best;
}

struct KMeansSubspaceResult {
	SubspaceEstimate estimate;
	KMeansResult clustering;
	int chosen_cluster = 0;
};

/// k-means, then the top-r eigenvectors of each cluster's second moment; keeps the basis maximizing ||U_c^T v||.
inline KMeansSubspaceResult kmeans_subspace_baseline(const Matrix& samples, Eigen::Index k, Eigen::Index r,
                                                     const Vector& v, int restarts, Rng& rng) {
	const Eigen::Index d = samples.cols();
	detail::require(r >= 1 && r <= d, ErrorCode::InvalidInput, "kmeans baseline: r must be in [1, d]");
	detail::require(v.size() == d, ErrorCode::InvalidInput, "kmeans baseline: v has wrong dimension");
	detail::require(samples.rows() >= k * (r + 1), ErrorCode::InsufficientSamples, "kmeans baseline: need n >= k(r+1)");

	KMeansSubspaceResult out;
	out.clustering = kmeans(samples, k, restarts, rng);

	std::vector<Matrix> second(static_cast<std::size_t>(k), Matrix::Zero(d, d));
	for (Eigen::Index j = 0; j < k; ++j) {
		std::vector<Eigen::Index> rows;
		for (Eigen::Index i = 0; i < samples.rows(); ++i)
			if (out.clustering.labels[static_cast<std::size_t>(i)] == j)
				rows.push_back(i);
		if (rows.empty())
			continue;
		const Matrix members = samples(rows, Eigen::all);
		second[static_cast<std::size_t>(j)].noalias() = members.transpose() * members;
	}

	double best = -1.0;
	for (Eigen::Index j = 0; j < k; ++j) {
		const Matrix basis = top_k_eig(SymMatrix(second[static_cast<std::size_t>(j)]), r).vectors;
		const double score = (basis.transpose() * v).norm();
		if (score > best) {
			best = score;
			out.estimate.U_hat = basis;
			out.chosen_cluster = static_cast<int>(j);
		}
	}
	return out;
}

} // namespace mixsearch
