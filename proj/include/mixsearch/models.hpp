#pragma once

#include <mixsearch/bow.hpp>
#include <mixsearch/error.hpp>
#include <mixsearch/random.hpp>
#include <mixsearch/spectral.hpp>

#include <cmath>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace mixsearch {

enum class ModelKind { Gmm, Lda, MixReg, Subspace };

inline std::string_view to_string(ModelKind kind) {
	switch (kind) {
	case ModelKind::Gmm: return "gmm";
	case ModelKind::Lda: return "lda";
	case ModelKind::MixReg: return "mixreg";
	case ModelKind::Subspace: return "subspace";
	}
	return "unknown";
}

inline ModelKind parse_model_kind(std::string_view s) {
	if (s == "gmm")
		return ModelKind::Gmm;
	if (s == "lda")
		return ModelKind::Lda;
	if (s == "mixreg")
		return ModelKind::MixReg;
	if (s == "subspace")
		return ModelKind::Subspace;
	throw Error(ErrorCode::InvalidInput, "unknown model tag '" + std::string(s) + "'");
}

namespace detail {

inline void check_weights(const Vector& w, const char* what) {
	require(w.size() > 0, ErrorCode::InvalidInput, what);
	require(w.allFinite() && (w.array() >= 0.0).all(), ErrorCode::InvalidInput, what);
	require(std::abs(w.sum() - 1.0) <= 1e-12, ErrorCode::InvalidInput, what);
}

inline Eigen::Index numerical_rank(const Matrix& m) {
	if (m.size() == 0)
		return 0;
	Eigen::JacobiSVD<Matrix> svd(m);
	const Vector& s = svd.singularValues();
	const double tol = 1e-10 * std::max<double>(1.0, s(0)) * static_cast<double>(std::max(m.rows(), m.cols()));
	return (s.array() > tol).count();
}

} // namespace detail

/// Spherical Gaussian mixture. `means` is d x k, one component per column.
struct GmmParams {
	Vector weights;
	Matrix means;
	Vector stddevs;

	Eigen::Index dim() const noexcept { return means.rows(); }
	Eigen::Index components() const noexcept { return means.cols(); }

	void validate() const {
		const auto k = components();
		detail::check_weights(weights, "gmm: weights must be nonnegative and sum to 1");
		detail::require(weights.size() == k && stddevs.size() == k, ErrorCode::InvalidInput,
		                "gmm: weights/stddevs length must equal component count");
		detail::require(means.allFinite(), ErrorCode::InvalidInput, "gmm: non-finite means");
		detail::require((stddevs.array() >= 0.0).all(), ErrorCode::InvalidInput, "gmm: negative stddev");
		detail::require(dim() > k, ErrorCode::InvalidInput, "gmm: requires d > k");
		detail::require(detail::numerical_rank(means) == k, ErrorCode::InvalidInput,
		                "gmm: means must be linearly independent");
	}
};

/// LDA topic model. `alpha` holds the Dirichlet parameters; `topics` is d x k with simplex columns.
struct LdaParams {
	Vector alpha;
	Matrix topics;

	Eigen::Index dim() const noexcept { return topics.rows(); }
	Eigen::Index components() const noexcept { return topics.cols(); }
	double alpha0() const { return alpha.sum(); }

	void validate() const {
		detail::require(alpha.size() == components() && alpha.size() > 0, ErrorCode::InvalidInput,
		                "lda: alpha length must equal topic count");
		detail::require(alpha.allFinite() && (alpha.array() > 0.0).all(), ErrorCode::InvalidInput,
		                "lda: Dirichlet parameters must be positive");
		detail::require(topics.allFinite() && (topics.array() >= 0.0).all(), ErrorCode::InvalidInput,
		                "lda: topic entries must be nonnegative");
		for (Eigen::Index i = 0; i < components(); ++i)
			detail::require(std::abs(topics.col(i).sum() - 1.0) <= 1e-12, ErrorCode::InvalidInput,
			                "lda: topic columns must sum to 1");
		detail::require(detail::numerical_rank(topics) == components(), ErrorCode::InvalidInput,
		                "lda: topics must be linearly independent");
	}
};

/// Mixed linear regression, y = <x, mu_i> + noise with x ~ N(0, I).
struct MixRegParams {
	Vector weights;
	Matrix regressors;
	double noise_stddev = 0.0;

	Eigen::Index dim() const noexcept { return regressors.rows(); }
	Eigen::Index components() const noexcept { return regressors.cols(); }

	void validate() const {
		detail::check_weights(weights, "mixreg: weights must be nonnegative and sum to 1");
		detail::require(weights.size() == components(), ErrorCode::InvalidInput,
		                "mixreg: weights length must equal component count");
		detail::require(regressors.allFinite(), ErrorCode::InvalidInput, "mixreg: non-finite regressors");
		detail::require(noise_stddev >= 0.0, ErrorCode::InvalidInput, "mixreg: negative noise");
		detail::require(dim() > components(), ErrorCode::InvalidInput, "mixreg: requires d > k");
		detail::require(detail::numerical_rank(regressors) == components(), ErrorCode::InvalidInput,
		                "mixreg: regressors must be linearly independent");
	}
};

/// Noisy union of subspaces; each basis is d x r with orthonormal columns.
struct SubspaceParams {
	Vector weights;
	std::vector<Matrix> bases;
	double noise_stddev = 0.0;

	Eigen::Index dim() const { return bases.empty() ? 0 : bases.front().rows(); }
	Eigen::Index components() const noexcept { return static_cast<Eigen::Index>(bases.size()); }
	Eigen::Index rank() const { return bases.empty() ? 0 : bases.front().cols(); }

	void validate() const {
		detail::check_weights(weights, "subspace: weights must be nonnegative and sum to 1");
		detail::require(weights.size() == components(), ErrorCode::InvalidInput,
		                "subspace: weights length must equal component count");
		detail::require(noise_stddev >= 0.0, ErrorCode::InvalidInput, "subspace: negative noise");
		for (const Matrix& u : bases) {
			detail::require(u.rows() == dim() && u.cols() == rank(), ErrorCode::InvalidInput,
			                "subspace: all bases must share shape d x r");
			const double dev = (u.transpose() * u - Matrix::Identity(rank(), rank())).cwiseAbs().maxCoeff();
			detail::require(dev <= 1e-10, ErrorCode::InvalidInput, "subspace: bases must be orthonormal");
		}
		detail::require(dim() > components() * rank(), ErrorCode::InvalidInput, "subspace: requires d > k*r");
	}
};

using ModelParams = std::variant<GmmParams, LdaParams, MixRegParams, SubspaceParams>;

inline ModelKind kind_of(const ModelParams& p) {
	return static_cast<ModelKind>(p.index());
}

inline Eigen::Index dim_of(const ModelParams& p) {
	return std::visit([](const auto& q) { return q.dim(); }, p);
}

inline Eigen::Index components_of(const ModelParams& p) {
	return std::visit([](const auto& q) { return q.components(); }, p);
}

inline void validate(const ModelParams& p) {
	std::visit([](const auto& q) { q.validate(); }, p);
}

/// Weights and component vectors of the mean-style models (GMM, LDA, mixreg).
struct MeanComponents {
	Vector weights;
	Matrix components;
};

inline MeanComponents mean_components(const ModelParams& p) {
	if (const auto* g = std::get_if<GmmParams>(&p))
		return {g->weights, g->means};
	if (const auto* l = std::get_if<LdaParams>(&p))
		return {l->alpha, l->topics};
	if (const auto* r = std::get_if<MixRegParams>(&p))
		return {r->weights, r->regressors};
	throw Error(ErrorCode::InvalidInput, "subspace model has no mean components");
}

/// Model-specific scalars that accompany a moment triple.
struct Nuisance {
	std::optional<double> sigma2;  // gmm, subspace
	std::optional<Vector> m_tilde; // gmm
	std::optional<double> tau2;    // mixreg
	std::optional<double> alpha0;  // lda
};

/**
 * @brief The (m, A, B) statistics, either estimated from samples or computed exactly.
 *
 * For the mean-style models A = sum_i a_i mu_i mu_i^T and B = sum_i a_i <mu_i, v> mu_i mu_i^T.
 * For the subspace model `m` is zero and unused. `v` is the side-information vector B was built with.
 */
struct MomentTriple {
	ModelKind kind = ModelKind::Gmm;
	Vector m;
	SymMatrix A;
	SymMatrix B;
	Vector v;
	Nuisance nuisance;

	Eigen::Index dim() const noexcept { return A.dim(); }
};

// ---------------------------------------------------------------------------
// Samplers

struct LabeledSamples {
	Matrix x; // n x d
	std::vector<int> labels;
};

struct RegressionSamples {
	Matrix x; // n x d
	Vector y;
	std::vector<int> labels;
};

struct LdaCorpus {
	std::vector<BowDoc> docs;
	Matrix theta; // n_docs x k
};

namespace detail {

// Inverse-CDF draw on a discrete distribution given by nonnegative weights.
inline int categorical(Rng& rng, const Vector& cumulative) {
	const double u = rng.uniform() * cumulative(cumulative.size() - 1);
	const double* begin = cumulative.data();
	const double* it = std::upper_bound(begin, begin + cumulative.size(), u);
	auto idx = static_cast<int>(it - begin);
	if (idx >= cumulative.size())
		idx = static_cast<int>(cumulative.size()) - 1;
	// Skip zero-probability entries that can only be hit by rounding.
	while (idx > 0 && cumulative(idx) == cumulative(idx - 1))
		--idx;
	return idx;
}

inline Vector cumsum(const Vector& w) {
	Vector c(w.size());
	double s = 0.0;
	for (Eigen::Index i = 0; i < w.size(); ++i) {
		s += w(i);
		c(i) = s;
	}
	return c;
}

inline Vector dirichlet(Rng& rng, const Vector& alpha) {
	Vector g(alpha.size());
	for (Eigen::Index i = 0; i < alpha.size(); ++i)
		g(i) = rng.gamma(alpha(i));
	double s = g.sum();
	if (s <= 0.0) {
		// Every gamma draw underflowed (tiny alpha); put all mass on a weighted pick.
		g.setZero();
		g(categorical(rng, cumsum(alpha))) = 1.0;
		return g;
	}
	return g / s;
}

inline Vector normal_vector(Rng& rng, Eigen::Index d) {
	Vector z(d);
	for (Eigen::Index i = 0; i < d; ++i)
		z(i) = rng.normal();
	return z;
}

} // namespace detail

inline LabeledSamples sample_gmm(const GmmParams& p, Eigen::Index n, Rng& rng) {
	detail::require(n >= 1, ErrorCode::InvalidInput, "sample_gmm: n must be >= 1");
	const Vector cum = detail::cumsum(p.weights);
	LabeledSamples out{Matrix(n, p.dim()), std::vector<int>(static_cast<std::size_t>(n))};
	for (Eigen::Index j = 0; j < n; ++j) {
		const int c = detail::categorical(rng, cum);
		out.labels[static_cast<std::size_t>(j)] = c;
		out.x.row(j) = (p.means.col(c) + p.stddevs(c) * detail::normal_vector(rng, p.dim())).transpose();
	}
	return out;
}

/// Documents have Poisson(mean_len) length, redrawn until nonzero.
inline LdaCorpus sample_lda(const LdaParams& p, Eigen::Index n_docs, double mean_len, Rng& rng) {
	detail::require(n_docs >= 1, ErrorCode::InvalidInput, "sample_lda: n_docs must be >= 1");
	detail::require(mean_len > 0.0, ErrorCode::InvalidInput, "sample_lda: mean_len must be positive");
	LdaCorpus out;
	out.docs.reserve(static_cast<std::size_t>(n_docs));
	out.theta.resize(n_docs, p.components());
	std::vector<std::int64_t> counts(static_cast<std::size_t>(p.dim()));
	for (Eigen::Index j = 0; j < n_docs; ++j) {
		long len = 0;
		while (len < 1)
			len = rng.poisson(mean_len);
		const Vector theta = detail::dirichlet(rng, p.alpha);
		out.theta.row(j) = theta.transpose();
		const Vector cum = detail::cumsum(p.topics * theta);
		std::fill(counts.begin(), counts.end(), 0);
		for (long w = 0; w < len; ++w)
			++counts[static_cast<std::size_t>(detail::categorical(rng, cum))];
		std::vector<BowDoc::Entry> entries;
		for (std::size_t w = 0; w < counts.size(); ++w)
			if (counts[w] > 0)
				entries.emplace_back(static_cast<Eigen::Index>(w), counts[w]);
		out.docs.emplace_back(std::move(entries));
	}
	return out;
}

inline RegressionSamples sample_mixreg(const MixRegParams& p, Eigen::Index n, Rng& rng) {
	detail::require(n >= 1, ErrorCode::InvalidInput, "sample_mixreg: n must be >= 1");
	const Vector cum = detail::cumsum(p.weights);
	RegressionSamples out{Matrix(n, p.dim()), Vector(n), std::vector<int>(static_cast<std::size_t>(n))};
	for (Eigen::Index j = 0; j < n; ++j) {
		const int c = detail::categorical(rng, cum);
		out.labels[static_cast<std::size_t>(j)] = c;
		const Vector x = detail::normal_vector(rng, p.dim());
		out.x.row(j) = x.transpose();
		out.y(j) = x.dot(p.regressors.col(c)) + p.noise_stddev * rng.normal();
	}
	return out;
}

/// x = U_i z + noise with z ~ N(0, I_r), which has the law of U_i U_i^T y for y ~ N(0, I_d).
inline LabeledSamples sample_subspace(const SubspaceParams& p, Eigen::Index n, Rng& rng) {
	detail::require(n >= 1, ErrorCode::InvalidInput, "sample_subspace: n must be >= 1");
	const Vector cum = detail::cumsum(p.weights);
	LabeledSamples out{Matrix(n, p.dim()), std::vector<int>(static_cast<std::size_t>(n))};
	for (Eigen::Index j = 0; j < n; ++j) {
		const int c = detail::categorical(rng, cum);
		out.labels[static_cast<std::size_t>(j)] = c;
		const Vector z = detail::normal_vector(rng, p.rank());
		out.x.row(j) = (p.bases[static_cast<std::size_t>(c)] * z
		                + p.noise_stddev * detail::normal_vector(rng, p.dim()))
		                   .transpose();
	}
	return out;
}

// ---------------------------------------------------------------------------
// Exact (population) moments

namespace detail {

inline MomentTriple mean_style_moments(ModelKind kind, const Vector& w, const Matrix& mu, const Vector& v) {
	require(v.size() == mu.rows(), ErrorCode::InvalidInput, "exact_moments: v has wrong dimension");
	require(v.allFinite(), ErrorCode::InvalidInput, "exact_moments: v must be finite");
	const Vector proj = mu.transpose() * v;
	MomentTriple t;
	t.kind = kind;
	t.m = mu * w;
	t.A = SymMatrix(mu * w.asDiagonal() * mu.transpose());
	t.B = SymMatrix(mu * (w.array() * proj.array()).matrix().asDiagonal() * mu.transpose());
	t.v = v;
	return t;
}

} // namespace detail

inline MomentTriple exact_moments(const GmmParams& p, const Vector& v) {
	MomentTriple t = detail::mean_style_moments(ModelKind::Gmm, p.weights, p.means, v);
	const Vector s2 = p.stddevs.array().square();
	t.nuisance.sigma2 = p.weights.dot(s2);
	t.nuisance.m_tilde = p.means * (p.weights.array() * s2.array()).matrix();
	return t;
}

inline MomentTriple exact_moments(const LdaParams& p, const Vector& v) {
	MomentTriple t = detail::mean_style_moments(ModelKind::Lda, p.alpha, p.topics, v);
	t.nuisance.alpha0 = p.alpha0();
	return t;
}

inline MomentTriple exact_moments(const MixRegParams& p, const Vector& v) {
	MomentTriple t = detail::mean_style_moments(ModelKind::MixReg, p.weights, p.regressors, v);
	const Vector norms = p.regressors.colwise().squaredNorm().transpose();
	t.nuisance.tau2 = p.weights.dot((norms.array() + p.noise_stddev * p.noise_stddev).matrix());
	return t;
}

/// A = sum_i a_i P_i and B = sum_i a_i ||U_i^T v||^2 P_i + 2 sum_i a_i P_i v v^T P_i, with P_i = U_i U_i^T.
inline MomentTriple exact_moments(const SubspaceParams& p, const Vector& v) {
	const Eigen::Index d = p.dim();
	detail::require(v.size() == d, ErrorCode::InvalidInput, "exact_moments: v has wrong dimension");
	detail::require(v.allFinite(), ErrorCode::InvalidInput, "exact_moments: v must be finite");
	Matrix a = Matrix::Zero(d, d);
	Matrix b = Matrix::Zero(d, d);
	for (Eigen::Index i = 0; i < p.components(); ++i) {
		const Matrix& u = p.bases[static_cast<std::size_t>(i)];
		const Vector coords = u.transpose() * v;
		const Vector pv = u * coords;
		const Matrix proj = u * u.transpose();
		a += p.weights(i) * proj;
		b += p.weights(i) * (coords.squaredNorm() * proj + 2.0 * pv * pv.transpose());
	}
	MomentTriple t;
	t.kind = ModelKind::Subspace;
	t.m = Vector::Zero(d);
	t.A = SymMatrix(a);
	t.B = SymMatrix(b);
	t.v = v;
	t.nuisance.sigma2 = p.noise_stddev * p.noise_stddev;
	return t;
}

inline MomentTriple exact_moments(const ModelParams& p, const Vector& v) {
	return std::visit([&](const auto& q) { return exact_moments(q, v); }, p);
}

// ---------------------------------------------------------------------------
// Random parameter generators for synthetic runs

inline Vector random_weights(Eigen::Index k, double lo, double hi, Rng& rng) {
	detail::require(k >= 1 && lo > 0.0 && hi >= lo, ErrorCode::InvalidInput, "random_weights: bad range");
	Vector w(k);
	for (Eigen::Index i = 0; i < k; ++i)
		w(i) = rng.uniform(lo, hi);
	w /= w.sum();
	return w;
}

inline Vector random_unit_vector(Eigen::Index d, Rng& rng) {
	Vector z = detail::normal_vector(rng, d);
	return z / z.norm();
}

/// Means uniform on the sphere of the given radius.
inline GmmParams random_gmm(Eigen::Index k, Eigen::Index d, double radius, const Vector& weights,
                            double stddev, Rng& rng) {
	GmmParams p{weights, Matrix(d, k), Vector::Constant(k, stddev)};
	for (Eigen::Index i = 0; i < k; ++i)
		p.means.col(i) = radius * random_unit_vector(d, rng);
	p.validate();
	return p;
}

/// Topics drawn from a symmetric Dirichlet(topic_concentration) over the vocabulary.
inline LdaParams random_lda(Eigen::Index d, const Vector& alpha, double topic_concentration, Rng& rng) {
	LdaParams p{alpha, Matrix(d, alpha.size())};
	const Vector beta = Vector::Constant(d, topic_concentration);
	for (Eigen::Index i = 0; i < alpha.size(); ++i) {
		Vector col = detail::dirichlet(rng, beta);
		col /= col.sum();
		p.topics.col(i) = col;
	}
	p.validate();
	return p;
}

inline MixRegParams random_mixreg(Eigen::Index k, Eigen::Index d, double radius, const Vector& weights,
                                  double noise, Rng& rng) {
	MixRegParams p{weights, Matrix(d, k), noise};
	for (Eigen::Index i = 0; i < k; ++i)
		p.regressors.col(i) = radius * random_unit_vector(d, rng);
	p.validate();
	return p;
}

/// Bases from orthonormalized i.i.d. Gaussian d x r matrices.
inline SubspaceParams random_subspace(Eigen::Index k, Eigen::Index d, Eigen::Index r, const Vector& weights,
                                      double noise, Rng& rng) {
	SubspaceParams p{weights, {}, noise};
	for (Eigen::Index i = 0; i < k; ++i) {
		Matrix g(d, r);
		for (Eigen::Index c = 0; c < r; ++c)
			g.col(c) = detail::normal_vector(rng, d);
		p.bases.push_back(orthonormalize(g));
	}
	p.validate();
	return p;
}

} // namespace mixsearch
