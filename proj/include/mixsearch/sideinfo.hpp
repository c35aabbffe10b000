#pragma once

#include <mixsearch/bow.hpp>
#include <mixsearch/error.hpp>
#include <mixsearch/models.hpp>
#include <mixsearch/search.hpp>

#include <limits>
#include <span>

namespace mixsearch {

/// Mean of labeled samples (rows) from the target component.
inline SideInfo gmm_v_from_labeled(const Matrix& labeled) {
	detail::require(labeled.rows() > 0, ErrorCode::InsufficientSamples, "gmm_v_from_labeled: no samples");
	return SideInfo(labeled.colwise().mean().transpose());
}

/// e_word: a word more likely under the target topic than under any other.
inline SideInfo lda_v_from_word(Eigen::Index word, Eigen::Index vocab) {
	detail::require(vocab > 0 && word >= 0 && word < vocab, ErrorCode::InvalidInput,
	                "lda_v_from_word: word index outside vocabulary");
	return SideInfo(Vector::Unit(vocab, word));
}

/// Pooled word frequencies of documents mostly about the target topic.
inline SideInfo lda_v_from_docs(std::span<const BowDoc> docs, Eigen::Index vocab) {
	detail::require(!docs.empty(), ErrorCode::InsufficientSamples, "lda_v_from_docs: no documents");
	Vector counts = Vector::Zero(vocab);
	double total = 0.0;
	for (const BowDoc& doc : docs) {
		for (const auto& [w, c] : doc.entries()) {
			detail::require(w < vocab, ErrorCode::InvalidInput, "lda_v_from_docs: word index outside vocabulary");
			counts(w) += static_cast<double>(c);
		}
		total += static_cast<double>(doc.length());
	}
	detail::require(total > 0.0, ErrorCode::InsufficientSamples, "lda_v_from_docs: documents are empty");
	return SideInfo(counts / total);
}

/// Mean of y x over labeled regression pairs.
inline SideInfo mixreg_v_from_labeled(const Matrix& x, const Vector& y) {
	detail::require(x.rows() > 0, ErrorCode::InsufficientSamples, "mixreg_v_from_labeled: no pairs");
	detail::require(x.rows() == y.size(), ErrorCode::InvalidInput, "mixreg_v_from_labeled: x and y differ in length");
	return SideInfo(x.transpose() * y / static_cast<double>(x.rows()));
}

/// A single sample from the target subspace.
inline SideInfo subspace_v_from_sample(const Vector& x, bool normalize = false) {
	detail::require(x.allFinite() && x.norm() > 0.0, ErrorCode::InvalidInput, "subspace_v_from_sample: zero sample");
	return SideInfo(normalize ? Vector(x.normalized()) : x);
}

/**
 * @brief Informativeness margin of v for component `target`.
 *
 * Mean-style models: min over competitors with <mu_i, v> > 0 of (<mu_t, v> - <mu_i, v>) / <mu_i, v>;
 * +inf when no competitor is positive and <mu_t, v> > 0, -inf when no competitor is positive and
 * <mu_t, v> <= 0. Subspace: min over i != t of 1/3 - ||U_i^T v||^2 / ||U_t^T v||^2.
 */
inline double delta_margin(const ModelParams& p, const SideInfo& side, Eigen::Index target = 0) {
	const Vector& v = side.vector();
	detail::require(v.size() == dim_of(p), ErrorCode::InvalidInput, "delta_margin: v has wrong dimension");
	const Eigen::Index k = components_of(p);
	detail::require(target >= 0 && target < k, ErrorCode::InvalidInput, "delta_margin: target out of range");
	constexpr double inf = std::numeric_limits<double>::infinity();

	if (const auto* s = std::get_if<SubspaceParams>(&p)) {
		const double own = (s->bases[static_cast<std::size_t>(target)].transpose() * v).squaredNorm();
		if (!(own > 0.0))
			return -inf;
		double margin = inf;
		for (Eigen::Index i = 0; i < k; ++i)
			if (i != target)
				margin = std::min(margin, 1.0 / 3.0 - (s->bases[static_cast<std::size_t>(i)].transpose() * v).squaredNorm() / own);
		return margin;
	}

	const Vector proj = mean_components(p).components.transpose() * v;
	const double own = proj(target);
	double margin = inf;
	bool any_positive = false;
	for (Eigen::Index i = 0; i < k; ++i) {
		if (i == target || !(proj(i) > 0.0))
			continue;
		any_positive = true;
		margin = std::min(margin, (own - proj(i)) / proj(i));
	}
	if (!any_positive && !(own > 0.0))
		return -inf;
	return margin;
}

} // namespace mixsearch
