#pragma once

#include <mixsearch/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace mixsearch {

/// Bag-of-words document: sparse (word, count) entries, sorted by word, counts positive.
class BowDoc {
public:
	using Entry = std::pair<Eigen::Index, std::int64_t>;

	BowDoc() = default;

	explicit BowDoc(std::vector<Entry> entries) : entries_(std::move(entries)) {
		std::sort(entries_.begin(), entries_.end());
		std::vector<Entry> merged;
		for (const auto& [w, c] : entries_) {
			detail::require(w >= 0, ErrorCode::InvalidInput, "BowDoc: negative word index");
			detail::require(c >= 0, ErrorCode::InvalidInput, "BowDoc: negative count");
			if (c == 0)
				continue;
			if (!merged.empty() && merged.back().first == w)
				merged.back().second += c;
			else
				merged.emplace_back(w, c);
		}
		entries_ = std::move(merged);
		for (const auto& e : entries_)
			length_ += e.second;
	}

	static BowDoc from_dense(const Eigen::VectorXd& counts) {
		std::vector<Entry> entries;
		for (Eigen::Index i = 0; i < counts.size(); ++i)
			if (counts(i) != 0.0)
				entries.emplace_back(i, static_cast<std::int64_t>(counts(i)));
		return BowDoc(std::move(entries));
	}

	const std::vector<Entry>& entries() const noexcept { return entries_; }
	std::int64_t length() const noexcept { return length_; }

	Eigen::VectorXd dense(Eigen::Index vocab) const {
		Eigen::VectorXd c = Eigen::VectorXd::Zero(vocab);
		for (const auto& [w, n] : entries_) {
			detail::require(w < vocab, ErrorCode::InvalidInput, "BowDoc: word index outside vocabulary");
			c(w) = static_cast<double>(n);
		}
		return c;
	}

private:
	std::vector<Entry> entries_;
	std::int64_t length_ = 0;
};

} // namespace mixsearch
