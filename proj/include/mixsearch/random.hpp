#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace mixsearch {

/// SplitMix64 finalizer. Used for every seed derivation in the project.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
	z += 0x9E3779B97F4A7C15ULL;
	z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
	z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
	return z ^ (z >> 31);
}

/// Order-sensitive fold of mix64 over a list of words.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) noexcept {
	std::uint64_t h = 0x6A09E667F3BCC909ULL;
	for (std::uint64_t w : words)
		h = mix64(h ^ mix64(w));
	return h;
}

/**
 * @brief Seeded random stream.
 *
 * Uniforms take the top 53 bits of a 64-bit Mersenne Twister draw, and normals use
 * the Box-Muller transform with both outputs consumed in order. Both are fixed here
 * rather than delegated to std::uniform_real_distribution / std::normal_distribution,
 * whose algorithms are unspecified. Gamma, Poisson and discrete draws use the standard
 * library distributions on the same engine, so they reproduce within one build.
 */
class Rng {
public:
	explicit Rng(std::uint64_t seed) : engine_(seed) {}

	/// Uniform on [0, 1).
	double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

	double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

	/// Standard normal via Box-Muller.
	double normal() {
		if (has_spare_) {
			has_spare_ = false;
			return spare_;
		}
		double u1 = uniform();
		while (u1 <= 0.0)
			u1 = uniform();
		const double u2 = uniform();
		const double radius = std::sqrt(-2.0 * std::log(u1));
		const double angle = 2.0 * std::numbers::pi * u2;
		spare_ = radius * std::sin(angle);
		has_spare_ = true;
		return radius * std::cos(angle);
	}

	/// Index in [0, n).
	std::size_t index(std::size_t n) {
		return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
	}

	double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

	long poisson(double mean) { return std::poisson_distribution<long>(mean)(engine_); }

	std::uint64_t next_u64() { return engine_(); }

	std::mt19937_64& engine() noexcept { return engine_; }

private:
	std::mt19937_64 engine_;
	double spare_ = 0.0;
	bool has_spare_ = false;
};

} // namespace mixsearch
