#pragma once

#include <mixsearch/error.hpp>
#include <mixsearch/io.hpp>
#include <mixsearch/models.hpp>
#include <mixsearch/moments.hpp>
#include <mixsearch/random.hpp>
#include <mixsearch/search.hpp>
#include <mixsearch/sideinfo.hpp>
#include <mixsearch/subspace.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace mixsearch {

/**
 * @brief Side-information vector mixing the target direction with the other components' span.
 *
 * {v2..vk} is an orthonormal basis of span{mu_2..mu_k} and v1 the normalized part of mu_1 orthogonal
 * to it; v = sqrt(g) v1 + sqrt((1-g)/(k-1)) sum_{i>=2} v_i.
 */
inline SideInfo build_gamma_v(const ModelParams& p, double gamma) {
	detail::require(gamma > 0.0 && gamma <= 1.0, ErrorCode::InvalidInput, "build_gamma_v: gamma must be in (0, 1]");
	const Matrix mu = mean_components(p).components;
	const Eigen::Index k = mu.cols();
	if (k == 1)
		return SideInfo(mu.col(0).normalized());
	const Matrix rest = orthonormalize(mu.rightCols(k - 1));
	const Vector x1 = project_off(rest, mu.col(0));
	detail::require(x1.norm() > 1e-12 * mu.col(0).norm(), ErrorCode::DegenerateMean,
	                "build_gamma_v: mu_1 lies in the span of the other components");
	const double share = std::sqrt((1.0 - gamma) / static_cast<double>(k - 1));
	return SideInfo(std::sqrt(gamma) * x1.normalized() + share * rest.rowwise().sum());
}

// ---------------------------------------------------------------------------
// Configuration

enum class AlgorithmKind { Whitening, Cancellation, Subspace, KMeansBaseline };

struct AlgorithmSpec {
	AlgorithmKind kind = AlgorithmKind::Whitening;
	std::string label;
	CancellationOptions cancellation;
	int restarts = 5;
};

enum class SideInfoKind { Labeled, Explicit, Gamma, Word, Oracle };

struct SideInfoSpec {
	SideInfoKind kind = SideInfoKind::Labeled;
	Eigen::Index labeled_count = 50;
	Vector explicit_v;
	std::vector<double> gammas;
	/// Word index for SideInfoKind::Word; negative picks the word with the largest topic-1 advantage.
	Eigen::Index word = -1;
};

/// Synthetic parameter generator.
struct GeneratorSpec {
	Eigen::Index k = 5;
	Eigen::Index d = 50;
	Eigen::Index r = 3;
	double weight_lo = 0.1;
	double weight_hi = 0.3;
	/// Fixes the target weight (rare-component runs); others are rescaled to fill the remainder.
	std::optional<double> target_weight;
	double radius = 1.0;
	double alpha0 = 1.0;
	double topic_concentration = 0.1;
};

struct ExperimentConfig {
	ModelKind model = ModelKind::Gmm;
	std::optional<ModelParams> params;
	GeneratorSpec generator;
	/// Noise levels swept for generated gmm/mixreg/subspace instances.
	std::vector<double> sigmas{0.1};
	std::vector<Eigen::Index> n_grid;
	std::size_t trials = 1;
	std::uint64_t master_seed = 0;
	std::vector<AlgorithmSpec> algorithms;
	SideInfoSpec side_info;
	bool exact_moments = false;
	double mean_doc_length = 20.0;
	bool record_timings = false;
	std::size_t threads = 1;
	std::string output = "results";
	/// Canonical JSON the config was parsed from.
	io::json source;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
	std::uint64_t h = 0xCBF29CE484222325ULL;
	for (unsigned char c : s) {
		h ^= c;
		h *= 0x100000001B3ULL;
	}
	return h;
}

inline std::string hex64(std::uint64_t x) {
	static constexpr char digits[] = "0123456789abcdef";
	std::string s(16, '0');
	for (int i = 15; i >= 0; --i, x >>= 4)
		s[static_cast<std::size_t>(i)] = digits[x & 0xF];
	return s;
}

inline AlgorithmKind parse_algorithm_kind(const std::string& s) {
	if (s == "whitening")
		return AlgorithmKind::Whitening;
	if (s == "cancellation")
		return AlgorithmKind::Cancellation;
	if (s == "subspace")
		return AlgorithmKind::Subspace;
	if (s == "kmeans_baseline" || s == "kmeans")
		return AlgorithmKind::KMeansBaseline;
	throw Error(ErrorCode::InvalidInput, "unknown algorithm \"" + s + "\"");
}

template <class T>
T get_or(const io::json& j, const char* key, T fallback) {
	if (!j.contains(key))
		return fallback;
	try {
		return j.at(key).get<T>();
	} catch (const io::json::exception&) {
		throw Error(ErrorCode::InvalidInput, std::string("config field \"") + key + "\" has the wrong type");
	}
}

inline AlgorithmSpec parse_algorithm(const io::json& j) {
	AlgorithmSpec a;
	if (j.is_string()) {
		a.kind = parse_algorithm_kind(j.get<std::string>());
		a.label = j.get<std::string>();
		a.cancellation.use_av_variant = true;
		return a;
	}
	if (!j.is_object())
		throw Error(ErrorCode::InvalidInput, "algorithm entries must be strings or objects");
	const std::string name = get_or<std::string>(j, "name", "");
	a.kind = parse_algorithm_kind(name);
	a.label = get_or<std::string>(j, "label", name);
	a.restarts = get_or<int>(j, "restarts", 5);
	require(a.restarts >= 1, ErrorCode::InvalidInput, "restarts must be positive");
	CancellationOptions& c = a.cancellation;
	const std::string method = get_or<std::string>(j, "lambda_method", "bisection");
	if (method == "bisection")
		c.lambda_method = LambdaMethod::Bisection;
	else if (method == "nuclear_norm")
		c.lambda_method = LambdaMethod::NuclearNorm;
	else
		throw Error(ErrorCode::InvalidInput, "lambda_method must be bisection or nuclear_norm");
	c.use_av_variant = get_or<bool>(j, "use_av_variant", true);
	if (j.contains("psd_tol"))
		c.psd_tol = get_or<double>(j, "psd_tol", 0.0);
	c.lambda_cap = get_or<double>(j, "lambda_cap", c.lambda_cap);
	if (j.contains("nuclear_weight"))
		c.nuclear_weight = get_or<double>(j, "nuclear_weight", 1.0);
	c.nuclear_slack = get_or<double>(j, "nuclear_slack", c.nuclear_slack);
	require(!c.psd_tol || *c.psd_tol >= 0.0, ErrorCode::InvalidInput, "psd_tol must be nonnegative");
	require(c.lambda_cap > 0.0, ErrorCode::InvalidInput, "lambda_cap must be positive");
	return a;
}

inline SideInfoSpec parse_side_info(const io::json& j) {
	SideInfoSpec s;
	if (!j.is_object())
		throw Error(ErrorCode::InvalidInput, "side_info must be an object");
	const std::string type = get_or<std::string>(j, "type", "labeled");
	if (type == "labeled") {
		s.kind = SideInfoKind::Labeled;
		s.labeled_count = get_or<Eigen::Index>(j, "count", s.labeled_count);
		require(s.labeled_count >= 1, ErrorCode::InvalidInput, "side_info.count must be positive");
	} else if (type == "explicit") {
		s.kind = SideInfoKind::Explicit;
		s.explicit_v = io::vector_from_json(io::field(j, "v"), "side_info.v");
	} else if (type == "gamma") {
		s.kind = SideInfoKind::Gamma;
		s.gammas = get_or<std::vector<double>>(j, "gamma", {});
		require(!s.gammas.empty(), ErrorCode::InvalidInput, "side_info.gamma must be a nonempty list");
		for (double g : s.gammas)
			require(g > 0.0 && g <= 1.0, ErrorCode::InvalidInput, "side_info.gamma values must be in (0, 1]");
	} else if (type == "word") {
		s.kind = SideInfoKind::Word;
		s.word = get_or<Eigen::Index>(j, "word", -1);
	} else if (type == "oracle") {
		s.kind = SideInfoKind::Oracle;
	} else {
		throw Error(ErrorCode::InvalidInput, "side_info.type must be labeled, explicit, gamma, word or oracle");
	}
	return s;
}

} // namespace detail

/**
 * @brief Parses and validates an experiment config.
 *
 * Keys: model, params | params_file | generator, sigma (list), n_grid, trials, master_seed, algorithms,
 * side_info, moments ("empirical" | "exact"), mean_doc_length, record_timings, threads, output.
 */
inline ExperimentConfig parse_experiment_config(const io::json& j) {
	using detail::get_or;
	using detail::require;
	require(j.is_object(), ErrorCode::InvalidInput, "config must be a JSON object");
	ExperimentConfig c;
	c.source = j;
	c.model = parse_model_kind(get_or<std::string>(j, "model", ""));

	if (j.contains("params")) {
		c.params = io::params_from_json(j.at("params"));
	} else if (j.contains("params_file")) {
		c.params = io::params_from_json(io::read_json_file(get_or<std::string>(j, "params_file", "")));
	}
	if (c.params)
		require(kind_of(*c.params) == c.model, ErrorCode::InvalidInput, "params model tag does not match config model");

	if (j.contains("generator")) {
		const io::json& g = j.at("generator");
		GeneratorSpec& s = c.generator;
		s.k = get_or<Eigen::Index>(g, "k", s.k);
		s.d = get_or<Eigen::Index>(g, "d", s.d);
		s.r = get_or<Eigen::Index>(g, "r", s.r);
		if (g.contains("alpha_range")) {
			const auto range = get_or<std::vector<double>>(g, "alpha_range", {});
			require(range.size() == 2, ErrorCode::InvalidInput, "generator.alpha_range must have two entries");
			s.weight_lo = range[0];
			s.weight_hi = range[1];
		}
		if (g.contains("target_weight"))
			s.target_weight = get_or<double>(g, "target_weight", 0.0);
		s.radius = get_or<double>(g, "radius", s.radius);
		s.alpha0 = get_or<double>(g, "alpha0", s.alpha0);
		s.topic_concentration = get_or<double>(g, "topic_concentration", s.topic_concentration);
		require(s.k >= 1 && s.d >= 2 && s.r >= 1, ErrorCode::InvalidInput, "generator: k, d, r must be positive");
		require(s.weight_lo > 0.0 && s.weight_hi >= s.weight_lo, ErrorCode::InvalidInput, "generator: bad alpha_range");
		require(!s.target_weight || (*s.target_weight > 0.0 && *s.target_weight < 1.0), ErrorCode::InvalidInput,
		        "generator.target_weight must be in (0, 1)");
		require(s.radius > 0.0 && s.alpha0 > 0.0 && s.topic_concentration > 0.0, ErrorCode::InvalidInput,
		        "generator: radius, alpha0, topic_concentration must be positive");
		if (g.contains("sigma")) {
			const io::json& sg = g.at("sigma");
			c.sigmas = sg.is_array() ? get_or<std::vector<double>>(g, "sigma", {}) : std::vector<double>{sg.get<double>()};
		}
		for (double s2 : c.sigmas)
			require(s2 >= 0.0, ErrorCode::InvalidInput, "generator.sigma values must be nonnegative");
		require(!c.sigmas.empty(), ErrorCode::InvalidInput, "generator.sigma must be nonempty");
	}
	require(c.params || j.contains("generator"), ErrorCode::InvalidInput,
	        "config needs one of params, params_file, generator");
	if (c.params) {
		const ModelParams& p = *c.params;
		if (const auto* g = std::get_if<GmmParams>(&p))
			c.sigmas = {g->stddevs.maxCoeff()};
		else if (const auto* m = std::get_if<MixRegParams>(&p))
			c.sigmas = {m->noise_stddev};
		else if (const auto* s = std::get_if<SubspaceParams>(&p))
			c.sigmas = {s->noise_stddev};
		else
			c.sigmas = {0.0};
	} else if (c.model == ModelKind::Lda) {
		c.sigmas = {0.0};
	}

	c.n_grid = get_or<std::vector<Eigen::Index>>(j, "n_grid", {});
	require(!c.n_grid.empty(), ErrorCode::InvalidInput, "n_grid must be a nonempty list");
	for (Eigen::Index n : c.n_grid)
		require(n >= 1, ErrorCode::InvalidInput, "n_grid entries must be positive");
	const auto trials = get_or<long long>(j, "trials", 1);
	require(trials >= 1, ErrorCode::InvalidInput, "trials must be >= 1");
	c.trials = static_cast<std::size_t>(trials);
	c.master_seed = get_or<std::uint64_t>(j, "master_seed", 0);

	require(j.contains("algorithms") && j.at("algorithms").is_array() && !j.at("algorithms").empty(),
	        ErrorCode::InvalidInput, "algorithms must be a nonempty list");
	for (const io::json& a : j.at("algorithms"))
		c.algorithms.push_back(detail::parse_algorithm(a));
	for (std::size_t i = 0; i < c.algorithms.size(); ++i)
		for (std::size_t k = 0; k < i; ++k)
			require(c.algorithms[i].label != c.algorithms[k].label, ErrorCode::InvalidInput,
			        "algorithm labels must be distinct");
	for (const AlgorithmSpec& a : c.algorithms) {
		const bool subspace_algo = a.kind == AlgorithmKind::Subspace || a.kind == AlgorithmKind::KMeansBaseline;
		require(subspace_algo == (c.model == ModelKind::Subspace), ErrorCode::InvalidInput,
		        "subspace and kmeans_baseline apply to the subspace model only; whitening and cancellation to the others");
	}

	if (j.contains("side_info"))
		c.side_info = detail::parse_side_info(j.at("side_info"));
	require(c.side_info.kind != SideInfoKind::Word || c.model == ModelKind::Lda, ErrorCode::InvalidInput,
	        "word side information applies to lda only");
	require(c.side_info.kind != SideInfoKind::Gamma || c.model != ModelKind::Subspace, ErrorCode::InvalidInput,
	        "gamma side information applies to mean-style models only");

	const std::string moments = get_or<std::string>(j, "moments", "empirical");
	require(moments == "empirical" || moments == "exact", ErrorCode::InvalidInput, "moments must be empirical or exact");
	c.exact_moments = moments == "exact";
	for (const AlgorithmSpec& a : c.algorithms)
		require(!(c.exact_moments && a.kind == AlgorithmKind::KMeansBaseline), ErrorCode::InvalidInput,
		        "kmeans_baseline needs samples and cannot run on exact moments");
	c.mean_doc_length = get_or<double>(j, "mean_doc_length", c.mean_doc_length);
	require(c.mean_doc_length > 0.0, ErrorCode::InvalidInput, "mean_doc_length must be positive");
	c.record_timings = get_or<bool>(j, "record_timings", false);
	const auto threads = get_or<long long>(j, "threads", 1);
	require(threads >= 1, ErrorCode::InvalidInput, "threads must be >= 1");
	c.threads = static_cast<std::size_t>(threads);
	c.output = get_or<std::string>(j, "output", c.output);
	return c;
}

/// Hash of the result-determining part of the config; `threads` and `output` do not change records.
inline std::string config_hash(const ExperimentConfig& c) {
	io::json j = c.source;
	if (j.is_object()) {
		j.erase("threads");
		j.erase("output");
	}
	return detail::hex64(detail::fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------
// Records

struct ExperimentRecord {
	std::string config_hash;
	std::size_t sigma_index = 0;
	double sigma = 0.0;
	std::size_t gamma_index = 0;
	std::optional<double> gamma;
	std::size_t trial = 0;
	Eigen::Index n = 0;
	std::uint64_t seed = 0;
	std::string algorithm;
	bool ok = true;
	std::string error_code;
	std::string message;
	/// ||mu_hat - mu_1|| for mean-style models, projector error for subspace ones.
	double error = 0.0;
	std::optional<double> alpha_error;
	double delta_margin = 0.0;
	std::optional<double> lambda_star;
	std::optional<double> spectral_gap;
	double a_error = 0.0;
	double b_error = 0.0;
	bool ambiguous = false;
	std::optional<double> wall_ms;
};

namespace detail {

/// Non-finite values are written as strings since JSON has no literal for them.
inline io::json json_number(double x) {
	if (std::isfinite(x))
		return x;
	if (std::isnan(x))
		return "nan";
	return x > 0 ? "inf" : "-inf";
}

} // namespace detail

inline io::json to_json(const ExperimentRecord& r) {
	using detail::json_number;
	io::json j;
	j["config_hash"] = r.config_hash;
	j["sigma"] = r.sigma;
	if (r.gamma)
		j["gamma"] = *r.gamma;
	j["trial"] = r.trial;
	j["n"] = r.n;
	j["seed"] = r.seed;
	j["algorithm"] = r.algorithm;
	j["status"] = r.ok ? "ok" : "error";
	j["delta_margin"] = json_number(r.delta_margin);
	if (r.ok) {
		j["error"] = json_number(r.error);
		if (r.alpha_error)
			j["alpha_error"] = json_number(*r.alpha_error);
		if (r.lambda_star)
			j["lambda_star"] = json_number(*r.lambda_star);
		if (r.spectral_gap)
			j["spectral_gap"] = json_number(*r.spectral_gap);
		j["a_error"] = json_number(r.a_error);
		j["b_error"] = json_number(r.b_error);
		j["ambiguous"] = r.ambiguous;
	} else {
		j["error_code"] = r.error_code;
		j["message"] = r.message;
	}
	if (r.wall_ms)
		j["wall_ms"] = *r.wall_ms;
	return j;
}

struct ExperimentResult {
	std::vector<ExperimentRecord> records;
};

// ---------------------------------------------------------------------------
// Data for one cell

/// Samples of any model: x rows (gmm, mixreg, subspace), y (mixreg) or documents (lda).
struct SampleSet {
	Matrix x;
	Vector y;
	std::vector<BowDoc> docs;
	Eigen::Index vocab = 0;
	std::vector<int> labels;
};

inline SampleSet draw_samples(const ModelParams& p, Eigen::Index n, double mean_doc_length, Rng& rng) {
	SampleSet s;
	std::visit(
	    [&](const auto& q) {
		    using T = std::decay_t<decltype(q)>;
		    if constexpr (std::is_same_v<T, GmmParams>) {
			    auto out = sample_gmm(q, n, rng);
			    s.x = std::move(out.x);
			    s.labels = std::move(out.labels);
		    } else if constexpr (std::is_same_v<T, LdaParams>) {
			    auto out = sample_lda(q, n, mean_doc_length, rng);
			    s.docs = std::move(out.docs);
			    s.vocab = q.dim();
		    } else if constexpr (std::is_same_v<T, MixRegParams>) {
			    auto out = sample_mixreg(q, n, rng);
			    s.x = std::move(out.x);
			    s.y = std::move(out.y);
			    s.labels = std::move(out.labels);
		    } else {
			    auto out = sample_subspace(q, n, rng);
			    s.x = std::move(out.x);
			    s.labels = std::move(out.labels);
		    }
	    },
	    p);
	return s;
}

/**
 * @brief Empirical (m, A, B) for the model's estimator.
 *
 * `k` and `r` are the component count and subspace rank; `alpha0` is required for lda.
 */
inline MomentTriple estimate_moments(ModelKind kind, const SampleSet& s, Eigen::Index k, Eigen::Index r,
                                     const Vector& v, std::optional<double> alpha0 = std::nullopt,
                                     std::optional<double> known_sigma2 = std::nullopt) {
	switch (kind) {
	case ModelKind::Gmm:
		return estimate_gmm(s.x, k, v);
	case ModelKind::Lda:
		return estimate_lda(s.docs, alpha0.value_or(0.0), v);
	case ModelKind::MixReg:
		return estimate_mixreg(s.x, s.y, k, v);
	case ModelKind::Subspace:
		return estimate_subspace(s.x, k, r, v, known_sigma2);
	}
	throw Error(ErrorCode::InvalidInput, "unknown model");
}

inline ModelParams generate_params(ModelKind kind, const GeneratorSpec& g, double sigma, Rng& rng) {
	Vector w = random_weights(g.k, g.weight_lo, g.weight_hi, rng);
	if (g.target_weight && g.k > 1) {
		const double rest = w.tail(g.k - 1).sum();
		w.tail(g.k - 1) *= (1.0 - *g.target_weight) / rest;
		w(0) = *g.target_weight;
	}
	switch (kind) {
	case ModelKind::Gmm:
		return random_gmm(g.k, g.d, g.radius, w, sigma, rng);
	case ModelKind::Lda:
		return random_lda(g.d, g.alpha0 * w, g.topic_concentration, rng);
	case ModelKind::MixReg:
		return random_mixreg(g.k, g.d, g.radius, w, sigma, rng);
	case ModelKind::Subspace:
		return random_subspace(g.k, g.d, g.r, w, sigma, rng);
	}
	throw Error(ErrorCode::InvalidInput, "unknown model");
}

/// Side information for target component 0 (gamma specs are handled by the caller).
inline SideInfo make_side_info(const ModelParams& p, const SideInfoSpec& spec, double mean_doc_length, Rng& rng) {
	switch (spec.kind) {
	case SideInfoKind::Explicit:
		detail::require(spec.explicit_v.size() == dim_of(p), ErrorCode::InvalidInput, "side_info.v has wrong dimension");
		return SideInfo(spec.explicit_v);
	case SideInfoKind::Gamma:
		return build_gamma_v(p, spec.gammas.front());
	case SideInfoKind::Oracle:
		if (const auto* s = std::get_if<SubspaceParams>(&p))
			return SideInfo(s->bases.front().col(0));
		return SideInfo(mean_components(p).components.col(0));
	case SideInfoKind::Word: {
		const auto& q = std::get<LdaParams>(p);
		Eigen::Index word = spec.word;
		if (word < 0) {
			Vector advantage = q.topics.col(0);
			if (q.components() > 1)
				advantage -= q.topics.rightCols(q.components() - 1).rowwise().maxCoeff();
			advantage.maxCoeff(&word);
		}
		return lda_v_from_word(word, q.dim());
	}
	case SideInfoKind::Labeled:
		break;
	}

	const Eigen::Index ell = spec.labeled_count;
	if (const auto* g = std::get_if<GmmParams>(&p)) {
		Matrix x(ell, g->dim());
		for (Eigen::Index i = 0; i < ell; ++i)
			x.row(i) = (g->means.col(0) + g->stddevs(0) * detail::normal_vector(rng, g->dim())).transpose();
		return gmm_v_from_labeled(x);
	}
	if (const auto* l = std::get_if<LdaParams>(&p)) {
		LdaParams single{Vector::Ones(1), l->topics.col(0)};
		const LdaCorpus corpus = sample_lda(single, ell, mean_doc_length, rng);
		return lda_v_from_docs(corpus.docs, l->dim());
	}
	if (const auto* m = std::get_if<MixRegParams>(&p)) {
		MixRegParams single{Vector::Ones(1), m->regressors.col(0), m->noise_stddev};
		const RegressionSamples s = sample_mixreg(single, ell, rng);
		return mixreg_v_from_labeled(s.x, s.y);
	}
	const auto& s = std::get<SubspaceParams>(p);
	SubspaceParams single{Vector::Ones(1), {s.bases.front()}, s.noise_stddev};
	return subspace_v_from_sample(sample_subspace(single, 1, rng).x.row(0).transpose());
}

namespace detail {

inline constexpr std::uint64_t kParamsStream = 0x7061726d;  // "parm"
inline constexpr std::uint64_t kSideStream = 0x73696465;    // "side"
inline constexpr std::uint64_t kSampleStream = 0;

struct Cell {
	std::size_t sigma_index;
	std::size_t trial;
};

inline std::vector<ExperimentRecord> run_cell(const ExperimentConfig& c, const Cell& cell, const std::string& hash) {
	using clock = std::chrono::steady_clock;
	const double sigma = c.sigmas[cell.sigma_index];
	const auto sidx = static_cast<std::uint64_t>(cell.sigma_index);
	const auto trial = static_cast<std::uint64_t>(cell.trial);
	std::vector<ExperimentRecord> out;

	const auto fail_all = [&](Eigen::Index n, std::uint64_t seed, const Error& e) {
		for (const AlgorithmSpec& a : c.algorithms) {
			ExperimentRecord r;
			r.config_hash = hash;
			r.sigma_index = cell.sigma_index;
			r.sigma = sigma;
			r.trial = cell.trial;
			r.n = n;
			r.seed = seed;
			r.algorithm = a.label;
			r.ok = false;
			r.error_code = std::string(to_string(e.code()));
			r.message = e.what();
			out.push_back(std::move(r));
		}
	};

	// Parameters and side information are fixed per trial so the n-grid isolates sampling noise.
	std::optional<ModelParams> params;
	std::vector<std::optional<SideInfo>> sides;
	try {
		if (c.params) {
			params = *c.params;
		} else {
			Rng prng(derive_seed({c.master_seed, trial, kParamsStream}));
			params = generate_params(c.model, c.generator, sigma, prng);
		}
		Rng srng(derive_seed({c.master_seed, trial, kSideStream, sidx}));
		if (c.side_info.kind == SideInfoKind::Gamma) {
			for (double g : c.side_info.gammas)
				sides.emplace_back(build_gamma_v(*params, g));
		} else {
			sides.emplace_back(make_side_info(*params, c.side_info, c.mean_doc_length, srng));
		}
	} catch (const Error& e) {
		for (Eigen::Index n : c.n_grid)
			fail_all(n, derive_seed({c.master_seed, trial, static_cast<std::uint64_t>(n), kSampleStream, sidx}), e);
		return out;
	}

	const ModelParams& p = *params;
	const Eigen::Index k = components_of(p);
	const Eigen::Index r = c.model == ModelKind::Subspace ? std::get<SubspaceParams>(p).rank() : 1;
	const double alpha0 = c.model == ModelKind::Lda ? std::get<LdaParams>(p).alpha0() : 0.0;

	for (Eigen::Index n : c.n_grid) {
		const std::uint64_t seed = derive_seed({c.master_seed, trial, static_cast<std::uint64_t>(n), kSampleStream, sidx});
		SampleSet samples;
		if (!c.exact_moments) {
			Rng rng(seed);
			samples = draw_samples(p, n, c.mean_doc_length, rng);
		}
		for (std::size_t gi = 0; gi < sides.size(); ++gi) {
			const SideInfo& side = *sides[gi];
			const MomentTriple exact = exact_moments(p, side.vector());
			const double margin = delta_margin(p, side, 0);

			std::optional<MomentTriple> triple;
			std::optional<Error> moment_error;
			double moment_ms = 0.0;
			const auto t0 = clock::now();
			try {
				triple = c.exact_moments ? exact : estimate_moments(c.model, samples, k, r, side.vector(), alpha0);
			} catch (const Error& e) {
				moment_error = e;
			}
			moment_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

			for (const AlgorithmSpec& a : c.algorithms) {
				ExperimentRecord rec;
				rec.config_hash = hash;
				rec.sigma_index = cell.sigma_index;
				rec.sigma = sigma;
				rec.gamma_index = gi;
				if (c.side_info.kind == SideInfoKind::Gamma)
					rec.gamma = c.side_info.gammas[gi];
				rec.trial = cell.trial;
				rec.n = n;
				rec.seed = seed;
				rec.algorithm = a.label;
				rec.delta_margin = margin;
				const auto t1 = clock::now();
				try {
					if (moment_error)
						throw *moment_error;
					rec.a_error = spectral_norm(triple->A - exact.A);
					rec.b_error = spectral_norm(triple->B - exact.B);
					switch (a.kind) {
					case AlgorithmKind::Whitening:
					case AlgorithmKind::Cancellation: {
						const ComponentEstimate est = a.kind == AlgorithmKind::Whitening
						                                  ? whitening_search(*triple, k)
						                                  : cancellation_search(*triple, k, a.cancellation);
						const MeanComponents mc = mean_components(p);
						rec.error = (est.mu - mc.components.col(0)).norm();
						rec.alpha_error = std::abs(est.alpha - mc.weights(0));
						rec.lambda_star = est.diagnostics.lambda_star;
						rec.spectral_gap = est.diagnostics.spectral_gap;
						rec.ambiguous = est.diagnostics.ambiguous_top_component;
						break;
					}
					case AlgorithmKind::Subspace: {
						const SubspaceEstimate est = subspace_search(triple->A, triple->B, k, r);
						rec.error = subspace_error(est.U_hat, std::get<SubspaceParams>(p).bases.front());
						rec.spectral_gap = est.spectral_gap;
						rec.ambiguous = est.ambiguous_subspace;
						break;
					}
					case AlgorithmKind::KMeansBaseline: {
						detail::require(!c.exact_moments, ErrorCode::InvalidInput, "kmeans_baseline needs samples");
						Rng krng(derive_seed({c.master_seed, trial, static_cast<std::uint64_t>(n), fnv1a(a.label), sidx}));
						const auto est = kmeans_subspace_baseline(samples.x, k, r, side.vector(), a.restarts, krng);
						rec.error = subspace_error(est.estimate.U_hat, std::get<SubspaceParams>(p).bases.front());
						break;
					}
					}
				} catch (const Error& e) {
					rec.ok = false;
					rec.error_code = std::string(to_string(e.code()));
					rec.message = e.what();
				}
				if (c.record_timings)
					rec.wall_ms = moment_ms + std::chrono::duration<double, std::milli>(clock::now() - t1).count();
				out.push_back(std::move(rec));
			}
		}
	}
	return out;
}

} // namespace detail

/**
 * @brief Runs every (sigma, trial, n, gamma, algorithm) cell.
 *
 * Cells are independent and may run on several threads; records are sorted by
 * (sigma, gamma, trial, n, algorithm position) afterwards, so output does not depend on scheduling.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
	const std::string hash = config_hash(c);
	std::vector<detail::Cell> cells;
	for (std::size_t s = 0; s < c.sigmas.size(); ++s)
		for (std::size_t t = 0; t < c.trials; ++t)
			cells.push_back({s, t});

	std::vector<std::vector<ExperimentRecord>> parts(cells.size());
	std::atomic<std::size_t> next{0};
	const auto worker = [&] {
		for (std::size_t i = next++; i < cells.size(); i = next++)
			parts[i] = detail::run_cell(c, cells[i], hash);
	};
	const std::size_t n_threads = std::min(c.threads, cells.size());
	if (n_threads <= 1) {
		worker();
	} else {
		std::vector<std::thread> pool;
		for (std::size_t i = 0; i < n_threads; ++i)
			pool.emplace_back(worker);
		for (auto& th : pool)
			th.join();
	}

	std::map<std::string, std::size_t> algo_pos;
	for (std::size_t i = 0; i < c.algorithms.size(); ++i)
		algo_pos[c.algorithms[i].label] = i;
	ExperimentResult result;
	for (auto& part : parts)
		for (auto& r : part)
			result.records.push_back(std::move(r));
	std::stable_sort(result.records.begin(), result.records.end(), [&](const auto& a, const auto& b) {
		return std::make_tuple(a.sigma_index, a.gamma_index, a.trial, a.n, algo_pos[a.algorithm])
		       < std::make_tuple(b.sigma_index, b.gamma_index, b.trial, b.n, algo_pos[b.algorithm]);
	});
	return result;
}

// ---------------------------------------------------------------------------
// Summaries

/// Linear-interpolation quantile of unsorted values; NaN when empty.
inline double quantile(std::vector<double> xs, double q) {
	if (xs.empty())
		return std::numeric_limits<double>::quiet_NaN();
	std::sort(xs.begin(), xs.end());
	const double pos = q * static_cast<double>(xs.size() - 1);
	const auto lo = static_cast<std::size_t>(std::floor(pos));
	const std::size_t hi = std::min(lo + 1, xs.size() - 1);
	return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

/// 100 (E_T - E_A) / E_T for every (sigma, gamma, trial, n) where both algorithms succeeded.
inline std::vector<double> relative_gain(const std::vector<ExperimentRecord>& records, const std::string& algo,
                                         const std::string& reference) {
	using Key = std::tuple<std::size_t, std::size_t, std::size_t, Eigen::Index>;
	std::map<Key, double> ref;
	for (const auto& r : records)
		if (r.ok && r.algorithm == reference)
			ref[{r.sigma_index, r.gamma_index, r.trial, r.n}] = r.error;
	std::vector<double> gains;
	for (const auto& r : records) {
		if (!r.ok || r.algorithm != algo)
			continue;
		const auto it = ref.find({r.sigma_index, r.gamma_index, r.trial, r.n});
		if (it == ref.end())
			continue;
		const double et = it->second;
		gains.push_back(et == r.error ? 0.0 : 100.0 * (et - r.error) / et);
	}
	return gains;
}

/// Per (sigma, gamma, n, algorithm): success counts and error quantiles.
inline void write_summary_csv(std::ostream& os, const ExperimentConfig& c, const std::vector<ExperimentRecord>& records) {
	struct Group {
		std::size_t failed = 0;
		std::vector<double> err, alpha_err, a_err, b_err, margin;
	};
	std::map<std::tuple<std::size_t, std::size_t, Eigen::Index, std::size_t>, Group> groups;
	std::map<std::string, std::size_t> algo_pos;
	for (std::size_t i = 0; i < c.algorithms.size(); ++i)
		algo_pos[c.algorithms[i].label] = i;
	for (const auto& r : records) {
		Group& g = groups[{r.sigma_index, r.gamma_index, r.n, algo_pos[r.algorithm]}];
		if (!r.ok) {
			++g.failed;
			continue;
		}
		g.err.push_back(r.error);
		if (r.alpha_error)
			g.alpha_err.push_back(*r.alpha_error);
		g.a_err.push_back(r.a_error);
		g.b_err.push_back(r.b_error);
		g.margin.push_back(r.delta_margin);
	}
	const auto num = [](double x) { return std::isnan(x) ? std::string() : io::format_double(x); };
	os << "sigma,gamma,n,algorithm,ok,failed,error_median,error_q25,error_q75,alpha_error_median,"
	      "a_error_median,b_error_median,delta_margin_median\n";
	for (const auto& [key, g] : groups) {
		const auto& [si, gi, n, ai] = key;
		const std::string gamma =
		    c.side_info.kind == SideInfoKind::Gamma ? io::format_double(c.side_info.gammas[gi]) : std::string();
		os << io::format_double(c.sigmas[si]) << ',' << gamma << ',' << n << ',' << c.algorithms[ai].label << ','
		   << g.err.size() << ',' << g.failed << ',' << num(median(g.err)) << ',' << num(quantile(g.err, 0.25)) << ','
		   << num(quantile(g.err, 0.75)) << ',' << num(median(g.alpha_err)) << ',' << num(median(g.a_err)) << ','
		   << num(median(g.b_err)) << ',' << num(median(g.margin)) << '\n';
	}
}

inline void write_jsonl(std::ostream& os, const std::vector<ExperimentRecord>& records) {
	for (const auto& r : records)
		os << to_json(r).dump() << '\n';
}

} // namespace mixsearch
