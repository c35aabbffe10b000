#include "oracles.hpp"

#include <mixsearch/harness.hpp>

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace mixsearch;
using io::json;

namespace {

json small_gmm_config() {
	return json::parse(R"({
		"model": "gmm",
		"generator": {"k": 3, "d": 8, "sigma": [0.1, 0.2]},
		"n_grid": [300, 600],
		"trials": 3,
		"master_seed": 17,
		"algorithms": ["whitening", "cancellation"],
		"side_info": {"type": "labeled", "count": 20}
	})");
}

std::string jsonl_of(const ExperimentConfig& c) {
	std::ostringstream os;
	write_jsonl(os, run_experiment(c).records);
	return os.str();
}

ErrorCode parse_error(const json& j) {
	try {
		parse_experiment_config(j);
	} catch (const Error& e) {
		return e.code();
	}
	ADD_FAILURE() << "config accepted: " << j.dump();
	return ErrorCode::DegenerateMean;
}

} // namespace

TEST(GammaSideInfo, OrthonormalMeansClosedForm) {
	const Eigen::Index k = 4;
	const GmmParams p{Vector::Constant(k, 0.25), Matrix::Identity(6, k), Vector::Zero(k)};
	for (double g : {0.05, 0.25, 0.5, 0.9}) {
		const Vector v = build_gamma_v(p, g).vector();
		const double share = std::sqrt((1.0 - g) / static_cast<double>(k - 1));
		EXPECT_NEAR(v(0), std::sqrt(g), 1e-15);
		for (Eigen::Index i = 1; i < k; ++i)
			EXPECT_NEAR(v(i), share, 1e-15);
		EXPECT_NEAR(v.norm(), 1.0, 1e-14);
		EXPECT_NEAR(delta_margin(p, SideInfo(v)), std::sqrt(g) / share - 1.0, 1e-12);
	}
	// gamma = 0.5, k = 2: equal norm in v1 and the rest.
	const GmmParams two{Vector{{0.5, 0.5}}, Matrix::Identity(3, 2), Vector::Zero(2)};
	const Vector v = build_gamma_v(two, 0.5).vector();
	EXPECT_NEAR(v(0), v(1), 1e-15);
}

TEST(GammaSideInfo, FullGammaIsOrthogonalToCompetitors) {
	Rng rng(71);
	for (int trial = 0; trial < 20; ++trial) {
		const GmmParams p = random_gmm(5, 12, 1.0, Vector::Constant(5, 0.2), 0.1, rng);
		const Vector v = build_gamma_v(p, 1.0).vector();
		EXPECT_LE((p.means.rightCols(4).transpose() * v).cwiseAbs().maxCoeff(), 1e-12);
		EXPECT_GT(p.means.col(0).dot(v), 0.0);
		EXPECT_GT(delta_margin(p, SideInfo(v)), 1e10); // +inf up to roundoff in the competitors
	}
}

TEST(GammaSideInfo, RejectsBadGamma) {
	const GmmParams p{Vector{{0.5, 0.5}}, Matrix::Identity(3, 2), Vector::Zero(2)};
	EXPECT_THROW(build_gamma_v(p, 0.0), Error);
	EXPECT_THROW(build_gamma_v(p, 1.5), Error);
}

TEST(Config, ParsesDefaultsAndLists) {
	const ExperimentConfig c = parse_experiment_config(small_gmm_config());
	EXPECT_EQ(c.model, ModelKind::Gmm);
	EXPECT_EQ(c.sigmas, (std::vector<double>{0.1, 0.2}));
	EXPECT_EQ(c.n_grid, (std::vector<Eigen::Index>{300, 600}));
	EXPECT_EQ(c.trials, 3u);
	ASSERT_EQ(c.algorithms.size(), 2u);
	EXPECT_TRUE(c.algorithms[1].cancellation.use_av_variant);
	EXPECT_FALSE(c.record_timings);
	EXPECT_EQ(c.side_info.labeled_count, 20);
}

TEST(Config, RejectsInvalidConfigs) {
	const auto with = [](const char* key, json value) {
		json j = small_gmm_config();
		j[key] = std::move(value);
		return j;
	};
	const auto without = [](const char* key) {
		json j = small_gmm_config();
		j.erase(key);
		return j;
	};
	EXPECT_EQ(parse_error(json::array()), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("model", "hmm")), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(without("n_grid")), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("n_grid", json::array({0}))), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("trials", 0)), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(without("algorithms")), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("algorithms", json::array({"magic"}))), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("algorithms", json::array({"subspace"}))), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("algorithms", json::array({"whitening", "whitening"}))), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("side_info", json{{"type", "word"}})), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("side_info", json{{"type", "gamma"}, {"gamma", json::array({2.0})}})),
	          ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("moments", "approximate")), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("threads", 0)), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("trials", "three")), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(without("generator")), ErrorCode::InvalidInput);
	EXPECT_EQ(parse_error(with("algorithms", json::array({json{{"name", "cancellation"}, {"psd_tol", -1}}}))),
	          ErrorCode::InvalidInput);

	json sub = small_gmm_config();
	sub["model"] = "subspace";
	sub["algorithms"] = json::array({"kmeans_baseline"});
	sub["moments"] = "exact";
	EXPECT_EQ(parse_error(sub), ErrorCode::InvalidInput);
}

TEST(Config, ParamsOverrideNoiseList) {
	json j = small_gmm_config();
	j.erase("generator");
	j["params"] = json::parse(R"({"model":"gmm","weights":[0.6,0.4],"means":[[1,0,0],[0,1,0]],"stddevs":[0.3,0.3]})");
	const ExperimentConfig c = parse_experiment_config(j);
	EXPECT_EQ(c.sigmas, std::vector<double>{0.3});
	j["model"] = "lda";
	EXPECT_EQ(parse_error(j), ErrorCode::InvalidInput);
}

TEST(Config, HashTracksContent) {
	const ExperimentConfig a = parse_experiment_config(small_gmm_config());
	const ExperimentConfig b = parse_experiment_config(small_gmm_config());
	EXPECT_EQ(config_hash(a), config_hash(b));
	EXPECT_EQ(config_hash(a).size(), 16u);
	json j = small_gmm_config();
	j["master_seed"] = 18;
	EXPECT_NE(config_hash(parse_experiment_config(j)), config_hash(a));
	json exec = small_gmm_config();
	exec["threads"] = 3;
	exec["output"] = "elsewhere";
	EXPECT_EQ(config_hash(parse_experiment_config(exec)), config_hash(a));
}

TEST(Experiment, DeterministicAcrossRunsAndThreadCounts) {
	ExperimentConfig c = parse_experiment_config(small_gmm_config());
	const std::string first = jsonl_of(c);
	EXPECT_EQ(jsonl_of(c), first);
	c.threads = 3;
	EXPECT_EQ(jsonl_of(c), first);
	EXPECT_EQ(first.find("wall_ms"), std::string::npos);
}

TEST(Experiment, RecordLayoutAndSeeds) {
	const ExperimentConfig c = parse_experiment_config(small_gmm_config());
	const auto records = run_experiment(c).records;
	ASSERT_EQ(records.size(), 2u * 3u * 2u * 2u);
	std::set<std::uint64_t> seeds;
	for (std::size_t i = 0; i < records.size(); ++i) {
		const auto& r = records[i];
		EXPECT_EQ(r.config_hash, config_hash(c));
		EXPECT_EQ(r.algorithm, i % 2 == 0 ? "whitening" : "cancellation");
		EXPECT_EQ(r.sigma, c.sigmas[r.sigma_index]);
		EXPECT_TRUE(r.ok) << r.message;
		seeds.insert(r.seed);
	}
	// One sample seed per (sigma, trial, n).
	EXPECT_EQ(seeds.size(), 2u * 3u * 2u);
	for (std::size_t i = 1; i < records.size(); ++i) {
		const auto& a = records[i - 1];
		const auto& b = records[i];
		EXPECT_LE(std::make_tuple(a.sigma_index, a.trial, a.n), std::make_tuple(b.sigma_index, b.trial, b.n));
	}
}

TEST(Experiment, ExactMomentsGiveExactRecovery) {
	json j = small_gmm_config();
	j["moments"] = "exact";
	j["side_info"] = json{{"type", "gamma"}, {"gamma", json::array({1.0, 0.8})}};
	j["algorithms"] = json::array({"whitening", json{{"name", "cancellation"}, {"psd_tol", 0.0}, {"use_av_variant", false}}});
	const auto records = run_experiment(parse_experiment_config(j)).records;
	for (const auto& r : records) {
		ASSERT_TRUE(r.ok) << r.message;
		ASSERT_TRUE(r.gamma.has_value());
		EXPECT_LE(r.error, 1e-7);
		EXPECT_LE(*r.alpha_error, 1e-7);
		EXPECT_EQ(r.a_error, 0.0);
	}
}

TEST(Experiment, FailuresAreRecordedNotThrown) {
	json j = small_gmm_config();
	j["n_grid"] = json::array({5});
	const auto records = run_experiment(parse_experiment_config(j)).records;
	for (const auto& r : records) {
		EXPECT_FALSE(r.ok);
		EXPECT_EQ(r.error_code, "InsufficientSamples");
	}
}

TEST(Experiment, TimingsOnlyWhenRequested) {
	json j = small_gmm_config();
	j["record_timings"] = true;
	j["trials"] = 1;
	const auto records = run_experiment(parse_experiment_config(j)).records;
	for (const auto& r : records)
		EXPECT_TRUE(r.wall_ms.has_value());
	EXPECT_TRUE(to_json(records.front()).contains("wall_ms"));
}

TEST(Summary, SelfGainIsZeroAndQuantiles) {
	const auto records = run_experiment(parse_experiment_config(small_gmm_config())).records;
	const auto gains = relative_gain(records, "whitening", "whitening");
	EXPECT_EQ(gains.size(), 12u);
	for (double g : gains)
		EXPECT_EQ(g, 0.0);
	EXPECT_EQ(relative_gain(records, "cancellation", "whitening").size(), 12u);

	EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
	EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.25), 1.75);
	EXPECT_TRUE(std::isnan(median({})));
}

TEST(Summary, CsvHasOneRowPerGroup) {
	const ExperimentConfig c = parse_experiment_config(small_gmm_config());
	std::ostringstream os;
	write_summary_csv(os, c, run_experiment(c).records);
	std::istringstream in(os.str());
	std::string line;
	std::getline(in, line);
	EXPECT_EQ(line.rfind("sigma,gamma,n,algorithm,ok,failed,", 0), 0u);
	int rows = 0;
	while (std::getline(in, line))
		++rows;
	EXPECT_EQ(rows, 2 * 2 * 2);
}

TEST(Records, NonFiniteValuesBecomeStrings) {
	ExperimentRecord r;
	r.delta_margin = std::numeric_limits<double>::infinity();
	r.spectral_gap = -std::numeric_limits<double>::infinity();
	const json j = to_json(r);
	EXPECT_EQ(j.at("delta_margin"), "inf");
	EXPECT_EQ(j.at("spectral_gap"), "-inf");
}

TEST(Experiment, EveryModelRuns) {
	for (const char* text : {
	         R"({"model":"lda","generator":{"k":2,"d":12},"n_grid":[2000],"algorithms":["whitening","cancellation"],
	             "side_info":{"type":"word"}})",
	         R"({"model":"mixreg","generator":{"k":2,"d":5,"sigma":0.1},"n_grid":[4000],"algorithms":["cancellation"]})",
	         R"({"model":"subspace","generator":{"k":2,"d":10,"r":2,"sigma":0.1},"n_grid":[2000],
	             "algorithms":["subspace","kmeans_baseline"]})",
	     }) {
		const auto records = run_experiment(parse_experiment_config(json::parse(text))).records;
		ASSERT_FALSE(records.empty());
		for (const auto& r : records) {
			EXPECT_TRUE(r.ok) << text << ": " << r.message;
			EXPECT_TRUE(std::isfinite(r.error));
		}
	}
}
