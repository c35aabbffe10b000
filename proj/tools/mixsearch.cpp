// Command-line front end: generate, search, experiment, moments.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

#include <mixsearch/mixsearch.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mixsearch;
using io::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

Vector parse_vector_list(const std::string& s) {
	std::vector<double> xs;
	std::stringstream ss(s);
	std::string cell;
	while (std::getline(ss, cell, ',')) {
		try {
			std::size_t used = 0;
			xs.push_back(std::stod(cell, &used));
			if (cell.find_first_not_of(" \t", used) != std::string::npos)
				throw std::invalid_argument(cell);
		} catch (const std::exception&) {
			throw Error(ErrorCode::InvalidInput, "--v: bad number \"" + cell + "\"");
		}
	}
	return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

Vector read_vector_file(const std::string& path) {
	const Matrix m = io::read_csv_file(path);
	if (m.rows() != 1 && m.cols() != 1)
		throw Error(ErrorCode::InvalidInput, path + ": expected a single row or column");
	return m.reshaped();
}

void ensure_dir(const std::string& dir) {
	std::error_code ec;
	fs::create_directories(dir, ec);
	if (ec)
		throw Error(ErrorCode::InvalidInput, "cannot create directory " + dir);
}

/// Where a command's moments come from: ground-truth params, row samples, or a UCI corpus.
struct DataArgs {
	std::string model;
	std::string params;
	std::string samples;
	std::string corpus;
	std::string vocab_file;
	bool exact = false;
	long k = 0;
	long r = 1;
	double alpha0 = 0.0;
	std::optional<double> sigma2;

	void add_to(CLI::App* cmd) {
		cmd->add_option("--model", model, "gmm, lda, mixreg or subspace")->required();
		cmd->add_option("--params", params, "parameter JSON file");
		cmd->add_option("--samples", samples, "sample CSV (mixreg: x columns then y)");
		cmd->add_option("--corpus", corpus, "UCI bag-of-words docword file (lda)");
		cmd->add_option("--vocab", vocab_file, "UCI vocabulary file, one word per line");
		cmd->add_flag("--exact", exact, "use analytic moments of --params");
		cmd->add_option("-k,--components", k, "number of components (defaults to the params file)");
		cmd->add_option("-r,--rank", r, "subspace dimension (subspace model)");
		cmd->add_option("--alpha0", alpha0, "Dirichlet concentration sum (lda)");
		cmd->add_option("--sigma2", sigma2, "known subspace noise variance");
	}
};

struct Loaded {
	ModelKind kind;
	std::optional<ModelParams> params;
	SampleSet data;
	Eigen::Index dim = 0;
	Eigen::Index k = 0;
	Eigen::Index r = 1;
	std::optional<double> alpha0;
};

Loaded load(const DataArgs& a) {
	Loaded l{parse_model_kind(a.model), std::nullopt, {}, 0, a.k, a.r, std::nullopt};
	if (!a.params.empty()) {
		l.params = io::params_from_json(io::read_json_file(a.params));
		if (kind_of(*l.params) != l.kind)
			throw Error(ErrorCode::InvalidInput, "--params model does not match --model");
		l.dim = dim_of(*l.params);
		if (l.k == 0)
			l.k = components_of(*l.params);
		if (const auto* s = std::get_if<SubspaceParams>(&*l.params))
			l.r = s->rank();
		if (const auto* d = std::get_if<LdaParams>(&*l.params))
			l.alpha0 = d->alpha0();
	}
	if (a.alpha0 > 0.0)
		l.alpha0 = a.alpha0;

	const int sources = (a.exact ? 1 : 0) + (a.samples.empty() ? 0 : 1) + (a.corpus.empty() ? 0 : 1);
	if (sources != 1)
		throw Error(ErrorCode::InvalidInput, "give exactly one of --exact, --samples, --corpus");
	if (a.exact && !l.params)
		throw Error(ErrorCode::InvalidInput, "--exact needs --params");
	if (!a.samples.empty()) {
		const Matrix m = io::read_csv_file(a.samples);
		if (l.kind == ModelKind::Lda)
			throw Error(ErrorCode::InvalidInput, "lda data is read with --corpus");
		if (l.kind == ModelKind::MixReg) {
			if (m.cols() < 2)
				throw Error(ErrorCode::InvalidInput, "mixreg samples need x columns and a y column");
			l.data.x = m.leftCols(m.cols() - 1);
			l.data.y = m.col(m.cols() - 1);
		} else {
			l.data.x = m;
		}
		l.dim = l.data.x.cols();
	}
	if (!a.corpus.empty()) {
		if (l.kind != ModelKind::Lda)
			throw Error(ErrorCode::InvalidInput, "--corpus applies to the lda model only");
		io::UciCorpus c = io::read_uci_file(a.corpus);
		l.data.docs = std::move(c.docs);
		l.data.vocab = c.vocab;
		l.dim = c.vocab;
	}
	if (l.k < 1)
		throw Error(ErrorCode::InvalidInput, "number of components unknown: pass -k or --params");
	if (l.kind == ModelKind::Lda && !l.alpha0)
		throw Error(ErrorCode::InvalidInput, "lda needs --alpha0 or --params");
	return l;
}

MomentTriple moments_for(const DataArgs& a, const Loaded& l, const Vector& v) {
	if (v.size() != l.dim)
		throw Error(ErrorCode::InvalidInput, "side information has dimension " + std::to_string(v.size()) +
		                                         ", data has " + std::to_string(l.dim));
	if (a.exact)
		return exact_moments(*l.params, v);
	return estimate_moments(l.kind, l.data, l.k, l.r, v, l.alpha0, a.sigma2);
}

struct SideArgs {
	std::string v;
	std::string v_file;
	long word = -1;
	std::string labeled;
	std::string labeled_docs;
	double gamma = 0.0;

	void add_to(CLI::App* cmd) {
		cmd->add_option("--v", v, "side-information vector, comma separated");
		cmd->add_option("--v-file", v_file, "side-information vector CSV");
		cmd->add_option("--word", word, "labeled word index, 0-based (lda)");
		cmd->add_option("--labeled", labeled, "CSV of labeled samples from the target component");
		cmd->add_option("--labeled-docs", labeled_docs, "UCI file of documents about the target topic (lda)");
		cmd->add_option("--gamma", gamma, "gamma-mixture side information from --params, in (0, 1]");
	}
};

SideInfo make_side(const SideArgs& s, const Loaded& l) {
	const int given = (s.v.empty() ? 0 : 1) + (s.v_file.empty() ? 0 : 1) + (s.word >= 0 ? 1 : 0) +
	                  (s.labeled.empty() ? 0 : 1) + (s.labeled_docs.empty() ? 0 : 1) + (s.gamma > 0.0 ? 1 : 0);
	if (given == 0)
		throw Error(ErrorCode::InvalidInput,
		            "missing side information: pass one of --v, --v-file, --word, --labeled, --labeled-docs, --gamma");
	if (given > 1)
		throw Error(ErrorCode::InvalidInput, "pass only one side-information option");
	if (!s.v.empty())
		return SideInfo(parse_vector_list(s.v));
	if (!s.v_file.empty())
		return SideInfo(read_vector_file(s.v_file));
	if (s.word >= 0)
		return lda_v_from_word(s.word, l.dim);
	if (s.gamma > 0.0) {
		if (!l.params)
			throw Error(ErrorCode::InvalidInput, "--gamma needs --params");
		return build_gamma_v(*l.params, s.gamma);
	}
	if (!s.labeled_docs.empty()) {
		const io::UciCorpus c = io::read_uci_file(s.labeled_docs);
		return lda_v_from_docs(c.docs, std::max(c.vocab, l.dim));
	}
	const Matrix x = io::read_csv_file(s.labeled);
	switch (l.kind) {
	case ModelKind::Gmm:
		return gmm_v_from_labeled(x);
	case ModelKind::MixReg:
		if (x.cols() < 2)
			throw Error(ErrorCode::InvalidInput, "labeled mixreg pairs need x columns and a y column");
		return mixreg_v_from_labeled(x.leftCols(x.cols() - 1), x.col(x.cols() - 1));
	case ModelKind::Subspace:
		if (x.rows() < 1)
			throw Error(ErrorCode::InvalidInput, "--labeled file is empty");
		return subspace_v_from_sample(x.row(0).transpose());
	case ModelKind::Lda:
		break;
	}
	throw Error(ErrorCode::InvalidInput, "lda labeled documents are passed with --labeled-docs");
}

json number(double x) { return std::isfinite(x) ? json(x) : json(std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf")); }

void emit(const json& j, const std::string& out) {
	if (out.empty()) {
		std::cout << j.dump(2) << '\n';
		return;
	}
	io::write_json_file(out, j);
}

// ---------------------------------------------------------------------------

int cmd_search(const DataArgs& da, const SideArgs& sa, const std::string& algo, const std::string& method,
               bool av, std::optional<double> psd_tol, int restarts, std::uint64_t seed, std::size_t top_words,
               const std::string& out) {
	const Loaded l = load(da);
	const SideInfo side = make_side(sa, l);
	json j;
	j["model"] = std::string(to_string(l.kind));
	j["algorithm"] = algo;
	j["k"] = l.k;

	if (algo == "kmeans_baseline") {
		if (l.kind != ModelKind::Subspace || l.data.x.size() == 0)
			throw Error(ErrorCode::InvalidInput, "kmeans_baseline needs subspace --samples");
		Rng rng(seed);
		const auto est = kmeans_subspace_baseline(l.data.x, l.k, l.r, side.vector(), restarts, rng);
		j["U_hat"] = io::columns_to_json(est.estimate.U_hat);
		j["objective"] = est.clustering.objective;
		j["cluster"] = est.chosen_cluster;
		if (l.params)
			j["subspace_error"] = subspace_error(est.estimate.U_hat, std::get<SubspaceParams>(*l.params).bases.front());
		emit(j, out);
		return 0;
	}

	const MomentTriple t = moments_for(da, l, side.vector());
	if (algo == "subspace") {
		if (l.kind != ModelKind::Subspace)
			throw Error(ErrorCode::InvalidInput, "--algo subspace applies to the subspace model");
		const SubspaceEstimate est = subspace_search(t.A, t.B, l.k, l.r);
		j["U_hat"] = io::columns_to_json(est.U_hat);
		j["spectral_gap"] = number(est.spectral_gap);
		j["ambiguous_subspace"] = est.ambiguous_subspace;
		if (l.params) {
			j["subspace_error"] = subspace_error(est.U_hat, std::get<SubspaceParams>(*l.params).bases.front());
			j["delta_margin"] = number(delta_margin(*l.params, side));
		}
		emit(j, out);
		return 0;
	}

	if (l.kind == ModelKind::Subspace)
		throw Error(ErrorCode::InvalidInput, "the subspace model uses --algo subspace or kmeans_baseline");
	ComponentEstimate est;
	if (algo == "whitening") {
		est = whitening_search(t, l.k);
	} else if (algo == "cancellation") {
		CancellationOptions opts;
		if (method == "nuclear_norm")
			opts.lambda_method = LambdaMethod::NuclearNorm;
		else if (method != "bisection")
			throw Error(ErrorCode::InvalidInput, "--lambda-method must be bisection or nuclear_norm");
		opts.use_av_variant = av;
		opts.psd_tol = psd_tol;
		est = cancellation_search(t, l.k, opts);
	} else {
		throw Error(ErrorCode::InvalidInput, "unknown --algo \"" + algo + "\"");
	}

	j["mu_hat"] = io::to_json(est.mu);
	j["alpha_hat"] = est.alpha;
	json diag;
	diag["spectral_gap"] = number(est.diagnostics.spectral_gap);
	diag["ambiguous_top_component"] = est.diagnostics.ambiguous_top_component;
	if (est.diagnostics.lambda_star) {
		diag["lambda_star"] = *est.diagnostics.lambda_star;
		diag["branch_sign"] = est.diagnostics.branch_sign;
	}
	j["diagnostics"] = diag;
	if (l.params) {
		const MeanComponents mc = mean_components(*l.params);
		j["error"] = (est.mu - mc.components.col(0)).norm();
		j["alpha_error"] = std::abs(est.alpha - mc.weights(0));
		j["delta_margin"] = number(delta_margin(*l.params, side));
	}
	if (l.kind == ModelKind::Lda) {
		std::vector<std::string> names;
		if (!da.vocab_file.empty())
			names = io::read_vocab_file(da.vocab_file);
		std::vector<Eigen::Index> order(static_cast<std::size_t>(est.mu.size()));
		std::iota(order.begin(), order.end(), Eigen::Index{0});
		std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return est.mu(a) > est.mu(b); });
		json words = json::array();
		for (std::size_t i = 0; i < std::min(top_words, order.size()); ++i) {
			json w;
			w["word"] = order[i];
			if (static_cast<std::size_t>(order[i]) < names.size())
				w["name"] = names[static_cast<std::size_t>(order[i])];
			w["weight"] = est.mu(order[i]);
			words.push_back(std::move(w));
		}
		j["top_words"] = std::move(words);
	}
	emit(j, out);
	return 0;
}

int cmd_moments(const DataArgs& da, const SideArgs& sa, const std::string& out) {
	const Loaded l = load(da);
	const SideInfo side = make_side(sa, l);
	const MomentTriple t = moments_for(da, l, side.vector());
	ensure_dir(out);
	io::write_csv_file(out + "/m.csv", t.m.transpose());
	io::write_csv_file(out + "/A.csv", t.A.matrix());
	io::write_csv_file(out + "/B.csv", t.B.matrix());
	io::write_csv_file(out + "/v.csv", t.v.transpose());
	json n;
	n["model"] = std::string(to_string(t.kind));
	if (t.nuisance.sigma2)
		n["sigma2"] = *t.nuisance.sigma2;
	if (t.nuisance.m_tilde)
		n["m_tilde"] = io::to_json(*t.nuisance.m_tilde);
	if (t.nuisance.tau2)
		n["tau2"] = *t.nuisance.tau2;
	if (t.nuisance.alpha0)
		n["alpha0"] = *t.nuisance.alpha0;
	io::write_json_file(out + "/nuisance.json", n);
	return 0;
}

void write_samples(const std::string& dir, const ModelParams& p, const SampleSet& s) {
	if (kind_of(p) == ModelKind::Lda) {
		auto f = io::open_out(dir + "/docword.txt");
		io::write_uci(f, s.docs, dim_of(p));
		return;
	}
	Matrix m = s.x;
	if (kind_of(p) == ModelKind::MixReg) {
		m.conservativeResize(Eigen::NoChange, s.x.cols() + 1);
		m.col(s.x.cols()) = s.y;
	}
	io::write_csv_file(dir + "/samples.csv", m);
	Matrix labels(static_cast<Eigen::Index>(s.labels.size()), 1);
	for (std::size_t i = 0; i < s.labels.size(); ++i)
		labels(static_cast<Eigen::Index>(i), 0) = s.labels[i];
	io::write_csv_file(dir + "/labels.csv", labels);
}

/// Writes params.json and samples for each trial of a config (first n-grid value, first sigma).
int cmd_generate(const std::string& config_path, const std::string& model, std::optional<std::uint64_t> seed,
                 std::optional<long> n_opt, std::optional<long> trials_opt, const std::string& out) {
	json cfg;
	if (!config_path.empty()) {
		cfg = io::read_json_file(config_path);
	} else {
		if (model.empty())
			throw Error(ErrorCode::InvalidInput, "generate needs --config or --model");
		cfg = {{"model", model}, {"generator", json::object()}, {"n_grid", {1000}}, {"algorithms", json::array()}};
	}
	if (!model.empty())
		cfg["model"] = model;
	if (seed)
		cfg["master_seed"] = *seed;
	if (n_opt)
		cfg["n_grid"] = {*n_opt};
	if (trials_opt)
		cfg["trials"] = *trials_opt;
	// Algorithms are irrelevant here; pick one valid for the model so validation passes.
	const bool subspace = cfg.value("model", std::string()) == "subspace";
	cfg["algorithms"] = {subspace ? "subspace" : "whitening"};
	const ExperimentConfig c = parse_experiment_config(cfg);

	ensure_dir(out);
	json manifest;
	manifest["model"] = std::string(to_string(c.model));
	manifest["master_seed"] = c.master_seed;
	manifest["n"] = c.n_grid.front();
	manifest["trials"] = json::array();
	for (std::size_t t = 0; t < c.trials; ++t) {
		const auto trial = static_cast<std::uint64_t>(t);
		ModelParams p;
		if (c.params) {
			p = *c.params;
		} else {
			Rng prng(derive_seed({c.master_seed, trial, detail::kParamsStream}));
			p = generate_params(c.model, c.generator, c.sigmas.front(), prng);
		}
		const auto n = c.n_grid.front();
		const std::uint64_t sample_seed =
		    derive_seed({c.master_seed, trial, static_cast<std::uint64_t>(n), detail::kSampleStream, 0});
		Rng rng(sample_seed);
		const SampleSet s = draw_samples(p, n, c.mean_doc_length, rng);

		const std::string dir = c.trials == 1 ? out : out + "/trial_" + std::to_string(t);
		ensure_dir(dir);
		io::write_json_file(dir + "/params.json", io::params_to_json(p));
		write_samples(dir, p, s);
		manifest["trials"].push_back({{"trial", t}, {"seed", sample_seed}, {"dir", fs::path(dir).filename().string()}});
	}
	io::write_json_file(out + "/manifest.json", manifest);
	return 0;
}

int cmd_experiment(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& algo,
                   const std::string& out_opt, std::optional<long> threads) {
	json cfg = io::read_json_file(config_path);
	if (seed)
		cfg["master_seed"] = *seed;
	if (!algo.empty()) {
		json list = json::array();
		std::stringstream ss(algo);
		std::string name;
		while (std::getline(ss, name, ','))
			list.push_back(name);
		cfg["algorithms"] = list;
	}
	if (threads)
		cfg["threads"] = *threads;
	const ExperimentConfig c = parse_experiment_config(cfg);
	const std::string out = out_opt.empty() ? c.output : out_opt;
	const ExperimentResult res = run_experiment(c);

	ensure_dir(out);
	{
		auto f = io::open_out(out + "/records.jsonl");
		write_jsonl(f, res.records);
	}
	{
		auto f = io::open_out(out + "/summary.csv");
		write_summary_csv(f, c, res.records);
	}
	std::size_t failed = 0;
	for (const auto& r : res.records)
		failed += r.ok ? 0 : 1;
	std::cerr << res.records.size() << " records (" << failed << " failed) written to " << out << '\n';
	return 0;
}

} // namespace

int main(int argc, char** argv) {
	CLI::App app{"Single-component search in mixture models from side information"};
	app.require_subcommand(1);

	std::optional<std::uint64_t> seed;
	std::string out;
	std::string model;
	std::string algo;

	auto* generate = app.add_subcommand("generate", "write synthetic parameters and samples");
	std::string gen_config;
	std::optional<long> gen_n, gen_trials;
	generate->add_option("--config", gen_config, "experiment config JSON (generator section)");
	generate->add_option("--model", model, "gmm, lda, mixreg or subspace");
	generate->add_option("--seed", seed, "master seed");
	generate->add_option("-n,--samples", gen_n, "number of samples (documents for lda)");
	generate->add_option("--trials", gen_trials, "number of independent instances");
	generate->add_option("--out", out, "output directory")->required();

	auto* search = app.add_subcommand("search", "recover one component from side information");
	DataArgs search_data;
	SideArgs search_side;
	std::string method = "bisection";
	bool av = false;
	std::optional<double> psd_tol;
	int restarts = 5;
	std::size_t top_words = 20;
	search_data.add_to(search);
	search_side.add_to(search);
	search->add_option("--algo", algo, "whitening, cancellation, subspace or kmeans_baseline")->required();
	search->add_option("--lambda-method", method, "bisection or nuclear_norm (cancellation)");
	search->add_flag("--av", av, "cancellation from m' = A v and B");
	search->add_option("--psd-tol", psd_tol, "PSD tolerance for the lambda search");
	search->add_option("--restarts", restarts, "k-means restarts (kmeans_baseline)");
	search->add_option("--seed", seed, "seed for kmeans_baseline");
	search->add_option("--top-words", top_words, "number of words listed for lda");
	search->add_option("--out", out, "output JSON file (default stdout)");

	auto* experiment = app.add_subcommand("experiment", "run a seeded experiment sweep");
	std::string exp_config;
	std::optional<long> threads;
	experiment->add_option("--config", exp_config, "experiment config JSON")->required();
	experiment->add_option("--seed", seed, "override master_seed");
	experiment->add_option("--algo", algo, "override algorithms, comma separated");
	experiment->add_option("--threads", threads, "worker threads");
	experiment->add_option("--out", out, "output directory (default: config output)");

	auto* moments = app.add_subcommand("moments", "write m, A, B for data or parameters");
	DataArgs mom_data;
	SideArgs mom_side;
	mom_data.add_to(moments);
	mom_side.add_to(moments);
	moments->add_option("--out", out, "output directory")->required();

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e);
		return code == 0 ? 0 : kExitConfig;
	}

	try {
		if (*generate)
			return cmd_generate(gen_config, model, seed, gen_n, gen_trials, out);
		if (*search)
			return cmd_search(search_data, search_side, algo, method, av, psd_tol, restarts, seed.value_or(0),
			                  top_words, out);
		if (*experiment)
			return cmd_experiment(exp_config, seed, algo, out, threads);
		if (*moments)
			return cmd_moments(mom_data, mom_side, out);
	} catch (const Error& e) {
		std::cerr << "error: " << e.what() << '\n';
		return e.is_numerical() ? kExitNumerical : kExitConfig;
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << '\n';
		return kExitConfig;
	}
	return 0;
}
