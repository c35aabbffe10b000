#include "oracles.hpp"

#include <mixsearch/search.hpp>
#include <mixsearch/sideinfo.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace mixsearch;

namespace {

// mu1 = e1, mu2 = e2 in R^3 with weights (0.6, 0.4).
GmmParams worked_gmm() {
	Matrix mu = Matrix::Zero(3, 2);
	mu(0, 0) = 1.0;
	mu(1, 1) = 1.0;
	return GmmParams{Vector{{0.6, 0.4}}, mu, Vector::Zero(2)};
}

CancellationOptions exact_opts(LambdaMethod method = LambdaMethod::Bisection, bool av = false) {
	CancellationOptions o;
	o.lambda_method = method;
	o.use_av_variant = av;
	o.psd_tol = 0.0;
	return o;
}

ModelKind kind_for(int trial) {
	static constexpr ModelKind kinds[] = {ModelKind::Gmm, ModelKind::Lda, ModelKind::MixReg};
	return kinds[trial % 3];
}

} // namespace

TEST(WhitenB, WorkedInstance) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	const WhitenedB wb = whiten_B(t, 2);
	Matrix expect = Matrix::Zero(2, 2);
	expect(0, 0) = 1.0;
	EXPECT_LE((wb.W.matrix() - expect).cwiseAbs().maxCoeff(), 1e-14);
	EXPECT_NEAR(wb.whitener.D(0), 0.6, 1e-15);
	EXPECT_NEAR(wb.whitener.D(1), 0.4, 1e-15);
}

TEST(WhitenB, ZeroVAndBEqualToA) {
	MomentTriple t = exact_moments(worked_gmm(), Vector::Zero(3));
	EXPECT_EQ(whiten_B(t, 2).W.matrix(), Matrix::Zero(2, 2));
	t.B = t.A;
	EXPECT_LE((whiten_B(t, 2).W.matrix() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(WhitenB, EigenvaluesAreInnerProducts) {
	Rng rng(31);
	for (int trial = 0; trial < 60; ++trial) {
		const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.index(7));
		const Eigen::Index d = k + 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(50 - k)));
		const auto inst = oracle::random_mean_instance(kind_for(trial), k, d, 0.1, rng);
		const MomentTriple t = exact_moments(inst.params, inst.v);
		const Vector got = sym_eig(whiten_B(t, k).W).values;
		Vector expect = mean_components(inst.params).components.transpose() * inst.v;
		std::sort(expect.begin(), expect.end(), std::greater<>());
		EXPECT_LE((got - expect).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
	}
}

TEST(MakeWhitener, RankDeficientBelowThreshold) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	try {
		make_whitener(t.A, 3);
		FAIL() << "expected RankDeficient";
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
	}
}

TEST(WhiteningSearch, SingleComponent) {
	Matrix mu = Matrix::Zero(2, 1);
	mu(0, 0) = 2.0;
	const MomentTriple t = exact_moments(GmmParams{Vector{{1.0}}, mu, Vector::Zero(1)}, Vector::Unit(2, 0));
	EXPECT_TRUE(t.A.matrix().isApprox((Matrix(2, 2) << 4, 0, 0, 0).finished()));
	EXPECT_TRUE(t.B.matrix().isApprox((Matrix(2, 2) << 8, 0, 0, 0).finished()));
	const ComponentEstimate est = whitening_search(t, 1);
	EXPECT_LE((est.mu - Vector{{2.0, 0.0}}).norm(), 1e-14);
	EXPECT_NEAR(est.alpha, 1.0, 1e-14);
	EXPECT_TRUE(std::isinf(est.diagnostics.spectral_gap));
}

TEST(WhiteningSearch, WorkedInstance) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	const ComponentEstimate est = whitening_search(t, 2);
	EXPECT_LE((est.mu - Vector::Unit(3, 0)).norm(), 1e-14);
	EXPECT_NEAR(est.alpha, 0.6, 1e-14);
	EXPECT_NEAR(est.diagnostics.spectral_gap, 1.0, 1e-14);
	EXPECT_FALSE(est.diagnostics.ambiguous_top_component);
}

TEST(WhiteningSearch, TieIsFlaggedNotThrown) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector{{1.0, 1.0, 0.0}});
	const ComponentEstimate est = whitening_search(t, 2);
	EXPECT_TRUE(est.diagnostics.ambiguous_top_component);
}

TEST(WhiteningSearch, MeanWithoutTargetComponentIsDegenerate) {
	MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	t.m = Vector::Unit(3, 1);
	try {
		whitening_search(t, 2);
		FAIL() << "expected DegenerateMean";
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::DegenerateMean);
	}
	try {
		cancellation_search(t, 2, exact_opts());
		FAIL() << "expected DegenerateMean";
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::DegenerateMean);
	}
}

TEST(WhiteningSearch, InvariantUnderPositiveScalingOfB) {
	Rng rng(32);
	const auto inst = oracle::random_mean_instance(ModelKind::Gmm, 4, 12, 0.2, rng);
	const MomentTriple t = exact_moments(inst.params, inst.v);
	const ComponentEstimate ref = whitening_search(t, 4);
	for (double c : {1e-3, 0.5, 7.0, 1e4}) {
		MomentTriple s = t;
		s.B = SymMatrix(c * t.B.matrix());
		const ComponentEstimate est = whitening_search(s, 4);
		EXPECT_LE((est.mu - ref.mu).norm(), 1e-10 * ref.mu.norm()) << c;
		EXPECT_NEAR(est.alpha, ref.alpha, 1e-10) << c;
	}
}

TEST(FindLambdaStar, WorkedInstanceBothMethods) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	for (LambdaMethod m : {LambdaMethod::Bisection, LambdaMethod::NuclearNorm}) {
		const LambdaSearch ls = find_lambda_star(t, 2, exact_opts(m));
		EXPECT_NEAR(ls.lambda, 1.0, 1e-8);
		EXPECT_EQ(ls.sign, 1);
	}
}

TEST(FindLambdaStar, DefaultToleranceStaysClose) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	const LambdaSearch ls = find_lambda_star(t, 2);
	EXPECT_GE(ls.lambda, 1.0 - 1e-9);
	EXPECT_LE(ls.lambda, 1.0 + 1e-7);
}

TEST(FindLambdaStar, ZeroBIsNonInformative) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 2));
	for (LambdaMethod m : {LambdaMethod::Bisection, LambdaMethod::NuclearNorm}) {
		try {
			find_lambda_star(t, 2, exact_opts(m));
			FAIL() << "expected NonInformativeSideInfo";
		} catch (const Error& e) {
			EXPECT_EQ(e.code(), ErrorCode::NonInformativeSideInfo);
			EXPECT_TRUE(e.is_numerical());
		}
	}
}

TEST(FindLambdaStar, RejectsBadOptions) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	CancellationOptions o;
	o.psd_tol = -1.0;
	EXPECT_THROW(find_lambda_star(t, 2, o), Error);
	o = {};
	o.lambda_cap = 0.0;
	EXPECT_THROW(find_lambda_star(t, 2, o), Error);
}

TEST(FindLambdaStar, ReciprocalOfTargetInnerProduct) {
	Rng rng(33);
	for (int trial = 0; trial < 60; ++trial) {
		const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.index(7));
		const Eigen::Index d = k + 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(50 - k)));
		const auto inst = oracle::random_mean_instance(kind_for(trial), k, d, 0.1, rng);
		const MomentTriple t = exact_moments(inst.params, inst.v);
		const double expect = 1.0 / inst.inner1;
		for (LambdaMethod m : {LambdaMethod::Bisection, LambdaMethod::NuclearNorm}) {
			const LambdaSearch ls = find_lambda_star(t, k, exact_opts(m));
			EXPECT_LE(std::abs(ls.lambda - expect), 1e-8 * expect) << "trial " << trial;
		}
	}
}

TEST(CancellationSearch, WorkedInstance) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 0));
	for (bool av : {false, true}) {
		for (LambdaMethod m : {LambdaMethod::Bisection, LambdaMethod::NuclearNorm}) {
			const ComponentEstimate est = cancellation_search(t, 2, exact_opts(m, av));
			EXPECT_LE((est.mu - Vector::Unit(3, 0)).norm(), 1e-8);
			EXPECT_NEAR(est.alpha, 0.6, 1e-8);
			ASSERT_TRUE(est.diagnostics.lambda_star.has_value());
			EXPECT_NEAR(*est.diagnostics.lambda_star, 1.0, 1e-8);
		}
	}
}

TEST(CancellationSearch, NegatedSideInformationTakesOtherBranch) {
	Rng rng(34);
	for (int trial = 0; trial < 30; ++trial) {
		const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.index(5));
		const auto inst = oracle::random_mean_instance(kind_for(trial), k, k + 5, 0.1, rng);
		const MomentTriple t = exact_moments(inst.params, Vector(-inst.v));
		for (bool av : {false, true}) {
			const ComponentEstimate est = cancellation_search(t, k, exact_opts(LambdaMethod::Bisection, av));
			EXPECT_EQ(est.diagnostics.branch_sign, -1);
			EXPECT_LE((est.mu - inst.mu1).norm(), 1e-7 * inst.mu1.norm()) << "trial " << trial;
			EXPECT_NEAR(est.alpha, inst.alpha1, 1e-7);
		}
	}
}

TEST(CancellationSearch, ZeroBIsNonInformative) {
	const MomentTriple t = exact_moments(worked_gmm(), Vector::Unit(3, 2));
	EXPECT_THROW(cancellation_search(t, 2, exact_opts()), Error);
}

TEST(Exactness, RandomInstancesAllAlgorithms) {
	Rng rng(35);
	for (int trial = 0; trial < 200; ++trial) {
		const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.index(7));
		const Eigen::Index d = k + 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(50 - k)));
		const auto inst = oracle::random_mean_instance(kind_for(trial), k, d, 0.1, rng);
		const MomentTriple t = exact_moments(inst.params, inst.v);
		ASSERT_GT(delta_margin(inst.params, SideInfo(inst.v)), 0.0);
		const double scale = inst.mu1.norm();

		const ComponentEstimate w = whitening_search(t, k);
		EXPECT_LE((w.mu - inst.mu1).norm(), 1e-7 * scale) << "whitening trial " << trial;
		EXPECT_LE(std::abs(w.alpha - inst.alpha1), 1e-7) << "whitening trial " << trial;

		for (LambdaMethod m : {LambdaMethod::Bisection, LambdaMethod::NuclearNorm}) {
			for (bool av : {false, true}) {
				const ComponentEstimate c = cancellation_search(t, k, exact_opts(m, av));
				EXPECT_LE((c.mu - inst.mu1).norm(), 1e-7 * scale) << "cancellation trial " << trial;
				EXPECT_LE(std::abs(c.alpha - inst.alpha1), 1e-7) << "cancellation trial " << trial;
			}
		}
	}
}

TEST(ErrorScaling, LinearInPerturbationSize) {
	Rng rng(36);
	const auto inst = oracle::random_mean_instance(ModelKind::Gmm, 4, 15, 0.3, rng);
	const MomentTriple t = exact_moments(inst.params, inst.v);
	const std::vector<double> eps{1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
	std::vector<double> err_w, err_c;
	for (double e : eps) {
		double sw = 0.0, sc = 0.0;
		for (int rep = 0; rep < 8; ++rep) {
			MomentTriple p = t;
			p.A = SymMatrix(t.A.matrix() + oracle::symmetric_perturbation(rng, 15, e));
			p.B = SymMatrix(t.B.matrix() + oracle::symmetric_perturbation(rng, 15, e));
			const Vector dm = oracle::gaussian_vector(rng, 15);
			p.m = t.m + e * dm / dm.norm();
			sw += (whitening_search(p, 4).mu - inst.mu1).norm();
			sc += (cancellation_search(p, 4).mu - inst.mu1).norm();
		}
		err_w.push_back(sw / 8);
		err_c.push_back(sc / 8);
	}
	const double slope_w = oracle::loglog_slope(eps, err_w);
	const double slope_c = oracle::loglog_slope(eps, err_c);
	EXPECT_GE(slope_w, 0.7);
	EXPECT_LE(slope_w, 1.3);
	EXPECT_GE(slope_c, 0.7);
	EXPECT_LE(slope_c, 1.3);
}
