#include "oracles.hpp"

#include <mixsearch/sideinfo.hpp>
#include <mixsearch/subspace.hpp>

#include <gtest/gtest.h>

using namespace mixsearch;

namespace {

// U1 = e1, U2 = e2 in R^3 with equal weights.
SubspaceParams worked_subspace() {
	return SubspaceParams{Vector{{0.5, 0.5}}, {Matrix(Vector::Unit(3, 0)), Matrix(Vector::Unit(3, 1))}, 0.0};
}

Matrix rotation2(double t) { return (Matrix(2, 2) << std::cos(t), -std::sin(t), std::sin(t), std::cos(t)).finished(); }

} // namespace

TEST(SubspaceSearch, WorkedInstance) {
	const MomentTriple t = exact_moments(worked_subspace(), Vector::Unit(3, 0));
	EXPECT_TRUE(t.A.matrix().isApprox(0.5 * Vector{{1.0, 1.0, 0.0}}.asDiagonal().toDenseMatrix()));
	EXPECT_TRUE(t.B.matrix().isApprox(Vector{{1.5, 0.0, 0.0}}.asDiagonal().toDenseMatrix()));
	const SubspaceEstimate est = subspace_search(t.A, t.B, 2, 1);
	EXPECT_LE(subspace_error(est.U_hat, Vector::Unit(3, 0)), 1e-14);
	EXPECT_NEAR(est.spectral_gap, 3.0, 1e-13);
	EXPECT_FALSE(est.ambiguous_subspace);
}

TEST(SubspaceSearch, TieIsFlagged) {
	const MomentTriple t = exact_moments(worked_subspace(), Vector{{1.0, 1.0, 0.0}});
	EXPECT_TRUE(subspace_search(t.A, t.B, 2, 1).ambiguous_subspace);
}

TEST(SubspaceSearch, Preconditions) {
	const MomentTriple t = exact_moments(worked_subspace(), Vector::Unit(3, 0));
	EXPECT_THROW(subspace_search(t.A, t.B, 2, 2), Error);
	EXPECT_THROW(subspace_search(t.A, SymMatrix(Matrix::Zero(2, 2)), 2, 1), Error);
	try {
		subspace_search(SymMatrix(Matrix::Zero(3, 3)), t.B, 2, 1);
		FAIL() << "expected RankDeficient";
	} catch (const Error& e) {
		EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
	}
}

TEST(SubspaceSearch, ExactnessAndGapBound) {
	Rng rng(41);
	for (int trial = 0; trial < 60; ++trial) {
		const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.index(4));
		const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.index(3));
		const Eigen::Index d = k * r + 1 + static_cast<Eigen::Index>(rng.index(20));
		const auto [p, v] = oracle::random_subspace_instance(k, d, r, 0.05, rng);
		const double delta = delta_margin(p, SideInfo(v));
		ASSERT_GE(delta, 0.05 - 1e-12);
		const MomentTriple t = exact_moments(p, v);
		const SubspaceEstimate est = subspace_search(t.A, t.B, k, r);
		EXPECT_LE(subspace_error(est.U_hat, p.bases[0]), 1e-7) << "trial " << trial;
		EXPECT_LE((est.U_hat.transpose() * est.U_hat - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);
		const double own = (p.bases[0].transpose() * v).squaredNorm();
		EXPECT_GE(est.spectral_gap, 3.0 * delta * own - 1e-8) << "trial " << trial;
	}
}

TEST(SubspaceSearch, InvariantUnderBasisRotation) {
	Rng rng(42);
	const auto [p, v] = oracle::random_subspace_instance(3, 12, 2, 0.05, rng);
	const MomentTriple t = exact_moments(p, v);
	SubspaceParams q = p;
	for (std::size_t i = 0; i < q.bases.size(); ++i)
		q.bases[i] = q.bases[i] * rotation2(0.3 + static_cast<double>(i));
	const MomentTriple s = exact_moments(q, v);
	const Matrix a = subspace_search(t.A, t.B, 3, 2).U_hat;
	const Matrix b = subspace_search(s.A, s.B, 3, 2).U_hat;
	EXPECT_LE(projector_distance(a, b), 1e-10);
}

TEST(SubspaceSearch, ErrorLinearInPerturbation) {
	Rng rng(43);
	const auto [p, v] = oracle::random_subspace_instance(3, 15, 2, 0.1, rng);
	const MomentTriple t = exact_moments(p, v);
	const std::vector<double> eps{1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
	std::vector<double> err;
	for (double e : eps) {
		double sum = 0.0;
		for (int rep = 0; rep < 8; ++rep) {
			const SymMatrix a(t.A.matrix() + oracle::symmetric_perturbation(rng, 15, e));
			const SymMatrix b(t.B.matrix() + oracle::symmetric_perturbation(rng, 15, e));
			sum += subspace_error(subspace_search(a, b, 3, 2).U_hat, p.bases[0]);
		}
		err.push_back(sum / 8);
	}
	const double slope = oracle::loglog_slope(eps, err);
	EXPECT_GE(slope, 0.7);
	EXPECT_LE(slope, 1.3);
}

TEST(SubspaceError, ClosedForms) {
	Rng rng(44);
	const Matrix u = orthonormalize(oracle::gaussian_matrix(rng, 6, 2));
	EXPECT_NEAR(subspace_error(u * rotation2(1.1), u), 0.0, 1e-14);
	EXPECT_NEAR(subspace_error(Vector::Unit(3, 0), Vector::Unit(3, 1)), 1.0, 1e-15);
	for (double theta : {0.05, 0.4, 1.3}) {
		const Vector a{{1.0, 0.0, 0.0}};
		const Vector b{{std::cos(theta), 0.0, std::sin(theta)}};
		EXPECT_NEAR(subspace_error(b, a), std::sin(theta), 1e-14);
	}
	EXPECT_THROW(subspace_error(u, Matrix(6, 0)), Error);
}

TEST(KMeans, MoreRestartsNeverWorse) {
	Rng data(45);
	const Matrix x = oracle::gaussian_matrix(data, 200, 3);
	for (std::uint64_t seed = 0; seed < 10; ++seed) {
		Rng a(seed), b(seed);
		const double one = kmeans(x, 4, 1, a).objective;
		const double five = kmeans(x, 4, 5, b).objective;
		EXPECT_LE(five, one);
	}
}

TEST(KMeans, DeterministicAndWellFormed) {
	Rng data(46);
	const Matrix x = oracle::gaussian_matrix(data, 150, 4);
	Rng a(9), b(9);
	const KMeansResult r1 = kmeans(x, 3, 4, a);
	const KMeansResult r2 = kmeans(x, 3, 4, b);
	EXPECT_EQ(r1.labels, r2.labels);
	EXPECT_EQ(r1.centroids, r2.centroids);
	EXPECT_EQ(r1.objective, r2.objective);
	double obj = 0.0;
	for (Eigen::Index i = 0; i < x.rows(); ++i) {
		const int l = r1.labels[static_cast<std::size_t>(i)];
		ASSERT_GE(l, 0);
		ASSERT_LT(l, 3);
		obj += (x.row(i) - r1.centroids.row(l)).squaredNorm();
	}
	EXPECT_NEAR(obj, r1.objective, 1e-9 * obj);
	EXPECT_LE(r1.iterations, 100);
}

TEST(KMeans, SeparatedClustersRecovered) {
	Rng rng(47);
	Matrix x(90, 2);
	for (Eigen::Index i = 0; i < 90; ++i) {
		const double cx = (i % 3) * 10.0;
		x(i, 0) = cx + 0.1 * rng.normal();
		x(i, 1) = 0.1 * rng.normal();
	}
	const KMeansResult res = kmeans(x, 3, 3, rng);
	for (Eigen::Index i = 3; i < 90; ++i)
		EXPECT_EQ(res.labels[static_cast<std::size_t>(i)], res.labels[static_cast<std::size_t>(i % 3)]);
}

TEST(KMeans, Preconditions) {
	Rng rng(1);
	EXPECT_THROW(kmeans(Matrix::Zero(2, 2), 3, 1, rng), Error);
	EXPECT_THROW(kmeans(Matrix::Zero(5, 2), 2, 0, rng), Error);
}

TEST(KMeansBaseline, SingleClusterIsSampleSecondMoment) {
	Rng rng(48);
	const Matrix x = oracle::gaussian_matrix(rng, 50, 5) * Vector{{3.0, 2.0, 1.0, 0.5, 0.1}}.asDiagonal();
	const KMeansSubspaceResult res = kmeans_subspace_baseline(x, 1, 2, Vector::Unit(5, 0), 2, rng);
	const Matrix expect = top_k_eig(SymMatrix(x.transpose() * x), 2).vectors;
	EXPECT_LE(subspace_error(res.estimate.U_hat, expect), 1e-12);
	EXPECT_EQ(res.chosen_cluster, 0);
}

TEST(KMeansBaseline, SymmetrizedOrthogonalRays) {
	// sigma = 0 samples on two orthogonal lines, reflected into the half-space where the first nonzero
	// coordinate is positive so each line becomes a single ray.
	Rng rng(49);
	const SubspaceParams p{Vector{{0.5, 0.5}}, {Matrix(Vector::Unit(4, 0)), Matrix(Vector::Unit(4, 1))}, 0.0};
	auto s = sample_subspace(p, 2000, rng);
	for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
		const double lead = s.x(i, 0) != 0.0 ? s.x(i, 0) : s.x(i, 1);
		if (lead < 0.0)
			s.x.row(i) *= -1.0;
	}
	const KMeansSubspaceResult res = kmeans_subspace_baseline(s.x, 2, 1, Vector::Unit(4, 0), 5, rng);
	EXPECT_LE(subspace_error(res.estimate.U_hat, Vector::Unit(4, 0)), 1e-6);
}

TEST(KMeansBaseline, Preconditions) {
	Rng rng(2);
	EXPECT_THROW(kmeans_subspace_baseline(Matrix::Zero(3, 4), 2, 1, Vector::Ones(4), 1, rng), Error);
	EXPECT_THROW(kmeans_subspace_baseline(Matrix::Ones(10, 4), 2, 1, Vector::Ones(3), 1, rng), Error);
	EXPECT_THROW(kmeans_subspace_baseline(Matrix::Ones(10, 4), 2, 5, Vector::Ones(4), 1, rng), Error);
}
