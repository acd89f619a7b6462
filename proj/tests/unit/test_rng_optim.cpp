#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "mixhaz/mixhaz.hpp"

using namespace mixhaz;
using Catch::Approx;

TEST_CASE("rng streams are deterministic and substream-independent") {
	Rng a(42u, 1u, 7u), b(42u, 1u, 7u);
	for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

	// different substreams decorrelate immediately
	Rng c(42u, 1u, 8u);
	Rng d(42u, 2u, 7u);
	std::set<std::uint64_t> firsts = {Rng(42u, 1u, 7u).next_u64(), c.next_u64(), d.next_u64(),
	                                  Rng(43u, 1u, 7u).next_u64()};
	CHECK(firsts.size() == 4);
}

TEST_CASE("rng samplers have the right first moments") {
	Rng rng(7u);
	const int n = 200000;
	double su = 0.0, sn = 0.0, sb = 0.0, sg = 0.0;
	for (int i = 0; i < n; ++i) {
		su += rng.uniform();
		sn += rng.normal();
		sb += rng.bernoulli(0.3) ? 1.0 : 0.0;
		sg += rng.gamma(2.5);
	}
	CHECK(su / n == Approx(0.5).margin(0.005));
	CHECK(sn / n == Approx(0.0).margin(0.01));
	CHECK(sb / n == Approx(0.3).margin(0.005));
	CHECK(sg / n == Approx(2.5).margin(0.02));

	std::vector<int> counts(3, 0);
	for (int i = 0; i < n; ++i) ++counts[rng.categorical({0.2, 0.5, 0.3})];
	CHECK(counts[0] / double(n) == Approx(0.2).margin(0.01));
	CHECK(counts[1] / double(n) == Approx(0.5).margin(0.01));

	int lo_hits = 0;
	for (int i = 0; i < n; ++i)
		if (rng.uniform_int(1, 5) == 1) ++lo_hits;
	CHECK(lo_hits / double(n) == Approx(0.2).margin(0.01));
}

TEST_CASE("beta draws match analytic moments") {
	const auto types = TypeDistribution::beta_mixture(
	    {{0.1, 0.1, 0.5}, {0.3, 0.5, 0.1}, {0.25, 0.5, 0.4}});
	Rng rng(99u);
	const int n = 400000;
	double s1 = 0.0, s2 = 0.0;
	for (int i = 0; i < n; ++i) {
		const double x = types.draw(rng);
		s1 += x;
		s2 += x * x;
	}
	CHECK(s1 / n == Approx(types.raw_moment(1)).margin(0.002));
	CHECK(s2 / n == Approx(types.raw_moment(2)).margin(0.002));
}

TEST_CASE("nelder-mead and bfgs minimize a rosenbrock bowl") {
	auto rosen = [](const Eigen::VectorXd& x) {
		const double a = 1.0 - x[0];
		const double b = x[1] - x[0] * x[0];
		return a * a + 100.0 * b * b;
	};
	Eigen::VectorXd x0(2);
	x0 << -1.2, 1.0;
	const auto nm = nelder_mead(rosen, x0, 0.5, 1e-14);
	const auto polished = bfgs(rosen, nm.x, 1e-10, 500);
	CHECK(polished.x[0] == Approx(1.0).margin(1e-5));
	CHECK(polished.x[1] == Approx(1.0).margin(1e-5));
	CHECK(polished.value < 1e-10);
}

TEST_CASE("numerical derivatives match closed forms") {
	auto f = [](const Eigen::VectorXd& x) {
		return std::sin(x[0]) + x[1] * x[1] * std::exp(x[0]);
	};
	Eigen::VectorXd x(2);
	x << 0.3, -0.7;
	const auto g = numerical_gradient(f, x, 1e-6);
	CHECK(g[0] == Approx(std::cos(0.3) + 0.49 * std::exp(0.3)).margin(1e-6));
	CHECK(g[1] == Approx(-1.4 * std::exp(0.3)).margin(1e-6));

	auto r = [](const Eigen::VectorXd& z) {
		Eigen::VectorXd out(2);
		out << z[0] * z[0] - z[1], 3.0 * z[1];
		return out;
	};
	const auto J = numerical_jacobian(r, x, 1e-6);
	CHECK(J(0, 0) == Approx(0.6).margin(1e-6));
	CHECK(J(0, 1) == Approx(-1.0).margin(1e-6));
	CHECK(J(1, 0) == Approx(0.0).margin(1e-6));
	CHECK(J(1, 1) == Approx(3.0).margin(1e-6));
}

TEST_CASE("levenberg-marquardt solves a small least-squares system") {
	auto r = [](const Eigen::VectorXd& z) {
		Eigen::VectorXd out(3);
		out << z[0] - 2.0, z[1] + 1.0, z[0] * z[1] + 2.0;
		return out;
	};
	Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
	const auto res = levenberg_marquardt(r, x0, 1e-15, 200);
	CHECK(res.x[0] == Approx(2.0).margin(1e-6));
	CHECK(res.x[1] == Approx(-1.0).margin(1e-6));
}

TEST_CASE("parallel striping is identical across thread counts") {
	std::vector<double> one(64), four(64);
	parallel_for(64, 1, [&](int i) { one[i] = Rng(5u, 0u, i).uniform(); });
	parallel_for(64, 4, [&](int i) { four[i] = Rng(5u, 0u, i).uniform(); });
	CHECK(one == four);
}
