#include <catch2/catch_amalgamated.hpp>

#include "../helpers.hpp"
#include "mixhaz/mixhaz.hpp"

using namespace mixhaz;
using Catch::Approx;

TEST_CASE("mean-shift moment corrections match hand-computed values") {
	CHECK(location_shift_kappa(0.1, 2, {1.0}) == Approx(0.21).margin(1e-15));
	CHECK(location_shift_kappa(0.1, 3, {1.0, 1.25}) == Approx(0.406).margin(1e-15));

	const auto kap = central_moment_kappas(0.1, {1.0, 1.25, 1.9});
	CHECK(kap[0] == Approx(0.1).margin(1e-15));
	CHECK(kap[1] == Approx(0.21).margin(1e-15));
	CHECK(kap[2] == Approx(0.406).margin(1e-15));
}

TEST_CASE("closed forms for kappa agree with the binomial expansion") {
	Rng rng(20260814u, 47u);
	for (int rep = 0; rep < 200; ++rep) {
		const double k = rng.uniform(-0.3, 0.3);
		const std::vector<double> mu = {1.0, rng.uniform(1.0, 2.0), rng.uniform(1.0, 4.0)};
		const auto kap = central_moment_kappas(k, mu);
		for (int d = 1; d <= 4; ++d)
			CHECK(kap[d - 1] == Approx(location_shift_kappa(k, d, mu)).margin(1e-12));
	}
}

TEST_CASE("kappa from a location shift matches brute-force shifted moments") {
	const auto dist = TypeDistribution::discrete({0.3, 0.6, 1.0, 1.4, 1.9},
	                                             {0.1, 0.2, 0.4, 0.2, 0.1});
	const double shift = 0.17;
	const auto mu = dist.raw_moments(6);
	const auto mu_shifted = dist.raw_moments(6, shift);
	const std::vector<double> mu_base(mu.begin() + 1, mu.end());
	for (int d = 1; d <= 6; ++d)
		CHECK(location_shift_kappa(shift, d, mu_base) ==
		      Approx(mu_shifted[d] - mu[d]).margin(1e-12));
}

TEST_CASE("generalized recursion reduces to the baseline at kappa 0, gamma 1") {
	Rng rng(20260814u, 48u);
	for (int dbar : {4, 6}) {
		for (int rep = 0; rep < 30; ++rep) {
			const auto dgp = testutil::random_dgp(rng, dbar);
			const auto tab = exact_exit_rates(dgp);
			const auto base = closed_form_identify(tab);
			GeneralizedSpec gen;  // kappa1 = 0, gamma empty
			const auto res = generalized_identify(tab, gen);
			CHECK(res.psi_a[0] == Approx(base.params.psi1[0]).margin(1e-12));
			CHECK(res.psi_b[0] == Approx(base.params.psi1[1]).margin(1e-12));
			for (int d = 2; d <= dbar; ++d) {
				CHECK(res.psi_a[d - 1] == Approx(base.params.psi_tail[d - 2]).margin(1e-12));
				CHECK(res.psi_b[d - 1] == Approx(base.params.psi_tail[d - 2]).margin(1e-12));
			}
			for (int k = 1; k <= dbar; ++k) {
				CHECK(res.mu_a[k - 1] == Approx(base.params.moments[k - 1]).margin(1e-12));
				CHECK(res.mu_b[k - 1] == Approx(base.params.moments[k - 1]).margin(1e-12));
			}
		}
	}
}

TEST_CASE("generalized recursion undoes a true mean shift between groups") {
	Dgp dgp;
	const double mean_nu = 0.75;           // E[nu] for the reference group
	const double kappa1 = 0.05;            // normalized mean shift
	const double shift = kappa1 * mean_nu; // raw location shift of group b types
	dgp.groups = {{0.5, 0.1, 1.0, 0.0}, {0.5, 0.2, 1.0, shift}};
	dgp.psi_tail = {0.15, 0.25, 0.2};
	dgp.dbar = 4;
	dgp.types = TypeDistribution::discrete({0.5, 1.0}, {0.5, 0.5});
	const auto tab = exact_exit_rates(dgp);

	GeneralizedSpec gen;
	gen.kappa1 = kappa1;
	const auto res = generalized_identify(tab, gen);

	const std::vector<double> psi_a_true = {0.1, 0.15, 0.25, 0.2};
	const std::vector<double> psi_b_true = {0.2, 0.15, 0.25, 0.2};
	for (int d = 1; d <= 4; ++d) {
		CHECK(res.psi_a[d - 1] == Approx(psi_a_true[d - 1] * mean_nu).margin(1e-9));
		CHECK(res.psi_b[d - 1] == Approx(psi_b_true[d - 1] * mean_nu).margin(1e-9));
	}
	CHECK(res.mu_b[0] == Approx(1.0 + kappa1).margin(1e-9));
	const auto mu_true = dgp.types.raw_moments(4);
	for (int k = 1; k <= 4; ++k)
		CHECK(res.mu_a[k - 1] == Approx(mu_true[k] / std::pow(mean_nu, k)).margin(1e-9));
	CHECK(res.warnings.empty());

	// the baseline recursion at kappa = 0 is now misspecified and must disagree
	const auto base = closed_form_identify(tab);
	CHECK(std::abs(base.params.psi_tail[0] - 0.15 * mean_nu) > 1e-4);
}

TEST_CASE("generalized recursion undoes true tail proportionality") {
	Dgp dgp = testutil::three_point_dgp();
	dgp.groups[1].gamma = 1.07;  // group b tail hazards scaled up
	const auto tab = exact_exit_rates(dgp);

	GeneralizedSpec gen;
	gen.gamma = {1.07, 1.07, 1.07};
	const auto res = generalized_identify(tab, gen);

	const std::vector<double> tail = {0.15, 0.25, 0.2};
	for (int d = 2; d <= 4; ++d) {
		CHECK(res.psi_a[d - 1] == Approx(tail[d - 2]).margin(1e-9));
		CHECK(res.psi_b[d - 1] == Approx(1.07 * tail[d - 2]).margin(1e-9));
	}
	CHECK(res.warnings.empty());
}

TEST_CASE("fixed kappa vectors reproduce the mean-shift mode exactly") {
	Dgp dgp;
	dgp.groups = {{0.5, 0.1, 1.0, 0.0}, {0.5, 0.2, 1.0, 0.0375}};
	dgp.psi_tail = {0.15, 0.25, 0.2};
	dgp.dbar = 4;
	dgp.types = TypeDistribution::discrete({0.5, 1.0}, {0.5, 0.5});
	const auto tab = exact_exit_rates(dgp);

	GeneralizedSpec loc;
	loc.kappa1 = 0.05;
	const auto a = generalized_identify(tab, loc);

	GeneralizedSpec fixed;
	fixed.central_moment_mode = false;
	fixed.kappa = a.kappa_used;
	const auto b = generalized_identify(tab, fixed);
	for (int d = 1; d <= 4; ++d) {
		CHECK(b.psi_a[d - 1] == Approx(a.psi_a[d - 1]).margin(1e-12));
		CHECK(b.psi_b[d - 1] == Approx(a.psi_b[d - 1]).margin(1e-12));
	}
}

TEST_CASE("generalized recursion rejects degenerate inputs") {
	Dgp dgp = testutil::three_point_dgp();
	dgp.groups[1].psi1 = dgp.groups[0].psi1;  // identical groups
	const auto tab = exact_exit_rates(dgp);
	GeneralizedSpec gen;
	CHECK_THROWS_WITH(generalized_identify(tab, gen),
	                  Catch::Matchers::ContainsSubstring("identification ratio degenerates"));

	GeneralizedSpec bad;
	bad.kappa1 = -1.0;
	CHECK_THROWS_WITH(generalized_identify(exact_exit_rates(testutil::three_point_dgp()), bad),
	                  Catch::Matchers::ContainsSubstring("1 + kappa_1 must be positive"));

	GeneralizedSpec shortvec;
	shortvec.central_moment_mode = false;
	shortvec.kappa = {0.0, 0.0};
	CHECK_THROWS_AS(generalized_identify(exact_exit_rates(testutil::three_point_dgp()), shortvec),
	                std::invalid_argument);
}
