#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "mixhaz/mixhaz.hpp"

using namespace mixhaz;
using Catch::Approx;

namespace {

// Two-group notice design: short notice delta(1) = 1, long notice 1.25,
// common tail delta(2..4) = 0.95, equal-share types nu in {1, 0.5}.
constexpr std::uint64_t kSeed = 20260814u;

TypeMixture panel_mix() {
	TypeMixture mix;
	mix.nu = {1.0, 0.5};
	mix.prob = {0.5, 0.5};
	return mix;
}

SearchPanelSpec panel_spec() {
	SearchPanelSpec spec;
	spec.group_shares = {0.5, 0.5};
	spec.delta1 = {1.0, 1.25};
	spec.types = panel_mix();
	spec.dbar = 4;
	return spec;
}

// model-implied paths for the short-notice group, frozen from the solver
const std::vector<double> kObservedShort = {0.267955, 0.272228, 0.317093, 0.297342};
const std::vector<double> kStructural = {0.267955, 0.279990, 0.341573, 0.341573};
const std::vector<double> kObservedLong1 = {0.418679};

// parameters recovered from the exact population table (the model the
// estimator actually converges to under this misspecified-tail design)
const std::vector<double> kPseudoPsi1 = {0.267955, 0.418679};
const std::vector<double> kPseudoTail = {0.279990, 0.338055, 0.332214};

ExitRateTable population_table() {
	const SearchConfig cfg;
	const auto mix = panel_mix();
	ExitRateTable tab(2, 4);
	const std::vector<double> delta1 = {1.0, 1.25};
	for (int l = 0; l < 2; ++l) {
		const auto paths = search_paths(with_delta1(cfg, delta1[l]), mix, 4);
		std::vector<double> surv = {1.0, 1.0};
		for (int d = 1; d <= 4; ++d) {
			double num = 0.0, den = 0.0;
			for (int t = 0; t < 2; ++t) {
				const double h = paths.type_hazard[t][d - 1];
				num += mix.prob[t] * surv[t] * h;
				den += mix.prob[t] * surv[t];
				surv[t] *= 1.0 - h;
			}
			tab.numerator[l][d - 1] = 0.5 * num;
			tab.denominator[l][d - 1] = 0.5 * den;
		}
	}
	return tab;
}

EstimationSpec np_spec() {
	EstimationSpec spec;
	spec.dbar = 4;
	spec.tail = TailKind::Nonparametric;
	return spec;
}

}  // namespace

TEST_CASE("solver-implied notice-design paths match their frozen values") {
	const SearchConfig cfg;
	const auto mix = panel_mix();
	const auto s = search_paths(with_delta1(cfg, 1.0), mix, 4);
	const auto l = search_paths(with_delta1(cfg, 1.25), mix, 4);
	for (int d = 1; d <= 4; ++d) {
		CHECK(s.observed[d - 1] == Approx(kObservedShort[d - 1]).margin(5e-6));
		CHECK(s.structural[d - 1] == Approx(kStructural[d - 1]).margin(5e-6));
	}
	CHECK(l.observed[0] == Approx(kObservedLong1[0]).margin(5e-6));
	for (int d = 2; d <= 4; ++d)
		CHECK(l.structural[d - 1] == Approx(kStructural[d - 1]).margin(5e-6));

	const auto cf = closed_form_identify(population_table());
	CHECK(cf.params.psi1[0] == Approx(kPseudoPsi1[0]).margin(5e-6));
	CHECK(cf.params.psi1[1] == Approx(kPseudoPsi1[1]).margin(5e-6));
	for (int d = 2; d <= 4; ++d)
		CHECK(cf.params.psi_tail[d - 2] == Approx(kPseudoTail[d - 2]).margin(5e-6));

	// the two-type DGP violates the common-type assumption across durations,
	// so the recovered moment sequence must be flagged as infeasible
	bool hankel_flagged = false;
	for (const auto& w : cf.warnings)
		if (w.find("Hankel") != std::string::npos) hankel_flagged = true;
	CHECK(hankel_flagged);
}

TEST_CASE("thousand-replication study reproduces the composition-effect bands") {
	const SearchConfig cfg;
	const auto spec = panel_spec();
	const int R = 1000, n = 3000;

	auto run_one = [&](int r) {
		McReplication rep;
		const Panel panel = simulate_search_panel(cfg, spec, n, kSeed, r);
		const std::vector<double> w(panel.rows.size(), 1.0);
		const auto notice = panel.notice();
		const auto duration = panel.duration();
		const auto censored = panel.censored();
		try {
			const auto fit = gmm_estimate(notice, duration, censored, w, 2, np_spec());
			rep.converged = fit.converged;
			for (int j = 0; j < fit.theta.size(); ++j) rep.estimates.push_back(fit.theta[j]);
		} catch (const std::exception&) {
			rep.converged = false;
			rep.estimates.assign(10, 0.0);
			return rep;
		}
		const auto tab = empirical_exit_rates(notice, duration, censored, w, 2, 4);
		rep.estimates.push_back(tab.hazard(0, 1));
		rep.estimates.push_back(tab.hazard(1, 1));
		return rep;
	};

	std::vector<double> truth(kPseudoPsi1);
	truth.insert(truth.end(), kPseudoTail.begin(), kPseudoTail.end());
	truth.insert(truth.end(), {1.075734, 1.188525, 1.206109});  // pseudo-true mu
	truth.insert(truth.end(), {kObservedShort[0], kObservedLong1[0]});

	const auto mc = monte_carlo(R, 1, run_one, truth);
	CHECK(mc.n_converged >= 990);

	// estimated structural path for the short-notice group: psi1_g0, psi2..4.
	// Deep cells divide by a small survival contrast, so at n = 3000 the mean
	// estimate sits above the structural value (measured +0.007 at d = 2,
	// +0.012 at d = 4); the corridor allows that one-sided bias while still
	// rejecting any drift toward the selection-contaminated observed path.
	const std::vector<int> path_idx = {0, 2, 3, 4};
	for (int d = 2; d <= 4; ++d) {
		const int j = path_idx[d - 1];
		const double slack = 2.0 * mc.mc_se[j];
		const double lo = std::min(kObservedShort[d - 1], kStructural[d - 1]);
		const double hi = std::max(kObservedShort[d - 1], kStructural[d - 1]);
		INFO("d = " << d << ": mean " << mc.mean[j] << ", band [" << lo << ", " << hi
		            << "], mc se " << mc.mc_se[j]);
		CHECK(mc.mean[j] > lo - slack);
		CHECK(mc.mean[j] < hi + std::max(slack, 0.02));
		// the average estimate tracks structural duration dependence, not the
		// selection-contaminated observed path
		CHECK(std::abs(mc.mean[j] - kStructural[d - 1]) <=
		      std::abs(mc.mean[j] - kObservedShort[d - 1]) + 2.0 * slack);
	}
	// at d = 1 all three paths coincide by construction
	CHECK(std::abs(mc.mean[0] - kObservedShort[0]) < std::max(3.0 * mc.mc_se[0], 1e-3));
	CHECK(std::abs(mc.mean[1] - kObservedLong1[0]) < std::max(3.0 * mc.mc_se[1], 1e-3));

	// sampling-distribution shape: first- and second-period hazards and the
	// variance moment are approximately normal at this sample size; deeper
	// parameters divide by small survival contrasts and stay right-skewed
	for (const int j : {0, 1, 2, 5}) {
		INFO("parameter " << j << " skewness " << testutil::skewness(mc.draws[j]));
		CHECK(std::abs(testutil::skewness(mc.draws[j])) < 0.5);
	}
	for (const int j : {3, 4, 6, 7}) {
		const double skew = testutil::skewness(mc.draws[j]);
		INFO("parameter " << j << " skewness " << skew);
		CHECK(skew > -0.5);
		CHECK(skew < 3.5);
	}

	// longer notice raises the first-period exit rate in nearly every sample
	int ordered = 0;
	for (std::size_t r = 0; r < mc.draws[8].size(); ++r)
		if (mc.draws[9][r] > mc.draws[8][r]) ++ordered;
	CHECK(ordered >= static_cast<int>(0.95 * mc.draws[8].size()));
}

TEST_CASE("replication summaries are reproducible from the base seed") {
	const SearchConfig cfg;
	const auto spec = panel_spec();
	auto run_one = [&](int r) {
		McReplication rep;
		const Panel panel = simulate_search_panel(cfg, spec, 400, kSeed, r);
		const std::vector<double> w(panel.rows.size(), 1.0);
		const auto tab =
		    empirical_exit_rates(panel.notice(), panel.duration(), panel.censored(), w, 2, 4);
		rep.estimates = {tab.hazard(0, 1), tab.hazard(1, 1)};
		return rep;
	};
	const std::vector<double> truth = {kObservedShort[0], kObservedLong1[0]};
	const auto a = monte_carlo(5, 1, run_one, truth);
	const auto b = monte_carlo(5, 1, run_one, truth);
	for (int j = 0; j < 2; ++j) {
		CHECK(a.mean[j] == b.mean[j]);
		CHECK(a.sd[j] == b.sd[j]);
	}
}

TEST_CASE("closed form survives heavy uniform censoring at scale") {
	Dgp dgp = testutil::three_point_dgp();
	dgp.censoring.scheme = CensoringSpec::Scheme::Uniform;
	Panel panel = simulate(dgp, 1000000, kSeed);
	apply_censoring(panel, dgp.dbar, dgp.censoring, kSeed, 0u);
	const std::vector<double> w(panel.rows.size(), 1.0);
	const auto tab =
	    empirical_exit_rates(panel.notice(), panel.duration(), panel.censored(), w, 2, 4);
	const auto cf = closed_form_identify(tab);
	CHECK(cf.params.psi1[0] == Approx(0.1).margin(0.01));
	CHECK(cf.params.psi1[1] == Approx(0.2).margin(0.01));
	const std::vector<double> tail = {0.15, 0.25, 0.2};
	for (int d = 2; d <= 4; ++d)
		CHECK(cf.params.psi_tail[d - 2] == Approx(tail[d - 2]).margin(0.01));
}

TEST_CASE("million-record panels match the solver-implied cells") {
	const SearchConfig cfg;
	const auto spec = panel_spec();
	const Panel panel = simulate_search_panel(cfg, spec, 1000000, kSeed);
	const std::vector<double> w(panel.rows.size(), 1.0);
	const auto tab =
	    empirical_exit_rates(panel.notice(), panel.duration(), panel.censored(), w, 2, 4);
	const std::vector<double> delta1 = {1.0, 1.25};
	for (int l = 0; l < 2; ++l) {
		const auto paths = search_paths(with_delta1(cfg, delta1[l]), panel_mix(), 4);
		for (int d = 1; d <= 4; ++d)
			CHECK(tab.hazard(l, d) == Approx(paths.observed[d - 1]).margin(0.005));
	}
}

TEST_CASE("sampling error shrinks like the square root of the sample size") {
	const auto dgp = testutil::three_point_dgp();
	const auto exact = exact_exit_rates(dgp);
	auto rms_error = [&](int n, int reps) {
		double acc = 0.0;
		int cells = 0;
		for (int r = 0; r < reps; ++r) {
			const Panel panel = simulate(dgp, n, kSeed + 7u, r);
			const std::vector<double> w(panel.rows.size(), 1.0);
			const auto tab = empirical_exit_rates(panel.notice(), panel.duration(),
			                                      panel.censored(), w, 2, 4);
			for (int l = 0; l < 2; ++l)
				for (int d = 1; d <= 4; ++d) {
					const double e = tab.hazard(l, d) - exact.hazard(l, d);
					acc += e * e;
					++cells;
				}
		}
		return std::sqrt(acc / cells);
	};
	const double coarse = rms_error(40000, 6);
	const double fine = rms_error(640000, 6);  // 16x the records
	INFO("rms " << coarse << " at 40k vs " << fine << " at 640k; ratio " << coarse / fine);
	CHECK(coarse / fine > 2.5);
	CHECK(coarse / fine < 6.0);
}

TEST_CASE("delta-method standard errors track the bootstrap") {
	const SearchConfig cfg;
	const auto spec = panel_spec();
	const Panel panel = simulate_search_panel(cfg, spec, 20000, kSeed);
	const std::vector<double> w(panel.rows.size(), 1.0);
	const auto notice = panel.notice();
	const auto duration = panel.duration();
	const auto censored = panel.censored();

	const auto fit = gmm_estimate(notice, duration, censored, w, 2, np_spec());
	const auto boot = bootstrap_se(notice, duration, censored, w, 2, np_spec(), 100, kSeed, 1);

	REQUIRE(boot.size() == fit.se.size());
	double worst = 0.0;
	for (std::size_t j = 0; j < boot.size(); ++j) {
		const double ratio = fit.se[j] / boot[j];
		worst = std::max(worst, std::abs(ratio - 1.0));
		INFO("parameter " << j << ": delta " << fit.se[j] << ", bootstrap " << boot[j]);
		// diagnostic target is 15%; gate loosely so genuine breakage still fails
		CHECK(ratio > 0.5);
		CHECK(ratio < 2.0);
	}
	if (worst > 0.15)
		WARN("delta-method and bootstrap SEs differ by up to "
		     << 100.0 * worst << "% (diagnostic threshold 15%)");
}
