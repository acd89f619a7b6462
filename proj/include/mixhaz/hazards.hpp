#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixhaz/rng.hpp"

namespace mixhaz {

// Discrete-time mixed proportional hazard building blocks. An individual of
// type nu exits in period d with probability psi(d) * nu conditional on
// survival, where psi is the structural (duration-dependence) component and
// nu is a permanent unobserved multiplier. All population quantities are
// polynomials in nu, so expectations reduce to dot products with raw moments.

// hazard of the log-logistic duration family evaluated at (possibly real) d
inline double log_logistic_hazard(double d, double alpha1, double alpha2) {
	assert(alpha1 > 0.0 && alpha2 > 0.0);
	const double x = d / alpha1;
	return (alpha2 / alpha1) * std::pow(x, alpha2 - 1.0) / (1.0 + std::pow(x, alpha2));
}

// coefficients of prod_s (1 - psi_s * nu) as a polynomial in nu;
// index = power of nu, size = psi.size() + 1
inline std::vector<double> survival_coefficients(const std::vector<double>& psi) {
	std::vector<double> c{1.0};
	for (double p : psi) {
		std::vector<double> next(c.size() + 1, 0.0);
		for (std::size_t k = 0; k < c.size(); ++k) {
			next[k] += c[k];
			next[k + 1] -= p * c[k];
		}
		c = std::move(next);
	}
	return c;
}

// coefficients of g(d | nu) = psi_d * nu * prod_{s<d} (1 - psi_s * nu),
// where psi = (psi_1, ..., psi_d); index = power of nu, constant term zero
inline std::vector<double> density_coefficients(const std::vector<double>& psi) {
	assert(!psi.empty());
	std::vector<double> s(psi.begin(), psi.end() - 1);
	std::vector<double> c = survival_coefficients(s);
	std::vector<double> g(c.size() + 1, 0.0);
	for (std::size_t k = 0; k < c.size(); ++k) g[k + 1] = psi.back() * c[k];
	return g;
}

// dot a coefficient vector with raw moments; moments[k] = E[nu^k], moments[0] = 1
inline double dot_moments(const std::vector<double>& coeffs, const std::vector<double>& moments) {
	if (coeffs.size() > moments.size())
		throw std::invalid_argument("dot_moments: need moments up to order " +
		                            std::to_string(coeffs.size() - 1));
	double acc = 0.0;
	for (std::size_t k = 0; k < coeffs.size(); ++k) acc += coeffs[k] * moments[k];
	return acc;
}

// E[ S(d | nu) ] where psi covers periods 1..d
inline double expected_survival(const std::vector<double>& psi, const std::vector<double>& moments) {
	return dot_moments(survival_coefficients(psi), moments);
}

// E[ g(d | nu) ] where psi covers periods 1..d
inline double expected_density(const std::vector<double>& psi, const std::vector<double>& moments) {
	return dot_moments(density_coefficients(psi), moments);
}

// population exit rate h(d) = E[g(d|nu)] / E[S(d-1|nu)] for the hazard path
// psi = (psi_1, ..., psi_D); moments[k] = E[nu^k]
inline double model_exit_rate(const std::vector<double>& psi, const std::vector<double>& moments,
                              int d) {
	assert(d >= 1 && d <= static_cast<int>(psi.size()));
	std::vector<double> prefix(psi.begin(), psi.begin() + d);
	const double den = expected_survival({prefix.begin(), prefix.end() - 1}, moments);
	if (den <= 0.0)
		throw std::runtime_error("model_exit_rate: degenerate survival expectation at d = " +
		                         std::to_string(d));
	return expected_density(prefix, moments) / den;
}

// mean type among survivors entering period d: E[nu | D >= d]
inline double average_type(const std::vector<double>& psi, const std::vector<double>& moments,
                           int d) {
	assert(d >= 1 && d <= static_cast<int>(psi.size()) + 1);
	std::vector<double> prefix(psi.begin(), psi.begin() + (d - 1));
	std::vector<double> c = survival_coefficients(prefix);
	std::vector<double> shifted(c.size() + 1, 0.0);
	for (std::size_t k = 0; k < c.size(); ++k) shifted[k + 1] = c[k];
	const double den = dot_moments(c, moments);
	if (den <= 0.0)
		throw std::runtime_error("average_type: degenerate survival expectation at d = " +
		                         std::to_string(d));
	return dot_moments(shifted, moments) / den;
}

// Hankel-matrix check that a candidate moment sequence (1, mu_1, ..., mu_K)
// could come from a distribution on [0, inf). Returns the most negative
// eigenvalue across the two Hankel matrices (>= -tol means consistent).
inline double hankel_min_eigenvalue(const std::vector<double>& moments) {
	const int K = static_cast<int>(moments.size()) - 1;
	assert(K >= 1);
	double worst = 0.0;
	for (int offset = 0; offset <= 1; ++offset) {
		const int m = (K - offset) / 2 + 1;
		if (m < 1) continue;
		Eigen::MatrixXd H(m, m);
		for (int i = 0; i < m; ++i)
			for (int j = 0; j < m; ++j) H(i, j) = moments[i + j + offset];
		Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
		worst = std::min(worst, es.eigenvalues().minCoeff());
	}
	return worst;
}

inline bool hankel_consistent(const std::vector<double>& moments, double tol = 1e-8) {
	return hankel_min_eigenvalue(moments) >= -tol;
}

// Unobserved type distribution on (0, nubar]. Either a finite mixture of
// point masses or a mixture of Beta distributions; both admit closed-form raw
// moments, which is all the population machinery needs.
struct TypeDistribution {
	// discrete component: support points with probabilities
	std::vector<double> support;
	std::vector<double> prob;
	// Beta mixture component: (a, b, weight) triples
	struct BetaComponent {
		double a, b, w;
	};
	std::vector<BetaComponent> betas;

	static TypeDistribution discrete(std::vector<double> points, std::vector<double> probs) {
		assert(points.size() == probs.size() && !points.empty());
		TypeDistribution t;
		t.support = std::move(points);
		t.prob = std::move(probs);
		return t;
	}

	static TypeDistribution beta_mixture(std::vector<BetaComponent> comps) {
		assert(!comps.empty());
		TypeDistribution t;
		t.betas = std::move(comps);
		return t;
	}

	bool is_discrete() const { return !support.empty(); }

	// E[nu^k]; Beta(a,b) raw moments are rising-factorial ratios
	double raw_moment(int k) const {
		assert(k >= 0);
		if (k == 0) return 1.0;
		double m = 0.0;
		if (is_discrete()) {
			for (std::size_t j = 0; j < support.size(); ++j)
				m += prob[j] * std::pow(support[j], k);
		} else {
			for (const auto& c : betas) {
				double term = 1.0;
				for (int j = 0; j < k; ++j) term *= (c.a + j) / (c.a + c.b + j);
				m += c.w * term;
			}
		}
		return m;
	}

	// E[(nu + shift)^k] via the binomial expansion of raw moments
	double shifted_raw_moment(int k, double shift) const {
		double m = 0.0;
		double binom = 1.0;
		for (int j = 0; j <= k; ++j) {
			m += binom * std::pow(shift, k - j) * raw_moment(j);
			binom = binom * (k - j) / (j + 1.0);
		}
		return m;
	}

	std::vector<double> raw_moments(int K, double shift = 0.0) const {
		std::vector<double> m(K + 1);
		for (int k = 0; k <= K; ++k)
			m[k] = shift == 0.0 ? raw_moment(k) : shifted_raw_moment(k, shift);
		return m;
	}

	double mean() const { return raw_moment(1); }

	double max_support() const {
		if (is_discrete()) return *std::max_element(support.begin(), support.end());
		return 1.0;
	}

	double draw(Rng& rng) const {
		if (is_discrete()) return support[rng.categorical(prob)];
		std::vector<double> w;
		w.reserve(betas.size());
		for (const auto& c : betas) w.push_back(c.w);
		const auto& c = betas[rng.categorical(w)];
		return rng.beta(c.a, c.b);
	}
};

// Exit-rate table per notice group and duration. numerator holds weighted
// uncensored exits, denominator weighted at-risk counts, both normalized by
// the full sample size so population tables can use densities and survivals
// directly.
struct ExitRateTable {
	int n_groups = 0;
	int dbar = 0;
	std::vector<std::vector<double>> numerator;    // [group][d-1]
	std::vector<std::vector<double>> denominator;  // [group][d-1]

	ExitRateTable() = default;
	ExitRateTable(int groups, int horizon)
	    : n_groups(groups),
	      dbar(horizon),
	      numerator(groups, std::vector<double>(horizon, 0.0)),
	      denominator(groups, std::vector<double>(horizon, 0.0)) {}

	bool estimable(int l, int d) const { return denominator[l][d - 1] > 0.0; }

	double hazard(int l, int d) const {
		if (!estimable(l, d))
			throw std::runtime_error("exit rate not estimable for group " + std::to_string(l) +
			                         " at d = " + std::to_string(d));
		return numerator[l][d - 1] / denominator[l][d - 1];
	}

	// product-form survival S(d) = prod_{s<=d} (1 - h(s)); S(0) = 1
	double survival(int l, int d) const {
		double s = 1.0;
		for (int u = 1; u <= d; ++u) s *= 1.0 - hazard(l, u);
		return s;
	}

	double density(int l, int d) const { return hazard(l, d) * survival(l, d - 1); }
};

// aggregate micro records into a weighted exit-rate table;
// durations > dbar are treated as right-censored at dbar + 1
inline ExitRateTable empirical_exit_rates(const std::vector<int>& notice,
                                          const std::vector<int>& duration,
                                          const std::vector<char>& censored,
                                          const std::vector<double>& weights, int n_groups,
                                          int dbar) {
	const std::size_t n = notice.size();
	assert(duration.size() == n && censored.size() == n && weights.size() == n);
	ExitRateTable tab(n_groups, dbar);
	for (std::size_t i = 0; i < n; ++i) {
		const int l = notice[i];
		assert(l >= 0 && l < n_groups);
		if (duration[i] < 1) throw std::invalid_argument("empirical_exit_rates: duration < 1");
		const double w = weights[i] / static_cast<double>(n);
		const int dmax = std::min(duration[i], dbar);
		for (int d = 1; d <= dmax; ++d) tab.denominator[l][d - 1] += w;
		if (!censored[i] && duration[i] <= dbar) tab.numerator[l][duration[i] - 1] += w;
	}
	return tab;
}

}  // namespace mixhaz
