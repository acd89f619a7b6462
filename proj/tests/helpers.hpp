#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "mixhaz/mixhaz.hpp"

namespace testutil {

inline mixhaz::Dgp three_point_dgp() {
	mixhaz::Dgp dgp;
	dgp.groups = {{0.5, 0.1, 1.0, 0.0}, {0.5, 0.2, 1.0, 0.0}};
	dgp.psi_tail = {0.15, 0.25, 0.2};
	dgp.dbar = 4;
	dgp.types = mixhaz::TypeDistribution::discrete({0.4, 1.0, 1.6}, {0.25, 0.5, 0.25});
	return dgp;
}

// Random two-group DGP with distinct first-period hazards, an interior
// nonparametric tail, and a spread-out three-point type distribution. All
// exit probabilities psi * nu stay below 1.
inline mixhaz::Dgp random_dgp(mixhaz::Rng& rng, int dbar = 4) {
	mixhaz::Dgp dgp;
	double a = 0.0, b = 0.0;
	do {
		a = rng.uniform(0.05, 0.35);
		b = rng.uniform(0.05, 0.35);
	} while (std::abs(a - b) < 0.03);
	dgp.groups = {{0.5, a, 1.0, 0.0}, {0.5, b, 1.0, 0.0}};
	dgp.psi_tail.clear();
	for (int d = 2; d <= dbar; ++d) dgp.psi_tail.push_back(rng.uniform(0.05, 0.35));
	dgp.dbar = dbar;
	const double lo = rng.uniform(0.3, 0.6);
	const double mid = rng.uniform(0.9, 1.1);
	const double hi = rng.uniform(1.3, 1.7);
	const double w1 = rng.uniform(0.2, 0.4);
	const double w3 = rng.uniform(0.2, 0.4);
	dgp.types = mixhaz::TypeDistribution::discrete({lo, mid, hi}, {w1, 1.0 - w1 - w3, w3});
	return dgp;
}

// Estimation imposes mu_1 = 1, so recovered parameters are the true ones
// rescaled by the mean type: psi * E[nu] and mu_k / E[nu]^k.
struct NormalizedTruth {
	std::vector<double> psi1;
	std::vector<double> psi_tail;
	std::vector<double> moments;  // mu_1..mu_dbar
};

inline NormalizedTruth normalized_truth(const mixhaz::Dgp& dgp) {
	NormalizedTruth t;
	const double m = dgp.types.mean();
	for (const auto& g : dgp.groups) t.psi1.push_back(g.psi1 * m);
	for (double p : dgp.psi_tail) t.psi_tail.push_back(p * m);
	const auto mu = dgp.types.raw_moments(dgp.dbar);
	for (int k = 1; k <= dgp.dbar; ++k) t.moments.push_back(mu[k] / std::pow(m, k));
	return t;
}

inline double mean(const std::vector<double>& v) {
	return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
	const double m = mean(v);
	double acc = 0.0;
	for (double x : v) acc += (x - m) * (x - m);
	return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

inline double skewness(const std::vector<double>& v) {
	const double m = mean(v);
	double m2 = 0.0, m3 = 0.0;
	for (double x : v) {
		const double c = x - m;
		m2 += c * c;
		m3 += c * c * c;
	}
	m2 /= static_cast<double>(v.size());
	m3 /= static_cast<double>(v.size());
	return m3 / std::pow(m2, 1.5);
}

}  // namespace testutil
