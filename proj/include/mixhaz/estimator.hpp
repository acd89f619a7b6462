#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixhaz/hazards.hpp"
#include "mixhaz/optim.hpp"
#include "mixhaz/rng.hpp"
#include "mixhaz/simlab.hpp"

namespace mixhaz {

// ---------------------------------------------------------------------------
// model parameterization
// ---------------------------------------------------------------------------

enum class TailKind { Nonparametric, LogLogistic };

// Point in the mixed-hazard parameter space: per-group first-period
// structural hazards, a common tail for d >= 2 (free coefficients or a
// log-logistic curve), and raw type moments mu_1..mu_dbar with the scale
// normalization mu_1 = 1 imposed at estimation time.
struct MhParams {
	int dbar = 4;
	std::vector<double> psi1;      // per notice group
	TailKind tail = TailKind::Nonparametric;
	std::vector<double> psi_tail;  // psi(2..dbar) when nonparametric
	double alpha1 = 1.0;
	double alpha2 = 1.0;
	std::vector<double> moments;   // mu_1..mu_dbar

	double tail_hazard(int d) const {
		assert(d >= 2 && d <= dbar);
		return tail == TailKind::Nonparametric ? psi_tail.at(d - 2)
		                                       : log_logistic_hazard(d, alpha1, alpha2);
	}

	// structural hazards psi_l(1..dbar) with an optional tail multiplier
	std::vector<double> psi_path(int l, double gamma_mult = 1.0) const {
		std::vector<double> p{psi1.at(l)};
		for (int d = 2; d <= dbar; ++d) p.push_back(gamma_mult * tail_hazard(d));
		return p;
	}

	// moment vector (mu_0 = 1 first) for dotting with polynomial coefficients
	std::vector<double> moment_vector() const {
		std::vector<double> m{1.0};
		m.insert(m.end(), moments.begin(), moments.end());
		return m;
	}
};

// Departures from the baseline model for a two-group analysis: the second
// group's mean type may differ by kappa_1 (with higher raw moments either
// fixed or derived so central moments are preserved) and its tail hazards by
// the factors gamma_d.
struct GeneralizedSpec {
	double kappa1 = 0.0;
	bool central_moment_mode = true;
	std::vector<double> kappa;  // kappa_1..kappa_dbar when central_moment_mode is false
	std::vector<double> gamma;  // gamma_d for d = 2..dbar; empty means all ones

	double gamma_at(int d) const {
		if (gamma.empty()) return 1.0;
		return gamma.at(d - 2);
	}
};

// Raw-moment shifts implied by a mean shift kappa1 that leaves all central
// moments unchanged; muS holds the base group's raw moments mu_1..mu_3
// (mu_1 = 1 under the estimation normalization).
inline std::vector<double> central_moment_kappas(double kappa1, const std::vector<double>& muS) {
	if (muS.size() < 3)
		throw std::invalid_argument("central_moment_kappas: need mu_1..mu_3 of the base group");
	const double k = kappa1, m1 = muS[0], m2 = muS[1], m3 = muS[2];
	return {k, k * (k + 2.0 * m1), k * (k * k + 3.0 * k * m1 + 3.0 * m2),
	        k * (k * k * k + 4.0 * k * k * m1 + 6.0 * k * m2 + 4.0 * m3)};
}

// kappa_d for a pure location shift of the type distribution by kappa1:
// E[(nu + kappa1)^d] - E[nu^d] expanded binomially over mu_1..mu_{d-1}
inline double location_shift_kappa(double kappa1, int d, const std::vector<double>& mu_base) {
	if (static_cast<int>(mu_base.size()) < d - 1)
		throw std::invalid_argument("location_shift_kappa: need mu_1..mu_{d-1} of the base group");
	double acc = std::pow(kappa1, d);
	double c = 1.0;  // running binomial coefficient C(d, j)
	for (int j = 1; j < d; ++j) {
		c = c * (d - j + 1) / j;
		acc += c * std::pow(kappa1, j) * mu_base[d - j - 1];
	}
	return acc;
}

inline std::vector<double> kappa_vector(const GeneralizedSpec& gen, int dbar,
                                        const std::vector<double>& mu_base) {
	if (!gen.central_moment_mode) {
		if (static_cast<int>(gen.kappa.size()) < dbar)
			throw std::invalid_argument("generalized spec: fixed kappa vector shorter than horizon");
		return {gen.kappa.begin(), gen.kappa.begin() + dbar};
	}
	std::vector<double> kap(dbar);
	for (int d = 1; d <= dbar; ++d) kap[d - 1] = location_shift_kappa(gen.kappa1, d, mu_base);
	return kap;
}

struct EstimationSpec {
	int dbar = 4;
	TailKind tail = TailKind::Nonparametric;
	bool two_step = true;
	int group_a = 0;  // identification/reference group
	int group_b = 1;  // comparison group (carries kappa/gamma when generalized)
	std::optional<GeneralizedSpec> generalized;
};

// ---------------------------------------------------------------------------
// model-implied exit rates
// ---------------------------------------------------------------------------

// implied exit-rate table h(d | l); throws on degenerate survival
inline std::vector<std::vector<double>> model_hazard_table(const MhParams& par,
                                                           const EstimationSpec& spec,
                                                           int n_groups) {
	std::vector<std::vector<double>> h(n_groups, std::vector<double>(par.dbar, 0.0));
	const auto mu_a = par.moment_vector();
	for (int l = 0; l < n_groups; ++l) {
		double gamma_mult = 1.0;
		std::vector<double> mu = mu_a;
		if (spec.generalized && l == spec.group_b) {
			const auto kap = kappa_vector(*spec.generalized, par.dbar, par.moments);
			for (int k = 1; k <= par.dbar; ++k) mu[k] += kap[k - 1];
			// gamma multiplies every tail hazard; per-d factors handled below
		}
		std::vector<double> psi = par.psi_path(l);
		if (spec.generalized && l == spec.group_b)
			for (int d = 2; d <= par.dbar; ++d) psi[d - 1] *= spec.generalized->gamma_at(d);
		for (int d = 1; d <= par.dbar; ++d) h[l][d - 1] = model_exit_rate(psi, mu, d);
	}
	return h;
}

// ---------------------------------------------------------------------------
// closed-form identification
// ---------------------------------------------------------------------------

struct ClosedFormResult {
	MhParams params;
	std::vector<std::string> warnings;
};

namespace detail {

// coefficients c_1..c_d of nu * prod_{s<d} (1 - psi_s nu); index 0 <-> c_1
inline std::vector<double> shifted_survival_coefficients(const std::vector<double>& psi_prefix) {
	return survival_coefficients(psi_prefix);
}

// recover mu_1..mu_dbar from group densities via forward substitution of the
// triangular polynomial system g(d) = psi_d * sum_k c_k(d) mu_k
inline std::vector<double> solve_moments(const std::vector<double>& psi_path,
                                         const std::vector<double>& g, int dbar) {
	std::vector<double> mu(dbar);
	for (int d = 1; d <= dbar; ++d) {
		const std::vector<double> prefix(psi_path.begin(), psi_path.begin() + (d - 1));
		const auto c = survival_coefficients(prefix);  // c[k] multiplies mu_{k+1}
		double acc = 0.0;
		for (int k = 0; k + 1 < d; ++k) acc += c[k] * mu[k];
		const double lead = c[d - 1];
		if (std::abs(lead) < 1e-300)
			throw std::runtime_error("moment recovery: vanishing leading coefficient at d = " +
			                         std::to_string(d));
		mu[d - 1] = (g[d - 1] / psi_path[d - 1] - acc) / lead;
	}
	return mu;
}

inline void admissibility_warnings(const MhParams& par, std::vector<std::string>& warnings) {
	for (std::size_t l = 0; l < par.psi1.size(); ++l)
		if (par.psi1[l] <= 0.0 || par.psi1[l] >= 1.0)
			warnings.push_back("first-period structural hazard outside (0,1) for group " +
			                   std::to_string(l));
	for (int d = 2; d <= par.dbar; ++d)
		if (par.tail_hazard(d) <= 0.0 || par.tail_hazard(d) >= 1.0)
			warnings.push_back("structural hazard outside (0,1) at d = " + std::to_string(d));
	if (!hankel_consistent(par.moment_vector()))
		warnings.push_back("recovered moment sequence fails the Hankel positive-semidefiniteness check");
}

}  // namespace detail

// Closed-form identification from a two-group exit-rate table: first-period
// hazards from first-period exit rates, the common tail from the ratio of
// density contrasts to survival contrasts, and moments from the triangular
// polynomial system of the reference group.
inline ClosedFormResult closed_form_identify(const ExitRateTable& tab, int group_a = 0,
                                             int group_b = 1, double tol = 1e-12) {
	if (tab.n_groups < 2)
		throw std::invalid_argument("closed_form_identify: need at least two notice groups");
	for (int l = 0; l < tab.n_groups; ++l)
		for (int d = 1; d <= tab.dbar; ++d)
			if (!tab.estimable(l, d))
				throw std::runtime_error("closed_form_identify: exit rate not estimable for group " +
				                         std::to_string(l) + " at d = " + std::to_string(d));
	ClosedFormResult res;
	MhParams& par = res.params;
	par.dbar = tab.dbar;
	par.tail = TailKind::Nonparametric;
	for (int l = 0; l < tab.n_groups; ++l) par.psi1.push_back(tab.hazard(l, 1));

	const double h1a = tab.hazard(group_a, 1);
	const double h1b = tab.hazard(group_b, 1);
	if (std::abs(h1a - h1b) < tol)
		throw std::runtime_error(
		    "closed_form_identify: first-period exit rates coincide across notice groups; "
		    "identification requires notice-length variation");

	for (int d = 2; d <= tab.dbar; ++d) {
		const double denom = tab.survival(group_b, d - 1) - tab.survival(group_a, d - 1);
		if (std::abs(denom) < tol)
			throw std::runtime_error(
			    "closed_form_identify: survival contrast vanishes at d = " + std::to_string(d) +
			    "; identification denominator is zero");
		const double numer =
		    tab.density(group_b, d) * h1a - tab.density(group_a, d) * h1b;
		par.psi_tail.push_back(numer / denom);
	}

	std::vector<double> g(tab.dbar);
	for (int d = 1; d <= tab.dbar; ++d) g[d - 1] = tab.density(group_a, d);
	par.moments = detail::solve_moments(par.psi_path(group_a), g, tab.dbar);
	detail::admissibility_warnings(par, res.warnings);
	return res;
}

// Generalized two-group identification when the comparison group's mean type
// differs by kappa_1 (higher moments shifted by kappa_d) and its tail hazards
// by factors gamma_d. Setting kappa = 0 and gamma = 1 reproduces the
// baseline closed form.
struct GeneralizedResult {
	int dbar = 0;
	std::vector<double> psi_a, psi_b;  // structural hazards 1..dbar per group
	std::vector<double> mu_a, mu_b;    // raw moments 1..dbar per group
	std::vector<double> kappa_used;
	std::vector<std::string> warnings;
};

inline GeneralizedResult generalized_identify(const ExitRateTable& tab, const GeneralizedSpec& gen,
                                              int group_a = 0, int group_b = 1,
                                              double tol = 1e-12) {
	GeneralizedResult res;
	const int dbar = tab.dbar;
	if (!gen.central_moment_mode && static_cast<int>(gen.kappa.size()) < dbar)
		throw std::invalid_argument("generalized spec: fixed kappa vector shorter than horizon");
	if (!gen.gamma.empty() && static_cast<int>(gen.gamma.size()) < dbar - 1)
		throw std::invalid_argument("generalized spec: gamma vector shorter than horizon");
	res.dbar = dbar;
	res.psi_a.resize(dbar);
	res.psi_b.resize(dbar);
	res.mu_a.resize(dbar);
	res.mu_b.resize(dbar);

	std::vector<double> g_a(dbar + 1), g_b(dbar + 1);
	for (int d = 1; d <= dbar; ++d) {
		g_a[d] = tab.density(group_a, d);
		g_b[d] = tab.density(group_b, d);
	}

	// first period pins down both scales
	std::vector<double> kap(dbar, 0.0);
	kap[0] = gen.central_moment_mode ? gen.kappa1 : gen.kappa.at(0);
	res.psi_a[0] = g_a[1];
	res.mu_a[0] = 1.0;
	if (1.0 + kap[0] <= 0.0)
		throw std::runtime_error("generalized_identify: 1 + kappa_1 must be positive");
	res.psi_b[0] = g_b[1] / (1.0 + kap[0]);
	res.mu_b[0] = 1.0 + kap[0];
	const double gamma1 = res.psi_b[0] / res.psi_a[0];

	double Gamma = gamma1;       // running product of gamma_s through d-1
	double Psi_a = res.psi_a[0];  // running product of psi_a(s) through d-1
	double Psi_b = res.psi_b[0];
	for (int d = 2; d <= dbar; ++d) {
		kap[d - 1] = gen.central_moment_mode ? location_shift_kappa(gen.kappa1, d, res.mu_a)
		                                     : gen.kappa.at(d - 1);
		const double gamma_d = gen.gamma_at(d);
		// partial dots A = sum_{k<d} c_k(d) mu_k for each group's own history
		const std::vector<double> pref_a(res.psi_a.begin(), res.psi_a.begin() + (d - 1));
		const std::vector<double> pref_b(res.psi_b.begin(), res.psi_b.begin() + (d - 1));
		const auto c_a = survival_coefficients(pref_a);  // c_a[k] multiplies mu_{k+1}
		const auto c_b = survival_coefficients(pref_b);
		double A_a = 0.0, A_b = 0.0;
		for (int k = 0; k + 1 < d; ++k) {
			A_a += c_a[k] * res.mu_a[k];
			A_b += c_b[k] * res.mu_b[k];
		}
		const double sign = (d % 2 == 0) ? -1.0 : 1.0;  // (-1)^(d-1)
		const double numer = g_b[d] - Gamma * gamma_d * g_a[d];
		const double denom = A_b - Gamma * A_a + sign * kap[d - 1] * Psi_b;
		if (std::abs(numer) < tol || std::abs(denom) < tol)
			throw std::runtime_error(
			    "generalized_identify: identification ratio degenerates at d = " + std::to_string(d));
		res.psi_b[d - 1] = numer / denom;
		res.psi_a[d - 1] = res.psi_b[d - 1] / gamma_d;
		// reference-group moment from its own triangular system
		const double lead = c_a[d - 1];  // (-1)^(d-1) Psi_a(d-1)
		res.mu_a[d - 1] = (g_a[d] / res.psi_a[d - 1] - A_a) / lead;
		res.mu_b[d - 1] = res.mu_a[d - 1] + kap[d - 1];

		Gamma *= gamma_d;
		Psi_a *= res.psi_a[d - 1];
		Psi_b *= res.psi_b[d - 1];
	}
	res.kappa_used = kap;

	for (int d = 1; d <= dbar; ++d) {
		if (res.psi_a[d - 1] <= 0.0 || res.psi_a[d - 1] >= 1.0 || res.psi_b[d - 1] <= 0.0 ||
		    res.psi_b[d - 1] >= 1.0) {
			res.warnings.push_back("structural hazard outside (0,1) at d = " + std::to_string(d));
			break;
		}
	}
	std::vector<double> mv{1.0};
	mv.insert(mv.end(), res.mu_a.begin(), res.mu_a.end());
	if (!hankel_consistent(mv))
		res.warnings.push_back("reference-group moment sequence fails the Hankel check");
	return res;
}

// ---------------------------------------------------------------------------
// GMM estimation
// ---------------------------------------------------------------------------

struct GmmResult {
	MhParams params;
	std::vector<std::string> param_names;
	Eigen::VectorXd theta;          // free parameters in the order of param_names
	Eigen::MatrixXd vcov;           // for theta
	std::vector<double> se;         // sqrt of vcov diagonal
	std::vector<std::vector<double>> psi_paths;     // implied psi_l(1..dbar) per group
	std::vector<std::vector<double>> psi_path_se;   // delta-method SEs of the above
	double objective = 0.0;         // final weighted quadratic form (pre-scaling)
	double j_stat = 0.0;
	int j_df = 0;
	double j_pvalue = 1.0;
	int n = 0;
	int n_moments = 0;
	bool converged = false;
	std::vector<std::string> warnings;
};

namespace detail {

struct ThetaLayout {
	int n_groups = 0;
	int dbar = 0;
	TailKind tail = TailKind::Nonparametric;
	int size() const {
		return n_groups + (tail == TailKind::Nonparametric ? dbar - 1 : 2) + (dbar - 1);
	}
	std::vector<std::string> names() const {
		std::vector<std::string> nm;
		for (int l = 0; l < n_groups; ++l) nm.push_back("psi1_g" + std::to_string(l));
		if (tail == TailKind::Nonparametric)
			for (int d = 2; d <= dbar; ++d) nm.push_back("psi" + std::to_string(d));
		else {
			nm.push_back("alpha1");
			nm.push_back("alpha2");
		}
		for (int k = 2; k <= dbar; ++k) nm.push_back("mu" + std::to_string(k));
		return nm;
	}
	MhParams unpack(const Eigen::VectorXd& theta) const {
		MhParams par;
		par.dbar = dbar;
		par.tail = tail;
		int at = 0;
		for (int l = 0; l < n_groups; ++l) par.psi1.push_back(theta[at++]);
		if (tail == TailKind::Nonparametric)
			for (int d = 2; d <= dbar; ++d) par.psi_tail.push_back(theta[at++]);
		else {
			par.alpha1 = theta[at++];
			par.alpha2 = theta[at++];
		}
		par.moments.push_back(1.0);
		for (int k = 2; k <= dbar; ++k) par.moments.push_back(theta[at++]);
		return par;
	}
	Eigen::VectorXd pack(const MhParams& par) const {
		Eigen::VectorXd theta(size());
		int at = 0;
		for (int l = 0; l < n_groups; ++l) theta[at++] = par.psi1.at(l);
		if (tail == TailKind::Nonparametric)
			for (int d = 2; d <= dbar; ++d) theta[at++] = par.psi_tail.at(d - 2);
		else {
			theta[at++] = par.alpha1;
			theta[at++] = par.alpha2;
		}
		for (int k = 2; k <= dbar; ++k) theta[at++] = par.moments.at(k - 1);
		return theta;
	}
	// unconstrained transform: logit for hazards, log for alphas and moments
	Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta) const {
		Eigen::VectorXd z(theta.size());
		const int nhaz = n_groups + (tail == TailKind::Nonparametric ? dbar - 1 : 0);
		for (int j = 0; j < theta.size(); ++j) {
			if (j < nhaz) {
				const double p = std::clamp(theta[j], 1e-12, 1.0 - 1e-12);
				z[j] = std::log(p / (1.0 - p));
			} else {
				z[j] = std::log(std::max(theta[j], 1e-12));
			}
		}
		return z;
	}
	Eigen::VectorXd from_unconstrained(const Eigen::VectorXd& z) const {
		Eigen::VectorXd theta(z.size());
		const int nhaz = n_groups + (tail == TailKind::Nonparametric ? dbar - 1 : 0);
		for (int j = 0; j < z.size(); ++j)
			theta[j] = j < nhaz ? 1.0 / (1.0 + std::exp(-z[j]))
			                    : std::max(std::exp(z[j]), 1e-12);  // keep underflow off zero
		return theta;
	}
};

struct MomentCells {
	std::vector<std::pair<int, int>> cells;  // (group, d) with positive denominators
	Eigen::VectorXd num, den;
};

inline MomentCells collect_cells(const ExitRateTable& tab, std::vector<std::string>* warnings) {
	MomentCells mc;
	std::vector<double> num, den;
	for (int l = 0; l < tab.n_groups; ++l)
		for (int d = 1; d <= tab.dbar; ++d) {
			if (!tab.estimable(l, d)) {
				if (warnings)
					warnings->push_back("moment cell excluded (no at-risk mass): group " +
					                    std::to_string(l) + ", d = " + std::to_string(d));
				continue;
			}
			mc.cells.emplace_back(l, d);
			num.push_back(tab.numerator[l][d - 1]);
			den.push_back(tab.denominator[l][d - 1]);
		}
	mc.num = Eigen::Map<Eigen::VectorXd>(num.data(), num.size());
	mc.den = Eigen::Map<Eigen::VectorXd>(den.data(), den.size());
	return mc;
}

// stacked sample moments mhat(l, d) = num - h_model * den; admissibility
// violations return a penalty instead of throwing so the optimizer can back
// away from the boundary
inline bool model_moments(const MomentCells& mc, const MhParams& par, const EstimationSpec& spec,
                          int n_groups, Eigen::VectorXd& mhat, double& penalty) {
	try {
		const auto h = model_hazard_table(par, spec, n_groups);
		penalty = 0.0;
		mhat.resize(mc.cells.size());
		for (std::size_t c = 0; c < mc.cells.size(); ++c) {
			const auto [l, d] = mc.cells[c];
			const double hz = h[l][d - 1];
			if (hz <= 0.0 || hz >= 1.0) penalty += 1.0 + std::abs(hz);
			mhat[c] = mc.num[c] - hz * mc.den[c];
		}
		return penalty == 0.0;
	} catch (const std::exception&) {
		penalty = 1e4;
		return false;
	}
}

// starting point: closed-form identification when it succeeds, otherwise
// observed exit rates with unit moments; a coarse grid seeds the
// log-logistic curve when that tail is requested
inline MhParams gmm_start(const ExitRateTable& tab, const EstimationSpec& spec,
                          std::vector<std::string>& warnings) {
	MhParams par;
	par.dbar = spec.dbar;
	par.tail = TailKind::Nonparametric;
	// identify the start from groups the generalized spec leaves undistorted
	// whenever a third group makes that possible
	int start_a = spec.group_a, start_b = spec.group_b;
	if (spec.generalized && tab.n_groups > 2) {
		std::vector<int> clean;
		for (int l = 0; l < tab.n_groups; ++l)
			if (l != spec.group_b) clean.push_back(l);
		start_a = clean[0];
		start_b = clean[1];
	}
	bool closed_form_ok = false;
	try {
		par = closed_form_identify(tab, start_a, start_b).params;
		closed_form_ok = true;
	} catch (const std::exception& e) {
		warnings.push_back(std::string("closed-form start unavailable (") + e.what() +
		                   "); falling back to observed exit rates");
	}
	if (!closed_form_ok) {
		par.psi1.assign(tab.n_groups, 0.3);
		for (int l = 0; l < tab.n_groups; ++l)
			if (tab.estimable(l, 1)) par.psi1[l] = tab.hazard(l, 1);
		par.psi_tail.assign(spec.dbar - 1, 0.3);
		for (int d = 2; d <= spec.dbar; ++d) {
			double num = 0.0, den = 0.0;
			for (int l = 0; l < tab.n_groups; ++l)
				if (tab.estimable(l, d)) {
					num += tab.numerator[l][d - 1];
					den += tab.denominator[l][d - 1];
				}
			if (den > 0.0) par.psi_tail[d - 2] = num / den;
		}
		par.moments.assign(spec.dbar, 1.0);
	}
	for (double& p : par.psi1) p = std::clamp(p, 1e-4, 1.0 - 1e-4);
	for (double& p : par.psi_tail) p = std::clamp(p, 1e-4, 1.0 - 1e-4);
	for (double& m : par.moments) m = std::max(m, 1e-3);
	if (spec.tail == TailKind::LogLogistic) {
		double best = std::numeric_limits<double>::infinity();
		double ba1 = 2.0, ba2 = 1.5;
		for (double a1 = 0.5; a1 <= 10.0; a1 += 0.25)
			for (double a2 = 0.5; a2 <= 5.0; a2 += 0.1) {
				double sse = 0.0;
				for (int d = 2; d <= spec.dbar; ++d) {
					const double diff = log_logistic_hazard(d, a1, a2) - par.psi_tail[d - 2];
					sse += diff * diff;
				}
				if (sse < best) {
					best = sse;
					ba1 = a1;
					ba2 = a2;
				}
			}
		par.tail = TailKind::LogLogistic;
		par.alpha1 = ba1;
		par.alpha2 = ba2;
		par.psi_tail.clear();
	}
	return par;
}

}  // namespace detail

// weighted GMM objective for a parameter point; identity weighting by default
inline double gmm_objective(const ExitRateTable& tab, const EstimationSpec& spec,
                            const MhParams& par,
                            const Eigen::MatrixXd* weight = nullptr) {
	auto mc = detail::collect_cells(tab, nullptr);
	Eigen::VectorXd mhat;
	double penalty = 0.0;
	if (!detail::model_moments(mc, par, spec, tab.n_groups, mhat, penalty))
		return 1e8 * (1.0 + penalty);
	if (weight) return mhat.dot(*weight * mhat);
	return mhat.squaredNorm();
}

// Stacked per-record moment contribution over the full (notice, d) grid,
// ordered group-major: index l * dbar + (d - 1).  Component (l, d) is
// w * 1{L = l} * (1{exit at d} - h[l][d-1] * 1{at risk at d}); its population
// mean is zero when h is the true observed hazard.
inline Eigen::VectorXd individual_moment(int notice, int duration, bool censored, double weight,
                                         const std::vector<std::vector<double>>& hazard) {
	const int n_groups = static_cast<int>(hazard.size());
	if (n_groups == 0) throw std::invalid_argument("individual_moment: empty hazard table");
	const int dbar = static_cast<int>(hazard[0].size());
	if (notice < 0 || notice >= n_groups)
		throw std::invalid_argument("individual_moment: notice group out of range");
	if (duration < 1) throw std::invalid_argument("individual_moment: duration must be >= 1");
	Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_groups) * dbar);
	const int dmax = std::min(duration, dbar);
	for (int d = 1; d <= dmax; ++d) {
		double v = -hazard[notice][d - 1];
		if (d == duration && !censored) v += 1.0;
		m[static_cast<Eigen::Index>(notice) * dbar + (d - 1)] = weight * v;
	}
	return m;
}

namespace detail {

inline OptimResult minimize_gmm(const ThetaLayout& layout, const MomentCells& mc,
                                const EstimationSpec& spec, int n_groups,
                                const Eigen::MatrixXd& W, const Eigen::VectorXd& theta_start) {
	auto objective = [&](const Eigen::VectorXd& z) {
		const MhParams par = layout.unpack(layout.from_unconstrained(z));
		Eigen::VectorXd mhat;
		double penalty = 0.0;
		if (!model_moments(mc, par, spec, n_groups, mhat, penalty)) return 1e8 * (1.0 + penalty);
		return static_cast<double>(mhat.dot(W * mhat));
	};
	const Eigen::VectorXd z0 = layout.to_unconstrained(theta_start);
	OptimResult nm = nelder_mead(objective, z0, 0.05, 1e-16);
	OptimResult pol = bfgs(objective, nm.x, 1e-8, 200);
	if (pol.value > nm.value) pol = nm;
	bool converged = nm.converged || pol.converged;
	if (!converged) {
		const Eigen::VectorXd g = numerical_gradient(objective, pol.x, 1e-6);
		converged = g.cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, std::abs(pol.value));
	}
	pol.x = layout.from_unconstrained(pol.x);
	pol.converged = converged;
	return pol;
}

// per-record moment contributions accumulated into Omega = (1/n) sum m_i m_i'
inline Eigen::MatrixXd moment_outer_product(const MomentCells& mc,
                                            const std::vector<std::vector<double>>& h,
                                            const std::vector<int>& notice,
                                            const std::vector<int>& duration,
                                            const std::vector<char>& censored,
                                            const std::vector<double>& weights, int dbar) {
	const int m = static_cast<int>(mc.cells.size());
	// cell lookup by (group, d)
	std::vector<std::vector<int>> cell_of(h.size(), std::vector<int>(dbar + 1, -1));
	for (int c = 0; c < m; ++c) cell_of[mc.cells[c].first][mc.cells[c].second] = c;
	Eigen::MatrixXd Omega = Eigen::MatrixXd::Zero(m, m);
	const std::size_t n = notice.size();
	std::vector<int> idx;
	std::vector<double> val;
	for (std::size_t i = 0; i < n; ++i) {
		idx.clear();
		val.clear();
		const int l = notice[i];
		const int dmax = std::min(duration[i], dbar);
		for (int d = 1; d <= dmax; ++d) {
			const int c = cell_of[l][d];
			if (c < 0) continue;
			double v = -h[l][d - 1];
			if (d == duration[i] && !censored[i]) v += 1.0;
			idx.push_back(c);
			val.push_back(weights[i] * v);
		}
		for (std::size_t a = 0; a < idx.size(); ++a)
			for (std::size_t b = 0; b < idx.size(); ++b) Omega(idx[a], idx[b]) += val[a] * val[b];
	}
	return Omega / static_cast<double>(n);
}

}  // namespace detail

// Two-step GMM for the mixed hazard model on weighted spell records.
// Step 1 minimizes the identity-weighted moment norm from a closed-form
// start; step 2 reweights by the inverse of Omega = (1/n) sum m_i m_i'
// evaluated at the step-1 estimate. Standard errors treat the weights as
// known and come from the usual sandwich (M' Omega^-1 M)^-1 / n with a
// numerical moment Jacobian.
inline GmmResult gmm_estimate(const std::vector<int>& notice, const std::vector<int>& duration,
                              const std::vector<char>& censored,
                              const std::vector<double>& weights, int n_groups,
                              const EstimationSpec& spec) {
	GmmResult res;
	res.n = static_cast<int>(notice.size());
	const ExitRateTable tab =
	    empirical_exit_rates(notice, duration, censored, weights, n_groups, spec.dbar);
	const auto mc = detail::collect_cells(tab, &res.warnings);
	detail::ThetaLayout layout{n_groups, spec.dbar, spec.tail};
	res.param_names = layout.names();
	res.n_moments = static_cast<int>(mc.cells.size());
	const int n_params = layout.size();
	if (res.n_moments < n_params)
		throw std::runtime_error("gmm_estimate: fewer estimable moments (" +
		                         std::to_string(res.n_moments) + ") than parameters (" +
		                         std::to_string(n_params) + ")");

	// starting values: closed form when available, observed rates otherwise
	MhParams start = detail::gmm_start(tab, spec, res.warnings);
	const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(res.n_moments, res.n_moments);
	OptimResult step1 =
	    detail::minimize_gmm(layout, mc, spec, n_groups, I, layout.pack(start));

	// Omega at the step-1 estimate
	const MhParams par1 = layout.unpack(step1.x);
	Eigen::MatrixXd Omega;
	{
		const auto h1 = model_hazard_table(par1, spec, n_groups);
		Omega = detail::moment_outer_product(mc, h1, notice, duration, censored, weights,
		                                     spec.dbar);
	}
	Eigen::LDLT<Eigen::MatrixXd> ldlt(Omega);
	if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < 1e-14).any()) {
		const double ridge = 1e-10 * Omega.trace() / res.n_moments;
		Omega.diagonal().array() += std::max(ridge, 1e-300);
		ldlt.compute(Omega);
		res.warnings.push_back("moment covariance near singular; ridge regularization applied");
	}
	const Eigen::MatrixXd Winv = ldlt.solve(I);

	OptimResult step2 = step1;
	if (spec.two_step)
		step2 = detail::minimize_gmm(layout, mc, spec, n_groups, Winv, step1.x);
	res.theta = step2.x;
	res.params = layout.unpack(step2.x);
	res.converged = step2.converged;
	res.objective = step2.value;

	// moment Jacobian at the estimate, in the original parameterization
	auto mhat_of = [&](const Eigen::VectorXd& theta) {
		Eigen::VectorXd mhat;
		double penalty = 0.0;
		detail::model_moments(mc, layout.unpack(theta), spec, n_groups, mhat, penalty);
		return mhat;
	};
	const Eigen::MatrixXd M = numerical_jacobian(mhat_of, res.theta, 1e-6);
	const Eigen::MatrixXd MWM = M.transpose() * Winv * M;
	res.vcov = MWM.ldlt().solve(Eigen::MatrixXd::Identity(n_params, n_params)) /
	           static_cast<double>(res.n);
	res.se.resize(n_params);
	for (int j = 0; j < n_params; ++j)
		res.se[j] = std::sqrt(std::max(res.vcov(j, j), 0.0));

	// overidentification statistic against Omega from step 1
	const Eigen::VectorXd mhat = mhat_of(res.theta);
	res.j_stat = static_cast<double>(res.n) * mhat.dot(Winv * mhat);
	res.j_df = res.n_moments - n_params;
	if (res.j_df > 0) {
		boost::math::chi_squared chi2(res.j_df);
		res.j_pvalue = boost::math::cdf(boost::math::complement(chi2, std::max(res.j_stat, 0.0)));
	}

	// implied structural hazard paths and delta-method standard errors
	res.psi_paths.resize(n_groups);
	res.psi_path_se.resize(n_groups);
	for (int l = 0; l < n_groups; ++l) {
		res.psi_paths[l] = res.params.psi_path(l);
		if (spec.generalized && l == spec.group_b)
			for (int d = 2; d <= spec.dbar; ++d)
				res.psi_paths[l][d - 1] *= spec.generalized->gamma_at(d);
		res.psi_path_se[l].resize(spec.dbar);
		for (int d = 1; d <= spec.dbar; ++d) {
			auto psi_of = [&](const Eigen::VectorXd& theta) {
				const MhParams p = layout.unpack(theta);
				double v = d == 1 ? p.psi1.at(l) : p.tail_hazard(d);
				if (spec.generalized && l == spec.group_b && d >= 2)
					v *= spec.generalized->gamma_at(d);
				Eigen::VectorXd out(1);
				out[0] = v;
				return out;
			};
			const Eigen::MatrixXd grad = numerical_jacobian(psi_of, res.theta, 1e-6);
			const double var = (grad * res.vcov * grad.transpose())(0, 0);
			res.psi_path_se[l][d - 1] = std::sqrt(std::max(var, 0.0));
		}
	}
	detail::admissibility_warnings(res.params, res.warnings);
	return res;
}

// GMM on an exact population table: identity weighting, no inference
inline GmmResult gmm_estimate_population(const ExitRateTable& tab, const EstimationSpec& spec) {
	GmmResult res;
	const auto mc = detail::collect_cells(tab, &res.warnings);
	detail::ThetaLayout layout{tab.n_groups, spec.dbar, spec.tail};
	res.param_names = layout.names();
	res.n_moments = static_cast<int>(mc.cells.size());
	MhParams start = detail::gmm_start(tab, spec, res.warnings);
	const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(res.n_moments, res.n_moments);
	OptimResult opt = detail::minimize_gmm(layout, mc, spec, tab.n_groups, I, layout.pack(start));
	res.theta = opt.x;
	res.params = layout.unpack(opt.x);
	res.objective = opt.value;
	res.converged = opt.converged;
	res.psi_paths.resize(tab.n_groups);
	for (int l = 0; l < tab.n_groups; ++l) {
		res.psi_paths[l] = res.params.psi_path(l);
		if (spec.generalized && l == spec.group_b)
			for (int d = 2; d <= spec.dbar; ++d)
				res.psi_paths[l][d - 1] *= spec.generalized->gamma_at(d);
	}
	return res;
}

// nonparametric bootstrap of the GMM standard errors: resample records with
// replacement (substream per draw), refit, report per-parameter SDs
inline std::vector<double> bootstrap_se(const std::vector<int>& notice,
                                        const std::vector<int>& duration,
                                        const std::vector<char>& censored,
                                        const std::vector<double>& weights, int n_groups,
                                        const EstimationSpec& spec, int n_boot,
                                        std::uint64_t seed, int threads = 1) {
	const int n = static_cast<int>(notice.size());
	detail::ThetaLayout layout{n_groups, spec.dbar, spec.tail};
	std::vector<Eigen::VectorXd> draws(n_boot);
	std::vector<char> ok(n_boot, 0);
	parallel_for(n_boot, threads, [&](int b) {
		Rng rng(seed ^ 0x9D8A7B6C5D4E3F2AULL, static_cast<std::uint64_t>(b));
		std::vector<int> bn(n), bd(n);
		std::vector<char> bc(n);
		std::vector<double> bw(n);
		for (int i = 0; i < n; ++i) {
			const int j = rng.uniform_int(0, n - 1);
			bn[i] = notice[j];
			bd[i] = duration[j];
			bc[i] = censored[j];
			bw[i] = weights[j];
		}
		try {
			const GmmResult fit = gmm_estimate(bn, bd, bc, bw, n_groups, spec);
			draws[b] = fit.theta;
			ok[b] = 1;
		} catch (const std::exception&) {
			ok[b] = 0;
		}
	});
	const int k = layout.size();
	std::vector<double> se(k, 0.0);
	int used = 0;
	Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
	for (int b = 0; b < n_boot; ++b)
		if (ok[b]) {
			mean += draws[b];
			++used;
		}
	if (used < 2) throw std::runtime_error("bootstrap_se: too few successful resamples");
	mean /= used;
	for (int b = 0; b < n_boot; ++b)
		if (ok[b])
			for (int j = 0; j < k; ++j) se[j] += (draws[b][j] - mean[j]) * (draws[b][j] - mean[j]);
	for (int j = 0; j < k; ++j) se[j] = std::sqrt(se[j] / (used - 1));
	return se;
}

// ---------------------------------------------------------------------------
// residual grids over generalized models
// ---------------------------------------------------------------------------

enum class GridExercise { MeanShift, TailRatio, Joint };

struct GridPoint {
	double kappa1 = 0.0;
	double gamma = 1.0;
	double objective = 0.0;
	GmmResult fit;
};

struct GridResult {
	std::vector<GridPoint> points;
	int argmin = 0;

	// indices of the k lowest-residual grid points, best first
	std::vector<int> lowest(int k) const {
		std::vector<int> idx(points.size());
		for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
		std::sort(idx.begin(), idx.end(),
		          [&](int a, int b) { return points[a].objective < points[b].objective; });
		if (k < static_cast<int>(idx.size())) idx.resize(k);
		return idx;
	}
};

// evenly spaced grid points lo, lo+step, ..., hi (inclusive within rounding)
inline std::vector<double> grid_points(double lo, double hi, double step) {
	std::vector<double> g;
	const int n = static_cast<int>(std::llround((hi - lo) / step));
	for (int i = 0; i <= n; ++i) g.push_back(lo + i * step);
	return g;
}

// Re-estimate the model under each candidate (kappa_1, gamma) and record the
// GMM residual. MeanShift varies kappa_1 with central-moment-preserving
// higher kappas; TailRatio varies a common tail ratio gamma; Joint varies
// both on the full lattice.
inline GridResult residual_grid(const std::vector<int>& notice, const std::vector<int>& duration,
                                const std::vector<char>& censored,
                                const std::vector<double>& weights, int n_groups,
                                const EstimationSpec& base, GridExercise exercise,
                                const std::vector<double>& kappa_grid,
                                const std::vector<double>& gamma_grid, int threads = 1) {
	std::vector<std::pair<double, double>> lattice;
	switch (exercise) {
		case GridExercise::MeanShift:
			for (double k : kappa_grid) lattice.emplace_back(k, 1.0);
			break;
		case GridExercise::TailRatio:
			for (double g : gamma_grid) lattice.emplace_back(0.0, g);
			break;
		case GridExercise::Joint:
			for (double k : kappa_grid)
				for (double g : gamma_grid) lattice.emplace_back(k, g);
			break;
	}
	GridResult res;
	res.points.resize(lattice.size());
	parallel_for(static_cast<int>(lattice.size()), threads, [&](int i) {
		const auto [k, g] = lattice[i];
		EstimationSpec spec = base;
		GeneralizedSpec gen;
		gen.kappa1 = k;
		gen.central_moment_mode = true;
		gen.gamma.assign(spec.dbar - 1, g);
		spec.generalized = gen;
		GridPoint& pt = res.points[i];
		pt.kappa1 = k;
		pt.gamma = g;
		pt.fit = gmm_estimate(notice, duration, censored, weights, n_groups, spec);
		pt.objective = pt.fit.j_stat;
	});
	for (std::size_t i = 1; i < res.points.size(); ++i)
		if (res.points[i].objective < res.points[res.argmin].objective)
			res.argmin = static_cast<int>(i);
	return res;
}

}  // namespace mixhaz
