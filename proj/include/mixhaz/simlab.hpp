#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mixhaz/hazards.hpp"
#include "mixhaz/records.hpp"
#include "mixhaz/rng.hpp"

namespace mixhaz {

// A fully specified data-generating process for the mixed hazard model.
// Groups share the tail psi(2..dbar) up to a per-group multiplier gamma, and
// draw types from a common distribution up to a per-group location shift, so
// both the baseline model and its generalizations can be simulated exactly.
struct DgpGroup {
	double share = 0.5;
	double psi1 = 0.1;
	double gamma = 1.0;       // multiplies psi(d) for d >= 2
	double type_shift = 0.0;  // nu_group = nu + type_shift
};

// Independent censoring D^c: record becomes (D^c, censored) when D^c < D.
struct CensoringSpec {
	enum class Scheme { None, Uniform, Fixed };  // Uniform over {1, ..., dbar + 1}
	Scheme scheme = Scheme::None;
	int horizon = 1;  // D^c under the Fixed scheme
};

struct Dgp {
	std::vector<DgpGroup> groups;
	std::vector<double> psi_tail;  // psi(2..dbar) before the gamma multiplier
	TypeDistribution types = TypeDistribution::discrete({1.0}, {1.0});
	int dbar = 4;
	CensoringSpec censoring;

	int n_groups() const { return static_cast<int>(groups.size()); }

	// structural hazards psi_l(1..dbar)
	std::vector<double> psi_path(int l) const {
		const auto& g = groups.at(l);
		std::vector<double> p{g.psi1};
		for (double v : psi_tail) p.push_back(g.gamma * v);
		assert(static_cast<int>(p.size()) == dbar);
		return p;
	}

	std::vector<double> group_moments(int l, int order) const {
		return types.raw_moments(order, groups.at(l).type_shift);
	}

	// per-period exit probability for one individual, clamped to [0, 1]
	double exit_probability(int l, int d, double nu) const {
		const double p = psi_path(l).at(d - 1) * nu;
		return std::clamp(p, 0.0, 1.0);
	}
};

// Tail-shape cases used by the interval-binning robustness exercise:
// two groups with first-period hazards (0.1, 0.2), Weibull-style tail
// b * k^(d-1) over 12 periods, and a three-component Beta-mixture type.
inline Dgp make_binning_dgp(int tail_case) {
	if (tail_case < 1 || tail_case > 4)
		throw std::invalid_argument("make_binning_dgp: case must be 1..4");
	Dgp dgp;
	dgp.dbar = 12;
	dgp.groups = {{0.5, 0.1, 1.0, 0.0}, {0.5, 0.2, 1.0, 0.0}};
	dgp.types = TypeDistribution::beta_mixture({{0.1, 0.1, 0.5}, {0.3, 0.5, 0.1}, {0.25, 0.5, 0.4}});
	auto weibull = [](double b, double k, int d) { return b * std::pow(k, d - 1); };
	for (int d = 2; d <= dgp.dbar; ++d) {
		double v = 0.0;
		switch (tail_case) {
			case 1: v = weibull(0.2, 1.2, d); break;
			case 2: v = weibull(0.2, 0.75, d); break;
			case 3: v = weibull(0.15, 1.0, d); break;
			case 4: v = d <= 7 ? weibull(0.2, 1.2, d) : 1.75 * weibull(0.2, 0.75, d); break;
		}
		dgp.psi_tail.push_back(v);
	}
	return dgp;
}

// Exact population exit-rate table. Numerators are group densities g(d|l)
// and denominators survivals S(d-1|l), matching the scale of an inverse-
// propensity weighted empirical table.
inline ExitRateTable exact_exit_rates(const Dgp& dgp) {
	ExitRateTable tab(dgp.n_groups(), dgp.dbar);
	for (int l = 0; l < dgp.n_groups(); ++l) {
		const auto psi = dgp.psi_path(l);
		const auto mu = dgp.group_moments(l, dgp.dbar);
		for (int d = 1; d <= dgp.dbar; ++d) {
			std::vector<double> prefix(psi.begin(), psi.begin() + d);
			tab.numerator[l][d - 1] = expected_density(prefix, mu);
			tab.denominator[l][d - 1] =
			    expected_survival({prefix.begin(), prefix.end() - 1}, mu);
		}
	}
	return tab;
}

// Population table aggregated into intervals of bin_size consecutive
// periods, plus reference paths for each interval: the cumulative structural
// hazard 1 - prod_{s in I} (1 - psi_l(s) mu) evaluated at the evolving
// average surviving type mu = E[nu | D >= start(I), l] and at the fixed
// population mean type.
struct BinnedRates {
	int bin_size = 1;
	ExitRateTable table;                               // one row per interval
	std::vector<std::vector<double>> csh_evolving;     // [group][interval-1]
	std::vector<std::vector<double>> csh_mean_type;    // [group][interval-1]
	std::vector<std::vector<double>> avg_type_start;   // [group][interval-1]
};

inline BinnedRates bin_exit_rates(const Dgp& dgp, int bin_size) {
	if (bin_size < 1 || dgp.dbar % bin_size != 0)
		throw std::invalid_argument("bin_exit_rates: bin size must divide the horizon");
	const int n_bins = dgp.dbar / bin_size;
	BinnedRates out;
	out.bin_size = bin_size;
	out.table = ExitRateTable(dgp.n_groups(), n_bins);
	out.csh_evolving.assign(dgp.n_groups(), std::vector<double>(n_bins, 0.0));
	out.csh_mean_type.assign(dgp.n_groups(), std::vector<double>(n_bins, 0.0));
	out.avg_type_start.assign(dgp.n_groups(), std::vector<double>(n_bins, 0.0));
	for (int l = 0; l < dgp.n_groups(); ++l) {
		const auto psi = dgp.psi_path(l);
		const auto mu = dgp.group_moments(l, dgp.dbar + 1);
		const double mean_type = mu[1];
		for (int m = 1; m <= n_bins; ++m) {
			const int start = (m - 1) * bin_size + 1;
			const int end = m * bin_size;
			std::vector<double> to_start(psi.begin(), psi.begin() + (start - 1));
			std::vector<double> to_end(psi.begin(), psi.begin() + end);
			const double s_start = expected_survival(to_start, mu);
			const double s_end = expected_survival(to_end, mu);
			out.table.numerator[l][m - 1] = s_start - s_end;
			out.table.denominator[l][m - 1] = s_start;
			const double avg = average_type(psi, mu, start);
			out.avg_type_start[l][m - 1] = avg;
			double keep_evolving = 1.0, keep_mean = 1.0;
			for (int s = start; s <= end; ++s) {
				keep_evolving *= 1.0 - psi[s - 1] * avg;
				keep_mean *= 1.0 - psi[s - 1] * mean_type;
			}
			out.csh_evolving[l][m - 1] = 1.0 - keep_evolving;
			out.csh_mean_type[l][m - 1] = 1.0 - keep_mean;
		}
	}
	return out;
}

// Independent right censoring, drawn uniformly on {1, ..., dbar + 1}.
// A record is censored when the censoring time strictly precedes the exit.
inline void apply_censoring(Panel& panel, int dbar, const CensoringSpec& spec, std::uint64_t seed,
                            std::uint64_t replication) {
	if (spec.scheme == CensoringSpec::Scheme::None) return;
	if (spec.scheme == CensoringSpec::Scheme::Fixed && spec.horizon < 1)
		throw std::invalid_argument("apply_censoring: fixed horizon must be >= 1");
	for (std::size_t i = 0; i < panel.rows.size(); ++i) {
		int dc = spec.horizon;
		if (spec.scheme == CensoringSpec::Scheme::Uniform) {
			Rng rng(seed ^ 0xC3A5C85C97CB3127ULL, replication, static_cast<std::uint64_t>(i));
			dc = rng.uniform_int(1, dbar + 1);
		}
		auto& rec = panel.rows[i];
		if (dc < rec.duration) {
			rec.duration = dc;
			rec.censored = true;
		}
	}
}

// Simulate n spells from the DGP. Individual i of replication r draws from
// substream (seed, r, i); spells still open after dbar periods are recorded
// as censored at dbar + 1.
inline Panel simulate(const Dgp& dgp, int n, std::uint64_t seed, std::uint64_t replication = 0) {
	if (n <= 0) throw std::invalid_argument("simulate: n must be positive");
	Panel panel;
	for (int l = 0; l < dgp.n_groups(); ++l) panel.notice_labels.push_back("g" + std::to_string(l));
	std::vector<double> shares;
	for (const auto& g : dgp.groups) shares.push_back(g.share);
	panel.rows.reserve(n);
	for (int i = 0; i < n; ++i) {
		Rng rng(seed, replication, static_cast<std::uint64_t>(i));
		DurationRecord rec;
		rec.id = i;
		rec.notice = rng.categorical(shares);
		const double nu = dgp.types.draw(rng) + dgp.groups[rec.notice].type_shift;
		rec.duration = dgp.dbar + 1;
		rec.censored = true;
		for (int d = 1; d <= dgp.dbar; ++d) {
			if (rng.bernoulli(dgp.exit_probability(rec.notice, d, nu))) {
				rec.duration = d;
				rec.censored = false;
				break;
			}
		}
		panel.rows.push_back(rec);
	}
	return panel;
}

// Run fn(0..count-1) on a fixed striping of worker threads. Each index
// writes only its own slot, so results are identical for any thread count.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
	threads = std::max(1, std::min(threads, count));
	if (threads == 1) {
		for (int i = 0; i < count; ++i) fn(i);
		return;
	}
	std::vector<std::thread> pool;
	std::vector<std::exception_ptr> errors(threads);
	pool.reserve(threads);
	for (int t = 0; t < threads; ++t) {
		pool.emplace_back([&, t]() {
			try {
				for (int i = t; i < count; i += threads) fn(i);
			} catch (...) {
				errors[t] = std::current_exception();
			}
		});
	}
	for (auto& th : pool) th.join();
	for (auto& e : errors)
		if (e) std::rethrow_exception(e);
}

// One Monte Carlo replication: point estimates, their standard errors, and
// whether the fit converged.
struct McReplication {
	std::vector<double> estimates;
	std::vector<double> se;
	bool converged = true;
};

struct McSummary {
	std::vector<std::string> names;
	std::vector<double> truth;
	std::vector<double> mean, sd, bias, mc_se, coverage90;
	std::vector<std::vector<double>> draws;  // [param][rep]
	int n_converged = 0;
	int n_replications = 0;
};

// Generic replication harness: estimates come from a caller-supplied
// callback so the lab stays independent of any particular estimator.
inline McSummary monte_carlo(int replications, int threads,
                             const std::function<McReplication(int)>& run_one,
                             const std::vector<double>& truth,
                             const std::vector<std::string>& names = {}) {
	std::vector<McReplication> reps(replications);
	parallel_for(replications, threads, [&](int r) { reps[r] = run_one(r); });

	McSummary out;
	out.names = names;
	out.truth = truth;
	out.n_replications = replications;
	const int k = static_cast<int>(truth.size());
	out.mean.assign(k, 0.0);
	out.sd.assign(k, 0.0);
	out.bias.assign(k, 0.0);
	out.mc_se.assign(k, 0.0);
	out.coverage90.assign(k, 0.0);
	out.draws.assign(k, {});
	std::vector<int> covered(k, 0);
	for (const auto& rep : reps) {
		if (!rep.converged) continue;
		++out.n_converged;
		for (int j = 0; j < k; ++j) {
			out.draws[j].push_back(rep.estimates.at(j));
			if (!rep.se.empty()) {
				const double z = 1.6448536269514722;  // 90% two-sided normal quantile
				if (std::abs(rep.estimates[j] - truth[j]) <= z * rep.se.at(j)) ++covered[j];
			}
		}
	}
	if (out.n_converged == 0) throw std::runtime_error("monte_carlo: no replication converged");
	for (int j = 0; j < k; ++j) {
		double s = 0.0;
		for (double v : out.draws[j]) s += v;
		out.mean[j] = s / out.n_converged;
		double ss = 0.0;
		for (double v : out.draws[j]) ss += (v - out.mean[j]) * (v - out.mean[j]);
		out.sd[j] = out.n_converged > 1 ? std::sqrt(ss / (out.n_converged - 1)) : 0.0;
		out.bias[j] = out.mean[j] - truth[j];
		out.mc_se[j] = out.sd[j] / std::sqrt(static_cast<double>(out.n_converged));
		out.coverage90[j] = static_cast<double>(covered[j]) / out.n_converged;
	}
	return out;
}

}  // namespace mixhaz
