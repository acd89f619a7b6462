#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixhaz/records.hpp"

namespace mixhaz {

// Design matrix with an intercept, selected numeric covariates, and one-hot
// indicators (reference level dropped) for covariates declared categorical.
struct DesignMatrix {
	Eigen::MatrixXd X;
	std::vector<std::string> names;
};

struct CovariateSpec {
	std::vector<std::string> include;      // empty means all covariates
	std::vector<std::string> categorical;  // names encoded as indicators
};

inline DesignMatrix build_design(const Panel& panel, const CovariateSpec& spec = {}) {
	const std::size_t n = panel.rows.size();
	std::vector<int> cols;
	for (std::size_t j = 0; j < panel.covariate_names.size(); ++j) {
		const auto& name = panel.covariate_names[j];
		if (spec.include.empty() ||
		    std::find(spec.include.begin(), spec.include.end(), name) != spec.include.end())
			cols.push_back(static_cast<int>(j));
	}
	if (!spec.include.empty() && cols.size() != spec.include.size())
		throw std::invalid_argument("build_design: configured covariate not present in data");

	DesignMatrix out;
	std::vector<std::vector<double>> columns;
	out.names.push_back("intercept");
	columns.emplace_back(n, 1.0);
	for (int j : cols) {
		const auto& name = panel.covariate_names[j];
		const bool is_cat = std::find(spec.categorical.begin(), spec.categorical.end(), name) !=
		                    spec.categorical.end();
		if (!is_cat) {
			std::vector<double> col(n);
			for (std::size_t i = 0; i < n; ++i) col[i] = panel.rows[i].x.at(j);
			out.names.push_back(name);
			columns.push_back(std::move(col));
		} else {
			std::set<double> levels;
			for (std::size_t i = 0; i < n; ++i) levels.insert(panel.rows[i].x.at(j));
			bool first = true;
			for (double lev : levels) {
				if (first) {  // reference level
					first = false;
					continue;
				}
				std::vector<double> col(n, 0.0);
				for (std::size_t i = 0; i < n; ++i)
					if (panel.rows[i].x.at(j) == lev) col[i] = 1.0;
				out.names.push_back(name + "=" + format_double(lev));
				columns.push_back(std::move(col));
			}
		}
	}
	out.X.resize(n, columns.size());
	for (std::size_t c = 0; c < columns.size(); ++c)
		for (std::size_t i = 0; i < n; ++i) out.X(i, c) = columns[c][i];
	return out;
}

// Multinomial logit fit for notice-category scores. Category 0 is the
// reference; binary logit is the two-category special case.
struct PropensityFit {
	Eigen::MatrixXd coef;    // (J-1) x p
	Eigen::MatrixXd scores;  // n x J fitted category probabilities
	std::vector<std::string> colnames;
	double loglik = 0.0;
	int iterations = 0;
	bool converged = false;
	std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::MatrixXd mnl_scores(const Eigen::MatrixXd& X, const Eigen::MatrixXd& B) {
	const int n = static_cast<int>(X.rows());
	const int J = static_cast<int>(B.rows()) + 1;
	Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, J);
	eta.rightCols(J - 1) = X * B.transpose();
	Eigen::MatrixXd p(n, J);
	for (int i = 0; i < n; ++i) {
		const double m = eta.row(i).maxCoeff();
		Eigen::VectorXd e = (eta.row(i).array() - m).exp();
		p.row(i) = e.transpose() / e.sum();
	}
	return p;
}

inline double mnl_loglik(const Eigen::MatrixXd& p, const std::vector<int>& y) {
	double ll = 0.0;
	for (std::size_t i = 0; i < y.size(); ++i) ll += std::log(std::max(p(i, y[i]), 1e-300));
	return ll;
}

}  // namespace detail

inline PropensityFit fit_propensity(const DesignMatrix& design, const std::vector<int>& notice,
                                    int n_groups, double grad_tol = 1e-8,
                                    int max_iterations = 100) {
	const int n = static_cast<int>(design.X.rows());
	if (static_cast<int>(notice.size()) != n)
		throw std::invalid_argument("fit_propensity: size mismatch");
	if (n_groups < 2) throw std::invalid_argument("fit_propensity: need at least two groups");

	// drop collinear columns so the Newton step is well posed
	Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.X);
	qr.setThreshold(1e-10);
	const int rank = static_cast<int>(qr.rank());
	Eigen::MatrixXd X = design.X;
	std::vector<std::string> colnames = design.names;
	PropensityFit fit;
	if (rank < X.cols()) {
		std::vector<int> keep(qr.colsPermutation().indices().data(),
		                      qr.colsPermutation().indices().data() + rank);
		std::sort(keep.begin(), keep.end());
		Eigen::MatrixXd Xr(n, rank);
		std::vector<std::string> kept;
		for (int c = 0; c < rank; ++c) {
			Xr.col(c) = X.col(keep[c]);
			kept.push_back(colnames[keep[c]]);
		}
		for (const auto& name : colnames)
			if (std::find(kept.begin(), kept.end(), name) == kept.end())
				fit.warnings.push_back("dropped collinear design column '" + name + "'");
		X = std::move(Xr);
		colnames = std::move(kept);
	}
	const int p = static_cast<int>(X.cols());
	const int K = n_groups - 1;

	Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K, p);
	Eigen::MatrixXd probs = detail::mnl_scores(X, B);
	double ll = detail::mnl_loglik(probs, notice);
	int it = 0;
	for (; it < max_iterations; ++it) {
		// stacked gradient and Hessian over (K * p) parameters
		Eigen::VectorXd grad(K * p);
		for (int l = 0; l < K; ++l) {
			Eigen::VectorXd resid = -probs.col(l + 1);
			for (int i = 0; i < n; ++i)
				if (notice[i] == l + 1) resid[i] += 1.0;
			grad.segment(l * p, p) = X.transpose() * resid;
		}
		if (grad.lpNorm<Eigen::Infinity>() < grad_tol) {
			fit.converged = true;
			break;
		}
		Eigen::MatrixXd H = Eigen::MatrixXd::Zero(K * p, K * p);
		for (int l = 0; l < K; ++l) {
			for (int m = l; m < K; ++m) {
				Eigen::VectorXd w(n);
				for (int i = 0; i < n; ++i) {
					const double pl = probs(i, l + 1);
					const double pm = probs(i, m + 1);
					w[i] = l == m ? pl * (1.0 - pl) : -pl * pm;
				}
				const Eigen::MatrixXd block = X.transpose() * w.asDiagonal() * X;
				H.block(l * p, m * p, p, p) = block;
				if (m != l) H.block(m * p, l * p, p, p) = block;
			}
		}
		H.diagonal().array() += 1e-10;
		const Eigen::VectorXd step = H.ldlt().solve(grad);
		// Newton decrement as a scale-free stop; the absolute gradient norm
		// has a floating-point floor that grows with the sample size
		if (grad.dot(step) < 1e-12 * (1.0 + std::abs(ll))) {
			fit.converged = true;
			break;
		}
		// step-halving keeps the likelihood monotone
		double scale = 1.0;
		bool improved = false;
		for (int half = 0; half < 40; ++half) {
			Eigen::MatrixXd Bn = B;
			for (int l = 0; l < K; ++l)
				Bn.row(l) += scale * step.segment(l * p, p).transpose();
			const Eigen::MatrixXd pn = detail::mnl_scores(X, Bn);
			const double lln = detail::mnl_loglik(pn, notice);
			if (lln >= ll - 1e-12) {
				B = Bn;
				probs = pn;
				ll = lln;
				improved = true;
				break;
			}
			scale *= 0.5;
		}
		if (!improved) break;
	}
	if (!fit.converged)
		throw std::runtime_error("fit_propensity: Newton failed to converge after " +
		                         std::to_string(it) + " iterations");
	for (int i = 0; i < n; ++i)
		for (int l = 0; l < n_groups; ++l)
			if (probs(i, l) < 1e-10 || probs(i, l) > 1.0 - 1e-10)
				throw std::runtime_error(
				    "fit_propensity: perfect separation (fitted probability within 1e-10 of 0 or 1)");
	fit.coef = B;
	fit.scores = probs;
	fit.colnames = colnames;
	fit.loglik = ll;
	fit.iterations = it;
	return fit;
}

// inverse-propensity weights 1 / p_hat_{L_i}(X_i)
inline std::vector<double> ipw_weights(const PropensityFit& fit, const std::vector<int>& notice) {
	std::vector<double> w(notice.size());
	for (std::size_t i = 0; i < notice.size(); ++i) w[i] = 1.0 / fit.scores(i, notice[i]);
	return w;
}

// keep mask: own-category score inside [lo, hi] (inclusive bounds survive)
inline std::vector<char> trim_by_score(const PropensityFit& fit, const std::vector<int>& notice,
                                       double lo = 0.1, double hi = 0.9) {
	std::vector<char> keep(notice.size(), 1);
	for (std::size_t i = 0; i < notice.size(); ++i) {
		const double s = fit.scores(i, notice[i]);
		if (s < lo || s > hi) keep[i] = 0;
	}
	return keep;
}

// Covariate balance before/after weighting. Differences compare each group
// against group 0; the normalized difference scales by the pooled spread
// sqrt((v0 + vl) / 2).
struct BalanceRow {
	std::string covariate;
	int group = 0;
	double mean_unweighted = 0.0;
	double mean_weighted = 0.0;
	double diff_unweighted = 0.0;  // vs group 0
	double diff_weighted = 0.0;
	double normalized_diff_unweighted = 0.0;
	double normalized_diff_weighted = 0.0;
};

struct ScoreOverlap {
	int group = 0;
	int category = 0;  // which category's score is summarized
	double min = 0.0, mean = 0.0, max = 0.0;
};

struct BalanceReport {
	std::vector<BalanceRow> rows;
	std::vector<ScoreOverlap> overlap;
};

inline BalanceReport balance_report(const DesignMatrix& design, const std::vector<int>& notice,
                                    const std::vector<double>& weights,
                                    const PropensityFit& fit, int n_groups) {
	const int n = static_cast<int>(design.X.rows());
	BalanceReport rep;
	auto moments = [&](int col, int group, bool weighted) {
		double sw = 0.0, m = 0.0;
		for (int i = 0; i < n; ++i) {
			if (notice[i] != group) continue;
			const double w = weighted ? weights[i] : 1.0;
			sw += w;
			m += w * design.X(i, col);
		}
		m /= sw;
		double v = 0.0;
		for (int i = 0; i < n; ++i) {
			if (notice[i] != group) continue;
			const double w = weighted ? weights[i] : 1.0;
			v += w * (design.X(i, col) - m) * (design.X(i, col) - m);
		}
		return std::pair<double, double>(m, v / sw);
	};
	for (int c = 0; c < design.X.cols(); ++c) {
		if (design.names[c] == "intercept") continue;
		const auto [m0u, v0u] = moments(c, 0, false);
		const auto [m0w, v0w] = moments(c, 0, true);
		for (int l = 0; l < n_groups; ++l) {
			BalanceRow row;
			row.covariate = design.names[c];
			row.group = l;
			const auto [mu, vu] = moments(c, l, false);
			const auto [mw, vw] = moments(c, l, true);
			row.mean_unweighted = mu;
			row.mean_weighted = mw;
			if (l > 0) {
				row.diff_unweighted = mu - m0u;
				row.diff_weighted = mw - m0w;
				const double su = std::sqrt(0.5 * (v0u + vu));
				const double sw = std::sqrt(0.5 * (v0w + vw));
				row.normalized_diff_unweighted = su > 0.0 ? row.diff_unweighted / su : 0.0;
				row.normalized_diff_weighted = sw > 0.0 ? row.diff_weighted / sw : 0.0;
			}
			rep.rows.push_back(row);
		}
	}
	for (int cat = 0; cat < n_groups; ++cat) {
		for (int l = 0; l < n_groups; ++l) {
			ScoreOverlap ov;
			ov.group = l;
			ov.category = cat;
			double mn = 1.0, mx = 0.0, acc = 0.0;
			int cnt = 0;
			for (int i = 0; i < n; ++i) {
				if (notice[i] != l) continue;
				const double s = fit.scores(i, cat);
				mn = std::min(mn, s);
				mx = std::max(mx, s);
				acc += s;
				++cnt;
			}
			if (cnt == 0) continue;
			ov.min = mn;
			ov.max = mx;
			ov.mean = acc / cnt;
			rep.overlap.push_back(ov);
		}
	}
	return rep;
}

}  // namespace mixhaz
