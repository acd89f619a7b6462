#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace mixhaz {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// forward-mode central differences; step scales with the coordinate
inline Eigen::VectorXd numerical_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                          double rel_step = 1e-6) {
	Eigen::VectorXd g(x.size());
	Eigen::VectorXd xp = x;
	for (int j = 0; j < x.size(); ++j) {
		const double h = rel_step * std::max(std::abs(x[j]), 1.0);
		xp[j] = x[j] + h;
		const double fp = f(xp);
		xp[j] = x[j] - h;
		const double fm = f(xp);
		xp[j] = x[j];
		g[j] = (fp - fm) / (2.0 * h);
	}
	return g;
}

inline Eigen::MatrixXd numerical_jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                                          double rel_step = 1e-6) {
	Eigen::VectorXd x0 = x;
	const Eigen::VectorXd f0 = f(x0);
	Eigen::MatrixXd J(f0.size(), x.size());
	for (int j = 0; j < x.size(); ++j) {
		const double h = rel_step * std::max(std::abs(x[j]), 1.0);
		x0[j] = x[j] + h;
		const Eigen::VectorXd fp = f(x0);
		x0[j] = x[j] - h;
		const Eigen::VectorXd fm = f(x0);
		x0[j] = x[j];
		J.col(j) = (fp - fm) / (2.0 * h);
	}
	return J;
}

struct OptimResult {
	Eigen::VectorXd x;
	double value = std::numeric_limits<double>::infinity();
	int iterations = 0;
	bool converged = false;
};

// Nelder-Mead downhill simplex with standard reflection/expansion/contraction
// coefficients. Derivative-free, so it tolerates the penalty cliffs used to
// keep parameters admissible.
inline OptimResult nelder_mead(const ObjectiveFn& f, const Eigen::VectorXd& start,
                               double initial_step = 0.1, double ftol = 1e-14,
                               int max_iterations = 0) {
	const int n = static_cast<int>(start.size());
	if (max_iterations <= 0) max_iterations = 400 * n * n + 2000;
	std::vector<Eigen::VectorXd> simplex(n + 1, start);
	std::vector<double> fx(n + 1);
	for (int j = 0; j < n; ++j)
		simplex[j + 1][j] += initial_step * std::max(std::abs(start[j]), 1.0);
	for (int j = 0; j <= n; ++j) fx[j] = f(simplex[j]);

	auto order = [&]() {
		std::vector<int> idx(n + 1);
		for (int j = 0; j <= n; ++j) idx[j] = j;
		std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
		std::vector<Eigen::VectorXd> s2(n + 1);
		std::vector<double> f2(n + 1);
		for (int j = 0; j <= n; ++j) {
			s2[j] = simplex[idx[j]];
			f2[j] = fx[idx[j]];
		}
		simplex = std::move(s2);
		fx = std::move(f2);
	};

	OptimResult res;
	int it = 0;
	for (; it < max_iterations; ++it) {
		order();
		if (fx[n] - fx[0] <= ftol * (std::abs(fx[0]) + ftol)) break;
		Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
		for (int j = 0; j < n; ++j) centroid += simplex[j];
		centroid /= n;

		const Eigen::VectorXd xr = centroid + (centroid - simplex[n]);
		const double fr = f(xr);
		if (fr < fx[0]) {
			const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[n]);
			const double fe = f(xe);
			if (fe < fr) {
				simplex[n] = xe;
				fx[n] = fe;
			} else {
				simplex[n] = xr;
				fx[n] = fr;
			}
		} else if (fr < fx[n - 1]) {
			simplex[n] = xr;
			fx[n] = fr;
		} else {
			const bool outside = fr < fx[n];
			const Eigen::VectorXd xc =
			    centroid + 0.5 * ((outside ? xr : simplex[n]) - centroid);
			const double fc = f(xc);
			if (fc < (outside ? fr : fx[n])) {
				simplex[n] = xc;
				fx[n] = fc;
			} else {
				for (int j = 1; j <= n; ++j) {
					simplex[j] = simplex[0] + 0.5 * (simplex[j] - simplex[0]);
					fx[j] = f(simplex[j]);
				}
			}
		}
	}
	order();
	res.x = simplex[0];
	res.value = fx[0];
	res.iterations = it;
	res.converged = it < max_iterations;
	return res;
}

// BFGS with numerical gradients and Armijo backtracking, used to polish the
// simplex solution. Falls back gracefully when curvature updates degenerate.
inline OptimResult bfgs(const ObjectiveFn& f, const Eigen::VectorXd& start, double gtol = 1e-10,
                        int max_iterations = 200, double grad_step = 1e-6) {
	const int n = static_cast<int>(start.size());
	OptimResult res;
	Eigen::VectorXd x = start;
	double fx = f(x);
	Eigen::VectorXd g = numerical_gradient(f, x, grad_step);
	Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
	int it = 0;
	for (; it < max_iterations; ++it) {
		if (g.lpNorm<Eigen::Infinity>() < gtol) {
			res.converged = true;
			break;
		}
		Eigen::VectorXd p = -H * g;
		if (p.dot(g) >= 0.0) p = -g;
		double step = 1.0;
		double fnew = fx;
		Eigen::VectorXd xnew = x;
		bool improved = false;
		for (int ls = 0; ls < 40; ++ls) {
			xnew = x + step * p;
			fnew = f(xnew);
			if (fnew <= fx + 1e-4 * step * p.dot(g)) {
				improved = true;
				break;
			}
			step *= 0.5;
		}
		if (!improved) break;
		const Eigen::VectorXd gnew = numerical_gradient(f, xnew, grad_step);
		const Eigen::VectorXd s = xnew - x;
		const Eigen::VectorXd y = gnew - g;
		const double sy = s.dot(y);
		if (sy > 1e-12 * s.norm() * y.norm()) {
			const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
			const Eigen::MatrixXd V = I - (s * y.transpose()) / sy;
			H = V * H * V.transpose() + (s * s.transpose()) / sy;
		}
		x = xnew;
		fx = fnew;
		g = gnew;
	}
	res.x = x;
	res.value = fx;
	res.iterations = it;
	return res;
}

// Levenberg-Marquardt for small least-squares problems (calibration).
// Objective is 0.5 * ||r(x)||^2 with numerical Jacobians.
inline OptimResult levenberg_marquardt(const ResidualFn& r, const Eigen::VectorXd& start,
                                       double ftol = 1e-16, int max_iterations = 200) {
	OptimResult res;
	Eigen::VectorXd x = start;
	Eigen::VectorXd rx = r(x);
	double fx = 0.5 * rx.squaredNorm();
	double lambda = 1e-3;
	int it = 0;
	bool done = false;
	for (; it < max_iterations && !done; ++it) {
		const Eigen::MatrixXd J = numerical_jacobian(r, x);
		const Eigen::MatrixXd JtJ = J.transpose() * J;
		const Eigen::VectorXd Jtr = J.transpose() * rx;
		if (Jtr.lpNorm<Eigen::Infinity>() < 1e-14) {
			res.converged = true;
			break;
		}
		bool stepped = false;
		for (int tries = 0; tries < 30 && !stepped; ++tries) {
			Eigen::MatrixXd A = JtJ;
			A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
			const Eigen::VectorXd dx = A.ldlt().solve(-Jtr);
			const Eigen::VectorXd xn = x + dx;
			const Eigen::VectorXd rn = r(xn);
			const double fn = 0.5 * rn.squaredNorm();
			if (fn < fx) {
				if (fx - fn <= ftol * (fx + ftol)) done = true;
				x = xn;
				rx = rn;
				fx = fn;
				lambda = std::max(lambda * 0.3, 1e-12);
				stepped = true;
			} else {
				lambda *= 10.0;
			}
		}
		if (!stepped) done = true;
	}
	res.converged = res.converged || done || it < max_iterations;
	res.x = x;
	res.value = fx;
	res.iterations = it;
	return res;
}

}  // namespace mixhaz
