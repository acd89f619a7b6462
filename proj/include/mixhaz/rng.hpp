#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mixhaz {

// SplitMix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
	z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
	z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
	return z ^ (z >> 31);
}

// Counter-based stream generator. The state is derived by hashing
// (seed, stream, substream), so substream (r, i) can be opened directly
// without generating the draws of any other substream. Identical keys give
// identical sequences regardless of thread count or call order. All samplers
// below consume only integer arithmetic plus libm, so runs are reproducible
// for a given build.
class Rng {
public:
	explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) {
		state_ = mix64(seed + 0x9E3779B97F4A7C15ULL);
		state_ = mix64(state_ ^ mix64(stream + 0xD1B54A32D192ED03ULL));
		state_ = mix64(state_ ^ mix64(substream + 0x8BB84B93962EACC9ULL));
	}

	std::uint64_t next_u64() {
		state_ += 0x9E3779B97F4A7C15ULL;
		return mix64(state_);
	}

	// uniform on [0,1) with 53 random bits
	double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

	double uniform(double a, double b) { return a + (b - a) * uniform(); }

	bool bernoulli(double p) { return uniform() < p; }

	// uniform integer on {lo, ..., hi}, rejection sampled to avoid modulo bias
	int uniform_int(int lo, int hi) {
		assert(hi >= lo);
		const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1ULL;
		const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
		std::uint64_t x = next_u64();
		while (x >= limit) x = next_u64();
		return lo + static_cast<int>(x % range);
	}

	// index drawn from unnormalized non-negative weights
	int categorical(const std::vector<double>& w) {
		double total = 0.0;
		for (double v : w) {
			assert(v >= 0.0);
			total += v;
		}
		if (total <= 0.0) throw std::invalid_argument("categorical: weights sum to zero");
		double u = uniform() * total;
		double acc = 0.0;
		for (std::size_t j = 0; j + 1 < w.size(); ++j) {
			acc += w[j];
			if (u < acc) return static_cast<int>(j);
		}
		return static_cast<int>(w.size()) - 1;
	}

	// standard normal via the polar method
	double normal() {
		if (have_cached_) {
			have_cached_ = false;
			return cached_;
		}
		double u, v, s;
		do {
			u = 2.0 * uniform() - 1.0;
			v = 2.0 * uniform() - 1.0;
			s = u * u + v * v;
		} while (s >= 1.0 || s == 0.0);
		const double f = std::sqrt(-2.0 * std::log(s) / s);
		cached_ = v * f;
		have_cached_ = true;
		return u * f;
	}

	// Gamma(shape, 1) by Marsaglia-Tsang, with the usual boost for shape < 1
	double gamma(double shape) {
		assert(shape > 0.0);
		if (shape < 1.0) {
			const double g = gamma(shape + 1.0);
			double u = uniform();
			while (u <= 0.0) u = uniform();
			return g * std::pow(u, 1.0 / shape);
		}
		const double d = shape - 1.0 / 3.0;
		const double c = 1.0 / std::sqrt(9.0 * d);
		for (;;) {
			double x, v;
			do {
				x = normal();
				v = 1.0 + c * x;
			} while (v <= 0.0);
			v = v * v * v;
			const double u = uniform();
			if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
			if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
		}
	}

	double beta(double a, double b) {
		const double x = gamma(a);
		const double y = gamma(b);
		return x / (x + y);
	}

private:
	std::uint64_t state_;
	double cached_ = 0.0;
	bool have_cached_ = false;
};

}  // namespace mixhaz
