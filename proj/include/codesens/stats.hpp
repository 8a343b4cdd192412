#pragma once

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace codesens::stats
{

namespace detail
{
	inline double log_gamma(double a)
	{
		int sign = 0;
		return ::lgamma_r(a, &sign);
	}

	/// Regularized lower incomplete gamma P(a, x) by its power series.
	/// Converges quickly for x < a + 1.
	inline double gamma_p_series(double a, double x)
	{
		double term = 1.0 / a;
		double sum = term;
		for (int n = 1; n < 10000; ++n) {
			term *= x / (a + n);
			sum += term;
			if (std::fabs(term) < std::fabs(sum) * 1e-17)
				break;
		}
		return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
	}

	/// Regularized upper incomplete gamma Q(a, x) by its continued fraction
	/// (modified Lentz). Converges quickly for x >= a + 1.
	inline double gamma_q_continued_fraction(double a, double x)
	{
		constexpr double tiny = 1e-300;
		double b = x + 1.0 - a;
		double c = 1.0 / tiny;
		double d = 1.0 / b;
		double h = d;
		for (int i = 1; i < 10000; ++i) {
			const double an = -i * (i - a);
			b += 2.0;
			d = an * d + b;
			if (std::fabs(d) < tiny)
				d = tiny;
			c = b + an / c;
			if (std::fabs(c) < tiny)
				c = tiny;
			d = 1.0 / d;
			const double delta = d * c;
			h *= delta;
			if (std::fabs(delta - 1.0) < 1e-16)
				break;
		}
		return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
	}
}

/// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0.
inline double gamma_q(double a, double x)
{
	if (x <= 0.0)
		return 1.0;
	if (x < a + 1.0)
		return std::clamp(1.0 - detail::gamma_p_series(a, x), 0.0, 1.0);
	return std::clamp(detail::gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

/// Upper tail P(X > x) of a chi-square distribution with `df` degrees of freedom.
inline double chi_square_sf(double x, unsigned df)
{
	if (df == 0)
		throw std::invalid_argument("chi_square_sf: df must be positive");
	if (std::isnan(x))
		return std::numeric_limits<double>::quiet_NaN();
	if (x <= 0.0)
		return 1.0;
	return gamma_q(0.5 * df, 0.5 * x);
}

struct TestResult
{
	double statistic = 0.0;
	unsigned df = 0;
	double p_value = 1.0;
	bool tie_corrected = false;
};

/// 1-based ranks with ties sharing their mean rank.
/// Also returns sum over tie groups of (t^3 - t).
struct Ranking
{
	std::vector<double> ranks;
	double tie_term = 0.0;
};

inline Ranking average_ranks(std::span<const double> values)
{
	const auto n = values.size();
	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });

	Ranking out;
	out.ranks.assign(n, 0.0);
	std::size_t i = 0;
	while (i < n) {
		auto j = i + 1;
		while (j < n && values[order[j]] == values[order[i]])
			++j;
		const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
		for (auto k = i; k < j; ++k)
			out.ranks[order[k]] = mean_rank;
		const double t = static_cast<double>(j - i);
		out.tie_term += t * t * t - t;
		i = j;
	}
	return out;
}

/// Blocks x treatments table of observations. Blocks are matched units
/// (tasks, or task-model cells); treatments are the conditions compared
/// (augmentation rates).
class RankMatrix
{
public:
	explicit RankMatrix(std::vector<std::vector<double>> rows) : rows_(std::move(rows))
	{
		if (rows_.size() < 2)
			throw DataError("rank matrix needs at least 2 blocks");
		const auto k = rows_.front().size();
		if (k < 2)
			throw DataError("rank matrix needs at least 2 treatments");
		for (std::size_t b = 0; b < rows_.size(); ++b) {
			if (rows_[b].size() != k)
				throw DataError("rank matrix block " + std::to_string(b) + " has a missing cell");
			for (double v : rows_[b])
				if (!std::isfinite(v))
					throw DataError("rank matrix block " + std::to_string(b) + " has a non-finite cell");
		}
	}

	std::size_t blocks() const noexcept { return rows_.size(); }
	std::size_t treatments() const noexcept { return rows_.front().size(); }
	const std::vector<double>& block(std::size_t b) const { return rows_.at(b); }

private:
	std::vector<std::vector<double>> rows_;
};

/// Friedman test for a treatment effect across matched blocks.
inline TestResult friedman(const RankMatrix& m)
{
	const auto n = static_cast<double>(m.blocks());
	const auto k = static_cast<double>(m.treatments());
	std::vector<double> rank_sums(m.treatments(), 0.0);
	double tie_term = 0.0;
	for (std::size_t b = 0; b < m.blocks(); ++b) {
		const auto r = average_ranks(m.block(b));
		for (std::size_t j = 0; j < r.ranks.size(); ++j)
			rank_sums[j] += r.ranks[j];
		tie_term += r.tie_term;
	}

	TestResult res;
	res.df = static_cast<unsigned>(m.treatments() - 1);
	const double correction = 1.0 - tie_term / (n * k * (k * k - 1.0));
	if (correction <= 1e-12) {
		res.tie_corrected = tie_term > 0.0;
		return res; // every block constant
	}
	double ss = 0.0;
	for (double r : rank_sums)
		ss += r * r;
	double stat = 12.0 / (n * k * (k + 1.0)) * ss - 3.0 * n * (k + 1.0);
	stat /= correction;
	res.statistic = std::max(0.0, stat);
	res.tie_corrected = tie_term > 0.0;
	res.p_value = chi_square_sf(res.statistic, res.df);
	return res;
}

/// Kruskal-Wallis H test for a difference between independent groups.
inline TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups)
{
	if (groups.size() < 2)
		throw DataError("kruskal-wallis needs at least 2 groups");
	std::vector<double> pooled;
	for (std::size_t g = 0; g < groups.size(); ++g) {
		if (groups[g].empty())
			throw DataError("kruskal-wallis group " + std::to_string(g) + " is empty");
		for (double v : groups[g]) {
			if (!std::isfinite(v))
				throw DataError("kruskal-wallis group " + std::to_string(g) + " has a non-finite value");
			pooled.push_back(v);
		}
	}
	if (pooled.size() < 3)
		throw DataError("kruskal-wallis needs at least 3 observations");

	const auto ranking = average_ranks(pooled);
	const auto n = static_cast<double>(pooled.size());

	TestResult res;
	res.df = static_cast<unsigned>(groups.size() - 1);
	res.tie_corrected = ranking.tie_term > 0.0;
	const double correction = 1.0 - ranking.tie_term / (n * n * n - n);
	if (correction <= 1e-12)
		return res; // all observations equal

	double sum = 0.0;
	std::size_t offset = 0;
	for (const auto& g : groups) {
		double r = 0.0;
		for (std::size_t i = 0; i < g.size(); ++i)
			r += ranking.ranks[offset + i];
		offset += g.size();
		sum += r * r / static_cast<double>(g.size());
	}
	const double h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
	res.statistic = std::max(0.0, h / correction);
	res.p_value = chi_square_sf(res.statistic, res.df);
	return res;
}

}
