#pragma once

#include "codeparse.hpp"
#include "error.hpp"
#include "syntax_tree.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace codesens
{

struct EditCosts
{
	double insert = 1.0;
	double remove = 1.0;
	double rename = 1.0;
};

/// Ordered tree edit distance (Zhang & Shasha keyroot dynamic program).
///
/// Minimum total cost of node deletions, insertions and renames turning
/// `a` into `b`. Renaming a node to its own label is free.
inline double tree_edit_distance(const SyntaxTree& a, const SyntaxTree& b, const EditCosts& costs = {})
{
	struct Indexed
	{
		std::vector<const std::string*> label; // 1-based postorder
		std::vector<std::size_t> leftmost;     // l(i), 1-based
		std::vector<std::size_t> keyroots;
	};

	auto index = [](const SyntaxTree& t) {
		Indexed ix;
		const auto order = t.postorder();
		const auto n = order.size();
		std::vector<std::size_t> post_of(t.size());
		for (std::size_t k = 0; k < n; ++k)
			post_of[order[k]] = k + 1;

		ix.label.assign(n + 1, nullptr);
		ix.leftmost.assign(n + 1, 0);
		for (std::size_t k = 0; k < n; ++k) {
			const auto id = order[k];
			ix.label[k + 1] = &t.label(id);
			const auto& kids = t.children(id);
			ix.leftmost[k + 1] = kids.empty() ? k + 1 : ix.leftmost[post_of[kids.front()]];
		}
		// keyroots: the highest node for each distinct leftmost leaf
		std::vector<std::size_t> highest(n + 1, 0);
		for (std::size_t i = 1; i <= n; ++i)
			highest[ix.leftmost[i]] = i;
		for (std::size_t i = 1; i <= n; ++i)
			if (highest[i] != 0)
				ix.keyroots.push_back(highest[i]);
		std::sort(ix.keyroots.begin(), ix.keyroots.end());
		return ix;
	};

	const auto ta = index(a);
	const auto tb = index(b);
	const auto n = ta.label.size() - 1;
	const auto m = tb.label.size() - 1;

	std::vector<double> treedist((n + 1) * (m + 1), 0.0);
	auto td = [&](std::size_t i, std::size_t j) -> double& { return treedist[i * (m + 1) + j]; };
	std::vector<double> forest((n + 2) * (m + 2), 0.0);

	for (auto i : ta.keyroots) {
		for (auto j : tb.keyroots) {
			const auto li = ta.leftmost[i];
			const auto lj = tb.leftmost[j];
			const auto rows = i - li + 2;
			const auto cols = j - lj + 2;
			auto fd = [&](std::size_t x, std::size_t y) -> double& { return forest[x * cols + y]; };
			// fd(x, y): forest l(i)..(li+x-1) vs l(j)..(lj+y-1); x = 0 is the empty forest
			fd(0, 0) = 0.0;
			for (std::size_t x = 1; x < rows; ++x)
				fd(x, 0) = fd(x - 1, 0) + costs.remove;
			for (std::size_t y = 1; y < cols; ++y)
				fd(0, y) = fd(0, y - 1) + costs.insert;

			for (std::size_t x = 1; x < rows; ++x) {
				const auto ni = li + x - 1;
				for (std::size_t y = 1; y < cols; ++y) {
					const auto nj = lj + y - 1;
					const double del = fd(x - 1, y) + costs.remove;
					const double ins = fd(x, y - 1) + costs.insert;
					if (ta.leftmost[ni] == li && tb.leftmost[nj] == lj) {
						const double ren = fd(x - 1, y - 1) + (*ta.label[ni] == *tb.label[nj] ? 0.0 : costs.rename);
						fd(x, y) = std::min({del, ins, ren});
						td(ni, nj) = fd(x, y);
					} else {
						const auto px = ta.leftmost[ni] - li;
						const auto py = tb.leftmost[nj] - lj;
						fd(x, y) = std::min({del, ins, fd(px, py) + td(ni, nj)});
					}
				}
			}
		}
	}
	return td(n, m);
}

/// Similarity of two trees: 1 - distance / max(|a|, |b|), clamped at 0.
inline double tsed_trees(const SyntaxTree& a, const SyntaxTree& b)
{
	const double distance = tree_edit_distance(a, b);
	const double denom = static_cast<double>(std::max(tree_size(a), tree_size(b)));
	return std::clamp(1.0 - distance / denom, 0.0, 1.0);
}

/// Tree similarity of edit distance between two code samples, in [0, 1].
inline double tsed(const CodeSample& a, const CodeSample& b, const ParserRegistry& registry = default_parser_registry())
{
	return tsed_trees(parse_code(a, registry), parse_code(b, registry));
}

/// Splits text into maximal alphanumeric runs; every other non-space
/// character is a token of its own. Bytes >= 0x80 count as alphanumeric so
/// UTF-8 words stay whole.
inline std::vector<std::string> bleu_tokens(std::string_view s)
{
	std::vector<std::string> out;
	std::size_t i = 0;
	auto word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
	while (i < s.size()) {
		const auto c = static_cast<unsigned char>(s[i]);
		if (std::isspace(c)) {
			++i;
		} else if (word(c)) {
			auto j = i + 1;
			while (j < s.size() && word(static_cast<unsigned char>(s[j])))
				++j;
			out.emplace_back(s.substr(i, j - i));
			i = j;
		} else {
			out.emplace_back(1, static_cast<char>(c));
			++i;
		}
	}
	return out;
}

/// Sentence BLEU of `candidate` against a single `reference`.
///
/// Uniform weights over n = 1..min(4, |candidate|); zero precisions are
/// floored at 1e-9 before the log; brevity penalty exp(1 - r/c) when the
/// candidate is shorter than the reference.
inline double bleu(std::string_view candidate, std::string_view reference)
{
	const auto cand = bleu_tokens(candidate);
	const auto ref = bleu_tokens(reference);
	if (cand.empty() || ref.empty())
		throw DataError("bleu: empty input");

	auto ngram_counts = [](const std::vector<std::string>& toks, std::size_t n) {
		std::unordered_map<std::string, std::size_t> counts;
		for (std::size_t i = 0; i + n <= toks.size(); ++i) {
			std::string key;
			for (std::size_t k = 0; k < n; ++k) {
				key += toks[i + k];
				key += '\x1f';
			}
			++counts[key];
		}
		return counts;
	};

	const auto max_n = std::min<std::size_t>(4, cand.size());
	double log_sum = 0.0;
	for (std::size_t n = 1; n <= max_n; ++n) {
		const auto cc = ngram_counts(cand, n);
		const auto rc = ngram_counts(ref, n);
		std::size_t clipped = 0;
		for (const auto& [gram, count] : cc) {
			auto it = rc.find(gram);
			if (it != rc.end())
				clipped += std::min(count, it->second);
		}
		const double precision = static_cast<double>(clipped) / static_cast<double>(cand.size() - n + 1);
		log_sum += std::log(std::max(precision, 1e-9));
	}
	const double geo = std::exp(log_sum / static_cast<double>(max_n));
	const double c = static_cast<double>(cand.size());
	const double r = static_cast<double>(ref.size());
	const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
	return std::clamp(bp * geo, 0.0, 1.0);
}

}
