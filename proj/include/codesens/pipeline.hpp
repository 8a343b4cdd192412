#pragma once

#include "augment.hpp"
#include "backend.hpp"
#include "codeparse.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "similarity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace codesens
{

struct PipelineConfig
{
	std::size_t n_samples = 5;
	double rate_step = 0.1;
	std::vector<AugmentMethod> methods{AugmentMethod::typos};
	std::string model = "mock";
	std::string backend;
	std::string dataset;
	std::size_t parallelism = 4;
	double temperature = 0.0;
	PromptEnvelope envelope = default_envelope();
	std::size_t bootstrap_resamples = 2000;
	std::uint64_t bootstrap_seed = 0x5eed;

	/// Number of rate steps, i.e. 1 / rate_step. Throws if rate_step does
	/// not divide 1 into a whole number of steps within 1e-9.
	std::size_t steps() const
	{
		if (!(rate_step > 0.0 && rate_step <= 1.0))
			throw ConfigError("rate_step must be in (0, 1], got " + format_double(rate_step));
		const double exact = 1.0 / rate_step;
		const auto steps = static_cast<std::size_t>(std::llround(exact));
		if (std::fabs(static_cast<double>(steps) * rate_step - 1.0) > 1e-9)
			throw ConfigError("rate_step " + format_double(rate_step) + " does not divide 1 into whole steps");
		return steps;
	}

	/// {0, step, 2*step, ..., 1}, computed as i / steps.
	std::vector<double> rates() const
	{
		const auto s = steps();
		std::vector<double> out;
		for (std::size_t i = 0; i <= s; ++i)
			out.push_back(static_cast<double>(i) / static_cast<double>(s));
		return out;
	}

	void validate() const
	{
		if (n_samples < 2)
			throw ConfigError("n_samples must be at least 2");
		if (parallelism < 1)
			throw ConfigError("parallelism must be at least 1");
		if (bootstrap_resamples < 1)
			throw ConfigError("bootstrap_resamples must be positive");
		if (!(temperature >= 0.0))
			throw ConfigError("temperature must be nonnegative");
		(void)steps();
	}
};

struct SampleSet
{
	AugmentationRate rate;
	std::vector<CodeSample> samples;
};

struct RatePoint
{
	double rate = 0.0;
	std::string label; // rate as text, or the paraphrase level
	double mean_similarity = 0.0;
	double ci_low = 0.0;
	double ci_high = 0.0;
	std::size_t count = 0;
};

struct PairRecord
{
	std::size_t point = 0; // index into SweepResult::points
	std::size_t i = 0;     // reference sample
	std::size_t j = 0;     // augmented sample
	double tsed = 0.0;
};

struct SweepResult
{
	std::string task_id;
	std::string model;
	std::string method;
	std::vector<RatePoint> points;
	std::vector<PairRecord> pairs;

	/// Scores of one point in (i, j) order.
	std::vector<double> scores(std::size_t point) const
	{
		std::vector<double> out;
		for (const auto& p : pairs)
			if (p.point == point)
				out.push_back(p.tsed);
		return out;
	}
};

/// Persisted progress of a sweep, so an interrupted run can resume without
/// regenerating finished points.
class SweepCheckpoint
{
public:
	virtual ~SweepCheckpoint() = default;
	virtual std::optional<std::vector<CodeSample>> load_reference(const std::string& model, const std::string& task_id) = 0;
	virtual void store_reference(const std::string& model, const std::string& task_id, const std::vector<CodeSample>& samples) = 0;
	virtual std::optional<std::vector<double>> load_point(const std::string& model, const std::string& task_id, const std::string& method,
														  const std::string& label) = 0;
	virtual void store_point(const std::string& model, const std::string& task_id, const std::string& method, const std::string& label,
							 const std::vector<double>& scores) = 0;
};

/// Runs fn(0) .. fn(count - 1) on up to `workers` threads. If any call
/// throws, the exception of the lowest index is rethrown after all finish.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn)
{
	if (count == 0)
		return;
	workers = std::clamp<std::size_t>(workers, 1, count);
	std::vector<std::exception_ptr> errors(count);
	std::atomic<std::size_t> next{0};
	auto body = [&] {
		for (auto i = next++; i < count; i = next++) {
			try {
				fn(i);
			} catch (...) {
				errors[i] = std::current_exception();
			}
		}
	};
	if (workers == 1) {
		body();
	} else {
		std::vector<std::jthread> pool;
		for (std::size_t w = 0; w < workers; ++w)
			pool.emplace_back(body);
	}
	for (auto& e : errors)
		if (e)
			std::rethrow_exception(e);
}

struct Interval
{
	double low = 0.0;
	double high = 0.0;
};

/// Percentile-bootstrap interval for the mean. The input is sorted first, so
/// the result does not depend on the order of `values`.
inline Interval bootstrap_mean_interval(std::span<const double> values, std::size_t resamples, std::uint64_t seed, double level = 0.95)
{
	if (values.empty())
		throw DataError("bootstrap of an empty sample");
	std::vector<double> sorted(values.begin(), values.end());
	std::sort(sorted.begin(), sorted.end());
	if (sorted.front() == sorted.back())
		return {sorted.front(), sorted.front()};

	Rng rng(seed);
	std::vector<double> means(resamples);
	const auto n = sorted.size();
	for (auto& m : means) {
		double sum = 0.0;
		for (std::size_t k = 0; k < n; ++k)
			sum += sorted[static_cast<std::size_t>(rng.below(n))];
		m = sum / static_cast<double>(n);
	}
	std::sort(means.begin(), means.end());
	auto quantile = [&](double q) {
		const double h = q * static_cast<double>(means.size() - 1);
		const auto lo = static_cast<std::size_t>(std::floor(h));
		const auto hi = std::min(lo + 1, means.size() - 1);
		return means[lo] + (h - static_cast<double>(lo)) * (means[hi] - means[lo]);
	};
	const double alpha = (1.0 - level) / 2.0;
	return {quantile(alpha), quantile(1.0 - alpha)};
}

inline double mean_of(std::span<const double> values)
{
	std::vector<double> sorted(values.begin(), values.end());
	std::sort(sorted.begin(), sorted.end());
	double sum = 0.0;
	for (double v : sorted)
		sum += v;
	return sum / static_cast<double>(sorted.size());
}

/// Mean with its bootstrap interval. The interval is widened to contain the
/// mean if resampling noise left it outside.
inline RatePoint summarize_point(double rate, std::string label, std::span<const double> scores, std::size_t resamples, std::uint64_t seed)
{
	RatePoint p;
	p.rate = rate;
	p.label = std::move(label);
	p.count = scores.size();
	p.mean_similarity = mean_of(scores);
	const auto ci = bootstrap_mean_interval(scores, resamples, seed);
	p.ci_low = std::min(ci.low, p.mean_similarity);
	p.ci_high = std::max(ci.high, p.mean_similarity);
	return p;
}

namespace detail
{
	inline std::vector<CodeSample> generate_samples(Backend& backend, const std::vector<GenerationRequest>& requests, std::size_t parallelism,
													const SampleOrigin& origin)
	{
		std::vector<CodeSample> out(requests.size());
		const auto workers = std::min(parallelism, std::max<std::size_t>(1, backend.max_in_flight()));
		parallel_for(requests.size(), workers, [&](std::size_t k) {
			auto resp = backend.generate(requests[k]);
			if (trim(resp.text).empty())
				throw BackendError("empty response for sample " + std::to_string(requests[k].sample_index));
			auto sample = extract_code(resp.text);
			sample.origin = origin;
			sample.origin.sample_index = requests[k].sample_index;
			out[k] = std::move(sample);
		});
		return out;
	}

	inline std::vector<SyntaxTree> parse_all(const std::vector<CodeSample>& samples, std::size_t parallelism)
	{
		std::vector<SyntaxTree> trees(samples.size());
		parallel_for(samples.size(), parallelism, [&](std::size_t k) { trees[k] = parse_code(samples[k]); });
		return trees;
	}

	/// All |ref| x |aug| similarities, row-major by reference index.
	inline std::vector<double> score_pairs(const std::vector<SyntaxTree>& ref, const std::vector<SyntaxTree>& aug, std::size_t parallelism)
	{
		std::vector<double> out(ref.size() * aug.size());
		parallel_for(out.size(), parallelism, [&](std::size_t k) { out[k] = tsed_trees(ref[k / aug.size()], aug[k % aug.size()]); });
		return out;
	}

	inline std::uint64_t point_seed(const PipelineConfig& cfg, std::string_view task_id, std::string_view method, std::string_view label)
	{
		return StableHasher{}.add(cfg.model).add(task_id).add(method).add(label).add(cfg.bootstrap_seed).value();
	}

	inline void append_point(SweepResult& result, const PipelineConfig& cfg, double rate, const std::string& label, const std::vector<double>& scores,
							 std::size_t n_ref)
	{
		const auto point = result.points.size();
		result.points.push_back(summarize_point(rate, label, scores, cfg.bootstrap_resamples, point_seed(cfg, result.task_id, result.method, label)));
		const auto n_aug = scores.size() / n_ref;
		for (std::size_t k = 0; k < scores.size(); ++k)
			result.pairs.push_back({point, k / n_aug, k % n_aug, scores[k]});
	}
}

/// n samples of the unperturbed, enveloped prompt; sample_index 0 .. n-1.
inline SampleSet run_reference(const TaskRecord& task, const PipelineConfig& cfg, Backend& backend)
{
	cfg.validate();
	std::vector<GenerationRequest> reqs;
	const auto prompt = wrap_prompt(task, cfg.envelope, task.prompt);
	for (std::size_t i = 0; i < cfg.n_samples; ++i)
		reqs.push_back({cfg.model, prompt, cfg.temperature, i});
	try {
		return {AugmentationRate(0.0), detail::generate_samples(backend, reqs, cfg.parallelism, {task.id, "reference", 0.0, 0})};
	} catch (...) {
		rethrow_with_context("task " + task.id + ", reference set: ");
	}
}

/// Reference set from the checkpoint when present, otherwise generated and stored.
inline SampleSet reference_for(const TaskRecord& task, const PipelineConfig& cfg, Backend& backend, SweepCheckpoint* checkpoint)
{
	if (checkpoint)
		if (auto saved = checkpoint->load_reference(cfg.model, task.id))
			return {AugmentationRate(0.0), std::move(*saved)};
	auto ref = run_reference(task, cfg, backend);
	backend.flush();
	if (checkpoint)
		checkpoint->store_reference(cfg.model, task.id, ref.samples);
	return ref;
}

/// Sample index of augmented sample j at rate step r. Reference samples use
/// 0 .. n-1; every later slot is distinct so no two requests share a
/// cassette key, even at rate 0 where the prompt equals the reference prompt.
inline std::size_t augmented_sample_index(std::size_t n, std::size_t rate_index, std::size_t j) { return n * (1 + rate_index) + j; }

/// One sensitivity curve: for every rate r in {0, step, ..., 1}, n freshly
/// augmented prompts (one seed per sample), n generations, and all n x n
/// reference/augmented similarities.
inline SweepResult run_sweep(const TaskRecord& task, AugmentMethod method, const PipelineConfig& cfg, Backend& backend, const SampleSet& reference,
							 const Thesaurus* thesaurus = nullptr, SweepCheckpoint* checkpoint = nullptr)
{
	cfg.validate();
	if (method == AugmentMethod::paraphrase)
		throw ConfigError("run_sweep: paraphrase is evaluated by run_paraphrase_eval");
	if (method == AugmentMethod::synonyms && !thesaurus)
		throw ConfigError("synonym augmentation requires a thesaurus");
	if (reference.samples.size() != cfg.n_samples)
		throw ConfigError("reference set size does not match n_samples");

	SweepResult result{task.id, cfg.model, std::string(to_string(method)), {}, {}};
	const auto ref_trees = detail::parse_all(reference.samples, cfg.parallelism);
	const auto rates = cfg.rates();

	for (std::size_t ri = 0; ri < rates.size(); ++ri) {
		const double r = rates[ri];
		const auto label = format_double(r);
		std::optional<std::vector<double>> scores;
		if (checkpoint)
			scores = checkpoint->load_point(cfg.model, task.id, result.method, label);
		if (!scores || scores->size() != cfg.n_samples * cfg.n_samples) {
			std::vector<GenerationRequest> reqs;
			for (std::size_t j = 0; j < cfg.n_samples; ++j) {
				const auto seed = derive_seed(task.id, method, r, j);
				const auto body = augment(method, task.prompt, AugmentationRate(r), seed, thesaurus).text;
				reqs.push_back({cfg.model, wrap_prompt(task, cfg.envelope, body), cfg.temperature, augmented_sample_index(cfg.n_samples, ri, j)});
			}
			try {
				const auto samples = detail::generate_samples(backend, reqs, cfg.parallelism, {task.id, result.method, r, 0});
				scores = detail::score_pairs(ref_trees, detail::parse_all(samples, cfg.parallelism), cfg.parallelism);
			} catch (...) {
				backend.flush();
				rethrow_with_context("task " + task.id + ", method " + result.method + ", rate " + label + ": ");
			}
			backend.flush();
			if (checkpoint)
				checkpoint->store_point(cfg.model, task.id, result.method, label, *scores);
		}
		detail::append_point(result, cfg, r, label, *scores, cfg.n_samples);
	}
	return result;
}

/// Paraphrase variant: points are the levels original/low/medium/high
/// (rate field 0..3). The original level compares the reference set with a
/// second fresh set from the unperturbed prompt; the other levels use the
/// paraphrases BLEU-bucketed into them, cycling through the bucket when it
/// holds fewer than n paraphrases. Empty levels are skipped with a warning.
inline SweepResult run_paraphrase_eval(const TaskRecord& task, const std::vector<std::string>& paraphrases, const PipelineConfig& cfg, Backend& backend,
									   const SampleSet& reference, SweepCheckpoint* checkpoint = nullptr)
{
	cfg.validate();
	if (paraphrases.empty())
		throw DataError("task " + task.id + ": no paraphrases");
	if (reference.samples.size() != cfg.n_samples)
		throw ConfigError("reference set size does not match n_samples");

	SweepResult result{task.id, cfg.model, std::string(to_string(AugmentMethod::paraphrase)), {}, {}};
	const auto buckets = bucket_paraphrases(task.prompt, paraphrases);
	const auto ref_trees = detail::parse_all(reference.samples, cfg.parallelism);

	for (std::size_t li = 0; li < all_paraphrase_levels.size(); ++li) {
		const auto level = all_paraphrase_levels[li];
		const std::string label(to_string(level));
		const auto& texts = buckets.at(level);
		if (texts.empty()) {
			warn("task " + task.id + ": no paraphrases in the " + label + " bucket; point omitted");
			continue;
		}
		std::optional<std::vector<double>> scores;
		if (checkpoint)
			scores = checkpoint->load_point(cfg.model, task.id, result.method, label);
		if (!scores || scores->size() != cfg.n_samples * cfg.n_samples) {
			std::vector<GenerationRequest> reqs;
			for (std::size_t j = 0; j < cfg.n_samples; ++j)
				reqs.push_back({cfg.model, wrap_prompt(task, cfg.envelope, texts[j % texts.size()]), cfg.temperature, augmented_sample_index(cfg.n_samples, li, j)});
			try {
				const auto samples = detail::generate_samples(backend, reqs, cfg.parallelism, {task.id, result.method, static_cast<double>(li), 0});
				scores = detail::score_pairs(ref_trees, detail::parse_all(samples, cfg.parallelism), cfg.parallelism);
			} catch (...) {
				backend.flush();
				rethrow_with_context("task " + task.id + ", paraphrase level " + label + ": ");
			}
			backend.flush();
			if (checkpoint)
				checkpoint->store_point(cfg.model, task.id, result.method, label, *scores);
		}
		detail::append_point(result, cfg, static_cast<double>(li), label, *scores, cfg.n_samples);
	}
	return result;
}

/// Pools the per-pair scores of several sweeps point by point and
/// summarizes each pool with its mean and a 95% percentile-bootstrap
/// interval. All inputs must share the method and the point grid.
inline std::vector<RatePoint> aggregate_curves(const std::vector<SweepResult>& results, std::size_t resamples = 2000, std::uint64_t seed = 0x5eed)
{
	if (results.empty())
		return {};
	const auto& first = results.front();
	for (const auto& r : results) {
		if (r.method != first.method)
			throw DataError("aggregate_curves: mixed methods " + first.method + " and " + r.method);
		bool same = r.points.size() == first.points.size();
		for (std::size_t p = 0; same && p < r.points.size(); ++p)
			same = r.points[p].label == first.points[p].label;
		if (!same)
			throw DataError("aggregate_curves: mismatched rate grids (task " + r.task_id + ")");
	}

	std::vector<RatePoint> out;
	for (std::size_t p = 0; p < first.points.size(); ++p) {
		std::vector<double> pooled;
		for (const auto& r : results)
			for (const auto& pair : r.pairs)
				if (pair.point == p)
					pooled.push_back(pair.tsed);
		const auto& label = first.points[p].label;
		out.push_back(summarize_point(first.points[p].rate, label, pooled, resamples, StableHasher{}.add(first.method).add(label).add(seed).value()));
	}
	return out;
}

}
