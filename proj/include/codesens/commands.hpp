#pragma once

// Implementations of the command-line subcommands. The executable in tools/
// only parses flags and forwards here.

#include "augment.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "csv.hpp"
#include "error.hpp"
#include "io.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "run_store.hpp"
#include "stats.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <tuple>
#include <string>
#include <vector>

namespace codesens::cli
{

enum ExitCode : int
{
	exit_ok = 0,
	exit_failure = 1,
	exit_config = 2,
	exit_backend = 3,
	exit_replay_miss = 4,
};

/// Maps the in-flight exception to a process exit code. Call from a catch block.
inline int exit_code_for_current_exception()
{
	try {
		throw;
	} catch (const ReplayMiss&) {
		return exit_replay_miss;
	} catch (const BackendError&) {
		return exit_backend;
	} catch (const ConfigError&) {
		return exit_config;
	} catch (const DataError&) {
		return exit_config;
	} catch (...) {
		return exit_failure;
	}
}

struct AugmentOptions
{
	std::filesystem::path dataset;
	AugmentMethod method = AugmentMethod::typos;
	double rate = 0.0;
	std::uint64_t seed = 0;
	std::optional<std::filesystem::path> thesaurus;
	std::filesystem::path out;
};

/// Writes one JSON line per task {task_id, method, rate, seed, edits, text}
/// and logs "<task_id> <edits>" per task. Each task's seed is derived from
/// the given seed and its id.
inline int cmd_augment(const AugmentOptions& opt, std::ostream& log)
{
	const AugmentationRate rate(opt.rate);
	if (opt.method == AugmentMethod::paraphrase)
		throw ConfigError("augment: paraphrases are ingested from files, not generated");
	std::optional<Thesaurus> th;
	if (opt.method == AugmentMethod::synonyms) {
		if (!opt.thesaurus)
			throw ConfigError("augment: synonyms method requires --thesaurus");
		th = load_thesaurus(*opt.thesaurus);
	}
	const auto ds = load_dataset(opt.dataset);

	std::string out;
	for (const auto& task : ds.tasks) {
		const auto seed = StableHasher{}.add(static_cast<std::uint64_t>(opt.seed)).add(task.id).value();
		auto aug = augment(opt.method, task.prompt, rate, seed, th ? &*th : nullptr);
		nlohmann::ordered_json line;
		line["task_id"] = task.id;
		line["method"] = to_string(opt.method);
		line["rate"] = opt.rate;
		line["seed"] = seed;
		line["edits"] = aug.edits;
		line["text"] = aug.text;
		out += line.dump() + "\n";
		log << task.id << ' ' << aug.edits << '\n';
	}
	write_file(opt.out, out);
	return exit_ok;
}

struct SweepOptions
{
	std::filesystem::path config;
	std::optional<std::filesystem::path> dataset;
	std::optional<std::filesystem::path> output_dir;
	std::optional<std::filesystem::path> paraphrases;
	std::optional<std::size_t> n_samples;
	std::optional<double> rate_step;
	std::optional<std::size_t> parallelism;
	std::vector<std::string> methods;
	bool resume = false;
};

namespace detail
{
	struct Failure
	{
		std::string model;
		std::string task_id;
		std::string message;
		int code;
	};

	inline RunConfig resolve_config(const SweepOptions& opt)
	{
		auto cfg = load_run_config(opt.config);
		if (opt.dataset)
			cfg.dataset = *opt.dataset;
		if (opt.output_dir)
			cfg.output_dir = *opt.output_dir;
		if (opt.paraphrases)
			cfg.paraphrases = *opt.paraphrases;
		if (opt.n_samples)
			cfg.n_samples = *opt.n_samples;
		if (opt.rate_step)
			cfg.rate_step = *opt.rate_step;
		if (opt.parallelism)
			cfg.parallelism = *opt.parallelism;
		if (!opt.methods.empty()) {
			cfg.methods.clear();
			for (const auto& m : opt.methods)
				cfg.methods.push_back(parse_augment_method(m));
		}
		return cfg;
	}

	inline nlohmann::ordered_json config_echo(const RunConfig& cfg)
	{
		nlohmann::ordered_json c;
		c["dataset"] = cfg.dataset.generic_string();
		c["thesaurus"] = cfg.thesaurus ? nlohmann::ordered_json(cfg.thesaurus->generic_string()) : nlohmann::ordered_json(nullptr);
		c["paraphrases"] = cfg.paraphrases ? nlohmann::ordered_json(cfg.paraphrases->generic_string()) : nlohmann::ordered_json(nullptr);
		c["methods"] = nlohmann::ordered_json::array();
		for (auto m : cfg.methods)
			c["methods"].push_back(to_string(m));
		c["n_samples"] = cfg.n_samples;
		c["rate_step"] = cfg.rate_step;
		c["parallelism"] = cfg.parallelism;
		c["temperature"] = cfg.temperature;
		c["envelope"] = {{"prefix", cfg.envelope.prefix}, {"postfix", cfg.envelope.postfix}};
		c["bootstrap"] = {{"resamples", cfg.bootstrap_resamples}, {"seed", cfg.bootstrap_seed}};
		c["models"] = nlohmann::ordered_json::array();
		for (const auto& m : cfg.models)
			c["models"].push_back({{"name", m.name}, {"backend", m.backend}});
		c["backends"] = nlohmann::ordered_json::object();
		for (const auto& [name, b] : cfg.backends) {
			nlohmann::ordered_json j;
			j["kind"] = b.kind;
			if (b.cassette)
				j["cassette"] = b.cassette->generic_string();
			if (!b.inner.empty())
				j["inner"] = b.inner;
			if (!b.http.base_url.empty()) {
				j["base_url"] = b.http.base_url;
				j["key_env"] = b.http.key_env;
			}
			c["backends"][name] = std::move(j);
		}
		return c;
	}

	/// Hashes of every input file, so a changed input shows in run.json.
	inline nlohmann::ordered_json fingerprints(const RunConfig& cfg)
	{
		nlohmann::ordered_json f;
		f["dataset"] = file_fingerprint(cfg.dataset);
		f["thesaurus"] = cfg.thesaurus && std::filesystem::exists(*cfg.thesaurus) ? nlohmann::ordered_json(file_fingerprint(*cfg.thesaurus))
																				   : nlohmann::ordered_json(nullptr);
		f["paraphrases"] = cfg.paraphrases && std::filesystem::exists(*cfg.paraphrases) ? nlohmann::ordered_json(file_fingerprint(*cfg.paraphrases))
																						 : nlohmann::ordered_json(nullptr);
		f["cassettes"] = nlohmann::ordered_json::object();
		f["templates"] = nlohmann::ordered_json::object();
		for (const auto& m : cfg.models) {
			for (const auto& path : backend_cassettes(cfg, m.backend))
				f["cassettes"][path.generic_string()] = std::filesystem::exists(path) ? nlohmann::ordered_json(file_fingerprint(path)) : nlohmann::ordered_json(nullptr);
			for (auto it = cfg.backends.find(m.backend); it != cfg.backends.end(); it = cfg.backends.find(it->second.inner)) {
				if (it->second.templates)
					f["templates"][it->second.templates->generic_string()] = file_fingerprint(*it->second.templates);
				if (it->second.inner.empty())
					break;
			}
		}
		return f;
	}

	template <class EvalTask>
	int run_evaluation(const RunConfig& cfg, const Dataset& ds, bool resume, std::string_view command, std::ostream& log, EvalTask&& eval_task)
	{
		const auto out_dir = cfg.output_dir;
		std::filesystem::create_directories(out_dir);
		if (!resume)
			std::filesystem::remove_all(out_dir / "checkpoints");
		DirectoryCheckpoint checkpoint(out_dir / "checkpoints");

		// Build every backend first so configuration problems surface before any request.
		std::vector<std::unique_ptr<Backend>> backends;
		for (const auto& m : cfg.models)
			backends.push_back(make_backend(cfg, m.backend, ds));

		std::vector<SweepResult> results;
		std::vector<Failure> failures;
		for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
			const auto pcfg = cfg.pipeline(cfg.models[mi]);
			auto& backend = *backends[mi];
			for (const auto& task : ds.tasks) {
				try {
					eval_task(task, pcfg, backend, checkpoint, results);
				} catch (const BackendError& e) {
					const int code = dynamic_cast<const ReplayMiss*>(&e) ? exit_replay_miss : exit_backend;
					failures.push_back({pcfg.model, task.id, e.what(), code});
					log << "incomplete: model " << pcfg.model << ", task " << task.id << ": " << e.what() << '\n';
				}
			}
			backend.flush();
		}

		write_file(out_dir / "pairs.csv", pairs_csv(results));
		write_file(out_dir / "points.csv", points_csv(results));

		nlohmann::ordered_json run;
		run["command"] = command;
		run["config"] = config_echo(cfg);
		run["fingerprints"] = fingerprints(cfg);
		run["sweeps_completed"] = results.size();
		run["incomplete"] = nlohmann::ordered_json::array();
		for (const auto& f : failures)
			run["incomplete"].push_back({{"model", f.model}, {"task_id", f.task_id}, {"error", f.message}});
		write_file(out_dir / "run.json", run.dump(2) + "\n");

		log << results.size() << " sweeps written to " << out_dir.generic_string() << '\n';
		if (failures.empty())
			return exit_ok;
		for (const auto& f : failures)
			if (f.code == exit_replay_miss)
				return exit_replay_miss;
		return exit_backend;
	}
}

/// Runs every (model, task, method) sweep and writes pairs.csv, points.csv
/// and run.json into the output directory.
inline int cmd_sweep(const SweepOptions& opt, std::ostream& log)
{
	auto cfg = detail::resolve_config(opt);
	for (auto m : cfg.methods)
		if (m == AugmentMethod::paraphrase)
			throw ConfigError("sweep: use paraphrase-eval for the paraphrase method");
	cfg.validate();
	const auto ds = load_dataset(cfg.dataset);
	std::optional<Thesaurus> th;
	if (cfg.thesaurus)
		th = load_thesaurus(*cfg.thesaurus);

	return detail::run_evaluation(cfg, ds, opt.resume, "sweep", log,
								  [&](const TaskRecord& task, const PipelineConfig& pcfg, Backend& backend, SweepCheckpoint& cp, std::vector<SweepResult>& out) {
									  const auto ref = reference_for(task, pcfg, backend, &cp);
									  for (auto method : pcfg.methods)
										  out.push_back(run_sweep(task, method, pcfg, backend, ref, th ? &*th : nullptr, &cp));
								  });
}

/// Paraphrase-level evaluation of every task that has paraphrases.
inline int cmd_paraphrase_eval(const SweepOptions& opt, std::ostream& log)
{
	auto cfg = detail::resolve_config(opt);
	cfg.methods = {AugmentMethod::paraphrase};
	cfg.validate();
	if (!cfg.paraphrases)
		throw ConfigError("paraphrase-eval: a paraphrases file is required");
	const auto ds = load_dataset(cfg.dataset);
	const auto paraphrases = load_paraphrases(*cfg.paraphrases);
	for (const auto& [task_id, _] : paraphrases)
		if (!ds.find(task_id))
			warn("paraphrases for unknown task " + task_id + " ignored");

	return detail::run_evaluation(cfg, ds, opt.resume, "paraphrase-eval", log,
								  [&](const TaskRecord& task, const PipelineConfig& pcfg, Backend& backend, SweepCheckpoint& cp, std::vector<SweepResult>& out) {
									  auto it = paraphrases.find(task.id);
									  if (it == paraphrases.end()) {
										  warn("task " + task.id + " has no paraphrases; skipped");
										  return;
									  }
									  const auto ref = reference_for(task, pcfg, backend, &cp);
									  out.push_back(run_paraphrase_eval(task, it->second, pcfg, backend, ref, &cp));
								  });
}

struct AggregateOptions
{
	std::vector<std::filesystem::path> runs;
	std::vector<std::string> by; // subset of {run, model, task}
	std::filesystem::path out;
	std::size_t resamples = 2000;
	std::uint64_t seed = 0x5eed;
};

/// Pools pair scores across runs/models/tasks per method and the chosen
/// dimensions; writes <dims...>,method,rate,mean,ci_low,ci_high,count.
inline int cmd_aggregate(const AggregateOptions& opt, std::ostream& log)
{
	if (opt.runs.empty())
		throw ConfigError("aggregate: at least one run directory is required");
	bool by_run = false, by_model = false, by_task = false;
	for (const auto& d : opt.by) {
		if (d == "run")
			by_run = true;
		else if (d == "model")
			by_model = true;
		else if (d == "task")
			by_task = true;
		else
			throw ConfigError("aggregate: unknown pooling dimension \"" + d + "\" (expected run, model or task)");
	}

	using Key = std::tuple<std::string, std::string, std::string, std::string>; // run, model, task, method
	std::vector<Key> order;
	std::map<Key, std::vector<SweepResult>> groups;
	for (const auto& run : opt.runs) {
		for (auto& r : load_run(run)) {
			if (r.pairs.empty())
				throw DataError("aggregate: " + run.generic_string() + " has no pairs.csv rows for task " + r.task_id);
			Key key{by_run ? run.generic_string() : "", by_model ? r.model : "", by_task ? r.task_id : "", r.method};
			auto [it, fresh] = groups.try_emplace(key);
			if (fresh)
				order.push_back(key);
			it->second.push_back(std::move(r));
		}
	}

	std::vector<std::string> header;
	if (by_run)
		header.push_back("run");
	if (by_model)
		header.push_back("model");
	if (by_task)
		header.push_back("task_id");
	for (auto h : {"method", "rate", "mean", "ci_low", "ci_high", "count"})
		header.push_back(h);
	std::string out = csv::row(header);
	for (const auto& key : order) {
		const auto& [run, model, task, method] = key;
		for (const auto& p : aggregate_curves(groups.at(key), opt.resamples, opt.seed)) {
			std::vector<std::string> row;
			if (by_run)
				row.push_back(run);
			if (by_model)
				row.push_back(model);
			if (by_task)
				row.push_back(task);
			for (auto v : {method, p.label, format_double(p.mean_similarity), format_double(p.ci_low), format_double(p.ci_high), std::to_string(p.count)})
				row.push_back(v);
			out += csv::row(row);
		}
	}
	write_file(opt.out, out);
	log << order.size() << " curves written to " << opt.out.generic_string() << '\n';
	return exit_ok;
}

struct StatsOptions
{
	std::string test;                          // friedman | kruskal
	std::vector<std::filesystem::path> inputs; // CSV files or run directories
	std::string block;                         // friedman: task | model | task_model
	std::string method;                        // filter
	std::string model;                         // filter
	std::string rate;                          // kruskal filter on the rate column
	std::string measure = "mean";              // kruskal: mean | drop
	std::optional<std::filesystem::path> out;
};

namespace detail
{
	struct Observation
	{
		std::string model;
		std::string task;
		std::string method;
		std::string rate;
		double value;
	};

	/// Rows of points.csv (value = mean) or pairs.csv (value = tsed).
	inline std::vector<Observation> read_observations(const std::filesystem::path& input, const StatsOptions& opt)
	{
		auto path = std::filesystem::is_directory(input) ? input / "points.csv" : input;
		if (!std::filesystem::exists(path))
			throw DataError("stats: input not found: " + path.string());
		const csv::Table t(read_file(path), path.string());
		const auto value_col = t.has("tsed") ? t.column("tsed") : t.column("mean");
		const auto c_model = t.column("model"), c_task = t.column("task_id"), c_method = t.column("method"), c_rate = t.column("rate");
		std::vector<Observation> out;
		std::set<std::string> methods;
		for (std::size_t r = 0; r < t.size(); ++r) {
			const auto& row = t[r];
			if (!opt.method.empty() && row[c_method] != opt.method)
				continue;
			if (!opt.model.empty() && row[c_model] != opt.model)
				continue;
			methods.insert(row[c_method]);
			out.push_back({row[c_model], row[c_task], row[c_method], row[c_rate], csv::to_double(row[value_col], path.string() + ":" + std::to_string(r + 2))});
		}
		if (methods.size() > 1)
			throw ConfigError("stats: " + path.string() + " mixes several methods; select one with --method");
		if (out.empty())
			throw DataError("stats: no rows selected from " + path.string());
		return out;
	}
}

/// Friedman across rates (blocks chosen by --block) or Kruskal-Wallis across
/// input files. Prints {test, statistic, df, p_value} as JSON.
inline int cmd_stats(const StatsOptions& opt, std::ostream& out)
{
	if (opt.inputs.empty())
		throw ConfigError("stats: at least one input is required");
	stats::TestResult res;
	if (opt.test == "friedman") {
		if (opt.inputs.size() != 1)
			throw ConfigError("stats: friedman takes exactly one input");
		if (opt.block != "task" && opt.block != "model" && opt.block != "task_model")
			throw ConfigError("stats: friedman requires --block task, model or task_model");
		const auto obs = detail::read_observations(opt.inputs.front(), opt);
		std::vector<std::string> blocks, treatments;
		std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> cells;
		for (const auto& o : obs) {
			const auto block = opt.block == "task" ? o.task : opt.block == "model" ? o.model : o.model + "\x1f" + o.task;
			if (std::find(blocks.begin(), blocks.end(), block) == blocks.end())
				blocks.push_back(block);
			if (std::find(treatments.begin(), treatments.end(), o.rate) == treatments.end())
				treatments.push_back(o.rate);
			auto& cell = cells[{block, o.rate}];
			cell.first += o.value;
			cell.second += 1;
		}
		std::vector<std::vector<double>> rows;
		for (const auto& b : blocks) {
			std::vector<double> row;
			for (const auto& t : treatments) {
				auto it = cells.find({b, t});
				if (it == cells.end())
					throw DataError("stats: block " + b + " has no value at rate " + t);
				row.push_back(it->second.first / static_cast<double>(it->second.second));
			}
			rows.push_back(std::move(row));
		}
		res = stats::friedman(stats::RankMatrix(std::move(rows)));
	} else if (opt.test == "kruskal") {
		if (opt.inputs.size() < 2)
			throw ConfigError("stats: kruskal takes one input per group (at least 2)");
		if (opt.measure != "mean" && opt.measure != "drop")
			throw ConfigError("stats: --measure must be mean or drop");
		std::vector<std::vector<double>> groups;
		for (const auto& input : opt.inputs) {
			const auto obs = detail::read_observations(input, opt);
			std::vector<double> g;
			if (opt.measure == "mean") {
				for (const auto& o : obs)
					if (opt.rate.empty() || o.rate == opt.rate)
						g.push_back(o.value);
			} else {
				// first-rate minus last-rate value per (model, task)
				std::map<std::pair<std::string, std::string>, std::vector<double>> series;
				std::vector<std::pair<std::string, std::string>> keys;
				for (const auto& o : obs) {
					auto key = std::make_pair(o.model, o.task);
					if (!series.count(key))
						keys.push_back(key);
					series[key].push_back(o.value);
				}
				for (const auto& k : keys)
					g.push_back(series[k].front() - series[k].back());
			}
			if (g.empty())
				throw DataError("stats: no observations selected from " + input.string());
			groups.push_back(std::move(g));
		}
		res = stats::kruskal_wallis(groups);
	} else {
		throw ConfigError("stats: --test must be friedman or kruskal");
	}

	nlohmann::ordered_json j;
	j["test"] = opt.test;
	j["statistic"] = res.statistic;
	j["df"] = res.df;
	j["p_value"] = res.p_value;
	const auto text = j.dump(2) + "\n";
	out << text;
	if (opt.out)
		write_file(*opt.out, text);
	return exit_ok;
}

struct ReportOptions
{
	std::filesystem::path run;
	std::optional<std::filesystem::path> out;
	std::size_t resamples = 2000;
	std::uint64_t seed = 0x5eed;
};

/// One curve per method: curve_<method>.csv and curve_<method>.svg. A method
/// with several sweeps (tasks or models) is pooled from pairs.csv.
inline int cmd_report(const ReportOptions& opt, std::ostream& log)
{
	const auto results = load_run(opt.run);
	const auto out_dir = opt.out.value_or(opt.run / "report");
	std::vector<std::string> methods;
	for (const auto& r : results)
		if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
			methods.push_back(r.method);

	for (const auto& method : methods) {
		std::vector<SweepResult> group;
		for (const auto& r : results)
			if (r.method == method)
				group.push_back(r);
		std::vector<RatePoint> curve;
		if (group.size() == 1) {
			curve = group.front().points;
		} else {
			for (const auto& g : group)
				if (g.pairs.empty())
					throw DataError("report: pooling several sweeps of " + method + " needs pairs.csv");
			curve = aggregate_curves(group, opt.resamples, opt.seed);
		}
		write_file(out_dir / ("curve_" + method + ".csv"), curve_csv(curve));
		write_file(out_dir / ("curve_" + method + ".svg"), curve_svg(curve, method + ": mean TSED similarity"));
		log << "curve_" << method << " (" << curve.size() << " points)\n";
	}
	return exit_ok;
}

}
