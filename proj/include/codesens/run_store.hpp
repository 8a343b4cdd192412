#pragma once

#include "csv.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "io.hpp"
#include "pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <cctype>
#include <map>
#include <tuple>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace codesens
{

inline constexpr std::string_view pairs_header = "model,task_id,method,rate,i,j,tsed\n";
inline constexpr std::string_view points_header = "model,task_id,method,rate,mean,ci_low,ci_high,count\n";

/// pairs.csv contents. The rate column holds the point label.
inline std::string pairs_csv(const std::vector<SweepResult>& results)
{
	std::string out(pairs_header);
	for (const auto& r : results)
		for (const auto& p : r.pairs)
			out += csv::row({r.model, r.task_id, r.method, r.points.at(p.point).label, std::to_string(p.i), std::to_string(p.j), format_double(p.tsed)});
	return out;
}

inline std::string points_csv(const std::vector<SweepResult>& results)
{
	std::string out(points_header);
	for (const auto& r : results)
		for (const auto& p : r.points)
			out += csv::row({r.model, r.task_id, r.method, p.label, format_double(p.mean_similarity), format_double(p.ci_low), format_double(p.ci_high),
							 std::to_string(p.count)});
	return out;
}

/// Rate of a point label: the number itself, or the index of a paraphrase level.
inline double label_rate(const std::string& label)
{
	for (std::size_t i = 0; i < all_paraphrase_levels.size(); ++i)
		if (label == to_string(all_paraphrase_levels[i]))
			return static_cast<double>(i);
	return csv::to_double(label, "rate label");
}

/// Rebuilds sweep results from a run directory's pairs.csv and points.csv.
/// Order follows points.csv.
inline std::vector<SweepResult> load_run(const std::filesystem::path& run_dir)
{
	const auto points_path = run_dir / "points.csv";
	if (!std::filesystem::exists(points_path))
		throw DataError("missing " + points_path.string());
	const csv::Table points(read_file(points_path), points_path.string());

	std::vector<SweepResult> results;
	std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
	const auto c_model = points.column("model"), c_task = points.column("task_id"), c_method = points.column("method"), c_rate = points.column("rate"),
			   c_mean = points.column("mean"), c_lo = points.column("ci_low"), c_hi = points.column("ci_high"), c_count = points.column("count");
	for (std::size_t r = 0; r < points.size(); ++r) {
		const auto& row = points[r];
		const auto where = points.source() + ":" + std::to_string(r + 2);
		const auto key = std::make_tuple(row[c_model], row[c_task], row[c_method]);
		auto [it, fresh] = index.emplace(key, results.size());
		if (fresh)
			results.push_back(SweepResult{row[c_task], row[c_model], row[c_method], {}, {}});
		RatePoint p;
		p.label = row[c_rate];
		p.rate = label_rate(p.label);
		p.mean_similarity = csv::to_double(row[c_mean], where);
		p.ci_low = csv::to_double(row[c_lo], where);
		p.ci_high = csv::to_double(row[c_hi], where);
		p.count = csv::to_size(row[c_count], where);
		results[it->second].points.push_back(std::move(p));
	}

	const auto pairs_path = run_dir / "pairs.csv";
	if (std::filesystem::exists(pairs_path)) {
		const csv::Table pairs(read_file(pairs_path), pairs_path.string());
		const auto p_model = pairs.column("model"), p_task = pairs.column("task_id"), p_method = pairs.column("method"), p_rate = pairs.column("rate"),
				   p_i = pairs.column("i"), p_j = pairs.column("j"), p_tsed = pairs.column("tsed");
		for (std::size_t r = 0; r < pairs.size(); ++r) {
			const auto& row = pairs[r];
			const auto where = pairs.source() + ":" + std::to_string(r + 2);
			auto it = index.find(std::make_tuple(row[p_model], row[p_task], row[p_method]));
			if (it == index.end())
				throw DataError(where + ": pair without a matching point");
			auto& res = results[it->second];
			std::size_t point = res.points.size();
			for (std::size_t k = 0; k < res.points.size(); ++k)
				if (res.points[k].label == row[p_rate])
					point = k;
			if (point == res.points.size())
				throw DataError(where + ": pair rate " + row[p_rate] + " has no point");
			res.pairs.push_back({point, csv::to_size(row[p_i], where), csv::to_size(row[p_j], where), csv::to_double(row[p_tsed], where)});
		}
	}
	return results;
}

/// Checkpoint files under <run>/checkpoints: one per (model, task) for the
/// reference set and one per (model, task, method) for finished points.
class DirectoryCheckpoint : public SweepCheckpoint
{
public:
	explicit DirectoryCheckpoint(std::filesystem::path dir) : dir_(std::move(dir)) {}

	std::optional<std::vector<CodeSample>> load_reference(const std::string& model, const std::string& task_id) override
	{
		std::lock_guard lock(mutex_);
		const auto path = file(model, task_id, "reference");
		if (!std::filesystem::exists(path))
			return std::nullopt;
		const auto doc = parse(path);
		std::vector<CodeSample> out;
		for (const auto& s : doc.at("samples")) {
			CodeSample c;
			c.text = s.at("text").get<std::string>();
			if (s.contains("language") && s["language"].is_string())
				c.language_hint = s["language"].get<std::string>();
			c.origin = {task_id, "reference", 0.0, out.size()};
			out.push_back(std::move(c));
		}
		return out;
	}

	void store_reference(const std::string& model, const std::string& task_id, const std::vector<CodeSample>& samples) override
	{
		std::lock_guard lock(mutex_);
		nlohmann::ordered_json doc;
		doc["model"] = model;
		doc["task_id"] = task_id;
		doc["samples"] = nlohmann::ordered_json::array();
		for (const auto& s : samples) {
			nlohmann::ordered_json item;
			item["text"] = s.text;
			item["language"] = s.language_hint ? nlohmann::ordered_json(*s.language_hint) : nlohmann::ordered_json(nullptr);
			doc["samples"].push_back(std::move(item));
		}
		write_file(file(model, task_id, "reference"), doc.dump(1) + "\n");
	}

	std::optional<std::vector<double>> load_point(const std::string& model, const std::string& task_id, const std::string& method,
												  const std::string& label) override
	{
		std::lock_guard lock(mutex_);
		const auto path = file(model, task_id, method);
		if (!std::filesystem::exists(path))
			return std::nullopt;
		const auto doc = parse(path);
		const auto& pts = doc.at("points");
		if (!pts.contains(label))
			return std::nullopt;
		return pts.at(label).get<std::vector<double>>();
	}

	void store_point(const std::string& model, const std::string& task_id, const std::string& method, const std::string& label,
					 const std::vector<double>& scores) override
	{
		std::lock_guard lock(mutex_);
		const auto path = file(model, task_id, method);
		nlohmann::json doc = std::filesystem::exists(path) ? parse(path) : nlohmann::json{{"points", nlohmann::json::object()}};
		doc["model"] = model;
		doc["task_id"] = task_id;
		doc["method"] = method;
		doc["points"][label] = scores;
		write_file(path, doc.dump(1) + "\n");
	}

private:
	static std::string safe(std::string_view name)
	{
		std::string out;
		for (char c : name)
			out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_') ? c : '_';
		return out.substr(0, 40) + "-" + to_hex(fnv1a64(name)).substr(0, 8);
	}

	std::filesystem::path file(std::string_view model, std::string_view task, std::string_view what) const
	{
		return dir_ / (safe(model) + "__" + safe(task) + "__" + std::string(what) + ".json");
	}

	static nlohmann::json parse(const std::filesystem::path& path)
	{
		try {
			return nlohmann::json::parse(read_file(path));
		} catch (const nlohmann::json::exception& e) {
			throw DataError(path.string() + ": corrupt checkpoint: " + e.what());
		}
	}

	std::filesystem::path dir_;
	std::mutex mutex_;
};

/// Lowercase hex FNV-1a of a file's bytes.
inline std::string file_fingerprint(const std::filesystem::path& path) { return to_hex(fnv1a64(read_file(path))); }

}
