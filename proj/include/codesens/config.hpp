#pragma once

#include "augment.hpp"
#include "backend.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "io.hpp"
#include "pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace codesens
{

/// One entry of the "backends" table.
struct BackendSpec
{
	std::string name;
	std::string kind; // constant | corruptor | replay | record | http
	std::string payload;
	std::string code_template;
	std::optional<std::filesystem::path> templates;
	std::optional<std::filesystem::path> cassette;
	std::string inner;
	HttpConfig http;
};

/// A model under test: the name sent in requests and the backend serving it.
struct ModelSpec
{
	std::string name;
	std::string backend;
};

/// Run configuration file (JSON).
///
///   dataset, thesaurus, paraphrases   paths, relative to the config file
///   methods                           ["typos", "synonyms"]
///   n_samples, rate_step, parallelism, temperature
///   output_dir
///   envelope                          {"prefix": ..., "postfix": ...}
///   bootstrap                         {"resamples": 2000, "seed": 24301}
///   models                            [{"name": ..., "backend": ...}]
///   backends                          {name: {"kind": ..., kind-specific keys}}
///
/// Backend keys by kind:
///   constant   payload
///   corruptor  template and/or templates (JSON Lines {task_id, code})
///   replay     cassette
///   record     cassette, inner (name of another backend)
///   http       base_url, key_env, max_attempts, initial_backoff_ms,
///              max_backoff_ms, timeout_s, max_in_flight
struct RunConfig
{
	std::filesystem::path dataset;
	std::optional<std::filesystem::path> thesaurus;
	std::optional<std::filesystem::path> paraphrases;
	std::vector<AugmentMethod> methods{AugmentMethod::typos};
	std::size_t n_samples = 5;
	double rate_step = 0.1;
	std::size_t parallelism = 4;
	double temperature = 0.0;
	std::filesystem::path output_dir = "run";
	PromptEnvelope envelope = default_envelope();
	std::size_t bootstrap_resamples = 2000;
	std::uint64_t bootstrap_seed = 0x5eed;
	std::vector<ModelSpec> models;
	std::map<std::string, BackendSpec> backends;

	PipelineConfig pipeline(const ModelSpec& model) const
	{
		PipelineConfig p;
		p.n_samples = n_samples;
		p.rate_step = rate_step;
		p.methods = methods;
		p.model = model.name;
		p.backend = model.backend;
		p.dataset = dataset.stem().string();
		p.parallelism = parallelism;
		p.temperature = temperature;
		p.envelope = envelope;
		p.bootstrap_resamples = bootstrap_resamples;
		p.bootstrap_seed = bootstrap_seed;
		return p;
	}

	/// Checks everything that can be checked without touching the network.
	void validate() const
	{
		if (dataset.empty())
			throw ConfigError("config: dataset is required");
		if (methods.empty())
			throw ConfigError("config: at least one method is required");
		if (models.empty())
			throw ConfigError("config: at least one model is required");
		for (auto m : methods)
			if (m == AugmentMethod::synonyms && !thesaurus)
				throw ConfigError("config: synonyms method requires a thesaurus");
		PipelineConfig probe;
		probe.n_samples = n_samples;
		probe.rate_step = rate_step;
		probe.parallelism = parallelism;
		probe.temperature = temperature;
		probe.bootstrap_resamples = bootstrap_resamples;
		probe.validate();
		std::set<std::string> names;
		for (const auto& m : models) {
			if (m.name.empty())
				throw ConfigError("config: model without a name");
			if (!names.insert(m.name).second)
				throw ConfigError("config: duplicate model " + m.name);
			check_backend(m.backend, 0);
		}
	}

	void check_backend(const std::string& name, int depth) const
	{
		auto it = backends.find(name);
		if (it == backends.end())
			throw ConfigError("config: unknown backend \"" + name + "\"");
		if (depth > 8)
			throw ConfigError("config: backend chain too deep at \"" + name + "\"");
		const auto& b = it->second;
		if (b.kind == "constant") {
			if (b.payload.empty())
				throw ConfigError("config: constant backend " + name + " needs a payload");
		} else if (b.kind == "corruptor") {
			if (b.code_template.empty() && !b.templates)
				throw ConfigError("config: corruptor backend " + name + " needs template or templates");
		} else if (b.kind == "replay") {
			if (!b.cassette)
				throw ConfigError("config: replay backend " + name + " needs a cassette");
		} else if (b.kind == "record") {
			if (!b.cassette || b.inner.empty())
				throw ConfigError("config: record backend " + name + " needs cassette and inner");
			check_backend(b.inner, depth + 1);
		} else if (b.kind == "http") {
			if (b.http.base_url.empty())
				throw ConfigError("config: http backend " + name + " needs base_url");
		} else {
			throw ConfigError("config: backend " + name + " has unknown kind \"" + b.kind + "\"");
		}
	}
};

namespace detail
{
	template <class T>
	T get_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& where)
	{
		if (!obj.contains(key))
			return fallback;
		try {
			return obj.at(key).get<T>();
		} catch (const nlohmann::json::exception& e) {
			throw ConfigError(where + ": bad value for \"" + key + "\": " + e.what());
		}
	}

	inline void warn_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> known, const std::string& where)
	{
		for (const auto& [key, _] : obj.items())
			if (std::find(known.begin(), known.end(), key) == known.end())
				warn(where + ": ignoring unknown key \"" + key + "\"");
	}
}

inline RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {}, std::string_view source = "config")
{
	using nlohmann::json;
	const std::string where(source);
	json doc;
	try {
		doc = json::parse(text);
	} catch (const json::parse_error& e) {
		throw ConfigError(where + ": malformed config: " + e.what());
	}
	if (!doc.is_object())
		throw ConfigError(where + ": config must be a JSON object");
	detail::warn_unknown(doc,
						 {"dataset", "thesaurus", "paraphrases", "methods", "n_samples", "rate_step", "parallelism", "temperature", "output_dir", "envelope",
						  "bootstrap", "models", "backends"},
						 where);

	auto path_of = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() || base_dir.empty() ? std::filesystem::path(p) : base_dir / p; };

	RunConfig cfg;
	if (doc.contains("dataset"))
		cfg.dataset = path_of(detail::get_or<std::string>(doc, "dataset", "", where));
	if (doc.contains("thesaurus"))
		cfg.thesaurus = path_of(detail::get_or<std::string>(doc, "thesaurus", "", where));
	if (doc.contains("paraphrases"))
		cfg.paraphrases = path_of(detail::get_or<std::string>(doc, "paraphrases", "", where));
	if (doc.contains("methods")) {
		cfg.methods.clear();
		for (const auto& m : detail::get_or<std::vector<std::string>>(doc, "methods", {}, where))
			cfg.methods.push_back(parse_augment_method(m));
	}
	cfg.n_samples = detail::get_or<std::size_t>(doc, "n_samples", cfg.n_samples, where);
	cfg.rate_step = detail::get_or<double>(doc, "rate_step", cfg.rate_step, where);
	cfg.parallelism = detail::get_or<std::size_t>(doc, "parallelism", cfg.parallelism, where);
	cfg.temperature = detail::get_or<double>(doc, "temperature", cfg.temperature, where);
	if (doc.contains("output_dir"))
		cfg.output_dir = path_of(detail::get_or<std::string>(doc, "output_dir", "", where));
	if (doc.contains("envelope")) {
		const auto& env = doc["envelope"];
		cfg.envelope.prefix = detail::get_or<std::string>(env, "prefix", cfg.envelope.prefix, where + ".envelope");
		cfg.envelope.postfix = detail::get_or<std::string>(env, "postfix", cfg.envelope.postfix, where + ".envelope");
	}
	if (doc.contains("bootstrap")) {
		const auto& bs = doc["bootstrap"];
		cfg.bootstrap_resamples = detail::get_or<std::size_t>(bs, "resamples", cfg.bootstrap_resamples, where + ".bootstrap");
		cfg.bootstrap_seed = detail::get_or<std::uint64_t>(bs, "seed", cfg.bootstrap_seed, where + ".bootstrap");
	}
	if (doc.contains("models")) {
		if (!doc["models"].is_array())
			throw ConfigError(where + ": models must be a list");
		for (const auto& m : doc["models"]) {
			ModelSpec spec;
			spec.name = detail::get_or<std::string>(m, "name", "", where + ".models");
			spec.backend = detail::get_or<std::string>(m, "backend", "", where + ".models");
			cfg.models.push_back(std::move(spec));
		}
	}
	if (doc.contains("backends")) {
		if (!doc["backends"].is_object())
			throw ConfigError(where + ": backends must be an object");
		for (const auto& [name, b] : doc["backends"].items()) {
			const auto bw = where + ".backends." + name;
			detail::warn_unknown(b,
								 {"kind", "payload", "template", "templates", "cassette", "inner", "base_url", "key_env", "max_attempts",
								  "initial_backoff_ms", "max_backoff_ms", "timeout_s", "max_in_flight"},
								 bw);
			BackendSpec spec;
			spec.name = name;
			spec.kind = detail::get_or<std::string>(b, "kind", "", bw);
			spec.payload = detail::get_or<std::string>(b, "payload", "", bw);
			spec.code_template = detail::get_or<std::string>(b, "template", "", bw);
			if (b.contains("templates"))
				spec.templates = path_of(detail::get_or<std::string>(b, "templates", "", bw));
			if (b.contains("cassette"))
				spec.cassette = path_of(detail::get_or<std::string>(b, "cassette", "", bw));
			spec.inner = detail::get_or<std::string>(b, "inner", "", bw);
			spec.http.base_url = detail::get_or<std::string>(b, "base_url", "", bw);
			spec.http.key_env = detail::get_or<std::string>(b, "key_env", "", bw);
			spec.http.max_attempts = detail::get_or<std::size_t>(b, "max_attempts", spec.http.max_attempts, bw);
			spec.http.initial_backoff = std::chrono::milliseconds(detail::get_or<long long>(b, "initial_backoff_ms", spec.http.initial_backoff.count(), bw));
			spec.http.max_backoff = std::chrono::milliseconds(detail::get_or<long long>(b, "max_backoff_ms", spec.http.max_backoff.count(), bw));
			spec.http.timeout = std::chrono::seconds(detail::get_or<long long>(b, "timeout_s", spec.http.timeout.count(), bw));
			spec.http.max_in_flight = detail::get_or<std::size_t>(b, "max_in_flight", spec.http.max_in_flight, bw);
			cfg.backends.emplace(name, std::move(spec));
		}
	}
	return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
	if (!std::filesystem::exists(path))
		throw ConfigError("config file not found: " + path.string());
	return parse_run_config(read_file(path), path.parent_path(), path.string());
}

/// Corruptor templates file: JSON Lines {task_id, code}.
inline std::map<std::string, std::string, std::less<>> load_templates(const std::filesystem::path& path)
{
	std::map<std::string, std::string, std::less<>> out;
	const auto text = read_file(path);
	std::size_t pos = 0, line_no = 0;
	while (pos <= text.size()) {
		auto nl = text.find('\n', pos);
		if (nl == std::string::npos)
			nl = text.size();
		const auto line = trim(std::string_view(text).substr(pos, nl - pos));
		pos = nl + 1;
		++line_no;
		if (line.empty())
			continue;
		try {
			const auto obj = nlohmann::json::parse(line);
			out[obj.at("task_id").get<std::string>()] = obj.at("code").get<std::string>();
		} catch (const nlohmann::json::exception& e) {
			throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed template record: " + e.what());
		}
	}
	return out;
}

/// Builds the backend named `name`. Corruptor backends register every task
/// of `dataset` with its template.
inline std::unique_ptr<Backend> make_backend(const RunConfig& cfg, const std::string& name, const Dataset& dataset)
{
	cfg.check_backend(name, 0);
	const auto& b = cfg.backends.at(name);
	if (b.kind == "constant")
		return std::make_unique<ConstantBackend>(b.payload, name);
	if (b.kind == "corruptor") {
		auto backend = std::make_unique<CorruptorBackend>(cfg.envelope, name);
		std::map<std::string, std::string, std::less<>> templates;
		if (b.templates)
			templates = load_templates(*b.templates);
		for (const auto& t : dataset.tasks) {
			auto it = templates.find(t.id);
			const auto& code = it != templates.end() ? it->second : b.code_template;
			if (code.empty())
				throw ConfigError("corruptor backend " + name + ": no template for task " + t.id);
			backend->register_original(t.prompt, code);
		}
		return backend;
	}
	if (b.kind == "replay")
		return std::make_unique<ReplayBackend>(std::make_shared<const Cassette>(Cassette::load(*b.cassette)), name);
	if (b.kind == "record")
		return std::make_unique<RecordBackend>(make_backend(cfg, b.inner, dataset), *b.cassette);
	return std::make_unique<HttpBackend>(b.http);
}

/// Cassette files a backend reads or writes, following record chains.
inline std::vector<std::filesystem::path> backend_cassettes(const RunConfig& cfg, const std::string& name)
{
	std::vector<std::filesystem::path> out;
	for (auto it = cfg.backends.find(name); it != cfg.backends.end(); it = cfg.backends.find(it->second.inner)) {
		if (it->second.cassette)
			out.push_back(*it->second.cassette);
		if (it->second.inner.empty())
			break;
	}
	return out;
}

}
