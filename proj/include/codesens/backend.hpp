#pragma once

#include "codeparse.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "io.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace codesens
{

struct GenerationRequest
{
	std::string model_name;
	std::string prompt;
	double temperature = 0.0;
	std::size_t sample_index = 0;
};

struct GenerationResponse
{
	std::string text;
	std::string backend_id;
	std::chrono::milliseconds latency{0};
	bool from_cache = false;
};

/// Cassette key: lowercase hex of the 64-bit FNV-1a hash of the fields
/// model_name, prompt, temperature (shortest round-trip decimal) and
/// sample_index (decimal), each followed by the byte 0x1f.
inline std::string request_key(const GenerationRequest& req)
{
	return to_hex(StableHasher{}.add(req.model_name).add(req.prompt).add(req.temperature).add(static_cast<std::uint64_t>(req.sample_index)).value());
}

/// Code generator. Implementations must accept concurrent generate() calls.
class Backend
{
public:
	virtual ~Backend() = default;
	virtual GenerationResponse generate(const GenerationRequest& req) = 0;
	virtual std::string id() const = 0;
	/// Persist anything buffered (record mode writes its cassette here).
	virtual void flush() {}
	/// Upper bound on concurrent requests worth issuing.
	virtual std::size_t max_in_flight() const { return 1; }
};

/// Recorded responses keyed by request_key(). Serialized as a JSON object
/// with sorted keys, so equal contents give byte-identical files.
class Cassette
{
public:
	Cassette() = default;

	static Cassette parse(std::string_view json_text, std::string_view source = "cassette")
	{
		Cassette c;
		nlohmann::json doc;
		try {
			doc = nlohmann::json::parse(json_text);
		} catch (const nlohmann::json::parse_error& e) {
			throw DataError(std::string(source) + ": malformed cassette: " + e.what());
		}
		if (!doc.is_object())
			throw DataError(std::string(source) + ": malformed cassette: expected a JSON object");
		for (const auto& [key, value] : doc.items()) {
			if (!value.is_string())
				throw DataError(std::string(source) + ": malformed cassette: entry " + key + " is not a string");
			c.entries_.emplace(key, value.get<std::string>());
		}
		return c;
	}

	static Cassette load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

	/// Loads `path` if it exists, otherwise starts empty.
	static Cassette load_or_empty(const std::filesystem::path& path)
	{
		return std::filesystem::exists(path) ? load(path) : Cassette{};
	}

	std::optional<std::string> find(const std::string& key) const
	{
		std::lock_guard lock(mutex_);
		auto it = entries_.find(key);
		if (it == entries_.end())
			return std::nullopt;
		return it->second;
	}

	void put(const std::string& key, std::string text)
	{
		std::lock_guard lock(mutex_);
		entries_[key] = std::move(text);
	}

	std::size_t size() const
	{
		std::lock_guard lock(mutex_);
		return entries_.size();
	}

	std::string serialize() const
	{
		std::lock_guard lock(mutex_);
		nlohmann::json doc = nlohmann::json::object();
		for (const auto& [k, v] : entries_)
			doc[k] = v;
		return doc.dump(2) + "\n";
	}

	void save(const std::filesystem::path& path) const { write_file(path, serialize()); }

	Cassette(const Cassette& other) : entries_(other.snapshot()) {}
	Cassette& operator=(const Cassette& other)
	{
		if (this != &other) {
			auto copy = other.snapshot();
			std::lock_guard lock(mutex_);
			entries_ = std::move(copy);
		}
		return *this;
	}

private:
	std::map<std::string, std::string> snapshot() const
	{
		std::lock_guard lock(mutex_);
		return entries_;
	}

	mutable std::mutex mutex_;
	std::map<std::string, std::string> entries_;
};

/// Returns the same payload for every request.
class ConstantBackend : public Backend
{
public:
	explicit ConstantBackend(std::string payload, std::string id = "constant") : payload_(std::move(payload)), id_(std::move(id)) {}

	GenerationResponse generate(const GenerationRequest&) override { return {payload_, id_, {}, false}; }
	std::string id() const override { return id_; }
	std::size_t max_in_flight() const override { return 16; }

private:
	std::string payload_;
	std::string id_;
};

namespace detail
{
	inline std::size_t levenshtein(std::string_view a, std::string_view b)
	{
		std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
		std::iota(prev.begin(), prev.end(), std::size_t{0});
		for (std::size_t i = 1; i <= a.size(); ++i) {
			cur[0] = i;
			for (std::size_t j = 1; j <= b.size(); ++j)
				cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
			std::swap(prev, cur);
		}
		return prev[b.size()];
	}

	inline bool letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

	/// Same length and identical non-letter bytes: the shape a typo edit keeps.
	inline bool same_skeleton(std::string_view a, std::string_view b)
	{
		if (a.size() != b.size())
			return false;
		for (std::size_t i = 0; i < a.size(); ++i)
			if (letter(a[i]) != letter(b[i]) || (!letter(a[i]) && a[i] != b[i]))
				return false;
		return true;
	}
}

/// Normalized letter-level difference between a prompt and its original, in
/// [0, 1]. Equal-length texts: differing positions over the original's letter
/// count. Otherwise: byte edit distance over the longer length.
inline double prompt_difference(std::string_view prompt, std::string_view original)
{
	if (prompt == original)
		return 0.0;
	if (prompt.size() == original.size()) {
		std::size_t letters = 0, differ = 0;
		for (std::size_t i = 0; i < original.size(); ++i) {
			letters += detail::letter(original[i]) ? 1 : 0;
			differ += prompt[i] != original[i] ? 1 : 0;
		}
		return letters == 0 ? 1.0 : std::min(1.0, static_cast<double>(differ) / static_cast<double>(letters));
	}
	const auto longest = std::max(prompt.size(), original.size());
	return std::min(1.0, static_cast<double>(detail::levenshtein(prompt, original)) / static_cast<double>(longest));
}

/// Distinct identifiers of `code` in first-occurrence order, per the generic
/// parser's tokenization.
inline std::vector<std::string> code_identifiers(std::string_view code)
{
	const auto tree = GenericParser().parse(code);
	std::vector<std::string> out;
	std::set<std::string, std::less<>> seen;
	for (std::size_t id = 1; id < tree.size(); ++id) {
		const auto& n = tree.node(id);
		if (!n.children.empty() || n.span.begin == SyntaxTree::npos || n.label.empty())
			continue;
		const auto c = static_cast<unsigned char>(n.label.front());
		const bool ident = std::isalpha(c) || c == '_' || c == '$' || c >= 0x80;
		if (ident && n.label != "comment" && seen.insert(n.label).second)
			out.push_back(n.label);
	}
	return out;
}

/// Test double for sensitivity curves: returns `code_template` with a share
/// of its distinct identifiers renamed, the share being
/// prompt_difference(req.prompt, original) rounded half-up to whole
/// identifiers. Which identifiers are renamed depends on the request only.
inline GenerationResponse mock_corruptor(const GenerationRequest& req, std::string_view code_template, std::string_view original,
										 std::string_view backend_id = "corruptor")
{
	if (code_template.empty())
		throw ConfigError("corruptor template must be nonempty");

	const double fraction = prompt_difference(req.prompt, original);
	const auto idents = code_identifiers(code_template);
	const double exact = fraction * static_cast<double>(idents.size());
	const auto k = std::min(idents.size(), static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9)));
	if (k == 0)
		return {std::string(code_template), std::string(backend_id), {}, false};

	const auto seed = StableHasher{}.add(req.prompt).add(static_cast<std::uint64_t>(req.sample_index)).value();
	Rng rng(seed);
	std::vector<std::size_t> order(idents.size());
	std::iota(order.begin(), order.end(), std::size_t{0});
	for (std::size_t i = 0; i < k; ++i)
		std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(order.size() - i))]);

	std::map<std::string, std::string, std::less<>> renames;
	for (std::size_t i = 0; i < k; ++i) {
		const auto& name = idents[order[i]];
		renames[name] = "v" + to_hex(StableHasher{}.add(name).add(seed).value()).substr(0, 8);
	}

	// Rewrite identifier tokens by span so strings and comments are untouched.
	const auto tree = GenericParser().parse(code_template);
	std::vector<std::pair<std::size_t, std::size_t>> spans;
	for (std::size_t id = 1; id < tree.size(); ++id) {
		const auto& n = tree.node(id);
		if (n.children.empty() && n.span.begin != SyntaxTree::npos && renames.count(n.label) && n.span.end - n.span.begin == n.label.size())
			spans.emplace_back(n.span.begin, n.span.end);
	}
	std::sort(spans.begin(), spans.end());
	std::string out;
	std::size_t cursor = 0;
	for (auto [b, e] : spans) {
		out.append(code_template.substr(cursor, b - cursor));
		out += renames.find(code_template.substr(b, e - b))->second;
		cursor = e;
	}
	out.append(code_template.substr(cursor));
	return {std::move(out), std::string(backend_id), {}, false};
}

/// Corruptor backend over a set of registered (original prompt, template)
/// pairs. A request is matched to the registered original it is closest to;
/// originals with the same non-letter skeleton (a typo edit) are preferred.
/// When an envelope is given it is stripped from both sides before comparing.
class CorruptorBackend : public Backend
{
public:
	explicit CorruptorBackend(std::optional<PromptEnvelope> envelope = std::nullopt, std::string id = "corruptor")
		: envelope_(std::move(envelope)), id_(std::move(id))
	{}

	void register_original(std::string original_prompt, std::string code_template)
	{
		if (code_template.empty())
			throw ConfigError("corruptor template must be nonempty");
		originals_.push_back({std::move(original_prompt), std::move(code_template)});
	}

	GenerationResponse generate(const GenerationRequest& req) override
	{
		if (originals_.empty())
			throw BackendError("corruptor backend has no registered prompts");
		const auto body = strip(req.prompt);
		const Entry* best = nullptr;
		double best_diff = 2.0;
		bool best_skeleton = false;
		for (const auto& e : originals_) {
			const auto orig = strip(e.original);
			const bool skeleton = detail::same_skeleton(body, orig);
			if (best_skeleton && !skeleton)
				continue;
			const double d = prompt_difference(body, orig);
			if ((skeleton && !best_skeleton) || d < best_diff) {
				best = &e;
				best_diff = d;
				best_skeleton = skeleton;
			}
		}
		GenerationRequest inner = req;
		inner.prompt = std::string(body);
		return mock_corruptor(inner, best->code_template, strip(best->original), id_);
	}

	std::string id() const override { return id_; }
	std::size_t max_in_flight() const override { return 16; }

private:
	struct Entry
	{
		std::string original;
		std::string code_template;
	};

	std::string_view strip(std::string_view prompt) const
	{
		if (!envelope_)
			return prompt;
		if (prompt.size() >= envelope_->prefix.size() + envelope_->postfix.size() && prompt.starts_with(envelope_->prefix)
			&& prompt.ends_with(envelope_->postfix))
			return prompt.substr(envelope_->prefix.size(), prompt.size() - envelope_->prefix.size() - envelope_->postfix.size());
		return prompt;
	}

	std::optional<PromptEnvelope> envelope_;
	std::string id_;
	std::vector<Entry> originals_;
};

/// Serves responses from a cassette only. A miss is an error, never a live call.
class ReplayBackend : public Backend
{
public:
	explicit ReplayBackend(std::shared_ptr<const Cassette> cassette, std::string id = "replay")
		: cassette_(std::move(cassette)), id_(std::move(id))
	{}

	GenerationResponse generate(const GenerationRequest& req) override
	{
		const auto key = request_key(req);
		auto hit = cassette_->find(key);
		if (!hit)
			throw ReplayMiss(key);
		return {std::move(*hit), id_, {}, true};
	}

	std::string id() const override { return id_; }
	std::size_t max_in_flight() const override { return 16; }

private:
	std::shared_ptr<const Cassette> cassette_;
	std::string id_;
};

/// Read-through recorder: serves cassette hits, otherwise calls the inner
/// backend and stores its answer. flush() writes the cassette file.
class RecordBackend : public Backend
{
public:
	RecordBackend(std::unique_ptr<Backend> inner, std::filesystem::path cassette_path)
		: inner_(std::move(inner)), path_(std::move(cassette_path)), cassette_(Cassette::load_or_empty(path_))
	{}

	~RecordBackend() override
	{
		try {
			flush();
		} catch (...) {
		}
	}

	GenerationResponse generate(const GenerationRequest& req) override
	{
		const auto key = request_key(req);
		if (auto hit = cassette_.find(key))
			return {std::move(*hit), id(), {}, true};
		auto resp = inner_->generate(req);
		cassette_.put(key, resp.text);
		std::lock_guard lock(mutex_);
		dirty_ = true;
		return resp;
	}

	void flush() override
	{
		std::lock_guard lock(mutex_);
		if (!dirty_)
			return;
		cassette_.save(path_);
		dirty_ = false;
	}

	std::string id() const override { return "record:" + inner_->id(); }
	std::size_t max_in_flight() const override { return inner_->max_in_flight(); }
	const Cassette& cassette() const noexcept { return cassette_; }

private:
	std::unique_ptr<Backend> inner_;
	std::filesystem::path path_;
	Cassette cassette_;
	std::mutex mutex_;
	bool dirty_ = false;
};

/// OpenAI-compatible chat-completions endpoint.
struct HttpConfig
{
	std::string base_url;            // e.g. "https://api.openai.com/v1"
	std::string key_env;             // name of the env var holding the API key; empty for none
	std::size_t max_attempts = 5;
	std::chrono::milliseconds initial_backoff{500};
	std::chrono::milliseconds max_backoff{30000};
	std::chrono::seconds timeout{120};
	std::size_t max_in_flight = 4;
};

/// POSTs {model, messages: [{role: "user", content}], temperature} to
/// <base_url>/chat/completions and returns choices[0].message.content.
///
/// Connection failures, 408 and 5xx are retried with exponential backoff; 429
/// is retried after Retry-After (or the backoff) and ends in RateLimitError
/// when attempts run out. 401/403 fail immediately with AuthError.
class HttpBackend : public Backend
{
public:
	using Sleeper = std::function<void(std::chrono::milliseconds)>;

	explicit HttpBackend(HttpConfig cfg, Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
		: cfg_(std::move(cfg)), sleeper_(std::move(sleeper)), slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(cfg_.max_in_flight, 1, 64)))
	{
		if (cfg_.max_attempts == 0)
			throw ConfigError("http backend: max_attempts must be positive");
		split_url();
		if (!cfg_.key_env.empty()) {
			const char* key = std::getenv(cfg_.key_env.c_str());
			if (!key || !*key)
				throw ConfigError("http backend: environment variable " + cfg_.key_env + " is not set");
			api_key_ = key;
		}
	}

	GenerationResponse generate(const GenerationRequest& req) override
	{
		nlohmann::json body = {
			{"model", req.model_name},
			{"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
			{"temperature", req.temperature},
		};
		const auto payload = body.dump();

		httplib::Headers headers;
		if (!api_key_.empty())
			headers.emplace("Authorization", "Bearer " + api_key_);

		slots_.acquire();
		struct Release
		{
			std::counting_semaphore<64>& s;
			~Release() { s.release(); }
		} release{slots_};

		const auto start = std::chrono::steady_clock::now();
		auto backoff = cfg_.initial_backoff;
		double last_retry_after = 0.0;
		std::string last_error;
		bool rate_limited = false;

		for (std::size_t attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
			httplib::Client client(scheme_host_port_);
			client.set_connection_timeout(cfg_.timeout);
			client.set_read_timeout(cfg_.timeout);
			client.set_write_timeout(cfg_.timeout);
			auto res = client.Post(path_ + "/chat/completions", headers, payload, "application/json");

			auto wait = backoff;
			if (!res) {
				last_error = "connection failed: " + httplib::to_string(res.error());
				rate_limited = false;
			} else if (res->status == 200) {
				auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
				return {parse_content(res->body), id(), elapsed, false};
			} else if (res->status == 401 || res->status == 403) {
				throw AuthError("http backend: authentication failed (HTTP " + std::to_string(res->status) + ")");
			} else if (res->status == 429) {
				rate_limited = true;
				last_error = "rate limited (HTTP 429)";
				last_retry_after = retry_after_seconds(*res).value_or(static_cast<double>(backoff.count()) / 1000.0);
				wait = std::chrono::milliseconds(static_cast<long long>(last_retry_after * 1000.0));
			} else if (res->status == 408 || res->status >= 500) {
				rate_limited = false;
				last_error = "HTTP " + std::to_string(res->status);
			} else {
				throw BackendError("http backend: request rejected (HTTP " + std::to_string(res->status) + "): " + res->body.substr(0, 200));
			}

			if (attempt < cfg_.max_attempts) {
				sleeper_(wait);
				backoff = std::min(backoff * 2, cfg_.max_backoff);
			}
		}
		if (rate_limited)
			throw RateLimitError("http backend: rate limit not lifted after " + std::to_string(cfg_.max_attempts) + " attempts", last_retry_after);
		throw BackendError("http backend: giving up after " + std::to_string(cfg_.max_attempts) + " attempts: " + last_error);
	}

	std::string id() const override { return "http:" + cfg_.base_url; }
	std::size_t max_in_flight() const override { return cfg_.max_in_flight; }

	static std::string parse_content(const std::string& body)
	{
		try {
			const auto doc = nlohmann::json::parse(body);
			return doc.at("choices").at(0).at("message").at("content").get<std::string>();
		} catch (const nlohmann::json::exception& e) {
			throw BackendError(std::string("http backend: unexpected response shape: ") + e.what());
		}
	}

private:
	static std::optional<double> retry_after_seconds(const httplib::Response& res)
	{
		if (!res.has_header("Retry-After"))
			return std::nullopt;
		try {
			return std::max(0.0, std::stod(res.get_header_value("Retry-After")));
		} catch (...) {
			return std::nullopt;
		}
	}

	void split_url()
	{
		const auto& url = cfg_.base_url;
		const auto scheme_end = url.find("://");
		if (scheme_end == std::string::npos)
			throw ConfigError("http backend: base_url must include a scheme: " + url);
		const auto scheme = url.substr(0, scheme_end);
		if (scheme != "http" && scheme != "https")
			throw ConfigError("http backend: unsupported scheme " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
		if (scheme == "https")
			throw ConfigError("http backend: built without TLS support, cannot use " + url);
#endif
		const auto path_start = url.find('/', scheme_end + 3);
		scheme_host_port_ = url.substr(0, path_start);
		path_ = path_start == std::string::npos ? "" : url.substr(path_start);
		while (!path_.empty() && path_.back() == '/')
			path_.pop_back();
	}

	HttpConfig cfg_;
	Sleeper sleeper_;
	std::counting_semaphore<64> slots_;
	std::string scheme_host_port_;
	std::string path_;
	std::string api_key_;
};

}
