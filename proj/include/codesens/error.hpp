#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace codesens
{

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
public:
	using std::runtime_error::runtime_error;
};

/// Invalid configuration or command-line input. CLI exit code 2.
class ConfigError : public Error
{
public:
	using Error::Error;
};

/// Malformed or inconsistent input file (dataset, thesaurus, CSV, ...).
class DataError : public Error
{
public:
	using Error::Error;
};

/// Generation failed after retries. CLI exit code 3.
class BackendError : public Error
{
public:
	using Error::Error;
};

class AuthError : public BackendError
{
public:
	using BackendError::BackendError;
};

/// Provider kept answering 429 until the attempt budget ran out.
class RateLimitError : public BackendError
{
public:
	RateLimitError(const std::string& what, double retry_after_seconds)
		: BackendError(what), retry_after_(retry_after_seconds)
	{}

	double retry_after() const noexcept { return retry_after_; }

private:
	double retry_after_;
};

/// Replay cassette has no entry for a request. CLI exit code 4.
class ReplayMiss : public BackendError
{
public:
	explicit ReplayMiss(std::string key, const std::string& context = {})
		: BackendError(context + "replay miss: no cassette entry for key " + key), key_(std::move(key))
	{}

	const std::string& key() const noexcept { return key_; }

private:
	std::string key_;
};

/// Rethrows the in-flight exception with `context` prepended to its message,
/// keeping its type. Call only from inside a catch block.
[[noreturn]] inline void rethrow_with_context(const std::string& context)
{
	try {
		throw;
	} catch (const ReplayMiss& e) {
		throw ReplayMiss(e.key(), context);
	} catch (const RateLimitError& e) {
		throw RateLimitError(context + e.what(), e.retry_after());
	} catch (const AuthError& e) {
		throw AuthError(context + e.what());
	} catch (const BackendError& e) {
		throw BackendError(context + e.what());
	} catch (const ConfigError& e) {
		throw ConfigError(context + e.what());
	} catch (const DataError& e) {
		throw DataError(context + e.what());
	} catch (const std::exception& e) {
		throw Error(context + e.what());
	}
}

using WarningSink = std::function<void(std::string_view)>;

namespace detail
{
	inline WarningSink& warning_sink_slot()
	{
		static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
		return sink;
	}

	inline std::mutex& warning_mutex()
	{
		static std::mutex m;
		return m;
	}
}

/// Replaces the process-wide warning sink; returns the previous one.
inline WarningSink set_warning_sink(WarningSink sink)
{
	std::lock_guard lock(detail::warning_mutex());
	auto previous = std::move(detail::warning_sink_slot());
	detail::warning_sink_slot() = std::move(sink);
	return previous;
}

inline void warn(std::string_view msg)
{
	std::lock_guard lock(detail::warning_mutex());
	if (detail::warning_sink_slot())
		detail::warning_sink_slot()(msg);
}

}
