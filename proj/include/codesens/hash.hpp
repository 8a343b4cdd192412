#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>

namespace codesens
{

/// 64-bit FNV-1a. Multi-field keys are fed through StableHasher, which
/// terminates every field with the ASCII unit separator (0x1f) so that
/// ("ab","c") and ("a","bc") hash differently.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL) noexcept
{
	for (unsigned char c : bytes) {
		state ^= c;
		state *= 0x100000001b3ULL;
	}
	return state;
}

/// Shortest round-trip decimal text of a double ("0.1", "1", "2.5e-05").
inline std::string format_double(double v)
{
	std::array<char, 64> buf{};
	auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
	return std::string(buf.data(), end);
}

class StableHasher
{
public:
	StableHasher& add(std::string_view field) noexcept
	{
		state_ = fnv1a64(field, state_);
		state_ = fnv1a64(std::string_view("\x1f", 1), state_);
		return *this;
	}

	StableHasher& add(std::uint64_t v) { return add(std::string_view(std::to_string(v))); }
	StableHasher& add(double v) { return add(std::string_view(format_double(v))); }

	std::uint64_t value() const noexcept { return state_; }

private:
	std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Lowercase, zero-padded, 16 hex digits.
inline std::string to_hex(std::uint64_t v)
{
	static constexpr char digits[] = "0123456789abcdef";
	std::string out(16, '0');
	for (int i = 15; i >= 0; --i, v >>= 4)
		out[static_cast<std::size_t>(i)] = digits[v & 0xf];
	return out;
}

/// Seeded generator used for every random choice in the library.
///
/// std::mt19937_64 has a sequence fixed by the standard; bounded draws use
/// rejection sampling rather than std::uniform_int_distribution, whose
/// algorithm differs between standard libraries.
class Rng
{
public:
	explicit Rng(std::uint64_t seed) : engine_(seed) {}

	std::uint64_t next() { return engine_(); }

	/// Uniform integer in [0, bound). bound must be > 0.
	std::uint64_t below(std::uint64_t bound)
	{
		const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
		std::uint64_t x;
		do {
			x = engine_();
		} while (x >= limit);
		return x % bound;
	}

	/// Uniform real in [0, 1) with 53 random bits.
	double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
	std::mt19937_64 engine_;
};

}
