#pragma once

#include "error.hpp"
#include "hash.hpp"
#include "io.hpp"
#include "similarity.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace codesens
{

/// Fraction of eligible units (letters or words) an augmenter perturbs.
class AugmentationRate
{
public:
	constexpr AugmentationRate() = default;

	explicit AugmentationRate(double value) : value_(value)
	{
		if (!(value >= 0.0 && value <= 1.0))
			throw ConfigError("augmentation rate must be in [0, 1], got " + format_double(value));
	}

	constexpr double value() const noexcept { return value_; }

private:
	double value_ = 0.0;
};

/// round(rate * eligible), halves rounded up. The 1e-9 slack absorbs binary
/// representation error so that e.g. 0.7 * 5 counts as 3.5 and rounds to 4.
inline std::size_t edit_budget(AugmentationRate rate, std::size_t eligible)
{
	const double exact = rate.value() * static_cast<double>(eligible);
	const auto k = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
	return std::min(k, eligible);
}

enum class AugmentMethod
{
	typos,
	synonyms,
	paraphrase,
};

inline std::string_view to_string(AugmentMethod m)
{
	switch (m) {
	case AugmentMethod::typos: return "typos";
	case AugmentMethod::synonyms: return "synonyms";
	case AugmentMethod::paraphrase: return "paraphrase";
	}
	return "unknown";
}

inline AugmentMethod parse_augment_method(std::string_view s)
{
	if (s == "typos" || s == "typo" || s == "keyboard")
		return AugmentMethod::typos;
	if (s == "synonyms" || s == "synonym")
		return AugmentMethod::synonyms;
	if (s == "paraphrase" || s == "paraphrases")
		return AugmentMethod::paraphrase;
	throw ConfigError("unknown augmentation method: " + std::string(s));
}

enum class ParaphraseLevel
{
	original,
	low,
	medium,
	high,
};

inline constexpr std::array<ParaphraseLevel, 4> all_paraphrase_levels = {
	ParaphraseLevel::original, ParaphraseLevel::low, ParaphraseLevel::medium, ParaphraseLevel::high};

inline std::string_view to_string(ParaphraseLevel l)
{
	switch (l) {
	case ParaphraseLevel::original: return "original";
	case ParaphraseLevel::low: return "low";
	case ParaphraseLevel::medium: return "medium";
	case ParaphraseLevel::high: return "high";
	}
	return "unknown";
}

struct AugmentedPrompt
{
	std::string text;
	AugmentMethod method = AugmentMethod::typos;
	AugmentationRate rate;
	std::uint64_t seed = 0;
	std::string source_task;
	std::size_t edits = 0;
	std::optional<ParaphraseLevel> bucket; // set for paraphrases only
};

/// Neighbors of each key on a US QWERTY layout: same-row keys left and right
/// plus the diagonally adjacent keys in the rows above and below. Letters only.
inline std::string_view qwerty_neighbors(char lower)
{
	static constexpr std::array<std::string_view, 26> table = {
		"qwsz",   // a
		"vghn",   // b
		"xdfv",   // c
		"serfcx", // d
		"wrsd",   // e
		"drtgvc", // f
		"ftyhbv", // g
		"gyujnb", // h
		"uojk",   // i
		"huikmn", // j
		"jiolm",  // k
		"kop",    // l
		"njk",    // m
		"bhjm",   // n
		"iplk",   // o
		"ol",     // p
		"wa",     // q
		"etdf",   // r
		"awedxz", // s
		"ryfg",   // t
		"yihj",   // u
		"cfgb",   // v
		"qeas",   // w
		"zsdc",   // x
		"tugh",   // y
		"asx",    // z
	};
	if (lower < 'a' || lower > 'z')
		return {};
	return table[static_cast<std::size_t>(lower - 'a')];
}

namespace detail
{
	inline bool is_ascii_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

	/// First k entries of a seeded Fisher-Yates shuffle of `items`.
	template <class T>
	std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k, Rng& rng)
	{
		for (std::size_t i = 0; i < k; ++i) {
			const auto j = i + static_cast<std::size_t>(rng.below(items.size() - i));
			std::swap(items[i], items[j]);
		}
		items.resize(k);
		return items;
	}
}

/// Replaces round(rate * E) of the E ASCII letters of `prompt` with a
/// QWERTY-adjacent letter of the same case. Other bytes are never touched.
inline AugmentedPrompt typo_augment(std::string_view prompt, AugmentationRate rate, std::uint64_t seed)
{
	AugmentedPrompt out{std::string(prompt), AugmentMethod::typos, rate, seed, {}, 0, std::nullopt};
	std::vector<std::size_t> letters;
	for (std::size_t i = 0; i < prompt.size(); ++i)
		if (detail::is_ascii_letter(prompt[i]))
			letters.push_back(i);

	const auto k = edit_budget(rate, letters.size());
	if (k == 0)
		return out;

	Rng rng(seed);
	for (auto pos : detail::sample_without_replacement(std::move(letters), k, rng)) {
		const char original = out.text[pos];
		const bool upper = std::isupper(static_cast<unsigned char>(original));
		const auto neighbors = qwerty_neighbors(static_cast<char>(std::tolower(static_cast<unsigned char>(original))));
		char replacement = neighbors[static_cast<std::size_t>(rng.below(neighbors.size()))];
		if (upper)
			replacement = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement)));
		out.text[pos] = replacement;
	}
	out.edits = k;
	return out;
}

/// Lowercase lemma to synonym list. Every list is nonempty, never contains
/// the lemma itself, and holds single words only.
struct Thesaurus
{
	std::map<std::string, std::vector<std::string>, std::less<>> entries;

	const std::vector<std::string>* lookup(std::string_view lower_word) const
	{
		auto it = entries.find(lower_word);
		return it == entries.end() ? nullptr : &it->second;
	}

	std::size_t size() const noexcept { return entries.size(); }
};

namespace detail
{
	/// Word bytes for synonym tokenization: letters, digits, apostrophes.
	/// Bytes >= 0x80 are treated as letters so UTF-8 words are not split.
	inline bool is_word_byte(char c)
	{
		const auto u = static_cast<unsigned char>(c);
		return std::isalnum(u) || c == '\'' || u >= 0x80;
	}

	inline bool is_single_word(std::string_view s)
	{
		if (s.empty())
			return false;
		for (char c : s)
			if (!is_word_byte(c))
				return false;
		return true;
	}

	struct WordSpan
	{
		std::size_t begin;
		std::size_t end;
	};

	inline std::vector<WordSpan> word_spans(std::string_view text)
	{
		std::vector<WordSpan> out;
		std::size_t i = 0;
		while (i < text.size()) {
			if (!is_word_byte(text[i])) {
				++i;
				continue;
			}
			auto j = i;
			while (j < text.size() && is_word_byte(text[j]))
				++j;
			out.push_back({i, j});
			i = j;
		}
		return out;
	}
}

/// Number of words (maximal runs of letters, digits and apostrophes).
inline std::size_t count_words(std::string_view text) { return detail::word_spans(text).size(); }

/// Parses a JSON object {lemma: [synonym, ...]}.
///
/// Lemmas are lowercased (lists of case variants are merged); self-synonyms,
/// duplicates and multi-word synonyms are dropped, as are lemmas left with no
/// synonyms.
inline Thesaurus parse_thesaurus(std::string_view json_text, std::string_view source = "thesaurus")
{
	nlohmann::json doc;
	try {
		doc = nlohmann::json::parse(json_text);
	} catch (const nlohmann::json::parse_error& e) {
		throw DataError(std::string(source) + ": malformed thesaurus: " + e.what());
	}
	if (!doc.is_object())
		throw DataError(std::string(source) + ": malformed thesaurus: expected a JSON object");

	Thesaurus th;
	std::size_t multiword = 0;
	for (const auto& [key, value] : doc.items()) {
		if (!value.is_array())
			throw DataError(std::string(source) + ": malformed thesaurus: entry \"" + key + "\" is not a list");
		const auto lemma = detail::ascii_lower(key);
		auto& list = th.entries[lemma];
		for (const auto& syn : value) {
			if (!syn.is_string())
				throw DataError(std::string(source) + ": malformed thesaurus: non-string synonym for \"" + key + "\"");
			const auto s = syn.get<std::string>();
			if (!detail::is_single_word(s)) {
				++multiword;
				continue;
			}
			if (detail::ascii_lower(s) == lemma)
				continue;
			if (std::find(list.begin(), list.end(), s) == list.end())
				list.push_back(s);
		}
	}
	std::erase_if(th.entries, [](const auto& kv) { return kv.second.empty(); });
	if (multiword)
		warn(std::string(source) + ": dropped " + std::to_string(multiword) + " multi-word synonyms");
	if (th.entries.empty())
		warn(std::string(source) + ": thesaurus is empty");
	return th;
}

inline Thesaurus load_thesaurus(const std::filesystem::path& path)
{
	return parse_thesaurus(read_file(path), path.string());
}

/// Replaces round(rate * W) of the W thesaurus-eligible words of `prompt`
/// with a uniformly chosen synonym. A capitalized first letter carries over.
inline AugmentedPrompt synonym_augment(std::string_view prompt, AugmentationRate rate, std::uint64_t seed, const Thesaurus& th)
{
	AugmentedPrompt out{std::string(prompt), AugmentMethod::synonyms, rate, seed, {}, 0, std::nullopt};
	const auto spans = detail::word_spans(prompt);
	std::vector<std::size_t> eligible;
	for (std::size_t w = 0; w < spans.size(); ++w)
		if (th.lookup(detail::ascii_lower(prompt.substr(spans[w].begin, spans[w].end - spans[w].begin))))
			eligible.push_back(w);

	const auto k = edit_budget(rate, eligible.size());
	if (k == 0)
		return out;

	Rng rng(seed);
	auto chosen = detail::sample_without_replacement(std::move(eligible), k, rng);
	std::sort(chosen.begin(), chosen.end());

	std::map<std::size_t, std::string> replacement;
	for (auto w : chosen) {
		const auto word = prompt.substr(spans[w].begin, spans[w].end - spans[w].begin);
		const auto& list = *th.lookup(detail::ascii_lower(word));
		auto syn = list[static_cast<std::size_t>(rng.below(list.size()))];
		if (std::isupper(static_cast<unsigned char>(word.front())))
			syn.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(syn.front())));
		replacement[w] = std::move(syn);
	}

	std::string text;
	std::size_t cursor = 0;
	for (const auto& [w, syn] : replacement) {
		text.append(prompt.substr(cursor, spans[w].begin - cursor));
		text += syn;
		cursor = spans[w].end;
	}
	text.append(prompt.substr(cursor));
	out.text = std::move(text);
	out.edits = k;
	return out;
}

/// Half-open BLEU ranges per paraphrase level; `original` has no range.
struct ParaphraseBucket
{
	ParaphraseLevel label;
	double lower;
	double upper;
	bool upper_inclusive;
};

inline constexpr std::array<ParaphraseBucket, 3> paraphrase_buckets = {{
	{ParaphraseLevel::low, 0.5, 1.0, true},
	{ParaphraseLevel::medium, 0.2, 0.5, false},
	{ParaphraseLevel::high, 0.0, 0.2, false},
}};

/// low: [0.5, 1.0], medium: [0.2, 0.5), high: [0.0, 0.2).
inline ParaphraseLevel bucket_for_bleu(double score)
{
	for (const auto& b : paraphrase_buckets)
		if (score >= b.lower && (score < b.upper || (b.upper_inclusive && score <= b.upper)))
			return b.label;
	return score > 1.0 ? ParaphraseLevel::low : ParaphraseLevel::high;
}

/// Groups paraphrases by BLEU against the original. Every level is present
/// in the result; `original` holds the original prompt itself.
inline std::map<ParaphraseLevel, std::vector<std::string>> bucket_paraphrases(std::string_view original, const std::vector<std::string>& paraphrases)
{
	std::map<ParaphraseLevel, std::vector<std::string>> out;
	for (auto level : all_paraphrase_levels)
		out[level];
	out[ParaphraseLevel::original].emplace_back(original);
	for (const auto& p : paraphrases)
		out[bucket_for_bleu(bleu(p, original))].push_back(p);
	return out;
}

/// Paraphrase set file: JSON Lines {task_id, text}. Order is preserved.
inline std::map<std::string, std::vector<std::string>, std::less<>> parse_paraphrases(std::string_view text, std::string_view source = "paraphrases")
{
	std::map<std::string, std::vector<std::string>, std::less<>> out;
	std::size_t line_no = 0;
	std::size_t pos = 0;
	while (pos <= text.size()) {
		auto nl = text.find('\n', pos);
		if (nl == std::string_view::npos)
			nl = text.size();
		const auto line = trim(text.substr(pos, nl - pos));
		pos = nl + 1;
		++line_no;
		if (line.empty())
			continue;
		const auto where = std::string(source) + ":" + std::to_string(line_no);
		try {
			const auto obj = nlohmann::json::parse(line);
			auto task = obj.at("task_id").get<std::string>();
			auto para = obj.at("text").get<std::string>();
			if (trim(para).empty())
				throw DataError(where + ": empty paraphrase");
			out[std::move(task)].push_back(std::move(para));
		} catch (const nlohmann::json::exception& e) {
			throw DataError(where + ": malformed paraphrase record: " + e.what());
		}
	}
	return out;
}

inline std::map<std::string, std::vector<std::string>, std::less<>> load_paraphrases(const std::filesystem::path& path)
{
	return parse_paraphrases(read_file(path), path.string());
}

/// Seed for one augmented prompt, stable across runs and schedules.
inline std::uint64_t derive_seed(std::string_view task_id, AugmentMethod method, double rate, std::uint64_t sample_index)
{
	return StableHasher{}.add(task_id).add(to_string(method)).add(rate).add(sample_index).value();
}

/// Rate-driven augmentation (typos or synonyms).
inline AugmentedPrompt augment(AugmentMethod method, std::string_view prompt, AugmentationRate rate, std::uint64_t seed,
							   const Thesaurus* thesaurus = nullptr)
{
	switch (method) {
	case AugmentMethod::typos:
		return typo_augment(prompt, rate, seed);
	case AugmentMethod::synonyms:
		if (!thesaurus)
			throw ConfigError("synonym augmentation requires a thesaurus");
		return synonym_augment(prompt, rate, seed, *thesaurus);
	case AugmentMethod::paraphrase:
		break;
	}
	throw ConfigError("paraphrase augmentation is not rate-driven; use the paraphrase evaluation");
}

}
