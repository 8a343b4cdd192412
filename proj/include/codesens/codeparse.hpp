#pragma once

#include "error.hpp"
#include "io.hpp"
#include "syntax_tree.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace codesens
{

/// Where a code sample came from in a sweep.
struct SampleOrigin
{
	std::string task_id;
	std::string method;
	double rate = 0.0;
	std::size_t sample_index = 0;
};

struct CodeSample
{
	std::string text;
	std::optional<std::string> language_hint;
	SampleOrigin origin;
};

namespace detail
{
	inline std::string ascii_lower(std::string_view s)
	{
		std::string out(s);
		for (auto& c : out)
			c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
		return out;
	}

	struct Fence
	{
		char ch = 0;
		std::size_t len = 0;
		std::string_view info;
	};

	/// A fence line is up to three spaces followed by >= 3 backticks or tildes.
	inline std::optional<Fence> match_fence(std::string_view line)
	{
		std::size_t i = 0;
		while (i < line.size() && i < 3 && line[i] == ' ')
			++i;
		if (i >= line.size() || (line[i] != '`' && line[i] != '~'))
			return std::nullopt;
		const char ch = line[i];
		std::size_t j = i;
		while (j < line.size() && line[j] == ch)
			++j;
		if (j - i < 3)
			return std::nullopt;
		return Fence{ch, j - i, trim(line.substr(j))};
	}
}

/// Pulls the code out of a model response. All fenced blocks are joined with
/// a single newline; without fences the trimmed response is the code.
inline CodeSample extract_code(std::string_view response)
{
	if (trim(response).empty())
		throw DataError("empty response");

	CodeSample sample;
	std::vector<std::string> blocks;
	std::optional<detail::Fence> open;
	std::string current;
	bool current_has_line = false;

	std::size_t pos = 0;
	while (pos <= response.size()) {
		auto nl = response.find('\n', pos);
		if (nl == std::string_view::npos)
			nl = response.size();
		auto line = response.substr(pos, nl - pos);
		if (!line.empty() && line.back() == '\r')
			line.remove_suffix(1);
		pos = nl + 1;

		const auto fence = detail::match_fence(line);
		if (!open) {
			if (fence) {
				open = fence;
				current.clear();
				current_has_line = false;
				if (!sample.language_hint && !fence->info.empty()) {
					auto info = fence->info;
					info = info.substr(0, info.find_first_of(" \t{"));
					if (!info.empty())
						sample.language_hint = detail::ascii_lower(info);
				}
			}
			continue;
		}
		if (fence && fence->ch == open->ch && fence->len >= open->len && fence->info.empty()) {
			blocks.push_back(std::move(current));
			current.clear();
			open.reset();
			continue;
		}
		if (current_has_line)
			current += '\n';
		current += line;
		current_has_line = true;
	}
	if (open)
		blocks.push_back(std::move(current));

	std::string joined;
	for (std::size_t i = 0; i < blocks.size(); ++i) {
		if (i)
			joined += '\n';
		joined += blocks[i];
	}
	if (trim(joined).empty())
		sample.text = std::string(trim(response));
	else
		sample.text = std::move(joined);
	return sample;
}

/// Which comment syntaxes the generic parser recognizes.
struct CommentStyle
{
	bool hash = true;   // '#' to end of line
	bool slash = true;  // '//' to end of line and '/* ... */'
};

inline CommentStyle comment_style_for(const std::optional<std::string>& hint)
{
	if (!hint)
		return {};
	static const std::array<std::string_view, 14> hash_langs = {
		"python", "py", "python3", "ruby", "rb", "sh", "bash", "shell", "zsh", "r", "perl", "yaml", "toml", "julia"};
	static const std::array<std::string_view, 22> slash_langs = {
		"c", "cpp", "c++", "cc", "h", "hpp", "java", "javascript", "js", "jsx", "typescript", "ts", "tsx",
		"go", "rust", "rs", "cs", "csharp", "kotlin", "swift", "scala", "dart"};
	const auto lang = detail::ascii_lower(*hint);
	if (std::find(hash_langs.begin(), hash_langs.end(), lang) != hash_langs.end())
		return {true, false};
	if (std::find(slash_langs.begin(), slash_langs.end(), lang) != slash_langs.end())
		return {false, true};
	return {};
}

/// Language-agnostic structural parser.
///
/// Tokens are identifiers, numbers, string literals, comments and operators.
/// Identifier, number and string leaves are labeled with their text; comments
/// are labeled "comment"; operators and stray punctuation carry their own text.
/// Bracket pairs () [] {} become group nodes labeled "()", "[]", "{}" whose
/// children are the enclosed tokens. Outside brackets, a line indented deeper
/// than the enclosing block opens a "block" node; dedenting closes it.
class GenericParser
{
public:
	explicit GenericParser(CommentStyle style = {}) : style_(style) {}

	SyntaxTree parse(std::string_view text) const
	{
		State st{text, SyntaxTree("root")};
		st.containers.push_back(Container{st.tree.root(), 0, 0, true});
		st.first_indent = true;

		while (st.pos < text.size()) {
			const char c = text[st.pos];
			if (c == '\n') {
				st.at_line_start = true;
				st.col = 0;
				++st.pos;
				continue;
			}
			if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
				st.col = (c == '\t') ? (st.col / 4 + 1) * 4 : st.col + 1;
				++st.pos;
				continue;
			}
			if (st.at_line_start) {
				handle_indent(st);
				st.at_line_start = false;
			}
			lex_one(st);
		}
		return std::move(st.tree);
	}

private:
	struct Container
	{
		std::size_t node;
		std::size_t indent;
		char close;        // expected closing bracket, 0 for root/block
		bool indent_scope; // root or block: newlines and indentation matter
	};

	struct State
	{
		std::string_view text;
		SyntaxTree tree;
		std::vector<Container> containers;
		std::size_t pos = 0;
		std::size_t col = 0;
		bool at_line_start = true;
		bool first_indent = true;
	};

	static bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
	static bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

	static void handle_indent(State& st)
	{
		if (!st.containers.back().indent_scope)
			return;
		if (st.first_indent) {
			st.containers.front().indent = st.col;
			st.first_indent = false;
			return;
		}
		// Only pop blocks belonging to the current bracket level.
		while (st.containers.size() > 1 && st.containers.back().close == 0 && st.containers.back().node != st.tree.root()
			   && st.col < st.containers.back().indent) {
			const auto& below = st.containers[st.containers.size() - 2];
			if (!below.indent_scope)
				break;
			st.containers.pop_back();
		}
		auto& top = st.containers.back();
		if (st.col > top.indent) {
			const auto block = st.tree.add_child(top.node, "block");
			st.containers.push_back(Container{block, st.col, 0, true});
		}
	}

	void leaf(State& st, std::size_t begin, std::size_t end, std::string label) const
	{
		st.tree.add_child(st.containers.back().node, std::move(label), {begin, end});
	}

	void lex_one(State& st) const
	{
		const auto text = st.text;
		const auto start = st.pos;
		const auto c = static_cast<unsigned char>(text[start]);
		auto peek = [&](std::size_t k) -> char { return start + k < text.size() ? text[start + k] : '\0'; };
		auto finish = [&](std::size_t end, std::string label) {
			leaf(st, start, end, std::move(label));
			st.col += end - start;
			st.pos = end;
		};

		// comments
		if ((style_.hash && c == '#') || (style_.slash && c == '/' && peek(1) == '/')) {
			auto end = text.find('\n', start);
			finish(end == std::string_view::npos ? text.size() : end, "comment");
			return;
		}
		if (style_.slash && c == '/' && peek(1) == '*') {
			auto end = text.find("*/", start + 2);
			end = (end == std::string_view::npos) ? text.size() : end + 2;
			// a multi-line comment leaves the column count meaningless until the next newline
			leaf(st, start, end, "comment");
			st.pos = end;
			return;
		}

		// string literals
		if (c == '"' || c == '\'' || c == '`') {
			const bool triple = peek(1) == static_cast<char>(c) && peek(2) == static_cast<char>(c);
			std::size_t end;
			if (triple) {
				const std::string delim(3, static_cast<char>(c));
				end = text.find(delim, start + 3);
				end = (end == std::string_view::npos) ? text.size() : end + 3;
			} else {
				end = start + 1;
				const bool multiline = c == '`';
				while (end < text.size() && text[end] != static_cast<char>(c)) {
					if (text[end] == '\n' && !multiline)
						break;
					if (text[end] == '\\' && end + 1 < text.size())
						++end;
					++end;
				}
				if (end < text.size() && text[end] == static_cast<char>(c))
					++end;
			}
			leaf(st, start, end, std::string(text.substr(start, end - start)));
			st.col += end - start;
			st.pos = end;
			return;
		}

		// numbers
		if (std::isdigit(c) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
			std::size_t end = start + 1;
			while (end < text.size()) {
				const auto d = static_cast<unsigned char>(text[end]);
				if (std::isalnum(d) || d == '_' || d == '.') {
					++end;
				} else if ((d == '+' || d == '-') && (text[end - 1] == 'e' || text[end - 1] == 'E')
						   && !(text.substr(start, 2) == "0x" || text.substr(start, 2) == "0X")) {
					++end;
				} else {
					break;
				}
			}
			finish(end, std::string(text.substr(start, end - start)));
			return;
		}

		if (ident_start(c)) {
			std::size_t end = start + 1;
			while (end < text.size() && ident_char(static_cast<unsigned char>(text[end])))
				++end;
			finish(end, std::string(text.substr(start, end - start)));
			return;
		}

		if (c == '(' || c == '[' || c == '{') {
			const char close = c == '(' ? ')' : c == '[' ? ']' : '}';
			const std::string label{static_cast<char>(c), close};
			const auto group = st.tree.add_child(st.containers.back().node, label, {start, SyntaxTree::npos});
			st.containers.push_back(Container{group, st.col, close, false});
			++st.col;
			++st.pos;
			return;
		}

		if (c == ')' || c == ']' || c == '}') {
			auto match = std::find_if(st.containers.rbegin(), st.containers.rend(),
									  [&](const Container& k) { return k.close == static_cast<char>(c); });
			if (match == st.containers.rend()) {
				finish(start + 1, std::string(1, static_cast<char>(c)));
				return;
			}
			const auto keep = static_cast<std::size_t>(std::distance(match, st.containers.rend())) - 1;
			const auto group = st.containers[keep].node;
			st.tree.set_span(group, {st.tree.node(group).span.begin, start});
			st.containers.resize(keep);
			++st.col;
			++st.pos;
			return;
		}

		static constexpr std::array<std::string_view, 41> ops = {
			">>>=", "<<=", ">>=", "**=", "//=", "...", "===", "!==", "<=>", ">>>", "->", "=>", "::", "==", "!=",
			"<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
			"**", "//", ":=", "??", "?.", "..", "@=", "~=", "<-", "|>"};
		for (auto op : ops) {
			if (text.substr(start, op.size()) == op) {
				finish(start + op.size(), std::string(op));
				return;
			}
		}
		finish(start + 1, std::string(1, static_cast<char>(c)));
	}

	CommentStyle style_;
};

/// Grammar plugins keyed by lowercase language hint. Samples without a
/// registered plugin go through GenericParser.
class ParserRegistry
{
public:
	using Plugin = std::function<SyntaxTree(const CodeSample&)>;

	void add(std::string_view language, Plugin plugin)
	{
		std::unique_lock lock(mutex_);
		plugins_[detail::ascii_lower(language)] = std::move(plugin);
	}

	bool has(std::string_view language) const
	{
		std::shared_lock lock(mutex_);
		return plugins_.count(detail::ascii_lower(language)) != 0;
	}

	SyntaxTree parse(const CodeSample& sample) const
	{
		if (sample.language_hint) {
			Plugin plugin;
			{
				std::shared_lock lock(mutex_);
				auto it = plugins_.find(detail::ascii_lower(*sample.language_hint));
				if (it != plugins_.end())
					plugin = it->second;
			}
			if (plugin)
				return plugin(sample);
		}
		return GenericParser(comment_style_for(sample.language_hint)).parse(sample.text);
	}

private:
	mutable std::shared_mutex mutex_;
	std::map<std::string, Plugin, std::less<>> plugins_;
};

inline ParserRegistry& default_parser_registry()
{
	static ParserRegistry registry;
	return registry;
}

inline SyntaxTree parse_code(const CodeSample& sample, const ParserRegistry& registry = default_parser_registry())
{
	return registry.parse(sample);
}

}
