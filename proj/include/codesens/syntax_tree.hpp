#pragma once

#include "error.hpp"

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace codesens
{

/// Ordered, labeled, rooted tree stored as an arena of nodes. Node 0 is the
/// root; children keep insertion order.
class SyntaxTree
{
public:
	static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

	/// Byte range in the parsed text a node accounts for. Tokens cover
	/// [begin, end); bracket groups record the offsets of their delimiters
	/// (close is npos when the group was never closed).
	struct Span
	{
		std::size_t begin = npos;
		std::size_t end = npos;
	};

	struct Node
	{
		std::string label;
		std::vector<std::size_t> children;
		std::size_t parent = npos;
		Span span;
	};

	explicit SyntaxTree(std::string root_label = "root") { nodes_.push_back(Node{std::move(root_label), {}, npos, Span{npos, npos}}); }

	std::size_t root() const noexcept { return 0; }
	std::size_t size() const noexcept { return nodes_.size(); }
	const Node& node(std::size_t i) const { return nodes_.at(i); }
	const std::string& label(std::size_t i) const { return nodes_.at(i).label; }
	const std::vector<std::size_t>& children(std::size_t i) const { return nodes_.at(i).children; }

	std::size_t add_child(std::size_t parent, std::string label) { return add_child(parent, std::move(label), Span{npos, npos}); }

	std::size_t add_child(std::size_t parent, std::string label, Span span)
	{
		const auto id = nodes_.size();
		nodes_.push_back(Node{std::move(label), {}, parent, span});
		nodes_.at(parent).children.push_back(id);
		return id;
	}

	void set_span(std::size_t i, Span span) { nodes_.at(i).span = span; }

	/// Post-order listing of node ids (children left to right, then parent).
	std::vector<std::size_t> postorder() const
	{
		std::vector<std::size_t> out;
		out.reserve(nodes_.size());
		std::vector<std::pair<std::size_t, std::size_t>> stack{{root(), 0}};
		while (!stack.empty()) {
			auto& [id, next] = stack.back();
			const auto& kids = nodes_[id].children;
			if (next < kids.size()) {
				const auto child = kids[next++];
				stack.emplace_back(child, 0);
			} else {
				out.push_back(id);
				stack.pop_back();
			}
		}
		return out;
	}

	/// Bracket notation, e.g. "{root{f}{(){a}{,}{b}}}". Braces and backslashes
	/// inside labels are escaped with a backslash.
	std::string to_bracket() const
	{
		std::string out;
		write_bracket(root(), out);
		return out;
	}

	/// Inverse of to_bracket(). Throws DataError on malformed input.
	static SyntaxTree from_bracket(std::string_view text)
	{
		std::size_t pos = 0;
		auto fail = [&](const char* why) {
			return DataError(std::string("bad bracket tree at offset ") + std::to_string(pos) + ": " + why);
		};
		auto read_label = [&] {
			std::string label;
			while (pos < text.size() && text[pos] != '{' && text[pos] != '}') {
				if (text[pos] == '\\' && pos + 1 < text.size())
					++pos;
				label += text[pos++];
			}
			return label;
		};

		if (pos >= text.size() || text[pos] != '{')
			throw fail("expected '{'");
		++pos;
		SyntaxTree tree(read_label());
		std::vector<std::size_t> open{tree.root()};
		while (pos < text.size() && !open.empty()) {
			if (text[pos] == '{') {
				++pos;
				auto label = read_label();
				open.push_back(tree.add_child(open.back(), std::move(label)));
			} else if (text[pos] == '}') {
				++pos;
				open.pop_back();
			} else {
				throw fail("unexpected text between nodes");
			}
		}
		if (!open.empty() || pos != text.size())
			throw fail("unbalanced braces");
		return tree;
	}

	/// Same shape and labels; spans are ignored.
	friend bool operator==(const SyntaxTree& a, const SyntaxTree& b)
	{
		if (a.size() != b.size())
			return false;
		std::vector<std::pair<std::size_t, std::size_t>> stack{{a.root(), b.root()}};
		while (!stack.empty()) {
			auto [x, y] = stack.back();
			stack.pop_back();
			const auto& nx = a.nodes_[x];
			const auto& ny = b.nodes_[y];
			if (nx.label != ny.label || nx.children.size() != ny.children.size())
				return false;
			for (std::size_t i = 0; i < nx.children.size(); ++i)
				stack.emplace_back(nx.children[i], ny.children[i]);
		}
		return true;
	}

private:
	void write_bracket(std::size_t id, std::string& out) const
	{
		out += '{';
		for (char c : nodes_[id].label) {
			if (c == '{' || c == '}' || c == '\\')
				out += '\\';
			out += c;
		}
		for (auto child : nodes_[id].children)
			write_bracket(child, out);
		out += '}';
	}

	std::vector<Node> nodes_;
};

/// Total node count.
inline std::size_t tree_size(const SyntaxTree& t) noexcept { return t.size(); }

}
