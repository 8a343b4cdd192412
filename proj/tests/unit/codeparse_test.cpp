#include "../support/fixtures.hpp"
#include "../support/tree_oracle.hpp"

#include <codesens/codeparse.hpp>

#include <gtest/gtest.h>

using namespace codesens;

TEST(ExtractCode, SingleFence)
{
	const auto s = extract_code("Here you go:\n```Python\ndef f():\n    return 1\n```\nDone.");
	EXPECT_EQ(s.text, "def f():\n    return 1");
	EXPECT_EQ(s.language_hint, "python");
}

TEST(ExtractCode, JoinsBlocksAndKeepsFirstHint)
{
	const auto s = extract_code("```cpp\nint a;\n```\ntext\n~~~\nint b;\n~~~\n");
	EXPECT_EQ(s.text, "int a;\nint b;");
	EXPECT_EQ(s.language_hint, "cpp");
}

TEST(ExtractCode, LongerFencesAndUnclosed)
{
	EXPECT_EQ(extract_code("````\n```\ninner\n```\n````").text, "```\ninner\n```");
	EXPECT_EQ(extract_code("```js\nlet x = 1;").text, "let x = 1;");
	EXPECT_EQ(extract_code("   ```\nx\n   ```").text, "x");
}

TEST(ExtractCode, FallsBackToWholeResponse)
{
	const auto s = extract_code("  print(1)\n");
	EXPECT_EQ(s.text, "print(1)");
	EXPECT_FALSE(s.language_hint.has_value());
	EXPECT_EQ(extract_code("```\n```\nx = 2").text, "```\n```\nx = 2");
	EXPECT_THROW(extract_code(" \n\t"), DataError);
}

TEST(GenericParser, CallWithArguments)
{
	EXPECT_EQ(GenericParser().parse("f(a,b)").to_bracket(), "{root{f}{(){a}{,}{b}}}");
	EXPECT_EQ(GenericParser().parse("f(a, b)"), GenericParser().parse("f(a,b)"));
}

TEST(GenericParser, IndentationBlocks)
{
	const auto t = GenericParser().parse("def f(x):\n    if x:\n        return 1\n    return 2\n");
	EXPECT_EQ(t.to_bracket(), "{root{def}{f}{(){x}}{:}{block{if}{x}{:}{block{return}{1}}{return}{2}}}");
}

TEST(GenericParser, BracesAndComments)
{
	const auto c = GenericParser(comment_style_for(std::string("c"))).parse("int x = a[i] /* note */ + 3; // end\n# not a comment");
	EXPECT_EQ(c.to_bracket(), "{root{int}{x}{=}{a}{[]{i}}{comment}{+}{3}{;}{comment}{#}{not}{a}{comment}}");
	const auto py = GenericParser(comment_style_for(std::string("python"))).parse("x = 1 # note\ny = x // 2");
	EXPECT_EQ(py.to_bracket(), "{root{x}{=}{1}{comment}{y}{=}{x}{//}{2}}");
}

TEST(GenericParser, StringsAndOperators)
{
	const auto t = GenericParser().parse("s = \"a(b\" + 'c' if x >= 10 and y != 2.5e3 else s");
	EXPECT_EQ(t.to_bracket(), "{root{s}{=}{\"a(b\"}{+}{'c'}{if}{x}{>=}{10}{and}{y}{!=}{2.5e3}{else}{s}}");
}

TEST(GenericParser, UnbalancedInputStillParses)
{
	EXPECT_EQ(GenericParser().parse("a = [1, 2\n").to_bracket(), "{root{a}{=}{[]{1}{,}{2}}}");
	EXPECT_EQ(GenericParser().parse(") x").to_bracket(), "{root{)}{x}}");
	EXPECT_EQ(GenericParser().parse("").size(), 1u);
}

TEST(GenericParser, CoversEveryNonSpaceByte)
{
	for (const auto& entry : testkit::code_corpus()) {
		const auto hint = entry.language.empty() ? std::nullopt : std::optional<std::string>(entry.language);
		const auto tree = GenericParser(comment_style_for(hint)).parse(entry.code);
		std::vector<int> covered(entry.code.size(), 0);
		for (std::size_t id = 1; id < tree.size(); ++id) {
			const auto& n = tree.node(id);
			if (n.label == "block")
				continue;
			const bool group = n.label == "()" || n.label == "[]" || n.label == "{}";
			if (!group) {
				for (auto k = n.span.begin; k < n.span.end; ++k)
					++covered.at(k);
				continue;
			}
			++covered.at(n.span.begin);
			if (n.span.end != SyntaxTree::npos)
				++covered.at(n.span.end);
		}
		for (std::size_t k = 0; k < entry.code.size(); ++k) {
			const bool space = std::isspace(static_cast<unsigned char>(entry.code[k])) != 0;
			// whitespace is only covered from inside string literals and comments
			if (space)
				ASSERT_LE(covered[k], 1) << "byte " << k << " of:\n" << entry.code;
			else
				ASSERT_EQ(covered[k], 1) << "byte " << k << " of:\n" << entry.code;
		}
	}
}

TEST(GenericParser, SizeMatchesRecursiveCount)
{
	for (const auto& entry : testkit::code_corpus()) {
		const auto tree = GenericParser().parse(entry.code);
		EXPECT_EQ(tree_size(tree), testkit::count_nodes(tree, tree.root()));
		EXPECT_EQ(tree.postorder().size(), tree.size());
	}
}

TEST(SyntaxTree, BracketRoundTrip)
{
	for (const auto& entry : testkit::code_corpus()) {
		const auto tree = GenericParser().parse(entry.code);
		EXPECT_EQ(SyntaxTree::from_bracket(tree.to_bracket()), tree);
	}
	EXPECT_THROW(SyntaxTree::from_bracket("{a{b}"), DataError);
	EXPECT_THROW(SyntaxTree::from_bracket("a"), DataError);
}

TEST(ParserRegistry, PluginsOverrideByHint)
{
	ParserRegistry reg;
	reg.add("Lisp", [](const CodeSample&) { return SyntaxTree("lisp"); });
	EXPECT_TRUE(reg.has("lisp"));
	EXPECT_EQ(reg.parse({"(x)", std::string("LISP"), {}}).to_bracket(), "{lisp}");
	EXPECT_EQ(reg.parse({"(x)", std::string("python"), {}}).to_bracket(), "{root{(){x}}}");
	EXPECT_EQ(reg.parse({"(x)", std::nullopt, {}}).to_bracket(), "{root{(){x}}}");
}
