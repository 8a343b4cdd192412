#pragma once

#include <codesens/io.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace codesens::testkit
{

inline std::filesystem::path source_dir() { return CODESENS_SOURCE_DIR; }

struct CorpusEntry
{
	std::string language;
	std::string code;
};

inline std::vector<CorpusEntry> code_corpus()
{
	std::vector<CorpusEntry> out;
	const auto text = read_file(source_dir() / "tests/fixtures/code_corpus.jsonl");
	std::size_t pos = 0;
	while (pos < text.size()) {
		auto nl = text.find('\n', pos);
		if (nl == std::string::npos)
			nl = text.size();
		const auto line = text.substr(pos, nl - pos);
		pos = nl + 1;
		if (line.empty())
			continue;
		const auto j = nlohmann::json::parse(line);
		out.push_back({j.at("language").get<std::string>(), j.at("code").get<std::string>()});
	}
	return out;
}

/// Fresh scratch directory under the build tree, removed on destruction.
class ScratchDir
{
public:
	explicit ScratchDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / ("codesens_test_" + name))
	{
		std::filesystem::remove_all(path_);
		std::filesystem::create_directories(path_);
	}
	~ScratchDir()
	{
		std::error_code ec;
		std::filesystem::remove_all(path_, ec);
	}
	const std::filesystem::path& path() const noexcept { return path_; }

private:
	std::filesystem::path path_;
};

}
