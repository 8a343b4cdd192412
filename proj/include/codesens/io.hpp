#pragma once

#include "error.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace codesens
{

inline std::string read_file(const std::filesystem::path& path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw DataError("cannot open file: " + path.string());
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view contents)
{
	if (path.has_parent_path())
		std::filesystem::create_directories(path.parent_path());
	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw DataError("cannot write file: " + path.string());
	out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

inline std::string_view trim(std::string_view s) noexcept
{
	const auto ws = " \t\r\n\f\v";
	const auto first = s.find_first_not_of(ws);
	if (first == std::string_view::npos)
		return {};
	const auto last = s.find_last_not_of(ws);
	return s.substr(first, last - first + 1);
}

}
