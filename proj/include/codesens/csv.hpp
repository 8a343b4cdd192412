#pragma once

#include "error.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace codesens::csv
{

inline std::string escape(std::string_view field)
{
	if (field.find_first_of(",\"\r\n") == std::string_view::npos)
		return std::string(field);
	std::string out = "\"";
	for (char c : field) {
		if (c == '"')
			out += '"';
		out += c;
	}
	out += '"';
	return out;
}

inline std::string row(const std::vector<std::string>& fields)
{
	std::string out;
	for (std::size_t i = 0; i < fields.size(); ++i) {
		if (i)
			out += ',';
		out += escape(fields[i]);
	}
	out += '\n';
	return out;
}

/// RFC 4180 style: quoted fields may contain commas, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse(std::string_view text)
{
	std::vector<std::vector<std::string>> rows;
	std::vector<std::string> current;
	std::string field;
	bool quoted = false;
	bool any = false;
	for (std::size_t i = 0; i < text.size(); ++i) {
		const char c = text[i];
		if (quoted) {
			if (c == '"') {
				if (i + 1 < text.size() && text[i + 1] == '"') {
					field += '"';
					++i;
				} else {
					quoted = false;
				}
			} else {
				field += c;
			}
			continue;
		}
		if (c == '"') {
			quoted = true;
			any = true;
		} else if (c == ',') {
			current.push_back(std::move(field));
			field.clear();
			any = true;
		} else if (c == '\n' || c == '\r') {
			if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')
				++i;
			if (any || !field.empty()) {
				current.push_back(std::move(field));
				rows.push_back(std::move(current));
			}
			current.clear();
			field.clear();
			any = false;
		} else {
			field += c;
			any = true;
		}
	}
	if (quoted)
		throw DataError("csv: unterminated quoted field");
	if (any || !field.empty()) {
		current.push_back(std::move(field));
		rows.push_back(std::move(current));
	}
	return rows;
}

/// Header-indexed table.
class Table
{
public:
	Table(std::string_view text, std::string source) : source_(std::move(source))
	{
		auto rows = parse(text);
		if (rows.empty())
			throw DataError(source_ + ": empty CSV");
		header_ = std::move(rows.front());
		rows.erase(rows.begin());
		for (std::size_t r = 0; r < rows.size(); ++r)
			if (rows[r].size() != header_.size())
				throw DataError(source_ + ":" + std::to_string(r + 2) + ": expected " + std::to_string(header_.size()) + " fields");
		rows_ = std::move(rows);
	}

	bool has(std::string_view column) const
	{
		for (const auto& h : header_)
			if (h == column)
				return true;
		return false;
	}

	std::size_t column(std::string_view name) const
	{
		for (std::size_t i = 0; i < header_.size(); ++i)
			if (header_[i] == name)
				return i;
		throw DataError(source_ + ": missing column \"" + std::string(name) + "\"");
	}

	std::size_t size() const noexcept { return rows_.size(); }
	const std::vector<std::string>& operator[](std::size_t r) const { return rows_.at(r); }
	const std::string& source() const noexcept { return source_; }

private:
	std::string source_;
	std::vector<std::string> header_;
	std::vector<std::vector<std::string>> rows_;
};

inline double to_double(const std::string& s, const std::string& where)
{
	try {
		std::size_t used = 0;
		const double v = std::stod(s, &used);
		if (used != s.size())
			throw std::invalid_argument(s);
		return v;
	} catch (const std::exception&) {
		throw DataError(where + ": not a number: \"" + s + "\"");
	}
}

inline std::size_t to_size(const std::string& s, const std::string& where)
{
	try {
		std::size_t used = 0;
		const auto v = std::stoull(s, &used);
		if (used != s.size())
			throw std::invalid_argument(s);
		return static_cast<std::size_t>(v);
	} catch (const std::exception&) {
		throw DataError(where + ": not a count: \"" + s + "\"");
	}
}

}
