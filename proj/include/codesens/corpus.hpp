#pragma once

#include "error.hpp"
#include "io.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace codesens
{

struct TaskRecord
{
	std::string id;
	std::string title;
	std::string prompt;
	std::vector<std::string> tags;

	friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

/// Fixed text placed around every prompt sent to a model. Never augmented.
struct PromptEnvelope
{
	std::string prefix;
	std::string postfix;

	friend bool operator==(const PromptEnvelope&, const PromptEnvelope&) = default;
};

/// Default envelope wording. This is our own phrasing: it tells the model the
/// request is a coding task and asks for exactly one fenced code block.
inline constexpr std::string_view default_envelope_prefix =
	"The following request represents a coding task. "
	"Respond with a single fenced code block containing the complete program "
	"and no explanation.\n\nTask:\n";
inline constexpr std::string_view default_envelope_postfix =
	"\n\nRemember: this is a coding task. Reply with code only, in one fenced code block.";

inline PromptEnvelope default_envelope()
{
	return {std::string(default_envelope_prefix), std::string(default_envelope_postfix)};
}

struct Dataset
{
	std::string name;
	std::vector<TaskRecord> tasks;

	const TaskRecord* find(std::string_view id) const
	{
		for (const auto& t : tasks)
			if (t.id == id)
				return &t;
		return nullptr;
	}
};

/// Parses JSON Lines text, one task object per non-blank line.
/// Fields: id, title, prompt, tags. Unknown fields produce a warning.
inline Dataset parse_dataset(std::string_view text, std::string name)
{
	using nlohmann::json;
	Dataset ds{std::move(name), {}};
	std::set<std::string, std::less<>> seen;

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

		const auto where = ds.name + ":" + std::to_string(line_no);
		json obj;
		try {
			obj = json::parse(line);
		} catch (const json::parse_error& e) {
			throw DataError(where + ": malformed record: " + e.what());
		}
		if (!obj.is_object())
			throw DataError(where + ": malformed record: expected a JSON object");

		TaskRecord rec;
		try {
			rec.id = obj.at("id").get<std::string>();
			rec.prompt = obj.at("prompt").get<std::string>();
			if (obj.contains("title"))
				rec.title = obj["title"].get<std::string>();
			if (obj.contains("tags"))
				rec.tags = obj["tags"].get<std::vector<std::string>>();
		} catch (const json::exception& e) {
			throw DataError(where + ": malformed record: " + e.what());
		}
		if (rec.id.empty())
			throw DataError(where + ": malformed record: empty id");
		if (trim(rec.prompt).empty())
			throw DataError(where + ": malformed record: empty prompt for task " + rec.id);
		if (!seen.insert(rec.id).second)
			throw DataError(where + ": duplicate task id \"" + rec.id + "\"");

		for (const auto& [key, _] : obj.items())
			if (key != "id" && key != "title" && key != "prompt" && key != "tags")
				warn(where + ": ignoring unknown field \"" + key + "\"");

		ds.tasks.push_back(std::move(rec));
	}
	if (ds.tasks.empty())
		throw DataError(ds.name + ": no tasks");
	return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path)
{
	if (!std::filesystem::exists(path))
		throw DataError("dataset file not found: " + path.string());
	return parse_dataset(read_file(path), path.stem().string());
}

inline std::string serialize_dataset(const Dataset& ds)
{
	std::string out;
	for (const auto& t : ds.tasks) {
		nlohmann::ordered_json obj;
		obj["id"] = t.id;
		obj["title"] = t.title;
		obj["prompt"] = t.prompt;
		obj["tags"] = t.tags;
		out += obj.dump();
		out += '\n';
	}
	return out;
}

/// prefix + body + postfix, byte for byte.
inline std::string wrap_prompt(const TaskRecord& /*task*/, const PromptEnvelope& env, std::string_view body)
{
	std::string out;
	out.reserve(env.prefix.size() + body.size() + env.postfix.size());
	out += env.prefix;
	out += body;
	out += env.postfix;
	return out;
}

}
