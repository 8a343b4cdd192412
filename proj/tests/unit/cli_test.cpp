#include "../support/fixtures.hpp"

#include <codesens/commands.hpp>
#include <codesens/csv.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace codesens;
using namespace codesens::cli;

namespace
{

struct Workspace
{
	testkit::ScratchDir dir;
	std::filesystem::path dataset;
	std::filesystem::path config;

	explicit Workspace(const std::string& name, const std::string& backends_json, const std::string& models_json) : dir(name)
	{
		const auto full = load_dataset(testkit::source_dir() / "data/our_dataset.jsonl");
		Dataset small{"small", {*full.find("calculator"), *full.find("word_ladder")}};
		dataset = dir.path() / "small.jsonl";
		write_file(dataset, serialize_dataset(small));
		const auto data = (testkit::source_dir() / "data").generic_string();
		config = dir.path() / "run.json";
		write_file(config, "{\"dataset\": \"small.jsonl\", \"thesaurus\": \"" + data + "/thesaurus.json\", \"paraphrases\": \"" + data
							   + "/paraphrases.jsonl\", \"methods\": [\"typos\"], \"rate_step\": 0.25, \"bootstrap\": {\"resamples\": 300}, \"output_dir\": \"out\", "
								 "\"models\": "
							   + models_json + ", \"backends\": " + backends_json + "}");
	}
};

std::string corruptor_backends()
{
	const auto templates = (testkit::source_dir() / "data/templates.jsonl").generic_string();
	return R"({"c": {"kind": "corruptor", "templates": ")" + templates + R"("}, "k": {"kind": "constant", "payload": "x = 1"}})";
}

std::string models() { return R"([{"name": "mock-a", "backend": "c"}, {"name": "mock-b", "backend": "k"}])"; }

int run_and_code(const std::function<int()>& fn)
{
	try {
		return fn();
	} catch (...) {
		return exit_code_for_current_exception();
	}
}

}

TEST(CmdAugment, RateZeroOneAndDeterminism)
{
	testkit::ScratchDir dir("augment");
	AugmentOptions opt;
	opt.dataset = testkit::source_dir() / "data/our_dataset.jsonl";
	opt.seed = 3;
	const auto ds = load_dataset(opt.dataset);
	auto lines = [&](double rate, const std::string& name) {
		opt.rate = rate;
		opt.out = dir.path() / name;
		std::ostringstream log;
		EXPECT_EQ(cmd_augment(opt, log), exit_ok);
		std::vector<nlohmann::json> out;
		std::istringstream in(read_file(opt.out));
		for (std::string line; std::getline(in, line);)
			out.push_back(nlohmann::json::parse(line));
		return out;
	};
	const auto zero = lines(0.0, "zero.jsonl");
	ASSERT_EQ(zero.size(), ds.tasks.size());
	for (std::size_t i = 0; i < zero.size(); ++i)
		EXPECT_EQ(zero[i]["text"], ds.tasks[i].prompt);
	const auto one = lines(1.0, "one.jsonl");
	for (std::size_t i = 0; i < one.size(); ++i) {
		const auto text = one[i]["text"].get<std::string>();
		const auto& orig = ds.tasks[i].prompt;
		ASSERT_EQ(text.size(), orig.size());
		for (std::size_t k = 0; k < orig.size(); ++k) {
			const bool letter = (orig[k] >= 'a' && orig[k] <= 'z') || (orig[k] >= 'A' && orig[k] <= 'Z');
			EXPECT_EQ(text[k] != orig[k], letter);
		}
	}
	EXPECT_EQ(read_file(dir.path() / "one.jsonl"), (lines(1.0, "again.jsonl"), read_file(dir.path() / "again.jsonl")));
	opt.method = AugmentMethod::synonyms;
	EXPECT_THROW(lines(0.5, "syn.jsonl"), ConfigError);
}

TEST(CmdSweep, WritesRunDirectory)
{
	Workspace ws("sweep", corruptor_backends(), models());
	SweepOptions opt;
	opt.config = ws.config;
	std::ostringstream log;
	ASSERT_EQ(cmd_sweep(opt, log), exit_ok) << log.str();
	const auto out = ws.dir.path() / "out";
	const csv::Table points(read_file(out / "points.csv"), "points");
	EXPECT_EQ(points.size(), 2u * 2u * 5u);
	const csv::Table pairs(read_file(out / "pairs.csv"), "pairs");
	EXPECT_EQ(pairs.size(), 2u * 2u * 5u * 25u);
	const auto run = nlohmann::json::parse(read_file(out / "run.json"));
	EXPECT_EQ(run["sweeps_completed"], 4);
	EXPECT_TRUE(run["incomplete"].empty());
	EXPECT_EQ(run["fingerprints"]["dataset"], file_fingerprint(ws.dataset));

	ReportOptions rep;
	rep.run = out;
	rep.resamples = 300;
	std::ostringstream rlog;
	ASSERT_EQ(cmd_report(rep, rlog), exit_ok);
	const csv::Table curve(read_file(out / "report/curve_typos.csv"), "curve");
	EXPECT_EQ(curve.size(), 5u);
	EXPECT_NE(read_file(out / "report/curve_typos.svg").find("<svg"), std::string::npos);

	AggregateOptions agg;
	agg.runs = {out};
	agg.by = {"model"};
	agg.out = ws.dir.path() / "agg.csv";
	agg.resamples = 300;
	std::ostringstream alog;
	ASSERT_EQ(cmd_aggregate(agg, alog), exit_ok);
	const csv::Table pooled(read_file(agg.out), "agg");
	ASSERT_EQ(pooled.size(), 10u);
	for (std::size_t r = 0; r < pooled.size(); ++r)
		EXPECT_EQ(pooled[r][pooled.column("count")], "50");
	for (std::size_t r = 5; r < 10; ++r)
		EXPECT_EQ(pooled[r][pooled.column("mean")], "1");

	StatsOptions st;
	st.test = "friedman";
	st.block = "task_model";
	st.inputs = {out};
	std::ostringstream sout;
	ASSERT_EQ(cmd_stats(st, sout), exit_ok);
	const auto j = nlohmann::json::parse(sout.str());
	EXPECT_EQ(j["df"], 4);
	EXPECT_GE(j["p_value"].get<double>(), 0.0);
}

TEST(CmdSweep, ResumeReusesCheckpoints)
{
	Workspace ws("resume_cli", corruptor_backends(), models());
	SweepOptions opt;
	opt.config = ws.config;
	std::ostringstream log;
	ASSERT_EQ(cmd_sweep(opt, log), exit_ok);
	const auto first = read_file(ws.dir.path() / "out/pairs.csv");
	opt.resume = true;
	ASSERT_EQ(cmd_sweep(opt, log), exit_ok);
	EXPECT_EQ(read_file(ws.dir.path() / "out/pairs.csv"), first);
}

TEST(CmdSweep, ExitCodes)
{
	{
		Workspace ws("miss", R"({"r": {"kind": "replay", "cassette": "empty.json"}})", R"([{"name": "m", "backend": "r"}])");
		write_file(ws.dir.path() / "empty.json", "{}\n");
		SweepOptions opt;
		opt.config = ws.config;
		std::ostringstream log;
		EXPECT_EQ(run_and_code([&] { return cmd_sweep(opt, log); }), exit_replay_miss);
		const auto run = nlohmann::json::parse(read_file(ws.dir.path() / "out/run.json"));
		EXPECT_EQ(run["incomplete"].size(), 2u);
	}
	{
		Workspace ws("badcfg", R"({"r": {"kind": "teleport"}})", R"([{"name": "m", "backend": "r"}])");
		SweepOptions opt;
		opt.config = ws.config;
		std::ostringstream log;
		EXPECT_EQ(run_and_code([&] { return cmd_sweep(opt, log); }), exit_config);
	}
	{
		SweepOptions opt;
		opt.config = "/nonexistent/config.json";
		std::ostringstream log;
		EXPECT_EQ(run_and_code([&] { return cmd_sweep(opt, log); }), exit_config);
	}
	{
		::unsetenv("CODESENS_TEST_UNSET_KEY");
		Workspace ws("nokey", R"({"h": {"kind": "http", "base_url": "http://127.0.0.1:1/v1", "key_env": "CODESENS_TEST_UNSET_KEY"}})",
					 R"([{"name": "m", "backend": "h"}])");
		SweepOptions opt;
		opt.config = ws.config;
		std::ostringstream log;
		EXPECT_EQ(run_and_code([&] { return cmd_sweep(opt, log); }), exit_config);
	}
	{
		Workspace ws("down", R"({"h": {"kind": "http", "base_url": "http://127.0.0.1:1/v1", "max_attempts": 1, "timeout_s": 2}})",
					 R"([{"name": "m", "backend": "h"}])");
		SweepOptions opt;
		opt.config = ws.config;
		std::ostringstream log;
		EXPECT_EQ(run_and_code([&] { return cmd_sweep(opt, log); }), exit_backend);
	}
}

TEST(CmdParaphraseEval, WritesLevels)
{
	Workspace ws("para", corruptor_backends(), R"([{"name": "mock-a", "backend": "c"}])");
	SweepOptions opt;
	opt.config = ws.config;
	std::ostringstream log;
	ASSERT_EQ(cmd_paraphrase_eval(opt, log), exit_ok);
	const csv::Table points(read_file(ws.dir.path() / "out/points.csv"), "points");
	ASSERT_GE(points.size(), 6u);
	EXPECT_EQ(points[0][points.column("method")], "paraphrase");
	EXPECT_EQ(points[0][points.column("rate")], "original");
}

TEST(CmdStats, FriedmanFromPointsMatchesReference)
{
	testkit::ScratchDir dir("stats");
	std::string csv_text = "model,task_id,method,rate,mean,ci_low,ci_high,count\n";
	const std::vector<std::vector<double>> rows{{1, 2, 3}, {2, 3, 4}, {0.1, 0.2, 0.3}, {5, 6, 7}};
	for (std::size_t b = 0; b < rows.size(); ++b)
		for (std::size_t t = 0; t < 3; ++t)
			csv_text += "m,t" + std::to_string(b) + ",typos," + std::to_string(t) + "," + format_double(rows[b][t]) + ",0,0,25\n";
	write_file(dir.path() / "points.csv", csv_text);

	StatsOptions st;
	st.test = "friedman";
	st.block = "task";
	st.inputs = {dir.path() / "points.csv"};
	std::ostringstream out;
	ASSERT_EQ(cmd_stats(st, out), exit_ok);
	const auto j = nlohmann::json::parse(out.str());
	EXPECT_NEAR(j["statistic"].get<double>(), 8.0, 1e-6);
	EXPECT_NEAR(j["p_value"].get<double>(), 0.018315638888734182, 1e-6);

	st.block.clear();
	EXPECT_THROW(cmd_stats(st, out), ConfigError);

	const std::vector<std::vector<double>> groups{{1, 2, 3}, {4, 5, 6}};
	StatsOptions kw;
	kw.test = "kruskal";
	for (std::size_t g = 0; g < groups.size(); ++g) {
		std::string text = "model,task_id,method,rate,mean,ci_low,ci_high,count\n";
		for (std::size_t k = 0; k < groups[g].size(); ++k)
			text += "m,t" + std::to_string(k) + ",typos,0.5," + format_double(groups[g][k]) + ",0,0,25\n";
		const auto path = dir.path() / ("g" + std::to_string(g) + ".csv");
		write_file(path, text);
		kw.inputs.push_back(path);
	}
	std::ostringstream kout;
	ASSERT_EQ(cmd_stats(kw, kout), exit_ok);
	const auto k = nlohmann::json::parse(kout.str());
	EXPECT_NEAR(k["statistic"].get<double>(), 3.857142857142854, 1e-6);
	EXPECT_NEAR(k["p_value"].get<double>(), 0.049534613435626915, 1e-6);
}

TEST(Csv, QuotingRoundTrip)
{
	const std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
	const auto rows = csv::parse(csv::row(fields) + csv::row({"a", "b", "c", "d", "e"}));
	ASSERT_EQ(rows.size(), 2u);
	EXPECT_EQ(rows[0], fields);
	EXPECT_THROW(csv::Table("a,b\n1\n", "t"), DataError);
}

TEST(Config, ParsesAndValidates)
{
	const auto cfg = parse_run_config(R"({"dataset": "d.jsonl", "methods": ["typos", "synonyms"], "thesaurus": "t.json",
		"models": [{"name": "m", "backend": "rec"}],
		"backends": {"rec": {"kind": "record", "inner": "api", "cassette": "c.json"},
		             "api": {"kind": "http", "base_url": "https://example.invalid/v1", "key_env": "K", "max_attempts": 3}}})",
									  "/base");
	EXPECT_EQ(cfg.dataset, std::filesystem::path("/base/d.jsonl"));
	EXPECT_EQ(cfg.backends.at("api").http.max_attempts, 3u);
	EXPECT_NO_THROW(cfg.validate());
	EXPECT_EQ(backend_cassettes(cfg, "rec"), std::vector<std::filesystem::path>{"/base/c.json"});

	auto broken = cfg;
	broken.thesaurus.reset();
	EXPECT_THROW(broken.validate(), ConfigError);
	broken = cfg;
	broken.backends.at("rec").inner = "missing";
	EXPECT_THROW(broken.validate(), ConfigError);
	EXPECT_THROW(parse_run_config("{\"methods\": [\"jumble\"]}"), ConfigError);
	EXPECT_THROW(parse_run_config("[]"), ConfigError);
}
