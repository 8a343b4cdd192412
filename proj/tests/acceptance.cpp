// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "support/fixtures.hpp"
#include "support/tree_oracle.hpp"

#include <codesens/augment.hpp>
#include <codesens/config.hpp>
#include <codesens/corpus.hpp>
#include <codesens/pipeline.hpp>
#include <codesens/run_store.hpp>
#include <codesens/similarity.hpp>
#include <codesens/stats.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>

using namespace codesens;
namespace fs = std::filesystem;

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome
{
	bool pass = true;
	std::ostringstream detail;

	void require(bool ok, const std::string& what)
	{
		if (!ok) {
			if (pass)
				detail << what;
			pass = false;
		}
	}
};

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Outcome&)>& body)
{
	Outcome o;
	const auto start = Clock::now();
	try {
		body(o);
	} catch (const std::exception& e) {
		o.pass = false;
		o.detail << "exception: " << e.what();
	}
	std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " (" << std::fixed;
	std::cout.precision(1);
	std::cout << seconds_since(start) << " s)";
	if (!o.pass)
		std::cout << " -- " << o.detail.str();
	std::cout << std::endl;
	failures += o.pass ? 0 : 1;
}

std::string shell_quote(const std::string& s)
{
	std::string out = "'";
	for (char c : s)
		out += c == '\'' ? std::string("'\\''") : std::string(1, c);
	return out + "'";
}

int run_cli(const std::vector<std::string>& args, const fs::path& log)
{
	std::string cmd = shell_quote(CODESENS_CLI);
	for (const auto& a : args)
		cmd += " " + shell_quote(a);
	cmd += " > " + shell_quote(log.string()) + " 2>&1";
	const int status = std::system(cmd.c_str());
	return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& root)
{
	std::map<std::string, std::string> out;
	for (const auto& e : fs::recursive_directory_iterator(root))
		if (e.is_regular_file())
			out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
	return out;
}

std::size_t ascii_letters(std::string_view s)
{
	std::size_t n = 0;
	for (char c : s)
		n += (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ? 1 : 0;
	return n;
}

std::string lower(std::string s)
{
	for (auto& c : s)
		c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
	return s;
}

std::vector<std::string> words_of(std::string_view s)
{
	std::vector<std::string> out;
	std::string cur;
	for (char c : s) {
		const auto u = static_cast<unsigned char>(c);
		if (std::isalnum(u) || c == '\'' || u >= 0x80) {
			cur += c;
		} else if (!cur.empty()) {
			out.push_back(std::exchange(cur, {}));
		}
	}
	if (!cur.empty())
		out.push_back(cur);
	return out;
}

}

int main()
{
	const auto data = testkit::source_dir() / "data";
	const fs::path work = fs::temp_directory_path() / "codesens_acceptance";
	fs::remove_all(work);
	fs::create_directories(work);

	report(1, "tree edit distance equals exhaustive mapping search on 1000 random pairs", [](Outcome& o) {
		const auto start = Clock::now();
		Rng rng(0xacce55);
		for (int k = 0; k < 1000; ++k) {
			const auto a = testkit::random_tree(rng, 1 + rng.below(6));
			const auto b = testkit::random_tree(rng, 1 + rng.below(6));
			const double dp = tree_edit_distance(a, b);
			const int brute = testkit::MappingOracle(a, b).distance();
			o.require(dp == static_cast<double>(brute), "pair " + std::to_string(k) + ": " + a.to_bracket() + " vs " + b.to_bracket());
		}
		o.require(seconds_since(start) < 30.0, "took longer than 30 s");
	});

	report(2, "TSED identity, exact symmetry and range on the 50-sample corpus", [](Outcome& o) {
		const auto corpus = testkit::code_corpus();
		o.require(corpus.size() == 50, "corpus does not have 50 samples");
		std::vector<SyntaxTree> trees;
		for (const auto& e : corpus)
			trees.push_back(parse_code({e.code, e.language.empty() ? std::nullopt : std::optional<std::string>(e.language), {}}));
		for (std::size_t i = 0; i < trees.size(); ++i) {
			o.require(tsed_trees(trees[i], trees[i]) == 1.0, "tsed(c, c) != 1 for sample " + std::to_string(i));
			for (std::size_t j = i + 1; j < trees.size(); ++j) {
				const double ab = tsed_trees(trees[i], trees[j]);
				const double ba = tsed_trees(trees[j], trees[i]);
				o.require(ab == ba, "asymmetric pair " + std::to_string(i) + "," + std::to_string(j));
				o.require(ab >= 0.0 && ab <= 1.0, "out of range pair " + std::to_string(i) + "," + std::to_string(j));
			}
		}
	});

	report(3, "augmentation budget exact over 200 prompts x 11 rates; synonyms from thesaurus", [&](Outcome& o) {
		const auto ds = load_dataset(data / "our_dataset.jsonl");
		const auto th = load_thesaurus(data / "thesaurus.json");
		// 200 prompts: the dataset prompts, then sentence windows drawn from them.
		std::vector<std::string> prompts;
		for (const auto& t : ds.tasks)
			prompts.push_back(t.prompt);
		Rng rng(2024);
		while (prompts.size() < 200) {
			const auto& src = ds.tasks[rng.below(ds.tasks.size())].prompt;
			const auto a = rng.below(src.size());
			const auto len = 1 + rng.below(src.size() - a);
			prompts.push_back(src.substr(a, len));
		}
		std::size_t checked = 0;
		for (const auto& p : prompts) {
			const auto e = ascii_letters(p);
			const auto words = words_of(p);
			std::size_t eligible = 0;
			for (const auto& w : words)
				eligible += th.lookup(lower(w)) ? 1 : 0;
			for (int i = 0; i <= 10; ++i) {
				const AugmentationRate rate(i / 10.0);
				const auto seed = rng.next();
				const auto typo = typo_augment(p, rate, seed).text;
				std::size_t diff = 0;
				for (std::size_t k = 0; k < p.size(); ++k)
					diff += typo[k] != p[k] ? 1 : 0;
				const auto expected = static_cast<std::size_t>(std::floor(rate.value() * static_cast<double>(e) + 0.5 + 1e-9));
				o.require(typo.size() == p.size() && diff == expected, "typo budget mismatch on \"" + p + "\" at rate " + format_double(rate.value()));

				const auto syn = synonym_augment(p, rate, seed, th).text;
				const auto after = words_of(syn);
				o.require(after.size() == words.size(), "word count changed on \"" + p + "\"");
				if (after.size() != words.size())
					continue;
				std::size_t changed = 0;
				for (std::size_t w = 0; w < words.size(); ++w) {
					if (words[w] == after[w])
						continue;
					++changed;
					const auto* list = th.lookup(lower(words[w]));
					bool member = false;
					if (list)
						for (const auto& s : *list)
							member = member || lower(s) == lower(after[w]);
					o.require(member, "\"" + after[w] + "\" is not a synonym of \"" + words[w] + "\"");
				}
				o.require(changed == edit_budget(rate, eligible), "synonym budget mismatch on \"" + p + "\"");
				++checked;
			}
		}
		o.require(checked == 200 * 11, "not every case was checked");
	});

	report(4, "BLEU fixture, identity and bucket boundaries", [](Outcome& o) {
		o.require(std::fabs(bleu("the cat sat", "the cat sat down") - 0.7165313105737893) <= 1e-9, "fixture value");
		o.require(bleu("the cat sat down", "the cat sat down") == 1.0, "identity");
		o.require(bucket_for_bleu(0.5) == ParaphraseLevel::low, "0.5 must be low");
		o.require(bucket_for_bleu(0.2) == ParaphraseLevel::medium, "0.2 must be medium");
		o.require(bucket_for_bleu(std::nextafter(0.5, 0.0)) == ParaphraseLevel::medium, "just below 0.5 must be medium");
		o.require(bucket_for_bleu(std::nextafter(0.2, 0.0)) == ParaphraseLevel::high, "just below 0.2 must be high");
		o.require(bucket_for_bleu(1.0) == ParaphraseLevel::low, "1.0 must be low");
		o.require(bucket_for_bleu(0.0) == ParaphraseLevel::high, "0.0 must be high");
	});

	report(5, "Friedman and Kruskal-Wallis match the reference oracle", [](Outcome& o) {
		auto near = [&](double got, double want, const std::string& what) {
			o.require(std::fabs(got - want) <= 1e-6, what + ": got " + format_double(got) + ", want " + format_double(want));
		};
		struct Case
		{
			std::vector<std::vector<double>> data;
			double stat, p;
		};
		const std::vector<Case> fr = {
			{{{1, 2, 3}, {2, 3, 4}, {0.1, 0.2, 0.3}, {5, 6, 7}}, 8.0, 0.018315638888734182},
			{{{0.9, 0.7, 0.7, 0.2}, {1.0, 0.8, 0.5, 0.5}, {0.6, 0.6, 0.6, 0.1}, {0.8, 0.9, 0.3, 0.0}, {0.7, 0.4, 0.4, 0.4}, {0.95, 0.6, 0.2, 0.0}},
			 13.860000000000014, 0.0031020447746336953},
			{{{0.92, 0.55, 0.41, 0.30, 0.0}, {0.88, 0.61, 0.61, 0.12, 0.0}, {1.0, 0.47, 0.35, 0.35, 0.28}, {0.71, 0.71, 0.50, 0.0, 0.0}, {0.83, 0.44, 0.52, 0.31, 0.19}},
			 18.541666666666664, 0.0009667939468226735},
		};
		for (std::size_t i = 0; i < fr.size(); ++i) {
			const auto r = stats::friedman(stats::RankMatrix(fr[i].data));
			near(r.statistic, fr[i].stat, "friedman " + std::to_string(i) + " statistic");
			near(r.p_value, fr[i].p, "friedman " + std::to_string(i) + " p");
		}
		const std::vector<Case> kw = {
			{{{1, 2, 3}, {4, 5, 6}}, 3.857142857142854, 0.049534613435626915},
			{{{0.5, 0.5, 0.7, 0.9, 0.0}, {0.5, 0.2, 0.2, 0.0}, {0.9, 0.9, 0.7, 0.5, 1.0, 0.0}}, 3.825586419753092, 0.14766734412280544},
			{{{0.12, 0.08, 0.15, 0.10, 0.05, 0.11, 0.09, 0.14}, {0.31, 0.28, 0.35, 0.22, 0.30, 0.26, 0.33, 0.29}, {0.55, 0.48, 0.61, 0.52, 0.45, 0.58, 0.50, 0.47}},
			 20.480000000000004, 3.571284964163516e-05},
		};
		for (std::size_t i = 0; i < kw.size(); ++i) {
			const auto r = stats::kruskal_wallis(kw[i].data);
			near(r.statistic, kw[i].stat, "kruskal " + std::to_string(i) + " statistic");
			near(r.p_value, kw[i].p, "kruskal " + std::to_string(i) + " p");
		}
		o.require(std::fabs(stats::chi_square_sf(2.0 * std::log(2.0), 2) - 0.5) <= 1e-12, "chi_square_sf(2 ln 2, 2) != 0.5");
		o.require(stats::kruskal_wallis({{0.4, 0.7, 0.9}, {0.4, 0.7, 0.9}}).p_value == 1.0, "identical kruskal groups must give p = 1");
		o.require(stats::friedman(stats::RankMatrix({{0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}})).p_value == 1.0, "identical treatments must give p = 1");
	});

	const auto record_cfg = work / "record.json";
	const auto replay_cfg = work / "replay.json";
	const auto cassette = work / "cassette.json";
	{
		const auto dataset = (data / "our_dataset.jsonl").generic_string();
		const auto templates = (data / "templates.jsonl").generic_string();
		write_file(record_cfg, "{\n  \"dataset\": \"" + dataset + "\",\n  \"methods\": [\"typos\"],\n  \"models\": [\n    {\"name\": \"corruptor-mock\", \"backend\": \"rec\"},\n"
								   "    {\"name\": \"constant-mock\", \"backend\": \"constant\"}\n  ],\n  \"backends\": {\n"
								   "    \"corruptor\": {\"kind\": \"corruptor\", \"templates\": \"" + templates + "\"},\n"
								   "    \"rec\": {\"kind\": \"record\", \"inner\": \"corruptor\", \"cassette\": \"cassette.json\"},\n"
								   "    \"constant\": {\"kind\": \"constant\", \"payload\": \"```python\\ndef solve(xs):\\n    return sorted(xs)\\n```\\n\"}\n  }\n}\n");
		write_file(replay_cfg, "{\n  \"dataset\": \"" + dataset + "\",\n  \"methods\": [\"typos\"],\n  \"models\": [{\"name\": \"corruptor-mock\", \"backend\": \"tape\"}],\n"
								   "  \"backends\": {\"tape\": {\"kind\": \"replay\", \"cassette\": \"cassette.json\"}}\n}\n");
	}

	report(6, "default sweep: 11 points per task and method, 25 pairs per point", [&](Outcome& o) {
		const auto ds = load_dataset(data / "our_dataset.jsonl");
		const auto templates = load_templates(data / "templates.jsonl");
		PipelineConfig cfg;
		o.require(cfg.n_samples == 5 && cfg.rate_step == 0.1, "defaults changed");
		CorruptorBackend backend(cfg.envelope);
		for (const auto& t : ds.tasks)
			backend.register_original(t.prompt, templates.at(t.id));
		const auto th = load_thesaurus(data / "thesaurus.json");
		for (const auto* id : {"calculator", "battleship"}) {
			const auto& task = *ds.find(id);
			const auto ref = run_reference(task, cfg, backend);
			for (auto method : {AugmentMethod::typos, AugmentMethod::synonyms}) {
				const auto res = run_sweep(task, method, cfg, backend, ref, &th);
				o.require(res.points.size() == 11, std::string(id) + ": expected 11 points");
				for (std::size_t p = 0; p < res.points.size(); ++p) {
					o.require(res.points[p].count == 25 && res.scores(p).size() == 25, std::string(id) + ": point without 25 pairs");
					o.require(std::fabs(res.points[p].rate - static_cast<double>(p) / 10.0) < 1e-12, std::string(id) + ": wrong rate grid");
				}
			}
		}
	});

	report(7, "corruption mock: falling typo curve; constant mock: flat at 1.0; end to end under 2 min", [&](Outcome& o) {
		const auto start = Clock::now();
		const int rc = run_cli({"sweep", "-c", record_cfg.string(), "-o", (work / "trend").string()}, work / "trend.log");
		const double elapsed = seconds_since(start);
		o.require(rc == 0, "sweep exited with " + std::to_string(rc) + ", see " + (work / "trend.log").string());
		if (rc != 0)
			return;
		const auto results = load_run(work / "trend");
		std::vector<SweepResult> corrupt, constant;
		for (const auto& r : results)
			(r.model == "corruptor-mock" ? corrupt : constant).push_back(r);
		o.require(corrupt.size() == 22 && constant.size() == 22, "expected 22 sweeps per model");
		const auto curve = aggregate_curves(corrupt);
		o.require(curve.size() == 11, "expected 11 aggregated points");
		if (curve.size() == 11) {
			std::ostringstream shape;
			for (const auto& p : curve)
				shape << ' ' << p.label << '=' << format_double(std::round(p.mean_similarity * 1000) / 1000);
			o.require(curve.back().mean_similarity <= curve.front().mean_similarity - 0.3, "mean at 1.0 not 0.3 below mean at 0.0:" + shape.str());
			for (std::size_t i = 0; i + 1 < curve.size(); ++i)
				o.require(curve[i + 1].mean_similarity <= curve[i].ci_high, "rise beyond bootstrap noise after rate " + curve[i].label + ":" + shape.str());
		}
		for (const auto& p : aggregate_curves(constant))
			o.require(p.mean_similarity == 1.0 && p.ci_low == 1.0 && p.ci_high == 1.0, "constant curve not flat at 1.0 (rate " + p.label + ")");
		o.require(elapsed < 120.0, "hermetic run took " + format_double(elapsed) + " s");
	});

	report(8, "two sweeps on the same cassette give byte-identical run directories", [&](Outcome& o) {
		o.require(fs::exists(cassette), "no cassette recorded");
		const auto a = work / "replay_a", b = work / "replay_b";
		const int ra = run_cli({"sweep", "-c", replay_cfg.string(), "-o", a.string()}, work / "replay_a.log");
		const int rb = run_cli({"sweep", "-c", replay_cfg.string(), "-o", b.string()}, work / "replay_b.log");
		o.require(ra == 0 && rb == 0, "replay sweeps exited with " + std::to_string(ra) + " and " + std::to_string(rb));
		const auto ta = tree_contents(a), tb = tree_contents(b);
		o.require(ta.size() >= 3, "run directory incomplete");
		o.require(ta == tb, "run directories differ");
		if (ta.count("points.csv") && fs::exists(work / "trend/points.csv")) {
			// the replayed corruptor rows equal the recorded ones
			const auto recorded = read_file(work / "trend/points.csv");
			std::istringstream in(ta.at("points.csv"));
			std::string line;
			std::getline(in, line);
			while (std::getline(in, line))
				o.require(recorded.find(line + "\n") != std::string::npos, "replayed row not in recorded run: " + line);
		}
	});

	std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
	return failures;
}
