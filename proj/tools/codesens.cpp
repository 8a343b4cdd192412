#include <codesens/commands.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace
{

void add_sweep_flags(CLI::App* cmd, codesens::cli::SweepOptions& opt, std::vector<std::string>& methods)
{
	cmd->add_option("-c,--config", opt.config, "run configuration (JSON)")->required();
	cmd->add_option("--dataset", opt.dataset, "override the dataset path");
	cmd->add_option("-o,--out", opt.output_dir, "override the output directory");
	cmd->add_option("-n,--n-samples", opt.n_samples, "samples per prompt");
	cmd->add_option("--rate-step", opt.rate_step, "augmentation rate step");
	cmd->add_option("-j,--parallelism", opt.parallelism, "concurrent requests per backend");
	cmd->add_option("--method", methods, "augmentation methods (repeatable)");
	cmd->add_flag("--resume", opt.resume, "reuse checkpoints of an interrupted run");
}

}

int main(int argc, char** argv)
{
	namespace cli = codesens::cli;
	CLI::App app{"Prompt-perturbation sensitivity harness for code-generating models"};
	app.require_subcommand(1);

	cli::AugmentOptions augment;
	std::string augment_method = "typos";
	auto* aug = app.add_subcommand("augment", "write augmented prompts for every task of a dataset");
	aug->add_option("--dataset", augment.dataset, "dataset (JSON Lines)")->required();
	aug->add_option("--method", augment_method, "typos or synonyms")->required();
	aug->add_option("--rate", augment.rate, "fraction of letters/words to perturb")->required();
	aug->add_option("--seed", augment.seed, "base seed");
	aug->add_option("--thesaurus", augment.thesaurus, "synonym thesaurus (JSON)");
	aug->add_option("-o,--out", augment.out, "output file (JSON Lines)")->required();

	cli::SweepOptions sweep;
	std::vector<std::string> sweep_methods;
	auto* sw = app.add_subcommand("sweep", "run the rate sweep for every model, task and method");
	add_sweep_flags(sw, sweep, sweep_methods);

	cli::SweepOptions para;
	std::vector<std::string> para_methods;
	auto* pe = app.add_subcommand("paraphrase-eval", "evaluate BLEU-bucketed paraphrases");
	add_sweep_flags(pe, para, para_methods);
	pe->add_option("--paraphrases", para.paraphrases, "paraphrase file (JSON Lines {task_id, text})");

	cli::AggregateOptions agg;
	auto* ag = app.add_subcommand("aggregate", "pool pair scores across runs, models and tasks");
	ag->add_option("runs", agg.runs, "run directories")->required();
	ag->add_option("--by", agg.by, "keep these dimensions separate: run, model, task")->delimiter(',');
	ag->add_option("-o,--out", agg.out, "output CSV")->required();
	ag->add_option("--resamples", agg.resamples, "bootstrap resamples");
	ag->add_option("--seed", agg.seed, "bootstrap seed");

	cli::StatsOptions st;
	auto* sc = app.add_subcommand("stats", "Friedman or Kruskal-Wallis test over run outputs");
	sc->add_option("--test", st.test, "friedman or kruskal")->required()->check(CLI::IsMember({"friedman", "kruskal"}));
	sc->add_option("inputs", st.inputs, "points.csv/pairs.csv files or run directories")->required();
	sc->add_option("--block", st.block, "friedman blocking dimension: task, model or task_model");
	sc->add_option("--method", st.method, "only rows of this method");
	sc->add_option("--model", st.model, "only rows of this model");
	sc->add_option("--rate", st.rate, "kruskal: only rows at this rate");
	sc->add_option("--measure", st.measure, "kruskal observation: mean or drop");
	sc->add_option("-o,--out", st.out, "also write the JSON here");

	cli::ReportOptions rep;
	auto* rp = app.add_subcommand("report", "write curve CSV and SVG chart per method");
	rp->add_option("run", rep.run, "run directory")->required();
	rp->add_option("-o,--out", rep.out, "output directory (default <run>/report)");
	rp->add_option("--resamples", rep.resamples, "bootstrap resamples when pooling");
	rp->add_option("--seed", rep.seed, "bootstrap seed when pooling");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int rc = app.exit(e);
		return rc == 0 ? 0 : cli::exit_config;
	}

	try {
		if (*aug) {
			augment.method = codesens::parse_augment_method(augment_method);
			return cli::cmd_augment(augment, std::cout);
		}
		if (*sw) {
			sweep.methods = sweep_methods;
			return cli::cmd_sweep(sweep, std::cout);
		}
		if (*pe) {
			para.methods = para_methods;
			return cli::cmd_paraphrase_eval(para, std::cout);
		}
		if (*ag)
			return cli::cmd_aggregate(agg, std::cout);
		if (*sc)
			return cli::cmd_stats(st, std::cout);
		if (*rp)
			return cli::cmd_report(rep, std::cout);
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << '\n';
		return cli::exit_code_for_current_exception();
	}
	return cli::exit_failure;
}
