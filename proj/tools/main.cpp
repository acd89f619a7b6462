#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixhaz/mixhaz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
	std::string config_path;
	std::string input_path;  // overrides the config's input key
	std::string out_dir = ".";
	std::uint64_t seed = 12345;
	int dbar = 0;  // 0 means "use config / data default"
	int threads = 1;
	int bin_weeks = 0;
};

void add_common(CLI::App* sub, CommonArgs* args, bool with_input) {
	sub->add_option("--config", args->config_path, "configuration file")->required();
	sub->add_option("--seed", args->seed, "random seed");
	sub->add_option("--dbar", args->dbar, "estimation horizon override");
	sub->add_option("--out", args->out_dir, "output directory");
	sub->add_option("--threads", args->threads, "worker threads");
	if (with_input) {
		sub->add_option("--input", args->input_path, "input file override");
		sub->add_option("--bin-weeks", args->bin_weeks,
		                "convert week durations to bins by ceiling division");
	}
}

void require(bool cond, const std::string& msg) {
	if (!cond) throw std::invalid_argument(msg);
}

std::string out_path(const CommonArgs& args, const std::string& name) {
	fs::create_directories(args.out_dir);
	return (fs::path(args.out_dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
	std::ofstream out(path);
	if (!out) throw std::runtime_error("cannot write output file: '" + path + "'");
	return out;
}

json config_echo(const mixhaz::Config& cfg) {
	json j = json::object();
	for (const auto& [section, kv] : cfg.sections()) {
		json s = json::object();
		for (const auto& [k, v] : kv) s[k] = v;
		j[section] = s;
	}
	return j;
}

mixhaz::ManifestInfo base_manifest(const std::string& command, const CommonArgs& args,
                                   const mixhaz::Config& cfg) {
	mixhaz::ManifestInfo info;
	info.command = command;
	info.seed = args.seed;
	info.threads = args.threads;
	info.inputs[args.config_path] = mixhaz::hex64(mixhaz::fnv1a_file(args.config_path));
	info.config_echo = config_echo(cfg);
	return info;
}

// ---------------------------------------------------------------------------
// config -> domain objects
// ---------------------------------------------------------------------------

mixhaz::CensoringSpec censoring_from(const mixhaz::Config& cfg, const std::string& section) {
	mixhaz::CensoringSpec spec;
	const std::string scheme = cfg.get_string(section, "censoring", "none");
	if (scheme == "none")
		spec.scheme = mixhaz::CensoringSpec::Scheme::None;
	else if (scheme == "uniform")
		spec.scheme = mixhaz::CensoringSpec::Scheme::Uniform;
	else if (scheme == "fixed")
		spec.scheme = mixhaz::CensoringSpec::Scheme::Fixed;
	else
		throw std::invalid_argument("censoring scheme must be none, uniform, or fixed");
	spec.horizon = static_cast<int>(cfg.get_int(section, "censoring_horizon", 1));
	return spec;
}

mixhaz::Dgp dgp_from(const mixhaz::Config& cfg, int dbar_override) {
	mixhaz::Dgp dgp;
	if (cfg.has("simlab", "binning_case")) {
		dgp = mixhaz::make_binning_dgp(static_cast<int>(cfg.get_int("simlab", "binning_case")));
		dgp.censoring = censoring_from(cfg, "simlab");
		return dgp;
	}
	const auto shares = cfg.get_double_list("simlab", "shares", {0.5, 0.5});
	const auto psi1 = cfg.get_double_list("simlab", "psi1");
	require(shares.size() == psi1.size(), "simlab: shares and psi1 must have equal length");
	const auto gamma = cfg.get_double_list("simlab", "gamma", std::vector<double>(psi1.size(), 1.0));
	const auto shift =
	    cfg.get_double_list("simlab", "type_shift", std::vector<double>(psi1.size(), 0.0));
	require(gamma.size() == psi1.size() && shift.size() == psi1.size(),
	        "simlab: gamma and type_shift must match the number of groups");
	double share_sum = 0.0;
	for (std::size_t l = 0; l < psi1.size(); ++l) {
		dgp.groups.push_back({shares[l], psi1[l], gamma[l], shift[l]});
		share_sum += shares[l];
	}
	require(std::abs(share_sum - 1.0) < 1e-9, "simlab: group shares must sum to 1");

	dgp.psi_tail = cfg.get_double_list("simlab", "psi_tail", {});
	dgp.dbar = 1 + static_cast<int>(dgp.psi_tail.size());
	const int want = dbar_override > 0
	                     ? dbar_override
	                     : static_cast<int>(cfg.get_int("simlab", "dbar", dgp.dbar));
	require(want == dgp.dbar, "simlab: dbar must equal 1 + length of psi_tail");

	const std::string kind = cfg.get_string("simlab", "types", "discrete");
	if (kind == "discrete") {
		const auto support = cfg.get_double_list("simlab", "type_support", {1.0});
		const auto prob = cfg.get_double_list("simlab", "type_prob",
		                                      std::vector<double>(support.size(),
		                                                          1.0 / support.size()));
		require(support.size() == prob.size(),
		        "simlab: type_support and type_prob must have equal length");
		dgp.types = mixhaz::TypeDistribution::discrete(support, prob);
	} else if (kind == "beta") {
		const auto flat = cfg.get_double_list("simlab", "beta_params");
		require(!flat.empty() && flat.size() % 3 == 0,
		        "simlab: beta_params must be a,b,w triples");
		std::vector<mixhaz::TypeDistribution::BetaComponent> comps;
		for (std::size_t i = 0; i < flat.size(); i += 3)
			comps.push_back({flat[i], flat[i + 1], flat[i + 2]});
		dgp.types = mixhaz::TypeDistribution::beta_mixture(comps);
	} else {
		throw std::invalid_argument("simlab: types must be discrete or beta");
	}
	dgp.censoring = censoring_from(cfg, "simlab");
	return dgp;
}

mixhaz::SearchConfig search_config_from(const mixhaz::Config& cfg) {
	mixhaz::SearchConfig sc;
	sc.beta = cfg.get_double("search_model", "beta", sc.beta);
	sc.sigma = cfg.get_double("search_model", "sigma", sc.sigma);
	sc.wage = cfg.get_double("search_model", "wage", sc.wage);
	sc.assets = cfg.get_double("search_model", "assets", sc.assets);
	sc.benefit = cfg.get_double("search_model", "benefit", sc.benefit);
	sc.benefit_periods =
	    static_cast<int>(cfg.get_int("search_model", "benefit_periods", sc.benefit_periods));
	sc.rho = cfg.get_double("search_model", "rho", sc.rho);
	sc.theta_cost = cfg.get_double("search_model", "theta_cost", sc.theta_cost);
	sc.delta = cfg.get_double_list("search_model", "delta", sc.delta);
	require(!sc.delta.empty(), "search_model: delta path must be nonempty");
	return sc;
}

mixhaz::EstimationSpec estimation_spec_from(const mixhaz::Config& cfg, int dbar) {
	mixhaz::EstimationSpec spec;
	spec.dbar = dbar;
	const std::string tail = cfg.get_string("estimator", "tail", "nonparametric");
	if (tail == "nonparametric")
		spec.tail = mixhaz::TailKind::Nonparametric;
	else if (tail == "loglogistic" || tail == "log-logistic")
		spec.tail = mixhaz::TailKind::LogLogistic;
	else
		throw std::invalid_argument("estimator: tail must be nonparametric or loglogistic");
	spec.two_step = cfg.get_bool("estimator", "two_step", true);
	spec.group_a = static_cast<int>(cfg.get_int("estimator", "group_a", 0));
	spec.group_b = static_cast<int>(cfg.get_int("estimator", "group_b", 1));
	if (cfg.has("estimator", "kappa1") || cfg.has("estimator", "gamma")) {
		mixhaz::GeneralizedSpec gen;
		gen.kappa1 = cfg.get_double("estimator", "kappa1", 0.0);
		const double g = cfg.get_double("estimator", "gamma", 1.0);
		gen.gamma.assign(std::max(0, dbar - 1), g);
		spec.generalized = gen;
	}
	return spec;
}

int effective_dbar(const mixhaz::Config& cfg, const CommonArgs& args, int data_default) {
	if (args.dbar > 0) return args.dbar;
	return static_cast<int>(cfg.get_int("estimator", "dbar", data_default));
}

// ---------------------------------------------------------------------------
// shared pipeline pieces
// ---------------------------------------------------------------------------

struct WeightedSample {
	std::vector<int> notice;
	std::vector<int> duration;
	std::vector<char> censored;
	std::vector<double> weights;
	int n_groups = 0;
	json propensity_info;  // null when no weighting ran
	std::optional<mixhaz::BalanceReport> balance;
};

// subset every per-row object by the keep mask so downstream indices align
mixhaz::PropensityFit subset_fit(const mixhaz::PropensityFit& fit, const std::vector<char>& keep,
                                 int n_keep) {
	mixhaz::PropensityFit sub = fit;
	sub.scores.resize(n_keep, fit.scores.cols());
	int r = 0;
	for (int i = 0; i < fit.scores.rows(); ++i)
		if (keep[i]) sub.scores.row(r++) = fit.scores.row(i);
	return sub;
}

WeightedSample weighted_sample(const mixhaz::Panel& panel, const mixhaz::Config& cfg) {
	WeightedSample out;
	out.n_groups = static_cast<int>(panel.notice_labels.size());
	const auto notice = panel.notice();
	const auto duration = panel.duration();
	const auto censored = panel.censored();

	const bool enabled =
	    cfg.get_bool("propensity", "enabled", !panel.covariate_names.empty());
	if (!enabled) {
		out.notice = notice;
		out.duration = duration;
		out.censored = censored;
		out.weights.assign(notice.size(), 1.0);
		return out;
	}
	require(!panel.covariate_names.empty(),
	        "propensity: weighting enabled but the input has no covariate columns");

	mixhaz::CovariateSpec cspec;
	cspec.include = cfg.get_string_list("propensity", "covariates", {});
	cspec.categorical = cfg.get_string_list("propensity", "categorical", {});
	const auto design = mixhaz::build_design(panel, cspec);
	const auto fit = mixhaz::fit_propensity(design, notice, out.n_groups);
	const double lo = cfg.get_double("propensity", "trim_lo", 0.1);
	const double hi = cfg.get_double("propensity", "trim_hi", 0.9);
	const auto keep = mixhaz::trim_by_score(fit, notice, lo, hi);
	const auto weights = mixhaz::ipw_weights(fit, notice);

	int n_keep = 0;
	for (char k : keep) n_keep += k;
	require(n_keep > 0, "propensity: trimming removed every record");
	mixhaz::DesignMatrix kept_design;
	kept_design.names = design.names;
	kept_design.X.resize(n_keep, design.X.cols());
	int r = 0;
	for (std::size_t i = 0; i < keep.size(); ++i) {
		if (!keep[i]) continue;
		kept_design.X.row(r++) = design.X.row(i);
		out.notice.push_back(notice[i]);
		out.duration.push_back(duration[i]);
		out.censored.push_back(censored[i]);
		out.weights.push_back(weights[i]);
	}
	const auto kept_fit = subset_fit(fit, keep, n_keep);
	out.balance =
	    mixhaz::balance_report(kept_design, out.notice, out.weights, kept_fit, out.n_groups);

	out.propensity_info = json{{"converged", fit.converged},
	                           {"loglik", fit.loglik},
	                           {"iterations", fit.iterations},
	                           {"columns", fit.colnames},
	                           {"trim_lo", lo},
	                           {"trim_hi", hi},
	                           {"n_trimmed", static_cast<int>(keep.size()) - n_keep},
	                           {"warnings", fit.warnings}};
	return out;
}

void write_balance_csv(const std::string& path, const mixhaz::BalanceReport& rep) {
	auto out = open_out(path);
	out << "covariate,group,mean_unweighted,mean_weighted,diff_unweighted,diff_weighted,"
	       "normalized_diff_unweighted,normalized_diff_weighted\n";
	for (const auto& row : rep.rows) {
		out << row.covariate << ',' << row.group << ','
		    << mixhaz::format_double(row.mean_unweighted) << ','
		    << mixhaz::format_double(row.mean_weighted) << ','
		    << mixhaz::format_double(row.diff_unweighted) << ','
		    << mixhaz::format_double(row.diff_weighted) << ','
		    << mixhaz::format_double(row.normalized_diff_unweighted) << ','
		    << mixhaz::format_double(row.normalized_diff_weighted) << "\n";
	}
}

json balance_json(const mixhaz::BalanceReport& rep) {
	json rows = json::array();
	for (const auto& r : rep.rows)
		rows.push_back(json{{"covariate", r.covariate},
		                    {"group", r.group},
		                    {"mean_unweighted", r.mean_unweighted},
		                    {"mean_weighted", r.mean_weighted},
		                    {"diff_unweighted", r.diff_unweighted},
		                    {"diff_weighted", r.diff_weighted},
		                    {"normalized_diff_unweighted", r.normalized_diff_unweighted},
		                    {"normalized_diff_weighted", r.normalized_diff_weighted}});
	json overlap = json::array();
	for (const auto& o : rep.overlap)
		overlap.push_back(json{{"group", o.group},
		                       {"category", o.category},
		                       {"min", o.min},
		                       {"mean", o.mean},
		                       {"max", o.max}});
	return json{{"rows", rows}, {"overlap", overlap}};
}

json matrix_json(const Eigen::MatrixXd& m) {
	json rows = json::array();
	for (int i = 0; i < m.rows(); ++i) {
		json row = json::array();
		for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
		rows.push_back(row);
	}
	return rows;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const CommonArgs& args) {
	const auto cfg = mixhaz::Config::parse_file(args.config_path);
	const int n = static_cast<int>(cfg.get_int("simlab", "n"));
	require(n > 0, "simlab: n must be positive");
	const std::string source = cfg.get_string("simlab", "source", "dgp");

	mixhaz::Panel panel;
	json extra{{"n", n}, {"source", source}};
	if (source == "dgp") {
		const auto dgp = dgp_from(cfg, args.dbar);
		panel = mixhaz::simulate(dgp, n, args.seed);
		mixhaz::apply_censoring(panel, dgp.dbar, dgp.censoring, args.seed, 0);
		extra["dbar"] = dgp.dbar;
	} else if (source == "search") {
		const auto base = search_config_from(cfg);
		mixhaz::SearchPanelSpec spec;
		spec.group_shares = cfg.get_double_list("search_model", "group_shares", spec.group_shares);
		spec.delta1 = cfg.get_double_list("search_model", "delta1", spec.delta1);
		spec.types.nu = cfg.get_double_list("search_model", "nu", spec.types.nu);
		spec.types.prob = cfg.get_double_list("search_model", "type_prob", spec.types.prob);
		spec.dbar = args.dbar > 0 ? args.dbar
		                          : static_cast<int>(cfg.get_int("simlab", "dbar", spec.dbar));
		panel = mixhaz::simulate_search_panel(base, spec, n, args.seed);
		extra["dbar"] = spec.dbar;
	} else {
		throw std::invalid_argument("simlab: source must be dgp or search");
	}

	const std::string records = out_path(args, "records.csv");
	{
		auto out = open_out(records);
		mixhaz::write_panel_csv(out, panel);
	}
	auto info = base_manifest("simulate", args, cfg);
	info.outputs["records"] = records;
	info.extra = extra;
	mixhaz::write_manifest(out_path(args, "manifest.json"), info);
	return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

void write_hazards_csv(const std::string& path, const mixhaz::ExitRateTable& tab,
                       const std::vector<std::string>& labels, const mixhaz::GmmResult& fit) {
	auto out = open_out(path);
	out << "notice,d,observed,structural,structural_se\n";
	for (int l = 0; l < tab.n_groups; ++l) {
		for (int d = 1; d <= tab.dbar; ++d) {
			out << labels[l] << ',' << d << ',';
			if (tab.estimable(l, d)) out << mixhaz::format_double(tab.hazard(l, d));
			out << ',' << mixhaz::format_double(fit.psi_paths[l][d - 1]) << ','
			    << mixhaz::format_double(fit.psi_path_se[l][d - 1]) << "\n";
		}
	}
}

json gmm_json(const mixhaz::GmmResult& fit, const std::vector<std::string>& labels,
              const mixhaz::EstimationSpec& spec) {
	json params = json::array();
	for (std::size_t j = 0; j < fit.param_names.size(); ++j)
		params.push_back(json{{"name", fit.param_names[j]},
		                      {"estimate", fit.theta[static_cast<Eigen::Index>(j)]},
		                      {"se", fit.se[j]}});
	json j{{"n", fit.n},
	       {"n_moments", fit.n_moments},
	       {"dbar", spec.dbar},
	       {"tail", spec.tail == mixhaz::TailKind::Nonparametric ? "nonparametric"
	                                                             : "loglogistic"},
	       {"two_step", spec.two_step},
	       {"notice_labels", labels},
	       {"params", params},
	       {"vcov", matrix_json(fit.vcov)},
	       {"moments", fit.params.moments},
	       {"psi_paths", fit.psi_paths},
	       {"psi_path_se", fit.psi_path_se},
	       {"objective", fit.objective},
	       {"j_stat", fit.j_stat},
	       {"j_df", fit.j_df},
	       {"j_pvalue", fit.j_pvalue},
	       {"converged", fit.converged},
	       {"warnings", fit.warnings}};
	if (spec.generalized) {
		j["kappa1"] = spec.generalized->kappa1;
		j["gamma"] = spec.generalized->gamma;
	}
	return j;
}

int cmd_estimate(const CommonArgs& args) {
	const auto cfg = mixhaz::Config::parse_file(args.config_path);
	const std::string input = !args.input_path.empty()
	                              ? args.input_path
	                              : cfg.get_string("estimator", "input");
	const int bin_weeks = args.bin_weeks > 0
	                          ? args.bin_weeks
	                          : static_cast<int>(cfg.get_int("estimator", "bin_weeks", 0));
	const auto levels = cfg.get_string_list("estimator", "notice_levels", {});
	const auto panel = mixhaz::read_panel_csv_file(input, levels, bin_weeks);
	require(panel.notice_labels.size() >= 2, "estimate: need at least two notice groups");

	const int dbar = effective_dbar(cfg, args, 4);
	const auto spec = estimation_spec_from(cfg, dbar);
	auto sample = weighted_sample(panel, cfg);

	const auto tab = mixhaz::empirical_exit_rates(sample.notice, sample.duration, sample.censored,
	                                              sample.weights, sample.n_groups, dbar);
	auto fit = mixhaz::gmm_estimate(sample.notice, sample.duration, sample.censored,
	                                sample.weights, sample.n_groups, spec);

	json result = gmm_json(fit, panel.notice_labels, spec);
	result["input"] = input;
	if (!sample.propensity_info.is_null()) result["propensity"] = sample.propensity_info;
	const int n_boot = static_cast<int>(cfg.get_int("estimator", "bootstrap", 0));
	if (n_boot > 0)
		result["bootstrap_se"] =
		    mixhaz::bootstrap_se(sample.notice, sample.duration, sample.censored, sample.weights,
		                         sample.n_groups, spec, n_boot, args.seed, args.threads);

	const std::string estimates = out_path(args, "estimates.json");
	{
		auto out = open_out(estimates);
		out << result.dump(2) << "\n";
	}
	const std::string hazards = out_path(args, "hazards.csv");
	write_hazards_csv(hazards, tab, panel.notice_labels, fit);
	const std::string balance = out_path(args, "balance.csv");
	write_balance_csv(balance, sample.balance ? *sample.balance : mixhaz::BalanceReport{});

	auto info = base_manifest("estimate", args, cfg);
	info.inputs[input] = mixhaz::hex64(mixhaz::fnv1a_file(input));
	info.outputs["estimates"] = estimates;
	info.outputs["hazards"] = hazards;
	info.outputs["balance"] = balance;
	info.extra = json{{"n", fit.n}, {"dbar", dbar}};
	mixhaz::write_manifest(out_path(args, "manifest.json"), info);
	return 0;
}

// ---------------------------------------------------------------------------
// balance
// ---------------------------------------------------------------------------

int cmd_balance(const CommonArgs& args) {
	const auto cfg = mixhaz::Config::parse_file(args.config_path);
	const std::string input = !args.input_path.empty()
	                              ? args.input_path
	                              : cfg.get_string("estimator", "input");
	const int bin_weeks = args.bin_weeks > 0
	                          ? args.bin_weeks
	                          : static_cast<int>(cfg.get_int("estimator", "bin_weeks", 0));
	const auto levels = cfg.get_string_list("estimator", "notice_levels", {});
	const auto panel = mixhaz::read_panel_csv_file(input, levels, bin_weeks);
	require(!panel.covariate_names.empty(), "balance: input has no covariate columns");
	require(panel.notice_labels.size() >= 2, "balance: need at least two notice groups");

	auto sample = weighted_sample(panel, cfg);
	require(sample.balance.has_value(), "balance: propensity weighting is disabled in config");

	const std::string csv = out_path(args, "balance.csv");
	write_balance_csv(csv, *sample.balance);
	const std::string js = out_path(args, "balance.json");
	{
		auto out = open_out(js);
		json j = balance_json(*sample.balance);
		j["propensity"] = sample.propensity_info;
		out << j.dump(2) << "\n";
	}
	auto info = base_manifest("balance", args, cfg);
	info.inputs[input] = mixhaz::hex64(mixhaz::fnv1a_file(input));
	info.outputs["balance_csv"] = csv;
	info.outputs["balance_json"] = js;
	mixhaz::write_manifest(out_path(args, "manifest.json"), info);
	return 0;
}

// ---------------------------------------------------------------------------
// identify
// ---------------------------------------------------------------------------

bool looks_like_table(const std::string& path) {
	std::ifstream in(path);
	if (!in) throw std::invalid_argument("cannot open input file: " + path);
	std::string header;
	std::getline(in, header);
	return header.rfind("notice,d,", 0) == 0;
}

mixhaz::ExitRateTable truncate_table(const mixhaz::ExitRateTable& tab, int dbar) {
	if (dbar >= tab.dbar) return tab;
	mixhaz::ExitRateTable out(tab.n_groups, dbar);
	for (int l = 0; l < tab.n_groups; ++l)
		for (int d = 1; d <= dbar; ++d) {
			out.numerator[l][d - 1] = tab.numerator[l][d - 1];
			out.denominator[l][d - 1] = tab.denominator[l][d - 1];
		}
	return out;
}

mixhaz::GridExercise exercise_from(const std::string& name) {
	if (name == "mean-shift") return mixhaz::GridExercise::MeanShift;
	if (name == "tail-ratio") return mixhaz::GridExercise::TailRatio;
	if (name == "joint") return mixhaz::GridExercise::Joint;
	throw std::invalid_argument("estimator: exercise must be mean-shift, tail-ratio, or joint");
}

std::vector<double> grid_from(const mixhaz::Config& cfg, const std::string& key,
                              std::vector<double> fallback) {
	const auto v = cfg.get_double_list("estimator", key, fallback);
	require(v.size() == 3, "estimator: " + key + " must be lo,hi,step");
	require(v[2] > 0 && v[1] >= v[0], "estimator: " + key + " must satisfy lo <= hi, step > 0");
	return mixhaz::grid_points(v[0], v[1], v[2]);
}

int cmd_identify(const CommonArgs& args) {
	const auto cfg = mixhaz::Config::parse_file(args.config_path);
	const std::string input = !args.input_path.empty()
	                              ? args.input_path
	                              : cfg.get_string("estimator", "input");
	std::string kind = cfg.get_string("estimator", "input_kind", "auto");
	if (kind == "auto") kind = looks_like_table(input) ? "table" : "records";
	require(kind == "table" || kind == "records",
	        "estimator: input_kind must be auto, table, or records");

	mixhaz::ExitRateTable tab;
	std::vector<std::string> labels;
	mixhaz::Panel panel;
	int dbar = 0;
	if (kind == "table") {
		tab = mixhaz::read_exit_rate_csv_file(input, &labels);
		dbar = effective_dbar(cfg, args, tab.dbar);
		require(dbar <= tab.dbar, "identify: dbar exceeds the horizon of the input table");
		tab = truncate_table(tab, dbar);
	} else {
		const int bin_weeks = args.bin_weeks > 0
		                          ? args.bin_weeks
		                          : static_cast<int>(cfg.get_int("estimator", "bin_weeks", 0));
		const auto levels = cfg.get_string_list("estimator", "notice_levels", {});
		panel = mixhaz::read_panel_csv_file(input, levels, bin_weeks);
		labels = panel.notice_labels;
		dbar = effective_dbar(cfg, args, 4);
		const auto notice = panel.notice();
		std::vector<double> unit(notice.size(), 1.0);
		tab = mixhaz::empirical_exit_rates(notice, panel.duration(), panel.censored(), unit,
		                                   static_cast<int>(labels.size()), dbar);
	}
	require(tab.n_groups >= 2, "identify: need at least two notice groups");

	const int group_a = static_cast<int>(cfg.get_int("estimator", "group_a", 0));
	const int group_b = static_cast<int>(cfg.get_int("estimator", "group_b", 1));
	const std::string exercise = cfg.get_string("estimator", "exercise", "none");

	json result{{"input", input}, {"dbar", dbar}, {"notice_labels", labels}};
	if (cfg.has("estimator", "kappa1") || cfg.has("estimator", "gamma")) {
		mixhaz::GeneralizedSpec gen;
		gen.kappa1 = cfg.get_double("estimator", "kappa1", 0.0);
		const double g = cfg.get_double("estimator", "gamma", 1.0);
		gen.gamma.assign(std::max(0, dbar - 1), g);
		const auto res = mixhaz::generalized_identify(tab, gen, group_a, group_b);
		result["mode"] = "generalized";
		result["kappa1"] = gen.kappa1;
		result["gamma"] = g;
		result["psi_a"] = res.psi_a;
		result["psi_b"] = res.psi_b;
		result["mu_a"] = res.mu_a;
		result["mu_b"] = res.mu_b;
		result["kappa_used"] = res.kappa_used;
		result["warnings"] = res.warnings;
	} else {
		const auto res = mixhaz::closed_form_identify(tab, group_a, group_b);
		result["mode"] = "closed_form";
		result["psi1"] = res.params.psi1;
		result["psi_tail"] = res.params.psi_tail;
		result["moments"] = res.params.moments;
		result["warnings"] = res.warnings;
	}

	if (exercise != "none") {
		require(kind == "records", "identify: grid exercises require records input");
		const auto ex = exercise_from(exercise);
		const auto kappa_grid = grid_from(cfg, "kappa_grid", {-0.1, 0.1, 0.01});
		const auto gamma_grid = grid_from(cfg, "gamma_grid", {0.9, 1.1, 0.01});
		auto spec = estimation_spec_from(cfg, dbar);
		spec.generalized.reset();
		spec.group_a = group_a;
		spec.group_b = group_b;
		const auto notice = panel.notice();
		std::vector<double> unit(notice.size(), 1.0);
		const auto grid = mixhaz::residual_grid(notice, panel.duration(), panel.censored(), unit,
		                                        static_cast<int>(labels.size()), spec, ex,
		                                        kappa_grid, gamma_grid, args.threads);
		const std::string grid_csv = out_path(args, "grid.csv");
		{
			auto out = open_out(grid_csv);
			out << "kappa1,gamma,objective,converged,is_argmin\n";
			for (std::size_t i = 0; i < grid.points.size(); ++i) {
				const auto& p = grid.points[i];
				out << mixhaz::format_double(p.kappa1) << ',' << mixhaz::format_double(p.gamma)
				    << ',' << mixhaz::format_double(p.objective) << ','
				    << (p.fit.converged ? 1 : 0) << ','
				    << (static_cast<int>(i) == grid.argmin ? 1 : 0) << "\n";
			}
		}
		const auto& best = grid.points[grid.argmin];
		result["exercise"] = exercise;
		result["grid_csv"] = grid_csv;
		result["argmin"] = json{{"kappa1", best.kappa1},
		                        {"gamma", best.gamma},
		                        {"objective", best.objective}};
	}

	const std::string js = out_path(args, "identify.json");
	{
		auto out = open_out(js);
		out << result.dump(2) << "\n";
	}
	auto info = base_manifest("identify", args, cfg);
	info.inputs[input] = mixhaz::hex64(mixhaz::fnv1a_file(input));
	info.outputs["identify"] = js;
	info.extra = json{{"dbar", dbar}, {"mode", result["mode"]}};
	mixhaz::write_manifest(out_path(args, "manifest.json"), info);
	return 0;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> read_targets_csv(const std::string& path, int dbar,
                                                  std::vector<std::string>* labels_out) {
	std::ifstream in(path);
	if (!in) throw std::invalid_argument("cannot open targets file: " + path);
	std::string line;
	if (!std::getline(in, line)) throw std::invalid_argument("targets: empty file");
	require(line == "notice,d,value" || line == "notice,d,value\r",
	        "targets: expected header notice,d,value");
	std::vector<std::string> labels;
	std::vector<std::vector<double>> vals;
	std::size_t row = 1;
	while (std::getline(in, line)) {
		++row;
		if (line.empty() || line == "\r") continue;
		std::istringstream ss(line);
		std::string g, ds, vs;
		if (!std::getline(ss, g, ',') || !std::getline(ss, ds, ',') || !std::getline(ss, vs))
			throw std::invalid_argument("targets: expected 3 fields at row " +
			                            std::to_string(row));
		int gi = -1;
		for (std::size_t i = 0; i < labels.size(); ++i)
			if (labels[i] == g) gi = static_cast<int>(i);
		if (gi < 0) {
			gi = static_cast<int>(labels.size());
			labels.push_back(g);
			vals.emplace_back();
		}
		int d = 0;
		double v = 0.0;
		try {
			d = std::stoi(ds);
			v = std::stod(vs);
		} catch (const std::exception&) {
			throw std::invalid_argument("targets: d and value must be numeric at row " +
			                            std::to_string(row));
		}
		require(d == static_cast<int>(vals[gi].size()) + 1,
		        "targets: d must run 1.." + std::to_string(dbar) + " in order per group");
		vals[gi].push_back(v);
	}
	for (std::size_t g = 0; g < vals.size(); ++g)
		require(static_cast<int>(vals[g].size()) == dbar,
		        "targets: group '" + labels[g] + "' must supply exactly " +
		            std::to_string(dbar) + " values");
	if (labels_out) *labels_out = labels;
	return vals;
}

struct GroupPaths {
	std::vector<double> observed, structural, average_type, offer_arrival, average_effort;
};

GroupPaths group_paths(const mixhaz::SearchConfig& cfg, const mixhaz::TypeMixture& mix,
                       int horizon) {
	const std::size_t T = mix.nu.size();
	std::vector<std::vector<double>> hz(T), ef(T);
	for (std::size_t t = 0; t < T; ++t) {
		const auto sol = mixhaz::solve_type(cfg, mix.nu[t], horizon);
		hz[t] = sol.hazard;
		ef[t] = sol.effort;
	}
	GroupPaths out;
	std::vector<double> surv(T, 1.0);
	for (int d = 1; d <= horizon; ++d) {
		double den = 0.0, num_h = 0.0, num_s = 0.0, num_nu = 0.0, str = 0.0;
		for (std::size_t t = 0; t < T; ++t) {
			const double w = mix.prob[t] * surv[t];
			den += w;
			num_h += w * hz[t][d - 1];
			num_s += w * ef[t][d - 1];
			num_nu += w * mix.nu[t];
			str += mix.prob[t] * hz[t][d - 1];
		}
		out.observed.push_back(num_h / den);
		out.structural.push_back(str);
		out.average_type.push_back(num_nu / den);
		out.offer_arrival.push_back(num_h / den);
		out.average_effort.push_back(num_s / den);
		for (std::size_t t = 0; t < T; ++t) surv[t] *= 1.0 - hz[t][d - 1];
	}
	return out;
}

json calibration_json(const mixhaz::CalibrationResult& res, const mixhaz::CalibrationSpec& spec,
                      const std::vector<std::vector<double>>& targets) {
	json tgt = json::array();
	for (std::size_t j = 0; j < res.target_names.size(); ++j) {
		const std::size_t g = j / targets[0].size();
		const std::size_t d = j % targets[0].size();
		tgt.push_back(json{{"name", res.target_names[j]},
		                   {"target", targets[g][d]},
		                   {"residual", res.residuals[j]}});
	}
	json j{{"mode", spec.two_type ? "two-type" : "single-type"},
	       {"delta", res.config.delta},
	       {"delta1", spec.delta1},
	       {"delta_tail", res.delta_tail},
	       {"targets", tgt},
	       {"max_abs_residual", res.max_abs_residual},
	       {"converged", res.converged}};
	if (spec.two_type) {
		j["nu_high"] = 1.0;
		j["nu_low"] = res.nu_low;
		j["pi_high"] = res.pi_high;
	} else {
		j["nu"] = res.nu;
	}
	return j;
}

mixhaz::TypeMixture mixture_of(const mixhaz::CalibrationResult& res, bool two_type) {
	if (two_type) return {{1.0, res.nu_low}, {res.pi_high, 1.0 - res.pi_high}};
	return {{res.nu}, {1.0}};
}

int cmd_calibrate(const CommonArgs& args) {
	const auto cfg = mixhaz::Config::parse_file(args.config_path);
	const auto base = search_config_from(cfg);
	mixhaz::CalibrationSpec cspec;
	cspec.two_type = cfg.get_bool("calibrate", "two_type", false);
	cspec.delta1 = cfg.get_double_list("calibrate", "delta1", cspec.delta1);
	cspec.dbar = args.dbar > 0 ? args.dbar
	                           : static_cast<int>(cfg.get_int("calibrate", "dbar", cspec.dbar));
	cspec.n_restarts = static_cast<int>(cfg.get_int("calibrate", "restarts", cspec.n_restarts));
	cspec.fail_above = cfg.get_double("calibrate", "fail_above", cspec.fail_above);

	const std::string targets_path = !args.input_path.empty()
	                                     ? args.input_path
	                                     : cfg.get_string("calibrate", "targets");
	std::vector<std::string> labels;
	const auto targets = read_targets_csv(targets_path, cspec.dbar, &labels);
	require(targets.size() == cspec.delta1.size(),
	        "calibrate: targets must cover one notice group per delta1 entry");

	const auto res = mixhaz::calibrate_search_model(base, cspec, targets, args.seed);

	json result = calibration_json(res, cspec, targets);
	std::optional<mixhaz::CalibrationResult> single;
	if (cspec.two_type) {
		auto sspec = cspec;
		sspec.two_type = false;
		single = mixhaz::calibrate_search_model(base, sspec, targets, args.seed);
		result["single_type_comparison"] = calibration_json(*single, sspec, targets);
	}

	const std::string paths_csv = out_path(args, "paths.csv");
	{
		auto out = open_out(paths_csv);
		out << "calibration,notice,d,observed,structural,average_type,offer_arrival,"
		       "average_effort\n";
		auto emit = [&](const std::string& label, const mixhaz::CalibrationResult& r,
		                bool two_type) {
			const int horizon = r.config.stationary_from() + 2;
			const auto mix = mixture_of(r, two_type);
			for (std::size_t g = 0; g < cspec.delta1.size(); ++g) {
				const auto gp =
				    group_paths(mixhaz::with_delta1(r.config, cspec.delta1[g]), mix, horizon);
				for (int d = 1; d <= horizon; ++d)
					out << label << ',' << labels[g] << ',' << d << ','
					    << mixhaz::format_double(gp.observed[d - 1]) << ','
					    << mixhaz::format_double(gp.structural[d - 1]) << ','
					    << mixhaz::format_double(gp.average_type[d - 1]) << ','
					    << mixhaz::format_double(gp.offer_arrival[d - 1]) << ','
					    << mixhaz::format_double(gp.average_effort[d - 1]) << "\n";
			}
		};
		emit(cspec.two_type ? "two-type" : "single-type", res, cspec.two_type);
		if (single) emit("single-type", *single, false);
	}

	const std::string js = out_path(args, "calibration.json");
	{
		auto out = open_out(js);
		out << result.dump(2) << "\n";
	}
	auto info = base_manifest("calibrate", args, cfg);
	info.inputs[targets_path] = mixhaz::hex64(mixhaz::fnv1a_file(targets_path));
	info.outputs["calibration"] = js;
	info.outputs["paths"] = paths_csv;
	info.extra = json{{"dbar", cspec.dbar}, {"two_type", cspec.two_type}};
	mixhaz::write_manifest(out_path(args, "manifest.json"), info);

	if (!res.converged) {
		std::cerr << "error: calibration failed, max |residual| = " << res.max_abs_residual
		          << " (report written to " << js << ")\n";
		return 3;
	}
	return 0;
}

}  // namespace

int main(int argc, char** argv) {
	CLI::App app{"mixed-hazard duration model toolkit"};
	app.require_subcommand(1);
	CommonArgs args;
	auto* simulate = app.add_subcommand("simulate", "draw a synthetic duration panel");
	auto* estimate = app.add_subcommand("estimate", "two-step GMM fit from records");
	auto* identify = app.add_subcommand("identify", "closed-form/generalized identification");
	auto* calibrate = app.add_subcommand("calibrate", "fit the search model to hazard targets");
	auto* balance = app.add_subcommand("balance", "covariate balance before/after weighting");
	add_common(simulate, &args, false);
	add_common(estimate, &args, true);
	add_common(identify, &args, true);
	add_common(calibrate, &args, true);
	add_common(balance, &args, true);

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e);
		return code == 0 ? 0 : 2;
	}

	try {
		if (simulate->parsed()) return cmd_simulate(args);
		if (estimate->parsed()) return cmd_estimate(args);
		if (identify->parsed()) return cmd_identify(args);
		if (calibrate->parsed()) return cmd_calibrate(args);
		if (balance->parsed()) return cmd_balance(args);
	} catch (const std::invalid_argument& e) {
		std::cerr << "error: " << e.what() << "\n";
		return 2;
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << "\n";
		return 3;
	}
	return 0;
}
