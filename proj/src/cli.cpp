#include "grpo_prm/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "grpo_prm/equivalence.hpp"
#include "grpo_prm/jsonl_io.hpp"
#include "grpo_prm/metrics.hpp"
#include "grpo_prm/process_tree.hpp"
#include "grpo_prm/sim_config.hpp"
#include "grpo_prm/toy_sim.hpp"
#include "grpo_prm/tree_export.hpp"

namespace grpo_prm {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::string std_mode = "sample";
  double beta = 0.04;
  double eps = kDefaultEpsilon;
  double tol = 1e-9;
  bool strict = false;
  bool use_ratio = false;

  AnalysisConfig analysis() const {
    AnalysisConfig c;
    c.objective.beta = beta;
    c.objective.assume_unit_ratio = !use_ratio;
    c.std_mode = parse_std_mode(std_mode);
    c.epsilon = eps;
    return c;
  }
};

// Input stream for a path; "-" is stdin.
class Input {
 public:
  Input(const std::string& path, std::istream& stdin_stream) {
    if (path == "-") {
      stream_ = &stdin_stream;
    } else {
      file_ = std::make_unique<std::ifstream>(path);
      if (!*file_) throw UsageError("cannot open '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::istream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ifstream> file_;
  std::istream* stream_ = nullptr;
};

// Output to a file when a path is given, otherwise to the fallback stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw UsageError("cannot write '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

void report_skipped(const GroupReader& reader, std::ostream& err) {
  if (reader.error_count() == 0) return;
  err << "skipped " << reader.error_count() << " malformed record(s)\n";
  for (const auto& e : reader.errors()) err << "  " << e << '\n';
}

int cmd_analyze(const GlobalFlags& flags, const std::string& input, const std::string& csv_path,
                const std::string& summary_path, std::ostream& out, std::ostream& err) {
  const AnalysisConfig config = flags.analysis();
  Input in(input, std::cin);
  GroupReader reader(in.get(), flags.strict);
  Output csv(csv_path, out);
  csv.get() << analysis_csv_header();
  MetricsSummary summary;
  std::size_t unevaluated = 0;
  std::string note;
  while (auto group = reader.next()) {
    const ProcessTree tree = build_process_tree(*group);
    const GroupMetrics m = group_metrics(tree, *group);
    std::string row_note;
    csv.get() << analysis_csv_row(*group, m, config, &row_note);
    if (!row_note.empty()) {
      ++unevaluated;
      note = row_note;
    }
    summary.add(m);
  }
  report_skipped(reader, err);
  if (unevaluated > 0) {
    err << "objective cells left blank for " << unevaluated << " group(s): " << note << '\n';
  }
  const auto& totals = summary.totals();
  if (totals.zero_length_trajectories > 0) {
    err << totals.zero_length_trajectories
        << " zero-length completion(s); their intermediate proportion is reported as 0\n";
  }
  if (!summary_path.empty()) {
    Output s(summary_path, out);
    s.get() << dump_json(nlohmann::ordered_json(summary.to_json())) << '\n';
  }
  err << "groups=" << totals.groups << " trivial_fraction="
      << (totals.trivial_fraction() ? format_double(*totals.trivial_fraction()) : "null") << '\n';
  return 0;
}

int cmd_tree(const GlobalFlags& flags, const std::string& input, const std::optional<std::string>& group_id,
             const std::optional<std::size_t>& index, const std::string& format, std::size_t label_tokens,
             const std::string& out_path, std::ostream& out) {
  if (group_id.has_value() == index.has_value()) throw UsageError("give exactly one of --group-id or --index");
  const ExportFormat fmt = parse_export_format(format);
  Input in(input, std::cin);
  GroupReader reader(in.get(), flags.strict);
  std::size_t at = 0;
  while (auto group = reader.next()) {
    const bool hit = group_id ? group->query_id == *group_id : at == *index;
    ++at;
    if (!hit) continue;
    const ProcessTree tree = build_process_tree(*group);
    Output o(out_path, out);
    o.get() << export_tree(tree, *group, fmt, ExportOptions{label_tokens});
    return 0;
  }
  throw UsageError(group_id ? "no group with query_id '" + *group_id + "'"
                            : "no group at index " + std::to_string(*index));
}

int cmd_verify(const GlobalFlags& flags, const std::string& input, std::optional<std::size_t> random,
               std::uint64_t seed, const GenParams& gen_base, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  const AnalysisConfig config = flags.analysis();
  VerificationReport report;
  if (random.has_value() == !input.empty()) throw UsageError("give either an input file or --random N");
  if (random) {
    SuiteParams params;
    params.gen = gen_base;
    params.gen.seed = seed;
    params.gen.logp_mode = LogpMode::random_consistent;
    params.groups = *random;
    params.options = standard_option_matrix(flags.beta, config.std_mode, flags.eps, flags.tol);
    report = run_random_suite(params);
  } else {
    Input in(input, std::cin);
    GroupReader reader(in.get(), flags.strict);
    VerifyOptions opt;
    opt.objective = config.objective;
    opt.std_mode = config.std_mode;
    opt.epsilon = config.epsilon;
    opt.equality_tol = flags.tol;
    VerifyOptions reduced = opt;
    reduced.objective.beta = 0.0;
    reduced.objective.assume_unit_ratio = true;
    std::size_t index = 0, reduced_count = 0;
    while (auto group = reader.next()) {
      // Groups without the log-probs the flags need are checked with P == 1 and beta == 0.
      bool full = true;
      try {
        ratio_terms(*group, opt.objective);
        kl_terms(*group, opt.objective);
      } catch (const ConfigError&) {
        full = false;
        ++reduced_count;
      }
      const VerifyOptions& use = full ? opt : reduced;
      report.merge(verify_group(*group, std::span(&use, 1), {0, index++}));
    }
    report_skipped(reader, err);
    if (reduced_count > 0) {
      err << reduced_count << " group(s) lack log-probs for the requested ratio/KL terms; "
          << "checked with P == 1 and beta == 0\n";
    }
  }
  Output o(out_path, out);
  o.get() << dump_json(nlohmann::ordered_json(report.to_json())) << '\n';
  if (!report.ok()) {
    err << report.failures.size() << " check(s) failed\n";
    return 1;
  }
  return 0;
}

int cmd_weights(const GlobalFlags& flags, const std::string& input, const std::string& objective,
                const std::string& out_path, std::ostream& out, std::ostream& err) {
  const AnalysisConfig config = flags.analysis();
  const ToyObjective obj = parse_toy_objective(objective);
  Input in(input, std::cin);
  GroupReader reader(in.get(), flags.strict);
  Output o(out_path, out);
  std::size_t unevaluated = 0;
  std::string note;
  while (auto group = reader.next()) {
    std::string rec_note;
    o.get() << dump_json(weight_record(*group, obj, config, &rec_note)) << '\n';
    if (!rec_note.empty()) {
      ++unevaluated;
      note = rec_note;
    }
  }
  report_skipped(reader, err);
  if (unevaluated > 0) err << "objective_value is null for " << unevaluated << " group(s): " << note << '\n';
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, std::ostream& out) {
  Input in(config_path, std::cin);
  SimSetup setup = parse_sim_config(in.get());
  const auto records = run_experiment(setup.config, setup.policy, setup.env);
  Output o(out_path, out);
  o.get() << experiment_csv(records);
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& steps_csv,
               const std::string& out_path, std::ostream& out) {
  MetricsSummary merged;
  for (const auto& path : inputs) {
    Input in(path, std::cin);
    std::stringstream buf;
    buf << in.get().rdbuf();
    try {
      merged.merge(MetricsSummary::from_json(nlohmann::json::parse(buf.str())));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("'" + path + "' is not a summary: " + e.what());
    }
  }
  Output o(out_path, out);
  o.get() << dump_json(nlohmann::ordered_json(merged.to_json())) << '\n';
  if (!steps_csv.empty()) {
    Output s(steps_csv, out);
    s.get() << merged.steps_csv();
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Process-set analysis of grouped policy-optimization rollouts", "grpo-prm"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--std", flags.std_mode, "Reward std estimator")
      ->check(CLI::IsMember({"sample", "population"}))
      ->capture_default_str();
  app.add_option("--beta", flags.beta, "KL coefficient")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--eps", flags.eps, "Std floor below which advantages are 0")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--tol", flags.tol, "Relative tolerance for the objective equality check")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("--strict", flags.strict, "Abort on the first malformed input line");
  app.add_flag("--use-ratio", flags.use_ratio, "Use exp(logp - logp_old) instead of P == 1");

  std::string input, csv_path, summary_path, out_path;

  auto* analyze = app.add_subcommand("analyze", "Per-group metrics CSV and aggregate summary");
  analyze->add_option("input", input, "Group JSONL ('-' for stdin)")->required();
  analyze->add_option("--csv", csv_path, "Write the CSV here instead of stdout");
  analyze->add_option("--summary", summary_path, "Write the aggregate summary JSON here");

  std::optional<std::string> group_id;
  std::optional<std::size_t> group_index;
  std::string format = "dot";
  std::size_t label_tokens = 8;
  auto* tree = app.add_subcommand("tree", "Export the process-set tree of one group");
  tree->add_option("input", input, "Group JSONL ('-' for stdin)")->required();
  tree->add_option("--group-id", group_id, "Select by query_id");
  tree->add_option("--index", group_index, "Select by 0-based record index");
  tree->add_option("--format", format, "dot or json")->check(CLI::IsMember({"dot", "json"}))->capture_default_str();
  tree->add_option("--max-label-tokens", label_tokens, "Span tokens shown per node")->capture_default_str();
  tree->add_option("--out", out_path, "Write here instead of stdout");

  std::optional<std::size_t> random_groups;
  std::uint64_t seed = 0;
  GenParams gen;
  auto* verify = app.add_subcommand("verify", "Check the objective equality and its identities");
  verify->add_option("input", input, "Group JSONL ('-' for stdin)");
  verify->add_option("--random", random_groups, "Check N generated groups instead of a file");
  verify->add_option("--seed", seed, "Generator seed")->capture_default_str();
  verify->add_option("--k-min", gen.k_min, "Smallest generated group")->capture_default_str();
  verify->add_option("--k-max", gen.k_max, "Largest generated group")->capture_default_str();
  verify->add_option("--len-max", gen.length_max, "Longest generated completion")->capture_default_str();
  verify->add_option("--vocab", gen.vocab_size, "Generator vocabulary size")->capture_default_str();
  verify->add_option("--fork-bias", gen.fork_bias, "Probability of copying a prefix")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  verify->add_option("--out", out_path, "Write the report here instead of stdout");

  std::string objective = "grpo";
  auto* weights = app.add_subcommand("weights", "Emit per-token advantages and weights as JSONL");
  weights->add_option("input", input, "Group JSONL ('-' for stdin)")->required();
  weights->add_option("--objective", objective, "grpo or lambda")
      ->check(CLI::IsMember({"grpo", "lambda"}))
      ->capture_default_str();
  weights->add_option("--out", out_path, "Write here instead of stdout");

  std::string config_path;
  auto* simulate = app.add_subcommand("simulate", "Run the toy policy-gradient experiment");
  simulate->add_option("config", config_path, "Key = value config file")->required();
  simulate->add_option("--out", out_path, "Write the CSV here instead of stdout");

  std::vector<std::string> summaries;
  std::string steps_csv;
  auto* report = app.add_subcommand("report", "Merge aggregate summaries");
  report->add_option("summaries", summaries, "Summary JSON files")->required();
  report->add_option("--steps-csv", steps_csv, "Write the per-step series CSV here");
  report->add_option("--out", out_path, "Write the merged summary here instead of stdout");

  for (auto* sub : {analyze, tree, verify, weights, simulate, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(flags, input, csv_path, summary_path, out, err);
    if (tree->parsed()) {
      return cmd_tree(flags, input, group_id, group_index, format, label_tokens, out_path, out);
    }
    if (verify->parsed()) return cmd_verify(flags, input, random_groups, seed, gen, out_path, out, err);
    if (weights->parsed()) return cmd_weights(flags, input, objective, out_path, out, err);
    if (simulate->parsed()) return cmd_simulate(config_path, out_path, out);
    if (report->parsed()) return cmd_report(summaries, steps_csv, out_path, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const SimConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace grpo_prm
