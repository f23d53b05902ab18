// Command-line front end. Every verb reads a JSON run config; flags given
// on the command line override the matching config keys.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "comicvox/adapter.hpp"
#include "comicvox/error.hpp"
#include "comicvox/pipeline.hpp"

namespace {

using namespace comicvox;

struct Overrides {
  std::string config;
  std::optional<std::string> setting;
  std::optional<std::string> output;
  std::optional<int> pages;
  std::vector<std::string> titles;
  std::optional<int> test_titles;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> llm_backend;
  std::optional<std::string> cassette;
  std::optional<std::string> direction;
  std::optional<std::string> split_mode;
  std::optional<std::string> eval_scope;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--setting", o.setting, "Model variant: A, B or C");
  cmd->add_option("-o,--output", o.output, "Output directory");
  cmd->add_option("--pages", o.pages, "Pages per title (0 = all)");
  cmd->add_option("--titles", o.titles, "Restrict to these title ids");
  cmd->add_option("--test-titles", o.test_titles, "Number of test titles (0 = all)");
  cmd->add_option("--workers", o.workers, "Titles processed in parallel");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--llm-backend", o.llm_backend, "cassette, scripted, live or record");
  cmd->add_option("--cassette", o.cassette, "Cassette file for replay or recording");
  cmd->add_option("--direction", o.direction, "Reading direction: rtl or ltr");
  cmd->add_option("--split-mode", o.split_mode, "two_page, four_koma or none");
  cmd->add_option("--eval-scope", o.eval_scope, "emotion_tagged or all_linked");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = load_config(o.config);
  if (o.setting) c.setting = setting_from_string(*o.setting);
  if (o.output) c.output_dir = *o.output;
  if (o.pages) c.pages_per_title = *o.pages;
  if (!o.titles.empty()) c.titles = o.titles;
  if (o.test_titles) c.test_titles = *o.test_titles;
  if (o.workers) c.workers = *o.workers;
  if (o.seed) c.seed = *o.seed;
  if (o.llm_backend) c.llm_backend = *o.llm_backend;
  if (o.cassette) c.cassette = *o.cassette;
  if (o.direction) c.layout.direction = reading_direction_from_string(*o.direction);
  if (o.split_mode) c.layout.split_mode = split_mode_from_string(*o.split_mode);
  if (o.eval_scope) c.eval_scope = eval_scope_from_string(*o.eval_scope);
  return c;
}

int report_run(const RunResult& result, const RunConfig& config) {
  for (const auto& [method, report] : result.reports) {
    std::cout << render_report(report, ReportFormat::TextTable) << "\n";
  }
  for (const auto& title : result.aborted) std::cerr << "aborted: " << title << "\n";
  std::cerr << "outputs written to " << config.output_dir << "\n";
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Character-attributed, emotion-tagged dialogue from annotated comic pages"};
  app.require_subcommand(1);

  Overrides o;
  std::map<std::string, Stage> stages = {{"ingest", Stage::Ingest},       {"layout", Stage::Layout},
                                         {"baseline", Stage::Baselines},  {"attribute", Stage::Attribute},
                                         {"run", Stage::Run}};
  const std::map<std::string, std::string> help = {
      {"ingest", "Parse annotations and write the corpus and linked set"},
      {"layout", "Order frames and assign elements to frames"},
      {"baseline", "Score the two rule-based speaker baselines"},
      {"attribute", "Run perception and LLM attribution"},
      {"run", "Full pipeline: attribution, evaluation and TTS planning"}};
  for (const auto& [name, stage] : stages) add_common(app.add_subcommand(name, help.at(name)), o);

  std::string predictions;
  std::vector<std::string> formats{"text"};
  auto* evaluate = app.add_subcommand("evaluate", "Score a predictions file");
  add_common(evaluate, o);
  evaluate->add_option("-p,--predictions", predictions, "Predictions JSON-lines")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--format", formats, "text, json or csv, printed to stdout");

  auto* plan = app.add_subcommand("tts-plan", "Plan TTS jobs for a predictions file");
  add_common(plan, o);
  plan->add_option("-p,--predictions", predictions, "Predictions JSON-lines")->required()->check(CLI::ExistingFile);

  std::vector<std::string> adapter_command;
  int conformance_requests = 1000;
  std::uint64_t conformance_seed = 0;
  auto* check = app.add_subcommand("check-adapter", "Run the protocol conformance suite against an adapter");
  check->add_option("command", adapter_command, "Adapter command line")->required();
  check->add_option("-n,--requests", conformance_requests, "Randomized requests to send");
  check->add_option("--seed", conformance_seed, "Request generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) {
      AdapterConfig a;
      a.command = adapter_command;
      auto transport = make_transport(a);
      const auto report = run_conformance(*transport, conformance_requests, conformance_seed);
      for (const auto& m : report.messages) std::cerr << m << "\n";
      std::cout << report.requests << " requests, " << report.violations << " violations\n";
      return report.violations == 0 ? 0 : 1;
    }
    const auto config = resolve_config(o);
    if (*evaluate) {
      const auto report = evaluate_file(config, predictions);
      for (const auto& f : formats) std::cout << render_report(report, report_format_from_string(f));
      return 0;
    }
    if (*plan) {
      const auto summary = plan_file(config, predictions);
      std::cout << summary.written << " jobs written, " << summary.synthesized << " synthesized, "
                << summary.failed << " failed\n";
      return summary.failed == 0 ? 0 : 1;
    }
    for (const auto& [name, stage] : stages) {
      if (app.got_subcommand(name)) return report_run(run_stage(config, stage), config);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
