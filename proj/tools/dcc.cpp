// dcc: driver for the dynamic context cutoff pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "dcc/config.hpp"
#include "dcc/errors.hpp"
#include "dcc/pipeline.hpp"

namespace {

constexpr int kUsageError = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tau;
  std::optional<std::string> policy;
};

dcc::RunConfig resolve(const Options& o) {
  dcc::RunConfig c = o.config.empty() ? dcc::RunConfig{} : dcc::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.tau && !(*o.tau >= 0.0 && *o.tau <= 1.0)) {
    throw dcc::ConfigError("--tau: " + std::to_string(*o.tau) + " outside [0, 1]");
  }
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic context cutoff: data, model, probes, classifier and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config, "JSON config file (defaults when omitted)");
  app.add_option("--seed", o.seed, "Master seed (overrides the config)");
  app.add_option("--out", o.out, "Output directory (overrides the config)");
  app.add_option("--tau", o.tau, "Cutoff threshold for run/all instead of the tuned one");
  app.add_option("--policy", o.policy, "Evaluate a single policy in run/all")
      ->check(CLI::IsMember({"cutoff", "full", "static", "bm25", "oracle"}));

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "Generate single- and multi-hop datasets and the split"},
      {"train-model", "Train the transformer and measure full-context competence"},
      {"probe", "Probe every attention head for sufficiency"},
      {"train-classifier", "Fit the AUC-selected ensemble on the top heads"},
      {"sweep-tau", "Run the tau grid and tune tau on validation"},
      {"run", "Evaluate the policies on the test split"},
      {"eval", "Summarize traces into reports and the chunking table"},
      {"all", "Every stage in order"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  dcc::RunConfig config;
  try {
    config = resolve(o);
  } catch (const dcc::ConfigError& e) {
    std::cerr << "dcc: config error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    dcc::Pipeline p(config, [](const std::string& msg) { std::cerr << msg << std::endl; });
    std::vector<std::string> policies;
    if (o.policy) policies.push_back(*o.policy);
    if (cmd == "gen-data" || cmd == "all") p.gen_data();
    if (cmd == "train-model" || cmd == "all") p.train_model();
    if (cmd == "probe" || cmd == "all") p.probe();
    if (cmd == "train-classifier" || cmd == "all") p.train_classifier();
    if (cmd == "sweep-tau" || cmd == "all") p.sweep_tau();
    if (cmd == "run" || cmd == "all") p.run(o.tau, policies);
    if (cmd == "eval" || cmd == "all") p.eval();
  } catch (const dcc::ConfigError& e) {
    std::cerr << "dcc: config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "dcc " << cmd << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
