// Command-line front end; links only against the public C API.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "enda.h"

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "Key-value configuration file");
  cmd->add_option("--set", args.overrides,
                  "Override one key (key=value); repeatable");
}

// Builds a config handle from the file plus overrides; exits on error.
enda_config* build_config(const ConfigArgs& args) {
  char err[1024];
  enda_config* cfg = nullptr;
  if (!args.config_path.empty()) {
    if (enda_config_load(args.config_path.c_str(), &cfg, err, sizeof(err)) !=
        ENDA_OK) {
      std::fprintf(stderr, "error: %s\n", err);
      std::exit(1);
    }
  } else {
    cfg = enda_config_create();
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      enda_config_free(cfg);
      std::exit(1);
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (enda_config_set(cfg, key.c_str(), value.c_str(), err, sizeof(err)) !=
        ENDA_OK) {
      std::fprintf(stderr, "error: %s\n", err);
      enda_config_free(cfg);
      std::exit(1);
    }
  }
  return cfg;
}

int report(int rc, const char* err) {
  if (rc != ENDA_OK) std::fprintf(stderr, "error: %s\n", err);
  return rc == ENDA_OK ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble data-assimilation experiments"};
  app.set_version_flag("--version", enda_version());
  app.require_subcommand(1);

  ConfigArgs cycle_args, forecast_args, nature_args, synth_args, thin_args;
  std::string thin_in, thin_out, thin_report;
  std::string metrics_state, metrics_truth, metrics_out;

  auto* cycle = app.add_subcommand("cycle", "Run an assimilation-cycle experiment");
  add_config_options(cycle, cycle_args);

  auto* forecast =
      app.add_subcommand("forecast", "Score forecasts from archived analyses");
  add_config_options(forecast, forecast_args);

  auto* nature = app.add_subcommand("nature", "Write a free nature trajectory");
  add_config_options(nature, nature_args);

  auto* synth = app.add_subcommand(
      "synth-obs", "Sample synthetic observations from archived truth");
  add_config_options(synth, synth_args);

  auto* thin = app.add_subcommand("thin", "Thin an observation file");
  add_config_options(thin, thin_args);
  thin->add_option("-i,--in", thin_in, "Input observation CSV")->required();
  thin->add_option("-o,--out", thin_out, "Output observation CSV")->required();
  thin->add_option("--report", thin_report, "Per-grid density report CSV");

  auto* metrics =
      app.add_subcommand("metrics", "Score a state snapshot against truth");
  metrics->add_option("--state", metrics_state, "State path (base or .txt)")
      ->required();
  metrics->add_option("--truth", metrics_truth, "Truth path (base or .txt)")
      ->required();
  metrics->add_option("-o,--out", metrics_out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  char err[1024] = {0};
  if (cycle->parsed()) {
    enda_config* cfg = build_config(cycle_args);
    uint64_t aborted = 0;
    const int rc = enda_cycle_run(cfg, &aborted, err, sizeof(err));
    enda_config_free(cfg);
    if (rc == ENDA_OK && aborted != 0) {
      std::fprintf(stderr,
                   "model diverged at cycle %llu; partial outputs kept\n",
                   static_cast<unsigned long long>(aborted));
      return 1;
    }
    return report(rc, err);
  }
  if (forecast->parsed()) {
    enda_config* cfg = build_config(forecast_args);
    const int rc = enda_forecast_run(cfg, err, sizeof(err));
    enda_config_free(cfg);
    return report(rc, err);
  }
  if (nature->parsed()) {
    enda_config* cfg = build_config(nature_args);
    const int rc = enda_nature_run(cfg, err, sizeof(err));
    enda_config_free(cfg);
    return report(rc, err);
  }
  if (synth->parsed()) {
    enda_config* cfg = build_config(synth_args);
    const int rc = enda_synth_obs_run(cfg, err, sizeof(err));
    enda_config_free(cfg);
    return report(rc, err);
  }
  if (thin->parsed()) {
    enda_config* cfg = build_config(thin_args);
    const int rc = enda_thin_file(
        cfg, thin_in.c_str(), thin_out.c_str(),
        thin_report.empty() ? nullptr : thin_report.c_str(), err, sizeof(err));
    enda_config_free(cfg);
    return report(rc, err);
  }
  if (metrics->parsed()) {
    const int rc =
        enda_metrics_files(metrics_state.c_str(), metrics_truth.c_str(),
                           metrics_out.c_str(), err, sizeof(err));
    return report(rc, err);
  }
  return 0;
}
