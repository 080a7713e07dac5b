#include "owr/pipeline.hpp"
#include "owr/report.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const owr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-world recognition with evaluator exchange"};
  app.require_subcommand(1);
  std::string config_path, out_dir, snapshots_dir, in_dir;

  auto* gen = app.add_subcommand("gen-data", "Generate source and target datasets with manifests");
  gen->add_option("--config", config_path, "Run configuration (JSON)")->required();

  auto* train = app.add_subcommand("train", "Train the main model and bootstrap the evaluators");
  train->add_option("--config", config_path, "Run configuration (JSON)")->required();
  train->add_option("--out", out_dir, "Snapshot directory")->required();

  auto* stream = app.add_subcommand("stream", "Run the open-world target stream");
  stream->add_option("--config", config_path, "Run configuration (JSON)")->required();
  stream->add_option("--snapshots", snapshots_dir, "Directory written by train")->required();
  stream->add_option("--out", out_dir, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Summarize metrics CSVs and plot them as SVG");
  report->add_option("--in", in_dir, "Directory with metrics CSVs")->required();
  report->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*gen)
    return run([&] {
      const auto paths = owr::cmd_gen_data(owr::load_run_config(config_path));
      std::cout << paths.source_csv << '\n'
                << paths.source_manifest << '\n'
                << paths.target_csv << '\n'
                << paths.target_manifest << '\n';
    });
  if (*train)
    return run([&] {
      const auto trained = owr::cmd_train(owr::load_run_config(config_path), out_dir);
      if (!trained.rows.empty())
        std::cout << "final combined loss " << trained.rows.back().combined << '\n';
      std::cout << "snapshots written to " << out_dir << '\n';
    });
  if (*stream)
    return run([&] {
      const auto result = owr::cmd_stream(owr::load_run_config(config_path), snapshots_dir, out_dir);
      std::cout << owr::metrics_csv(result.epochs);
    });
  return run([&] {
    const auto files = owr::cmd_report(in_dir, out_dir);
    for (const auto& svg : files.svgs) std::cout << svg << '\n';
    std::cout << files.summary << '\n';
  });
}
