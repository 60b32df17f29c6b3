// oc3d: synthetic object-centric capture, alignment, training, and
// evaluation pipeline. Each stage is a subcommand; all state lives in the
// output directory and every stage is deterministic for a fixed config.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "oc3d/pipeline.hpp"

namespace {

// exit codes: 0 ok, 2 config error, 3 missing artifact, 4 corrupt file,
// 5 numeric failure
int exit_code_for(const oc3d::Error& e) {
  switch (e.code()) {
    case oc3d::Err::InvalidParams:
    case oc3d::Err::Parse:
    case oc3d::Err::Shape:
      return 2;
    case oc3d::Err::MissingArtifact:
      return 3;
    case oc3d::Err::CorruptFile:
      return 4;
    case oc3d::Err::NumericFailure:
      return 5;
    default:
      return 1;
  }
}

struct Cli {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string output = "embeddings.csv";
};

oc3d::RunConfig resolve_config(const Cli& cli, const std::vector<std::string>& extras) {
  nlohmann::json j = nlohmann::json::object();
  if (!cli.config_path.empty()) {
    std::ifstream f(cli.config_path);
    if (!f) oc3d::fail(oc3d::Err::MissingArtifact, "config file not found: " + cli.config_path);
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      oc3d::fail(oc3d::Err::InvalidParams, std::string("config: parse error: ") + e.what());
    }
  }
  for (const std::string& o : cli.overrides) oc3d::apply_override(j, o);
  // bare --section.key=value flags left over by CLI11
  for (const std::string& extra : extras) {
    std::string s = extra;
    if (s.rfind("--", 0) == 0) s = s.substr(2);
    if (s.find('=') == std::string::npos || s.find('.') == std::string::npos)
      oc3d::fail(oc3d::Err::InvalidParams, "unrecognized argument: " + extra);
    oc3d::apply_override(j, s);
  }
  return oc3d::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"object-centric 3D representation pipeline"};
  app.require_subcommand(1);
  app.allow_extras();

  Cli cli;
  app.add_option("-c,--config", cli.config_path, "JSON config file");
  app.add_option("-s,--set", cli.overrides, "override a config key, e.g. --set train.batch=64");

  CLI::App* c_generate = app.add_subcommand("generate", "write procedural scene files");
  CLI::App* c_render = app.add_subcommand("render", "capture, noise, and alignment -> bundles");
  CLI::App* c_pack = app.add_subcommand("pack", "geo-fenced split -> record files");
  CLI::App* c_train = app.add_subcommand("train", "train the siamese network -> checkpoint");
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint -> report");
  CLI::App* c_embed = app.add_subcommand("embed", "embed patches with a checkpoint");
  CLI::App* c_report = app.add_subcommand("report", "print the eval report as a table");
  for (CLI::App* sub : {c_generate, c_render, c_pack, c_train, c_eval, c_embed, c_report}) {
    sub->allow_extras();
    sub->add_option("-c,--config", cli.config_path, "JSON config file");
    sub->add_option("-s,--set", cli.overrides, "override a config key, e.g. --set train.batch=64");
  }

  int dump_previews = 0;
  c_render->add_option("--dump-patches", dump_previews, "write N preview bundles per scene as PPMs");
  c_eval->add_option("--checkpoint", cli.checkpoint, "checkpoint file (default: the trained one)");
  c_embed->add_option("--checkpoint", cli.checkpoint, "checkpoint file (default: the trained one)");
  c_embed->add_option("--input", cli.inputs, "record file (.oc3d) or PPM/PGM images")->required(false);
  c_embed->add_option("--output", cli.output, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") return app.exit(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    std::vector<std::string> extras = app.remaining();
    for (const std::string& r : sub->remaining()) extras.push_back(r);
    // embed inputs may be passed positionally
    if (sub == c_embed) {
      std::vector<std::string> rest;
      for (const std::string& e : extras) {
        if (e.rfind("--", 0) == 0)
          rest.push_back(e);
        else
          cli.inputs.push_back(e);
      }
      extras = rest;
    }
    const oc3d::RunConfig config = resolve_config(cli, extras);
    const oc3d::pipeline::Paths paths = oc3d::pipeline::paths_for(config);
    const std::string ckpt = cli.checkpoint.empty() ? paths.checkpoint : cli.checkpoint;

    if (sub == c_generate) {
      oc3d::pipeline::cmd_generate(config);
      std::printf("wrote %d scenes under %s\n", config.scene_count, paths.scenes_dir.c_str());
    } else if (sub == c_render) {
      oc3d::pipeline::cmd_render(config, dump_previews);
      std::printf("wrote bundles under %s\n", paths.bundles_dir.c_str());
    } else if (sub == c_pack) {
      oc3d::pipeline::cmd_pack(config);
      std::printf("wrote %s and %s\n", paths.train_records.c_str(), paths.test_records.c_str());
    } else if (sub == c_train) {
      oc3d::pipeline::cmd_train(config);
      std::printf("wrote %s\n", paths.checkpoint.c_str());
    } else if (sub == c_eval) {
      const auto report = oc3d::pipeline::cmd_eval(config, ckpt);
      std::printf("%s", oc3d::pipeline::render_report_table(report).c_str());
      std::printf("wrote %s\n", paths.report_json.c_str());
    } else if (sub == c_embed) {
      if (cli.inputs.empty())
        oc3d::fail(oc3d::Err::InvalidParams, "embed: no inputs given (use --input or positionals)");
      oc3d::pipeline::cmd_embed(config, ckpt, cli.inputs, cli.output);
      std::printf("wrote %s\n", cli.output.c_str());
    } else if (sub == c_report) {
      std::ifstream f(paths.report_json);
      if (!f) oc3d::fail(oc3d::Err::MissingArtifact, "missing report: " + paths.report_json);
      nlohmann::json report;
      f >> report;
      std::printf("%s", oc3d::pipeline::render_report_table(report).c_str());
    }
    return 0;
  } catch (const oc3d::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", oc3d::err_name(e.code()), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
