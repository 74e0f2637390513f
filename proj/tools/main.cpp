#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "itd/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string data_dir;
  long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "JSON config file");
  cmd->add_option("-s,--set", args.overrides,
                  "override a config value, key.path=value (repeatable)");
  cmd->add_option("-o,--out", args.out_dir, "output directory");
  cmd->add_option("-d,--data", args.data_dir, "input data directory");
  cmd->add_option("--seed", args.seed, "seed shorthand for this subcommand");
}

itd::pipeline::PipelineConfig resolve(const CommonArgs& args,
                                      const std::string& seed_key) {
  std::vector<std::string> overrides;
  if (!args.out_dir.empty()) overrides.push_back("out_dir=" + args.out_dir);
  if (!args.data_dir.empty()) overrides.push_back("data_dir=" + args.data_dir);
  if (args.seed >= 0)
    overrides.push_back(seed_key + "=" + std::to_string(args.seed));
  for (const auto& kv : args.overrides) overrides.push_back(kv);
  return itd::pipeline::load_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"insider threat detection over activity logs"};
  app.set_version_flag("--version", "itd 1.0.0");
  app.require_subcommand(1);

  CommonArgs synth_args, prep_args, train_args, eval_args, detect_args;
  std::string checkpoint, logs_dir;

  CLI::App* synth =
      app.add_subcommand("synth", "generate a seeded synthetic log set");
  add_common(synth, synth_args);

  CLI::App* prepare = app.add_subcommand(
      "prepare", "parse logs, build features, cache the corpus");
  add_common(prepare, prep_args);

  CLI::App* train =
      app.add_subcommand("train", "fit the model on a prepared corpus");
  add_common(train, train_args);

  CLI::App* eval = app.add_subcommand(
      "eval", "score a prepared corpus and emit ROC / detection report");
  add_common(eval, eval_args);
  eval->add_option("-k,--checkpoint", checkpoint, "trained checkpoint")
      ->required();

  CLI::App* detect = app.add_subcommand(
      "detect", "flag anomalous sequences in new logs with a fixed threshold");
  add_common(detect, detect_args);
  detect->add_option("-k,--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  detect->add_option("-l,--logs", logs_dir, "directory of new log csvs")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return itd::pipeline::cmd_synth(resolve(synth_args, "synth.seed"),
                                      std::cout);
    if (prepare->parsed())
      return itd::pipeline::cmd_prepare(resolve(prep_args, "train.seed"),
                                        std::cout);
    if (train->parsed())
      return itd::pipeline::cmd_train(resolve(train_args, "train.seed"),
                                      std::cout);
    if (eval->parsed())
      return itd::pipeline::cmd_eval(resolve(eval_args, "eval_seed"),
                                     checkpoint, std::cout);
    if (detect->parsed())
      return itd::pipeline::cmd_detect(resolve(detect_args, "eval_seed"),
                                       checkpoint, logs_dir, std::cout);
  } catch (const itd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const itd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const itd::GateError& e) {
    std::cerr << "gate: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
