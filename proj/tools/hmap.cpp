#include <CLI11.hpp>

#include <iostream>

#include "hmap/cli/commands.hpp"
#include "hmap/error.hpp"

int main(int argc, char** argv) {
  using namespace hmap::cli;
  CLI::App app{"Fundus-to-heightmap translation: synthetic data, training, inference, evaluation"};
  app.require_subcommand(1);
  app.footer("Relative output paths are placed under $HMAP_OUTPUT_ROOT when it is set.");

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic paired dataset (4 flips per image, 80/10/10 split)");
  gen_cmd->add_option("--n", gen.n, "Number of base images (>= 10)")->capture_default_str();
  gen_cmd->add_option("--resolution", gen.resolution, "Image side: 32, 64, 128 or 256")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generation and split seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Dataset root directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Regenerate even if a different dataset exists");

  TrainOptions train;
  std::string train_config, train_resume;
  std::int64_t train_epochs = 0;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train generator and discriminator");
  train_cmd->add_option("--data", train.data, "Dataset root written by gen-data")->required();
  train_cmd->add_option("--out", train.out, "Run directory")->required();
  auto* cfg_opt = train_cmd->add_option(
      "--config", train_config,
      "JSON run config (see `hmap config`); defaults: lr 1e-3 decayed x0.9 every 30 epochs, batch 8, 250 epochs, "
      "Adam betas (0.5, 0.999), lambda (5,1,5,5), alpha (1,10,1)");
  auto* resume_opt = train_cmd->add_option("--resume", train_resume, "Continue from a checkpoint");
  auto* epochs_opt = train_cmd->add_option("--epochs", train_epochs, "Override the total epoch count (default 250)");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override train.seed");

  InferOptions infer;
  auto* infer_cmd = app.add_subcommand("infer", "Predict a heightmap for one fundus image");
  infer_cmd->add_option("--ckpt", infer.ckpt, "Checkpoint file")->required();
  infer_cmd->add_option("--fundus", infer.fundus, "RGB fundus PNG")->required();
  infer_cmd->add_option("--out", infer.out, "Output heightmap PNG; heights in um go to the same path with .csv")
      ->required();
  infer_cmd->add_option("--seed", infer.seed, "Seed of the dropout noise")->capture_default_str();

  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Report SSIM, PSNR, LPIPS, MSE and height MAE on a split");
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset root")->required();
  eval_cmd->add_option("--split", eval.split, "train, val or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--out", eval.out, "Report directory")->required();
  eval_cmd->add_flag("--ground-truth", eval.ground_truth, "Score ground truth against itself (self-check)");

  auto* config_cmd = app.add_subcommand("config", "Print the default run configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      cmd_gen_data(gen, std::cout);
    } else if (train_cmd->parsed()) {
      if (*cfg_opt) train.config = train_config;
      if (*resume_opt) train.resume = train_resume;
      if (*epochs_opt) train.epochs = train_epochs;
      if (*seed_opt) train.seed = train_seed;
      cmd_train(train, std::cout);
    } else if (infer_cmd->parsed()) {
      cmd_infer(infer, std::cout);
    } else if (eval_cmd->parsed()) {
      cmd_evaluate(eval, std::cout);
    } else if (config_cmd->parsed()) {
      cmd_config(std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
