#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memprobe.h"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> seed;
  std::optional<std::string> gamma;
  std::optional<std::string> mask_pattern;
  std::optional<std::string> sigma_eps;
  std::optional<std::string> loss_target;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_flags(CLI::App* cmd, Flags& f, bool with_mode) {
  cmd->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--gamma", f.gamma, "ADMM penalty, or auto");
  cmd->add_option("--mask-pattern", f.mask_pattern, "uniform_random | center_block | stripes | half");
  cmd->add_option("--sigma-eps", f.sigma_eps, "noise standard deviation");
  cmd->add_option("--loss-target", f.loss_target, "final training-loss threshold");
  if (with_mode) {
    cmd->add_option("--mode", f.mode, "unknown-h | known-h | baseline | all")
        ->check(CLI::IsMember({"unknown-h", "known-h", "baseline", "all"}));
  }
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.sets, "extra key=value override (repeatable)");
  cmd->add_flag("-q,--quiet", f.quiet, "suppress progress output");
}

int fail(const char* what, memprobe_status status) {
  std::fprintf(stderr, "memprobe: %s: %s\n", what, memprobe_last_error());
  return status == MEMPROBE_ERR_INVALID_ARGUMENT || status == MEMPROBE_ERR_PARSE ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memorization probe for overparameterized autoencoders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(memprobe_version()));

  Flags flags;
  const std::map<std::string, std::string> descriptions{
      {"train", "train an autoencoder to the target loss, saving checkpoints"},
      {"degrade", "erase pixels (and add noise) on the stored images"},
      {"recover", "reconstruct degraded images"},
      {"evaluate", "score recovered images and write the summary"},
      {"proxcheck", "certify a tied model against the proximity-operator conditions"},
      {"e2e", "run every stage"}};
  for (const auto& [name, text] : descriptions) {
    add_flags(app.add_subcommand(name, text), flags, name == "recover" || name == "e2e");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string stage = app.get_subcommands().front()->get_name();

  memprobe_config* cfg = nullptr;
  if (memprobe_config_create(&cfg) != MEMPROBE_OK) return fail("config", MEMPROBE_ERR_INTERNAL);
  auto set = [&](const char* key, const std::optional<std::string>& v) -> memprobe_status {
    return v ? memprobe_config_set(cfg, key, v->c_str()) : MEMPROBE_OK;
  };

  memprobe_status st = MEMPROBE_OK;
  if (!flags.config.empty()) st = memprobe_config_load(cfg, flags.config.c_str());
  const std::pair<const char*, const std::optional<std::string>*> overrides[] = {
      {"seed", &flags.seed},           {"recover.gamma", &flags.gamma},
      {"degrade.pattern", &flags.mask_pattern}, {"degrade.sigma_eps", &flags.sigma_eps},
      {"train.loss_target", &flags.loss_target}, {"recover.mode", &flags.mode},
      {"out", &flags.out}};
  for (const auto& [key, value] : overrides) {
    if (st == MEMPROBE_OK) st = set(key, *value);
  }
  for (const auto& kv : flags.sets) {
    if (st != MEMPROBE_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "memprobe: --set expects key=value, got '%s'\n", kv.c_str());
      memprobe_config_destroy(cfg);
      return 2;
    }
    st = memprobe_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
  }
  if (st != MEMPROBE_OK) {
    const int code = fail("configuration", st);
    memprobe_config_destroy(cfg);
    return code == 1 ? 1 : 2;
  }

  st = memprobe_run_stage(cfg, stage.c_str(), flags.quiet ? 0 : 1);
  memprobe_config_destroy(cfg);
  if (st != MEMPROBE_OK) {
    std::fprintf(stderr, "memprobe: %s failed: %s\n", stage.c_str(), memprobe_last_error());
    return 1;
  }
  return 0;
}
