#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diffant/net.hpp"
#include "diffant/schedule.hpp"
#include "diffant/train.hpp"

namespace diffant {

// Flat key=value run configuration with section dots (model.enc_layers=2).
struct RunConfig {
  std::string profile = "synthetic-deterministic";

  std::uint64_t seed = 1234;  // run.seed

  struct {
    int input_dim = 32;
    int enc_dim = 64;
    int dec_dim = 64;
    int enc_layers = 2;
    int dec_layers = 2;
    int heads = 4;
    int ffn_mult = 4;
    int queries = 8;
    double dropout = 0.0;
    std::string mask = "global";  // global | local
    bool multilabel = false;
  } model;

  struct {
    int steps = 100;
    std::string kind = "sqrt";  // linear | sqrt
    double beta_min = 1e-4;
    double beta_max = 0.02;
  } schedule;

  struct {
    int epochs = 100;
    int batch = 4;
    double lr = 1e-3;
    int warmup_epochs = 10;
    double weight_decay = 0.01;
    double lambda_smooth = 0.15;
    double tau = 4.0;
    double grad_clip = 1.0;
    double beta0 = -1.0;  // -1 → schedule's beta_1
    std::vector<double> alphas = {0.2, 0.3, 0.4, 0.5};
  } train;

  struct {
    std::string mode = "deterministic";  // deterministic | stochastic
    int steps = 25;
    int samples = 1;
    double alpha = 0.3;
    bool keep_intermediate = false;
  } infer;

  struct {
    double ambiguity = 0.0;  // 0 → single-continuation grammar; else two-branch prob
    double noise_sigma = 0.5;
    int n_train = 160;
    int n_test = 40;
    int stride = 1;
  } data;

  struct {
    std::string data_dir;
    std::string out_dir = "out";
    std::string checkpoint;
  } paths;

  // Assigns one key. Unknown keys and unparseable values raise ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  ModelConfig to_model_config(int classes, int eos_id) const;
  TrainOptions to_train_options() const;
  NoiseSchedule to_schedule() const;

  // Every key in declaration order, as written by artifact echo headers.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

RunConfig make_profile(const std::string& name);
std::vector<std::string> profile_names();

// key=value lines, '#' comments, blank lines ignored.
void load_config_file(RunConfig& cfg, const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key_eq_value);

}  // namespace diffant
