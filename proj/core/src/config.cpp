#include "diffant/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "diffant/errors.hpp"

namespace diffant {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: " + key + ": expected a boolean, got '" + v + "'");
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected an unsigned integer, got '" + v + "'");
  }
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ConfigError("config: " + key + ": expected a comma-separated list");
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string fmt(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt(xs[i]);
  }
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "run.seed") seed = parse_seed(key, v);
  else if (key == "model.input_dim") model.input_dim = parse_int(key, v);
  else if (key == "model.enc_dim") model.enc_dim = parse_int(key, v);
  else if (key == "model.dec_dim") model.dec_dim = parse_int(key, v);
  else if (key == "model.enc_layers") model.enc_layers = parse_int(key, v);
  else if (key == "model.dec_layers") model.dec_layers = parse_int(key, v);
  else if (key == "model.heads") model.heads = parse_int(key, v);
  else if (key == "model.ffn_mult") model.ffn_mult = parse_int(key, v);
  else if (key == "model.queries") model.queries = parse_int(key, v);
  else if (key == "model.dropout") model.dropout = parse_double(key, v);
  else if (key == "model.mask") model.mask = v;
  else if (key == "model.multilabel") model.multilabel = parse_bool(key, v);
  else if (key == "schedule.steps") schedule.steps = parse_int(key, v);
  else if (key == "schedule.kind") schedule.kind = v;
  else if (key == "schedule.beta_min") schedule.beta_min = parse_double(key, v);
  else if (key == "schedule.beta_max") schedule.beta_max = parse_double(key, v);
  else if (key == "train.epochs") train.epochs = parse_int(key, v);
  else if (key == "train.batch") train.batch = parse_int(key, v);
  else if (key == "train.lr") train.lr = parse_double(key, v);
  else if (key == "train.warmup_epochs") train.warmup_epochs = parse_int(key, v);
  else if (key == "train.weight_decay") train.weight_decay = parse_double(key, v);
  else if (key == "train.lambda_smooth") train.lambda_smooth = parse_double(key, v);
  else if (key == "train.tau") train.tau = parse_double(key, v);
  else if (key == "train.grad_clip") train.grad_clip = parse_double(key, v);
  else if (key == "train.beta0") train.beta0 = parse_double(key, v);
  else if (key == "train.alphas") train.alphas = parse_list(key, v);
  else if (key == "infer.mode") infer.mode = v;
  else if (key == "infer.steps") infer.steps = parse_int(key, v);
  else if (key == "infer.samples") infer.samples = parse_int(key, v);
  else if (key == "infer.alpha") infer.alpha = parse_double(key, v);
  else if (key == "infer.keep_intermediate") infer.keep_intermediate = parse_bool(key, v);
  else if (key == "data.ambiguity") data.ambiguity = parse_double(key, v);
  else if (key == "data.noise_sigma") data.noise_sigma = parse_double(key, v);
  else if (key == "data.n_train") data.n_train = parse_int(key, v);
  else if (key == "data.n_test") data.n_test = parse_int(key, v);
  else if (key == "data.stride") data.stride = parse_int(key, v);
  else if (key == "paths.data_dir") paths.data_dir = v;
  else if (key == "paths.out_dir") paths.out_dir = v;
  else if (key == "paths.checkpoint") paths.checkpoint = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config: " + key + ": " + what);
  };
  require(model.input_dim >= 1, "model.input_dim", "must be >= 1");
  require(model.enc_dim >= 1, "model.enc_dim", "must be >= 1");
  require(model.dec_dim >= 1, "model.dec_dim", "must be >= 1");
  require(model.enc_layers >= 1, "model.enc_layers", "must be >= 1");
  require(model.dec_layers >= 1, "model.dec_layers", "must be >= 1");
  require(model.heads >= 1, "model.heads", "must be >= 1");
  require(model.enc_dim % model.heads == 0, "model.heads", "must divide model.enc_dim");
  require(model.dec_dim % model.heads == 0, "model.heads", "must divide model.dec_dim");
  require(model.ffn_mult >= 1, "model.ffn_mult", "must be >= 1");
  require(model.queries >= 1, "model.queries", "must be >= 1");
  require(model.dropout >= 0.0 && model.dropout < 1.0, "model.dropout", "must be in [0,1)");
  require(model.mask == "global" || model.mask == "local", "model.mask",
          "must be 'global' or 'local'");
  if (model.multilabel)
    require(model.queries == 1, "model.queries", "must be 1 in multilabel mode");
  else
    require(model.dec_dim % 2 == 0, "model.dec_dim", "must be even (class/duration halves)");
  require(schedule.steps >= 1, "schedule.steps", "must be >= 1");
  require(schedule.kind == "linear" || schedule.kind == "sqrt", "schedule.kind",
          "must be 'linear' or 'sqrt'");
  require(schedule.beta_min > 0.0 && schedule.beta_min <= schedule.beta_max &&
              schedule.beta_max < 1.0,
          "schedule.beta_min", "need 0 < beta_min <= beta_max < 1");
  require(train.epochs >= 1, "train.epochs", "must be >= 1");
  require(train.batch >= 1, "train.batch", "must be >= 1");
  require(train.lr > 0.0, "train.lr", "must be > 0");
  require(train.warmup_epochs >= 0, "train.warmup_epochs", "must be >= 0");
  require(train.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
  require(train.lambda_smooth >= 0.0, "train.lambda_smooth", "must be >= 0");
  require(train.tau > 0.0, "train.tau", "must be > 0");
  require(train.grad_clip > 0.0, "train.grad_clip", "must be > 0");
  require(!train.alphas.empty(), "train.alphas", "must be nonempty");
  for (double a : train.alphas)
    require(a > 0.0 && a < 1.0, "train.alphas", "every entry must be in (0,1)");
  require(infer.mode == "deterministic" || infer.mode == "stochastic", "infer.mode",
          "must be 'deterministic' or 'stochastic'");
  require(infer.steps >= 1 && infer.steps <= schedule.steps, "infer.steps",
          "must be in [1, schedule.steps]");
  require(infer.samples >= 1, "infer.samples", "must be >= 1");
  require(infer.alpha > 0.0 && infer.alpha < 1.0, "infer.alpha", "must be in (0,1)");
  require(data.ambiguity >= 0.0 && data.ambiguity < 1.0, "data.ambiguity", "must be in [0,1)");
  require(data.noise_sigma >= 0.0, "data.noise_sigma", "must be >= 0");
  require(data.n_train >= 1, "data.n_train", "must be >= 1");
  require(data.n_test >= 0, "data.n_test", "must be >= 0");
  require(data.stride >= 1, "data.stride", "must be >= 1");
}

ModelConfig RunConfig::to_model_config(int classes, int eos_id) const {
  ModelConfig m;
  m.input_dim = model.input_dim;
  m.enc_dim = model.enc_dim;
  m.dec_dim = model.dec_dim;
  m.enc_layers = model.enc_layers;
  m.dec_layers = model.dec_layers;
  m.heads = model.heads;
  m.ffn_mult = model.ffn_mult;
  m.queries = model.queries;
  m.classes = classes;
  m.eos_id = eos_id;
  m.schedule_steps = schedule.steps;
  m.dropout = model.dropout;
  m.multilabel = model.multilabel;
  m.mask.kind =
      model.mask == "local" ? AttentionMaskSpec::Kind::local : AttentionMaskSpec::Kind::global;
  m.validate();
  return m;
}

TrainOptions RunConfig::to_train_options() const {
  TrainOptions t;
  t.epochs = train.epochs;
  t.batch = train.batch;
  t.lr = train.lr;
  t.warmup_epochs = train.warmup_epochs;
  t.weight_decay = train.weight_decay;
  t.grad_clip = train.grad_clip;
  t.lambda_smooth = train.lambda_smooth;
  t.tau = train.tau;
  t.beta0 = train.beta0;
  t.alphas = train.alphas;
  t.seed = seed;
  return t;
}

NoiseSchedule RunConfig::to_schedule() const {
  return make_schedule(schedule.steps, schedule_kind_from_string(schedule.kind),
                       schedule.beta_min, schedule.beta_max);
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  e.emplace_back("profile", profile);
  e.emplace_back("run.seed", std::to_string(seed));
  e.emplace_back("model.input_dim", std::to_string(model.input_dim));
  e.emplace_back("model.enc_dim", std::to_string(model.enc_dim));
  e.emplace_back("model.dec_dim", std::to_string(model.dec_dim));
  e.emplace_back("model.enc_layers", std::to_string(model.enc_layers));
  e.emplace_back("model.dec_layers", std::to_string(model.dec_layers));
  e.emplace_back("model.heads", std::to_string(model.heads));
  e.emplace_back("model.ffn_mult", std::to_string(model.ffn_mult));
  e.emplace_back("model.queries", std::to_string(model.queries));
  e.emplace_back("model.dropout", fmt(model.dropout));
  e.emplace_back("model.mask", model.mask);
  e.emplace_back("model.multilabel", model.multilabel ? "1" : "0");
  e.emplace_back("schedule.steps", std::to_string(schedule.steps));
  e.emplace_back("schedule.kind", schedule.kind);
  e.emplace_back("schedule.beta_min", fmt(schedule.beta_min));
  e.emplace_back("schedule.beta_max", fmt(schedule.beta_max));
  e.emplace_back("train.epochs", std::to_string(train.epochs));
  e.emplace_back("train.batch", std::to_string(train.batch));
  e.emplace_back("train.lr", fmt(train.lr));
  e.emplace_back("train.warmup_epochs", std::to_string(train.warmup_epochs));
  e.emplace_back("train.weight_decay", fmt(train.weight_decay));
  e.emplace_back("train.lambda_smooth", fmt(train.lambda_smooth));
  e.emplace_back("train.tau", fmt(train.tau));
  e.emplace_back("train.grad_clip", fmt(train.grad_clip));
  e.emplace_back("train.beta0", fmt(train.beta0));
  e.emplace_back("train.alphas", fmt(train.alphas));
  e.emplace_back("infer.mode", infer.mode);
  e.emplace_back("infer.steps", std::to_string(infer.steps));
  e.emplace_back("infer.samples", std::to_string(infer.samples));
  e.emplace_back("infer.alpha", fmt(infer.alpha));
  e.emplace_back("infer.keep_intermediate", infer.keep_intermediate ? "1" : "0");
  e.emplace_back("data.ambiguity", fmt(data.ambiguity));
  e.emplace_back("data.noise_sigma", fmt(data.noise_sigma));
  e.emplace_back("data.n_train", std::to_string(data.n_train));
  e.emplace_back("data.n_test", std::to_string(data.n_test));
  e.emplace_back("data.stride", std::to_string(data.stride));
  e.emplace_back("paths.data_dir", paths.data_dir);
  e.emplace_back("paths.out_dir", paths.out_dir);
  e.emplace_back("paths.checkpoint", paths.checkpoint);
  return e;
}

RunConfig make_profile(const std::string& name) {
  RunConfig c;  // defaults = synthetic-deterministic
  c.profile = name;
  if (name == "synthetic-deterministic") {
    return c;
  }
  if (name == "synthetic-ambiguous") {
    c.data.ambiguity = 0.5;
    c.data.n_train = 240;
    c.data.n_test = 200;
    return c;
  }
  if (name == "tiny") {
    c.model.enc_dim = 32;
    c.model.dec_dim = 32;
    c.model.enc_layers = 1;
    c.model.dec_layers = 1;
    c.model.heads = 2;
    c.schedule.steps = 10;
    c.schedule.kind = "linear";
    c.train.epochs = 2;
    c.train.batch = 2;
    c.train.warmup_epochs = 1;
    c.train.alphas = {0.3};
    c.infer.steps = 5;
    c.data.n_train = 6;
    c.data.n_test = 2;
    c.data.stride = 4;
    return c;
  }
  if (name == "breakfast") {
    c.model.input_dim = 2048;
    c.model.enc_dim = 256;
    c.model.dec_dim = 1024;
    c.model.enc_layers = 4;
    c.model.dec_layers = 4;
    c.model.heads = 8;
    c.model.queries = 8;
    c.schedule.steps = 1000;
    c.schedule.kind = "linear";
    c.train.epochs = 50;
    c.train.batch = 64;
    c.train.lr = 5e-4;
    c.infer.steps = 25;
    c.data.stride = 3;
    return c;
  }
  if (name == "50salads") {
    c.model.input_dim = 2048;
    c.model.enc_dim = 256;
    c.model.dec_dim = 256;
    c.model.enc_layers = 4;
    c.model.dec_layers = 8;
    c.model.heads = 8;
    c.model.queries = 16;
    c.schedule.steps = 1000;
    c.schedule.kind = "linear";
    c.train.epochs = 30;
    c.train.batch = 8;
    c.train.lr = 1e-3;
    c.infer.steps = 25;
    c.data.stride = 3;
    return c;
  }
  if (name == "epickitchens" || name == "egtea") {
    c.model.input_dim = 2048;
    c.model.enc_dim = 256;
    c.model.dec_dim = name == "egtea" ? 512 : 1024;
    c.model.enc_layers = 4;
    c.model.dec_layers = 4;
    c.model.heads = 8;
    c.model.queries = 1;
    c.model.multilabel = true;
    c.schedule.steps = 1000;
    c.schedule.kind = "linear";
    c.train.epochs = name == "egtea" ? 100 : 50;
    c.train.batch = 32;
    c.train.lr = name == "egtea" ? 5e-4 : 2.5e-4;
    c.train.alphas = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    c.infer.steps = 25;
    c.data.stride = 1;
    return c;
  }
  std::string known;
  for (const auto& p : profile_names()) known += (known.empty() ? "" : ", ") + p;
  throw ConfigError("config: unknown profile '" + name + "' (known: " + known + ")");
}

std::vector<std::string> profile_names() {
  return {"synthetic-deterministic", "synthetic-ambiguous", "tiny",
          "breakfast", "50salads", "epickitchens", "egtea"};
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

void apply_override(RunConfig& cfg, const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override '" + key_eq_value + "': expected key=value");
  std::string key = trim(key_eq_value.substr(0, eq));
  cfg.set(key, key_eq_value.substr(eq + 1));
}

}  // namespace diffant
