#include "diffant/net.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <stdexcept>

#include "diffant/errors.hpp"
#include "diffant/io.hpp"

namespace diffant {

void ModelConfig::validate() const {
  if (input_dim < 1 || enc_dim < 1 || dec_dim < 1) throw ConfigError("model dims must be >= 1");
  if (enc_layers < 1 || dec_layers < 1) throw ConfigError("layer counts must be >= 1");
  if (heads < 1 || enc_dim % heads != 0 || dec_dim % heads != 0)
    throw ConfigError("head count must divide enc and dec dims");
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
  if (queries < 1) throw ConfigError("need at least one action query");
  if (classes < 2) throw ConfigError("need at least 2 classes (incl. EOS)");
  if (resolved_eos() >= classes) throw ConfigError("eos_id out of range");
  if (schedule_steps < 1) throw ConfigError("schedule_steps must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!multilabel && dec_dim % 2 != 0)
    throw ConfigError("dec_dim must be even (class/duration embedding split)");
  if (multilabel && queries != 1) throw ConfigError("multilabel mode uses a single query slot");
  if (mask.kind == AttentionMaskSpec::Kind::local) {
    if (mask.windows.empty()) throw ConfigError("local mask needs window sizes");
    int prev = 1;
    for (int w : mask.windows) {
      if (w < 1 || w % 2 == 0) throw ConfigError("mask windows must be odd and >= 1");
      if (w < prev) throw ConfigError("mask windows must be nondecreasing");
      prev = w;
    }
  }
}

Eigen::RowVectorXd sinusoid_row(double position, int dim) {
  Eigen::RowVectorXd row(dim);
  for (int j = 0; j < dim; ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / dim);
    row(j) = (j % 2 == 0) ? std::sin(position * freq) : std::cos(position * freq);
  }
  return row;
}

Eigen::MatrixXd sinusoid_table(int positions, int dim) {
  Eigen::MatrixXd table(positions, dim);
  for (int p = 0; p < positions; ++p) table.row(p) = sinusoid_row(p, dim);
  return table;
}

Eigen::MatrixXd local_window_mask(int len, int window) {
  const int half = (window - 1) / 2;
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(len, len);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < len; ++j)
      if (std::abs(i - j) > half) mask(i, j) = -1e9;
  return mask;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  RngStream rng(seed);

  auto uniform_matrix = [&rng](int rows, int cols, double bound) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
  };
  auto add_affine = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    params_.add(name + ".w", uniform_matrix(in, out, bound), true);
    params_.add(name + ".b", uniform_matrix(1, out, bound), false);
  };
  auto add_norm = [&](const std::string& name) {
    params_.add(name + ".g", Eigen::MatrixXd::Ones(1, cfg_.enc_dim), false);
    params_.add(name + ".b", Eigen::MatrixXd::Zero(1, cfg_.enc_dim), false);
  };
  auto add_norm_dec = [&](const std::string& name) {
    params_.add(name + ".g", Eigen::MatrixXd::Ones(1, cfg_.dec_dim), false);
    params_.add(name + ".b", Eigen::MatrixXd::Zero(1, cfg_.dec_dim), false);
  };

  add_affine("enc.input", cfg_.input_dim, cfg_.enc_dim);
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string p = "enc.L" + std::to_string(l);
    for (const char* part : {".attn.q", ".attn.k", ".attn.v", ".attn.o"})
      add_affine(p + part, cfg_.enc_dim, cfg_.enc_dim);
    add_norm(p + ".ln1");
    add_affine(p + ".ffn.l1", cfg_.enc_dim, cfg_.enc_dim * cfg_.ffn_mult);
    add_affine(p + ".ffn.l2", cfg_.enc_dim * cfg_.ffn_mult, cfg_.enc_dim);
    add_norm(p + ".ln2");
  }
  add_affine("enc.head", cfg_.enc_dim, cfg_.classes);

  params_.add("dec.query", rng.gaussian_matrix(cfg_.queries, cfg_.dec_dim) * 0.02, false);
  add_affine("dec.step.l1", cfg_.dec_dim, cfg_.dec_dim);
  add_affine("dec.step.l2", cfg_.dec_dim, cfg_.dec_dim);
  if (cfg_.enc_dim != cfg_.dec_dim) add_affine("dec.proj", cfg_.enc_dim, cfg_.dec_dim);
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string p = "dec.L" + std::to_string(l);
    for (const char* part : {".self.q", ".self.k", ".self.v", ".self.o", ".cross.q", ".cross.k",
                             ".cross.v", ".cross.o"})
      add_affine(p + part, cfg_.dec_dim, cfg_.dec_dim);
    add_norm_dec(p + ".ln1");
    add_norm_dec(p + ".ln2");
    add_affine(p + ".ffn.l1", cfg_.dec_dim, cfg_.dec_dim * cfg_.ffn_mult);
    add_affine(p + ".ffn.l2", cfg_.dec_dim * cfg_.ffn_mult, cfg_.dec_dim);
    add_norm_dec(p + ".ln3");
  }
  add_affine("dec.out", cfg_.dec_dim, cfg_.dec_dim);

  const int d_c = cfg_.multilabel ? cfg_.dec_dim : cfg_.dec_dim / 2;
  const int d_t = cfg_.dec_dim / 2;
  // unit-scale class embeddings: the latents must stay separable under the
  // schedule's noise, so fan-in scaling would start them far too close together
  params_.add("codec.emb_class", rng.gaussian_matrix(cfg_.classes, d_c), false);
  if (!cfg_.multilabel) {
    add_affine("codec.emb_dur", 1, d_t);
    add_affine("codec.merge", d_c + d_t, cfg_.dec_dim);
    add_affine("codec.head_dur", cfg_.dec_dim, 1);
  }
  add_affine("codec.head_class", cfg_.dec_dim, cfg_.classes);
}

int Model::idx(const std::string& name) const {
  const int i = params_.lookup(name);
  if (i < 0) throw std::invalid_argument("missing parameter: " + name);
  return i;
}

Var Model::affine(Tape& t, Var x, const std::string& name) const {
  return t.add_rowvec(t.matmul(x, t.param(idx(name + ".w"))), t.param(idx(name + ".b")));
}

Var Model::layer_norm(Tape& t, Var x, const std::string& name) const {
  return t.layer_norm_rows(x, t.param(idx(name + ".g")), t.param(idx(name + ".b")));
}

Var Model::feed_forward(Tape& t, Var x, const std::string& prefix,
                        const ForwardOptions& opts) const {
  Var h = t.relu(affine(t, x, prefix + ".l1"));
  h = t.dropout(h, cfg_.dropout, opts.rng, opts.training);
  return affine(t, h, prefix + ".l2");
}

Var Model::attention(Tape& t, Var q_in, Var kv_in, const std::string& prefix,
                     const Eigen::MatrixXd* mask, const ForwardOptions& opts, bool zero_values,
                     bool capture, Var q_add, Var k_add) const {
  const Eigen::Index dim = t.value(q_in).cols();
  const Eigen::Index dh = dim / cfg_.heads;
  // q_add/k_add carry positional identity into the projections without
  // contaminating the values (query-based decoder convention)
  Var q = affine(t, q_add.valid() ? t.add(q_in, q_add) : q_in, prefix + ".q");
  Var k = affine(t, k_add.valid() ? t.add(kv_in, k_add) : kv_in, prefix + ".k");
  Var v = zero_values
              ? t.constant(Eigen::MatrixXd::Zero(t.value(kv_in).rows(), dim))
              : affine(t, kv_in, prefix + ".v");

  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(cfg_.heads));
  for (int h = 0; h < cfg_.heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, dh);
    Var kh = t.slice_cols(k, h * dh, dh);
    Var vh = t.slice_cols(v, h * dh, dh);
    Var scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask) scores = t.add(scores, t.constant(*mask));
    Var attn = t.softmax_rows(scores);
    if (capture && opts.hooks.encoder_attention)
      opts.hooks.encoder_attention->push_back(t.value(attn));
    attn = t.dropout(attn, cfg_.dropout, opts.rng, opts.training);
    heads.push_back(t.matmul(attn, vh));
  }
  return affine(t, t.concat_cols(heads), prefix + ".o");
}

Var Model::build_encoder(Tape& t, const Eigen::MatrixXd& features, Var* frame_logits,
                         const ForwardOptions& opts) const {
  if (features.cols() != cfg_.input_dim)
    throw std::invalid_argument("encoder: feature dim mismatch");
  if (features.rows() < 1) throw std::invalid_argument("encoder: need at least one frame");
  const int len = static_cast<int>(features.rows());

  Var x = affine(t, t.constant(features), "enc.input");
  x = t.add(x, t.constant(sinusoid_table(len, cfg_.enc_dim)));
  x = t.dropout(x, cfg_.dropout, opts.rng, opts.training);

  const bool local = cfg_.mask.kind == AttentionMaskSpec::Kind::local;
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string p = "enc.L" + std::to_string(l);
    Eigen::MatrixXd mask;
    if (local) {
      const int wi = std::min<int>(l, static_cast<int>(cfg_.mask.windows.size()) - 1);
      mask = local_window_mask(len, cfg_.mask.windows[static_cast<std::size_t>(wi)]);
    }
    Var attn = attention(t, x, x, p + ".attn", local ? &mask : nullptr, opts, false, true);
    x = layer_norm(t, t.add(x, t.dropout(attn, cfg_.dropout, opts.rng, opts.training)), p + ".ln1");
    Var ffn = feed_forward(t, x, p + ".ffn", opts);
    x = layer_norm(t, t.add(x, t.dropout(ffn, cfg_.dropout, opts.rng, opts.training)), p + ".ln2");
  }
  if (frame_logits) *frame_logits = affine(t, x, "enc.head");
  return x;
}

Var Model::build_step_embed(Tape& t, int s) const {
  if (s < 0 || s > cfg_.schedule_steps)
    throw std::invalid_argument("step_embed: step out of range");
  Var base = t.constant(sinusoid_row(static_cast<double>(s), cfg_.dec_dim));
  return affine(t, t.relu(affine(t, base, "dec.step.l1")), "dec.step.l2");
}

Var Model::build_denoiser(Tape& t, Var z_s, int s, Var encoded,
                          const ForwardOptions& opts) const {
  if (t.value(z_s).rows() != cfg_.queries || t.value(z_s).cols() != cfg_.dec_dim)
    throw std::invalid_argument("denoiser: latent shape mismatch");
  Var enc = encoded;
  if (cfg_.enc_dim != cfg_.dec_dim) enc = affine(t, enc, "dec.proj");

  // slot identity + step conditioning, re-injected into every attention block
  // so they survive the noise-scale latents
  Var pos = t.add_rowvec(t.param(idx("dec.query")), build_step_embed(t, s));
  Var x = t.add(z_s, pos);

  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string p = "dec.L" + std::to_string(l);
    Var sa = attention(t, x, x, p + ".self", nullptr, opts, false, false, pos, pos);
    x = layer_norm(t, t.add(x, t.dropout(sa, cfg_.dropout, opts.rng, opts.training)), p + ".ln1");
    Var ca = attention(t, x, enc, p + ".cross", nullptr, opts, opts.hooks.zero_cross_values, false,
                       pos);
    x = layer_norm(t, t.add(x, t.dropout(ca, cfg_.dropout, opts.rng, opts.training)), p + ".ln2");
    Var ffn = feed_forward(t, x, p + ".ffn", opts);
    x = layer_norm(t, t.add(x, t.dropout(ffn, cfg_.dropout, opts.rng, opts.training)), p + ".ln3");
  }
  return affine(t, x, "dec.out");
}

Var Model::build_embed_actions(Tape& t, const ActionSequence& a) const {
  const int c = cfg_.classes;
  for (int id : a.classes)
    if (id < 0 || id >= c) throw std::invalid_argument("embed: class id out of range");

  if (cfg_.multilabel) {
    Eigen::MatrixXd hot = Eigen::MatrixXd::Zero(1, c);
    for (int id : a.classes) hot(0, id) = 1.0;
    return t.matmul(t.constant(hot), t.param(idx("codec.emb_class")));
  }

  const int m = a.slots();
  if (static_cast<int>(a.durations.size()) != m)
    throw std::invalid_argument("embed: classes/durations length mismatch");
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(m, c);
  Eigen::MatrixXd dur(m, 1);
  for (int i = 0; i < m; ++i) {
    onehot(i, a.classes[static_cast<std::size_t>(i)]) = 1.0;
    dur(i, 0) = a.durations[static_cast<std::size_t>(i)];
  }
  Var cls = t.matmul(t.constant(onehot), t.param(idx("codec.emb_class")));
  Var dt = t.add_rowvec(t.matmul(t.constant(dur), t.param(idx("codec.emb_dur.w"))),
                        t.param(idx("codec.emb_dur.b")));
  return affine(t, t.concat_cols({cls, dt}), "codec.merge");
}

std::pair<Var, Var> Model::build_predict(Tape& t, Var z0) const {
  Var logits = affine(t, z0, "codec.head_class");
  if (cfg_.multilabel) return {logits, Var{}};
  Var dur = t.exp(affine(t, z0, "codec.head_dur"));
  return {logits, dur};
}

EncodedObservation Model::encode(const ObservedFeatures& obs, const ForwardOptions& opts) const {
  Tape t(params_);
  Var logits;
  Var e = build_encoder(t, obs.F, &logits, opts);
  EncodedObservation out;
  out.E = t.value(e);
  out.frame_logits = t.value(logits);
  return out;
}

LatentSeq Model::denoise(const LatentSeq& z_s, const EncodedObservation& enc,
                         const ForwardOptions& opts) const {
  Tape t(params_);
  Var out = build_denoiser(t, t.constant(z_s.z), z_s.step, t.constant(enc.E), opts);
  LatentSeq z0_hat;
  z0_hat.z = t.value(out);
  z0_hat.step = 0;
  return z0_hat;
}

CodecParams Model::codec() const {
  CodecParams p;
  p.multilabel = cfg_.multilabel;
  p.emb_class = params_.at(idx("codec.emb_class")).value;
  p.head_class_w = params_.at(idx("codec.head_class.w")).value;
  p.head_class_b = params_.at(idx("codec.head_class.b")).value;
  if (!cfg_.multilabel) {
    p.emb_dur_w = params_.at(idx("codec.emb_dur.w")).value;
    p.emb_dur_b = params_.at(idx("codec.emb_dur.b")).value;
    p.merge_w = params_.at(idx("codec.merge.w")).value;
    p.merge_b = params_.at(idx("codec.merge.b")).value;
    p.head_dur_w = params_.at(idx("codec.head_dur.w")).value;
    p.head_dur_b = params_.at(idx("codec.head_dur.b")).value;
  }
  return p;
}

namespace {

constexpr const char* kCheckpointMagic = "diffant-ckpt-v1";

std::vector<std::pair<std::string, std::string>> config_to_echo(const ModelConfig& c) {
  auto windows_csv = [&] {
    std::string s;
    for (std::size_t i = 0; i < c.mask.windows.size(); ++i)
      s += (i ? "," : "") + std::to_string(c.mask.windows[i]);
    return s;
  };
  return {
      {"model.input_dim", std::to_string(c.input_dim)},
      {"model.enc_dim", std::to_string(c.enc_dim)},
      {"model.dec_dim", std::to_string(c.dec_dim)},
      {"model.enc_layers", std::to_string(c.enc_layers)},
      {"model.dec_layers", std::to_string(c.dec_layers)},
      {"model.heads", std::to_string(c.heads)},
      {"model.ffn_mult", std::to_string(c.ffn_mult)},
      {"model.queries", std::to_string(c.queries)},
      {"model.classes", std::to_string(c.classes)},
      {"model.eos_id", std::to_string(c.eos_id)},
      {"model.schedule_steps", std::to_string(c.schedule_steps)},
      {"model.dropout", std::to_string(c.dropout)},
      {"model.multilabel", c.multilabel ? "1" : "0"},
      {"model.mask", c.mask.kind == AttentionMaskSpec::Kind::local ? "local" : "global"},
      {"model.windows", windows_csv()},
  };
}

std::string fetch(const std::vector<std::pair<std::string, std::string>>& echo,
                  const std::string& key) {
  for (const auto& [k, v] : echo)
    if (k == key) return v;
  throw DataError("checkpoint missing config key: " + key);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::vector<std::pair<std::string, std::string>>& extra_echo) {
  std::ostringstream out;
  out << kCheckpointMagic << "\n";
  auto echo = config_to_echo(model.config());
  echo.insert(echo.end(), extra_echo.begin(), extra_echo.end());
  out << config_echo_header(echo);
  out << "tensors " << model.params().size() << "\n";
  for (const auto& p : model.params().entries()) {
    out << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
        const float v = static_cast<float>(p.value(i, j));
        char bytes[4];
        std::memcpy(bytes, &v, 4);
        out.write(bytes, 4);
      }
  }
  atomic_write_binary(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string blob = read_file(path);
  std::size_t pos = blob.find('\n');
  if (pos == std::string::npos || blob.substr(0, pos) != kCheckpointMagic)
    throw DataError("not a checkpoint file: " + path.string());
  ++pos;

  std::vector<std::pair<std::string, std::string>> echo;
  auto next_line = [&]() {
    const std::size_t end = blob.find('\n', pos);
    if (end == std::string::npos) throw DataError("truncated checkpoint: " + path.string());
    std::string line = blob.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  std::string line = next_line();
  while (line.rfind("# ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) echo.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
    line = next_line();
  }

  ModelConfig cfg;
  cfg.input_dim = std::stoi(fetch(echo, "model.input_dim"));
  cfg.enc_dim = std::stoi(fetch(echo, "model.enc_dim"));
  cfg.dec_dim = std::stoi(fetch(echo, "model.dec_dim"));
  cfg.enc_layers = std::stoi(fetch(echo, "model.enc_layers"));
  cfg.dec_layers = std::stoi(fetch(echo, "model.dec_layers"));
  cfg.heads = std::stoi(fetch(echo, "model.heads"));
  cfg.ffn_mult = std::stoi(fetch(echo, "model.ffn_mult"));
  cfg.queries = std::stoi(fetch(echo, "model.queries"));
  cfg.classes = std::stoi(fetch(echo, "model.classes"));
  cfg.eos_id = std::stoi(fetch(echo, "model.eos_id"));
  cfg.schedule_steps = std::stoi(fetch(echo, "model.schedule_steps"));
  cfg.dropout = std::stod(fetch(echo, "model.dropout"));
  cfg.multilabel = fetch(echo, "model.multilabel") == "1";
  cfg.mask.kind = fetch(echo, "model.mask") == "local" ? AttentionMaskSpec::Kind::local
                                                       : AttentionMaskSpec::Kind::global;
  cfg.mask.windows.clear();
  {
    std::istringstream ws(fetch(echo, "model.windows"));
    std::string tok;
    while (std::getline(ws, tok, ',')) cfg.mask.windows.push_back(std::stoi(tok));
  }

  if (line.rfind("tensors ", 0) != 0) throw DataError("checkpoint missing tensor count");
  const int count = std::stoi(line.substr(8));

  Checkpoint ckpt{Model(cfg, 0), std::move(echo)};
  ParamStore& store = ckpt.model.params();
  if (count != store.size()) throw DataError("checkpoint tensor count mismatch");

  std::set<std::string> seen;
  for (int k = 0; k < count; ++k) {
    std::istringstream head(next_line());
    std::string name;
    Eigen::Index rows, cols;
    if (!(head >> name >> rows >> cols)) throw DataError("bad tensor header in checkpoint");
    const int pi = store.lookup(name);
    if (pi < 0) throw DataError("checkpoint has unknown tensor: " + name);
    ParamInfo& info = store.at(pi);
    if (info.value.rows() != rows || info.value.cols() != cols)
      throw DataError("checkpoint tensor shape mismatch: " + name);
    const std::size_t bytes = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 4;
    if (pos + bytes > blob.size()) throw DataError("truncated tensor data: " + name);
    const char* p = blob.data() + pos;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        float v;
        std::memcpy(&v, p, 4);
        p += 4;
        info.value(i, j) = static_cast<double>(v);
      }
    pos += bytes;
    if (!seen.insert(name).second) throw DataError("duplicate tensor in checkpoint: " + name);
  }
  return ckpt;
}

}  // namespace diffant
