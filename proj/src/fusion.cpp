#include "amoene/fusion.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace amoene {

using nlohmann::json;

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ShapeError("linear layer needs positive dimensions");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.in = in;
  l.out = out;
  std::vector<double> w(in * out), b(out);
  for (auto& v : w) v = uniform(rng, -bound, bound);
  for (auto& v : b) v = uniform(rng, -bound, bound);
  l.weight = Tensor({in, out}, std::move(w), true);
  l.bias = Tensor({out}, std::move(b), true);
  return l;
}

Tensor apply(Graph& g, const Linear& layer, const Tensor& x) {
  if (x.dim() != 2 || x.cols() != layer.in)
    throw ShapeError("linear: expected [n," + std::to_string(layer.in) + "] input, got " + shape_string(x.shape()));
  return add(g, matmul(g, x, layer.weight), layer.bias);
}

ModalityEncoder make_encoder(std::string name, std::size_t input_dim, std::size_t latent_dim, double dropout,
                             Rng& rng) {
  ModalityEncoder e;
  e.name = std::move(name);
  e.input_dim = input_dim;
  e.latent_dim = latent_dim;
  e.dropout = dropout;
  e.fc1 = make_linear(input_dim, latent_dim, rng);
  e.bn_gamma = Tensor::filled({latent_dim}, 1.0, true);
  e.bn_beta = Tensor::zeros({latent_dim}, true);
  e.bn_stats = BatchNormStats::identity(latent_dim);
  e.fc2 = make_linear(latent_dim, latent_dim, rng);
  return e;
}

Tensor encode_modality(Graph& g, ModalityEncoder& enc, const Tensor& x, Mode mode, std::uint64_t seed) {
  if (x.dim() != 2 || x.cols() != enc.input_dim)
    throw ShapeError("encoder '" + enc.name + "': expected " + std::to_string(enc.input_dim) + " features, got " +
                     shape_string(x.shape()));
  OpParams bn;
  bn.stats = &enc.bn_stats;
  Tensor h = apply(g, enc.fc1, x);
  h = g.apply(OpKind::batchnorm_features, {h, enc.bn_gamma, enc.bn_beta}, mode, 0, bn);
  h = gelu(g, h);
  OpParams drop;
  drop.rate = enc.dropout;
  h = g.apply(OpKind::dropout, {h}, mode, seed, drop);
  return apply(g, enc.fc2, h);
}

FusionBlock make_fusion_block(std::size_t latent_dim, std::size_t heads, double dropout, Rng& rng) {
  if (heads == 0 || latent_dim % heads != 0) throw ShapeError("number of heads must divide the latent size");
  FusionBlock b;
  b.latent_dim = latent_dim;
  b.heads = heads;
  b.dropout = dropout;
  b.q = make_linear(latent_dim, latent_dim, rng);
  b.k = make_linear(latent_dim, latent_dim, rng);
  b.v = make_linear(latent_dim, latent_dim, rng);
  b.o = make_linear(latent_dim, latent_dim, rng);
  b.ln1_gamma = Tensor::filled({latent_dim}, 1.0, true);
  b.ln1_beta = Tensor::zeros({latent_dim}, true);
  b.ln2_gamma = Tensor::filled({latent_dim}, 1.0, true);
  b.ln2_beta = Tensor::zeros({latent_dim}, true);
  b.ff1 = make_linear(latent_dim, 2 * latent_dim, rng);
  b.ff2 = make_linear(2 * latent_dim, latent_dim, rng);
  return b;
}

Tensor stack_latents(Graph& g, std::span<const Tensor> latents) {
  if (latents.empty()) throw ShapeError("stack_latents: no latents");
  return g.apply(OpKind::stack_rows, latents);
}

FuseResult mhsa_fuse(Graph& g, FusionBlock& block, const Tensor& c, std::size_t modalities, Mode mode,
                     std::uint64_t seed) {
  const std::size_t m = block.latent_dim, h = block.heads;
  if (c.dim() != 2 || c.cols() != m) throw ShapeError("mhsa_fuse: expected [B*K," + std::to_string(m) + "] input");
  if (modalities == 0 || c.rows() % modalities != 0) throw ShapeError("mhsa_fuse: rows not divisible by K");
  if (h == 0 || m % h != 0) throw ShapeError("mhsa_fuse: number of heads must divide the latent size");
  const std::size_t d = m / h;

  Tensor q = apply(g, block.q, c), k = apply(g, block.k, c), v = apply(g, block.v, c);
  std::vector<Tensor> heads;
  std::vector<double> mean_attention(c.rows() * modalities, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    OpParams slice;
    slice.begin = i * d;
    slice.end = (i + 1) * d;
    Tensor qh = g.apply(OpKind::slice_cols, {q}, mode, 0, slice);
    Tensor kh = g.apply(OpKind::slice_cols, {k}, mode, 0, slice);
    Tensor vh = g.apply(OpKind::slice_cols, {v}, mode, 0, slice);
    OpParams grp;
    grp.group = modalities;
    grp.factor = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor a = softmax_rows(g, g.apply(OpKind::group_scores, {qh, kh}, mode, 0, grp));
    for (std::size_t j = 0; j < mean_attention.size(); ++j) mean_attention[j] += a[j] / static_cast<double>(h);
    heads.push_back(g.apply(OpKind::group_mix, {a, vh}, mode, 0, grp));
  }
  Tensor attn = heads.size() == 1 ? heads[0] : g.apply(OpKind::concat_cols, heads);
  attn = apply(g, block.o, attn);

  Tensor r1 = g.apply(OpKind::layernorm_rows, {add(g, c, attn), block.ln1_gamma, block.ln1_beta});
  Tensor f = gelu(g, apply(g, block.ff1, r1));
  OpParams drop;
  drop.rate = block.dropout;
  f = g.apply(OpKind::dropout, {f}, mode, seed, drop);
  f = apply(g, block.ff2, f);
  Tensor out = g.apply(OpKind::layernorm_rows, {add(g, r1, f), block.ln2_gamma, block.ln2_beta});
  return {out, Tensor({c.rows(), modalities}, std::move(mean_attention))};
}

Tensor pool_fused(Graph& g, const Tensor& fused, std::size_t modalities) {
  if (!fused.defined() || fused.size() == 0) throw ShapeError("pool_fused: empty input");
  OpParams p;
  p.group = modalities;
  return g.apply(OpKind::mean_rows, {fused}, Mode::train, 0, p);
}

std::string to_string(HeadKind k) { return k == HeadKind::binary ? "binary" : "mtlr"; }
std::string to_string(FusionKind k) { return k == FusionKind::attention ? "attention" : "early"; }

HeadKind head_from_string(const std::string& s) {
  if (s == "binary") return HeadKind::binary;
  if (s == "mtlr") return HeadKind::mtlr;
  throw ConfigError("unknown head kind '" + s + "'");
}

FusionKind fusion_from_string(const std::string& s) {
  if (s == "attention" || s == "mhsa") return FusionKind::attention;
  if (s == "early") return FusionKind::early;
  throw ConfigError("unknown fusion kind '" + s + "'");
}

void ModelConfig::validate() const {
  if (modalities.empty()) throw ConfigError("model needs at least one modality");
  if (modalities.size() != input_dims.size()) throw ConfigError("one input dimension per modality required");
  for (auto d : input_dims)
    if (d == 0) throw ConfigError("modality input dimension must be positive");
  if (latent_dim == 0) throw ConfigError("latent size must be positive");
  if (heads == 0 || latent_dim % heads != 0) throw ConfigError("number of heads must divide the latent size");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (head == HeadKind::mtlr && bins < 2) throw ConfigError("MTLR head needs at least two bins");
}

json to_json(const ModelConfig& c) {
  return {{"modalities", c.modalities}, {"input_dims", c.input_dims}, {"latent_dim", c.latent_dim},
          {"heads", c.heads},           {"dropout", c.dropout},       {"head", to_string(c.head)},
          {"bins", c.bins},             {"fusion", to_string(c.fusion)}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.modalities = j.at("modalities").get<std::vector<std::string>>();
    c.input_dims = j.at("input_dims").get<std::vector<std::size_t>>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.head = head_from_string(j.at("head").get<std::string>());
    c.bins = j.at("bins").get<std::size_t>();
    c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

AmoModel::AmoModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t m = config_.latent_dim;
  if (config_.fusion == FusionKind::attention) {
    for (std::size_t k = 0; k < config_.modalities.size(); ++k)
      encoders.push_back(make_encoder(config_.modalities[k], config_.input_dims[k], m, config_.dropout, rng));
    block = make_fusion_block(m, config_.heads, config_.dropout, rng);
  } else {
    std::size_t total = 0;
    for (auto d : config_.input_dims) total += d;
    encoders.push_back(make_encoder("early", total, m, config_.dropout, rng));
  }
  head = make_linear(m, config_.head == HeadKind::binary ? 1 : config_.bins, rng);
}

ForwardResult AmoModel::forward(Graph& g, std::span<const Tensor> inputs, Mode mode, std::uint64_t seed) {
  const std::size_t kmod = config_.modalities.size();
  if (inputs.size() != kmod)
    throw ShapeError("model expects " + std::to_string(kmod) + " modalities, got " + std::to_string(inputs.size()));
  const std::size_t batch = inputs[0].rows();
  for (std::size_t k = 0; k < kmod; ++k) {
    if (inputs[k].dim() != 2 || inputs[k].rows() != batch || inputs[k].cols() != config_.input_dims[k])
      throw ShapeError("modality '" + config_.modalities[k] + "' has shape " + shape_string(inputs[k].shape()));
  }
  ForwardResult r;
  if (config_.fusion == FusionKind::early) {
    Tensor x = kmod == 1 ? inputs[0] : g.apply(OpKind::concat_cols, inputs);
    r.pooled = encode_modality(g, encoders[0], x, mode, derive_seed(seed, 1, 0));
  } else {
    std::vector<Tensor> latents;
    for (std::size_t k = 0; k < kmod; ++k)
      latents.push_back(encode_modality(g, encoders[k], inputs[k], mode, derive_seed(seed, 1, k)));
    Tensor c = stack_latents(g, latents);
    auto fused = mhsa_fuse(g, block, c, kmod, mode, derive_seed(seed, 2, 0));
    r.attention = fused.attention;
    r.pooled = pool_fused(g, fused.fused, kmod);
  }
  r.prediction = apply(g, head, r.pooled);
  return r;
}

namespace {

using Slots = std::vector<std::pair<std::string, Tensor*>>;

void push_linear(Slots& out, const std::string& prefix, Linear& l) {
  out.emplace_back(prefix + ".weight", &l.weight);
  out.emplace_back(prefix + ".bias", &l.bias);
}

std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

std::vector<std::pair<std::string, Tensor*>> AmoModel::slots() {
  Slots out;
  for (auto& e : encoders) {
    const std::string p = "encoders." + e.name;
    push_linear(out, p + ".fc1", e.fc1);
    out.emplace_back(p + ".bn.gamma", &e.bn_gamma);
    out.emplace_back(p + ".bn.beta", &e.bn_beta);
    push_linear(out, p + ".fc2", e.fc2);
  }
  if (config_.fusion == FusionKind::attention) {
    push_linear(out, "fusion.q", block.q);
    push_linear(out, "fusion.k", block.k);
    push_linear(out, "fusion.v", block.v);
    push_linear(out, "fusion.o", block.o);
    out.emplace_back("fusion.ln1.gamma", &block.ln1_gamma);
    out.emplace_back("fusion.ln1.beta", &block.ln1_beta);
    push_linear(out, "fusion.ff1", block.ff1);
    push_linear(out, "fusion.ff2", block.ff2);
    out.emplace_back("fusion.ln2.gamma", &block.ln2_gamma);
    out.emplace_back("fusion.ln2.beta", &block.ln2_beta);
  }
  push_linear(out, "head", head);
  return out;
}

std::vector<std::pair<std::string, Tensor>> AmoModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : const_cast<AmoModel*>(this)->slots()) out.emplace_back(name, *t);
  return out;
}

void AmoModel::set_parameters(std::span<const Tensor> values) {
  auto s = slots();
  if (values.size() != s.size()) throw ShapeError("set_parameters: expected " + std::to_string(s.size()) + " tensors");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (values[i].shape() != s[i].second->shape()) throw ShapeError("set_parameters: shape mismatch for " + s[i].first);
    *s[i].second = values[i];
  }
}

AmoModel AmoModel::clone() const {
  AmoModel m = *this;
  for (auto& [name, t] : m.slots()) *t = t->clone();
  for (auto& [name, t] : m.slots()) t->set_requires_grad(true);
  return m;
}

std::vector<Tensor> AmoModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> AmoModel::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (auto& e : encoders) {
    out.emplace_back("encoders." + e.name + ".bn.running_mean", &e.bn_stats.running_mean);
    out.emplace_back("encoders." + e.name + ".bn.running_var", &e.bn_stats.running_var);
  }
  return out;
}

std::size_t AmoModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t m = c.latent_dim;
  auto encoder = [&](std::size_t n) { return linear_count(n, m) + 2 * m + linear_count(m, m); };
  std::size_t total = 0;
  if (c.fusion == FusionKind::attention) {
    for (auto n : c.input_dims) total += encoder(n);
    total += 4 * linear_count(m, m) + 4 * m + linear_count(m, 2 * m) + linear_count(2 * m, m);
  } else {
    std::size_t sum = 0;
    for (auto n : c.input_dims) sum += n;
    total += encoder(sum);
  }
  total += linear_count(m, c.head == HeadKind::binary ? 1 : c.bins);
  return total;
}

std::string AmoModel::summary() const {
  std::ostringstream os;
  os << "fusion=" << to_string(config_.fusion) << " head=" << to_string(config_.head) << " K=" << modalities()
     << " M=" << config_.latent_dim << " H=" << config_.heads << "\n";
  for (auto& [name, t] : named_parameters()) os << "  " << name << " " << shape_string(t.shape()) << " " << t.size() << "\n";
  os << "total parameters: " << parameter_count() << "\n";
  return os.str();
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'A', 'M', 'O', 'E', 'N', 'E', '0', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, AmoModel& model, const json& extra) {
  json manifest;
  manifest["config"] = to_json(model.config());
  manifest["extra"] = extra;
  json entries = json::array();
  std::vector<std::span<const double>> buffers;
  std::size_t offset = 0;
  for (auto& [name, t] : model.named_parameters()) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"kind", "parameter"}});
    buffers.push_back(t.data());
    offset += t.size();
  }
  for (auto& [name, buf] : model.named_buffers()) {
    entries.push_back({{"name", name}, {"shape", {buf->size()}}, {"offset", offset}, {"kind", "buffer"}});
    buffers.emplace_back(*buf);
    offset += buf->size();
  }
  manifest["tensors"] = entries;
  manifest["total_values"] = offset;
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto b : buffers) out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size_bytes()));
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ConfigError(path.string() + " is not a checkpoint");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  LoadedCheckpoint ck{AmoModel(model_config_from_json(manifest.at("config"))), manifest.value("extra", json{})};
  const auto total = manifest.at("total_values").get<std::size_t>();
  std::vector<double> values(total);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != total * sizeof(double)) throw ConfigError("truncated checkpoint");

  std::map<std::string, std::span<double>> targets;
  for (auto& [name, t] : ck.model.named_parameters()) targets[name] = t.mutable_data();
  for (auto& [name, buf] : ck.model.named_buffers()) targets[name] = *buf;
  std::size_t seen = 0;
  for (const auto& e : manifest.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto it = targets.find(name);
    if (it == targets.end()) throw ConfigError("checkpoint tensor '" + name + "' not in model");
    const auto offset = e.at("offset").get<std::size_t>();
    if (shape_size(e.at("shape").get<Shape>()) != it->second.size())
      throw ConfigError("checkpoint tensor '" + name + "' has the wrong shape");
    if (offset + it->second.size() > total) throw ConfigError("checkpoint tensor '" + name + "' out of range");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), it->second.size(), it->second.begin());
    ++seen;
  }
  if (seen != targets.size()) throw ConfigError("checkpoint is missing tensors");
  return ck;
}

}  // namespace amoene
