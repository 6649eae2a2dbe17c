#pragma once

// Modality encoders, multi-head self-attention fusion, pooling, task heads
// and the checkpoint container.

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "amoene/random.hpp"
#include "amoene/tensor.hpp"

namespace amoene {

struct Linear {
  std::size_t in = 0, out = 0;
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and biases.
Linear make_linear(std::size_t in, std::size_t out, Rng& rng);
Tensor apply(Graph& g, const Linear& layer, const Tensor& x);

struct ModalityEncoder {
  std::string name;
  std::size_t input_dim = 0, latent_dim = 0;
  double dropout = 0.0;
  Linear fc1;  // n_k -> M
  Tensor bn_gamma, bn_beta;
  BatchNormStats bn_stats;
  Linear fc2;  // M -> M
};

ModalityEncoder make_encoder(std::string name, std::size_t input_dim, std::size_t latent_dim, double dropout,
                             Rng& rng);

// linear -> batchnorm -> GELU -> dropout -> linear; x is [B, n_k].
Tensor encode_modality(Graph& g, ModalityEncoder& enc, const Tensor& x, Mode mode, std::uint64_t seed);

struct FusionBlock {
  std::size_t latent_dim = 0, heads = 1;
  double dropout = 0.0;
  Linear q, k, v, o;
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  Linear ff1, ff2;  // M -> 2M -> M
};

FusionBlock make_fusion_block(std::size_t latent_dim, std::size_t heads, double dropout, Rng& rng);

// K latents of shape [B, M] -> [B*K, M], patient-major.
Tensor stack_latents(Graph& g, std::span<const Tensor> latents);

struct FuseResult {
  Tensor fused;      // [B*K, M]
  Tensor attention;  // [B*K, K], head-averaged, not part of the graph
};

FuseResult mhsa_fuse(Graph& g, FusionBlock& block, const Tensor& c, std::size_t modalities, Mode mode,
                     std::uint64_t seed);

// [B*K, M] -> [B, M]
Tensor pool_fused(Graph& g, const Tensor& fused, std::size_t modalities);

enum class HeadKind { binary, mtlr };
enum class FusionKind { attention, early };

std::string to_string(HeadKind k);
std::string to_string(FusionKind k);
HeadKind head_from_string(const std::string& s);
FusionKind fusion_from_string(const std::string& s);

struct ModelConfig {
  std::vector<std::string> modalities;
  std::vector<std::size_t> input_dims;
  std::size_t latent_dim = 256;
  std::size_t heads = 2;
  double dropout = 0.3;
  HeadKind head = HeadKind::binary;
  std::size_t bins = 1;  // MTLR output width
  FusionKind fusion = FusionKind::attention;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ForwardResult {
  Tensor prediction;  // [B, 1] logits or [B, T] bin logits
  Tensor attention;   // [B*K, K]; undefined for early fusion
  Tensor pooled;      // [B, M]
};

class AmoModel {
 public:
  explicit AmoModel(ModelConfig config);

  // inputs[k] is [B, n_k] for modality k, in config order.
  ForwardResult forward(Graph& g, std::span<const Tensor> inputs, Mode mode, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  std::size_t modalities() const { return config_.modalities.size(); }

  // Trainable tensors with stable dotted names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Rebinds every trainable slot to the given tensors, in named_parameters order.
  void set_parameters(std::span<const Tensor> values);
  // Deep copy with independent parameter buffers.
  AmoModel clone() const;
  // Non-trainable state (batchnorm running statistics).
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();

  std::size_t parameter_count() const;
  std::string summary() const;

  std::vector<ModalityEncoder> encoders;
  FusionBlock block;
  Linear head;

 private:
  std::vector<std::pair<std::string, Tensor*>> slots();
  ModelConfig config_;
};

// Closed-form parameter count for a configuration.
std::size_t expected_parameter_count(const ModelConfig& config);

// File layout: "AMOENE01", u64 LE manifest length, JSON manifest, then
// float64 LE buffers in manifest order.
void save_checkpoint(const std::filesystem::path& path, AmoModel& model, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  AmoModel model;
  nlohmann::json extra;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace amoene
