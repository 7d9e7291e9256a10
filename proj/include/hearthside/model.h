// hearthside/model.h

// Copyright 2026  Hearthside Audio Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// The desk-scale self-supervised encoder and its fine-tuning heads.
//
// Pretraining: a small conv frontend turns raw waveform into latent frames,
// a span mask hides some of them, a transformer predicts the hidden content,
// and a Gumbel-softmax quantizer provides the discrete targets for a
// contrastive loss (plus a codebook-diversity penalty).
//
// Fine-tuning: per-layer transformer outputs are mean-pooled over time,
// combined by a learned softmax-weighted average, optionally concatenated
// with a learned domain embedding and a fixed speaker embedding, and fed to
// small FFN classification heads (speaker tier, child-vocalization tier,
// adult-vocalization tier, optional domain tier).

#ifndef HEARTHSIDE_MODEL_H_
#define HEARTHSIDE_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hearthside/autodiff.h"
#include "hearthside/common.h"
#include "hearthside/nn_layers.h"
#include "hearthside/windowing.h"

namespace hearthside {
namespace nn {

// ---------------------------------------------------------------------------
// Configuration.

struct ConvSpec {
  int channels = 0;
  int kernel = 0;
  int stride = 0;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Defaults are the desk-scale recipe: total conv stride 80, four transformer
// layers of width 96. ffn_dim 0 means 4 * dim.
struct EncoderConfig {
  int sample_rate_hz = 1600;
  std::vector<ConvSpec> conv = {{48, 10, 5}, {96, 8, 4}, {96, 4, 4}};
  int layers = 4;
  int dim = 96;
  int heads = 4;
  int ffn_dim = 0;
  double dropout = 0.1;

  // Quantizer: `groups` codebooks of `entries` vectors each; the Gumbel
  // temperature starts at gumbel_temp_start and decays multiplicatively per
  // step down to gumbel_temp_floor.
  int groups = 2;
  int entries = 64;
  double gumbel_temp_start = 2.0;
  double gumbel_temp_floor = 0.5;
  double gumbel_temp_decay = 0.9995;

  // Masking: every frame starts a masked span of mask_span frames with
  // probability mask_prob.
  double mask_prob = 0.065;
  int mask_span = 10;

  // Contrastive objective: `distractors` negatives per masked frame, cosine
  // scores divided by contrastive_temp; diversity_weight scales the codebook
  // usage penalty.
  int distractors = 20;
  double contrastive_temp = 0.1;
  double diversity_weight = 0.1;

  int effective_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : 4 * dim; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

int TotalStride(const EncoderConfig& cfg);
void ValidateEncoderConfig(const EncoderConfig& cfg);
nlohmann::json EncoderConfigToJson(const EncoderConfig& cfg);
EncoderConfig EncoderConfigFromJson(const nlohmann::json& j);

enum class FeatureMode { kLastLayer, kWeightedAll };
enum class DomainTagging { kNone, kOneHotEmbedding, kMultiTask };

std::string ToString(FeatureMode mode);
std::string ToString(DomainTagging tagging);
FeatureMode FeatureModeFromString(const std::string& s);
DomainTagging DomainTaggingFromString(const std::string& s);

// Head sizes default to the desk scale: hidden d/2, domain embedding d/4,
// speaker embedding 48. With kOneHotEmbedding the domain vector is
// concatenated to every per-layer pooled feature before the weighted
// average; in kLastLayer mode it is concatenated after pooling (the one
// place the ordering is underdetermined; documented here). The speaker
// embedding feeds only the CHN and ADU heads.
struct HeadConfig {
  FeatureMode feature_mode = FeatureMode::kWeightedAll;
  DomainTagging domain_tagging = DomainTagging::kNone;
  bool use_spk_emb = false;
  int hidden = 48;
  double dropout = 0.1;
  int domain_emb_dim = 24;
  int spk_emb_dim = 48;
  int sd_classes = windowing::kSdClasses;
  int chn_classes = windowing::kChnClasses;
  int adu_classes = windowing::kAduClasses;
  int domain_classes = 2;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

void ValidateHeadConfig(const HeadConfig& cfg);
nlohmann::json HeadConfigToJson(const HeadConfig& cfg);
HeadConfig HeadConfigFromJson(const nlohmann::json& j);

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void ValidateModelConfig(const ModelConfig& cfg);
nlohmann::json ModelConfigToJson(const ModelConfig& cfg);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Pretraining building blocks.

// Span masking: each frame independently starts a span of `span` frames with
// probability p (spans clip at the end and union). An all-clear draw is
// replaced by one uniformly placed span, so at least one frame is always
// masked; with p = 0 that leaves exactly one span.
std::vector<char> MaskSpans(int frames, double p, int span, Rng* rng);

// max(floor, start * decay^step).
double GumbelTemperature(const EncoderConfig& cfg, std::int64_t step);

// Fixed sinusoidal position code, (frames, dim).
Tensor<double> SinusoidalPositions(int frames, int dim);

// Conv frontend + pre-norm transformer stack. Waveforms enter as (B, n)
// rows; frames leave as (B*T, d) rows with T = n / total_stride (extra
// samples beyond the last full stride are ignored).
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);

  // floor(n / total_stride); does not range-check.
  int FramesFor(int n_samples) const;

  // Conv frontend only: (B, n) waveform rows -> (B*T, d) latents, layer
  // normalized. Requires n within [1 s, 10 s] at the configured rate.
  Var<double> Latents(const Var<double>& waves, int batch, int n_samples);

  // Transformer stack over (B*T, d) rows; adds sinusoidal positions first.
  // Returns every layer's output, in order, each (B*T, d).
  std::vector<Var<double>> Contexts(const Var<double>& x, int batch,
                                    int frames, Rng& dropout_rng, bool train);

  struct ForwardOut {
    Var<double> latents;
    std::vector<Var<double>> layers;
    int frames = 0;
  };
  // Latents + Contexts without masking (the fine-tuning path).
  ForwardOut Forward(const Var<double>& waves, int batch, int n_samples,
                     Rng& dropout_rng, bool train);

  // The learned vector written over masked latent rows.
  const Var<double>& mask_embedding() const { return mask_emb_; }
  const EncoderConfig& config() const { return cfg_; }

  void Collect(const std::string& prefix, std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);

 private:
  EncoderConfig cfg_;
  std::vector<Conv1dLayer<double>> convs_;
  LayerNorm<double> post_conv_norm_;
  Var<double> mask_emb_;  // (1, d)
  std::vector<TransformerLayer<double>> blocks_;
};

// Gumbel-softmax vector quantizer: a linear layer scores `groups` codebooks
// of `entries` vectors (each of dim/groups), one entry is picked per group
// (hard forward, soft straight-through gradient), and the concatenated picks
// are projected back to dim.
class GumbelQuantizer {
 public:
  GumbelQuantizer() = default;
  GumbelQuantizer(const EncoderConfig& cfg, Rng& rng);

  struct Out {
    Var<double> quantized;  // (N, dim)
    // Per-group softmax of the raw codebook logits (no noise, no
    // temperature), concatenated to (N, groups * entries); this is the code
    // usage distribution the diversity loss consumes.
    Var<double> probs;
  };
  // hard = true samples one entry per group via Gumbel noise and passes the
  // soft probabilities' gradient straight through; hard = false keeps the
  // (noisy) soft mixture itself, the fully differentiable relaxation.
  Out Forward(const Var<double>& latents, double temperature, Rng& rng,
              bool hard = true);

  void Collect(const std::string& prefix, std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);

 private:
  int groups_ = 0, entries_ = 0, dim_ = 0;
  Linear<double> logit_proj_;  // dim -> groups * entries
  Var<double> codebook_;       // (groups * entries, dim / groups)
  Linear<double> out_proj_;    // dim -> dim
};

// Mean over groups of (entries - perplexity(mean probs)) / entries: zero for
// uniform code usage, approaching 1 - 1/entries under single-code collapse.
Var<double> DiversityLoss(const Var<double>& probs, int groups, int entries);

// InfoNCE over cosine similarity: per masked frame, the true quantized
// target against `distractors` other masked frames of the same segment
// (all of them when fewer are available), scores divided by kappa, averaged
// over frames. `segment_of` maps each row to its segment id; rows of one
// segment must be contiguous.
Var<double> ContrastiveLoss(const Var<double>& contexts,
                            const Var<double>& targets,
                            const std::vector<int>& segment_of,
                            int distractors, double kappa, Rng* rng);

// Encoder + quantizer wired into the masked contrastive objective.
class PretrainModel {
 public:
  PretrainModel(const EncoderConfig& cfg, Rng& rng);

  struct LossOut {
    Var<double> total;
    double contrastive = 0.0;
    double diversity = 0.0;
    double temperature = 0.0;
    int masked_frames = 0;
  };
  // waves is (B, n); all rows must share one length within [1 s, 10 s].
  // `step` drives the Gumbel temperature schedule. The rng draws masks,
  // Gumbel noise, dropout, then distractors, in that per-batch order.
  LossOut Loss(const Tensor<double>& waves, std::int64_t step, Rng& rng,
               bool train = true);

  Encoder& encoder() { return encoder_; }
  const EncoderConfig& config() const { return cfg_; }

  void Collect(std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);

 private:
  EncoderConfig cfg_;
  Encoder encoder_;
  GumbelQuantizer quantizer_;
};

// ---------------------------------------------------------------------------
// Fine-tuning head stack.

// Learned normalized weighted average over per-layer pooled features:
// f_out = sum_i alpha_i f_i with alpha = softmax(logits), so every weight is
// positive and they sum to one by construction.
class LayerFusion {
 public:
  LayerFusion() = default;
  explicit LayerFusion(int layers);

  // pooled: one (B, dim) feature matrix per layer, equal dims.
  Var<double> Forward(const std::vector<Var<double>>& pooled);

  // Current softmax(logits), for reporting.
  Tensor<double> Weights() const;

  void Collect(const std::string& prefix, std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);

 private:
  int layers_ = 0;
  Var<double> logits_;  // (1, layers)
};

// Linear -> BatchNorm -> LeakyReLU -> Dropout -> Linear.
class FfnHead {
 public:
  FfnHead() = default;
  FfnHead(int in_dim, int hidden, int classes, double dropout, Rng& rng);

  Var<double> Forward(const Var<double>& x, Rng& rng, bool train);

  void Collect(const std::string& prefix, std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);

 private:
  Linear<double> fc1_;
  BatchNorm1d<double> bn_;
  Linear<double> fc2_;
  double dropout_ = 0.1;
};

// Per-window training targets; -1 marks "tier undefined here", either
// because the label does not define it (a FAN window has no CHN class) or
// because the window's tier mask blocks it (augmented copies).
struct WindowTarget {
  int sd = -1;
  int chn = -1;
  int adu = -1;
  int domain = -1;
};

WindowTarget TargetsFor(const windowing::LabeledWindow& window);

// Tier loss combination weights. Defaults follow the two published settings:
// (0.33, 0.33, 0.33, 0) without a domain head, (0.32, 0.32, 0.32, 0.03)
// with one.
struct LossWeights {
  double sd = 0.33;
  double chn = 0.33;
  double adu = 0.33;
  double domain = 0.0;
};

LossWeights DefaultLossWeights(bool with_domain_head);

// The bare weighted combination; kept separate so the arithmetic is
// testable without a model.
double CombineTierLosses(double sd, double chn, double adu, double domain,
                         const LossWeights& w);

// The full fine-tuning model: encoder, per-layer mean pooling, optional
// domain embedding, weighted-average fusion, and the FFN heads.
class ClassifierModel {
 public:
  ClassifierModel(const ModelConfig& cfg, Rng& rng);

  struct Logits {
    Var<double> sd;
    Var<double> chn;
    Var<double> adu;
    Var<double> domain;  // defined iff the config says kMultiTask
    bool has_domain = false;
  };

  // Encoder forward + per-layer mean pooling: L matrices of (B, d). The
  // frozen-encoder training path caches these and resumes from
  // ForwardFromPooled.
  std::vector<Var<double>> PooledLayers(const Var<double>& waves, int batch,
                                        int n_samples, Rng& dropout_rng,
                                        bool train);

  // Fusion + heads. domain_ids are 0 (In) / 1 (Out) per window, used by the
  // kOneHotEmbedding concatenation; spk is the (B, spk_emb_dim) speaker
  // embedding matrix, required iff use_spk_emb.
  Logits ForwardFromPooled(const std::vector<Var<double>>& pooled,
                           const std::vector<int>& domain_ids,
                           const Tensor<double>* spk, Rng& dropout_rng,
                           bool train);

  Logits Forward(const Var<double>& waves, int batch, int n_samples,
                 const std::vector<int>& domain_ids, const Tensor<double>* spk,
                 Rng& dropout_rng, bool train);

  Encoder& encoder() { return encoder_; }
  const ModelConfig& config() const { return cfg_; }
  LayerFusion& fusion() { return fusion_; }

  void Collect(std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);
  // Only the encoder's parameters, for the freeze / two-group-lr split.
  void CollectEncoder(std::vector<NamedParam<double>>* params,
                      std::vector<NamedBuffer<double>>* buffers);
  // Everything except the encoder (fusion, embeddings, heads).
  void CollectHeads(std::vector<NamedParam<double>>* params,
                    std::vector<NamedBuffer<double>>* buffers);

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  EmbeddingTable<double> domain_emb_;  // used iff kOneHotEmbedding
  LayerFusion fusion_;                 // used iff kWeightedAll
  FfnHead sd_head_, chn_head_, adu_head_;
  FfnHead domain_head_;  // used iff kMultiTask
};

// Per-tier cross-entropy values and contributing row counts, for history.
struct TierLossValues {
  double sd = 0.0, chn = 0.0, adu = 0.0, domain = 0.0;
  int sd_rows = 0, chn_rows = 0, adu_rows = 0, domain_rows = 0;
};

// Each tier's cross-entropy is averaged over the windows where its target
// is defined; a tier with no contributing window contributes zero. The
// result is the weighted sum over tiers.
Var<double> MultitaskLoss(const ClassifierModel::Logits& logits,
                          const std::vector<WindowTarget>& targets,
                          const LossWeights& weights,
                          TierLossValues* values = nullptr);

// ---------------------------------------------------------------------------
// Speaker embedder.

// Small conv stack + statistics pooling (mean and standard deviation over
// frames) + linear, L2-normalized. A stand-in for a full speaker-verification
// network: the interface (short waveform in, unit vector out) is what the
// heads consume.
struct SpeakerEmbedderConfig {
  int sample_rate_hz = 1600;
  std::vector<ConvSpec> conv = {{32, 10, 5}, {48, 8, 4}, {48, 4, 4}};
  int emb_dim = 48;

  friend bool operator==(const SpeakerEmbedderConfig&,
                         const SpeakerEmbedderConfig&) = default;
};

nlohmann::json SpeakerEmbedderConfigToJson(const SpeakerEmbedderConfig& cfg);
SpeakerEmbedderConfig SpeakerEmbedderConfigFromJson(const nlohmann::json& j);

class SpeakerEmbedder {
 public:
  SpeakerEmbedder() = default;
  SpeakerEmbedder(const SpeakerEmbedderConfig& cfg, Rng& rng);

  // (B, n) waveform rows -> (B, emb_dim) unit rows. Differentiable; used
  // both for training (with an external classification head) and inference.
  Var<double> Forward(const Var<double>& waves, int batch, int n_samples);

  // Inference path: requires a trained embedder (the trained flag is set by
  // the training loop and travels with the checkpoint).
  Tensor<double> Embed(const Tensor<double>& waves);

  bool trained() const { return trained_flag_.v[0] != 0.0; }
  void MarkTrained() { trained_flag_.v[0] = 1.0; }
  const SpeakerEmbedderConfig& config() const { return cfg_; }

  void Collect(const std::string& prefix, std::vector<NamedParam<double>>* params,
               std::vector<NamedBuffer<double>>* buffers);

 private:
  SpeakerEmbedderConfig cfg_;
  std::vector<Conv1dLayer<double>> convs_;
  Linear<double> out_;
  Tensor<double> trained_flag_{std::vector<int>{1}};
};

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_MODEL_H_
