// model.cc

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

#include "hearthside/model.h"

#include <algorithm>
#include <cmath>
#include <utility>

namespace hearthside {
namespace nn {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration.

int TotalStride(const EncoderConfig& cfg) {
  int stride = 1;
  for (const auto& c : cfg.conv) stride *= c.stride;
  return stride;
}

void ValidateEncoderConfig(const EncoderConfig& cfg) {
  Require(cfg.sample_rate_hz > 0, "sample rate must be positive");
  Require(!cfg.conv.empty(), "encoder needs at least one conv layer");
  for (const auto& c : cfg.conv) {
    Require(c.channels > 0 && c.kernel > 0 && c.stride > 0,
            "conv channels, kernel and stride must be positive");
  }
  Require(cfg.conv.back().channels == cfg.dim,
          "last conv channel count must equal the model dim");
  Require(cfg.layers >= 1, "need at least one transformer layer");
  Require(cfg.dim >= 1 && cfg.heads >= 1, "dim and heads must be positive");
  Require(cfg.dim % cfg.heads == 0, "dim must be divisible by heads");
  Require(cfg.ffn_dim >= 0, "ffn_dim must be non-negative (0 means 4*dim)");
  Require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout must be in [0,1)");
  Require(cfg.groups >= 1, "quantizer needs at least one group");
  Require(cfg.entries >= 2, "quantizer needs at least two entries per group");
  Require(cfg.dim % cfg.groups == 0, "dim must be divisible by groups");
  Require(cfg.gumbel_temp_floor > 0.0 &&
              cfg.gumbel_temp_start >= cfg.gumbel_temp_floor,
          "Gumbel temperature schedule must satisfy start >= floor > 0");
  Require(cfg.gumbel_temp_decay > 0.0 && cfg.gumbel_temp_decay <= 1.0,
          "Gumbel temperature decay must be in (0,1]");
  Require(cfg.mask_prob >= 0.0 && cfg.mask_prob <= 1.0,
          "mask probability must be in [0,1]");
  Require(cfg.mask_span >= 1, "mask span must be positive");
  Require(cfg.mask_prob * cfg.mask_span < 1.0,
          "expected masked fraction p*M must stay below 1");
  Require(cfg.distractors >= 1, "need at least one distractor");
  Require(cfg.contrastive_temp > 0.0, "contrastive temperature must be positive");
  Require(cfg.diversity_weight >= 0.0, "diversity weight must be non-negative");
}

json EncoderConfigToJson(const EncoderConfig& cfg) {
  json conv = json::array();
  for (const auto& c : cfg.conv) {
    conv.push_back({{"channels", c.channels},
                    {"kernel", c.kernel},
                    {"stride", c.stride}});
  }
  return json{{"sample_rate_hz", cfg.sample_rate_hz},
              {"conv", conv},
              {"layers", cfg.layers},
              {"dim", cfg.dim},
              {"heads", cfg.heads},
              {"ffn_dim", cfg.ffn_dim},
              {"dropout", cfg.dropout},
              {"groups", cfg.groups},
              {"entries", cfg.entries},
              {"gumbel_temp_start", cfg.gumbel_temp_start},
              {"gumbel_temp_floor", cfg.gumbel_temp_floor},
              {"gumbel_temp_decay", cfg.gumbel_temp_decay},
              {"mask_prob", cfg.mask_prob},
              {"mask_span", cfg.mask_span},
              {"distractors", cfg.distractors},
              {"contrastive_temp", cfg.contrastive_temp},
              {"diversity_weight", cfg.diversity_weight}};
}

EncoderConfig EncoderConfigFromJson(const json& j) {
  EncoderConfig cfg;
  cfg.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  cfg.conv.clear();
  for (const auto& c : j.at("conv")) {
    cfg.conv.push_back({c.at("channels").get<int>(), c.at("kernel").get<int>(),
                        c.at("stride").get<int>()});
  }
  cfg.layers = j.at("layers").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.groups = j.at("groups").get<int>();
  cfg.entries = j.at("entries").get<int>();
  cfg.gumbel_temp_start = j.at("gumbel_temp_start").get<double>();
  cfg.gumbel_temp_floor = j.at("gumbel_temp_floor").get<double>();
  cfg.gumbel_temp_decay = j.at("gumbel_temp_decay").get<double>();
  cfg.mask_prob = j.at("mask_prob").get<double>();
  cfg.mask_span = j.at("mask_span").get<int>();
  cfg.distractors = j.at("distractors").get<int>();
  cfg.contrastive_temp = j.at("contrastive_temp").get<double>();
  cfg.diversity_weight = j.at("diversity_weight").get<double>();
  ValidateEncoderConfig(cfg);
  return cfg;
}

std::string ToString(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::kLastLayer: return "last_layer";
    case FeatureMode::kWeightedAll: return "weighted_all";
  }
  throw Error("unknown feature mode");
}

std::string ToString(DomainTagging tagging) {
  switch (tagging) {
    case DomainTagging::kNone: return "none";
    case DomainTagging::kOneHotEmbedding: return "one_hot_embedding";
    case DomainTagging::kMultiTask: return "multi_task";
  }
  throw Error("unknown domain tagging mode");
}

FeatureMode FeatureModeFromString(const std::string& s) {
  if (s == "last_layer") return FeatureMode::kLastLayer;
  if (s == "weighted_all") return FeatureMode::kWeightedAll;
  throw ValidationError("unknown feature mode: " + s);
}

DomainTagging DomainTaggingFromString(const std::string& s) {
  if (s == "none") return DomainTagging::kNone;
  if (s == "one_hot_embedding") return DomainTagging::kOneHotEmbedding;
  if (s == "multi_task") return DomainTagging::kMultiTask;
  throw ValidationError("unknown domain tagging mode: " + s);
}

void ValidateHeadConfig(const HeadConfig& cfg) {
  Require(cfg.hidden >= 1, "head hidden size must be positive");
  Require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout must be in [0,1)");
  Require(cfg.domain_emb_dim >= 1, "domain embedding dim must be positive");
  Require(cfg.spk_emb_dim >= 1, "speaker embedding dim must be positive");
  Require(cfg.sd_classes >= 2 && cfg.chn_classes >= 2 && cfg.adu_classes >= 2,
          "each tier needs at least two classes");
  Require(cfg.domain_classes == 2, "domain head is binary");
}

json HeadConfigToJson(const HeadConfig& cfg) {
  return json{{"feature_mode", ToString(cfg.feature_mode)},
              {"domain_tagging", ToString(cfg.domain_tagging)},
              {"use_spk_emb", cfg.use_spk_emb},
              {"hidden", cfg.hidden},
              {"dropout", cfg.dropout},
              {"domain_emb_dim", cfg.domain_emb_dim},
              {"spk_emb_dim", cfg.spk_emb_dim},
              {"sd_classes", cfg.sd_classes},
              {"chn_classes", cfg.chn_classes},
              {"adu_classes", cfg.adu_classes},
              {"domain_classes", cfg.domain_classes}};
}

HeadConfig HeadConfigFromJson(const json& j) {
  HeadConfig cfg;
  cfg.feature_mode = FeatureModeFromString(j.at("feature_mode").get<std::string>());
  cfg.domain_tagging =
      DomainTaggingFromString(j.at("domain_tagging").get<std::string>());
  cfg.use_spk_emb = j.at("use_spk_emb").get<bool>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.domain_emb_dim = j.at("domain_emb_dim").get<int>();
  cfg.spk_emb_dim = j.at("spk_emb_dim").get<int>();
  cfg.sd_classes = j.at("sd_classes").get<int>();
  cfg.chn_classes = j.at("chn_classes").get<int>();
  cfg.adu_classes = j.at("adu_classes").get<int>();
  cfg.domain_classes = j.at("domain_classes").get<int>();
  ValidateHeadConfig(cfg);
  return cfg;
}

void ValidateModelConfig(const ModelConfig& cfg) {
  ValidateEncoderConfig(cfg.encoder);
  ValidateHeadConfig(cfg.head);
}

json ModelConfigToJson(const ModelConfig& cfg) {
  return json{{"encoder", EncoderConfigToJson(cfg.encoder)},
              {"head", HeadConfigToJson(cfg.head)}};
}

ModelConfig ModelConfigFromJson(const json& j) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfigFromJson(j.at("encoder"));
  cfg.head = HeadConfigFromJson(j.at("head"));
  return cfg;
}

// ---------------------------------------------------------------------------
// Masking, schedule, positions.

std::vector<char> MaskSpans(int frames, double p, int span, Rng* rng) {
  Require(frames > span, "need more frames than the span length");
  Require(p >= 0.0 && p <= 1.0, "span start probability must be in [0,1]");
  std::vector<char> mask(static_cast<std::size_t>(frames), 0);
  for (int i = 0; i < frames; ++i) {
    if (rng->Uniform() < p) {
      const int end = std::min(frames, i + span);
      for (int j = i; j < end; ++j) mask[static_cast<std::size_t>(j)] = 1;
    }
  }
  bool any = false;
  for (char m : mask) any = any || (m != 0);
  if (!any) {
    const int start = static_cast<int>(rng->UniformInt(frames));
    const int end = std::min(frames, start + span);
    for (int j = start; j < end; ++j) mask[static_cast<std::size_t>(j)] = 1;
  }
  return mask;
}

double GumbelTemperature(const EncoderConfig& cfg, std::int64_t step) {
  Require(step >= 0, "step must be non-negative");
  return std::max(cfg.gumbel_temp_floor,
                  cfg.gumbel_temp_start *
                      std::pow(cfg.gumbel_temp_decay, static_cast<double>(step)));
}

Tensor<double> SinusoidalPositions(int frames, int dim) {
  Tensor<double> pos({frames, dim});
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; 2 * i < dim; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / dim);
      pos.at(t, 2 * i) = std::sin(t * freq);
      if (2 * i + 1 < dim) pos.at(t, 2 * i + 1) = std::cos(t * freq);
    }
  }
  return pos;
}

// ---------------------------------------------------------------------------
// Encoder.

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  ValidateEncoderConfig(cfg);
  int cin = 1;
  for (const auto& c : cfg.conv) {
    // SAME-style padding: with the input a multiple of the stride, output
    // length is exactly input / stride.
    const int pad = std::max(c.kernel - c.stride, 0);
    convs_.emplace_back(cin, c.channels, c.kernel, c.stride, pad / 2,
                        pad - pad / 2, rng);
    cin = c.channels;
  }
  post_conv_norm_ = LayerNorm<double>(cfg.dim);
  mask_emb_ = Param(XavierUniform<double>({1, cfg.dim}, cfg.dim, cfg.dim, rng));
  for (int i = 0; i < cfg.layers; ++i) {
    blocks_.emplace_back(cfg.dim, cfg.heads, cfg.effective_ffn_dim(),
                         cfg.dropout, rng);
  }
}

int Encoder::FramesFor(int n_samples) const {
  return n_samples / TotalStride(cfg_);
}

Var<double> Encoder::Latents(const Var<double>& waves, int batch,
                             int n_samples) {
  Require(batch >= 1, "empty batch");
  HS_CHECK(waves.value().rows() == batch && waves.value().cols() == n_samples);
  Require(n_samples >= cfg_.sample_rate_hz &&
              n_samples <= 10 * cfg_.sample_rate_hz,
          "waveform length must be within [1 s, 10 s]");
  const int frames = FramesFor(n_samples);
  const int used = frames * TotalStride(cfg_);
  Var<double> x = used < n_samples ? SliceCols(waves, 0, used) : waves;
  x = Reshape(x, {batch, 1, used});
  for (auto& conv : convs_) x = LeakyRelu(conv.Forward(x));
  // (B, d, T) -> (B*T, d).
  x = Reshape(Permute0213(Reshape(x, {batch, cfg_.dim, frames, 1})),
              {batch * frames, cfg_.dim});
  return post_conv_norm_.Forward(x);
}

std::vector<Var<double>> Encoder::Contexts(const Var<double>& x, int batch,
                                           int frames, Rng& dropout_rng,
                                           bool train) {
  HS_CHECK(x.value().rows() == batch * frames &&
           x.value().cols() == cfg_.dim);
  const Tensor<double> pos = SinusoidalPositions(frames, cfg_.dim);
  Tensor<double> tiled({batch * frames, cfg_.dim});
  for (int b = 0; b < batch; ++b) {
    std::copy(pos.v.begin(), pos.v.end(),
              tiled.v.begin() + static_cast<std::ptrdiff_t>(b) * pos.numel());
  }
  Var<double> h = Add(x, Constant(std::move(tiled)));
  std::vector<Var<double>> out;
  out.reserve(blocks_.size());
  for (auto& block : blocks_) {
    h = block.Forward(h, batch, frames, dropout_rng, train);
    out.push_back(h);
  }
  return out;
}

Encoder::ForwardOut Encoder::Forward(const Var<double>& waves, int batch,
                                     int n_samples, Rng& dropout_rng,
                                     bool train) {
  ForwardOut out;
  out.latents = Latents(waves, batch, n_samples);
  out.frames = FramesFor(n_samples);
  out.layers = Contexts(out.latents, batch, out.frames, dropout_rng, train);
  return out;
}

void Encoder::Collect(const std::string& prefix,
                      std::vector<NamedParam<double>>* params,
                      std::vector<NamedBuffer<double>>* buffers) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].Collect(prefix + ".conv" + std::to_string(i), params, buffers);
  }
  post_conv_norm_.Collect(prefix + ".post_conv_norm", params, buffers);
  params->push_back({prefix + ".mask_emb", mask_emb_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].Collect(prefix + ".block" + std::to_string(i), params, buffers);
  }
}

// ---------------------------------------------------------------------------
// Quantizer.

GumbelQuantizer::GumbelQuantizer(const EncoderConfig& cfg, Rng& rng)
    : groups_(cfg.groups), entries_(cfg.entries), dim_(cfg.dim) {
  const int entry_dim = dim_ / groups_;
  logit_proj_ = Linear<double>(dim_, groups_ * entries_, rng);
  codebook_ = Param(XavierUniform<double>({groups_ * entries_, entry_dim},
                                          entries_, entry_dim, rng));
  out_proj_ = Linear<double>(dim_, dim_, rng);
}

GumbelQuantizer::Out GumbelQuantizer::Forward(const Var<double>& latents,
                                              double temperature, Rng& rng,
                                              bool hard) {
  Require(temperature > 0.0, "quantizer temperature must be positive");
  const int n = latents.value().rows();
  HS_CHECK(latents.value().cols() == dim_);

  Var<double> logits = logit_proj_.Forward(latents);  // (N, G*V)

  // Code usage distribution: per-group softmax of the raw logits.
  std::vector<Var<double>> prob_parts;
  prob_parts.reserve(static_cast<std::size_t>(groups_));
  for (int g = 0; g < groups_; ++g) {
    prob_parts.push_back(
        SoftmaxLastDim(SliceCols(logits, g * entries_, entries_)));
  }

  Tensor<double> noise({n, groups_ * entries_});
  for (auto& v : noise.v) v = rng.Gumbel();
  Var<double> noisy =
      Scale(Add(logits, Constant(std::move(noise))), 1.0 / temperature);

  std::vector<Var<double>> picks;
  picks.reserve(static_cast<std::size_t>(groups_));
  for (int g = 0; g < groups_; ++g) {
    Var<double> soft = SoftmaxLastDim(SliceCols(noisy, g * entries_, entries_));
    Var<double> sel = soft;
    if (hard) {
      Tensor<double> onehot({n, entries_});
      for (int r = 0; r < n; ++r) {
        int best = 0;
        for (int v = 1; v < entries_; ++v) {
          if (soft.value().at(r, v) > soft.value().at(r, best)) best = v;
        }
        onehot.at(r, best) = 1.0;
      }
      // Hard forward value, soft gradient.
      sel = Add(Sub(Constant(std::move(onehot)), Detach(soft)), soft);
    }
    std::vector<int> rows(static_cast<std::size_t>(entries_));
    for (int v = 0; v < entries_; ++v) {
      rows[static_cast<std::size_t>(v)] = g * entries_ + v;
    }
    Var<double> cb = GatherRows(codebook_, rows);  // (V, entry_dim)
    picks.push_back(MatMul(sel, cb));              // (N, entry_dim)
  }

  Out out;
  out.quantized = out_proj_.Forward(ConcatCols(picks));
  out.probs = ConcatCols(prob_parts);
  return out;
}

void GumbelQuantizer::Collect(const std::string& prefix,
                              std::vector<NamedParam<double>>* params,
                              std::vector<NamedBuffer<double>>* buffers) {
  logit_proj_.Collect(prefix + ".logit_proj", params, buffers);
  params->push_back({prefix + ".codebook", codebook_});
  out_proj_.Collect(prefix + ".out_proj", params, buffers);
}

// ---------------------------------------------------------------------------
// Pretraining losses.

Var<double> DiversityLoss(const Var<double>& probs, int groups, int entries) {
  const int n = probs.value().rows();
  HS_CHECK(probs.value().cols() == groups * entries);
  Require(n >= 1, "diversity loss needs at least one frame");
  std::vector<Var<double>> terms;
  terms.reserve(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    Var<double> mean =
        MeanPoolTime(SliceCols(probs, g * entries, entries), 1, n);  // (1, V)
    Var<double> entropy = Scale(
        SumAll(Mul(mean, Log(AddScalar(mean, 1e-12)))), -1.0);
    Var<double> perplexity = Exp(entropy);
    terms.push_back(Scale(
        AddScalar(Scale(perplexity, -1.0), static_cast<double>(entries)),
        1.0 / entries));
  }
  return LinComb(terms,
                 std::vector<double>(terms.size(), 1.0 / terms.size()));
}

Var<double> ContrastiveLoss(const Var<double>& contexts,
                            const Var<double>& targets,
                            const std::vector<int>& segment_of,
                            int distractors, double kappa, Rng* rng) {
  const int n = contexts.value().rows();
  HS_CHECK(targets.value().rows() == n &&
           targets.value().cols() == contexts.value().cols());
  HS_CHECK(static_cast<int>(segment_of.size()) == n);
  Require(n >= 1, "contrastive loss needs at least one masked frame");
  Require(kappa > 0.0, "contrastive temperature must be positive");

  Var<double> c = NormalizeRows(contexts);
  Var<double> q = NormalizeRows(targets);

  std::vector<Var<double>> terms;
  std::vector<double> weights;
  int start = 0;
  while (start < n) {
    int end = start;
    while (end < n && segment_of[static_cast<std::size_t>(end)] ==
                          segment_of[static_cast<std::size_t>(start)]) {
      ++end;
    }
    const int m = end - start;
    std::vector<int> rows(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) rows[static_cast<std::size_t>(i)] = start + i;

    Var<double> sims = Scale(
        MatMul(GatherRows(c, rows), GatherRows(q, rows), false, true),
        1.0 / kappa);  // (m, m) cosine scores

    const int k = std::min(distractors, m - 1);
    std::vector<std::vector<int>> idx(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) {
      auto& cols = idx[static_cast<std::size_t>(r)];
      cols.reserve(static_cast<std::size_t>(k) + 1);
      cols.push_back(r);  // the true target scores first
      std::vector<int> others;
      others.reserve(static_cast<std::size_t>(m) - 1);
      for (int j = 0; j < m; ++j) {
        if (j != r) others.push_back(j);
      }
      if (k == m - 1) {
        cols.insert(cols.end(), others.begin(), others.end());
      } else {
        // Partial Fisher-Yates draw of k distractors without replacement.
        for (int i = 0; i < k; ++i) {
          const std::int64_t j =
              i + rng->UniformInt(static_cast<std::int64_t>(others.size()) - i);
          std::swap(others[static_cast<std::size_t>(i)],
                    others[static_cast<std::size_t>(j)]);
          cols.push_back(others[static_cast<std::size_t>(i)]);
        }
      }
    }
    Var<double> scores = GatherColsPerRow(sims, std::move(idx));
    std::vector<int> zeros(static_cast<std::size_t>(m), 0);
    std::vector<int> all(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) all[static_cast<std::size_t>(i)] = i;
    terms.push_back(CeMeanRows(scores, zeros, all));
    weights.push_back(static_cast<double>(m) / n);
    start = end;
  }
  return LinComb(terms, weights);
}

// ---------------------------------------------------------------------------
// PretrainModel.

PretrainModel::PretrainModel(const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg), encoder_(cfg, rng), quantizer_(cfg, rng) {}

PretrainModel::LossOut PretrainModel::Loss(const Tensor<double>& waves,
                                           std::int64_t step, Rng& rng,
                                           bool train) {
  const int batch = waves.rows();
  const int n_samples = waves.cols();
  Require(batch >= 1, "empty batch");

  Var<double> lat = encoder_.Latents(Constant(waves), batch, n_samples);
  const int frames = encoder_.FramesFor(n_samples);

  std::vector<char> mask;
  mask.reserve(static_cast<std::size_t>(batch * frames));
  for (int b = 0; b < batch; ++b) {
    auto one = MaskSpans(frames, cfg_.mask_prob, cfg_.mask_span, &rng);
    mask.insert(mask.end(), one.begin(), one.end());
  }
  std::vector<int> masked_rows;
  for (int i = 0; i < batch * frames; ++i) {
    if (mask[static_cast<std::size_t>(i)]) masked_rows.push_back(i);
  }
  std::vector<int> segment_of(masked_rows.size());
  for (std::size_t i = 0; i < masked_rows.size(); ++i) {
    segment_of[i] = masked_rows[i] / frames;
  }

  const double temperature = GumbelTemperature(cfg_, step);
  // Targets are quantized from the unmasked latents at the masked rows.
  GumbelQuantizer::Out q =
      quantizer_.Forward(GatherRows(lat, masked_rows), temperature, rng, true);

  Var<double> hidden =
      MaskRowsReplace(lat, mask, encoder_.mask_embedding());
  std::vector<Var<double>> contexts =
      encoder_.Contexts(hidden, batch, frames, rng, train);

  Var<double> c = GatherRows(contexts.back(), masked_rows);
  Var<double> contrastive = ContrastiveLoss(
      c, q.quantized, segment_of, cfg_.distractors, cfg_.contrastive_temp,
      &rng);
  Var<double> diversity = DiversityLoss(q.probs, cfg_.groups, cfg_.entries);

  LossOut out;
  out.total = Add(contrastive, Scale(diversity, cfg_.diversity_weight));
  out.contrastive = contrastive.value().v[0];
  out.diversity = diversity.value().v[0];
  out.temperature = temperature;
  out.masked_frames = static_cast<int>(masked_rows.size());
  return out;
}

void PretrainModel::Collect(std::vector<NamedParam<double>>* params,
                            std::vector<NamedBuffer<double>>* buffers) {
  encoder_.Collect("encoder", params, buffers);
  quantizer_.Collect("quantizer", params, buffers);
}

// ---------------------------------------------------------------------------
// Fusion and heads.

LayerFusion::LayerFusion(int layers) : layers_(layers) {
  Require(layers >= 1, "fusion needs at least one layer");
  logits_ = Param(Tensor<double>({1, layers}));  // uniform weights at start
}

Var<double> LayerFusion::Forward(const std::vector<Var<double>>& pooled) {
  Require(static_cast<int>(pooled.size()) == layers_,
          "layer count mismatch in fusion");
  const int dim = pooled[0].value().cols();
  for (const auto& p : pooled) {
    HS_CHECK(p.value().cols() == dim &&
             p.value().rows() == pooled[0].value().rows());
  }
  Var<double> alphas = SoftmaxLastDim(logits_);  // (1, L)

  // f_out = sum_i alpha_i f_i, phrased as two fixed matrix products so the
  // gradient reaches both the logits and the features.
  Tensor<double> tile({layers_, layers_ * dim});
  Tensor<double> fold({layers_ * dim, dim});
  for (int i = 0; i < layers_; ++i) {
    for (int j = 0; j < dim; ++j) {
      tile.at(i, i * dim + j) = 1.0;
      fold.at(i * dim + j, j) = 1.0;
    }
  }
  Var<double> wrow = MatMul(alphas, Constant(std::move(tile)));  // (1, L*dim)
  Var<double> stacked = ConcatCols(pooled);                      // (B, L*dim)
  return MatMul(MulRowVec(stacked, wrow), Constant(std::move(fold)));
}

Tensor<double> LayerFusion::Weights() const {
  Tensor<double> w = logits_.value();
  double mx = w.v[0];
  for (double v : w.v) mx = std::max(mx, v);
  double sum = 0.0;
  for (auto& v : w.v) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : w.v) v /= sum;
  return w;
}

void LayerFusion::Collect(const std::string& prefix,
                          std::vector<NamedParam<double>>* params,
                          std::vector<NamedBuffer<double>>* /*buffers*/) {
  params->push_back({prefix + ".logits", logits_});
}

FfnHead::FfnHead(int in_dim, int hidden, int classes, double dropout, Rng& rng)
    : fc1_(in_dim, hidden, rng), bn_(hidden), fc2_(hidden, classes, rng),
      dropout_(dropout) {}

Var<double> FfnHead::Forward(const Var<double>& x, Rng& rng, bool train) {
  Var<double> h = LeakyRelu(bn_.Forward(fc1_.Forward(x), train));
  return fc2_.Forward(Dropout(h, dropout_, rng, train));
}

void FfnHead::Collect(const std::string& prefix,
                      std::vector<NamedParam<double>>* params,
                      std::vector<NamedBuffer<double>>* buffers) {
  fc1_.Collect(prefix + ".fc1", params, buffers);
  bn_.Collect(prefix + ".bn", params, buffers);
  fc2_.Collect(prefix + ".fc2", params, buffers);
}

// ---------------------------------------------------------------------------
// Targets and loss weights.

WindowTarget TargetsFor(const windowing::LabeledWindow& window) {
  WindowTarget t;
  if (window.tier_mask.sd) t.sd = window.sd_label;
  if (window.tier_mask.chn && window.chn_label) t.chn = *window.chn_label;
  if (window.tier_mask.adu && window.adu_label) t.adu = *window.adu_label;
  t.domain = window.domain == corpus::Domain::kIn ? 0 : 1;
  return t;
}

LossWeights DefaultLossWeights(bool with_domain_head) {
  if (with_domain_head) return {0.32, 0.32, 0.32, 0.03};
  return {0.33, 0.33, 0.33, 0.0};
}

double CombineTierLosses(double sd, double chn, double adu, double domain,
                         const LossWeights& w) {
  return w.sd * sd + w.chn * chn + w.adu * adu + w.domain * domain;
}

// ---------------------------------------------------------------------------
// ClassifierModel.

ClassifierModel::ClassifierModel(const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  ValidateModelConfig(cfg);
  encoder_ = Encoder(cfg.encoder, rng);
  const bool one_hot = cfg.head.domain_tagging == DomainTagging::kOneHotEmbedding;
  const bool multi_task = cfg.head.domain_tagging == DomainTagging::kMultiTask;
  if (one_hot) {
    domain_emb_ = EmbeddingTable<double>(2, cfg.head.domain_emb_dim, rng);
  }
  if (cfg.head.feature_mode == FeatureMode::kWeightedAll) {
    fusion_ = LayerFusion(cfg.encoder.layers);
  }
  const int feat = cfg.encoder.dim + (one_hot ? cfg.head.domain_emb_dim : 0);
  const int vc_in = feat + (cfg.head.use_spk_emb ? cfg.head.spk_emb_dim : 0);
  sd_head_ = FfnHead(feat, cfg.head.hidden, cfg.head.sd_classes,
                     cfg.head.dropout, rng);
  chn_head_ = FfnHead(vc_in, cfg.head.hidden, cfg.head.chn_classes,
                      cfg.head.dropout, rng);
  adu_head_ = FfnHead(vc_in, cfg.head.hidden, cfg.head.adu_classes,
                      cfg.head.dropout, rng);
  if (multi_task) {
    domain_head_ = FfnHead(feat, cfg.head.hidden, cfg.head.domain_classes,
                           cfg.head.dropout, rng);
  }
}

std::vector<Var<double>> ClassifierModel::PooledLayers(const Var<double>& waves,
                                                       int batch, int n_samples,
                                                       Rng& dropout_rng,
                                                       bool train) {
  Encoder::ForwardOut enc =
      encoder_.Forward(waves, batch, n_samples, dropout_rng, train);
  std::vector<Var<double>> pooled;
  pooled.reserve(enc.layers.size());
  for (const auto& layer : enc.layers) {
    pooled.push_back(MeanPoolTime(layer, batch, enc.frames));
  }
  return pooled;
}

ClassifierModel::Logits ClassifierModel::ForwardFromPooled(
    const std::vector<Var<double>>& pooled, const std::vector<int>& domain_ids,
    const Tensor<double>* spk, Rng& dropout_rng, bool train) {
  Require(static_cast<int>(pooled.size()) == cfg_.encoder.layers,
          "pooled layer count mismatch");
  const int batch = pooled[0].value().rows();

  std::vector<Var<double>> work = pooled;
  if (cfg_.head.domain_tagging == DomainTagging::kOneHotEmbedding) {
    Require(static_cast<int>(domain_ids.size()) == batch,
            "domain ids required for the domain embedding");
    for (int id : domain_ids) Require(id == 0 || id == 1, "domain id not 0/1");
    Var<double> dom = domain_emb_.Lookup(domain_ids);
    for (auto& w : work) w = ConcatCols<double>({w, dom});
  }

  Var<double> feature = cfg_.head.feature_mode == FeatureMode::kLastLayer
                            ? work.back()
                            : fusion_.Forward(work);

  Var<double> vc_in = feature;
  if (cfg_.head.use_spk_emb) {
    Require(spk != nullptr, "speaker embeddings required by this config");
    HS_CHECK(spk->rows() == batch && spk->cols() == cfg_.head.spk_emb_dim);
    vc_in = ConcatCols<double>({feature, Constant(*spk)});
  }

  Logits out;
  out.sd = sd_head_.Forward(feature, dropout_rng, train);
  out.chn = chn_head_.Forward(vc_in, dropout_rng, train);
  out.adu = adu_head_.Forward(vc_in, dropout_rng, train);
  if (cfg_.head.domain_tagging == DomainTagging::kMultiTask) {
    out.domain = domain_head_.Forward(feature, dropout_rng, train);
    out.has_domain = true;
  }
  return out;
}

ClassifierModel::Logits ClassifierModel::Forward(
    const Var<double>& waves, int batch, int n_samples,
    const std::vector<int>& domain_ids, const Tensor<double>* spk,
    Rng& dropout_rng, bool train) {
  return ForwardFromPooled(PooledLayers(waves, batch, n_samples, dropout_rng,
                                        train),
                           domain_ids, spk, dropout_rng, train);
}

void ClassifierModel::Collect(std::vector<NamedParam<double>>* params,
                              std::vector<NamedBuffer<double>>* buffers) {
  CollectEncoder(params, buffers);
  CollectHeads(params, buffers);
}

void ClassifierModel::CollectEncoder(std::vector<NamedParam<double>>* params,
                                     std::vector<NamedBuffer<double>>* buffers) {
  encoder_.Collect("encoder", params, buffers);
}

void ClassifierModel::CollectHeads(std::vector<NamedParam<double>>* params,
                                   std::vector<NamedBuffer<double>>* buffers) {
  if (cfg_.head.domain_tagging == DomainTagging::kOneHotEmbedding) {
    domain_emb_.Collect("domain_emb", params, buffers);
  }
  if (cfg_.head.feature_mode == FeatureMode::kWeightedAll) {
    fusion_.Collect("fusion", params, buffers);
  }
  sd_head_.Collect("sd_head", params, buffers);
  chn_head_.Collect("chn_head", params, buffers);
  adu_head_.Collect("adu_head", params, buffers);
  if (cfg_.head.domain_tagging == DomainTagging::kMultiTask) {
    domain_head_.Collect("domain_head", params, buffers);
  }
}

Var<double> MultitaskLoss(const ClassifierModel::Logits& logits,
                          const std::vector<WindowTarget>& targets,
                          const LossWeights& weights, TierLossValues* values) {
  const int batch = logits.sd.value().rows();
  Require(static_cast<int>(targets.size()) == batch,
          "target count must match the batch");

  std::vector<int> sd_t(targets.size()), chn_t(targets.size()),
      adu_t(targets.size()), dom_t(targets.size());
  std::vector<int> sd_rows, chn_rows, adu_rows, dom_rows;
  for (int i = 0; i < batch; ++i) {
    const auto& t = targets[static_cast<std::size_t>(i)];
    sd_t[static_cast<std::size_t>(i)] = t.sd;
    chn_t[static_cast<std::size_t>(i)] = t.chn;
    adu_t[static_cast<std::size_t>(i)] = t.adu;
    dom_t[static_cast<std::size_t>(i)] = t.domain;
    if (t.sd >= 0) sd_rows.push_back(i);
    if (t.chn >= 0) chn_rows.push_back(i);
    if (t.adu >= 0) adu_rows.push_back(i);
    if (logits.has_domain && t.domain >= 0) dom_rows.push_back(i);
  }

  if (values) *values = TierLossValues{};
  std::vector<Var<double>> terms;
  std::vector<double> tier_weights;
  auto add_tier = [&](const Var<double>& tier_logits,
                      const std::vector<int>& tier_targets,
                      const std::vector<int>& rows, double weight,
                      double* value_out, int* rows_out) {
    *rows_out = static_cast<int>(rows.size());
    if (rows.empty()) return;  // no contributing window: tier contributes 0
    Var<double> ce = CeMeanRows(tier_logits, tier_targets, rows);
    *value_out = ce.value().v[0];
    terms.push_back(ce);
    tier_weights.push_back(weight);
  };

  TierLossValues local;
  TierLossValues& v = values ? *values : local;
  add_tier(logits.sd, sd_t, sd_rows, weights.sd, &v.sd, &v.sd_rows);
  add_tier(logits.chn, chn_t, chn_rows, weights.chn, &v.chn, &v.chn_rows);
  add_tier(logits.adu, adu_t, adu_rows, weights.adu, &v.adu, &v.adu_rows);
  if (logits.has_domain) {
    add_tier(logits.domain, dom_t, dom_rows, weights.domain, &v.domain,
             &v.domain_rows);
  }
  if (terms.empty()) return Constant(Tensor<double>({1, 1}));
  return LinComb(terms, tier_weights);
}

// ---------------------------------------------------------------------------
// SpeakerEmbedder.

json SpeakerEmbedderConfigToJson(const SpeakerEmbedderConfig& cfg) {
  json conv = json::array();
  for (const auto& c : cfg.conv) {
    conv.push_back({{"channels", c.channels},
                    {"kernel", c.kernel},
                    {"stride", c.stride}});
  }
  return json{{"sample_rate_hz", cfg.sample_rate_hz},
              {"conv", conv},
              {"emb_dim", cfg.emb_dim}};
}

SpeakerEmbedderConfig SpeakerEmbedderConfigFromJson(const json& j) {
  SpeakerEmbedderConfig cfg;
  cfg.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  cfg.conv.clear();
  for (const auto& c : j.at("conv")) {
    cfg.conv.push_back({c.at("channels").get<int>(), c.at("kernel").get<int>(),
                        c.at("stride").get<int>()});
  }
  cfg.emb_dim = j.at("emb_dim").get<int>();
  return cfg;
}

SpeakerEmbedder::SpeakerEmbedder(const SpeakerEmbedderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  Require(!cfg.conv.empty(), "speaker embedder needs conv layers");
  Require(cfg.emb_dim >= 1, "embedding dim must be positive");
  int cin = 1;
  for (const auto& c : cfg.conv) {
    Require(c.channels > 0 && c.kernel > 0 && c.stride > 0,
            "conv channels, kernel and stride must be positive");
    const int pad = std::max(c.kernel - c.stride, 0);
    convs_.emplace_back(cin, c.channels, c.kernel, c.stride, pad / 2,
                        pad - pad / 2, rng);
    cin = c.channels;
  }
  out_ = Linear<double>(2 * cin, cfg.emb_dim, rng);
}

Var<double> SpeakerEmbedder::Forward(const Var<double>& waves, int batch,
                                     int n_samples) {
  Require(batch >= 1, "empty batch");
  HS_CHECK(waves.value().rows() == batch && waves.value().cols() == n_samples);
  int stride = 1;
  for (const auto& c : cfg_.conv) stride *= c.stride;
  const int frames = n_samples / stride;
  Require(frames >= 1, "waveform too short for the conv stack");
  const int used = frames * stride;
  const int channels = cfg_.conv.back().channels;

  Var<double> x = used < n_samples ? SliceCols(waves, 0, used) : waves;
  x = Reshape(x, {batch, 1, used});
  for (auto& conv : convs_) x = LeakyRelu(conv.Forward(x));
  x = Reshape(Permute0213(Reshape(x, {batch, channels, frames, 1})),
              {batch * frames, channels});

  // Statistics pooling: mean and standard deviation over frames.
  Var<double> mean = MeanPoolTime(x, batch, frames);
  Var<double> mean_sq = MeanPoolTime(Mul(x, x), batch, frames);
  Var<double> variance = Sub(mean_sq, Mul(mean, mean));
  Var<double> stddev = Sqrt(AddScalar(variance, 1e-5));
  Var<double> stats = ConcatCols<double>({mean, stddev});
  return NormalizeRows(out_.Forward(stats));
}

Tensor<double> SpeakerEmbedder::Embed(const Tensor<double>& waves) {
  Require(trained(), "speaker embedder has not been trained");
  NoGradGuard guard;
  return Forward(Constant(waves), waves.rows(), waves.cols()).value();
}

void SpeakerEmbedder::Collect(const std::string& prefix,
                              std::vector<NamedParam<double>>* params,
                              std::vector<NamedBuffer<double>>* buffers) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].Collect(prefix + ".conv" + std::to_string(i), params, buffers);
  }
  out_.Collect(prefix + ".out", params, buffers);
  if (buffers) buffers->push_back({prefix + ".trained", &trained_flag_});
}

}  // namespace nn
}  // namespace hearthside
