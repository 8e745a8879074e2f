#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rfl/autodiff.hpp"
#include "rfl/rng.hpp"
#include "rfl/sampling.hpp"
#include "rfl/scene.hpp"

namespace rfl {

enum class PosEmbed { Sinusoidal, Learnable, None };
enum class FusionQuery { BuildingAsQuery, ObsAsQuery };
enum class ObsFusion { Add, Concat };
enum class CrossFusion { CrossAttention, ChannelwiseSelfAttention, EmbedConcat };

std::string to_string(PosEmbed v);
std::string to_string(FusionQuery v);
std::string to_string(ObsFusion v);
std::string to_string(CrossFusion v);
PosEmbed pos_embed_from_string(const std::string& s);
FusionQuery fusion_query_from_string(const std::string& s);
ObsFusion obs_fusion_from_string(const std::string& s);
CrossFusion cross_fusion_from_string(const std::string& s);

struct ModelConfig {
  int map_size = 256;
  int embed_dim = 192;
  int patch_size = 16;
  int n_building_blocks = 2;
  int n_obs_blocks = 2;
  int n_cross_blocks = 1;
  int n_fusion_self_blocks = 1;
  int n_heads = 4;
  PosEmbed pos_embed = PosEmbed::Sinusoidal;
  FusionQuery fusion_query = FusionQuery::BuildingAsQuery;
  ObsFusion obs_fusion = ObsFusion::Add;
  CrossFusion cross_fusion = CrossFusion::CrossAttention;
  std::vector<int> decoder_channels;  // filled by validate() when empty

  void validate();
  int tokens_per_side() const { return map_size / patch_size; }
  int n_tokens() const { return tokens_per_side() * tokens_per_side(); }
  int decoder_stages() const;  // log2(patch_size)
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

// Named weight collection. Order is fixed by the enumeration below so that
// optimizer state, checkpoints and gradient sampling line up.
template <typename T>
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;
  std::unordered_map<std::string, int> index;

  int add(const std::string& name, Tensor<T> t) {
    index.emplace(name, static_cast<int>(names.size()));
    names.push_back(name);
    tensors.push_back(std::move(t));
    return static_cast<int>(names.size()) - 1;
  }
  Tensor<T>& at(const std::string& name) { return tensors[index.at(name)]; }
  const Tensor<T>& at(const std::string& name) const {
    return tensors[index.at(name)];
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < names.size(); ++i) {
      out.add(names[i], tensors[i].template cast<U>());
    }
    return out;
  }
};

// Enumerates every parameter tensor of a config in canonical order.
void for_each_param(
    const ModelConfig& cfg,
    const std::function<void(const std::string&, const std::vector<int>&)>& fn);

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
std::size_t count_params(const ParamStore<T>& params) {
  return params.count();
}

// Softmax weights of the cross-attention fusion, [block][head][query][key].
struct AttentionRecord {
  int n_blocks = 0;
  int n_heads = 0;
  int n_queries = 0;
  int n_keys = 0;
  std::vector<double> weights;

  bool empty() const { return weights.empty(); }
  double at(int blk, int head, int q, int k) const {
    return weights[((static_cast<std::size_t>(blk) * n_heads + head) * n_queries + q) *
                       n_keys +
                   k];
  }
};

template <typename T>
struct ForwardResult {
  Tape<T> tape;
  std::vector<typename Tape<T>::Id> param_ids;  // aligned with store order
  typename Tape<T>::Id fused = -1;
  typename Tape<T>::Id pred = -1;
  typename Tape<T>::Id loss = -1;
  AttentionRecord attention;
  RadioMap prediction;
};

struct ForwardOptions {
  const RadioMap* target = nullptr;  // adds the MSE loss when set
  bool mask_buildings = false;       // loss over free pixels only
  bool with_grad = false;
  bool stop_after_fuse = false;      // skip decoding (ObsAsQuery experiments)
  bool reverse_building = false;     // feed 1 - grid to the encoder only
};

template <typename T>
ForwardResult<T> model_forward(const ModelConfig& cfg,
                               const ParamStore<T>& params,
                               const BuildingMap& building,
                               const ObservationSet& obs,
                               const ForwardOptions& opts = {});

// Flattened non-overlapping patches, row-major, as model input tokens.
template <typename T>
Tensor<T> patchify(const BuildingMap& b, int patch_size);

// entry (i, 2j) = sin(i / 10000^(2j/d)), entry (i, 2j+1) = cos(...).
Tensor<double> sinusoidal_pos_embed(int length, int dim);

// Heatmap of patch-query attention onto one observation key, averaged over
// heads and cross blocks, broadcast to pixels and normalized to max 1.
RadioMap extract_attention(const AttentionRecord& record,
                           const ModelConfig& cfg, int target_obs);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Central finite differences on randomly sampled parameter scalars against
// the analytic gradients of the MSE loss. Double precision only.
GradCheckResult grad_check(const ModelConfig& cfg,
                           const ParamStore<double>& params,
                           const Scene& scene, const ObservationSet& obs,
                           double eps, int n_samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

inline int ModelConfig::decoder_stages() const {
  int stages = 0;
  int p = patch_size;
  while (p > 1) {
    p /= 2;
    ++stages;
  }
  return stages;
}

template <typename T>
Tensor<T> patchify(const BuildingMap& b, int patch_size) {
  if (patch_size < 1 || b.h % patch_size != 0 || b.w % patch_size != 0) {
    throw ShapeError("map dimensions not divisible by patch size");
  }
  const int gh = b.h / patch_size;
  const int gw = b.w / patch_size;
  Tensor<T> out({gh * gw, patch_size * patch_size});
  for (int pi = 0; pi < gh; ++pi) {
    for (int pj = 0; pj < gw; ++pj) {
      T* tok = out.ptr() +
               static_cast<std::size_t>(pi * gw + pj) * patch_size * patch_size;
      for (int u = 0; u < patch_size; ++u) {
        for (int v = 0; v < patch_size; ++v) {
          tok[u * patch_size + v] =
              static_cast<T>(b.at(pi * patch_size + u, pj * patch_size + v));
        }
      }
    }
  }
  return out;
}

namespace detail {

// Shared per-block graph builders used by model_forward.
template <typename T>
class GraphBuilder {
 public:
  using Id = typename Tape<T>::Id;

  GraphBuilder(Tape<T>& tape, const ModelConfig& cfg,
               const ParamStore<T>& params, bool with_grad)
      : tape_(tape), cfg_(cfg), params_(params), with_grad_(with_grad) {
    ids_.resize(params.names.size(), -1);
  }

  Id p(const std::string& name) {
    const int i = params_.index.at(name);
    if (ids_[i] < 0) {
      ids_[i] = tape_.leaf(params_.tensors[i], with_grad_);
    }
    return ids_[i];
  }

  const std::vector<Id>& param_ids() const { return ids_; }

  Id self_block(Id x, const std::string& pre,
                std::vector<double>* attn = nullptr) {
    Id h = tape_.layer_norm(x, p(pre + "ln1.g"), p(pre + "ln1.b"));
    Id q = tape_.linear(h, p(pre + "wq"), p(pre + "bq"));
    Id k = tape_.linear(h, p(pre + "wk"), p(pre + "bk"));
    Id v = tape_.linear(h, p(pre + "wv"), p(pre + "bv"));
    Id a = tape_.attention(q, k, v, cfg_.n_heads, attn);
    Id x1 = tape_.add(x, tape_.linear(a, p(pre + "wo"), p(pre + "bo")));
    return mlp_residual(x1, pre);
  }

  Id cross_block(Id x, Id y, const std::string& pre,
                 std::vector<double>* attn = nullptr) {
    Id hx = tape_.layer_norm(x, p(pre + "ln1.g"), p(pre + "ln1.b"));
    Id hy = tape_.layer_norm(y, p(pre + "lny.g"), p(pre + "lny.b"));
    Id q = tape_.linear(hx, p(pre + "wq"), p(pre + "bq"));
    Id k = tape_.linear(hy, p(pre + "wk"), p(pre + "bk"));
    Id v = tape_.linear(hy, p(pre + "wv"), p(pre + "bv"));
    Id a = tape_.attention(q, k, v, cfg_.n_heads, attn);
    Id x1 = tape_.add(x, tape_.linear(a, p(pre + "wo"), p(pre + "bo")));
    return mlp_residual(x1, pre);
  }

 private:
  Id mlp_residual(Id x, const std::string& pre) {
    Id h = tape_.layer_norm(x, p(pre + "ln2.g"), p(pre + "ln2.b"));
    Id m = tape_.linear(tape_.gelu(tape_.linear(h, p(pre + "mlp.w1"), p(pre + "mlp.b1"))),
                        p(pre + "mlp.w2"), p(pre + "mlp.b2"));
    return tape_.add(x, m);
  }

  Tape<T>& tape_;
  const ModelConfig& cfg_;
  const ParamStore<T>& params_;
  bool with_grad_;
  std::vector<Id> ids_;
};

}  // namespace detail

template <typename T>
ForwardResult<T> model_forward(const ModelConfig& cfg,
                               const ParamStore<T>& params,
                               const BuildingMap& building,
                               const ObservationSet& obs,
                               const ForwardOptions& opts) {
  if (building.h != cfg.map_size || building.w != cfg.map_size) {
    throw ShapeError("building map does not match the configured map size");
  }
  if (obs.k() < 1) throw ConfigError("at least one observation is required");

  ForwardResult<T> result;
  Tape<T>& tape = result.tape;
  detail::GraphBuilder<T> g(tape, cfg, params, opts.with_grad);
  using Id = typename Tape<T>::Id;

  const int d = cfg.embed_dim;
  const int lb = cfg.n_tokens();
  const int k = obs.k();

  // Building branch: patch tokens, positional embedding, N_b self blocks.
  // Sampling always sees the true occupancy; the reversal applies to the
  // encoder's input representation only.
  Id cb = tape.constant(opts.reverse_building
                            ? patchify<T>(reverse_building_map(building), cfg.patch_size)
                            : patchify<T>(building, cfg.patch_size));
  Id fb = tape.linear(cb, g.p("building.patch_proj.w"), g.p("building.patch_proj.b"));
  if (cfg.pos_embed == PosEmbed::Sinusoidal) {
    fb = tape.add(fb, tape.constant(sinusoidal_pos_embed(lb, d).template cast<T>()));
  } else if (cfg.pos_embed == PosEmbed::Learnable) {
    fb = tape.add(fb, g.p("building.pos.table"));
  }
  for (int i = 0; i < cfg.n_building_blocks; ++i) {
    fb = g.self_block(fb, "building.blk" + std::to_string(i) + ".");
  }

  // Observation branch: coordinate/value projections, N_o self blocks,
  // no token-index positional embedding.
  Tensor<T> coords({k, 2});
  Tensor<T> values({k, 1});
  for (int i = 0; i < k; ++i) {
    coords.data[2 * i] =
        static_cast<T>(obs.points[i].x / static_cast<double>(building.h - 1));
    coords.data[2 * i + 1] =
        static_cast<T>(obs.points[i].y / static_cast<double>(building.w - 1));
    values.data[i] = static_cast<T>(obs.points[i].v);
  }
  Id cid = tape.constant(std::move(coords));
  Id vid = tape.constant(std::move(values));
  Id fo;
  if (cfg.obs_fusion == ObsFusion::Add) {
    fo = tape.add(tape.linear(cid, g.p("obs.coord_proj.w"), g.p("obs.coord_proj.b")),
                  tape.linear(vid, g.p("obs.value_proj.w"), g.p("obs.value_proj.b")));
  } else {
    fo = tape.concat_cols(
        tape.linear(cid, g.p("obs.coord_proj.w"), g.p("obs.coord_proj.b")),
        tape.linear(vid, g.p("obs.value_proj.w"), g.p("obs.value_proj.b")));
  }
  for (int i = 0; i < cfg.n_obs_blocks; ++i) {
    fo = g.self_block(fo, "obs.blk" + std::to_string(i) + ".");
  }

  // Fusion.
  Id fused;
  std::vector<std::vector<double>> attn_blocks;
  switch (cfg.cross_fusion) {
    case CrossFusion::CrossAttention: {
      Id x = cfg.fusion_query == FusionQuery::BuildingAsQuery ? fb : fo;
      Id y = cfg.fusion_query == FusionQuery::BuildingAsQuery ? fo : fb;
      attn_blocks.resize(cfg.n_cross_blocks);
      for (int i = 0; i < cfg.n_cross_blocks; ++i) {
        x = g.cross_block(x, y, "fuse.cross" + std::to_string(i) + ".",
                          &attn_blocks[i]);
      }
      fused = x;
      break;
    }
    case CrossFusion::ChannelwiseSelfAttention: {
      Id seq = tape.concat_rows(fb, fo);
      for (int i = 0; i < cfg.n_cross_blocks; ++i) {
        seq = g.self_block(seq, "fuse.cross" + std::to_string(i) + ".");
      }
      fused = tape.slice_rows(seq, 0, lb);
      break;
    }
    case CrossFusion::EmbedConcat: {
      Id pooled = tape.tile_rows(tape.mean_rows(fo), lb);
      fused = tape.linear(tape.concat_cols(fb, pooled), g.p("fuse.concat_proj.w"),
                          g.p("fuse.concat_proj.b"));
      break;
    }
  }
  for (int i = 0; i < cfg.n_fusion_self_blocks; ++i) {
    fused = g.self_block(fused, "fuse.self" + std::to_string(i) + ".");
  }
  fused = tape.layer_norm(fused, g.p("fuse.final_ln.g"), g.p("fuse.final_ln.b"));
  result.fused = fused;

  if (!attn_blocks.empty()) {
    auto& rec = result.attention;
    rec.n_blocks = cfg.n_cross_blocks;
    rec.n_heads = cfg.n_heads;
    rec.n_queries =
        cfg.fusion_query == FusionQuery::BuildingAsQuery ? lb : k;
    rec.n_keys = cfg.fusion_query == FusionQuery::BuildingAsQuery ? k : lb;
    rec.weights.reserve(static_cast<std::size_t>(rec.n_blocks) * rec.n_heads *
                        rec.n_queries * rec.n_keys);
    for (const auto& blk : attn_blocks) {
      rec.weights.insert(rec.weights.end(), blk.begin(), blk.end());
    }
  }

  if (opts.stop_after_fuse) {
    result.param_ids = g.param_ids();
    return result;
  }

  if (cfg.cross_fusion == CrossFusion::CrossAttention &&
      cfg.fusion_query == FusionQuery::ObsAsQuery) {
    throw ConfigError(
        "obs-as-query fusion yields K tokens and cannot feed the grid decoder");
  }

  // Decoder: nearest upsampling + 3x3 conv + GELU per stage, sigmoid head.
  const int gs = cfg.tokens_per_side();
  Id grid = tape.tokens_to_grid(fused, gs, gs);
  for (int s = 0; s < cfg.decoder_stages(); ++s) {
    const std::string pre = "dec.stage" + std::to_string(s) + ".";
    grid = tape.gelu(tape.conv3x3(tape.upsample2(grid), g.p(pre + "w"), g.p(pre + "b")));
  }
  Id pred = tape.sigmoid(tape.conv3x3(grid, g.p("dec.out.w"), g.p("dec.out.b")));
  result.pred = pred;

  const auto& pv = tape.val(pred);
  result.prediction.h = building.h;
  result.prediction.w = building.w;
  result.prediction.grid.resize(pv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    result.prediction.grid[i] = static_cast<double>(pv.data[i]);
  }

  if (opts.target) {
    if (opts.target->h != building.h || opts.target->w != building.w) {
      throw ShapeError("target radio map dimensions mismatch");
    }
    auto tgt = std::make_shared<std::vector<T>>(opts.target->grid.size());
    for (std::size_t i = 0; i < tgt->size(); ++i) {
      (*tgt)[i] = static_cast<T>(opts.target->grid[i]);
    }
    std::shared_ptr<std::vector<T>> mask;
    if (opts.mask_buildings) {
      mask = std::make_shared<std::vector<T>>(building.grid.size());
      for (std::size_t i = 0; i < mask->size(); ++i) {
        (*mask)[i] = building.grid[i] ? T(0) : T(1);
      }
    }
    result.loss = tape.mse_to(pred, tgt, mask);
  }

  result.param_ids = g.param_ids();
  return result;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<T> store;
  for_each_param(cfg, [&](const std::string& name, const std::vector<int>& shape) {
    Tensor<T> t(shape);
    const bool is_norm_gain = name.size() >= 2 && name.ends_with(".g");
    const bool is_weight = shape.size() >= 2;
    if (is_norm_gain) {
      for (auto& v : t.data) v = T(1);
    } else if (is_weight) {
      for (auto& v : t.data) v = static_cast<T>(rng.truncated_normal(0.02));
    }
    // biases and norm offsets stay zero
    store.add(name, std::move(t));
  });
  return store;
}

}  // namespace rfl
