#include "rfl/model.hpp"

#include <cmath>

namespace rfl {

std::string to_string(PosEmbed v) {
  switch (v) {
    case PosEmbed::Sinusoidal: return "sinusoidal";
    case PosEmbed::Learnable: return "learnable";
    case PosEmbed::None: return "none";
  }
  return "unknown";
}

std::string to_string(FusionQuery v) {
  return v == FusionQuery::BuildingAsQuery ? "building_as_query" : "obs_as_query";
}

std::string to_string(ObsFusion v) {
  return v == ObsFusion::Add ? "add" : "concat";
}

std::string to_string(CrossFusion v) {
  switch (v) {
    case CrossFusion::CrossAttention: return "cross_attention";
    case CrossFusion::ChannelwiseSelfAttention: return "channelwise_self_attention";
    case CrossFusion::EmbedConcat: return "embed_concat";
  }
  return "unknown";
}

PosEmbed pos_embed_from_string(const std::string& s) {
  if (s == "sinusoidal") return PosEmbed::Sinusoidal;
  if (s == "learnable") return PosEmbed::Learnable;
  if (s == "none") return PosEmbed::None;
  throw ConfigError("unknown positional embedding mode: " + s);
}

FusionQuery fusion_query_from_string(const std::string& s) {
  if (s == "building_as_query") return FusionQuery::BuildingAsQuery;
  if (s == "obs_as_query") return FusionQuery::ObsAsQuery;
  throw ConfigError("unknown fusion query mode: " + s);
}

ObsFusion obs_fusion_from_string(const std::string& s) {
  if (s == "add") return ObsFusion::Add;
  if (s == "concat") return ObsFusion::Concat;
  throw ConfigError("unknown observation fusion mode: " + s);
}

CrossFusion cross_fusion_from_string(const std::string& s) {
  if (s == "cross_attention") return CrossFusion::CrossAttention;
  if (s == "channelwise_self_attention") return CrossFusion::ChannelwiseSelfAttention;
  if (s == "embed_concat") return CrossFusion::EmbedConcat;
  throw ConfigError("unknown cross fusion mode: " + s);
}

void ModelConfig::validate() {
  if (map_size < 2 || patch_size < 1 || map_size % patch_size != 0) {
    throw ConfigError("map size must be a positive multiple of patch size");
  }
  if ((patch_size & (patch_size - 1)) != 0) {
    throw ConfigError("patch size must be a power of two");
  }
  if (embed_dim < 2 || embed_dim % 2 != 0) {
    throw ConfigError("embed dim must be even");
  }
  if (n_heads < 1 || embed_dim % n_heads != 0) {
    throw ConfigError("embed dim must be divisible by head count");
  }
  if (n_building_blocks < 1 || n_obs_blocks < 1 || n_cross_blocks < 1 ||
      n_fusion_self_blocks < 0) {
    throw ConfigError("block counts must be >= 1 (fusion self blocks >= 0)");
  }
  const int stages = decoder_stages();
  if (decoder_channels.empty()) {
    int c = embed_dim;
    for (int s = 0; s < stages; ++s) {
      c = std::max(4, c / 2);
      decoder_channels.push_back(c);
    }
  }
  if (static_cast<int>(decoder_channels.size()) != stages) {
    throw ConfigError("decoder_channels must list one entry per upsampling stage");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw ConfigError("decoder channels must be positive");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"map_size", cfg.map_size},
                     {"embed_dim", cfg.embed_dim},
                     {"patch_size", cfg.patch_size},
                     {"n_building_blocks", cfg.n_building_blocks},
                     {"n_obs_blocks", cfg.n_obs_blocks},
                     {"n_cross_blocks", cfg.n_cross_blocks},
                     {"n_fusion_self_blocks", cfg.n_fusion_self_blocks},
                     {"n_heads", cfg.n_heads},
                     {"pos_embed", to_string(cfg.pos_embed)},
                     {"fusion_query", to_string(cfg.fusion_query)},
                     {"obs_fusion", to_string(cfg.obs_fusion)},
                     {"cross_fusion", to_string(cfg.cross_fusion)},
                     {"decoder_channels", cfg.decoder_channels}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg = ModelConfig{};
  if (j.contains("map_size")) j.at("map_size").get_to(cfg.map_size);
  if (j.contains("embed_dim")) j.at("embed_dim").get_to(cfg.embed_dim);
  if (j.contains("patch_size")) j.at("patch_size").get_to(cfg.patch_size);
  if (j.contains("n_building_blocks")) j.at("n_building_blocks").get_to(cfg.n_building_blocks);
  if (j.contains("n_obs_blocks")) j.at("n_obs_blocks").get_to(cfg.n_obs_blocks);
  if (j.contains("n_cross_blocks")) j.at("n_cross_blocks").get_to(cfg.n_cross_blocks);
  if (j.contains("n_fusion_self_blocks")) {
    j.at("n_fusion_self_blocks").get_to(cfg.n_fusion_self_blocks);
  }
  if (j.contains("n_heads")) j.at("n_heads").get_to(cfg.n_heads);
  if (j.contains("pos_embed")) cfg.pos_embed = pos_embed_from_string(j.at("pos_embed"));
  if (j.contains("fusion_query")) {
    cfg.fusion_query = fusion_query_from_string(j.at("fusion_query"));
  }
  if (j.contains("obs_fusion")) cfg.obs_fusion = obs_fusion_from_string(j.at("obs_fusion"));
  if (j.contains("cross_fusion")) {
    cfg.cross_fusion = cross_fusion_from_string(j.at("cross_fusion"));
  }
  if (j.contains("decoder_channels")) {
    j.at("decoder_channels").get_to(cfg.decoder_channels);
  }
}

namespace {

void emit_self_block(
    const std::string& pre, int d, bool cross,
    const std::function<void(const std::string&, const std::vector<int>&)>& fn) {
  fn(pre + "ln1.g", {d});
  fn(pre + "ln1.b", {d});
  if (cross) {
    fn(pre + "lny.g", {d});
    fn(pre + "lny.b", {d});
  }
  fn(pre + "wq", {d, d});
  fn(pre + "bq", {d});
  fn(pre + "wk", {d, d});
  fn(pre + "bk", {d});
  fn(pre + "wv", {d, d});
  fn(pre + "bv", {d});
  fn(pre + "wo", {d, d});
  fn(pre + "bo", {d});
  fn(pre + "ln2.g", {d});
  fn(pre + "ln2.b", {d});
  fn(pre + "mlp.w1", {d, 4 * d});
  fn(pre + "mlp.b1", {4 * d});
  fn(pre + "mlp.w2", {4 * d, d});
  fn(pre + "mlp.b2", {d});
}

}  // namespace

void for_each_param(
    const ModelConfig& cfg,
    const std::function<void(const std::string&, const std::vector<int>&)>& fn) {
  const int d = cfg.embed_dim;
  const int p2 = cfg.patch_size * cfg.patch_size;

  fn("building.patch_proj.w", {p2, d});
  fn("building.patch_proj.b", {d});
  if (cfg.pos_embed == PosEmbed::Learnable) {
    fn("building.pos.table", {cfg.n_tokens(), d});
  }
  for (int i = 0; i < cfg.n_building_blocks; ++i) {
    emit_self_block("building.blk" + std::to_string(i) + ".", d, false, fn);
  }

  const int od = cfg.obs_fusion == ObsFusion::Add ? d : d / 2;
  fn("obs.coord_proj.w", {2, od});
  fn("obs.coord_proj.b", {od});
  fn("obs.value_proj.w", {1, od});
  fn("obs.value_proj.b", {od});
  for (int i = 0; i < cfg.n_obs_blocks; ++i) {
    emit_self_block("obs.blk" + std::to_string(i) + ".", d, false, fn);
  }

  switch (cfg.cross_fusion) {
    case CrossFusion::CrossAttention:
      for (int i = 0; i < cfg.n_cross_blocks; ++i) {
        emit_self_block("fuse.cross" + std::to_string(i) + ".", d, true, fn);
      }
      break;
    case CrossFusion::ChannelwiseSelfAttention:
      for (int i = 0; i < cfg.n_cross_blocks; ++i) {
        emit_self_block("fuse.cross" + std::to_string(i) + ".", d, false, fn);
      }
      break;
    case CrossFusion::EmbedConcat:
      fn("fuse.concat_proj.w", {2 * d, d});
      fn("fuse.concat_proj.b", {d});
      break;
  }
  for (int i = 0; i < cfg.n_fusion_self_blocks; ++i) {
    emit_self_block("fuse.self" + std::to_string(i) + ".", d, false, fn);
  }
  fn("fuse.final_ln.g", {d});
  fn("fuse.final_ln.b", {d});

  int cin = d;
  for (std::size_t s = 0; s < cfg.decoder_channels.size(); ++s) {
    const int cout = cfg.decoder_channels[s];
    fn("dec.stage" + std::to_string(s) + ".w", {cout, cin, 3, 3});
    fn("dec.stage" + std::to_string(s) + ".b", {cout});
    cin = cout;
  }
  fn("dec.out.w", {1, cin, 3, 3});
  fn("dec.out.b", {1});
}

Tensor<double> sinusoidal_pos_embed(int length, int dim) {
  if (dim % 2 != 0) throw ConfigError("sinusoidal embedding needs an even dim");
  Tensor<double> t({length, dim});
  for (int i = 0; i < length; ++i) {
    for (int j = 0; j < dim / 2; ++j) {
      const double freq = std::pow(10000.0, -2.0 * j / dim);
      t.data[static_cast<std::size_t>(i) * dim + 2 * j] = std::sin(i * freq);
      t.data[static_cast<std::size_t>(i) * dim + 2 * j + 1] = std::cos(i * freq);
    }
  }
  return t;
}

RadioMap extract_attention(const AttentionRecord& record,
                           const ModelConfig& cfg, int target_obs) {
  if (record.empty()) {
    throw ConfigError("attention record is empty; fusion must be cross-attention");
  }
  if (cfg.fusion_query != FusionQuery::BuildingAsQuery) {
    throw ConfigError("attention heatmaps require building-as-query fusion");
  }
  if (target_obs < 0 || target_obs >= record.n_keys) {
    throw IndexError("target observation index out of range");
  }

  const int gs = cfg.tokens_per_side();
  std::vector<double> per_patch(record.n_queries, 0.0);
  for (int blk = 0; blk < record.n_blocks; ++blk) {
    for (int h = 0; h < record.n_heads; ++h) {
      for (int q = 0; q < record.n_queries; ++q) {
        per_patch[q] += record.at(blk, h, q, target_obs);
      }
    }
  }
  const double norm_runs = record.n_blocks * record.n_heads;
  double mx = 0.0;
  for (auto& v : per_patch) {
    v /= norm_runs;
    mx = std::max(mx, v);
  }
  if (mx > 0.0) {
    for (auto& v : per_patch) v /= mx;
  }

  RadioMap heat;
  heat.h = heat.w = cfg.map_size;
  heat.grid.resize(static_cast<std::size_t>(cfg.map_size) * cfg.map_size);
  for (int x = 0; x < cfg.map_size; ++x) {
    for (int y = 0; y < cfg.map_size; ++y) {
      const int q = (x / cfg.patch_size) * gs + y / cfg.patch_size;
      heat.at(x, y) = per_patch[q];
    }
  }
  return heat;
}

GradCheckResult grad_check(const ModelConfig& cfg,
                           const ParamStore<double>& params,
                           const Scene& scene, const ObservationSet& obs,
                           double eps, int n_samples, std::uint64_t seed) {
  ForwardOptions opts;
  opts.target = &scene.radio;
  opts.with_grad = true;
  auto fwd = model_forward<double>(cfg, params, scene.building, obs, opts);
  fwd.tape.backward(fwd.loss);

  // Snapshot analytic gradients per parameter tensor.
  std::vector<std::vector<double>> analytic(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto id = fwd.param_ids[i];
    if (id < 0) continue;
    analytic[i] = fwd.tape.grad(id).data;
    for (double g : analytic[i]) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite analytic gradient");
    }
  }

  const std::size_t total = params.count();
  Rng rng(seed);
  ParamStore<double> perturbed = params;

  auto loss_at = [&]() {
    ForwardOptions o;
    o.target = &scene.radio;
    auto f = model_forward<double>(cfg, perturbed, scene.building, obs, o);
    return f.tape.val(f.loss).data[0];
  };

  GradCheckResult result;
  for (int s = 0; s < n_samples; ++s) {
    std::size_t flat = rng.uniform_index(total);
    std::size_t ti = 0;
    while (flat >= params.tensors[ti].size()) {
      flat -= params.tensors[ti].size();
      ++ti;
    }
    const double orig = perturbed.tensors[ti].data[flat];
    perturbed.tensors[ti].data[flat] = orig + eps;
    const double lp = loss_at();
    perturbed.tensors[ti].data[flat] = orig - eps;
    const double lm = loss_at();
    perturbed.tensors[ti].data[flat] = orig;

    const double fd = (lp - lm) / (2.0 * eps);
    const double an = analytic[ti].empty() ? 0.0 : analytic[ti][flat];
    const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(fd));
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace rfl
