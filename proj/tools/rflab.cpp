// Experiment front end: corpus generation, training, evaluation sweeps,
// ablation grids and attention exports, driven by a single JSON config
// document. Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfl/checkpoint.hpp"
#include "rfl/metrics.hpp"
#include "rfl/training.hpp"
#include "render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfl;

namespace {

json default_config() {
  return json{
      {"data_root", "data"},
      {"out_dir", "out"},
      {"synth",
       {{"count", 120},
        {"size", 48},
        {"building_count", 6},
        {"building_min", 4},
        {"building_max", 10},
        {"seed", 7},
        {"distributions",
         {{"synth_a", {{"wall_attenuation", 0.5}, {"distance_decay", 0.02}}},
          {"synth_b", {{"wall_attenuation", 0.75}, {"distance_decay", 0.035}}}}}}},
      {"split",
       {{"test_threshold", 89}, {"ratio_train", 12}, {"ratio_val", 1}, {"split_seed", 0}}},
      {"model",
       {{"map_size", 48},
        {"patch_size", 8},
        {"embed_dim", 48},
        {"n_heads", 4},
        {"n_building_blocks", 2},
        {"n_obs_blocks", 2},
        {"n_cross_blocks", 1},
        {"n_fusion_self_blocks", 1},
        {"pos_embed", "sinusoidal"},
        {"fusion_query", "building_as_query"},
        {"obs_fusion", "add"},
        {"cross_fusion", "cross_attention"}}},
      {"train",
       {{"tag", "synth_a"},
        {"lr_init", 1e-3},
        {"weight_decay", 1e-4},
        {"total_steps", 0},
        {"batch_size", 8},
        {"max_steps", 2000},
        {"obs_budget", 9},
        {"sampler", "random"},
        {"seed", 1},
        {"precision", "f32"},
        {"mask_buildings", false},
        {"reverse_building", false}}},
      {"ssim",
       {{"window", 11}, {"sigma", 1.5}, {"k1", 0.01}, {"k2", 0.03}, {"dynamic_range", 1.0}}},
      {"eval",
       {{"tag", "synth_a"},
        {"split", "test"},
        {"repeats", 5},
        {"obs_budget", 9},
        {"sampler", "random"},
        {"seed", 42},
        {"triptychs", true}}},
      {"sweep", {{"budgets", {5, 9, 25, 50, 75, 100, 250, 500, 1000}}, {"repeats", 3}}},
      {"ablate",
       {{"embed_dims", {32}},
        {"cross_fusions", {"cross_attention", "channelwise_self_attention", "embed_concat"}},
        {"obs_fusions", {"add", "concat"}},
        {"pos_embeds", {"sinusoidal", "learnable", "none"}},
        {"reversed_building", {false, true}},
        {"max_steps", 40},
        {"train_scenes", 8},
        {"eval_scenes", 8},
        {"repeats", 1}}},
      {"attn", {{"tag", "synth_a"}, {"scene_id", 0}, {"obs_seed", 1}, {"obs_budget", 9}}}};
}

void merge_into(json& base, const json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (base.contains(it.key())) {
      merge_into(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key=value, got: " + kv);
  }
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot - pos);
    if (key.empty()) throw ConfigError("empty key segment in --set " + kv);
    if (dot == std::string::npos) {
      json value;
      try {
        value = json::parse(raw);
      } catch (const json::parse_error&) {
        value = raw;  // unquoted strings pass through verbatim
      }
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

json load_config(const std::string& path, const std::vector<std::string>& sets) {
  json doc = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw NotFound("config file not found: " + path);
    json file_doc;
    try {
      in >> file_doc;
    } catch (const json::parse_error& e) {
      throw ConfigError("config parse error: " + std::string(e.what()));
    }
    merge_into(doc, file_doc);
  }
  for (const auto& kv : sets) apply_override(doc, kv);
  if (const char* env = std::getenv("RFLAB_DATA_ROOT")) {
    bool overridden = false;
    for (const auto& kv : sets) {
      if (kv.rfind("data_root=", 0) == 0) overridden = true;
    }
    if (!overridden && (path.empty() || !json::parse(std::ifstream(path), nullptr, false).contains("data_root"))) {
      doc["data_root"] = env;
    }
  }
  return doc;
}

SynthConfig synth_config(const json& doc, const std::string& tag) {
  const json& s = doc.at("synth");
  SynthConfig cfg;
  cfg.size = s.at("size");
  cfg.building_count = s.at("building_count");
  cfg.building_min = s.at("building_min");
  cfg.building_max = s.at("building_max");
  cfg.seed = s.at("seed").get<std::uint64_t>();
  const json& dist = s.at("distributions").at(tag);
  cfg.wall_attenuation = dist.at("wall_attenuation");
  cfg.distance_decay = dist.at("distance_decay");
  cfg.validate();
  return cfg;
}

ModelConfig model_config(const json& doc) {
  ModelConfig cfg = doc.at("model").get<ModelConfig>();
  cfg.validate();
  return cfg;
}

TrainConfig train_config(const json& doc) {
  const json& t = doc.at("train");
  TrainConfig cfg;
  cfg.lr_init = t.at("lr_init");
  cfg.weight_decay = t.at("weight_decay");
  cfg.total_steps = t.at("total_steps");
  cfg.batch_size = t.at("batch_size");
  cfg.max_steps = t.at("max_steps");
  cfg.obs_budget = t.at("obs_budget");
  cfg.sampler_kind = sampler_kind_from_string(t.at("sampler"));
  cfg.seed = t.at("seed").get<std::uint64_t>();
  cfg.precision = precision_from_string(t.at("precision"));
  cfg.mask_buildings = t.at("mask_buildings");
  cfg.reverse_building = t.at("reverse_building");
  cfg.validate();
  return cfg;
}

SplitSpec split_spec(const json& doc) {
  const json& s = doc.at("split");
  SplitSpec spec;
  spec.test_threshold = s.at("test_threshold");
  spec.ratio_train = s.at("ratio_train");
  spec.ratio_val = s.at("ratio_val");
  spec.split_seed = s.at("split_seed").get<std::uint64_t>();
  return spec;
}

SsimConfig ssim_config(const json& doc) {
  const json& s = doc.at("ssim");
  SsimConfig cfg;
  cfg.window = s.at("window");
  cfg.window_sigma = s.at("sigma");
  cfg.k1 = s.at("k1");
  cfg.k2 = s.at("k2");
  cfg.dynamic_range = s.at("dynamic_range");
  return cfg;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

SourceTag tag_from_name(const std::string& tag) {
  return tag == "synth_b" ? SourceTag::SynthB
         : tag == "synth_a" ? SourceTag::SynthA
                            : SourceTag::Dataset;
}

void cmd_synth_gen(const json& doc, const std::string& out_dir) {
  const json& dists = doc.at("synth").at("distributions");
  const int count = doc.at("synth").at("count");
  if (count < 1) throw ConfigError("synth.count must be >= 1");
  fs::create_directories(out_dir);
  json manifest;
  manifest["tags"] = json::array();
  for (auto it = dists.begin(); it != dists.end(); ++it) {
    const std::string tag = it.key();
    const SynthConfig base = synth_config(doc, tag);
    const std::string tag_dir = out_dir + "/" + tag;
    fs::create_directories(tag_dir);
    json ids = json::array();
    for (int id = 0; id < count; ++id) {
      SynthConfig cfg = base;
      cfg.seed = Rng::derive_seed(base.seed, static_cast<std::uint64_t>(id));
      Scene scene = synth_scene(cfg);
      scene.source_tag = tag_from_name(tag);
      save_dataset_scene(tag_dir, id, 0, scene);
      ids.push_back(id);
    }
    json meta{{"tag", tag},
              {"count", count},
              {"ids", ids},
              {"seed", base.seed},
              {"size", base.size},
              {"building_count", base.building_count},
              {"building_min", base.building_min},
              {"building_max", base.building_max},
              {"wall_attenuation", base.wall_attenuation},
              {"distance_decay", base.distance_decay}};
    std::ofstream(tag_dir + "/meta.json") << meta.dump(2) << "\n";
    manifest["tags"].push_back(tag);
    std::printf("synth-gen: %d scenes -> %s\n", count, tag_dir.c_str());
  }
  manifest["count"] = count;
  std::ofstream(out_dir + "/manifest.json") << manifest.dump(2) << "\n";
}

struct Corpus {
  std::vector<Scene> scenes;  // indexed by position in ids
  std::vector<int> ids;
};

Corpus load_corpus(const std::string& root, const std::string& tag) {
  const std::string tag_dir = root + "/" + tag;
  std::ifstream meta_in(tag_dir + "/meta.json");
  if (!meta_in) throw NotFound("corpus meta not found: " + tag_dir + "/meta.json");
  json meta;
  meta_in >> meta;
  Corpus corpus;
  for (int id : meta.at("ids")) {
    Scene scene = load_dataset_scene(tag_dir, id, 0);
    scene.source_tag = tag_from_name(tag);
    corpus.scenes.push_back(std::move(scene));
    corpus.ids.push_back(id);
  }
  if (corpus.scenes.empty()) throw FormatError("corpus has no scenes: " + tag_dir);
  return corpus;
}

std::vector<Scene> pick(const Corpus& corpus, const std::vector<int>& ids) {
  std::vector<Scene> out;
  for (int id : ids) {
    for (std::size_t i = 0; i < corpus.ids.size(); ++i) {
      if (corpus.ids[i] == id) {
        out.push_back(corpus.scenes[i]);
        break;
      }
    }
  }
  return out;
}

std::vector<Scene> split_scenes(const Corpus& corpus, const SplitSpec& spec,
                                const std::string& which) {
  const SplitResult split = split_dataset(corpus.ids, spec);
  if (which == "train") return pick(corpus, split.train);
  if (which == "val") return pick(corpus, split.val);
  if (which == "test") return pick(corpus, split.test);
  if (which == "all") return corpus.scenes;
  throw ConfigError("unknown split selector: " + which);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream out(path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, curve[i]);
    out << buf;
  }
}

void cmd_train(const json& doc) {
  const std::string out_dir = doc.at("out_dir");
  fs::create_directories(out_dir);
  ModelConfig mc = model_config(doc);
  const TrainConfig tc = train_config(doc);
  const SplitSpec spec = split_spec(doc);
  const Corpus corpus =
      load_corpus(doc.at("data_root"), doc.at("train").at("tag"));
  const std::vector<Scene> train_set = split_scenes(corpus, spec, "train");

  std::vector<double> curve;
  std::size_t param_count = 0;
  if (tc.precision == Precision::F64) {
    auto r = train<double>(mc, tc, train_set);
    curve = std::move(r.loss_curve);
    param_count = r.params.count();
    save_checkpoint(out_dir + "/checkpoint.bin", mc, r.params);
  } else {
    auto r = train<float>(mc, tc, train_set);
    curve = std::move(r.loss_curve);
    param_count = r.params.count();
    save_checkpoint(out_dir + "/checkpoint.bin", mc, r.params);
  }
  write_loss_csv(out_dir + "/loss.csv", curve);

  json run{{"model", json(mc)},
           {"train_seed", tc.seed},
           {"init_seed", Rng::derive_seed(tc.seed, 0x1717)},
           {"split_seed", spec.split_seed},
           {"param_count", param_count},
           {"train_scenes", train_set.size()},
           {"steps", curve.size()},
           {"final_loss", curve.empty() ? 0.0 : curve.back()},
           {"precision", to_string(tc.precision)},
           {"sampler", to_string(tc.sampler_kind)},
           {"obs_budget", tc.obs_budget}};
  std::ofstream(out_dir + "/run.json") << run.dump(2) << "\n";
  std::printf("train: %zu params, %zu steps, final loss %.6f -> %s\n",
              param_count, curve.size(), curve.empty() ? 0.0 : curve.back(),
              out_dir.c_str());
}

struct SceneEval {
  double rmse, ssim_v, psnr_v;
  double idw_rmse, idw_ssim, idw_psnr;
  RadioMap pred;
  ObservationSet obs;
};

SceneEval eval_one(const ModelConfig& mc, const ParamStore<float>& params,
                   const Scene& scene, SamplerKind kind, int budget,
                   std::uint64_t seed, const SsimConfig& ssim_cfg,
                   bool reverse_building) {
  Rng rng(seed);
  SceneEval r;
  r.obs = sample_observations(scene, kind, budget, rng);
  r.pred = predict(mc, params, scene, r.obs, reverse_building);
  const RadioMap idw = idw_predict(scene.building, r.obs);
  r.rmse = rmse(scene.radio, r.pred);
  r.ssim_v = ssim(scene.radio, r.pred, ssim_cfg);
  r.psnr_v = psnr(scene.radio, r.pred, ssim_cfg.dynamic_range);
  r.idw_rmse = rmse(scene.radio, idw);
  r.idw_ssim = ssim(scene.radio, idw, ssim_cfg);
  r.idw_psnr = psnr(scene.radio, idw, ssim_cfg.dynamic_range);
  return r;
}

void cmd_eval(const json& doc, const std::string& ckpt_path) {
  const std::string out_dir = doc.at("out_dir");
  fs::create_directories(out_dir);
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const json& ev = doc.at("eval");
  const SamplerKind kind = sampler_kind_from_string(ev.at("sampler"));
  const int budget = ev.at("obs_budget");
  const int repeats = ev.at("repeats");
  const std::uint64_t seed = ev.at("seed").get<std::uint64_t>();
  const SsimConfig ssim_cfg = ssim_config(doc);
  const bool rev = doc.at("train").at("reverse_building");
  const Corpus corpus = load_corpus(doc.at("data_root"), ev.at("tag"));
  const std::vector<Scene> scenes =
      split_scenes(corpus, split_spec(doc), ev.at("split"));

  std::ofstream metrics(out_dir + "/metrics.csv");
  metrics << "run,sampler,rmse,ssim,psnr,idw_rmse,idw_ssim,idw_psnr\n";
  std::ofstream per_scene(out_dir + "/scenes.csv");
  per_scene << "scene,rmse,ssim,psnr,idw_rmse,idw_ssim,idw_psnr\n";

  char buf[256];
  for (int r = 0; r < repeats; ++r) {
    double acc[6] = {0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const auto e = eval_one(
          ckpt.config, ckpt.params, scenes[i], kind, budget,
          Rng::derive_seed(seed, static_cast<std::uint64_t>(r) * 1000003 + i),
          ssim_cfg, rev);
      acc[0] += e.rmse;
      acc[1] += e.ssim_v;
      acc[2] += e.psnr_v;
      acc[3] += e.idw_rmse;
      acc[4] += e.idw_ssim;
      acc[5] += e.idw_psnr;
      if (r == 0) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i,
                      e.rmse, e.ssim_v, e.psnr_v, e.idw_rmse, e.idw_ssim,
                      e.idw_psnr);
        per_scene << buf;
        if (ev.at("triptychs").get<bool>()) {
          const std::string stem = out_dir + "/scene_" + std::to_string(i);
          write_png_gray8(stem + "_gt.png", radio_to_gray(scenes[i].radio));
          write_png_gray8(stem + "_pred.png", radio_to_gray(e.pred));
          RadioMap err;
          err.h = e.pred.h;
          err.w = e.pred.w;
          err.grid.resize(e.pred.grid.size());
          for (std::size_t p = 0; p < err.grid.size(); ++p) {
            err.grid[p] = std::min(
                1.0, std::abs(e.pred.grid[p] - scenes[i].radio.grid[p]));
          }
          write_png_gray8(stem + "_err.png", radio_to_gray(err));
        }
      }
    }
    const double n = static_cast<double>(scenes.size());
    std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r,
                  to_string(kind).c_str(), acc[0] / n, acc[1] / n, acc[2] / n,
                  acc[3] / n, acc[4] / n, acc[5] / n);
    metrics << buf;
    std::printf("eval run %d: rmse %.4f (idw %.4f)\n", r, acc[0] / n,
                acc[3] / n);
  }
}

void cmd_sweep_obs(const json& doc, const std::string& ckpt_path) {
  const std::string out_dir = doc.at("out_dir");
  fs::create_directories(out_dir);
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const json& ev = doc.at("eval");
  const std::vector<int> budgets = doc.at("sweep").at("budgets");
  const int repeats = doc.at("sweep").at("repeats");
  if (budgets.empty()) throw ConfigError("sweep.budgets must be non-empty");
  const SamplerKind kind = sampler_kind_from_string(ev.at("sampler"));
  const std::uint64_t seed = ev.at("seed").get<std::uint64_t>();
  const SsimConfig ssim_cfg = ssim_config(doc);
  const bool rev = doc.at("train").at("reverse_building");
  const Corpus corpus = load_corpus(doc.at("data_root"), ev.at("tag"));
  const std::vector<Scene> scenes =
      split_scenes(corpus, split_spec(doc), ev.at("split"));

  std::ofstream csv(out_dir + "/sweep.csv");
  csv << "k,run,rmse,ssim,psnr,idw_rmse,idw_ssim,idw_psnr\n";
  std::vector<double> model_mean, idw_mean;
  char buf[256];
  for (int k : budgets) {
    double mk = 0, ik = 0;
    for (int r = 0; r < repeats; ++r) {
      double acc[6] = {0, 0, 0, 0, 0, 0};
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto e = eval_one(
            ckpt.config, ckpt.params, scenes[i], kind, k,
            Rng::derive_seed(seed, static_cast<std::uint64_t>(r) * 1000003 + i),
            ssim_cfg, rev);
        acc[0] += e.rmse;
        acc[1] += e.ssim_v;
        acc[2] += e.psnr_v;
        acc[3] += e.idw_rmse;
        acc[4] += e.idw_ssim;
        acc[5] += e.idw_psnr;
      }
      const double n = static_cast<double>(scenes.size());
      std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", k,
                    r, acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n,
                    acc[4] / n, acc[5] / n);
      csv << buf;
      mk += acc[0] / n / repeats;
      ik += acc[3] / n / repeats;
    }
    model_mean.push_back(mk);
    idw_mean.push_back(ik);
    std::printf("sweep k=%d: rmse %.4f (idw %.4f)\n", k, mk, ik);
  }

  rflab::Series model_s, idw_s;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    model_s.x.push_back(budgets[i]);
    model_s.y.push_back(model_mean[i]);
    idw_s.x.push_back(budgets[i]);
    idw_s.y.push_back(idw_mean[i]);
  }
  model_s.color = {200, 40, 40};
  idw_s.color = {40, 40, 200};
  write_png_rgb8(out_dir + "/sweep.png",
                 rflab::line_plot_logx({model_s, idw_s}));

  const auto [mmin, mmax] = std::minmax_element(model_mean.begin(), model_mean.end());
  const auto [imin, imax] = std::minmax_element(idw_mean.begin(), idw_mean.end());
  std::printf("sweep spread: model %.4f, idw %.4f\n", *mmax - *mmin,
              *imax - *imin);
}

void cmd_ablate(const json& doc) {
  const std::string out_dir = doc.at("out_dir");
  fs::create_directories(out_dir);
  const json& ab = doc.at("ablate");
  const std::vector<int> dims = ab.at("embed_dims");
  const std::vector<std::string> crosses = ab.at("cross_fusions");
  const std::vector<std::string> obs_modes = ab.at("obs_fusions");
  const std::vector<std::string> pos_modes = ab.at("pos_embeds");
  const std::vector<bool> reversed_flags = ab.at("reversed_building");
  if (dims.empty() || crosses.empty() || obs_modes.empty() || pos_modes.empty() ||
      reversed_flags.empty()) {
    throw ConfigError("ablation axes must be non-empty");
  }

  const Corpus corpus =
      load_corpus(doc.at("data_root"), doc.at("train").at("tag"));
  const int n_train = std::min<int>(ab.at("train_scenes").get<int>(),
                                    static_cast<int>(corpus.scenes.size()));
  const int n_eval = std::min<int>(ab.at("eval_scenes").get<int>(),
                                   static_cast<int>(corpus.scenes.size()));
  const std::vector<Scene> train_set(corpus.scenes.begin(),
                                     corpus.scenes.begin() + n_train);
  const std::vector<Scene> eval_set(corpus.scenes.end() - n_eval,
                                    corpus.scenes.end());
  TrainConfig tc = train_config(doc);
  tc.max_steps = ab.at("max_steps");
  tc.total_steps = 0;
  const SsimConfig ssim_cfg = ssim_config(doc);
  const json& ev = doc.at("eval");

  std::ofstream csv(out_dir + "/ablation.csv");
  csv << "config_hash,cross_fusion,obs_fusion,pos_embed,embed_dim,"
         "reversed_building,params,rmse,ssim,psnr\n";
  char buf[320];
  for (const auto& cross : crosses) {
    for (const auto& obs_mode : obs_modes) {
      for (const auto& pos : pos_modes) {
        for (int dim : dims) {
          for (bool rev : reversed_flags) {
            ModelConfig mc = model_config(doc);
            mc.cross_fusion = cross_fusion_from_string(cross);
            mc.obs_fusion = obs_fusion_from_string(obs_mode);
            mc.pos_embed = pos_embed_from_string(pos);
            mc.embed_dim = dim;
            mc.decoder_channels.clear();
            mc.validate();
            tc.reverse_building = rev;
            json resolved = json(mc);
            resolved["reverse_building"] = rev;
            resolved["max_steps"] = tc.max_steps;
            resolved["seed"] = tc.seed;
            const std::uint64_t hash = fnv1a(resolved.dump());

            auto r = train<float>(mc, tc, train_set);
            const MetricReport rep = evaluate(
                mc, r.params, eval_set,
                sampler_kind_from_string(ev.at("sampler")),
                ev.at("obs_budget").get<int>(), doc.at("ablate").at("repeats").get<int>(),
                ev.at("seed").get<std::uint64_t>(), ssim_cfg, rev);
            std::snprintf(buf, sizeof buf,
                          "%016llx,%s,%s,%s,%d,%d,%zu,%.9g,%.9g,%.9g\n",
                          static_cast<unsigned long long>(hash), cross.c_str(),
                          obs_mode.c_str(), pos.c_str(), dim, rev ? 1 : 0,
                          r.params.count(), rep.rmse_mean, rep.ssim_mean,
                          rep.psnr_mean);
            csv << buf;
            std::printf("ablate %s/%s/%s d=%d rev=%d: rmse %.4f\n",
                        cross.c_str(), obs_mode.c_str(), pos.c_str(), dim,
                        rev ? 1 : 0, rep.rmse_mean);
          }
        }
      }
    }
  }
}

void cmd_attn_export(const json& doc, const std::string& ckpt_path) {
  const std::string out_dir = doc.at("out_dir");
  fs::create_directories(out_dir);
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.config.fusion_query == FusionQuery::ObsAsQuery) {
    throw ConfigError(
        "attention export needs patch-query fusion; this checkpoint uses "
        "obs-as-query");
  }
  if (ckpt.config.cross_fusion != CrossFusion::CrossAttention) {
    throw ConfigError("attention export needs the cross-attention fusion mode");
  }
  const json& at = doc.at("attn");
  const Corpus corpus = load_corpus(doc.at("data_root"), at.at("tag"));
  const int scene_id = at.at("scene_id");
  const std::vector<Scene> one = pick(corpus, {scene_id});
  if (one.empty()) throw NotFound("scene id not in corpus: " + std::to_string(scene_id));
  const Scene& scene = one.front();

  Rng rng(at.at("obs_seed").get<std::uint64_t>());
  const ObservationSet obs = sample_observations(
      scene, SamplerKind::Random, at.at("obs_budget").get<int>(), rng);
  auto fwd = model_forward<float>(ckpt.config, ckpt.params, scene.building, obs);
  const AttentionRecord& rec = fwd.attention;

  std::ofstream wcsv(out_dir + "/attn_weights.csv");
  wcsv << "block,head,query,key,weight\n";
  char buf[128];
  for (int b = 0; b < rec.n_blocks; ++b) {
    for (int h = 0; h < rec.n_heads; ++h) {
      for (int q = 0; q < rec.n_queries; ++q) {
        for (int k = 0; k < rec.n_keys; ++k) {
          std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.9g\n", b, h, q, k,
                        rec.at(b, h, q, k));
          wcsv << buf;
        }
      }
    }
  }

  std::vector<rfl::RgbImage> panels;
  rfl::RgbImage marked = rflab::render_map(scene.radio, &scene.building);
  for (const auto& p : obs.points) {
    rflab::mark_point(marked, p.x, p.y, {255, 255, 255});
  }
  panels.push_back(marked);
  for (int i = 0; i < obs.k(); ++i) {
    const RadioMap heat = extract_attention(rec, ckpt.config, i);
    rfl::RgbImage img = rflab::render_map(heat);
    rflab::mark_point(img, obs.points[i].x, obs.points[i].y, {255, 255, 255});
    write_png_rgb8(out_dir + "/attn_point_" + std::to_string(i) + ".png", img);
    panels.push_back(img);
  }
  write_png_rgb8(out_dir + "/attn_composite.png", rflab::hstack(panels));
  std::printf("attn-export: %d heatmaps -> %s\n", obs.k(), out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radio map estimation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string ckpt_path = "out/checkpoint.bin";
  std::string out_override;
  app.add_option("--config", config_path, "JSON config document");
  app.add_option("--set", sets, "override a config key, e.g. train.seed=3");

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic corpus");
  auto* train_cmd = app.add_subcommand("train", "train a model on the corpus");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* sweep = app.add_subcommand("sweep-obs", "observation-budget sweep");
  auto* ablate = app.add_subcommand("ablate", "architecture ablation grid");
  auto* attn = app.add_subcommand("attn-export", "attention heatmap export");
  for (auto* sub : {synth, train_cmd, eval_cmd, sweep, ablate, attn}) {
    sub->fallthrough();
  }
  for (auto* sub : {eval_cmd, sweep, attn}) {
    sub->add_option("--checkpoint", ckpt_path, "checkpoint path");
  }
  app.add_option("--out", out_override, "output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    json doc = load_config(config_path, sets);
    if (!out_override.empty()) doc["out_dir"] = out_override;
    if (synth->parsed()) {
      cmd_synth_gen(doc, doc.at("data_root"));
    } else if (train_cmd->parsed()) {
      cmd_train(doc);
    } else if (eval_cmd->parsed()) {
      cmd_eval(doc, ckpt_path);
    } else if (sweep->parsed()) {
      cmd_sweep_obs(doc, ckpt_path);
    } else if (ablate->parsed()) {
      cmd_ablate(doc);
    } else if (attn->parsed()) {
      cmd_attn_export(doc, ckpt_path);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
