#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "rfl/checkpoint.hpp"
#include "rfl/model.hpp"

using namespace rfl;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.map_size = 32;
  cfg.patch_size = 8;
  cfg.embed_dim = 16;
  cfg.n_heads = 2;
  cfg.validate();
  return cfg;
}

Scene make_scene(std::uint64_t seed, int size = 32) {
  SynthConfig cfg;
  cfg.size = size;
  cfg.building_count = 4;
  cfg.seed = seed;
  return synth_scene(cfg);
}

ObservationSet sample_obs(const Scene& s, int k, std::uint64_t seed) {
  Rng rng(seed);
  return sample_random(s, k, rng);
}

}  // namespace

TEST_CASE("patchify single patch and round trip") {
  SynthConfig cfg;
  cfg.size = 16;
  cfg.building_count = 2;
  cfg.seed = 1;
  const Scene s = synth_scene(cfg);
  const Tensor<double> one = patchify<double>(s.building, 16);
  REQUIRE(one.shape == std::vector<int>{1, 256});
  for (int i = 0; i < 256; ++i) {
    CHECK(one.data[i] == static_cast<double>(s.building.grid[i]));
  }

  const int p = 4;
  const Tensor<double> toks = patchify<double>(s.building, p);
  REQUIRE(toks.shape == std::vector<int>{16, 16});
  // Reassemble and compare.
  for (int x = 0; x < 16; ++x) {
    for (int y = 0; y < 16; ++y) {
      const int token = (x / p) * 4 + (y / p);
      const int inner = (x % p) * p + (y % p);
      CHECK(toks.data[token * 16 + inner] ==
            static_cast<double>(s.building.at(x, y)));
    }
  }
  CHECK_THROWS_AS(patchify<double>(s.building, 5), ShapeError);
}

TEST_CASE("sinusoidal positional table") {
  const Tensor<double> a = sinusoidal_pos_embed(10, 8);
  const Tensor<double> b = sinusoidal_pos_embed(10, 8);
  CHECK(a.data == b.data);
  for (int j = 0; j < 4; ++j) {
    CHECK(a.data[2 * j] == doctest::Approx(0.0));
    CHECK(a.data[2 * j + 1] == doctest::Approx(1.0));
  }
  for (double v : a.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // Spot-check the closed form.
  const int i = 7, j = 2, d = 8;
  const double freq = std::pow(10000.0, -2.0 * j / d);
  CHECK(a.data[i * d + 2 * j] == doctest::Approx(std::sin(i * freq)));
  CHECK(a.data[i * d + 2 * j + 1] == doctest::Approx(std::cos(i * freq)));
}

TEST_CASE("zero weights decode to the squashed bias") {
  const ModelConfig cfg = tiny_config();
  ParamStore<double> params;
  for_each_param(cfg, [&](const std::string& name, const std::vector<int>& shape) {
    params.add(name, Tensor<double>(shape));
  });
  const Scene s = make_scene(2);
  const auto fwd = model_forward<double>(cfg, params, s.building,
                                         sample_obs(s, 3, 1));
  for (double v : fwd.prediction.grid) {
    CHECK(v == doctest::Approx(0.5));  // sigmoid(0)
  }
}

TEST_CASE("forward outputs stay in range over random seeds") {
  const ModelConfig cfg = tiny_config();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params = init_params<double>(cfg, seed);
    const Scene s = make_scene(100 + seed);
    const auto fwd = model_forward<double>(cfg, params, s.building,
                                           sample_obs(s, 5, seed));
    for (double v : fwd.prediction.grid) {
      REQUIRE(std::isfinite(v));
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("prediction shape independent of K") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 3);
  const Scene s = make_scene(5);
  for (int k : {1, 5, 9, 100, 500}) {
    const auto fwd =
        model_forward<double>(cfg, params, s.building, sample_obs(s, k, 7));
    CHECK(fwd.prediction.h == cfg.map_size);
    CHECK(fwd.prediction.w == cfg.map_size);
  }
}

TEST_CASE("different parameter seeds give different maps") {
  const ModelConfig cfg = tiny_config();
  const Scene s = make_scene(6);
  const auto obs = sample_obs(s, 5, 2);
  const auto a = model_forward<double>(cfg, init_params<double>(cfg, 1),
                                       s.building, obs);
  const auto b = model_forward<double>(cfg, init_params<double>(cfg, 2),
                                       s.building, obs);
  double diff = 0;
  for (std::size_t i = 0; i < a.prediction.grid.size(); ++i) {
    diff = std::max(diff, std::abs(a.prediction.grid[i] - b.prediction.grid[i]));
  }
  CHECK(diff > 1e-6);
}

TEST_CASE("observation permutation leaves the map unchanged") {
  const ModelConfig cfg = tiny_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto params = init_params<double>(cfg, seed);
    const Scene s = make_scene(30 + seed);
    ObservationSet obs = sample_obs(s, 9, seed);
    const auto base = model_forward<double>(cfg, params, s.building, obs);
    Rng rng(seed + 1);
    rng.shuffle(obs.points);
    const auto perm = model_forward<double>(cfg, params, s.building, obs);
    double diff = 0;
    for (std::size_t i = 0; i < base.prediction.grid.size(); ++i) {
      diff = std::max(diff,
                      std::abs(base.prediction.grid[i] - perm.prediction.grid[i]));
    }
    CHECK(diff <= 1e-5);
  }
}

TEST_CASE("self block is permutation equivariant") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 4);
  Rng rng(9);
  const int L = 6, d = cfg.embed_dim;
  Tensor<double> x({L, d});
  for (auto& v : x.data) v = 2.0 * rng.uniform() - 1.0;

  // Reference output.
  Tape<double> t1;
  detail::GraphBuilder<double> g1(t1, cfg, params, false);
  const auto y1 = t1.val(g1.self_block(t1.leaf(x), "building.blk0."));

  // Swap rows 1 and 4 of the input; output rows must swap identically.
  Tensor<double> xp = x;
  for (int j = 0; j < d; ++j) std::swap(xp.data[1 * d + j], xp.data[4 * d + j]);
  Tape<double> t2;
  detail::GraphBuilder<double> g2(t2, cfg, params, false);
  const auto y2 = t2.val(g2.self_block(t2.leaf(xp), "building.blk0."));

  for (int i = 0; i < L; ++i) {
    const int src = i == 1 ? 4 : i == 4 ? 1 : i;
    for (int j = 0; j < d; ++j) {
      CHECK(y2.data[i * d + j] ==
            doctest::Approx(y1.data[src * d + j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention record and heatmap extraction") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 8);
  const Scene s = make_scene(12);
  const int k = 6;
  const auto fwd =
      model_forward<double>(cfg, params, s.building, sample_obs(s, k, 3));
  const AttentionRecord& rec = fwd.attention;
  REQUIRE(!rec.empty());
  CHECK(rec.n_queries == cfg.n_tokens());
  CHECK(rec.n_keys == k);
  for (int b = 0; b < rec.n_blocks; ++b) {
    for (int h = 0; h < rec.n_heads; ++h) {
      for (int q = 0; q < rec.n_queries; ++q) {
        double sum = 0;
        for (int key = 0; key < rec.n_keys; ++key) {
          const double w = rec.at(b, h, q, key);
          CHECK(w >= 0.0);
          CHECK(w <= 1.0);
          sum += w;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }

  const RadioMap heat = extract_attention(rec, cfg, 2);
  CHECK(heat.h == cfg.map_size);
  CHECK(heat.w == cfg.map_size);
  double mx = 0;
  for (double v : heat.grid) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mx = std::max(mx, v);
  }
  CHECK(mx == doctest::Approx(1.0));
  CHECK_THROWS_AS(extract_attention(rec, cfg, k), IndexError);
}

TEST_CASE("single observation takes all attention") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 10);
  const Scene s = make_scene(13);
  const auto fwd =
      model_forward<double>(cfg, params, s.building, sample_obs(s, 1, 4));
  const AttentionRecord& rec = fwd.attention;
  REQUIRE(rec.n_keys == 1);
  for (std::size_t i = 0; i < rec.weights.size(); ++i) {
    CHECK(rec.weights[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
  const RadioMap heat = extract_attention(rec, cfg, 0);
  for (double v : heat.grid) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("parameter counting is shape determined") {
  ModelConfig cfg = tiny_config();
  const auto a = init_params<double>(cfg, 1);
  const auto b = init_params<double>(cfg, 2);
  CHECK(count_params(a) == count_params(b));

  std::size_t expected = 0;
  for_each_param(cfg, [&](const std::string&, const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    expected += n;
  });
  CHECK(count_params(a) == expected);

  ModelConfig wide = tiny_config();
  wide.decoder_channels.clear();
  for (int c : cfg.decoder_channels) wide.decoder_channels.push_back(2 * c);
  CHECK(count_params(init_params<double>(wide, 1)) > count_params(a));
}

TEST_CASE("obs-as-query cannot reach the grid decoder") {
  ModelConfig cfg = tiny_config();
  cfg.fusion_query = FusionQuery::ObsAsQuery;
  const auto params = init_params<double>(cfg, 5);
  const Scene s = make_scene(14);
  const auto obs = sample_obs(s, 4, 5);
  CHECK_THROWS_AS(model_forward<double>(cfg, params, s.building, obs),
                  ConfigError);

  // The fused sequence itself is reachable and K tokens long.
  ForwardOptions opts;
  opts.stop_after_fuse = true;
  const auto fwd = model_forward<double>(cfg, params, s.building, obs, opts);
  CHECK(fwd.tape.val(fwd.fused).dim(0) == obs.k());
}

TEST_CASE("gradients vanish at a stationary target") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 6);
  const Scene s = make_scene(15);
  const auto obs = sample_obs(s, 3, 6);
  const auto snap = model_forward<double>(cfg, params, s.building, obs);

  ForwardOptions opts;
  opts.target = &snap.prediction;  // loss is exactly zero at this point
  opts.with_grad = true;
  auto fwd = model_forward<double>(cfg, params, s.building, obs, opts);
  fwd.tape.backward(fwd.loss);
  for (std::size_t i = 0; i < fwd.param_ids.size(); ++i) {
    if (fwd.param_ids[i] < 0) continue;
    for (double g : fwd.tape.grad(fwd.param_ids[i]).data) {
      CHECK(std::abs(g) <= 1e-10);
    }
  }
}

TEST_CASE("doubling the loss doubles every gradient") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 7);
  const Scene s = make_scene(16);
  const auto obs = sample_obs(s, 3, 7);

  ForwardOptions opts;
  opts.target = &s.radio;
  opts.with_grad = true;
  auto f1 = model_forward<double>(cfg, params, s.building, obs, opts);
  f1.tape.backward(f1.loss);
  auto f2 = model_forward<double>(cfg, params, s.building, obs, opts);
  const auto doubled = f2.tape.scale(f2.loss, 2.0);
  f2.tape.backward(doubled);

  for (std::size_t i = 0; i < f1.param_ids.size(); ++i) {
    if (f1.param_ids[i] < 0) continue;
    const auto& g1 = f1.tape.grad(f1.param_ids[i]);
    const auto& g2 = f2.tape.grad(f2.param_ids[i]);
    for (std::size_t j = 0; j < g1.size(); ++j) {
      CHECK(g2.data[j] == doctest::Approx(2.0 * g1.data[j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("checkpoint round trip") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<float>(cfg, 11);
  const std::string path =
      (std::filesystem::temp_directory_path() / "rfl_ckpt.bin").string();
  save_checkpoint(path, cfg, params);
  const LoadedCheckpoint back = load_checkpoint(path);
  CHECK(back.config.embed_dim == cfg.embed_dim);
  CHECK(back.config.map_size == cfg.map_size);
  REQUIRE(back.params.names == params.names);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    REQUIRE(back.params.tensors[i].shape == params.tensors[i].shape);
    CHECK(back.params.tensors[i].data == params.tensors[i].data);
  }

  // Corrupt magic -> FormatError; missing file -> NotFound.
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(path + ".missing"), NotFound);
}

TEST_CASE("grad check on the tiny config") {
  const ModelConfig cfg = tiny_config();
  const auto params = init_params<double>(cfg, 12);
  const Scene s = make_scene(17);
  const auto obs = sample_obs(s, 3, 8);
  const GradCheckResult r = grad_check(cfg, params, s, obs, 1e-4, 60, 9);
  CHECK(r.checked == 60);
  CHECK(r.max_rel_error < 1e-3);
}
