// Acceptance gate: measured desk-scale runs of every release criterion.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.
// argv[1]: path to the experiment CLI binary (criterion 10).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rfl/checkpoint.hpp"
#include "rfl/training.hpp"

using namespace rfl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s  criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Scene> synth_corpus(int n, std::uint64_t base, int size = 48,
                                double wall = 0.5, double decay = 0.02) {
  std::vector<Scene> scenes;
  scenes.reserve(n);
  for (int i = 0; i < n; ++i) {
    SynthConfig cfg;
    cfg.size = size;
    cfg.wall_attenuation = wall;
    cfg.distance_decay = decay;
    cfg.seed = Rng::derive_seed(base, static_cast<std::uint64_t>(i));
    scenes.push_back(synth_scene(cfg));
  }
  return scenes;
}

ModelConfig desk_model() {
  ModelConfig cfg;
  cfg.map_size = 48;
  cfg.patch_size = 8;
  cfg.embed_dim = 48;
  cfg.n_heads = 4;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

void criterion_1_samplers() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string why;

  std::vector<Scene> pool = synth_corpus(50, 0xaaa1);
  Rng rng(1);
  const int trials = 10000;

  // Random: in-range, off-building, distinct.
  for (int t = 0; t < trials && ok; ++t) {
    const Scene& s = pool[t % pool.size()];
    const ObservationSet set = sample_random(s, 9, rng);
    std::set<std::pair<int, int>> seen;
    for (const auto& p : set.points) {
      if (p.x < 0 || p.x >= s.building.h || p.y < 0 || p.y >= s.building.w ||
          s.building.at(p.x, p.y) != 0 || !seen.emplace(p.x, p.y).second) {
        ok = false;
        why = "random sampler violated bounds/occupancy/distinctness";
      }
    }
  }

  // Constrained: strict box predicates.
  for (int t = 0; t < trials && ok; ++t) {
    const Scene& s = pool[t % pool.size()];
    const int h = s.building.h, w = s.building.w;
    const ConstraintBox box{h / 4 - 1, h - h / 4, w / 4 - 1, w - w / 4};
    const ObservationSet set = sample_constrained(s, 9, box, rng);
    for (const auto& p : set.points) {
      if (!(p.x > box.row_lo && p.x < box.row_hi && p.y > box.col_lo &&
            p.y < box.col_hi) ||
          s.building.at(p.x, p.y) != 0) {
        ok = false;
        why = "constrained sampler violated strict bounds";
      }
    }
  }

  // Uniform: one point per non-empty cell, strict real-valued bounds.
  for (int t = 0; t < trials && ok; ++t) {
    const Scene& s = pool[t % pool.size()];
    const int order = 3;
    const UniformSampleResult r = sample_uniform(s, order, rng);
    if (r.set.k() + r.skipped_cells != order * order) {
      ok = false;
      why = "uniform sampler cell accounting broke";
      break;
    }
    const double hs = s.building.h / static_cast<double>(order);
    const double ws = s.building.w / static_cast<double>(order);
    std::set<int> cells;
    for (const auto& p : r.set.points) {
      if (s.building.at(p.x, p.y) != 0) {
        ok = false;
        why = "uniform sampler hit a building";
      }
      int cell = -1;
      for (int ci = 0; ci < order && cell < 0; ++ci) {
        for (int cj = 0; cj < order; ++cj) {
          if (p.x > ci * hs && p.x < (ci + 1) * hs && p.y > cj * ws &&
              p.y < (cj + 1) * ws) {
            cell = ci * order + cj;
            break;
          }
        }
      }
      if (cell < 0 || !cells.insert(cell).second) {
        ok = false;
        why = "uniform sampler broke the one-per-cell strict-bound rule";
      }
    }
  }

  const double secs = seconds_since(t0);
  if (ok && secs >= 60.0) {
    ok = false;
    why = "sampler suite exceeded 1 minute";
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "sampler predicates over 3x%d randomized trials (%.1fs)%s%s",
                trials, secs, ok ? "" : " - ", why.c_str());
  report(1, ok, buf);
}

void criterion_2_gradients() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.map_size = 32;
  cfg.patch_size = 8;
  cfg.embed_dim = 16;
  cfg.n_heads = 2;
  cfg.validate();
  const auto params = init_params<double>(cfg, 21);
  SynthConfig sc;
  sc.size = 32;
  sc.building_count = 4;
  sc.seed = 22;
  const Scene scene = synth_scene(sc);
  Rng rng(23);
  const ObservationSet obs = sample_random(scene, 3, rng);

  const GradCheckResult r = grad_check(cfg, params, scene, obs, 1e-4, 200, 24);
  const double secs = seconds_since(t0);
  const bool ok = r.checked >= 200 && r.max_rel_error < 1e-3 && secs < 300.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "max relative gradient error %.3e over %d samples (%.1fs)",
                r.max_rel_error, r.checked, secs);
  report(2, ok, buf);
}

void criterion_3_permutation() {
  ModelConfig cfg;
  cfg.map_size = 32;
  cfg.patch_size = 8;
  cfg.embed_dim = 16;
  cfg.n_heads = 2;
  cfg.validate();
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto params = init_params<double>(cfg, 100 + i);
    SynthConfig sc;
    sc.size = 32;
    sc.building_count = 4;
    sc.seed = 300 + i;
    const Scene scene = synth_scene(sc);
    Rng rng(400 + i);
    ObservationSet obs = sample_random(scene, 9, rng);
    const auto base = model_forward<double>(cfg, params, scene.building, obs);
    Rng shuffle_rng(500 + i);
    shuffle_rng.shuffle(obs.points);
    const auto perm = model_forward<double>(cfg, params, scene.building, obs);
    for (std::size_t j = 0; j < base.prediction.grid.size(); ++j) {
      worst = std::max(
          worst, std::abs(base.prediction.grid[j] - perm.prediction.grid[j]));
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "observation permutation max abs deviation %.3e over 20 scenes",
                worst);
  report(3, worst <= 1e-5, buf);
}

struct DeskRun {
  ModelConfig config;
  ParamStore<float> params;
  std::vector<Scene> test_scenes;
  bool trained = false;
};

DeskRun criterion_6_learning() {
  DeskRun run;
  run.config = desk_model();
  const auto scenes = synth_corpus(2000, 0xbbb2);
  run.test_scenes = synth_corpus(60, 0xccc3);

  TrainConfig tc;
  tc.max_steps = 6000;
  tc.batch_size = 8;
  tc.obs_budget = 9;
  tc.seed = 17;

  const auto t0 = Clock::now();
  bool ok = true;
  std::string why;
  double model_rmse = 0, idw_rmse = 0, secs = 0;
  try {
    auto result = train<float>(run.config, tc, scenes);
    secs = seconds_since(t0);
    run.params = std::move(result.params);
    run.trained = true;
    const MetricReport model_rep = evaluate(
        run.config, run.params, run.test_scenes, SamplerKind::Random, 9, 5, 777);
    const MetricReport idw_rep =
        evaluate_idw(run.test_scenes, SamplerKind::Random, 9, 5, 777);
    model_rmse = model_rep.rmse_mean;
    idw_rmse = idw_rep.rmse_mean;
    ok = secs < 1800.0 && model_rmse <= 0.8 * idw_rmse;
  } catch (const std::exception& e) {
    ok = false;
    why = e.what();
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "held-out rmse %.4f vs idw %.4f (%.1f%% better, 60 scenes, "
                "train %.0fs)%s%s",
                model_rmse, idw_rmse,
                idw_rmse > 0 ? 100.0 * (1.0 - model_rmse / idw_rmse) : 0.0,
                secs, why.empty() ? "" : " - ", why.c_str());
  report(6, ok, buf);
  return run;
}

void criterion_4_k_generalization(const DeskRun& run) {
  if (!run.trained) {
    report(4, false, "skipped: desk-scale training unavailable");
    return;
  }
  const std::vector<int> budgets{5, 9, 25, 50, 75, 100, 250, 500, 1000};
  const std::vector<Scene> subset(run.test_scenes.begin(),
                                  run.test_scenes.begin() + 20);
  bool ok = true;
  std::string why;
  std::vector<double> model_rmse, idw_rmse;
  for (int k : budgets) {
    try {
      const MetricReport m = evaluate(run.config, run.params, subset,
                                      SamplerKind::Random, k, 2, 888);
      const MetricReport b =
          evaluate_idw(subset, SamplerKind::Random, k, 2, 888);
      if (!std::isfinite(m.rmse_mean) || !std::isfinite(m.ssim_mean)) {
        ok = false;
        why = "non-finite metrics at K=" + std::to_string(k);
      }
      model_rmse.push_back(m.rmse_mean);
      idw_rmse.push_back(b.rmse_mean);
    } catch (const std::exception& e) {
      ok = false;
      why = std::string("K=") + std::to_string(k) + ": " + e.what();
      break;
    }
  }
  double mspread = 0, ispread = 0;
  if (ok) {
    const auto [mmin, mmax] =
        std::minmax_element(model_rmse.begin(), model_rmse.end());
    const auto [imin, imax] =
        std::minmax_element(idw_rmse.begin(), idw_rmse.end());
    mspread = *mmax - *mmin;
    ispread = *imax - *imin;
    if (!(mspread < ispread)) {
      ok = false;
      why = "model spread not below the baseline spread";
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "K in {5..1000}: rmse spread %.4f (model) vs %.4f (idw)%s%s",
                mspread, ispread, why.empty() ? "" : " - ", why.c_str());
  report(4, ok, buf);
}

void criterion_5_overfit() {
  const auto scenes = synth_corpus(8, 0xddd4);
  TrainConfig tc;
  tc.max_steps = 2000;
  tc.batch_size = 8;
  tc.obs_budget = 9;
  tc.seed = 5;

  const auto t0 = Clock::now();
  bool ok = true;
  std::string why;
  double train_rmse = 0, secs = 0;
  try {
    const ModelConfig cfg = desk_model();
    const auto result = train<float>(cfg, tc, scenes);
    secs = seconds_since(t0);
    for (double l : result.loss_curve) {
      if (!std::isfinite(l)) {
        ok = false;
        why = "non-finite loss";
      }
    }
    // Windowed means settle: each successive 500-step window no worse than
    // its predecessor (5% slack for sampling noise).
    for (int w = 1; w + 1 <= 4 && ok; ++w) {
      const auto begin = result.loss_curve.begin();
      const double prev =
          std::accumulate(begin + (w - 1) * 500, begin + w * 500, 0.0) / 500;
      const double cur =
          std::accumulate(begin + w * 500, begin + (w + 1) * 500, 0.0) / 500;
      if (cur > prev * 1.05 + 1e-4) {
        ok = false;
        why = "windowed loss mean increased";
      }
    }
    const MetricReport rep = evaluate(cfg, result.params, scenes,
                                      SamplerKind::Random, 9, 3, 666);
    train_rmse = rep.rmse_mean;
    if (train_rmse >= 0.05) {
      ok = false;
      why = "train rmse above 0.05";
    }
    if (secs >= 600.0) {
      ok = false;
      why = "training exceeded 10 minutes";
    }
  } catch (const std::exception& e) {
    ok = false;
    why = e.what();
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "overfit on 8 scenes: train rmse %.4f in 2000 steps (%.0fs)%s%s",
                train_rmse, secs, why.empty() ? "" : " - ", why.c_str());
  report(5, ok, buf);
}

void criterion_7_metric_oracles() {
  bool ok = true;
  std::string why;
  Rng rng(70);
  auto random_map = [&](int h, int w) {
    RadioMap m;
    m.h = h;
    m.w = w;
    m.grid.resize(static_cast<std::size_t>(h) * w);
    for (auto& v : m.grid) v = rng.uniform();
    return m;
  };

  for (int trial = 0; trial < 10 && ok; ++trial) {
    const RadioMap a = random_map(20, 20);
    const RadioMap b = random_map(20, 20);
    if (std::abs(ssim(a, a) - 1.0) > 1e-9) {
      ok = false;
      why = "ssim(x,x) != 1";
    }
    if (std::abs(psnr(a, b) + 20.0 * std::log10(rmse(a, b))) > 1e-9) {
      ok = false;
      why = "psnr/rmse identity failed";
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
      acc += (a.grid[i] - b.grid[i]) * (a.grid[i] - b.grid[i]);
    }
    const double brute = acc / a.grid.size();
    if (std::abs(mse(a, b) - brute) > 1e-12 * brute) {
      ok = false;
      why = "mse summation mismatch";
    }

    // Direct windowed-statistics SSIM reference.
    const SsimConfig cfg;
    const int r = cfg.window / 2;
    std::vector<double> w2(static_cast<std::size_t>(cfg.window) * cfg.window);
    double wsum = 0;
    for (int i = 0; i < cfg.window; ++i) {
      for (int j = 0; j < cfg.window; ++j) {
        const double dx = i - r, dy = j - r;
        w2[i * cfg.window + j] = std::exp(
            -(dx * dx + dy * dy) / (2 * cfg.window_sigma * cfg.window_sigma));
        wsum += w2[i * cfg.window + j];
      }
    }
    for (auto& v : w2) v /= wsum;
    const double c1 = std::pow(cfg.k1, 2), c2 = std::pow(cfg.k2, 2);
    double ref = 0;
    int count = 0;
    for (int cx = r; cx < a.h - r; ++cx) {
      for (int cy = r; cy < a.w - r; ++cy) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < cfg.window; ++i) {
          for (int j = 0; j < cfg.window; ++j) {
            const double wt = w2[i * cfg.window + j];
            const double av = a.at(cx + i - r, cy + j - r);
            const double bv = b.at(cx + i - r, cy + j - r);
            ma += wt * av;
            mb += wt * bv;
            saa += wt * av * av;
            sbb += wt * bv * bv;
            sab += wt * av * bv;
          }
        }
        ref += ((2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2)) /
               ((ma * ma + mb * mb + c1) *
                ((saa - ma * ma) + (sbb - mb * mb) + c2));
        ++count;
      }
    }
    ref /= count;
    if (std::abs(ssim(a, b) - ref) > 1e-6) {
      ok = false;
      why = "ssim reference mismatch";
    }
  }
  report(7, ok,
         "metric oracles (ssim identity/reference, psnr identity, mse "
         "summation)" +
             (why.empty() ? std::string() : " - " + why));
}

void criterion_8_split() {
  bool ok = true;
  std::string why;
  std::vector<int> ids(700);
  std::iota(ids.begin(), ids.end(), 0);
  try {
    const SplitResult r = split_dataset(ids, SplitSpec{});
    std::set<int> test(r.test.begin(), r.test.end());
    std::set<int> expect;
    for (int id = 551; id <= 699; ++id) expect.insert(id);
    if (test != expect) {
      ok = false;
      why = "test partition is not exactly {551..699}";
    }
    if (r.train.size() != 509 || r.val.size() != 42) {
      ok = false;
      why = "train/val sizes differ from 509/42";
    }
    std::vector<int> all;
    all.insert(all.end(), r.train.begin(), r.train.end());
    all.insert(all.end(), r.val.begin(), r.val.end());
    all.insert(all.end(), r.test.begin(), r.test.end());
    std::sort(all.begin(), all.end());
    if (all != ids) {
      ok = false;
      why = "partitions not disjoint/exhaustive";
    }
    if (split_dataset(ids, SplitSpec{}).train != r.train) {
      ok = false;
      why = "split not deterministic";
    }
  } catch (const std::exception& e) {
    ok = false;
    why = e.what();
  }
  report(8, ok,
         "split protocol on ids 0..699 (149/509/42, disjoint, deterministic)" +
             (why.empty() ? std::string() : " - " + why));
}

void criterion_9_zero_shot() {
  ModelConfig cfg;
  cfg.map_size = 48;
  cfg.patch_size = 8;
  cfg.embed_dim = 32;
  cfg.n_heads = 4;
  cfg.validate();

  int ordered = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto source = synth_corpus(400, 0x5000 + seed);  // SYNTH_A-like
    const auto target_train =
        synth_corpus(40, 0x6000 + seed, 48, 0.75, 0.035);  // SYNTH_B-like
    const auto target_test = synth_corpus(20, 0x7000 + seed, 48, 0.75, 0.035);

    TrainConfig tc;
    tc.max_steps = 900;
    tc.batch_size = 8;
    tc.obs_budget = 9;
    tc.seed = seed;
    const auto pre = train<float>(cfg, tc, source);

    const double zero_shot =
        evaluate(cfg, pre.params, target_test, SamplerKind::Random, 9, 3, 901)
            .rmse_mean;
    TrainConfig ft = tc;
    ft.max_steps = 400;
    const auto tuned = fine_tune(cfg, ft, target_train, pre.params);
    const double fine_tuned =
        evaluate(cfg, tuned.params, target_test, SamplerKind::Random, 9, 3, 901)
            .rmse_mean;
    if (fine_tuned <= zero_shot) ++ordered;
    char buf[96];
    std::snprintf(buf, sizeof buf, " seed %llu: %.4f -> %.4f",
                  static_cast<unsigned long long>(seed), zero_shot, fine_tuned);
    detail += buf;
  }
  report(9, ordered == 3,
         "fine-tuned rmse <= zero-shot on " + std::to_string(ordered) +
             "/3 seeds;" + detail);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_10_cli(const std::string& cli) {
  bool ok = true;
  std::string why;
  const fs::path root = fs::temp_directory_path() / "rfl_accept_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "data").string();
  const std::string out = (root / "out").string();

  const std::string common =
      " --set data_root=" + data + " --set out_dir=" + out +
      " --set synth.count=30 --set split.test_threshold=19" +
      " --set model.embed_dim=16 --set model.n_heads=2" +
      " --set train.max_steps=40 --set eval.repeats=2" +
      " --set sweep.budgets=[5,9] --set sweep.repeats=1" +
      " --set attn.obs_budget=6";

  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + common + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };

  if (ok && run("synth-gen") != 0) {
    ok = false;
    why = "synth-gen failed";
  }
  if (ok && run("train") != 0) {
    ok = false;
    why = "train failed";
  }
  const std::string ckpt = " --checkpoint " + out + "/checkpoint.bin";
  if (ok && run("eval" + ckpt) != 0) {
    ok = false;
    why = "eval failed";
  }
  if (ok && run("sweep-obs" + ckpt) != 0) {
    ok = false;
    why = "sweep-obs failed";
  }
  if (ok && run("attn-export" + ckpt) != 0) {
    ok = false;
    why = "attn-export failed";
  }

  if (ok) {
    for (const std::string f :
         {"/checkpoint.bin", "/loss.csv", "/run.json", "/metrics.csv",
          "/scenes.csv", "/sweep.csv", "/sweep.png", "/attn_weights.csv",
          "/attn_composite.png", "/scene_0_gt.png", "/scene_0_pred.png",
          "/scene_0_err.png"}) {
      if (!fs::exists(out + f)) {
        ok = false;
        why = "missing artifact " + f;
        break;
      }
    }
  }

  // Reruns with identical configs reproduce the CSVs byte for byte.
  if (ok) {
    const std::string metrics_a = slurp(out + "/metrics.csv");
    const std::string sweep_a = slurp(out + "/sweep.csv");
    const std::string loss_a = slurp(out + "/loss.csv");
    if (run("train") != 0 || run("eval" + ckpt) != 0 ||
        run("sweep-obs" + ckpt) != 0) {
      ok = false;
      why = "rerun failed";
    } else if (slurp(out + "/metrics.csv") != metrics_a ||
               slurp(out + "/sweep.csv") != sweep_a ||
               slurp(out + "/loss.csv") != loss_a) {
      ok = false;
      why = "rerun CSVs differ";
    }
  }

  // Attention rows are softmax distributions.
  if (ok) {
    std::ifstream in(out + "/attn_weights.csv");
    std::string line;
    std::getline(in, line);  // header
    std::map<std::string, double> row_sums;
    while (std::getline(in, line)) {
      const auto c1 = line.find(','), c2 = line.find(',', c1 + 1),
                 c3 = line.find(',', c2 + 1), c4 = line.find(',', c3 + 1);
      row_sums[line.substr(0, c3)] += std::atof(line.c_str() + c4 + 1);
    }
    if (row_sums.empty()) {
      ok = false;
      why = "no attention rows";
    }
    for (const auto& [key, sum] : row_sums) {
      if (std::abs(sum - 1.0) > 1e-6) {
        ok = false;
        why = "attention row " + key + " sums to " +
              std::to_string(sum);
        break;
      }
    }
  }

  report(10, ok,
         "CLI pipeline synth-gen/train/eval/sweep-obs/attn-export with "
         "reproducible CSVs" +
             (why.empty() ? std::string() : " - " + why));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "./tools/rflab";

  criterion_1_samplers();
  criterion_2_gradients();
  criterion_3_permutation();
  criterion_5_overfit();
  const DeskRun desk = criterion_6_learning();
  criterion_4_k_generalization(desk);
  criterion_7_metric_oracles();
  criterion_8_split();
  criterion_9_zero_shot();
  criterion_10_cli(cli);

  if (failures) {
    std::printf("%d criteria FAILED\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
