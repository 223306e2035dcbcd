#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "spoofdet/checkpoint.hpp"
#include "spoofdet/error.hpp"
#include "spoofdet/feature_io.hpp"
#include "spoofdet/mhfa.hpp"
#include "spoofdet/rng.hpp"
#include "spoofdet/synth.hpp"
#include "spoofdet/trainer.hpp"
#include "test_util.hpp"

using spoofdet::AdamState;
using spoofdet::MhfaConfig;
using spoofdet::MhfaParams;
using spoofdet::ParamRef;
using spoofdet::RngStream;
using spoofdet::TrainConfig;

namespace {

MhfaConfig tiny_model() {
  MhfaConfig cfg;
  cfg.L = 3;
  cfg.D = 10;
  cfg.H = 2;
  cfg.D_cmp = 4;
  cfg.E = 6;
  return cfg;
}

spoofdet::SynthConfig tiny_corpus() {
  spoofdet::SynthConfig cfg;
  cfg.L = 3;
  cfg.T_raw = 24;
  cfg.D = 10;
  cfg.n_train_per_class = 6;
  cfg.n_eval_per_class = 4;
  cfg.seen_generators = 1;
  cfg.unseen_generators = 1;
  cfg.artifact_band_lo = 1;
  cfg.artifact_band_hi = 3;
  cfg.seed = 4242;
  return cfg;
}

}  // namespace

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  TrainConfig bad = cfg;
  bad.warmup_epochs = bad.max_epochs;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.frontend_lr_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.frontend_lr_scale = 1.5;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.final_lr = bad.base_lr * 2;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.final_lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
  bad = cfg;
  bad.crop_frames = 0;
  CHECK_THROWS_AS(bad.validate(), spoofdet::ConfigError);
}

TEST_CASE("learning-rate schedule: warmup ramp, exact endpoints, cosine decay") {
  TrainConfig cfg;  // base 5e-4, final 1e-5
  const long total = 100, warmup = 20;

  // Linear ramp strictly increases and closes on base_lr.
  for (long s = 0; s + 1 < warmup; ++s)
    CHECK(spoofdet::lr_at_step(s, total, warmup, cfg) <
          spoofdet::lr_at_step(s + 1, total, warmup, cfg));
  CHECK(spoofdet::lr_at_step(warmup - 2, total, warmup, cfg) < cfg.base_lr);
  CHECK(spoofdet::lr_at_step(warmup - 1, total, warmup, cfg) ==
        doctest::Approx(cfg.base_lr).epsilon(1e-14));
  CHECK(spoofdet::lr_at_step(0, total, warmup, cfg) ==
        doctest::Approx(cfg.base_lr / warmup).epsilon(1e-14));

  // The cosine branch hits base_lr exactly at the boundary and final_lr
  // exactly at the last step.
  CHECK(spoofdet::lr_at_step(warmup, total, warmup, cfg) == cfg.base_lr);
  CHECK(spoofdet::lr_at_step(total, total, warmup, cfg) == cfg.final_lr);

  // Halfway through annealing the rate is the exact midpoint.
  CHECK(spoofdet::lr_at_step(60, total, warmup, cfg) ==
        doctest::Approx(0.5 * (cfg.base_lr + cfg.final_lr)).epsilon(1e-14));

  // Never increasing after warmup, always within [final, base].
  for (long s = warmup; s < total; ++s) {
    const double a = spoofdet::lr_at_step(s, total, warmup, cfg);
    const double b = spoofdet::lr_at_step(s + 1, total, warmup, cfg);
    CHECK(a >= b);
    CHECK(b >= cfg.final_lr);
    CHECK(a <= cfg.base_lr);
  }

  // Zero warmup starts directly on the cosine.
  CHECK(spoofdet::lr_at_step(0, total, 0, cfg) == cfg.base_lr);

  CHECK_THROWS_AS(spoofdet::lr_at_step(-1, total, warmup, cfg), spoofdet::ContractError);
  CHECK_THROWS_AS(spoofdet::lr_at_step(total + 1, total, warmup, cfg), spoofdet::ContractError);
  CHECK_THROWS_AS(spoofdet::lr_at_step(0, total, total, cfg), spoofdet::ContractError);
}

TEST_CASE("parameter groups split the registry by the frontend flag") {
  MhfaConfig cfg = tiny_model();
  cfg.adapter_enabled = true;
  RngStream rng(1);
  MhfaParams<float> params = spoofdet::init_params<float>(cfg, rng);
  auto refs = spoofdet::param_registry(params);
  const spoofdet::ParamGroups groups = spoofdet::build_param_groups(refs);
  CHECK(groups.backend.size() == 11);
  CHECK(groups.frontend.size() == 2);
  std::size_t frontend_elems = 0;
  for (std::size_t i : groups.frontend) frontend_elems += refs[i].tensor->numel();
  CHECK(frontend_elems == static_cast<std::size_t>(2 * cfg.L * cfg.D));
  for (std::size_t i : groups.backend) CHECK_FALSE(refs[i].frontend);
  for (std::size_t i : groups.frontend) CHECK(refs[i].frontend);
}

TEST_CASE("AdamW: zero gradients reduce to pure decoupled decay") {
  MhfaConfig cfg = tiny_model();
  RngStream rng(2);
  MhfaParams<double> params = spoofdet::init_params<double>(cfg, rng);
  const MhfaParams<double> before = params;
  auto refs = spoofdet::param_registry(params);

  TrainConfig tcfg;
  tcfg.weight_decay = 1e-4;
  const double lr = 1e-3;
  std::vector<spoofdet::Tensor64> grads;
  for (const auto& ref : refs) grads.push_back(spoofdet::Tensor64::zeros(ref.tensor->shape));
  AdamState<double> state = AdamState<double>::init(refs);
  std::vector<double> group_lr(refs.size(), lr);
  spoofdet::adamw_step(refs, grads, state, group_lr, tcfg);

  auto before_refs = spoofdet::param_registry(const_cast<MhfaParams<double>&>(before));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t e = 0; e < refs[i].tensor->data.size(); ++e) {
      const double p0 = before_refs[i].tensor->data[e];
      const double expect = p0 - lr * tcfg.weight_decay * p0;  // identical arithmetic
      CHECK(refs[i].tensor->data[e] == expect);
    }
  }
}

TEST_CASE("AdamW: the first unit-gradient step moves by about the learning rate") {
  MhfaConfig cfg = tiny_model();
  RngStream rng(3);
  MhfaParams<double> params = spoofdet::init_params<double>(cfg, rng);
  const MhfaParams<double> before = params;
  auto refs = spoofdet::param_registry(params);

  TrainConfig tcfg;
  tcfg.weight_decay = 0.0;
  const double lr = 2e-3;
  std::vector<spoofdet::Tensor64> grads;
  for (const auto& ref : refs) grads.push_back(spoofdet::Tensor64::full(ref.tensor->shape, 1.0));
  AdamState<double> state = AdamState<double>::init(refs);
  std::vector<double> group_lr(refs.size(), lr);
  spoofdet::adamw_step(refs, grads, state, group_lr, tcfg);

  auto before_refs = spoofdet::param_registry(const_cast<MhfaParams<double>&>(before));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t e = 0; e < refs[i].tensor->data.size(); ++e) {
      const double delta = before_refs[i].tensor->data[e] - refs[i].tensor->data[e];
      CHECK(delta == doctest::Approx(lr).epsilon(1e-6));
    }
  }
  CHECK(state.t == 1);
}

TEST_CASE("AdamW matches an independent Adam oracle without decay") {
  MhfaConfig small;
  small.L = 2;
  small.D = 3;
  small.H = 2;
  small.D_cmp = 2;
  small.E = 2;
  RngStream rng(4);
  MhfaParams<double> params = spoofdet::init_params<double>(small, rng);
  auto refs = spoofdet::param_registry(params);

  // Shadow copies for the oracle.
  std::vector<std::vector<double>> shadow, m_s, v_s;
  for (const auto& ref : refs) {
    shadow.push_back(ref.tensor->data);
    m_s.emplace_back(ref.tensor->data.size(), 0.0);
    v_s.emplace_back(ref.tensor->data.size(), 0.0);
  }

  TrainConfig tcfg;
  tcfg.weight_decay = 0.0;
  AdamState<double> state = AdamState<double>::init(refs);
  RngStream grad_rng(5);
  for (int step = 1; step <= 100; ++step) {
    std::vector<spoofdet::Tensor64> grads;
    for (const auto& ref : refs) {
      spoofdet::Tensor64 gt = spoofdet::Tensor64::zeros(ref.tensor->shape);
      for (double& v : gt.data) v = grad_rng.normal();
      grads.push_back(std::move(gt));
    }
    const double lr = 1e-3 * (1.0 + 0.5 * std::sin(step * 0.2));
    std::vector<double> group_lr(refs.size(), lr);
    spoofdet::adamw_step(refs, grads, state, group_lr, tcfg);

    const double bc1 = 1.0 - std::pow(tcfg.beta1, step);
    const double bc2 = 1.0 - std::pow(tcfg.beta2, step);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      for (std::size_t e = 0; e < shadow[i].size(); ++e) {
        const double g = grads[i].data[e];
        m_s[i][e] = tcfg.beta1 * m_s[i][e] + (1.0 - tcfg.beta1) * g;
        v_s[i][e] = tcfg.beta2 * v_s[i][e] + (1.0 - tcfg.beta2) * g * g;
        shadow[i][e] -=
            lr * (m_s[i][e] / bc1) / (std::sqrt(v_s[i][e] / bc2) + tcfg.adam_eps);
      }
    }
  }
  for (std::size_t i = 0; i < refs.size(); ++i)
    for (std::size_t e = 0; e < shadow[i].size(); ++e)
      CHECK(refs[i].tensor->data[e] == doctest::Approx(shadow[i][e]).epsilon(1e-12));
}

TEST_CASE("AdamW rejects non-finite gradients without touching any tensor") {
  MhfaConfig cfg = tiny_model();
  RngStream rng(6);
  MhfaParams<float> params = spoofdet::init_params<float>(cfg, rng);
  const MhfaParams<float> before = params;
  auto refs = spoofdet::param_registry(params);

  TrainConfig tcfg;
  std::vector<spoofdet::Tensor32> grads;
  for (const auto& ref : refs) grads.push_back(spoofdet::Tensor32::full(ref.tensor->shape, 0.5f));
  grads[4].data[1] = std::numeric_limits<float>::quiet_NaN();  // W_v
  AdamState<float> state = AdamState<float>::init(refs);
  std::vector<double> group_lr(refs.size(), 1e-3);

  try {
    spoofdet::adamw_step(refs, grads, state, group_lr, tcfg);
    FAIL("expected NumericError");
  } catch (const spoofdet::NumericError& e) {
    CHECK(std::string(e.what()).find("W_v") != std::string::npos);
  }
  auto before_refs = spoofdet::param_registry(const_cast<MhfaParams<float>&>(before));
  for (std::size_t i = 0; i < refs.size(); ++i)
    CHECK(refs[i].tensor->data == before_refs[i].tensor->data);
  for (const auto& m : state.m)
    for (float v : m.data) CHECK(v == 0.0f);
  CHECK(state.t == 0);

  // Misaligned lists are contract violations.
  std::vector<double> short_lr(refs.size() - 1, 1e-3);
  CHECK_THROWS_AS(spoofdet::adamw_step(refs, grads, state, short_lr, tcfg),
                  spoofdet::ContractError);
}

TEST_CASE("fit: deterministic end-to-end training with logs and checkpoints") {
  testutil::TempDir dir("fit");
  const spoofdet::SynthConfig synth_cfg = tiny_corpus();
  const spoofdet::SynthResult data =
      spoofdet::synthesize_dataset(synth_cfg, dir.file("data"));

  MhfaConfig mhfa = tiny_model();
  TrainConfig tcfg;
  tcfg.max_epochs = 2;
  tcfg.warmup_epochs = 1;
  tcfg.batch_size = 4;
  tcfg.crop_frames = 16;
  tcfg.seed = 11;

  const spoofdet::FitResult r1 =
      spoofdet::fit(data.manifest_path, mhfa, tcfg, dir.file("run_a"));
  const spoofdet::FitResult r2 =
      spoofdet::fit(data.manifest_path, mhfa, tcfg, dir.file("run_b"));

  // Bitwise-identical trajectories.
  auto refs1 = spoofdet::param_registry(const_cast<MhfaParams<float>&>(r1.params));
  auto refs2 = spoofdet::param_registry(const_cast<MhfaParams<float>&>(r2.params));
  for (std::size_t i = 0; i < refs1.size(); ++i)
    CHECK(refs1[i].tensor->data == refs2[i].tensor->data);

  // Steps: ceil(12 / 4) = 3 per epoch, 2 epochs.
  CHECK(r1.total_steps == 6);
  REQUIRE(r1.log.size() == 2);
  for (const spoofdet::EpochLog& l : r1.log) {
    CHECK(std::isfinite(l.mean_loss));
    CHECK(l.dev_eer >= 0.0);
    CHECK(l.dev_eer <= 1.0);
    CHECK(l.lr_frontend == doctest::Approx(0.05 * l.lr_backend).epsilon(1e-12));
  }

  // The JSONL log parses with the advertised fields.
  std::ifstream log(r1.log_path);
  REQUIRE(log.good());
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    const nlohmann::json doc = nlohmann::json::parse(line);
    CHECK(doc.contains("epoch"));
    CHECK(doc.contains("mean_loss"));
    CHECK(doc.contains("dev_eer"));
    CHECK(doc.contains("lr_backend"));
    CHECK(doc.contains("lr_frontend"));
    ++lines;
  }
  CHECK(lines == 2);

  // Checkpoints load and the final one reproduces the returned parameters.
  const spoofdet::Checkpoint final_ck = spoofdet::load_checkpoint(r1.final_checkpoint);
  auto refs_ck = spoofdet::param_registry(const_cast<MhfaParams<float>&>(final_ck.params));
  for (std::size_t i = 0; i < refs1.size(); ++i)
    CHECK(refs_ck[i].tensor->data == refs1[i].tensor->data);
  CHECK(final_ck.extra.at("epoch").get<int>() == tcfg.max_epochs);
  const spoofdet::Checkpoint best_ck = spoofdet::load_checkpoint(r1.best_checkpoint);
  CHECK(best_ck.extra.at("dev_eer").get<double>() == doctest::Approx(r1.best_dev_eer));

  // A different seed produces different parameters.
  TrainConfig other = tcfg;
  other.seed = 12;
  const spoofdet::FitResult r3 =
      spoofdet::fit(data.manifest_path, mhfa, other, dir.file("run_c"));
  auto refs3 = spoofdet::param_registry(const_cast<MhfaParams<float>&>(r3.params));
  CHECK(refs3[2].tensor->data != refs1[2].tensor->data);
}

TEST_CASE("fit refuses single-class splits") {
  testutil::TempDir dir("fit_bad");
  std::filesystem::create_directories(dir.path() / "features");
  spoofdet::FeatureStack s(2, 8, 4);
  RngStream rng(1);
  for (float& v : s.values) v = static_cast<float>(rng.normal());

  std::vector<spoofdet::ManifestEntry> entries;
  auto add = [&](const std::string& id, spoofdet::Label label, const std::string& gen,
                 const std::string& split) {
    spoofdet::write_feature_stack_file(s, dir.file("features/" + id + ".esdf"));
    entries.push_back({id, "features/" + id + ".esdf", label, gen, split});
  };
  // Train split holds only bonafide; dev is fine.
  add("t0", spoofdet::Label::bonafide, "-", "train");
  add("t1", spoofdet::Label::bonafide, "-", "train");
  add("d0", spoofdet::Label::bonafide, "-", "dev");
  add("d1", spoofdet::Label::spoof, "g0", "dev");
  const std::string manifest = dir.file("manifest.jsonl");
  spoofdet::write_manifest_file(entries, manifest);

  MhfaConfig mhfa = tiny_model();
  mhfa.L = 2;
  mhfa.D = 4;
  TrainConfig tcfg;
  tcfg.max_epochs = 1;
  tcfg.warmup_epochs = 0;
  tcfg.batch_size = 2;
  tcfg.crop_frames = 8;
  CHECK_THROWS_AS(spoofdet::fit(manifest, mhfa, tcfg, dir.file("run")),
                  spoofdet::ConfigError);
}
