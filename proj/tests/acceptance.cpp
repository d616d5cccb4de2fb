// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "blendnet/complexity.hpp"
#include "blendnet/gradcheck.hpp"
#include "blendnet/synth.hpp"
#include "blendnet/training.hpp"

using namespace blendnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail.clear();
    pass = false;
    detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1 ----

Outcome gradient_fidelity() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (AttentionVariant v : {AttentionVariant::component, AttentionVariant::temporal})
    for (std::size_t d : {4, 8})
      for (std::size_t n : {4, 6})
        for (bool aggregate : {false, true}) {
          GnnmConfig c;
          c.d = d;
          c.n = n;
          c.attention_variant = v;
          c.aggregate_output = aggregate;
          const GradCheckReport r = check_gnnm_gradients(c, 0);
          worst = std::max(worst, r.max_relative_error);
          o.require(r.passed(1e-4), to_string(v) + " d=" + std::to_string(d) + " n=" + std::to_string(n) +
                                        " rel " + fmt("%.3e", r.max_relative_error) + " at " + r.worst);
        }
  const double t = seconds_since(t0);
  o.require(t < 30.0, "took " + fmt("%.1f s", t));
  if (o.pass) o.detail = "16 configurations, max relative error " + fmt("%.3e", worst) + ", " + fmt("%.2f s", t);
  return o;
}

// ---- 2 ----

std::uint64_t enumerate_scalars(const GnnmParameters<float>& p) {
  std::uint64_t total = 0;
  p.visit([&total](const std::string&, const Matrix<float>& m) { total += m.size(); });
  return total;
}

Outcome parameter_counts() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(0);
  std::size_t checked = 0;
  for (std::uint64_t d = 2; d <= 64; d += 2)
    for (std::uint64_t n = 2; n <= 32; n += 2)
      for (AttentionVariant v : {AttentionVariant::component, AttentionVariant::temporal}) {
        GnnmConfig c;
        c.d = d;
        c.n = n;
        c.attention_variant = v;
        const std::uint64_t formula = count_gnnm_params(c);
        const std::uint64_t counted = enumerate_scalars(GnnmParameters<float>::initialized(c, rng));
        o.require(formula == counted, to_string(v) + " d=" + std::to_string(d) + " n=" + std::to_string(n) + ": " +
                                          std::to_string(formula) + " vs " + std::to_string(counted));
        if (v == AttentionVariant::temporal) {
          o.require(formula == 7 * d * d + 6 * d + 3, "temporal closed form at d=" + std::to_string(d));
          o.require(space_lower_bound(formula).slots == 14 * d * d + 12 * d + 7, "space bound at d=" + std::to_string(d));
        }
        ++checked;
      }
  GnnmConfig big;
  big.d = 512;
  big.attention_variant = AttentionVariant::temporal;
  o.require(count_gnnm_params(big) == 1838083, "d=512 gives " + std::to_string(count_gnnm_params(big)));
  const double t = seconds_since(t0);
  o.require(t < 5.0, "took " + fmt("%.1f s", t));
  if (o.pass) o.detail = std::to_string(checked) + " configurations, d=512 temporal 1838083, " + fmt("%.2f s", t);
  return o;
}

// ---- 3 ----

Outcome sharing_semantics() {
  Outcome o;
  const auto t0 = Clock::now();
  for (Task task : {Task::open_ended, Task::count}) {
    HierarchyConfig cfg;
    cfg.d = 8;
    cfg.num_clips = 2;
    cfg.frames_per_clip = 4;
    cfg.task = task;
    cfg.sharing = Sharing::per_level;
    std::mt19937_64 rng(0);
    const SharingRegistry<double> reg = build_network<double>(cfg, rng);
    o.require(cfg.layers() == 4, "expected a 4-layer network");
    o.require(reg.sets.size() == 2, "per_level gives " + std::to_string(reg.sets.size()) + " sets");

    SynthSpec s;
    s.d = cfg.d;
    s.num_clips = cfg.num_clips;
    s.frames_per_clip = cfg.frames_per_clip;
    s.task = task;
    s.num_samples = 3;
    for (const VideoSample& sample : generate(s).samples) {
      Matrix<double> readout(cfg.d, 1);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (double& x : readout.data()) x = u(rng);
      const SharedGradientReport r = shared_gradient_check(reg, cfg, sample, readout);
      o.require(r.max_abs_diff < 1e-10, to_string(task) + " shared vs summed differ by " + fmt("%.3e", r.max_abs_diff));
      o.require(r.max_abs_gradient > 1e-6, "vanishing gradients make the comparison vacuous");
    }
  }
  const double t = seconds_since(t0);
  o.require(t < 60.0, "took " + fmt("%.1f s", t));
  if (o.pass) o.detail = "2 physical sets, shared gradient equals call-site sum < 1e-10, " + fmt("%.2f s", t);
  return o;
}

// ---- 4 ----

Outcome shape_contracts() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    GnnmConfig c;
    c.attention_variant = rng() % 2 ? AttentionVariant::component : AttentionVariant::temporal;
    c.aggregate_output = rng() % 2;
    c.activation = rng() % 2 ? Activation::elu : Activation::relu;
    c.d = dim(rng);
    c.n = dim(rng);
    if (c.attention_variant == AttentionVariant::component) c.n += c.n % 2;
    if (c.attention_variant == AttentionVariant::temporal) c.d += c.d % 2;
    const GnnmParameters<double> p = GnnmParameters<double>::initialized(c, rng);
    Matrix<double> x(c.d, c.n), ctx(c.d, 1);
    for (double& v : x.data()) v = normal(rng);
    for (double& v : ctx.data()) v = normal(rng);
    const GnnmResult<double> r = gnnm_evaluate(x, ctx, p, c);
    const std::string tag = "trial " + std::to_string(trial) + " d=" + std::to_string(c.d) + " n=" + std::to_string(c.n);
    if (c.aggregate_output) {
      o.require(r.output.rows() == c.d && r.output.cols() == 1, tag + ": aggregated output is not d x 1");
      double w = 0.0;
      for (double v : r.aggregation_weights.data()) w += v;
      o.require(std::abs(w - 1.0) < 1e-6, tag + ": aggregation weights sum to " + fmt("%.9f", w));
    } else {
      o.require(r.output.rows() == c.d && r.output.cols() == c.n, tag + ": output is not d x n");
    }
    o.require(r.attention_map.rows() == c.n && r.attention_map.cols() == c.n, tag + ": attention map is not n x n");
    for (std::size_t j = 0; j < r.attention_map.cols(); ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < r.attention_map.rows(); ++i) col += r.attention_map(i, j);
      o.require(std::abs(col - 1.0) < 1e-6, tag + ": column " + std::to_string(j) + " sums to " + fmt("%.9f", col));
    }
  }
  if (o.pass) o.detail = "100 random configurations";
  return o;
}

// ---- 5 ----

struct LearnRun {
  Metrics final_metric;
  std::size_t steps = 0;
  double seconds = 0.0;
};

LearnRun learn(Task task) {
  SynthSpec spec;
  spec.task = task;
  spec.d = 32;
  spec.num_clips = 2;
  spec.frames_per_clip = 4;
  spec.num_event_types = task == Task::multi_choice ? 5 : 4;
  spec.answer_vocab = spec.num_event_types;
  spec.num_candidates = 5;
  spec.noise_std = 0.05;
  spec.num_samples = 300;
  spec.seed = 0;
  const std::vector<VideoSample> all = generate(spec).samples;
  const std::vector<VideoSample> train(all.begin(), all.begin() + 200), val(all.begin() + 200, all.end());

  HierarchyConfig net;
  net.d = 32;
  net.num_clips = 2;
  net.frames_per_clip = 4;
  net.task = task;
  auto model = Model<float>::create(net, spec.answer_vocab, 0);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  cfg.epochs = 1000;
  cfg.max_steps = 500;
  Trainer<float> trainer(model, cfg);
  auto state = trainer.initial_state();
  const auto t0 = Clock::now();
  trainer.run(train, val, state);
  LearnRun r;
  r.final_metric = evaluate(model, val, false);
  r.steps = state.step;
  r.seconds = seconds_since(t0);
  return r;
}

Outcome learnability() {
  Outcome o;
  std::string summary;
  double total = 0.0;
  for (Task task : {Task::open_ended, Task::multi_choice, Task::count}) {
    const LearnRun r = learn(task);
    total += r.seconds;
    const double v = r.final_metric.value;
    const bool ok = task == Task::count ? v <= 0.5 : v >= (task == Task::open_ended ? 0.95 : 0.90);
    const std::string line = to_string(task) + " " + r.final_metric.name() + "=" + fmt("%.3f", v) + " after " +
                             std::to_string(r.steps) + " steps";
    o.require(ok && r.steps <= 500, line);
    summary += (summary.empty() ? "" : ", ") + line;
  }
  o.require(total < 600.0, "took " + fmt("%.0f s", total));
  if (o.pass) o.detail = summary + ", " + fmt("%.0f s", total);
  return o;
}

// ---- 6 ----

HierarchyConfig small_net(Task task) {
  HierarchyConfig net;
  net.d = 8;
  net.num_clips = 2;
  net.frames_per_clip = 4;
  net.task = task;
  return net;
}

std::vector<VideoSample> small_data(Task task, std::size_t n) {
  SynthSpec s;
  s.d = 8;
  s.task = task;
  s.num_samples = n;
  s.num_event_types = task == Task::multi_choice ? 3 : 4;
  s.num_candidates = 3;
  s.noise_std = 0.1;
  return generate(s).samples;
}

std::vector<Matrix<double>> snapshot(Model<double>& m) {
  std::vector<Matrix<double>> out;
  m.visit([&out](const std::string&, Matrix<double>& x) { out.push_back(x); });
  return out;
}

Outcome two_stage() {
  Outcome o;

  // Question invariance after warm-up, every task.
  for (Task task : {Task::open_ended, Task::count, Task::multi_choice}) {
    const auto data = small_data(task, 24);
    const std::vector<VideoSample> train(data.begin(), data.begin() + 16), val(data.begin() + 16, data.end());
    auto model = Model<float>::create(small_net(task), 4, 1);
    TrainConfig warm;
    warm.stage = Stage::warm_up;
    warm.learning_rate = 1e-2;
    warm.batch_size = 4;
    warm.epochs = 3;
    Trainer<float> trainer(model, warm);
    auto state = trainer.initial_state();
    trainer.run(train, val, state);
    std::mt19937_64 rng(11);
    std::normal_distribution<float> noise(0.0f, 5.0f);
    double max_delta = 0.0;
    for (const VideoSample& s : val) {
      VideoSample moved = s;
      for (float& v : moved.question.data()) v += noise(rng);
      const Matrix<double> a = predict(model, s, true), b = predict(model, moved, true);
      for (std::size_t i = 0; i < a.size(); ++i) max_delta = std::max(max_delta, std::abs(a[i] - b[i]));
    }
    o.require(max_delta == 0.0, to_string(task) + " warm-up output moved by " + fmt("%.3e", max_delta));
  }

  // Plain gradient descent: effective per-element step over gradient, per slot.
  {
    auto model = Model<double>::create(small_net(Task::open_ended), 4, 5);
    TrainConfig cfg = fine_tune_defaults(TrainConfig{});
    cfg.optimizer = Optimizer::sgd;
    cfg.clip_norm = 0.0;
    cfg.learning_rate = 1e-2;
    Trainer<double> trainer(model, cfg);
    const auto samples = small_data(Task::open_ended, 1);

    std::vector<Matrix<double>> grads;
    {
      Tape<double> tape;
      BoundNetwork<double> net = bind(tape, model.registry);
      DecoderVars<double> dec = bind(tape, model.decoder);
      auto emb = network_embeddings(tape, net, model.registry, model.network, samples[0]);
      tape.backward(decoder_loss(tape, dec, model.decoder_config, emb, samples[0], false));
      for (const auto& vars : net.sets)
        gradients(vars).visit([&](const std::string&, const Matrix<double>& g) { grads.push_back(g); });
    }
    const auto before = snapshot(model);
    auto state = trainer.initial_state();
    trainer.train_step({&samples[0]}, state);
    const auto after = snapshot(model);

    double slow_sum = 0.0, fast_sum = 0.0, slow_max_dev = 0.0, fast_max_dev = 0.0;
    std::size_t slow_n = 0, fast_n = 0, k = 0;
    for (std::size_t p = 0; p < model.registry.sets.size(); ++p) {
      const bool slow = model.registry.slots[p].role == Role::motion;
      model.registry.sets[p].visit([&](const std::string&, const Matrix<double>&) {
        for (std::size_t j = 0; j < grads[k].size(); ++j) {
          if (std::abs(grads[k][j]) < 1e-4) continue;
          const double eff = (before[k][j] - after[k][j]) / grads[k][j];
          (slow ? slow_sum : fast_sum) += eff;
          ++(slow ? slow_n : fast_n);
          double& dev = slow ? slow_max_dev : fast_max_dev;
          dev = std::max(dev, std::abs(eff / (slow ? 5e-4 : 1e-2) - 1.0));
        }
        ++k;
      });
    }
    o.require(slow_n > 0 && fast_n > 0, "no comparable gradient entries");
    const double measured = (fast_sum / fast_n) / (slow_sum / slow_n);
    o.require(std::abs(measured - 20.0) < 1e-6, "measured step ratio " + fmt("%.9f", measured));
    o.require(slow_max_dev < 1e-6 && fast_max_dev < 1e-6, "per-element step sizes are not uniform within a slot");
    const double configured = trainer.slot_lr("clip.question", 0) / trainer.slot_lr("clip.motion", 0);
    o.require(std::abs(configured - 20.0) < 1e-12, "configured ratio " + fmt("%.17g", configured));
    o.require(trainer.slot_lr("video.question", 0) / trainer.slot_lr("video.motion", 0) == configured,
              "video level ratio differs");
  }

  // Fine-tune schedule seen by the trainer.
  {
    const auto data = small_data(Task::open_ended, 6);
    const std::vector<VideoSample> train(data.begin(), data.begin() + 4), val(data.begin() + 4, data.end());
    auto model = Model<float>::create(small_net(Task::open_ended), 4, 0);
    TrainConfig cfg = fine_tune_defaults(TrainConfig{});
    cfg.batch_size = 4;
    cfg.epochs = 7;
    Trainer<float> trainer(model, cfg);
    std::vector<double> lrs;
    trainer.on_step = [&lrs](const StepRecord& r) { lrs.push_back(r.lr); };
    auto state = trainer.initial_state();
    trainer.run(train, val, state);
    const std::vector<double> want = {1e-4, 1e-4, 1e-4, 5e-5, 5e-5, 5e-5, 2.5e-5};
    o.require(lrs == want, "fine-tune lr per epoch does not halve at epochs 3 and 6");
  }
  if (o.pass) o.detail = "warm-up output delta 0 for all tasks, step ratio 20, fine-tune lr halves at 3 and 6";
  return o;
}

// ---- 7 ----

Outcome schedule() {
  Outcome o;
  const TrainConfig cfg;
  o.require(lr_at(0, cfg) == 1e-4, "epoch 0 gives " + fmt("%.9g", lr_at(0, cfg)));
  o.require(lr_at(5, cfg) == 5e-5, "epoch 5 gives " + fmt("%.9g", lr_at(5, cfg)));
  if (o.pass) o.detail = "1e-4 at epoch 0, 5e-5 at epoch 5";
  return o;
}

// ---- 8 ----

std::vector<std::string> logged_run(std::uint64_t seed) {
  const auto data = small_data(Task::count, 30);
  const std::vector<VideoSample> train(data.begin(), data.begin() + 24), val(data.begin() + 24, data.end());
  auto model = Model<float>::create(small_net(Task::count), 4, seed);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 5;
  cfg.epochs = 3;
  cfg.seed = seed;
  Trainer<float> trainer(model, cfg);
  std::vector<std::string> log;
  trainer.on_step = [&log](const StepRecord& r) { log.push_back(format_step(r)); };
  auto state = trainer.initial_state();
  trainer.run(train, val, state);
  return log;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Outcome determinism() {
  Outcome o;
  const auto a = logged_run(3), b = logged_run(3);
  o.require(!a.empty() && a == b, "training logs differ between identical runs");

  for (Task task : {Task::open_ended, Task::count, Task::multi_choice}) {
    auto model = Model<float>::create(small_net(task), 4, 7);
    std::stringstream buf;
    to_checkpoint<float>(model, nullptr).write(buf);
    const auto loaded = model_from_checkpoint<float>(Checkpoint::read(buf));
    for (const VideoSample& s : small_data(task, 5))
      o.require(predict(model, s, false) == predict(loaded, s, false),
                to_string(task) + " forward output changed after checkpoint round trip");
  }

  const fs::path dir = fs::temp_directory_path() / "blendnet_acceptance";
  fs::create_directories(dir);
  for (Task task : {Task::open_ended, Task::count, Task::multi_choice}) {
    SynthSpec s;
    s.task = task;
    s.num_event_types = 5;
    s.answer_vocab = 5;
    s.num_samples = 50;
    s.noise_std = 0.1;
    const Dataset data = generate(s);
    const fs::path first = dir / ("a_" + to_string(task)), second = dir / ("b_" + to_string(task));
    write_dataset(data, first);
    const Dataset back = read_dataset(first);
    write_dataset(back, second);
    o.require(back == data, to_string(task) + " dataset changed after round trip");
    o.require(slurp(blob_path(first)) == slurp(blob_path(second)) &&
                  slurp(manifest_path(first)) == slurp(manifest_path(second)),
              to_string(task) + " dataset files are not byte-identical after a rewrite");
  }
  fs::remove_all(dir);
  if (o.pass) o.detail = "identical logs (" + std::to_string(a.size()) + " steps), bit-exact checkpoint and dataset round trips";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"parameter-count exactness", parameter_counts},
      {"sharing semantics", sharing_semantics},
      {"shape contracts", shape_contracts},
      {"learnability", learnability},
      {"two-stage behavior", two_stage},
      {"schedule", schedule},
      {"determinism and persistence", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
