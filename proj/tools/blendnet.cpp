#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "blendnet/complexity.hpp"
#include "blendnet/errors.hpp"
#include "blendnet/gradcheck.hpp"
#include "blendnet/synth.hpp"
#include "blendnet/training.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace blendnet;
using cli::RunConfig;

namespace {

constexpr const char* kOutEnv = "BLENDNET_OUT";

fs::path abs_path(const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)); }

struct Context {
  RunConfig config;
  fs::path out;
};

// --out wins, then $BLENDNET_OUT/<command>, then ./runs/<command>.
fs::path output_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return abs_path(flag);
  const char* root = std::getenv(kOutEnv);
  return abs_path(fs::path(root && *root ? root : "runs") / command);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void announce(const std::string& what, const fs::path& path) { std::cout << what << ": " << abs_path(path).string() << '\n'; }

// ---- gen ----

int cmd_gen(Context& ctx) {
  const RunConfig& c = ctx.config;
  SynthSpec spec;
  spec.task = parse_task(c.str("gen", "task"));
  spec.d = c.count("gen", "d");
  spec.num_clips = c.count("gen", "clips");
  spec.frames_per_clip = c.count("gen", "frames");
  spec.num_event_types = c.count("gen", "events");
  spec.answer_vocab = c.count("gen", "vocab");
  spec.num_candidates = c.count("gen", "candidates");
  spec.noise_std = c.number("gen", "noise");
  spec.seed = c.count("gen", "seed");
  const std::size_t train_n = c.count("gen", "samples"), val_n = c.count("gen", "val_samples");
  spec.num_samples = train_n + val_n;
  spec.validate();
  if (train_n == 0) throw UsageError("gen.samples must be >= 1");

  const Dataset all = generate(spec);
  const std::string name = c.str("gen", "name");
  auto write = [&](const Dataset& d, const std::string& base) {
    const fs::path p = ctx.out / base;
    write_dataset(d, p);
    std::cout << "wrote " << d.samples.size() << " samples\n";
    announce("manifest", manifest_path(p));
    announce("blob", blob_path(p));
  };
  if (val_n == 0) {
    write(all, name);
    return 0;
  }
  Dataset train{all.header, {all.samples.begin(), all.samples.begin() + static_cast<std::ptrdiff_t>(train_n)}};
  Dataset val{all.header, {all.samples.begin() + static_cast<std::ptrdiff_t>(train_n), all.samples.end()}};
  write(train, name + "_train");
  write(val, name + "_val");
  return 0;
}

// ---- train / train2 ----

Dataset load_data(const RunConfig& c, const std::string& key) {
  const fs::path base = c.str("data", key);
  return read_dataset(base);
}

void check_compatible(const DatasetHeader& a, const DatasetHeader& b, const std::string& what) {
  if (a.task != b.task || a.d != b.d || a.num_clips != b.num_clips || a.frames_per_clip != b.frames_per_clip ||
      a.num_candidates != b.num_candidates || a.answer_vocab != b.answer_vocab)
    throw UsageError(what + " does not match the training data layout");
}

void check_model_fits(const HierarchyConfig& net, const DatasetHeader& h) {
  if (net.task != h.task || net.d != h.d || net.num_clips != h.num_clips || net.frames_per_clip != h.frames_per_clip)
    throw UsageError("checkpoint network (task " + to_string(net.task) + ", d=" + std::to_string(net.d) +
                     ") does not match the dataset (task " + to_string(h.task) + ", d=" + std::to_string(h.d) + ")");
}

HierarchyConfig network_config(const RunConfig& c, const DatasetHeader& h) {
  HierarchyConfig net;
  net.d = h.d;
  net.num_clips = h.num_clips;
  net.frames_per_clip = h.frames_per_clip;
  net.task = h.task;
  net.sharing = parse_sharing(c.str("network", "sharing"));
  net.attention_variant = parse_attention_variant(c.str("network", "attention"));
  net.activation = parse_activation(c.str("network", "activation"));
  net.epsilon = c.number("network", "epsilon");
  net.validate();
  return net;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.learning_rate = c.number("train", "lr");
  t.epochs = c.count("train", "epochs");
  t.batch_size = c.count("train", "batch");
  t.lr_decay = parse_lr_decay(c.str("train", "decay"));
  t.optimizer = parse_optimizer(c.str("train", "optimizer"));
  t.clip_norm = c.number("train", "clip_norm");
  t.seed = c.count("train", "seed");
  if (const std::size_t cap = c.count("train", "max_steps"); cap > 0) t.max_steps = cap;
  for (const cli::KeySpec& k : cli::all_keys())
    if (k.section == "multipliers" && c.get("multipliers", k.key))
      t.module_lr_multipliers[k.key] = c.number("multipliers", k.key);
  t.validate();
  return t;
}

std::string audit_header(const Model<float>& model) {
  const CountReport report = audit_network(model.registry, model.decoder.scalar_count());
  std::ostringstream out;
  std::istringstream kv(report.key_values());
  for (std::string line; std::getline(kv, line);) out << "# audit " << line << '\n';
  return out.str();
}

std::string epoch_line(std::size_t epoch, const Metrics& m, bool improved) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu val_%s=%.17g best=%d", epoch, m.name().c_str(), m.value, improved ? 1 : 0);
  return buf;
}

class RunLog {
 public:
  RunLog(const fs::path& path, bool append)
      : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw Error("cannot write " + path.string());
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    out_.flush();
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ofstream out_;
};

int cmd_train(Context& ctx, const std::string& resume) {
  const RunConfig& c = ctx.config;
  TrainConfig cfg = train_config(c);
  const Dataset train = load_data(c, "train"), val = load_data(c, "val");
  check_compatible(train.header, val.header, "validation data");

  Model<float> model;
  TrainState<float> state;
  const bool resuming = !resume.empty();
  if (resuming) {
    const Checkpoint ck = Checkpoint::load(resume);
    model = model_from_checkpoint<float>(ck);
    check_model_fits(model.network, train.header);
    state = state_from_checkpoint(ck, model);
  } else {
    model = Model<float>::create(network_config(c, train.header), train.header.answer_vocab, cfg.seed);
  }

  Trainer<float> trainer(model, cfg);
  if (!resuming) state = trainer.initial_state();
  const fs::path best_path = ctx.out / "best.ckpt", last_path = ctx.out / "last.ckpt";

  RunLog log(ctx.out / "train.log", resuming);
  if (resuming) {
    log.line("# resumed from " + abs_path(resume).string() + " at epoch " + std::to_string(state.epoch) + " step " +
             std::to_string(state.step));
  } else {
    log.line("# train task=" + to_string(model.network.task) + " d=" + std::to_string(model.network.d) +
             " sharing=" + to_string(model.network.sharing) +
             " attention=" + to_string(model.network.attention_variant));
    const std::string audit = audit_header(model);
    log.line(audit.substr(0, audit.size() - 1));
  }
  trainer.on_step = [&](const StepRecord& r) { log.line(format_step(r)); };
  trainer.on_epoch = [&](const TrainState<float>& s, const Metrics& m, bool improved) {
    log.line(epoch_line(s.epoch - 1, m, improved));
    std::cout << epoch_line(s.epoch - 1, m, improved) << '\n';
    if (improved) to_checkpoint(model, &s).save(best_path);
    to_checkpoint(model, &s).save(last_path);
  };
  trainer.run(train.samples, val.samples, state);

  if (state.best_metric)
    std::cout << "best val_" << Metrics{model.network.task}.name() << "=" << *state.best_metric << " at epoch "
              << state.best_epoch << '\n';
  announce("log", log.path());
  if (fs::exists(best_path)) announce("best checkpoint", best_path);
  if (fs::exists(last_path)) announce("last checkpoint", last_path);
  return 0;
}

int cmd_train2(Context& ctx) {
  const RunConfig& c = ctx.config;
  const TrainConfig base = train_config(c);
  const Dataset train = load_data(c, "train"), val = load_data(c, "val");
  check_compatible(train.header, val.header, "validation data");
  TrainConfig warm = base, fine = base;
  warm.stage = Stage::warm_up;
  warm.epochs = c.count("two_stage", "warm_epochs");
  fine.stage = Stage::fine_tune;
  fine.epochs = c.count("two_stage", "fine_epochs");

  Model<float> model = Model<float>::create(network_config(c, train.header), train.header.answer_vocab, base.seed);
  const fs::path warm_path = ctx.out / "warm.ckpt", best_path = ctx.out / "best.ckpt",
                 last_path = ctx.out / "last.ckpt";
  RunLog log(ctx.out / "train.log", false);
  log.line("# train2 task=" + to_string(model.network.task) + " d=" + std::to_string(model.network.d) +
           " sharing=" + to_string(model.network.sharing) + " attention=" + to_string(model.network.attention_variant));
  const std::string audit = audit_header(model);
  log.line(audit.substr(0, audit.size() - 1));

  TwoStageResult result = run_two_stage<float>(model, train.samples, val.samples, warm, fine,
                                               [&](Trainer<float>& t, Stage stage) {
    const std::string tag = "stage=" + to_string(stage) + " ";
    log.line("# stage " + to_string(stage));
    t.on_step = [&log, tag](const StepRecord& r) { log.line(tag + format_step(r)); };
    t.on_epoch = [&, tag, stage](const TrainState<float>& s, const Metrics& m, bool improved) {
      const std::string line = tag + epoch_line(s.epoch - 1, m, improved);
      log.line(line);
      std::cout << line << '\n';
      if (stage == Stage::warm_up) {
        to_checkpoint(model, &s).save(warm_path);
        return;
      }
      if (improved) to_checkpoint(model, &s).save(best_path);
      to_checkpoint(model, &s).save(last_path);
    };
  });

  std::cout << "warm_up val_" << result.warm_up.name() << "=" << result.warm_up.value << '\n';
  std::cout << "fine_tune val_" << result.fine_tune.name() << "=" << result.fine_tune.value << '\n';
  announce("log", log.path());
  for (const fs::path& p : {warm_path, best_path, last_path})
    if (fs::exists(p)) announce(p.stem().string() + " checkpoint", p);
  return 0;
}

// ---- eval ----

int cmd_eval(Context& ctx) {
  const RunConfig& c = ctx.config;
  const Checkpoint ck = Checkpoint::load(c.str("eval", "checkpoint"));
  const Model<float> model = model_from_checkpoint<float>(ck);
  const Dataset data = read_dataset(c.str("eval", "data"));
  check_model_fits(model.network, data.header);
  const bool warm = c.flag("eval", "warm_up");
  const Metrics m = evaluate(model, data.samples, warm);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s=%.17g samples=%zu warm_up=%d\n", m.name().c_str(), m.value, m.samples,
                warm ? 1 : 0);
  std::cout << buf;
  const fs::path report = ctx.out / "eval.txt";
  write_text(report, buf);
  announce("report", report);
  return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(Context& ctx) {
  const RunConfig& c = ctx.config;
  const double tol = c.number("gradcheck", "tolerance");
  GradCheckOptions options;
  options.corrupt_leaf = c.get("gradcheck", "corrupt");
  std::ostringstream report;
  bool all_pass = true;
  for (AttentionVariant v : {AttentionVariant::component, AttentionVariant::temporal}) {
    GnnmConfig g;
    g.d = c.count("gradcheck", "d");
    g.n = c.count("gradcheck", "n");
    g.attention_variant = v;
    g.validate();
    const GradCheckReport r = check_gnnm_gradients(g, c.count("gradcheck", "seed"), options);
    const bool pass = r.passed(tol);
    all_pass = all_pass && pass;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s variant=%s d=%zu n=%zu max_rel_error=%.3e worst=%s\n", pass ? "PASS" : "FAIL",
                  to_string(v).c_str(), g.d, g.n, r.max_relative_error, r.worst.c_str());
    report << buf;
  }
  std::cout << report.str();
  const fs::path path = ctx.out / "gradcheck.txt";
  write_text(path, report.str());
  announce("report", path);
  return all_pass ? 0 : 1;
}

// ---- params ----

int cmd_params(Context& ctx) {
  const RunConfig& c = ctx.config;
  HierarchyConfig net;
  net.d = c.count("params", "d");
  net.num_clips = c.count("params", "clips");
  net.frames_per_clip = c.count("params", "frames");
  net.task = parse_task(c.str("params", "task"));
  net.attention_variant = parse_attention_variant(c.str("params", "attention"));
  net.sharing = parse_sharing(c.str("params", "sharing"));
  net.validate();
  std::mt19937_64 rng(0);
  SharingRegistry<float> reg = build_network<float>(net, rng);
  if (c.flag("params", "tamper")) reg.sets[0].hyb_k = Matrix<float>(net.d, net.d + 1);

  const CountReport report = audit_network(reg);
  std::cout << report.table();
  const fs::path path = ctx.out / "params.txt";
  write_text(path, report.key_values());
  announce("report", path);
  if (!report.consistent()) {
    std::cerr << "audit failure: " << report.mismatches.size() << " module(s) disagree with the closed-form count\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blendnet: hierarchical video question answering on synthetic data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  struct Sub {
    std::string name, description;
    CLI::App* app = nullptr;
    std::string config_file, out;
    std::vector<std::string> assignments;
    std::map<std::string, std::string> flag_values;  // "section.key" -> value
    std::string resume;
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "generate a synthetic dataset"},
      {"train", "regular training"},
      {"train2", "two-stage training (warm-up, then fine-tune)"},
      {"eval", "evaluate a checkpoint on a dataset"},
      {"gradcheck", "finite-difference gradient check of one module, both attention variants"},
      {"params", "parameter-count audit"},
  };
  std::vector<Sub> subs(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) std::tie(subs[i].name, subs[i].description) = commands[i];
  for (Sub& s : subs) {
    s.app = app.add_subcommand(s.name, s.description);
    s.app->add_option("-c,--config", s.config_file, "config file with [section] key = value lines");
    s.app->add_option("-o,--out", s.out, std::string("output directory (default $") + kOutEnv + "/" + s.name + ")");
    s.app->add_option("--set", s.assignments, "override section.key=value (repeatable)");
    for (const std::string& section : cli::sections_for(s.name))
      for (const cli::KeySpec& k : cli::all_keys()) {
        if (k.section != section || section == "multipliers") continue;
        std::string flag = k.key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        s.app->add_option_function<std::string>(
            "--" + flag, [&s, id = section + "." + k.key](const std::string& v) { s.flag_values[id] = v; },
            k.help + " [" + section + "]");
      }
    if (s.name == "train") s.app->add_option("--resume", s.resume, "continue from a checkpoint written by train");
    s.app->footer(cli::key_listing(s.name));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (Sub& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      Context ctx{RunConfig(s.name), output_dir(s.out, s.name)};
      if (!s.config_file.empty()) ctx.config.load_file(s.config_file);
      for (const std::string& a : s.assignments) ctx.config.apply_assignment(a);
      for (const auto& [id, v] : s.flag_values) ctx.config.apply_assignment(id + "=" + v);

      fs::create_directories(ctx.out);
      const fs::path resolved = ctx.out / "config.ini";
      write_text(resolved, ctx.config.render());
      announce("output directory", ctx.out);
      announce("resolved config", resolved);

      if (s.name == "gen") return cmd_gen(ctx);
      if (s.name == "train") return cmd_train(ctx, s.resume);
      if (s.name == "train2") return cmd_train2(ctx);
      if (s.name == "eval") return cmd_eval(ctx);
      if (s.name == "gradcheck") return cmd_gradcheck(ctx);
      if (s.name == "params") return cmd_params(ctx);
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 2;
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
