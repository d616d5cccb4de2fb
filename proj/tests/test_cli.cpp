#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "blendnet/synth.hpp"

using namespace blendnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "blendnet_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + work_dir().string() + "' && " + env + " '" BLENDNET_CLI "' " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::string without_comments(const std::string& log) {
  std::istringstream in(log);
  std::string out;
  for (std::string line; std::getline(in, line);)
    if (line.empty() || line[0] != '#') out += line + '\n';
  return out;
}

// Small shared dataset for the training commands.
const std::string& data_args() {
  static const std::string args = [] {
    Result r = run("gen --d 16 --samples 24 --val-samples 8 --out data");
    REQUIRE(r.code == 0);
    return std::string("--train data/data_train --val data/data_val");
  }();
  return args;
}

}  // namespace

TEST_CASE("gen writes two files deterministically") {
  Result a = run("gen --task open_ended --d 32 --samples 200 --seed 1 --out gen_a");
  REQUIRE(a.code == 0);
  CHECK(contains(a.output, "wrote 200 samples"));
  CHECK(contains(a.output, "manifest: " + (work_dir() / "gen_a" / "data.manifest").string()));
  REQUIRE(run("gen --task open_ended --d 32 --samples 200 --seed 1 --out gen_b").code == 0);
  CHECK(slurp(work_dir() / "gen_a/data.blob") == slurp(work_dir() / "gen_b/data.blob"));
  CHECK(slurp(work_dir() / "gen_a/data.manifest") == slurp(work_dir() / "gen_b/data.manifest"));
  CHECK(read_dataset(work_dir() / "gen_a/data").samples.size() == 200);
}

TEST_CASE("usage errors exit with 2") {
  Result bad = run("gen --d 4 --out gen_bad");
  CHECK(bad.code == 2);
  CHECK(contains(bad.output, "d >= event types"));
  CHECK(run("gen --no-such-flag 1").code == 2);
  CHECK(run("").code == 2);
  CHECK(run("gen --set gen.sedd=1").code == 2);
  spit(work_dir() / "typo.ini", "[gen]\nsedd = 3\n");
  Result typo = run("gen -c typo.ini --out gen_typo");
  CHECK(typo.code == 2);
  CHECK(contains(typo.output, "sedd"));
  spit(work_dir() / "section.ini", "[genn]\nseed = 3\n");
  CHECK(run("gen -c section.ini --out gen_typo").code == 2);
  CHECK(run("train --train data/missing --out t --lr abc").code == 2);
}

TEST_CASE("flags override the file and the resolved config is persisted") {
  spit(work_dir() / "gen.ini", "# comment\n[gen]\nseed = 3\nsamples = 7\n");
  REQUIRE(run("gen -c gen.ini --seed 5 --out gen_cfg").code == 0);
  const std::string resolved = slurp(work_dir() / "gen_cfg/config.ini");
  CHECK(contains(resolved, "seed = 5\n"));
  CHECK(contains(resolved, "samples = 7\n"));
  // The resolved file reproduces the run.
  REQUIRE(run("gen -c gen_cfg/config.ini --out gen_cfg2").code == 0);
  CHECK(slurp(work_dir() / "gen_cfg/data.blob") == slurp(work_dir() / "gen_cfg2/data.blob"));
}

TEST_CASE("output root comes from the environment") {
  Result r = run("gen --samples 3", "BLENDNET_OUT=envroot");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(work_dir() / "envroot/gen/data.manifest"));
  CHECK(contains(r.output, "output directory: " + (work_dir() / "envroot/gen").string()));
}

TEST_CASE("help lists every key") {
  Result r = run("train --help");
  CHECK(r.code == 0);
  for (const char* key : {"sharing =", "lr =", "batch =", "decay =", "clip.motion =", "decoder =", "max_steps ="})
    CHECK(contains(r.output, key));
}

TEST_CASE("training writes checkpoints, an audited log and resumes identically") {
  const std::string common = data_args() + " --d 16 --batch 8 --lr 3e-3 --sharing per_level";
  // --d is not a train flag.
  CHECK(run("train " + common + " --epochs 4 --out run_a").code == 2);
  const std::string args = data_args() + " --batch 8 --lr 3e-3 --sharing per_level";
  REQUIRE(run("train " + args + " --epochs 4 --out run_a").code == 0);
  const std::string log = slurp(work_dir() / "run_a/train.log");
  CHECK(contains(log, "# audit physical_sets=2\n"));
  CHECK(contains(log, "step=1 epoch=0 lr=0.003 loss="));
  CHECK(contains(log, "step=12 epoch=3"));
  CHECK(fs::exists(work_dir() / "run_a/best.ckpt"));
  CHECK(fs::exists(work_dir() / "run_a/last.ckpt"));

  REQUIRE(run("train " + args + " --epochs 4 --out run_b").code == 0);
  CHECK(log == slurp(work_dir() / "run_b/train.log"));

  REQUIRE(run("train " + args + " --epochs 2 --out run_c").code == 0);
  Result resumed = run("train " + args + " --epochs 4 --resume run_c/last.ckpt --out run_c");
  REQUIRE(resumed.code == 0);
  CHECK(without_comments(slurp(work_dir() / "run_c/train.log")) == without_comments(log));

  Result eval = run("eval --checkpoint run_a/best.ckpt --data data/data_val --out eval_a");
  CHECK(eval.code == 0);
  CHECK(contains(eval.output, "accuracy="));
  CHECK(contains(eval.output, "samples=8"));
}

TEST_CASE("two-stage training") {
  Result r = run("train2 " + data_args() + " --batch 8 --warm-epochs 1 --fine-epochs 2 --out two");
  REQUIRE(r.code == 0);
  const std::string log = slurp(work_dir() / "two/train.log");
  CHECK(contains(log, "stage=warm_up step=1 epoch=0"));
  CHECK(contains(log, "stage=fine_tune step=1 epoch=0"));
  CHECK(fs::exists(work_dir() / "two/warm.ckpt"));
  CHECK(fs::exists(work_dir() / "two/best.ckpt"));
  // Fine-tune multipliers conflict with shared sets; rejected before any training.
  Result shared = run("train2 " + data_args() + " --sharing per_level --out two_shared");
  CHECK(shared.code == 2);
  CHECK_FALSE(contains(shared.output, "stage=warm_up"));
}

TEST_CASE("non-finite data aborts training with context") {
  data_args();
  Dataset d = read_dataset(work_dir() / "data/data_train");
  d.samples[5].clip_frames[1](0, 0) = std::nanf("");
  write_dataset(d, work_dir() / "data/nan_train");
  Result r = run("train --train data/nan_train --val data/data_val --batch 24 --out nan");
  CHECK(r.code == 1);
  CHECK(contains(r.output, "non-finite"));
  CHECK(contains(r.output, "step 1"));
}

TEST_CASE("gradcheck") {
  Result ok = run("gradcheck --out gc");
  CHECK(ok.code == 0);
  CHECK(contains(ok.output, "PASS variant=component d=8 n=6"));
  CHECK(contains(ok.output, "PASS variant=temporal d=8 n=6"));
  Result bad = run("gradcheck --corrupt attn_v --out gc_bad");
  CHECK(bad.code == 1);
  CHECK(contains(bad.output, "FAIL variant=component"));
  CHECK(contains(bad.output, "worst=attn_v"));
}

TEST_CASE("params audit") {
  Result r = run("params --out params");
  CHECK(r.code == 0);
  const std::string kv = slurp(work_dir() / "params/params.txt");
  CHECK(contains(kv, "module.clip.motion.total=1838083\n"));
  CHECK(contains(kv, "physical_sets=2\n"));
  CHECK(contains(kv, "physical_total=3676166\n"));
  CHECK(contains(kv, "mismatches=0\n"));
  Result tampered = run("params --tamper true --out params_bad");
  CHECK(tampered.code != 0);
  CHECK(contains(tampered.output, "audit failure"));
}
