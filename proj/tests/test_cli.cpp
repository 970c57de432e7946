#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fab/datasets.hpp"
#include "fab/linearize.hpp"
#include "fab/models.hpp"
#include "fab/types.hpp"

using namespace fab;

namespace {

namespace fs = std::filesystem;

const std::string kScratch = "cli_scratch";
const std::string kMoonsRef = "moons:n=120,noise=0.14,seed=71,test=40";

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
  static int call = 0;
  fs::create_directory(kScratch);
  const std::string capture =
      kScratch + "/out_" + std::to_string(call++) + ".txt";
  const std::string cmd =
      std::string(FAB_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream f(capture);
  std::stringstream buf;
  buf << f.rdbuf();
  r.output = buf.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::string>> parse_csv(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// A trained moons model shared by the command tests.
const std::string& moons_model() {
  static std::string path = [] {
    fs::create_directory(kScratch);
    const std::string p = kScratch + "/moons.fabmlp";
    const CliResult r = run_cli("train --dataset " + kMoonsRef +
                                " --hidden 16 --epochs 20 --seed 19 --out " +
                                p);
    REQUIRE(r.exit_code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("help is available for the tool and every subcommand") {
  const CliResult top = run_cli("--help");
  CHECK(top.exit_code == 0);
  for (const char* name :
       {"train", "attack", "curve", "compare", "gridsearch", "ablate",
        "selftest"})
    CHECK(top.output.find(name) != std::string::npos);
  for (const char* name : {"train", "attack", "curve", "compare",
                           "gridsearch", "ablate", "selftest"}) {
    const CliResult sub = run_cli(std::string(name) + " --help");
    CHECK(sub.exit_code == 0);
    CHECK(sub.output.find("--help") != std::string::npos);
  }
  const CliResult curve_help = run_cli("curve --help");
  for (const char* flag : {"--dataset", "--model", "--norm", "--eps",
                           "--iters", "--restarts", "--alpha-max", "--beta",
                           "--eta", "--seed", "--threads", "--out",
                           "--format", "--config"})
    CHECK(curve_help.output.find(flag) != std::string::npos);
}

TEST_CASE("train writes a loadable model and reports accuracies") {
  const std::string& model = moons_model();
  const Mlp m = load_model(model);
  CHECK(m.input_dim() == 2);
  CHECK(m.num_classes() == 2);

  const CliResult r = run_cli("train --dataset " + kMoonsRef +
                              " --hidden 16 --epochs 20 --seed 19 --out " +
                              kScratch + "/moons2.fabmlp");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("train_accuracy=") != std::string::npos);
  CHECK(r.output.find("test_accuracy=") != std::string::npos);
  CHECK(r.output.find("model_hash=" + model_hash(m)) != std::string::npos);
  CHECK(slurp(model) == slurp(kScratch + "/moons2.fabmlp"));
}

TEST_CASE("adversarial training flag changes the trained weights") {
  const std::string plain = kScratch + "/at_plain.fabmlp";
  const std::string hard = kScratch + "/at_hard.fabmlp";
  const std::string base = "train --dataset moons:n=60,noise=0.15,seed=4 "
                           "--hidden 8 --epochs 3 --seed 2 --out ";
  REQUIRE(run_cli(base + plain).exit_code == 0);
  REQUIRE(run_cli(base + hard + " --adv-eps 0.1 --adv-steps 3 --norm linf")
              .exit_code == 0);
  CHECK(slurp(plain) != slurp(hard));
}

TEST_CASE("curve on a linear model reproduces the closed-form distances") {
  fs::create_directory(kScratch);
  Mlp lin({2, 2});
  lin.weights[0].row(1) << 1.2, -0.8;
  lin.biases[0][1] = -0.1;
  const std::string model = kScratch + "/linear.fabmlp";
  save_model(lin, model);

  // Same points the CLI resolves from the ref.
  Dataset ds = synth_moons(120, 0.14, 71);
  split_holdout(ds, 40);
  std::vector<double> dists;
  int n = 0;
  for (Index i : ds.test_indices()) {
    ++n;
    const Vector x = ds.point(i);
    const int label = ds.labels[static_cast<std::size_t>(i)];
    if (predicted_class(lin, x) != label) continue;
    dists.push_back(
        hyperplane_distance(x, decision_hyperplane(lin, x, 1, 0), Norm::L2));
  }
  REQUIRE(n == 40);
  REQUIRE(dists.size() > 10);
  std::sort(dists.begin(), dists.end());

  // Thresholds sit between well separated distances so each survivor
  // count is unambiguous.
  std::vector<double> thresholds = {dists.front() / 2};
  for (double q : {0.25, 0.5, 0.75}) {
    std::size_t k = static_cast<std::size_t>(q * dists.size());
    while (k + 1 < dists.size() && dists[k + 1] - dists[k] < 1e-4) ++k;
    REQUIRE(k + 1 < dists.size());
    thresholds.push_back((dists[k] + dists[k + 1]) / 2);
  }
  thresholds.push_back(dists.back() * 1.125);
  std::vector<int> survivors;
  for (double eps : thresholds)
    survivors.push_back(static_cast<int>(
        dists.end() - std::upper_bound(dists.begin(), dists.end(), eps)));

  std::ostringstream eps_flags;
  eps_flags.precision(17);
  for (double eps : thresholds) eps_flags << " --eps " << eps;
  const std::string out = kScratch + "/linear_curve.csv";
  const CliResult r = run_cli("curve --dataset " + kMoonsRef + " --model " +
                              model + " --attack fab --norm l2 --iters 50" +
                              eps_flags.str() + " --out " + out);
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(out);
  REQUIRE(rows.size() == 1 + thresholds.size());
  CHECK(rows[0] == std::vector<std::string>{"epsilon", "robust_accuracy"});
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    CHECK(std::stod(rows[t + 1][0]) == thresholds[t]);
    CHECK(std::stod(rows[t + 1][1]) == 100.0 * survivors[t] / n);
  }
}

TEST_CASE("reports are byte-identical across reruns and thread counts") {
  const std::string args = "curve --dataset " + kMoonsRef + " --model " +
                           moons_model() +
                           " --attack fab --norm l2 --iters 30 --restarts 2 "
                           "--seed 11 --eps 0.1 --eps 0.2 --format json --out ";
  const std::string a = kScratch + "/det_a.json";
  const std::string b = kScratch + "/det_b.json";
  REQUIRE(run_cli(args + a).exit_code == 0);
  REQUIRE(run_cli(args + b + " --threads 4").exit_code == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("attack writes one ordered row per evaluation point") {
  const std::string out = kScratch + "/outcomes.csv";
  const CliResult r =
      run_cli("attack --dataset " + kMoonsRef + " --model " + moons_model() +
              " --attack deepfool --norm l2 --out " + out);
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(out);
  REQUIRE(rows.size() == 1 + 40);
  CHECK(rows[0][0] == "index");
  for (std::size_t k = 1; k < rows.size(); ++k)
    CHECK(std::stol(rows[k][0]) == 80 + static_cast<long>(k) - 1);
}

TEST_CASE("pgd curve sweeps one radius per threshold") {
  const std::string out = kScratch + "/pgd_curve.csv";
  const CliResult r = run_cli(
      "curve --dataset " + kMoonsRef + " --model " + moons_model() +
      " --attack pgd --norm linf --iters 30 --eps 0.05 --eps 0.15 --out " +
      out);
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(out);
  REQUIRE(rows.size() == 3);
  CHECK(std::stod(rows[1][1]) >= std::stod(rows[2][1]));
}

TEST_CASE("compare summarizes reports and rejects mismatched thresholds") {
  const std::string fab = kScratch + "/cmp_fab.json";
  const std::string df = kScratch + "/cmp_df.json";
  const std::string common = "curve --dataset " + kMoonsRef + " --model " +
                             moons_model() +
                             " --norm l2 --iters 30 --eps 0.1 --eps 0.3 "
                             "--format json --out ";
  REQUIRE(run_cli(common + fab + " --attack fab").exit_code == 0);
  REQUIRE(run_cli(common + df + " --attack deepfool").exit_code == 0);

  const CliResult r = run_cli("compare " + fab + " " + df);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("attack,avg_robust_accuracy,times_best") !=
        std::string::npos);
  CHECK(r.output.find("fab-l2") != std::string::npos);
  CHECK(r.output.find("deepfool-l2") != std::string::npos);

  const std::string other = kScratch + "/cmp_other.json";
  const CliResult mismatch =
      run_cli("curve --dataset " + kMoonsRef + " --model " + moons_model() +
              " --norm l2 --iters 30 --eps 0.2 --format json --attack fab "
              "--out " + other);
  REQUIRE(mismatch.exit_code == 0);
  CHECK(run_cli("compare " + fab + " " + other).exit_code == 2);
}

TEST_CASE("gridsearch emits the exact table shape and a best divisor") {
  const std::string out = kScratch + "/grid.csv";
  const CliResult r = run_cli(
      "gridsearch --dataset " + kMoonsRef + " --model " + moons_model() +
      " --norm l2 --eps 0.1 --eps 0.2 --iters 10 --divisors 1,4 --out " + out);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("rows=40") != std::string::npos);
  CHECK(r.output.find("best_divisor=") != std::string::npos);
  const auto rows = parse_csv(out);
  REQUIRE(rows.size() == 1 + 2 * 2 * 10);
  CHECK(rows[0] == std::vector<std::string>{"epsilon", "divisor", "iteration",
                                            "robust_accuracy"});
}

TEST_CASE("ablate emits all six attack variants") {
  const std::string out = kScratch + "/ablate.csv";
  const CliResult r = run_cli(
      "ablate --dataset " + kMoonsRef + " --model " + moons_model() +
      " --norm l2 --eps 0.1 --eps 0.3 --iters 15 --restarts 2 --out " + out);
  REQUIRE(r.exit_code == 0);
  const auto rows = parse_csv(out);
  REQUIRE(rows.size() == 1 + 6 * 2);
  const std::vector<std::string> want = {"deepfool",        "fab-nobackward-1",
                                         "fab-unbiased-1",  "fab-biased-1",
                                         "fab-unbiased-2",  "fab-biased-2"};
  for (std::size_t v = 0; v < want.size(); ++v) {
    CHECK(rows[1 + 2 * v][0] == want[v]);
    CHECK(rows[2 + 2 * v][0] == want[v]);
  }
}

TEST_CASE("config file fills flags without overriding them") {
  const std::string conf = kScratch + "/curve.conf";
  std::ofstream(conf) << "# fab curve settings\n"
                      << "norm=l2\n"
                      << "iters=30\n"
                      << "eps=0.1 0.2\n";
  const std::string via_conf = kScratch + "/conf_a.csv";
  const std::string via_flags = kScratch + "/conf_b.csv";
  const std::string base = "curve --dataset " + kMoonsRef + " --model " +
                           moons_model() + " --out ";
  REQUIRE(run_cli(base + via_conf + " --config " + conf).exit_code == 0);
  REQUIRE(run_cli(base + via_flags + " --norm l2 --iters 30 --eps 0.1 --eps 0.2")
              .exit_code == 0);
  CHECK(slurp(via_conf) == slurp(via_flags));

  // A flag given explicitly wins over the same key in the file.
  const std::string override_out = kScratch + "/conf_c.csv";
  REQUIRE(run_cli(base + override_out + " --config " + conf + " --eps 0.3")
              .exit_code == 0);
  const auto rows = parse_csv(override_out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "0.3");
}

TEST_CASE("selftest reports its three suites") {
  const CliResult r = run_cli("selftest");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS projection-invariants") != std::string::npos);
  CHECK(r.output.find("PASS scale-shift-invariance") != std::string::npos);
  CHECK(r.output.find("PASS pass-ledger") != std::string::npos);
}

TEST_CASE("errors map to documented exit codes") {
  const std::string& model = moons_model();
  const std::string ok_tail = " --eps 0.1 --out " + kScratch + "/err.csv";

  // config errors: unknown flags, bad values, bad refs
  CHECK(run_cli("curve --dataset " + kMoonsRef + " --model " + model +
                ok_tail + " --bogus").exit_code == 2);
  CHECK(run_cli("curve --dataset nope:n=5 --model " + model + ok_tail)
            .exit_code == 2);
  CHECK(run_cli("curve --dataset moons:n=zzz --model " + model + ok_tail)
            .exit_code == 2);
  CHECK(run_cli("curve --dataset " + kMoonsRef + " --model " + model +
                ok_tail + " --beta 1.5").exit_code == 2);
  CHECK(run_cli("curve --dataset " + kMoonsRef + " --model " + model +
                " --out x.csv").exit_code == 2);  // missing --eps
  CHECK(run_cli("attack --dataset " + kMoonsRef + " --model " + model +
                " --attack deepfool" + ok_tail).exit_code == 2);
  CHECK(run_cli("banana").exit_code == 2);

  // io errors: unreadable inputs, unwritable outputs
  CHECK(run_cli("curve --dataset " + kMoonsRef + " --model missing.fabmlp" +
                ok_tail).exit_code == 3);
  CHECK(run_cli("curve --dataset " + kMoonsRef + " --model " + model +
                " --eps 0.1 --out no_dir/x.csv").exit_code == 3);
  CHECK(run_cli("curve --dataset idx:images=a,labels=b --model " + model +
                ok_tail).exit_code == 3);

  // numeric errors: a degenerate model has no usable boundary
  const std::string zero = kScratch + "/zero.fabmlp";
  save_model(Mlp({2, 2}), zero);
  CHECK(run_cli("attack --dataset " + kMoonsRef + " --model " + zero +
                " --attack fab --out " + kScratch + "/z.csv").exit_code == 4);
}

TEST_CASE("scratch cleanup") {
  std::error_code ec;
  fs::remove_all(kScratch, ec);
  CHECK(!ec);
}
