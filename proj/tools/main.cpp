// fabattack: train small classifiers, run minimum-distortion and fixed-budget
// attacks against them, and write deterministic evaluation reports.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fab/attack.hpp"
#include "fab/baselines.hpp"
#include "fab/datasets.hpp"
#include "fab/eval.hpp"
#include "fab/geometry.hpp"
#include "fab/linearize.hpp"
#include "fab/models.hpp"
#include "fab/parallel.hpp"
#include "fab/rng.hpp"
#include "fab/types.hpp"

namespace {

using nlohmann::json;
using namespace fab;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// ---------------------------------------------------------------------------
// Dataset references: "moons:n=200,noise=0.1,seed=3", "blobs:...", "idx:...".

std::map<std::string, std::string> parse_kv(const std::string& body,
                                            const std::string& ref) {
  std::map<std::string, std::string> kv;
  if (body.empty()) return kv;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    const std::size_t comma = std::min(body.find(',', pos), body.size());
    const std::string item = body.substr(pos, comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("dataset ref '" + ref + "': expected key=value, got '" +
                        item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
    pos = comma + 1;
  }
  return kv;
}

long long ref_int(const std::map<std::string, std::string>& kv,
                  const std::string& key, long long fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  long long v = 0;
  const auto [end, ec] = std::from_chars(
      it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || end != it->second.data() + it->second.size())
    throw ConfigError("dataset ref: bad integer for '" + key + "': '" +
                      it->second + "'");
  return v;
}

double ref_real(const std::map<std::string, std::string>& kv,
                const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("dataset ref: bad number for '" + key + "': '" +
                      it->second + "'");
  }
}

std::string ref_str(const std::map<std::string, std::string>& kv,
                    const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw ConfigError("dataset ref: missing required key '" + key + "'");
  return it->second;
}

void reject_unknown_keys(const std::map<std::string, std::string>& kv,
                         std::initializer_list<const char*> known,
                         const std::string& ref) {
  for (const auto& [key, value] : kv) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok)
      throw ConfigError("dataset ref '" + ref + "': unknown key '" + key +
                        "'");
  }
}

/// moons: n, noise, seed, test. blobs: n, d, classes, sep, seed, test.
/// idx: images, labels, limit, test. test marks the last `test` points as
/// the evaluation split (defaults: n/4 for synthetic data, 0 for idx).
Dataset resolve_dataset(const std::string& ref) {
  const std::size_t colon = ref.find(':');
  const std::string scheme = ref.substr(0, colon);
  const auto kv =
      parse_kv(colon == std::string::npos ? "" : ref.substr(colon + 1), ref);

  Dataset ds;
  long long holdout = -1;
  if (scheme == "moons") {
    reject_unknown_keys(kv, {"n", "noise", "seed", "test"}, ref);
    const long long n = ref_int(kv, "n", 200);
    ds = synth_moons(n, ref_real(kv, "noise", 0.1),
                     static_cast<std::uint64_t>(ref_int(kv, "seed", 0)));
    holdout = ref_int(kv, "test", n / 4);
  } else if (scheme == "blobs") {
    reject_unknown_keys(kv, {"n", "d", "classes", "sep", "seed", "test"}, ref);
    const long long n = ref_int(kv, "n", 200);
    ds = synth_blobs(n, ref_int(kv, "d", 2),
                     static_cast<int>(ref_int(kv, "classes", 3)),
                     ref_real(kv, "sep", 5.0),
                     static_cast<std::uint64_t>(ref_int(kv, "seed", 0)));
    holdout = ref_int(kv, "test", n / 4);
  } else if (scheme == "idx") {
    reject_unknown_keys(kv, {"images", "labels", "limit", "test"}, ref);
    ds = load_idx(ref_str(kv, "images"), ref_str(kv, "labels"),
                  ref_int(kv, "limit", 0));
    holdout = ref_int(kv, "test", 0);
  } else {
    throw ConfigError("dataset ref '" + ref +
                      "': unknown scheme (want moons:, blobs: or idx:)");
  }
  split_holdout(ds, static_cast<Index>(holdout));
  return ds;
}

/// Points a command evaluates: the test split when one exists, else all.
std::vector<Index> eval_indices(const Dataset& ds) {
  std::vector<Index> idx = ds.test_indices();
  if (idx.empty())
    for (Index i = 0; i < ds.size(); ++i) idx.push_back(i);
  return idx;
}

// ---------------------------------------------------------------------------
// Shared attack options and runners.

struct AttackOpts {
  std::string attack = "fab";
  std::string norm = "linf";
  std::vector<double> eps;
  int iters = 0;  // 0 = attack default (fab 100, deepfool 50, pgd 150)
  int restarts = 1;
  double alpha_max = 0.1;
  double beta = 0.9;
  double eta = 1.05;
  int targets = 0;  // fab-targeted: top-k rival classes, 0 = all
  std::uint64_t seed = 0;
  int threads = 1;
};

int resolved_iters(const AttackOpts& o) {
  if (o.iters > 0) return o.iters;
  if (o.attack == "deepfool") return 50;
  if (o.attack == "pgd") return 150;
  return 100;
}

AttackConfig fab_config(const AttackOpts& o) {
  AttackConfig c;
  c.p = parse_norm(o.norm);
  c.n_iter = resolved_iters(o);
  c.n_restarts = o.restarts;
  c.alpha_max = o.alpha_max;
  c.beta = o.beta;
  c.eta = o.eta;
  c.seed = o.seed;
  c.validate();
  return c;
}

DeepfoolConfig deepfool_config(const AttackOpts& o) {
  DeepfoolConfig c;
  c.p = parse_norm(o.norm);
  c.max_iter = resolved_iters(o);
  c.validate();
  return c;
}

PgdConfig pgd_config(const AttackOpts& o, double eps) {
  PgdConfig c;
  c.p = parse_norm(o.norm);
  c.eps = eps;
  c.steps = resolved_iters(o);
  c.restarts = o.restarts;
  c.seed = o.seed;
  c.validate();
  return c;
}

void check_attack_name(const std::string& attack, bool allow_pgd) {
  if (attack == "fab" || attack == "fab-targeted" || attack == "deepfool")
    return;
  if (attack == "pgd" && allow_pgd) return;
  throw ConfigError("unknown attack '" + attack + "'");
}

/// Runs one attack over the selected points; results land at their input
/// rank, so the output order never depends on thread scheduling.
std::vector<AttackOutcome> run_batch(const Classifier& model,
                                     const Dataset& ds,
                                     const std::vector<Index>& idx,
                                     const AttackOpts& o, double pgd_eps) {
  std::vector<AttackOutcome> out(idx.size());
  const BoxedRegion box = ds.box();
  parallel_for(idx.size(), o.threads, [&](std::size_t k) {
    const Index i = idx[k];
    const Vector x = ds.point(i);
    const int label = ds.labels[static_cast<std::size_t>(i)];
    if (o.attack == "fab") {
      out[k] = fab_attack(model, x, label, fab_config(o), box, i);
    } else if (o.attack == "fab-targeted") {
      const int want = o.targets > 0 ? o.targets : model.num_classes() - 1;
      const auto targets = rank_target_classes(model, x, label, want);
      out[k] =
          fab_attack_targeted(model, x, label, fab_config(o), targets, box, i);
    } else if (o.attack == "deepfool") {
      out[k] = deepfool_attack(model, x, label, deepfool_config(o), box);
    } else {
      out[k] = pgd_attack(model, x, label, pgd_config(o, pgd_eps), box, i);
    }
  });
  return out;
}

std::vector<PointEval> to_evals(const std::vector<AttackOutcome>& outcomes) {
  std::vector<PointEval> evals;
  evals.reserve(outcomes.size());
  for (const auto& oc : outcomes) evals.push_back(from_outcome(oc));
  return evals;
}

std::map<std::string, std::string> config_map(const AttackOpts& o) {
  std::map<std::string, std::string> m;
  m["attack"] = o.attack;
  m["norm"] = o.norm;
  m["iters"] = std::to_string(resolved_iters(o));
  if (o.attack == "fab" || o.attack == "fab-targeted") {
    m["restarts"] = std::to_string(o.restarts);
    m["alpha_max"] = format_double(o.alpha_max);
    m["beta"] = format_double(o.beta);
    m["eta"] = format_double(o.eta);
    const AttackConfig c = fab_config(o);
    m["eps_sampling"] = format_double(c.sampling_radius());
    m["final_search_steps"] = std::to_string(c.final_search_steps);
    if (o.attack == "fab-targeted")
      m["targets"] = std::to_string(o.targets);
  } else if (o.attack == "deepfool") {
    m["overshoot"] = format_double(DeepfoolConfig{}.overshoot);
  } else if (o.attack == "pgd") {
    m["restarts"] = std::to_string(o.restarts);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Output helpers.

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

void finish_out(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw IoError("short write to '" + path + "'");
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
  finish_out(f, path);
}

std::vector<double> sorted_thresholds(std::vector<double> eps) {
  if (eps.empty()) throw ConfigError("need at least one --eps threshold");
  for (double e : eps)
    if (!(e >= 0.0) || !std::isfinite(e))
      throw ConfigError("--eps thresholds must be finite and >= 0");
  std::sort(eps.begin(), eps.end());
  eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
  return eps;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::vector<long long> hidden = {32, 32};
  int epochs = 40;
  int batch = 32;
  double lr = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double adv_eps = 0.0;
  int adv_steps = 10;
  std::string norm = "linf";
};

void cmd_train(const TrainArgs& a) {
  const Dataset ds = resolve_dataset(a.dataset);
  TrainConfig cfg;
  cfg.hidden.assign(a.hidden.begin(), a.hidden.end());
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.seed = a.seed;
  const TrainResult tr =
      a.adv_eps > 0.0
          ? adversarial_train(ds, cfg, parse_norm(a.norm), a.adv_eps,
                              a.adv_steps)
          : train_sgd(ds, cfg);
  save_model(tr.model, a.out);
  std::cout << "train_accuracy=" << format_double(tr.train_accuracy) << '\n'
            << "test_accuracy=" << format_double(tr.test_accuracy) << '\n'
            << "model_hash=" << model_hash(tr.model) << '\n';
}

// ---------------------------------------------------------------------------
// attack

struct AttackArgs {
  std::string dataset;
  std::string model;
  AttackOpts opts;
  std::string out;
  std::string format = "csv";
};

void write_outcomes_csv(const std::vector<Index>& idx, const Dataset& ds,
                        const std::vector<AttackOutcome>& outcomes,
                        const std::string& path) {
  std::ofstream f = open_out(path);
  f << "index,label,clean_correct,success,norm,adversarial_class,"
       "forward_passes,backward_passes\n";
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& oc = outcomes[k];
    const PointEval pe = from_outcome(oc);
    f << idx[k] << ',' << ds.labels[static_cast<std::size_t>(idx[k])] << ','
      << (pe.clean_correct ? 1 : 0) << ',' << (oc.success ? 1 : 0) << ',';
    if (oc.norm) f << format_double(*oc.norm);
    f << ',';
    if (oc.adversarial_class) f << *oc.adversarial_class;
    f << ',' << oc.forward_passes << ',' << oc.backward_passes << '\n';
  }
  finish_out(f, path);
}

void cmd_attack(const AttackArgs& a) {
  check_attack_name(a.opts.attack, true);
  double pgd_eps = 0.0;
  if (a.opts.attack == "pgd") {
    if (a.opts.eps.size() != 1)
      throw ConfigError("pgd attack needs exactly one --eps radius");
    pgd_eps = a.opts.eps[0];
  } else if (!a.opts.eps.empty()) {
    throw ConfigError("--eps only applies to the pgd attack here; " +
                      a.opts.attack + " reports minimal norms instead");
  }

  const Dataset ds = resolve_dataset(a.dataset);
  const Mlp model = load_model(a.model);
  const std::vector<Index> idx = eval_indices(ds);
  const auto outcomes = run_batch(model, ds, idx, a.opts, pgd_eps);

  if (a.format == "csv") {
    write_outcomes_csv(idx, ds, outcomes, a.out);
  } else {
    json j;
    j["schema_version"] = 1;
    j["dataset"] = a.dataset;
    j["model"] = a.model;
    j["model_hash"] = model_hash(model);
    j["attack"] = a.opts.attack + "-" + a.opts.norm;
    j["seed"] = a.opts.seed;
    auto cfg = config_map(a.opts);
    if (a.opts.attack == "pgd") cfg["eps"] = format_double(pgd_eps);
    j["config"] = cfg;
    json points = json::array();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& oc = outcomes[k];
      json p;
      p["index"] = idx[k];
      p["label"] = ds.labels[static_cast<std::size_t>(idx[k])];
      p["clean_correct"] = from_outcome(oc).clean_correct;
      p["success"] = oc.success;
      p["norm"] = oc.norm ? json(*oc.norm) : json(nullptr);
      p["adversarial_class"] =
          oc.adversarial_class ? json(*oc.adversarial_class) : json(nullptr);
      p["forward_passes"] = oc.forward_passes;
      p["backward_passes"] = oc.backward_passes;
      points.push_back(std::move(p));
    }
    j["points"] = std::move(points);
    write_json_file(j, a.out);
  }

  const auto evals = to_evals(outcomes);
  long hits = 0;
  for (const auto& oc : outcomes) hits += oc.success ? 1 : 0;
  std::cout << "points=" << idx.size() << " hits=" << hits;
  if (const auto mean = mean_perturbation_norm(evals))
    std::cout << " mean_norm=" << format_double(*mean);
  std::cout << '\n';
}

// ---------------------------------------------------------------------------
// curve

struct CurveArgs {
  std::string dataset;
  std::string model;
  AttackOpts opts;
  std::string out;
  std::string format = "csv";
};

void cmd_curve(const CurveArgs& a) {
  check_attack_name(a.opts.attack, true);
  const std::vector<double> thresholds = sorted_thresholds(a.opts.eps);
  const Dataset ds = resolve_dataset(a.dataset);
  const Mlp model = load_model(a.model);
  const std::vector<Index> idx = eval_indices(ds);

  CurveReport report;
  report.dataset_id = a.dataset;
  report.model_id = a.model;
  report.model_hash = model_hash(model);
  report.attack_id = a.opts.attack + "-" + a.opts.norm;
  report.seed = a.opts.seed;
  report.config = config_map(a.opts);
  report.thresholds = thresholds;

  if (a.opts.attack == "pgd") {
    // Fixed-budget attack: one sweep per threshold radius.
    for (double eps : thresholds) {
      const auto outcomes = run_batch(model, ds, idx, a.opts, eps);
      report.robust_accuracy.push_back(robust_accuracy(to_evals(outcomes), eps));
    }
  } else {
    // Minimum-distortion attack: one run covers every threshold.
    const auto outcomes = run_batch(model, ds, idx, a.opts, 0.0);
    const auto evals = to_evals(outcomes);
    report.robust_accuracy = robustness_curve(evals, thresholds);
    report.mean_norm = mean_perturbation_norm(evals);
  }

  if (a.format == "csv")
    write_report_csv(report, a.out);
  else
    write_report_json(report, a.out);
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    std::cout << "eps=" << format_double(thresholds[i]) << " robust_accuracy="
              << format_double(report.robust_accuracy[i]) << '\n';
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::vector<std::string> reports;
  std::string out;
  std::string format = "csv";
};

void cmd_compare(const CompareArgs& a) {
  if (a.reports.empty()) throw ConfigError("compare needs report files");
  std::vector<CurveReport> reports;
  for (const auto& path : a.reports) reports.push_back(read_report_json(path));
  const auto& ths = reports.front().thresholds;
  for (const auto& r : reports)
    if (r.thresholds != ths)
      throw ConfigError("report '" + r.attack_id +
                        "' disagrees on thresholds with '" +
                        reports.front().attack_id + "'");

  Matrix acc(static_cast<Index>(reports.size()),
             static_cast<Index>(ths.size()));
  for (std::size_t r = 0; r < reports.size(); ++r)
    for (std::size_t c = 0; c < ths.size(); ++c)
      acc(static_cast<Index>(r), static_cast<Index>(c)) =
          reports[r].robust_accuracy[c];
  const auto stats = attack_stats(acc);

  std::string text;
  if (a.format == "csv") {
    text = "attack,avg_robust_accuracy,times_best,avg_gap_to_best,"
           "max_gap_to_best\n";
    for (std::size_t r = 0; r < reports.size(); ++r) {
      const auto& s = stats[r];
      text += reports[r].attack_id + ',' +
              format_double(s.avg_robust_accuracy) + ',' +
              std::to_string(s.times_best) + ',' +
              format_double(s.avg_gap_to_best) + ',' +
              format_double(s.max_gap_to_best) + '\n';
    }
  } else {
    json j;
    j["schema_version"] = 1;
    j["thresholds"] = ths;
    json rows = json::array();
    for (std::size_t r = 0; r < reports.size(); ++r) {
      json row;
      row["attack"] = reports[r].attack_id;
      row["avg_robust_accuracy"] = stats[r].avg_robust_accuracy;
      row["times_best"] = stats[r].times_best;
      row["avg_gap_to_best"] = stats[r].avg_gap_to_best;
      row["max_gap_to_best"] = stats[r].max_gap_to_best;
      row["robust_accuracy"] = reports[r].robust_accuracy;
      rows.push_back(std::move(row));
    }
    j["attacks"] = std::move(rows);
    text = j.dump(2) + '\n';
  }

  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f = open_out(a.out);
    f << text;
    finish_out(f, a.out);
  }
}

// ---------------------------------------------------------------------------
// gridsearch

struct GridArgs {
  std::string dataset;
  std::string model;
  std::string norm = "linf";
  std::vector<double> eps;
  int steps = 150;
  std::vector<int> divisors;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
  std::string format = "csv";
};

void cmd_gridsearch(const GridArgs& a) {
  const Dataset ds = resolve_dataset(a.dataset);
  const Mlp model = load_model(a.model);
  const std::vector<Index> idx = eval_indices(ds);

  Matrix points(static_cast<Index>(idx.size()), ds.dim());
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    points.row(static_cast<Index>(k)) = ds.inputs.row(idx[k]);
    labels.push_back(ds.labels[static_cast<std::size_t>(idx[k])]);
  }
  const std::vector<int> divisors =
      a.divisors.empty() ? default_divisors() : a.divisors;
  const auto rows =
      stepsize_grid(model, points, labels, ds.box(), parse_norm(a.norm), a.eps,
                    divisors, a.steps, a.seed, a.threads);

  // Best divisor: lowest robust accuracy at the final iteration, averaged
  // over the eps list; ties go to the earlier divisor.
  std::map<int, double> final_sum;
  for (const auto& row : rows)
    if (row.iteration == a.steps) final_sum[row.divisor] += row.robust_accuracy;
  int best = divisors.front();
  for (int dv : divisors)
    if (final_sum[dv] < final_sum[best]) best = dv;

  if (a.format == "csv") {
    std::ofstream f = open_out(a.out);
    f << "epsilon,divisor,iteration,robust_accuracy\n";
    for (const auto& row : rows)
      f << format_double(row.eps) << ',' << row.divisor << ',' << row.iteration
        << ',' << format_double(row.robust_accuracy) << '\n';
    finish_out(f, a.out);
  } else {
    json j;
    j["schema_version"] = 1;
    j["dataset"] = a.dataset;
    j["model"] = a.model;
    j["model_hash"] = model_hash(model);
    j["seed"] = a.seed;
    j["config"] = {{"norm", a.norm}, {"steps", std::to_string(a.steps)}};
    j["best_divisor"] = best;
    json table = json::array();
    for (const auto& row : rows)
      table.push_back({{"epsilon", row.eps},
                       {"divisor", row.divisor},
                       {"iteration", row.iteration},
                       {"robust_accuracy", row.robust_accuracy}});
    j["rows"] = std::move(table);
    write_json_file(j, a.out);
  }
  std::cout << "rows=" << rows.size() << " best_divisor=" << best << '\n';
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  std::string dataset;
  std::string model;
  std::string norm = "linf";
  std::vector<double> eps;
  int iters = 100;
  int restarts = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
  std::string format = "csv";
};

void cmd_ablate(const AblateArgs& a) {
  const std::vector<double> thresholds = sorted_thresholds(a.eps);
  const Dataset ds = resolve_dataset(a.dataset);
  const Mlp model = load_model(a.model);
  const std::vector<Index> idx = eval_indices(ds);

  AttackOpts base;
  base.norm = a.norm;
  base.iters = a.iters;
  base.seed = a.seed;
  base.threads = a.threads;

  const std::string rs = std::to_string(a.restarts);
  struct FabSpec {
    std::string name;
    int restarts;
    Ablation ablation;
  };
  std::vector<FabSpec> fabs = {
      {"fab-nobackward-1", 1, {true, false, false}},
      {"fab-unbiased-1", 1, {false, true, false}},
      {"fab-biased-1", 1, {false, false, false}},
      {"fab-unbiased-" + rs, a.restarts, {false, true, false}},
      {"fab-biased-" + rs, a.restarts, {false, false, false}},
  };

  std::vector<std::string> names;
  std::vector<std::vector<double>> curves;

  {
    AttackOpts o = base;
    o.attack = "deepfool";
    const auto evals = to_evals(run_batch(model, ds, idx, o, 0.0));
    names.push_back("deepfool");
    curves.push_back(robustness_curve(evals, thresholds));
  }
  for (const auto& spec : fabs) {
    AttackOpts o = base;
    o.attack = "fab";
    o.restarts = spec.restarts;
    AttackConfig cfg = fab_config(o);
    cfg.ablation = spec.ablation;
    std::vector<AttackOutcome> outcomes(idx.size());
    const BoxedRegion box = ds.box();
    parallel_for(idx.size(), o.threads, [&](std::size_t k) {
      const Index i = idx[k];
      outcomes[k] = fab_attack(model, ds.point(i),
                               ds.labels[static_cast<std::size_t>(i)], cfg,
                               box, i);
    });
    names.push_back(spec.name);
    curves.push_back(robustness_curve(to_evals(outcomes), thresholds));
  }

  std::string text;
  if (a.format == "csv") {
    text = "attack,epsilon,robust_accuracy\n";
    for (std::size_t v = 0; v < names.size(); ++v)
      for (std::size_t t = 0; t < thresholds.size(); ++t)
        text += names[v] + ',' + format_double(thresholds[t]) + ',' +
                format_double(curves[v][t]) + '\n';
  } else {
    json j;
    j["schema_version"] = 1;
    j["dataset"] = a.dataset;
    j["model"] = a.model;
    j["model_hash"] = model_hash(model);
    j["seed"] = a.seed;
    j["config"] = {{"norm", a.norm},
                   {"iters", std::to_string(a.iters)},
                   {"restarts", rs}};
    j["thresholds"] = thresholds;
    json vs = json::array();
    for (std::size_t v = 0; v < names.size(); ++v)
      vs.push_back({{"name", names[v]}, {"robust_accuracy", curves[v]}});
    j["variants"] = std::move(vs);
    text = j.dump(2) + '\n';
  }
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f = open_out(a.out);
    f << text;
    finish_out(f, a.out);
    for (std::size_t v = 0; v < names.size(); ++v)
      std::cout << names[v] << " final_robust_accuracy="
                << format_double(curves[v].back()) << '\n';
  }
}

// ---------------------------------------------------------------------------
// selftest

struct SelftestArgs {
  std::uint64_t seed = 7;
};

struct SuiteResult {
  std::string name;
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

SuiteResult selftest_projections(std::uint64_t seed) {
  SuiteResult res{"projection-invariants"};
  Rng rng(mix64(seed ^ 0x9e11ULL));
  for (int trial = 0; trial < 450 && res.pass; ++trial) {
    const Index d = 2 + static_cast<Index>(rng.uniform_int(7));
    BoxedRegion box;
    box.lower.resize(d);
    box.upper.resize(d);
    Vector x(d), w(d);
    for (Index i = 0; i < d; ++i) {
      box.lower[i] = -2.0 + 2.0 * rng.uniform();
      box.upper[i] = box.lower[i] + 0.5 + 1.5 * rng.uniform();
      x[i] = rng.uniform(box.lower[i], box.upper[i]);
      w[i] = rng.uniform() < 0.15 ? 0.0 : rng.gaussian();
    }
    if (w.isZero(0.0)) w[0] = 1.0;

    // Range of <w,z> over the box decides feasibility in advance.
    double lo = 0.0, hi = 0.0;
    for (Index i = 0; i < d; ++i) {
      lo += w[i] * (w[i] > 0 ? box.lower[i] : box.upper[i]);
      hi += w[i] * (w[i] > 0 ? box.upper[i] : box.lower[i]);
    }
    const bool want_feasible = trial % 2 == 0;
    Hyperplane plane;
    plane.normal = w;
    plane.offset = want_feasible
                       ? -(lo + rng.uniform() * (hi - lo))
                       : -(hi + (0.5 + rng.uniform()) * (hi - lo + 1.0));

    double norms[3] = {0, 0, 0};
    int slot = 0;
    for (Norm p : {Norm::L1, Norm::L2, Norm::LInf}) {
      const ProjectionResult r = proj_p(x, plane, box, p);
      if (r.feasible != want_feasible) {
        res.fail("feasibility flag mismatch");
        break;
      }
      if (!box.contains(r.point, 1e-12)) {
        res.fail("projection left the box");
        break;
      }
      for (Index i = 0; i < d; ++i)
        if (w[i] == 0.0 && r.point[i] != x[i])
          res.fail("moved a zero-weight coordinate");
      if (want_feasible) {
        const double tol =
            1e-6 * (1.0 + std::abs(plane.offset) + plane.normal.norm());
        if (std::abs(plane.value_at(r.point)) > tol)
          res.fail("projection missed the plane");
      }
      norms[slot++] = lp_norm(r.point - x, p);
    }
    if (!res.pass) break;
    if (want_feasible) {
      // min-l1 >= min-l2 >= min-linf because the norms are ordered pointwise.
      const double tol = 1e-9 * (1.0 + norms[0]);
      if (norms[0] + tol < norms[1] || norms[1] + tol < norms[2])
        res.fail("optimal values out of order across norms");
      // KKT certificate for l2: z = clip(x - lambda w) for a single lambda.
      const ProjectionResult r2 = project_l2(x, plane, box);
      double lambda = 0.0;
      double best = -1.0;
      for (Index i = 0; i < d; ++i) {
        const double margin = 1e-9 * (1.0 + box.upper[i] - box.lower[i]);
        if (w[i] != 0.0 && r2.point[i] > box.lower[i] + margin &&
            r2.point[i] < box.upper[i] - margin && std::abs(w[i]) > best) {
          best = std::abs(w[i]);
          lambda = (x[i] - r2.point[i]) / w[i];
        }
      }
      if (best > 0.0) {
        for (Index i = 0; i < d; ++i) {
          const double pull = x[i] - lambda * w[i];
          const double tol_i =
              1e-6 * (1.0 + std::abs(x[i]) + std::abs(lambda * w[i]));
          if (r2.point[i] <= box.lower[i]) {
            if (pull > box.lower[i] + tol_i) res.fail("l2 KKT: lower bound");
          } else if (r2.point[i] >= box.upper[i]) {
            if (pull < box.upper[i] - tol_i) res.fail("l2 KKT: upper bound");
          } else if (std::abs(r2.point[i] - pull) > tol_i) {
            res.fail("l2 KKT: interior coordinate off the line");
          }
        }
      }
    } else {
      // The fallback corner gets closer to the plane than any sampled corner.
      const ProjectionResult r = project_l2(x, plane, box);
      for (int s = 0; s < 20; ++s) {
        Vector corner(d);
        for (Index i = 0; i < d; ++i)
          corner[i] = rng.uniform() < 0.5 ? box.lower[i] : box.upper[i];
        if (std::abs(plane.value_at(r.point)) >
            std::abs(plane.value_at(corner)) + 1e-9)
          res.fail("corner fallback is not the closest corner");
      }
    }
  }
  return res;
}

SuiteResult selftest_invariance(std::uint64_t seed) {
  SuiteResult res{"scale-shift-invariance"};
  Dataset ds = synth_moons(160, 0.12, seed);
  split_holdout(ds, 40);
  TrainConfig tc;
  tc.hidden = {16};
  tc.epochs = 20;
  tc.seed = seed;
  const Mlp m = train_sgd(ds, tc).model;
  const ScaledShifted m10 = scale_model(m, 10.0);
  const ScaledShifted m1000 = scale_model(m, 1000.0);
  const ScaledShifted mp5 = shift_model(m, 5.0);
  const ScaledShifted mm5 = shift_model(m, -5.0);

  AttackConfig cfg;
  cfg.p = Norm::L2;
  cfg.n_iter = 30;
  int compared = 0;
  const auto idx = ds.test_indices();
  for (std::size_t k = 0; k < idx.size() && k < 20 && res.pass; ++k) {
    const Index i = idx[k];
    const Vector x = ds.point(i);
    const int label = ds.labels[static_cast<std::size_t>(i)];
    const auto basev = fab_attack(m, x, label, cfg, ds.box(), i);
    if (!basev.success || *basev.norm == 0.0) continue;
    ++compared;
    const ScaledShifted* transformed[] = {&m10, &m1000, &mp5, &mm5};
    for (const ScaledShifted* v : transformed) {
      const auto other = fab_attack(*v, x, label, cfg, ds.box(), i);
      if (!other.success) {
        res.fail("transformed model attack failed");
        break;
      }
      if (std::abs(*other.norm - *basev.norm) > 1e-5 * (1.0 + *basev.norm)) {
        res.fail("perturbation norm changed under scale/shift");
        break;
      }
      if (*other.adversarial_class != *basev.adversarial_class) {
        res.fail("adversarial class changed under scale/shift");
        break;
      }
    }
  }
  if (compared < 10) res.fail("too few comparable points");
  return res;
}

SuiteResult selftest_ledger(std::uint64_t seed) {
  SuiteResult res{"pass-ledger"};
  Dataset ds = synth_moons(120, 0.15, seed ^ 1);
  split_holdout(ds, 30);
  TrainConfig tc;
  tc.hidden = {12};
  tc.epochs = 12;
  tc.seed = seed;
  const Mlp m = train_sgd(ds, tc).model;
  const auto idx = ds.test_indices();

  AttackConfig fab_cfg;
  fab_cfg.p = Norm::L2;
  fab_cfg.n_iter = 7;
  fab_cfg.n_restarts = 2;
  DeepfoolConfig df_cfg;
  df_cfg.max_iter = 20;
  PgdConfig pgd_cfg;
  pgd_cfg.eps = 0.2;
  pgd_cfg.steps = 9;
  pgd_cfg.restarts = 2;

  for (std::size_t k = 0; k < idx.size() && res.pass; ++k) {
    const Index i = idx[k];
    const Vector x = ds.point(i);
    const int label = ds.labels[static_cast<std::size_t>(i)];
    const bool clean_wrong = predicted_class(m, x) != label;

    const auto fo = fab_attack(m, x, label, fab_cfg, ds.box(), i);
    if (clean_wrong) {
      if (fo.forward_passes != 1 || fo.backward_passes != 0)
        res.fail("fab clean-mistake ledger");
    } else {
      const long want_f = 2L * 7 * 2 + (fo.success ? 3 : 0);
      if (fo.forward_passes != want_f || fo.backward_passes != 7L * 2)
        res.fail("fab ledger");
    }

    const auto dfo = deepfool_attack(m, x, label, df_cfg, ds.box());
    if (dfo.forward_passes != dfo.backward_passes + 1)
      res.fail("deepfool ledger");

    const auto po = pgd_attack(m, x, label, pgd_cfg, ds.box(), i);
    if (clean_wrong) {
      if (po.forward_passes != 1 || po.backward_passes != 0)
        res.fail("pgd clean-mistake ledger");
    } else if (po.success) {
      const long r = po.forward_passes - po.backward_passes - 1;
      if (r < 0 || r >= pgd_cfg.restarts ||
          po.backward_passes < r * pgd_cfg.steps ||
          po.backward_passes > (r + 1) * pgd_cfg.steps)
        res.fail("pgd hit ledger");
    } else {
      if (po.forward_passes != 2L * (pgd_cfg.steps + 1) ||
          po.backward_passes != 2L * pgd_cfg.steps)
        res.fail("pgd miss ledger");
    }
  }
  return res;
}

int cmd_selftest(const SelftestArgs& a) {
  const SuiteResult suites[] = {selftest_projections(a.seed),
                                selftest_invariance(a.seed),
                                selftest_ledger(a.seed)};
  bool all = true;
  for (const auto& s : suites) {
    std::cout << (s.pass ? "PASS " : "FAIL ") << s.name;
    if (!s.pass) std::cout << ": " << s.detail;
    std::cout << '\n';
    all = all && s.pass;
  }
  return all ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
// wiring

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Expands `--config FILE` into extra command-line tokens. The file holds
/// flat `key=value` lines (# comments) with the same keys as the long flags;
/// a key is dropped when its flag was given explicitly, so precedence is
/// flags, then config file, then built-in defaults. Multi-value keys list
/// their values separated by spaces or commas.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::vector<std::string> given;
  for (const auto& a : args)
    if (a.size() > 2 && a.rfind("--", 0) == 0)
      given.push_back(a.substr(0, std::min(a.find('='), a.size())));

  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config") throw ConfigError(where + ": config cannot nest");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    const std::string flag = "--" + key;
    if (std::find(given.begin(), given.end(), flag) != given.end()) continue;
    std::size_t pos = 0;
    while (pos < value.size()) {
      const std::size_t end = value.find_first_of(" ,\t", pos);
      const std::string token = value.substr(pos, end - pos);
      if (!token.empty()) {
        args.push_back(flag);
        args.push_back(token);
      }
      if (end == std::string::npos) break;
      pos = end + 1;
    }
  }
  return args;
}

void add_common_attack_flags(CLI::App* sub, AttackOpts& o,
                             bool with_attack_choice) {
  if (with_attack_choice)
    sub->add_option("--attack", o.attack,
                    "fab | fab-targeted | deepfool | pgd")
        ->capture_default_str();
  sub->add_option("--norm", o.norm, "Perturbation norm")
      ->check(CLI::IsMember({"l1", "l2", "linf"}))
      ->capture_default_str();
  sub->add_option("--iters", o.iters,
                  "Iterations (0 = attack default: fab 100, deepfool 50, "
                  "pgd 150)");
  sub->add_option("--restarts", o.restarts, "Random restarts")
      ->capture_default_str();
  sub->add_option("--alpha-max", o.alpha_max, "Cap on the bias weight alpha")
      ->capture_default_str();
  sub->add_option("--beta", o.beta, "Backward-step contraction")
      ->capture_default_str();
  sub->add_option("--eta", o.eta, "Projection overshoot")
      ->capture_default_str();
  sub->add_option("--targets", o.targets,
                  "fab-targeted: number of rival classes (0 = all)");
  sub->add_option("--seed", o.seed, "RNG seed")->capture_default_str();
  sub->add_option("--threads", o.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-distortion adversarial attacks on small classifiers"};
  app.require_subcommand(1);
  std::string config_path;  // consumed by expand_config before CLI11 runs

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model file");
  train->add_option("--config", config_path,
                    "Flat key=value config file (flags override it)");
  train->add_option("--dataset", train_args.dataset, "Dataset ref")
      ->required();
  train->add_option("--out", train_args.out, "Output model path")->required();
  train->add_option("--hidden", train_args.hidden, "Hidden layer widths")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--epochs", train_args.epochs, "Training epochs")
      ->capture_default_str();
  train->add_option("--batch", train_args.batch, "Minibatch size")
      ->capture_default_str();
  train->add_option("--lr", train_args.lr, "Learning rate")
      ->capture_default_str();
  train->add_option("--momentum", train_args.momentum, "SGD momentum")
      ->capture_default_str();
  train->add_option("--seed", train_args.seed, "RNG seed")
      ->capture_default_str();
  train->add_option("--adv-eps", train_args.adv_eps,
                    "Adversarial-training ball radius (0 = plain SGD)")
      ->capture_default_str();
  train->add_option("--adv-steps", train_args.adv_steps,
                    "PGD steps per batch during adversarial training")
      ->capture_default_str();
  train->add_option("--norm", train_args.norm, "Adversarial-training norm")
      ->check(CLI::IsMember({"l1", "l2", "linf"}))
      ->capture_default_str();

  AttackArgs attack_args;
  CLI::App* attack =
      app.add_subcommand("attack", "Attack every evaluation point");
  attack->add_option("--config", config_path,
                    "Flat key=value config file (flags override it)");
  attack->add_option("--dataset", attack_args.dataset, "Dataset ref")
      ->required();
  attack->add_option("--model", attack_args.model, "Model file")->required();
  attack->add_option("--out", attack_args.out, "Output file")->required();
  attack->add_option("--format", attack_args.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  attack
      ->add_option("--eps", attack_args.opts.eps,
                   "Ball radius (pgd only, exactly one)")
      ->expected(-1);
  add_common_attack_flags(attack, attack_args.opts, true);

  CurveArgs curve_args;
  CLI::App* curve =
      app.add_subcommand("curve", "Robust accuracy across thresholds");
  curve->add_option("--config", config_path,
                    "Flat key=value config file (flags override it)");
  curve->add_option("--dataset", curve_args.dataset, "Dataset ref")
      ->required();
  curve->add_option("--model", curve_args.model, "Model file")->required();
  curve->add_option("--out", curve_args.out, "Output file")->required();
  curve->add_option("--format", curve_args.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  curve
      ->add_option("--eps", curve_args.opts.eps,
                   "Thresholds (repeatable)")
      ->expected(-1)
      ->required();
  add_common_attack_flags(curve, curve_args.opts, true);

  CompareArgs compare_args;
  CLI::App* compare =
      app.add_subcommand("compare", "Summarize prior curve reports");
  compare->add_option("reports", compare_args.reports, "Report JSON files")
      ->required()
      ->expected(-1);
  compare->add_option("--out", compare_args.out,
                      "Output file (default stdout)");
  compare->add_option("--format", compare_args.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  GridArgs grid_args;
  CLI::App* grid =
      app.add_subcommand("gridsearch", "PGD step-size divisor grid");
  grid->add_option("--config", config_path,
                    "Flat key=value config file (flags override it)");
  grid->add_option("--dataset", grid_args.dataset, "Dataset ref")->required();
  grid->add_option("--model", grid_args.model, "Model file")->required();
  grid->add_option("--out", grid_args.out, "Output file")->required();
  grid->add_option("--format", grid_args.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  grid->add_option("--norm", grid_args.norm, "Perturbation norm")
      ->check(CLI::IsMember({"l1", "l2", "linf"}))
      ->capture_default_str();
  grid->add_option("--eps", grid_args.eps, "Ball radii (repeatable)")
      ->expected(-1)
      ->required();
  grid->add_option("--iters", grid_args.steps, "PGD iterations")
      ->capture_default_str();
  grid->add_option("--divisors", grid_args.divisors,
                   "Step-size divisors (default 1,2,4,10,25,75)")
      ->delimiter(',');
  grid->add_option("--seed", grid_args.seed, "RNG seed")
      ->capture_default_str();
  grid->add_option("--threads", grid_args.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  AblateArgs ablate_args;
  CLI::App* ablate =
      app.add_subcommand("ablate", "Attack-variant comparison curves");
  ablate->add_option("--config", config_path,
                    "Flat key=value config file (flags override it)");
  ablate->add_option("--dataset", ablate_args.dataset, "Dataset ref")
      ->required();
  ablate->add_option("--model", ablate_args.model, "Model file")->required();
  ablate->add_option("--out", ablate_args.out,
                     "Output file (default stdout)");
  ablate->add_option("--format", ablate_args.format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  ablate->add_option("--norm", ablate_args.norm, "Perturbation norm")
      ->check(CLI::IsMember({"l1", "l2", "linf"}))
      ->capture_default_str();
  ablate->add_option("--eps", ablate_args.eps, "Thresholds (repeatable)")
      ->expected(-1)
      ->required();
  ablate->add_option("--iters", ablate_args.iters, "Attack iterations")
      ->capture_default_str();
  ablate->add_option("--restarts", ablate_args.restarts,
                     "Restart count for the restarted variants")
      ->capture_default_str();
  ablate->add_option("--seed", ablate_args.seed, "RNG seed")
      ->capture_default_str();
  ablate->add_option("--threads", ablate_args.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SelftestArgs selftest_args;
  CLI::App* selftest =
      app.add_subcommand("selftest", "Run the built-in invariant suites");
  selftest->add_option("--seed", selftest_args.seed, "RNG seed")
      ->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  }
  std::vector<const char*> cargv;
  cargv.reserve(args.size());
  for (const auto& s : args) cargv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) cmd_train(train_args);
    if (attack->parsed()) cmd_attack(attack_args);
    if (curve->parsed()) cmd_curve(curve_args);
    if (compare->parsed()) cmd_compare(compare_args);
    if (grid->parsed()) cmd_gridsearch(grid_args);
    if (ablate->parsed()) cmd_ablate(ablate_args);
    if (selftest->parsed()) return cmd_selftest(selftest_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
