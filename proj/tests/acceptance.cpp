// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <thread>

#include "support.hpp"

using namespace shazam;
namespace tk = shazam::testkit;

namespace {

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back(std::string(cond ? "ok   " : "FAIL ") + what);
  }
};

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Matrix random_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
  return m;
}

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t d) {
  std::normal_distribution<double> nd;
  std::vector<double> v(d);
  for (double& x : v) x = nd(gen);
  return v;
}

// ---------------------------------------------------------------- 1, 2

void rank_reproduction(Check& c) {
  tk::TempDir dir("acc_report");
  const auto r = cli::cmd_report({tk::source_dir() / "data/fixtures", dir / "out", "Shazam"});
  c.expect(r.tables.size() == 30, "tasks ranked: " + std::to_string(r.tables.size()));
  for (const auto& m : r.ranks.models) {
    if (m.model == "Shazam") {
      c.expect(near(m.mean_rank, 1.17, 0.05), "Shazam mean rank " + num(m.mean_rank) + " (1.17 +/- 0.05)");
      c.expect(m.firsts >= 25 && m.firsts <= 27, "Shazam first on " + std::to_string(m.firsts) + " tasks (26 +/- 1)");
    }
    if (m.model == "Virchow2") c.expect(near(m.mean_rank, 3.20, 0.05), "Virchow2 mean rank " + num(m.mean_rank) + " (3.20 +/- 0.05)");
  }
}

void significance(Check& c) {
  tk::TempDir dir("acc_sig");
  const auto r = cli::cmd_report({tk::source_dir() / "data/fixtures", dir / "out", "Shazam"});
  bool surv = false, st = false;
  for (const auto& row : r.wilcoxon) {
    if (row.family == "survival" && row.comparison == "metric" && row.other == "H-optimus-1") {
      surv = true;
      const double p = row.result ? row.result->p_value : 1.0;
      c.expect(row.tasks == 10 && p <= 0.01, "survival C-index vs H-optimus-1 over " + std::to_string(row.tasks) +
                                                   " cohorts: p = " + num(p) + " (<= 0.01)");
    }
    if (row.family == "st" && row.comparison == "rank") {
      st = true;
      const double p = row.result ? row.result->p_value : 1.0;
      c.expect(row.tasks == 8 && p <= 0.005, "ST ranks vs " + row.other + " over " + std::to_string(row.tasks) +
                                                  " cohorts: p = " + num(p) + " (<= 0.005)");
    }
  }
  c.expect(surv && st, "both comparisons present");
}

// ---------------------------------------------------------------- 3

double oracle_pair(const std::vector<double>& z, const std::vector<double>& t, double delta) {
  double nz = 0, nt = 0, dot = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    nz += z[k] * z[k];
    nt += t[k] * t[k];
    dot += z[k] * t[k];
  }
  nz = std::sqrt(nz);
  nt = std::sqrt(nt);
  double h = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double e = std::abs(z[k] / nz - t[k] / nt);
    h += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
  }
  return 1.0 - dot / (nz * nt) + h / static_cast<double>(z.size());
}

void loss_oracles(Check& c) {
  using V = std::vector<double>;
  const distill::DistillConfig cfg;
  const double tol = 1e-9;
  c.expect(near(distill::cosine_distance(V{1, 0}, V{0, 5}), 1.0, tol) && near(distill::cosine_distance(V{1, -1}, V{-3, 3}), 2.0, tol) &&
               near(distill::cosine_distance(V{1, 2, 3}, V{2, 4, 6}), 0.0, tol),
           "cosine_distance at 90, 180 and 0 degrees");
  c.expect(near(distill::huber_elementwise(V{1}, V{0}, 1.0), 0.5, tol) && near(distill::huber_elementwise(V{0}, V{2}, 1.0), 1.5, tol) &&
               near(distill::huber_elementwise(V{0.5, 3.0}, V{0, 0}, 1.0), 1.3125, tol),
           "huber_elementwise quadratic and linear pieces");
  c.expect(near(distill::distill_pair(V{1, 0, 0, 0}, V{0, 1, 0, 0}, cfg), 1.25, tol) &&
               near(distill::distill_pair(V{1, 0, 0, 0}, V{-1, 0, 0, 0}, cfg), 2.375, tol),
           "distill_pair orthogonal 1.25, opposite 2.375");
  const V zero(4, 0.0);
  c.expect(near(tasks::nll_survival_loss(zero, 3, true), 4 * std::log(2.0), tol) &&
               near(tasks::nll_survival_loss(zero, 1, false), 2 * std::log(2.0), tol) &&
               near(tasks::nll_survival_loss(zero, 0, true), std::log(2.0), tol),
           "nll_survival_loss with zero logits");
  const Matrix w = (Matrix(1, 2) << 2, 0).finished();
  const Matrix* ws[] = {&w};
  c.expect(near(tasks::ridge_loss(V{1, 2}, V{0, 0}, ws, 1e-4), 2.5 + 4e-4, tol), "ridge_loss 2.5 + 1e-4 * 4");

  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> ui(1, 5);
  double worst = 0;
  for (int r = 0; r < 100; ++r) {
    distill::DistillConfig dc;
    dc.delta = 0.2 + 0.1 * ui(gen);
    const auto n = static_cast<std::size_t>(ui(gen));
    const auto d = static_cast<std::size_t>(ui(gen)) + 1;
    std::array<std::optional<V>, 3> z;
    std::array<std::vector<V>, 3> t;
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (s > 0 && ui(gen) <= 2) continue;
      z[s] = random_vec(gen, d);
      for (std::size_t i = 0; i < n; ++i) {
        t[s].push_back(random_vec(gen, d));
        sum += oracle_pair(*z[s], t[s].back(), dc.delta);
        ++count;
      }
    }
    worst = std::max(worst, std::abs(distill::distill_total(z, t, dc) - sum / static_cast<double>(count)));
  }
  c.expect(worst <= tol, "distill_total vs loop oracle on 100 instances, max error " + num(worst));
}

// ---------------------------------------------------------------- 4

bool zero_grad(const ad::Var& v) { return !v.needs_grad() && (v.grad().size() == 0 || v.grad().cwiseAbs().maxCoeff() == 0.0); }

void gradient_suite(Check& c) {
  for (TaskKind k : {TaskKind::Classification, TaskKind::Expression, TaskKind::Survival}) {
    SynthConfig sc = tk::small_synth(k, {12, 10, 8}, 24);
    const FeatureSet fs = synth_teacher_set(sc, 4);
    tasks::ShazamModel m = tk::gradient_model(k, fs, 16, 2);
    const tasks::Unit u = tasks::make_units(fs, {0, 1, 2}, m.config.bags).front();
    const auto g = tk::check_gradients(m, fs, u);
    c.expect(g.worst_rel <= 1e-4, std::string(to_string(k)) + ": " + std::to_string(g.checked) + " entries, worst relative error " +
                                      num(g.worst_rel) + " at " + g.worst_param);

    // Teacher features and distillation targets are graph constants.
    ad::Tape tape;
    std::vector<ad::Var> feats;
    std::array<std::vector<ad::Var>, 3> aligned;
    for (Scale s : m.config.scales.list())
      for (std::size_t i = 0; i < m.fusion.num_teachers(); ++i) {
        feats.push_back(tape.constant(tasks::teacher_matrix(fs, u.tiles, i, s)));
        ad::Var p = m.fusion.projections.at(i, s)(tape, feats.back());
        if (m.config.bags) p = mil::abmil_pool(tape, m.abmil->at(s), p).slide;
        aligned[index_of(s)].push_back(p);
      }
    auto fo = fusion::fuse_scales(tape, m.fusion, aligned, m.config.scales, m.config.use_moe);
    std::array<std::optional<ad::Var>, 3> z;
    std::array<std::vector<ad::Var>, 3> targets;
    for (Scale s : m.config.scales.list()) {
      z[index_of(s)] = fo.scales[index_of(s)]->z;
      targets[index_of(s)] = fo.scales[index_of(s)]->targets;
    }
    ad::Var task = tasks::task_loss(tape, m, m.head(tape, fo.task_input, nullptr), u.label);
    ad::Var total = ad::add(task, ad::scale(distill::distill_total(z, targets, m.config.distill_cfg).total, 0.01));
    for (Parameter* p : m.parameters()) p->zero_grad();
    tape.backward(total);
    bool zero = true;
    for (const auto& f : feats) zero = zero && zero_grad(f);
    for (const auto& per : targets)
      for (const auto& t : per) zero = zero && zero_grad(t);
    c.expect(zero, std::string(to_string(k)) + ": feature and target gradients exactly zero");
  }
}

// ---------------------------------------------------------------- 5

void invariants(Check& c) {
  std::mt19937_64 gen(21);
  fusion::FusionConfig fc;
  for (std::size_t i = 0; i < 5; ++i) {
    fc.teacher_names.push_back("t" + std::to_string(i));
    fc.native_dims.push_back(6);
  }
  fc.dim = 8;
  fc.heads = 2;
  fc.layers = 3;
  fc.seed = 3;
  const fusion::FusionState state(fc);

  bool simplex = true;
  for (int r = 0; r < 200; ++r) {
    const auto g = fusion::gate_values(state.gates[0], 5.0 * random_matrix(gen, 1, 40));
    double s = 0;
    for (double v : g) {
      simplex = simplex && v >= 0.0;
      s += v;
    }
    simplex = simplex && near(s, 1.0, 1e-12);
  }
  c.expect(simplex, "gate outputs lie on the simplex (200 inputs)");

  double attn = 0;
  for (int r = 0; r < 50; ++r) {
    const Matrix x = random_matrix(gen, 5, 8);
    std::vector<Eigen::Index> perm = {0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), gen);
    Matrix xp(5, 8);
    for (Eigen::Index i = 0; i < 5; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    const Matrix y = fusion::attend_and_normalize_values(state.stack, x);
    const Matrix yp = fusion::attend_and_normalize_values(state.stack, xp);
    for (Eigen::Index i = 0; i < 5; ++i) attn = std::max(attn, (yp.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff());
  }
  c.expect(attn <= 1e-6, "self-attention permutation equivariance, max deviation " + num(attn));

  const mil::AbmilHead head("h", 8, 6, 7);
  double pool = 0;
  for (int r = 0; r < 50; ++r) {
    const Matrix bag = random_matrix(gen, 9, 8);
    std::vector<Eigen::Index> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Matrix shuffled(9, 8);
    for (Eigen::Index i = 0; i < 9; ++i) shuffled.row(i) = bag.row(perm[static_cast<std::size_t>(i)]);
    pool = std::max(pool, (mil::abmil_pool(head, bag).slide - mil::abmil_pool(head, shuffled).slide).cwiseAbs().maxCoeff());
  }
  c.expect(pool <= 1e-9, "ABMIL permutation invariance, max deviation " + num(pool));

  bool monotone = true;
  std::uniform_int_distribution<int> t20(1, 20), coin(0, 1), size(1, 60);
  for (int r = 0; r < 500; ++r) {
    const auto n = static_cast<std::size_t>(size(gen));
    std::vector<double> times(n);
    std::vector<int> events(n);
    for (std::size_t i = 0; i < n; ++i) {
      times[i] = t20(gen);
      events[i] = coin(gen);
    }
    double prev = 1.0;
    for (const auto& p : metrics::kaplan_meier(times, events)) {
      monotone = monotone && p.survival <= prev && p.survival >= 0.0;
      prev = p.survival;
    }
  }
  c.expect(monotone, "Kaplan-Meier curves non-increasing (500 instances)");

  std::uniform_int_distribution<int> small(0, 6), n50(2, 50);
  int checked = 0;
  double cidx = 0;
  while (checked < 1000) {
    const auto n = static_cast<std::size_t>(n50(gen));
    std::vector<double> t(n), risk(n);
    std::vector<int> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = small(gen);
      risk[i] = small(gen);
      e[i] = small(gen) > 2;
    }
    bool comparable = false;
    for (std::size_t i = 0; i < n && !comparable; ++i)
      for (std::size_t j = 0; j < n; ++j) comparable = comparable || (e[i] && t[i] < t[j]);
    if (!comparable) continue;
    cidx = std::max(cidx, std::abs(metrics::concordance_index(t, e, risk) - tk::brute_cindex(t, e, risk)));
    ++checked;
  }
  c.expect(cidx <= 1e-12, "C-index equals brute force on 1000 instances (n <= 50), max deviation " + num(cidx));
}

// ---------------------------------------------------------------- 6

FeatureSet planted(const std::map<std::string, std::string>& kv, std::uint64_t seed) {
  return synth_teacher_set(cli::synth_config(cli::Config(kv, "")), seed);
}

cli::RunSettings ablation_settings(TaskKind task) {
  const cli::Config c({{"dim", "16"}, {"heads", "2"}, {"layers", "1"}, {"head_hidden", "32"}, {"epochs", "15"}, {"batch", "32"},
                       {"lr", "0.003"}},
                      "");
  return cli::run_settings(c, task, tasks::default_preset(task), 2);
}

void ablation_directions(Check& c) {
  const std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  const FeatureSet st = planted({{"task", "expression"}, {"teachers", "T0:32:24,T1:32:24,T2:32:24,T3:32:24"}, {"samples", "400"},
                                 {"num_genes", "8"}, {"patients", "80"}, {"planted", "teacher-0-only"}},
                                5);
  const auto base = ablation_settings(TaskKind::Expression);

  const auto tr = cli::run_ablation(st, cli::AblationKind::TeacherRemoval, base, 3, 1, jobs);
  const double all = tr.mean("all", "pcc");
  const double signal = all - tr.mean("w/o T0", "pcc");
  double noise = -std::numeric_limits<double>::infinity();
  for (const char* t : {"w/o T1", "w/o T2", "w/o T3"}) noise = std::max(noise, all - tr.mean(t, "pcc"));
  c.expect(signal > noise, "teacher removal: PCC drop " + num(signal) + " without the signal teacher vs at most " + num(noise) +
                               " without a noise teacher");

  const auto sc = cli::run_ablation(st, cli::AblationKind::ScaleCombo, base, 3, 1, jobs);
  const double best_single = std::max({sc.mean("low", "pcc"), sc.mean("mid", "pcc"), sc.mean("high", "pcc")});
  const double three = sc.mean("low+mid+high", "pcc");
  c.expect(three >= best_single, "scales: all three PCC " + num(three) + " vs best single " + num(best_single));

  const FeatureSet tile = planted({{"task", "classification"}, {"teachers", "T0:32:24,T1:32:24,T2:32:24,T3:32:24"}, {"samples", "500"},
                                   {"num_classes", "4"}, {"planted", "teacher-0-only"}},
                                  5);
  const auto moe = cli::run_ablation(tile, cli::AblationKind::MoeSwitch, ablation_settings(TaskKind::Classification), 3, 1, jobs);
  const double on = moe.mean("moe_on", "balanced_accuracy"), off = moe.mean("moe_off", "balanced_accuracy");
  c.expect(on >= off - 0.01, "MoE on balanced accuracy " + num(on) + " vs off " + num(off) + " - 0.01");
}

// ---------------------------------------------------------------- 7

void determinism(Check& c) {
  tk::TempDir dir("acc_det");
  cli::write_text(dir / "synth.cfg", "task=survival\nteachers=a:16:12,b:12:12,c:8:12\nsamples=60\ntiles_min=3\ntiles_max=5\n");
  cli::write_text(dir / "model.cfg", "dim=8\nheads=2\nlayers=1\nhead_hidden=16\nabmil_hidden=8\nepochs=3\nbatch=16\n");
  const FeatureSet fs = cli::cmd_synth({dir / "synth.cfg", dir / "data.shz", 11});
  for (const char* run : {"r1", "r2"}) {
    cli::TrainOptions o;
    o.data = dir / "data.shz";
    o.task = "survival";
    o.out = dir / run;
    o.seed = 13;
    o.config = dir / "model.cfg";
    cli::cmd_train(o);
  }
  bool same = true;
  for (const char* f : {"checkpoint.manifest", "checkpoint.manifest.bin", "train_log.csv", "step_log.csv", "gates.csv", "run.cfg"}) {
    const bool eq = std::filesystem::exists(dir / "r1" / f) && detail::read_file(dir / "r1" / f) == detail::read_file(dir / "r2" / f);
    if (!eq) c.expect(false, std::string(f) + " differs between runs");
    same = same && eq;
  }
  c.expect(same, "two seeded train runs give bit-identical checkpoints and logs");

  const FeatureSet back = read_feature_set(dir / "data.shz");
  write_feature_set(back, dir / "again.shz");
  c.expect(back == fs && detail::read_file(dir / "data.shz") == detail::read_file(dir / "again.shz"),
           "feature container round trip is the identity");
}

}  // namespace

int main() {
  log::set_level(log::Level::Warn);
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"1 rank reproduction", rank_reproduction}, {"2 significance reproduction", significance},
      {"3 loss oracles", loss_oracles},           {"4 gradient suite", gradient_suite},
      {"5 structural invariants", invariants},    {"6 ablation directions", ablation_directions},
      {"7 determinism", determinism}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (c.ok ? "PASS " : "FAIL ") << name << " (" << num(secs, 3) << " s)\n";
    for (const auto& n : c.notes) std::cout << "       " << n << "\n";
    failed += !c.ok;
  }
  std::cout << (7 - failed) << "/7 criteria pass\n";
  return failed == 0 ? 0 : 1;
}
