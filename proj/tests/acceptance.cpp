// One PASS/FAIL line per acceptance criterion, with wall-clock runtime.
// Tolerances are pinned here and do not come from the configs.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dilatation/lab/config.hpp"
#include "dilatation/lab/experiments.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dilatation;

namespace {

constexpr double kExactTol = 1e-12;
constexpr double kLimitTol = 1e-6;
constexpr double kMinRate = 0.9;
constexpr double kConeGauge = 1e-9;
constexpr double kConeCc = 0.02;
constexpr double kFsReconstruction = 1e-9;
constexpr double kFsExponent = 0.05;
constexpr double kCcUnit = 1e-4;
constexpr double kCcRelative = 0.02;
constexpr double kMorphism = 1e-6;
constexpr double kLengthIdentity = 0.01;
constexpr double kCommutator = 1e-6;
constexpr double kIdempotence = 1e-9;
constexpr double kChowReach = 1e-4;
constexpr double kChowExponent = 0.1;
constexpr double kHorizontality = 1e-4;
constexpr double kRecovery = 0.05;
constexpr double kDerivableFraction = 0.95;
constexpr double kSpeedIdentity = 0.05;
constexpr double kCluster = 1.9;

class Criterion {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void bound(double value, double tol, const std::string& what) {
    std::ostringstream s;
    s << what << " = " << value << " > " << tol;
    require(value <= tol, s.str());
  }
  void runtime(double seconds, double budget) {
    std::ostringstream s;
    s << "runtime " << seconds << " s > " << budget << " s";
    require(seconds < budget, s.str());
  }
  bool ok() const { return failures_.empty(); }
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  std::vector<std::string> failures_;
};

std::string config_path(const std::string& name) { return std::string(DILATATION_CONFIG_DIR) + "/" + name; }

lab::RunReport run(const std::string& name) { return lab::run_experiment(lab::load_config(config_path(name))); }

std::vector<lab::Row> rows(const lab::RunReport& rep, const std::string& name) {
  std::vector<lab::Row> out;
  for (const auto& r : rep.rows) {
    if (r.check_name == name || r.check_name.rfind(name + "[", 0) == 0) out.push_back(r);
  }
  return out;
}

const lab::Row* row(const lab::RunReport& rep, const std::string& name) {
  for (const auto& r : rep.rows) {
    if (r.check_name == name) return &r;
  }
  return nullptr;
}

void no_errors(Criterion& c, const lab::RunReport& rep) {
  for (const auto& r : rep.rows) c.require(r.check_name.rfind("error:", 0) != 0, rep.experiment + " " + r.check_name);
}

// Row exists, passed, and its residual sits under the pinned tolerance.
void check_row(Criterion& c, const lab::RunReport& rep, const std::string& name, double tol) {
  auto rs = rows(rep, name);
  c.require(!rs.empty(), "missing row " + name);
  for (const auto& r : rs) {
    c.require(r.verdict == lab::kPass, r.check_name + " verdict " + r.verdict);
    c.bound(r.residual, tol, r.check_name);
  }
}

void check_rate(Criterion& c, const lab::Row* r, double min_rate) {
  c.require(r && r->rate_estimate.has_value(), "missing rate");
  if (r && r->rate_estimate) c.require(*r->rate_estimate >= min_rate, r->check_name + " rate below threshold");
}

std::string slurp_cli(const std::string& args) {
  std::string cmd = std::string(DILATATION_LAB_EXE) + " " + args + " 2>/dev/null";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  pclose(pipe);
  return out;
}

void c1(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto rep = run("axioms_euclidean.json");
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, rep);
  for (const char* a : {"A0", "A3", "A4"}) c.require(row(rep, a) && row(rep, a)->verdict == lab::kPass, a);
  check_row(c, rep, "A1", kExactTol);
  check_row(c, rep, "A2", kExactTol);
  check_row(c, rep, "rescaled_distance", kExactTol);
  c.runtime(secs, 5.0);
}

void c2(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto cfg = lab::load_config(config_path("tangent_heisenberg.json"));
  c.require(cfg.param("pairs", cfg.samples) >= 100, "fewer than 100 pairs");
  auto rep = lab::run_experiment(cfg);
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, rep);
  check_row(c, rep, "delta_limit", kLimitTol);
  check_row(c, rep, "sigma_limit", kLimitTol);
  check_rate(c, row(rep, "delta_limit"), kMinRate);
  check_rate(c, row(rep, "sigma_limit"), kMinRate);
  // closed forms against the matrix model
  std::mt19937_64 rng(cfg.seed);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Point u = random_point(rng, Point::Zero(3), 0.5), v = random_point(rng, Point::Zero(3), 0.5);
    worst = std::max(worst, max_dist(heis::mul(heis::inv(u), v), oracle::mul(oracle::inv(u), v)));
    worst = std::max(worst, max_dist(heis::mul(u, v), oracle::mul(u, v)));
  }
  c.bound(worst, kExactTol, "closed form vs matrix oracle");
  c.runtime(secs, 30.0);
}

void c3(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto gauge = run("tangent_heisenberg.json");
  auto cc = run("tangent_heisenberg_cc.json");
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, gauge);
  no_errors(c, cc);
  for (const char* mu : {"cone_mu=0.5", "cone_mu=0.25"}) {
    check_row(c, gauge, mu, kConeGauge);
    check_row(c, cc, mu, kConeCc);
  }
}

void c4(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto cfg = lab::load_config(config_path("carnot_heisenberg.json"));
  c.require(cfg.samples >= 100, "fewer than 100 elements");
  auto rep = lab::run_experiment(cfg);
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, rep);
  check_row(c, rep, "fs_reconstruction", kFsReconstruction);
  const auto* e = row(rep, "fs_exponent");
  c.require(e && e->rate_estimate, "missing fs_exponent");
  if (e && e->rate_estimate) c.bound(std::abs(*e->rate_estimate - 0.5), kFsExponent, "|exponent - 1/2|");
}

void c5(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto cfg = lab::load_config(config_path("ccdist_heisenberg.json"));
  c.require(cfg.samples >= 20, "fewer than 20 samples");
  c.require(cfg.param("segments", 0) == 64, "segments != 64");
  auto rep = lab::run_experiment(cfg);
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, rep);
  check_row(c, rep, "unit_e1", kCcUnit);
  check_row(c, rep, "homogeneity", kCcRelative);
  check_row(c, rep, "left_invariance", kCcRelative);
  c.runtime(secs, 60.0);
}

void c6(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto rep = run("projection_heisenberg.json");
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, rep);
  check_row(c, rep, "I", kExactTol);
  check_row(c, rep, "III", kExactTol);
  check_row(c, rep, "II", kLimitTol);
  check_row(c, rep, "IV", kLimitTol);
  check_rate(c, row(rep, "IV"), kMinRate);
  check_row(c, rep, "tangent_projection_morphism", kMorphism);
  auto lengths = rows(rep, "projected_length_identity");
  c.require(lengths.size() >= 10, "fewer than 10 length fixtures");
  check_row(c, rep, "projected_length_identity", kLengthIdentity);
}

void c7(Criterion& c, const lab::RunReport& rep) {
  no_errors(c, rep);
  check_row(c, rep, "psi_limit", kLimitTol);
  check_rate(c, row(rep, "psi_limit"), kMinRate);
  check_row(c, rep, "commutator_word", kCommutator);
  check_row(c, rep, "psi_idempotence", kIdempotence);
  // the commutator of the two unit generators in the matrix model
  Point e1 = Point::Zero(3), e2 = Point::Zero(3), z = Point::Zero(3);
  e1(0) = 1.0;
  e2(1) = 1.0;
  z(2) = 1.0;
  c.bound(max_dist(oracle::commutator(e1, e2), z), kExactTol, "matrix commutator vs (0,0,1)");
}

void c8(Criterion& c, const lab::RunReport& rep, const lab::ExperimentConfig& cfg, double secs) {
  c.require(cfg.param("targets", 0) >= 50, "fewer than 50 targets");
  c.require(cfg.param("n", 0) == 5, "N != 5");
  c.require(cfg.param("radius", 1.0) <= 0.1, "target radius above 0.1");
  check_row(c, rep, "chow_reach", kChowReach);
  check_row(c, rep, "chow_nested", 0.0);
  const auto* e = row(rep, "chow_increment_exponent");
  c.require(e && e->rate_estimate, "missing increment exponent");
  if (e && e->rate_estimate) c.bound(std::abs(*e->rate_estimate - 0.5), kChowExponent, "|exponent - 1/2|");
  check_row(c, rep, "short_curve_horizontal", kHorizontality);
  c.runtime(secs, 120.0);
}

void c9(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto gamma = run("gamma_heisenberg.json");
  auto recovery = run("recovery_heisenberg.json");
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, gamma);
  no_errors(c, recovery);
  auto dev = rows(gamma, "deviation_constant");
  c.require(dev.size() >= 5, "fewer than 5 gamma fixtures");
  for (const auto& r : dev) c.require(r.verdict == lab::kPass, r.check_name);
  for (const auto& r : rows(gamma, "l_eps")) c.require(r.verdict == lab::kPass, r.check_name);
  for (const auto& r : rows(gamma, "liminf")) c.require(r.verdict == lab::kPass, r.check_name);
  int fixtures = 0;
  for (const auto& r : recovery.rows) {
    if (r.check_name.find("lambda=0.01") != std::string::npos) {
      c.bound(r.residual, kRecovery, r.check_name);
      ++fixtures;
    }
    if (r.check_name.rfind("recovery_monotone", 0) == 0) c.require(r.verdict == lab::kPass, r.check_name);
  }
  c.require(fixtures >= 5, "fewer than 5 recovery fixtures");
  c.runtime(secs, 120.0);
}

void c10(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto eu = run("rnp_euclidean.json");
  auto he = run("rnp_heisenberg.json");
  auto cx = run("rnp_complex.json");
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto* rep : {&eu, &he}) {
    no_errors(c, *rep);
    check_row(c, *rep, "derivable_fraction", 1.0 - kDerivableFraction + 1e-12);
    check_row(c, *rep, "speed_identity", kSpeedIdentity);
  }
  no_errors(c, cx);
  auto frac = rows(cx, "derivable_fraction");
  c.require(!frac.empty(), "missing complex-exponent fractions");
  for (const auto& r : frac) c.bound(1.0 - r.residual, 1.0 - kDerivableFraction + 1e-12, r.check_name + " fraction");
  auto cl = rows(cx, "cluster_diameter");
  c.require(!cl.empty(), "missing cluster rows");
  for (const auto& r : cl) c.require(r.residual >= kCluster, r.check_name + " ratio below 1.9");
}

void c11(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  auto rep = run("equivalence.json");
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  no_errors(c, rep);
  bool saw_eq = false, saw_neq = false;
  for (const auto& r : rep.rows) {
    if (r.check_name == "equivalent" && r.instance == "tempered_base~euclidean3") saw_eq = r.verdict == lab::kPass;
    if (r.check_name == "not_equivalent" && r.instance == "tempered_base~heisenberg_sr") saw_neq = r.verdict == lab::kPass;
  }
  c.require(saw_eq, "frame vs affine not EQUIVALENT");
  c.require(saw_neq, "isotropic vs anisotropic not NOT EQUIVALENT");
}

void c12(Criterion& c, double& secs) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(DILATATION_CONFIG_DIR)) {
    if (e.path().extension() == ".json") configs.push_back(e.path());
  }
  std::sort(configs.begin(), configs.end());
  c.require(!configs.empty(), "no configs");
  for (const auto& p : configs) {
    std::string a = slurp_cli("run --config " + p.string());
    std::string b = slurp_cli("run --config " + p.string());
    c.require(!a.empty() && a == b, p.filename().string() + " differs between runs");
  }
  secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
  struct Entry {
    int id;
    std::string title;
    std::function<void(Criterion&, double&)> body;
  };
  // 7 and 8 share one chow run
  lab::RunReport chow;
  lab::ExperimentConfig chow_cfg;
  double chow_secs = 0.0;
  bool chow_done = false;
  auto chow_run = [&] {
    if (chow_done) return;
    auto t0 = std::chrono::steady_clock::now();
    chow_cfg = lab::load_config(config_path("chow_heisenberg.json"));
    chow = lab::run_experiment(chow_cfg);
    chow_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    chow_done = true;
  };
  std::vector<Entry> entries{
      {1, "Euclidean axioms and rescaled distance", c1},
      {2, "Heisenberg Delta/Sigma limits at the identity", c2},
      {3, "cone property, gauge and CC", c3},
      {4, "Folland-Stein reconstruction and exponent", c4},
      {5, "CC distance estimator", c5},
      {6, "Heisenberg coherent projection", c6},
      {7, "Psi words",
       [&](Criterion& c, double& s) {
         chow_run();
         s = chow_secs;
         c7(c, chow);
       }},
      {8, "generalized Chow",
       [&](Criterion& c, double& s) {
         chow_run();
         s = chow_secs;
         c8(c, chow, chow_cfg, chow_secs);
       }},
      {9, "gamma convergence and recovery", c9},
      {10, "RNP discrimination", c10},
      {11, "equivalence verdicts", c11},
      {12, "byte-identical reruns", c12},
  };
  int failed = 0;
  for (auto& e : entries) {
    Criterion c;
    double secs = 0.0;
    try {
      e.body(c, secs);
    } catch (const std::exception& ex) {
      c.require(false, std::string("exception: ") + ex.what());
    }
    std::printf("criterion %2d %s %8.2f s  %s\n", e.id, c.ok() ? "PASS" : "FAIL", secs, e.title.c_str());
    for (const auto& f : c.failures()) std::printf("             - %s\n", f.c_str());
    std::fflush(stdout);
    failed += c.ok() ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(entries.size()) - failed, entries.size());
  return failed == 0 ? 0 : 1;
}
