#include "tmerr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "tmerr/errors.hpp"
#include "tmerr/oracles.hpp"

namespace tmerr::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

Vector to_vector(const std::string& key, const std::string& v) {
  Vector out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of numbers");
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool is_solver_algorithm(const std::string& a) {
  return a == "full" || a == "reduced" || a == "iterative" || a == "iterative_mod";
}

std::string problem_name(ProblemKind k) { return k == ProblemKind::Affine ? "affine" : "simple_machine"; }

void write_samples(const fs::path& p, const SampleBatch& s) {
  std::ostringstream os;
  for (std::size_t k = 0; k < s.dim(); ++k) os << (k ? "," : "") << 'x' << (k + 1);
  os << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t k = 0; k < s.dim(); ++k) os << (k ? "," : "") << fmt17(s.points(i, k));
    os << '\n';
  }
  write_text(p, os.str());
}

void append_summary_rows(std::ostringstream& os, const PosteriorSummary& s) {
  const Vector sd = s.stddev();
  for (std::size_t k = 0; k < s.mean.size(); ++k) {
    os << s.source << ',' << (k + 1) << ',' << fmt17(s.mean[k]) << ',' << fmt17(sd[k]) << ',' << fmt17(s.q025[k])
       << ',' << fmt17(s.q50[k]) << ',' << fmt17(s.q975[k]) << ',' << fmt17(s.mean_se[k]) << '\n';
  }
}

const char* kSummaryHeader = "source,axis,mean,std,q025,q50,q975,mean_se\n";
const char* kTraceHeader = "iter,loss,g_plus,g_minus,wall_ms";

void write_trace(const fs::path& p, const std::vector<IterationRecord>& records) {
  std::ostringstream os;
  os << kTraceHeader << '\n';
  for (const IterationRecord& r : records) {
    os << r.iter << ',' << fmt17(r.loss) << ',' << r.cost.g_plus << ',' << r.cost.g_minus << ','
       << fmt17(r.wall_ms) << '\n';
  }
  write_text(p, os.str());
}

struct CostRow {
  std::string counter;
  std::uint64_t value;
  std::string formula;
  std::uint64_t expected;
};

void write_cost(const fs::path& p, const std::vector<CostRow>& rows) {
  std::ostringstream os;
  os << "counter,value,formula,expected\n";
  for (const CostRow& r : rows) os << r.counter << ',' << r.value << ',' << r.formula << ',' << r.expected << '\n';
  write_text(p, os.str());
}

GridDensity oracle_grid(const ExperimentConfig& cfg, const InverseProblem& p, OracleTarget t) {
  switch (t) {
    case OracleTarget::Exact: return grid_posterior(p.exact, p.prior, p.noise, p.obs, cfg.oracle_resolution);
    case OracleTarget::Reduced: return grid_posterior(p.reduced, p.prior, p.noise, p.obs, cfg.oracle_resolution);
    case OracleTarget::FixedPoint: {
      FixedPointOptions o;
      o.resolution = cfg.oracle_resolution;
      return grid_fixed_point(p.reduced, p.exact, p.prior, p.noise, p.obs, o).density;
    }
  }
  throw ConfigError("unknown oracle target");
}

std::function<double(std::span<const double>)> oracle_logpost(const ExperimentConfig& cfg, const InverseProblem& p,
                                                               OracleTarget t) {
  if (t == OracleTarget::Exact) return log_posterior(p.exact, p.prior, p.noise, p.obs);
  if (t == OracleTarget::Reduced) return log_posterior(p.reduced, p.prior, p.noise, p.obs);
  const GridDensity fp = oracle_grid(cfg, p, OracleTarget::FixedPoint);
  auto lik = integrated_log_likelihood(fp, p.reduced, p.exact, p.noise, p.obs);
  const UniformBox prior = p.prior;
  return [lik, prior](std::span<const double> x) {
    const double lp = log_pdf_uniform_box(x, prior);
    return std::isfinite(lp) ? lp + lik(x) : kNegInf;
  };
}

MhResult run_mh(const ExperimentConfig& cfg, const InverseProblem& p, OracleTarget t) {
  auto lp = oracle_logpost(cfg, p, t);
  RngStream stream = RngStream::named(cfg.solver.seed, "mcmc");
  Vector x0 = p.prior.contains(p.obs.x_star) ? p.obs.x_star : p.prior.center();
  const Vector prop = cfg.mh_proposal_std.empty() ? default_proposal_std(p.prior) : cfg.mh_proposal_std;
  return mh_sample(lp, x0, cfg.mh_samples, cfg.mh_burn, prop, stream);
}

SampleBatch sample_grid(const GridDensity& g, std::size_t S, RngStream& stream) {
  Vector cdf(g.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    acc += g.weight(i) * std::exp(g.logp[i]);
    cdf[i] = acc;
  }
  SampleBatch out;
  out.seed_tag = stream.key();
  out.points = Matrix(S, g.dim());
  for (std::size_t n = 0; n < S; ++n) {
    const double u = stream.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), g.size() - 1);
    const Vector x = g.point(idx);
    std::copy(x.begin(), x.end(), out.points.row(n).begin());
  }
  return out;
}

OracleTarget cross_check_target(const ExperimentConfig& cfg) {
  if (cfg.algorithm == "full") return OracleTarget::Exact;
  if (cfg.algorithm == "reduced") return OracleTarget::Reduced;
  if (cfg.algorithm == "iterative" || cfg.algorithm == "iterative_mod") return OracleTarget::FixedPoint;
  return cfg.oracle_target;
}

}  // namespace

std::string to_string(OracleTarget t) {
  switch (t) {
    case OracleTarget::Exact: return "exact";
    case OracleTarget::Reduced: return "reduced";
    case OracleTarget::FixedPoint: return "fixed_point";
  }
  return "unknown";
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError(key + ": duplicate key");
  }
  return kv;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  const SolverConfig& a = solver;
  const SolverConfig& b = o.solver;
  const bool solver_eq = a.algorithm == b.algorithm && a.loss == b.loss && a.s == b.s &&
                         a.m_override == b.m_override && a.degree == b.degree && a.init == b.init &&
                         a.adam.step_size == b.adam.step_size && a.adam.beta1 == b.adam.beta1 &&
                         a.adam.beta2 == b.adam.beta2 && a.adam.eps == b.adam.eps && a.delta == b.delta &&
                         a.max_iterations == b.max_iterations && a.min_iterations == b.min_iterations &&
                         a.L_mod == b.L_mod && a.N_mod == b.N_mod && a.seed == b.seed;
  return solver_eq && problem == o.problem && x_star == o.x_star && noise_level == o.noise_level && d == o.d &&
         zero_noise == o.zero_noise && prior_lo == o.prior_lo && prior_hi == o.prior_hi &&
         machine_a == o.machine_a && algorithm == o.algorithm && S == o.S && output_dir == o.output_dir &&
         checkpoint_every == o.checkpoint_every && oracle_target == o.oracle_target &&
         oracle_resolution == o.oracle_resolution && oracle_cross_check == o.oracle_cross_check &&
         mh_samples == o.mh_samples && mh_burn == o.mh_burn && mh_proposal_std == o.mh_proposal_std &&
         raw_text == o.raw_text;
}

ExperimentConfig parse_config(const std::string& text) {
  auto kv = parse_key_values(text);
  ExperimentConfig c;
  c.raw_text = text;
  auto take = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = take("problem.name")) {
    if (*v == "affine") {
      c.problem = ProblemKind::Affine;
    } else if (*v == "simple_machine") {
      c.problem = ProblemKind::SimpleMachine;
    } else {
      throw ConfigError("problem.name: expected affine or simple_machine, got '" + *v + "'");
    }
  }
  const std::size_t dim = c.problem == ProblemKind::Affine ? 2 : 1;
  c.x_star = c.problem == ProblemKind::Affine ? Vector{1.0, 3.0} : Vector{10.0};
  c.prior_lo.assign(dim, 0.0);
  c.prior_hi.assign(dim, 15.0);

  if (auto v = take("problem.x_star")) c.x_star = to_vector("problem.x_star", *v);
  if (auto v = take("problem.noise_level")) c.noise_level = to_double("problem.noise_level", *v);
  if (auto v = take("problem.d")) c.d = to_u64("problem.d", *v);
  if (auto v = take("problem.zero_noise")) c.zero_noise = to_bool("problem.zero_noise", *v);
  if (auto v = take("problem.prior_lo")) c.prior_lo = to_vector("problem.prior_lo", *v);
  if (auto v = take("problem.prior_hi")) c.prior_hi = to_vector("problem.prior_hi", *v);
  if (auto v = take("problem.a")) c.machine_a = to_double("problem.a", *v);

  if (auto v = take("algorithm.name")) c.algorithm = *v;
  if (auto v = take("algorithm.loss")) {
    if (*v == "jensen") {
      c.solver.loss = LossKind::Jensen;
    } else if (*v == "nmc") {
      c.solver.loss = LossKind::Nmc;
    } else {
      throw ConfigError("algorithm.loss: expected jensen or nmc, got '" + *v + "'");
    }
  }
  if (auto v = take("algorithm.s")) c.solver.s = to_u64("algorithm.s", *v);
  if (auto v = take("algorithm.m_override")) c.solver.m_override = to_u64("algorithm.m_override", *v);
  if (auto v = take("algorithm.max_iterations")) c.solver.max_iterations = to_u64("algorithm.max_iterations", *v);
  if (auto v = take("algorithm.min_iterations")) c.solver.min_iterations = to_u64("algorithm.min_iterations", *v);
  if (auto v = take("algorithm.delta")) c.solver.delta = to_double("algorithm.delta", *v);
  if (auto v = take("algorithm.L_mod")) c.solver.L_mod = to_u64("algorithm.L_mod", *v);
  if (auto v = take("algorithm.N_mod")) c.solver.N_mod = to_u64("algorithm.N_mod", *v);
  if (auto v = take("optimizer.step_size")) c.solver.adam.step_size = to_double("optimizer.step_size", *v);
  if (auto v = take("optimizer.beta1")) c.solver.adam.beta1 = to_double("optimizer.beta1", *v);
  if (auto v = take("optimizer.beta2")) c.solver.adam.beta2 = to_double("optimizer.beta2", *v);
  if (auto v = take("optimizer.eps")) c.solver.adam.eps = to_double("optimizer.eps", *v);
  if (auto v = take("optimizer.degree")) c.solver.degree = to_u64("optimizer.degree", *v);
  if (auto v = take("optimizer.init")) {
    if (*v == "identity") {
      c.solver.init = MapInit::IdentityToBox;
    } else if (*v == "random") {
      c.solver.init = MapInit::Randomized;
    } else {
      throw ConfigError("optimizer.init: expected identity or random, got '" + *v + "'");
    }
  }
  if (auto v = take("seed")) c.solver.seed = to_u64("seed", *v);
  if (auto v = take("posterior.S")) c.S = to_u64("posterior.S", *v);
  if (auto v = take("output.dir")) c.output_dir = *v;
  if (auto v = take("output.checkpoint_every")) c.checkpoint_every = to_u64("output.checkpoint_every", *v);
  if (auto v = take("oracle.target")) {
    if (*v == "exact") {
      c.oracle_target = OracleTarget::Exact;
    } else if (*v == "reduced") {
      c.oracle_target = OracleTarget::Reduced;
    } else if (*v == "fixed_point") {
      c.oracle_target = OracleTarget::FixedPoint;
    } else {
      throw ConfigError("oracle.target: expected exact, reduced or fixed_point, got '" + *v + "'");
    }
  }
  if (auto v = take("oracle.resolution")) c.oracle_resolution = to_u64("oracle.resolution", *v);
  if (auto v = take("oracle.cross_check")) c.oracle_cross_check = to_bool("oracle.cross_check", *v);
  if (auto v = take("oracle.mh_samples")) c.mh_samples = to_u64("oracle.mh_samples", *v);
  if (auto v = take("oracle.mh_burn")) c.mh_burn = to_u64("oracle.mh_burn", *v);
  if (auto v = take("oracle.proposal_std")) c.mh_proposal_std = to_vector("oracle.proposal_std", *v);

  static const char* known[] = {
      "problem.name", "problem.x_star", "problem.noise_level", "problem.d", "problem.zero_noise",
      "problem.prior_lo", "problem.prior_hi", "problem.a", "algorithm.name", "algorithm.loss", "algorithm.s",
      "algorithm.m_override", "algorithm.max_iterations", "algorithm.min_iterations", "algorithm.delta",
      "algorithm.L_mod", "algorithm.N_mod", "optimizer.step_size", "optimizer.beta1", "optimizer.beta2",
      "optimizer.eps", "optimizer.degree", "optimizer.init", "seed", "posterior.S", "output.dir",
      "output.checkpoint_every", "oracle.target", "oracle.resolution", "oracle.cross_check", "oracle.mh_samples",
      "oracle.mh_burn", "oracle.proposal_std"};
  for (const auto& [key, value] : kv) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError(key + ": unknown key");
    }
  }

  // Range checks.
  if (c.algorithm == "full") {
    c.solver.algorithm = Algorithm::Full;
  } else if (c.algorithm == "reduced") {
    c.solver.algorithm = Algorithm::Reduced;
  } else if (c.algorithm == "iterative") {
    c.solver.algorithm = Algorithm::Iterative;
  } else if (c.algorithm == "iterative_mod") {
    c.solver.algorithm = Algorithm::IterativeMod;
  } else if (c.algorithm != "oracle_grid" && c.algorithm != "oracle_mcmc") {
    throw ConfigError("algorithm.name: expected full, reduced, iterative, iterative_mod, oracle_grid or oracle_mcmc, got '" +
                      c.algorithm + "'");
  }
  if (c.x_star.size() != dim) throw ConfigError("problem.x_star: expected " + std::to_string(dim) + " values");
  if (c.prior_lo.size() != dim) throw ConfigError("problem.prior_lo: expected " + std::to_string(dim) + " values");
  if (c.prior_hi.size() != dim) throw ConfigError("problem.prior_hi: expected " + std::to_string(dim) + " values");
  for (std::size_t k = 0; k < dim; ++k) {
    if (!(c.prior_lo[k] < c.prior_hi[k])) throw ConfigError("problem.prior_hi: must exceed problem.prior_lo");
    if (c.x_star[k] < c.prior_lo[k] || c.x_star[k] > c.prior_hi[k]) {
      throw ConfigError("problem.x_star: must lie inside the prior box");
    }
  }
  if (!(c.noise_level > 0.0)) throw ConfigError("problem.noise_level: must be > 0");
  if (c.d == 0) throw ConfigError("problem.d: must be >= 1");
  if (!(c.machine_a > 0.0)) throw ConfigError("problem.a: must be > 0");
  if (c.solver.s == 0) throw ConfigError("algorithm.s: must be >= 1");
  if (c.solver.m_override > c.solver.s) throw ConfigError("algorithm.m_override: must not exceed algorithm.s");
  if (c.solver.max_iterations == 0) throw ConfigError("algorithm.max_iterations: must be >= 1");
  if (!(c.solver.delta >= 0.0)) throw ConfigError("algorithm.delta: must be >= 0");
  if (c.solver.L_mod == 0) throw ConfigError("algorithm.L_mod: must be >= 1");
  if (c.solver.N_mod == 0) throw ConfigError("algorithm.N_mod: must be >= 1");
  if (!(c.solver.adam.step_size > 0.0)) throw ConfigError("optimizer.step_size: must be > 0");
  if (!(c.solver.adam.beta1 >= 0.0 && c.solver.adam.beta1 < 1.0)) throw ConfigError("optimizer.beta1: must be in [0,1)");
  if (!(c.solver.adam.beta2 >= 0.0 && c.solver.adam.beta2 < 1.0)) throw ConfigError("optimizer.beta2: must be in [0,1)");
  if (!(c.solver.adam.eps > 0.0)) throw ConfigError("optimizer.eps: must be > 0");
  if (c.solver.degree > 8) throw ConfigError("optimizer.degree: must be <= 8");
  if (c.S == 0) throw ConfigError("posterior.S: must be >= 1");
  if (c.oracle_resolution < 64) throw ConfigError("oracle.resolution: must be >= 64");
  if (c.mh_samples == 0) throw ConfigError("oracle.mh_samples: must be >= 1");
  if (!c.mh_proposal_std.empty()) {
    if (c.mh_proposal_std.size() != dim) throw ConfigError("oracle.proposal_std: expected " + std::to_string(dim) + " values");
    for (double v : c.mh_proposal_std) {
      if (!(v > 0.0)) throw ConfigError("oracle.proposal_std: must be > 0");
    }
  }
  if (c.output_dir.empty()) throw ConfigError("output.dir: must not be empty");
  return c;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_text(path)); }

InverseProblem build_problem(const ExperimentConfig& cfg) {
  ProblemSetup setup;
  setup.x_star = cfg.x_star;
  setup.noise_level = cfg.noise_level;
  setup.d = cfg.d;
  setup.zero_noise = cfg.zero_noise;
  setup.seed = cfg.solver.seed;
  setup.prior = UniformBox(cfg.prior_lo, cfg.prior_hi);
  return cfg.problem == ProblemKind::Affine ? make_affine_problem(setup) : make_machine_problem(setup, cfg.machine_a);
}

std::string resolve_output_dir(const std::string& fallback) {
  const char* env = std::getenv("OUTPUT_DIR");
  return env && *env ? std::string(env) : fallback;
}

int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  fs::path dir;
  std::optional<InverseProblem> problem;
  try {
    cfg = load_config(config_path);
    dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(dir);
    write_text(dir / "config_echo.txt", cfg.raw_text);
    problem.emplace(build_problem(cfg));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  InverseProblem& p = *problem;

  std::vector<IterationRecord> records;
  SampleBatch samples;
  PosteriorSummary summary;
  std::vector<CostRow> cost;
  std::ostringstream report;
  report << "problem: " << problem_name(cfg.problem) << '\n';
  report << "algorithm: " << cfg.algorithm << '\n';

  try {
    if (is_solver_algorithm(cfg.algorithm)) {
      if (cfg.checkpoint_every > 0) fs::create_directories(dir / "checkpoints");
      SolverHooks hooks;
      hooks.on_step = [&](const IterationRecord& r, const TriangularMap& T) {
        records.push_back(r);
        if (cfg.checkpoint_every > 0 && r.iter % cfg.checkpoint_every == 0) {
          char name[32];
          std::snprintf(name, sizeof name, "map_%06zu.txt", r.iter);
          write_text(dir / "checkpoints" / name, serialize(T));
        }
      };
      std::optional<SolverResult> solved;
      try {
        solved.emplace(run_solver(cfg.solver, p, hooks));
      } catch (const NumericError& e) {
        write_trace(dir / "trace.csv", records);
        err << "numeric abort: " << e.what() << '\n';
        return kExitNumeric;
      }
      const SolverResult& res = *solved;
      write_trace(dir / "trace.csv", records);
      write_text(dir / "map.txt", serialize(res.map));
      RngStream ps = RngStream::named(cfg.solver.seed, "posterior");
      samples = sample_posterior(res.map, cfg.S, ps, p.ledger.get());
      summary = summarize(samples, "transport");

      const CostSnapshot snap = p.ledger_snapshot();
      const std::size_t N = records.size();
      const ExpectedCost ex = expected_cost(cfg.solver, N);
      cost = {{"g_plus", snap.g_plus, ex.g_plus_formula, ex.g_plus},
              {"g_minus", snap.g_minus, ex.g_minus_formula, ex.g_minus},
              {"optimizer_steps", snap.optimizer_steps, "N", static_cast<std::uint64_t>(N)},
              {"posterior_samples_drawn", snap.posterior_samples_drawn, "S", static_cast<std::uint64_t>(cfg.S)}};
      report << "loss: " << to_string(cfg.solver.loss) << '\n';
      report << "termination: " << to_string(res.trace.termination_reason) << '\n';
      report << "iterations: " << N << '\n';
      report << "bank_size: " << bank_size(cfg.solver) << '\n';
    } else if (cfg.algorithm == "oracle_grid") {
      const GridDensity g = oracle_grid(cfg, p, cfg.oracle_target);
      RngStream ps = RngStream::named(cfg.solver.seed, "posterior");
      samples = sample_grid(g, cfg.S, ps);
      p.ledger->add_posterior_samples(cfg.S);
      summary = summarize(g);
      write_trace(dir / "trace.csv", records);
      const CostSnapshot snap = p.ledger_snapshot();
      cost = {{"g_plus", snap.g_plus, "0", 0},
              {"g_minus", snap.g_minus, "0", 0},
              {"optimizer_steps", snap.optimizer_steps, "0", 0},
              {"posterior_samples_drawn", snap.posterior_samples_drawn, "S", static_cast<std::uint64_t>(cfg.S)}};
      report << "oracle_target: " << to_string(cfg.oracle_target) << '\n';
      report << "resolution: " << cfg.oracle_resolution << '\n';
    } else {
      const MhResult mh = run_mh(cfg, p, cfg.oracle_target);
      samples = mh.samples;
      p.ledger->add_posterior_samples(cfg.mh_samples);
      summary = summarize(samples, "mcmc");
      write_trace(dir / "trace.csv", records);
      const CostSnapshot snap = p.ledger_snapshot();
      // Proposals outside the prior box never reach the model.
      const auto evals = static_cast<std::uint64_t>(1 + cfg.mh_burn + cfg.mh_samples - mh.rejected_outside);
      const bool exact = cfg.oracle_target == OracleTarget::Exact;
      const char* f = "1+burn+samples-outside";
      cost = {{"g_plus", snap.g_plus, exact ? f : "0", exact ? evals : 0},
              {"g_minus", snap.g_minus, exact ? "0" : f, exact ? 0 : evals},
              {"optimizer_steps", snap.optimizer_steps, "0", 0},
              {"posterior_samples_drawn", snap.posterior_samples_drawn, "samples",
               static_cast<std::uint64_t>(cfg.mh_samples)}};
      report << "oracle_target: " << to_string(cfg.oracle_target) << '\n';
      report << "acceptance_rate: " << fmt17(mh.acceptance_rate) << '\n';
      report << "proposals_outside: " << mh.rejected_outside << '\n';
      for (const std::string& w : mh.warnings) {
        report << "warning: " << w << '\n';
        err << "warning: " << w << '\n';
      }
    }

    std::ostringstream sum;
    sum << kSummaryHeader;
    append_summary_rows(sum, summary);
    const Vector sd = summary.stddev();
    for (std::size_t k = 0; k < summary.mean.size(); ++k) {
      report << "mean_" << (k + 1) << ": " << fmt17(summary.mean[k]) << '\n';
      report << "std_" << (k + 1) << ": " << fmt17(sd[k]) << '\n';
    }
    if (cfg.oracle_cross_check) {
      PosteriorSummary ref = summarize(oracle_grid(cfg, p, cross_check_target(cfg)));
      ref.source = "grid_" + to_string(cross_check_target(cfg));
      append_summary_rows(sum, ref);
      double worst = 0.0;
      for (std::size_t k = 0; k < ref.mean.size(); ++k) worst = std::max(worst, std::abs(ref.mean[k] - summary.mean[k]));
      report << "cross_check_target: " << to_string(cross_check_target(cfg)) << '\n';
      report << "cross_check_max_mean_diff: " << fmt17(worst) << '\n';
    }
    write_text(dir / "summary.csv", sum.str());
    write_samples(dir / "samples.csv", samples);
    write_cost(dir / "cost.csv", cost);
    bool mismatch = false;
    for (const CostRow& r : cost) {
      report << r.counter << ": " << r.value << " (expected " << r.expected << " = " << r.formula << ")\n";
      mismatch = mismatch || r.value != r.expected;
    }
    report << "cost_check: " << (mismatch ? "MISMATCH" : "ok") << '\n';
    write_text(dir / "report.txt", report.str());
    out << report.str();
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_oracle(const std::string& config_path, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = load_config(config_path);
    const fs::path dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(dir);
    write_text(dir / "config_echo.txt", cfg.raw_text);
    const InverseProblem p = build_problem(cfg);
    std::ostringstream sum;
    sum << kSummaryHeader;
    for (OracleTarget t : {OracleTarget::Exact, OracleTarget::Reduced, OracleTarget::FixedPoint}) {
      const GridDensity g = oracle_grid(cfg, p, t);
      std::ostringstream csv;
      write_grid_csv(csv, g);
      write_text(dir / ("grid_" + to_string(t) + ".csv"), csv.str());
      PosteriorSummary s = summarize(g);
      s.source = "grid_" + to_string(t);
      append_summary_rows(sum, s);
      if (cfg.oracle_cross_check) {
        PosteriorSummary m = summarize(run_mh(cfg, p, t).samples, "mcmc_" + to_string(t));
        append_summary_rows(sum, m);
      }
    }
    write_text(dir / "oracle_summary.csv", sum.str());
    out << sum.str();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_bias_demo(const BiasDemoConfig& cfg, const std::string& output_dir, std::ostream& out, std::ostream& err) {
  try {
    const BiasDemoCurves c = run_bias_demo(cfg);
    const fs::path dir = resolve_output_dir(output_dir);
    fs::create_directories(dir);
    std::ostringstream csv;
    write_bias_csv(csv, c);
    write_text(dir / "bias_demo.csv", csv.str());

    Vector abs_w(c.w.size());
    for (std::size_t i = 0; i < c.w.size(); ++i) abs_w[i] = std::abs(c.w[i]);
    const auto j = argmax_scan(c.w, c.j_mean);
    const auto st = argmax_scan(c.w, c.star_mean);
    const auto jc = argmax_scan(c.w, c.j_closed);
    const auto sc = argmax_scan(c.w, c.star_closed);
    bool dominance = true;
    for (std::size_t i = 0; i < c.w.size(); ++i) dominance = dominance && c.j_closed[i] <= c.star_closed[i];
    std::ostringstream rep;
    rep << "s: " << cfg.s << "\nruns: " << cfg.runs << '\n';
    rep << "argmax_I_J_mc: " << fmt17(j.first) << '\n';
    rep << "argmax_I_star_nmc: " << fmt17(st.first) << '\n';
    rep << "argmax_I_J_closed: " << fmt17(jc.first) << '\n';
    rep << "argmax_I_star_closed: " << fmt17(sc.first) << '\n';
    rep << "closed_form_dominance: " << (dominance ? "ok" : "violated") << '\n';
    write_text(dir / "bias_summary.txt", rep.str());
    out << rep.str();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ContractViolation& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_cost_report(const std::vector<std::string>& trace_paths, std::ostream& out, std::ostream& err) {
  out << "file,algorithm,N,s,s_bank,L_mod,N_mod,g_plus,g_plus_expected,g_plus_formula,g_minus,g_minus_expected,"
         "g_minus_formula,S,status\n";
  int code = kExitOk;
  for (const std::string& path : trace_paths) {
    try {
      const std::string text = read_text(path);
      std::istringstream is(text);
      std::string line;
      if (!std::getline(is, line) || trim(line) != kTraceHeader) throw ConfigError("missing trace header");
      std::size_t rows = 0;
      std::uint64_t trace_plus = 0, trace_minus = 0;
      while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cols.push_back(c);
        if (cols.size() != 5) throw ConfigError("trace row " + std::to_string(rows + 1) + " has " +
                                                std::to_string(cols.size()) + " columns");
        trace_plus = to_u64("g_plus", trim(cols[2]));
        trace_minus = to_u64("g_minus", trim(cols[3]));
        ++rows;
      }
      const fs::path dir = fs::path(path).parent_path();
      const ExperimentConfig cfg = parse_config(read_text(dir / "config_echo.txt"));
      // counter -> (value, formula, expected) from the run's final counters.
      struct Logged {
        std::uint64_t value = 0, expected = 0;
        std::string formula;
      };
      std::map<std::string, Logged> logged;
      {
        std::istringstream cs(read_text(dir / "cost.csv"));
        std::getline(cs, line);
        while (std::getline(cs, line)) {
          if (trim(line).empty()) continue;
          std::vector<std::string> cols;
          std::stringstream ls(line);
          std::string c;
          while (std::getline(ls, c, ',')) cols.push_back(c);
          if (cols.size() != 4) throw ConfigError("cost.csv row has " + std::to_string(cols.size()) + " columns");
          logged[cols[0]] = {to_u64(cols[0], trim(cols[1])), to_u64(cols[0], trim(cols[3])), cols[2]};
        }
      }
      for (const char* k : {"g_plus", "g_minus", "posterior_samples_drawn"}) {
        if (!logged.count(k)) throw ConfigError(std::string("cost.csv has no ") + k + " row");
      }
      const Logged& gp = logged["g_plus"];
      const Logged& gm = logged["g_minus"];
      const std::uint64_t S = logged["posterior_samples_drawn"].value;
      out << path << ',' << cfg.algorithm << ',' << rows << ',' << cfg.solver.s << ',';
      if (!is_solver_algorithm(cfg.algorithm)) {
        const bool ok = gp.value == gp.expected && gm.value == gm.expected;
        out << "-,-,-," << gp.value << ',' << gp.expected << ',' << gp.formula << ',' << gm.value << ','
            << gm.expected << ',' << gm.formula << ',' << S << ',' << (ok ? "ok" : "MISMATCH") << '\n';
        continue;
      }
      const ExpectedCost ex = expected_cost(cfg.solver, rows);
      const bool mod = cfg.solver.algorithm == Algorithm::IterativeMod;
      // Sampling never touches g_plus/g_minus, so the last trace row must match the final counters.
      const bool consistent = rows == 0 || (trace_plus == gp.value && trace_minus == gm.value);
      const bool ok = consistent && ex.g_plus == gp.value && ex.g_minus == gm.value;
      out << bank_size(cfg.solver) << ',' << (mod ? std::to_string(cfg.solver.L_mod) : "-") << ','
          << (mod ? std::to_string(cfg.solver.N_mod) : "-") << ',' << gp.value << ',' << ex.g_plus << ','
          << ex.g_plus_formula << ',' << gm.value << ',' << ex.g_minus << ',' << ex.g_minus_formula << ',' << S << ','
          << (ok ? "ok" : "MISMATCH") << '\n';
    } catch (const std::exception& e) {
      err << path << ": " << e.what() << '\n';
      out << path << ",error,,,,,,,,,,,,,\n";
      code = kExitConfig;
    }
  }
  return code;
}

}  // namespace tmerr::cli
