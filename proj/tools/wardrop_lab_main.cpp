// wardrop-lab: command-line front end for the OD-matrix balancer, the
// apartment-exchange chain, the equilibrium solvers, and the route-choice
// dynamics. One subcommand per model; all outputs are deterministic JSON
// or CSV with 12 significant digits.

#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wardrop_lab/beckmann.hpp"
#include "wardrop_lab/core.hpp"
#include "wardrop_lab/dynamics.hpp"
#include "wardrop_lab/exchange_chain.hpp"
#include "wardrop_lab/io.hpp"
#include "wardrop_lab/network.hpp"
#include "wardrop_lab/od_entropy.hpp"

namespace {

using wlab::ErrorCode;
using wlab::fail;

const char* kUsage = R"(usage: wardrop-lab <subcommand> <input-file> [key value]...

subcommands
  od-balance <file.zones>   [tol <r>] [maxiter <k>] [output <path>]
  exchange-sim <file.zones> [pL <r>] [seed <u64>] [steps <k>] [stride <k>]
                            [csv <path>] [report <path>] [lambdas <r,r,...>]
  equilibrium <file.net>    [tol <r>] [maxiter <k>] [output <path>]
  dynamics <file.net>       [T <r>] [schedule <harmonic g0 | constant g | sqrt a>]
                            [seed <u64>] [steps <k>] [stride <k>] [csv <path>]
  averaging <file.net>      [T <r>] [alpha <r>] [N <k>] [replicas <k>]
                            [seed <u64>] [omegas <r,r,...>] [output <path>]
  compare-projection <file.net> [T <r>] [steps <k>] [seed <u64>] [inits <k>]
                            [tol <r>] [csv <path>]

Results go to stdout unless an output/csv path is given. `#` starts a
comment in both input formats. Exit codes: 0 ok, 2 parse error, 3 solver
did not converge, 4 precondition violated.
)";

struct Args {
  std::string subcommand;
  std::string input;
  std::map<std::string, std::string> kv;
  std::string schedule_kind;
  std::string schedule_param;

  bool has(const std::string& key) const { return kv.count(key) != 0; }

  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
  }

  double real(const std::string& key, double dflt) const {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    return wlab::io::detail::to_real(it->second, "<arg " + key + ">", 0);
  }

  long long count(const std::string& key, long long dflt) const {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    return wlab::io::detail::to_count(it->second, "<arg " + key + ">", 0);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t dflt) const {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    return wlab::io::detail::to_u64(it->second, "<arg " + key + ">", 0);
  }
};

Args parse_args(int argc, char** argv) {
  if (argc < 3) fail(ErrorCode::ParseError, "missing subcommand or input file");
  Args a;
  a.subcommand = argv[1];
  a.input = argv[2];
  int i = 3;
  while (i < argc) {
    const std::string key = argv[i];
    if (key == "schedule") {
      if (i + 2 >= argc)
        fail(ErrorCode::ParseError, "schedule needs a kind and a parameter");
      a.schedule_kind = argv[i + 1];
      a.schedule_param = argv[i + 2];
      i += 3;
      continue;
    }
    if (i + 1 >= argc)
      fail(ErrorCode::ParseError, "key '" + key + "' is missing its value");
    if (!a.kv.emplace(key, argv[i + 1]).second)
      fail(ErrorCode::ParseError, "duplicate key '" + key + "'");
    i += 2;
  }
  return a;
}

std::vector<double> parse_real_list(const std::string& text,
                                    const std::string& what) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    out.push_back(wlab::io::detail::to_real(item, "<arg " + what + ">", 0));
  if (out.empty()) fail(ErrorCode::ParseError, what + " list is empty");
  return out;
}

void emit(const Args& a, const std::string& key, const std::string& text) {
  const std::string path = a.str(key, "");
  if (path.empty())
    std::cout << text;
  else
    wlab::io::write_text(path, text);
}

std::vector<long long> integral_marginals(const std::vector<double>& v,
                                          const char* what) {
  std::vector<long long> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::llround(v[i]);
    if (std::abs(v[i] - static_cast<double>(out[i])) > 1e-9)
      fail(ErrorCode::DomainError,
           std::string("exchange simulation needs integer ") + what);
  }
  return out;
}

// ---------------------------------------------------------------- od-balance

int cmd_od_balance(const Args& a) {
  const auto zf = wlab::io::parse_zone_file(a.input);
  const double tol = a.real("tol", 1e-10);
  const int maxiter = static_cast<int>(a.count("maxiter", 100000));
  const auto res = wlab::od::balance(zf.data, tol, maxiter);

  std::ostringstream out;
  out << "{\n";
  out << "  \"X\": " << wlab::io::json_matrix(res.flows) << ",\n";
  out << "  \"lambdaL\": " << wlab::io::json_array(res.dual_row) << ",\n";
  out << "  \"lambdaW\": " << wlab::io::json_array(res.dual_col) << ",\n";
  out << "  \"residual\": " << wlab::io::fmt(res.residual) << ",\n";
  out << "  \"iterations\": " << res.iterations << "\n";
  out << "}\n";
  emit(a, "output", out.str());
  return 0;
}

// -------------------------------------------------------------- exchange-sim

int cmd_exchange_sim(const Args& a) {
  const auto zf = wlab::io::parse_zone_file(a.input);
  wlab::chain::ChainConfig cfg;
  if (zf.chain) {
    cfg.base_rate = zf.chain->base_rate;
    cfg.seed = zf.chain->seed;
    cfg.steps = zf.chain->steps;
  }
  cfg.cost = zf.data.cost;
  cfg.base_rate = a.real("pL", cfg.base_rate);
  cfg.seed = a.u64("seed", cfg.seed);
  cfg.steps = a.count("steps", cfg.steps);
  if (!(cfg.base_rate > 0.0))
    fail(ErrorCode::DomainError, "pL must be positive");
  if (cfg.steps < 0) fail(ErrorCode::DomainError, "steps must be >= 0");
  const long long stride = a.count("stride", 1);
  if (stride < 1) fail(ErrorCode::DomainError, "stride must be >= 1");

  const auto residents = integral_marginals(zf.data.residents, "residents");
  const auto workers = integral_marginals(zf.data.workers, "workers");

  std::ostringstream csv;
  csv << "step,i,j,count\n";
  auto dump = [&](const wlab::chain::ChainState& st) {
    for (std::size_t i = 0; i < st.counts.rows(); ++i)
      for (std::size_t j = 0; j < st.counts.cols(); ++j)
        csv << st.time << ',' << i + 1 << ',' << j + 1 << ','
            << st.counts(i, j) << '\n';
  };
  wlab::chain::ChainState st{wlab::chain::initial_state(residents, workers), 0};
  dump(st);
  wlab::chain::run_chain(st, cfg, [&](const wlab::chain::ChainState& s) {
    if (s.time % stride == 0 || s.time == cfg.steps) dump(s);
  });
  emit(a, "csv", csv.str());

  if (a.has("report")) {
    const std::vector<double> lambdas =
        a.has("lambdas")
            ? parse_real_list(a.str("lambdas", ""), "lambdas")
            : std::vector<double>{0.5, 1, 1.5, 2, 2.5, 3, 4, 5};
    const auto rep =
        wlab::chain::concentration_report(cfg, residents, workers, lambdas);
    std::ostringstream out;
    out << "{\n";
    out << "  \"m\": " << wlab::io::fmt(rep.zone_scale) << ",\n";
    out << "  \"x_star\": " << wlab::io::json_matrix(rep.x_star) << ",\n";
    out << "  \"lambda\": " << wlab::io::json_array(rep.lambdas) << ",\n";
    out << "  \"coverage\": " << wlab::io::json_array(rep.coverage) << ",\n";
    out << "  \"witness_lambda\": "
        << (rep.witness_found ? wlab::io::fmt(rep.witness_lambda) : "null")
        << ",\n";
    out << "  \"deterministic_checked\": "
        << (rep.deterministic_checked ? "true" : "false") << ",\n";
    out << "  \"deterministic_states\": " << rep.deterministic_states << ",\n";
    out << "  \"deterministic_violation\": "
        << wlab::io::fmt(rep.deterministic_violation) << "\n";
    out << "}\n";
    wlab::io::write_text(a.str("report", ""), out.str());
  }
  return 0;
}

// --------------------------------------------------------------- equilibrium

std::string equilibrium_json(const wlab::net::Network& n,
                             const wlab::net::RouteSet& rs,
                             const wlab::beck::EquilibriumResult& res) {
  std::vector<std::size_t> edge_order(n.edges.size());
  for (std::size_t e = 0; e < edge_order.size(); ++e) edge_order[e] = e;
  std::sort(edge_order.begin(), edge_order.end(),
            [&](std::size_t l, std::size_t r) {
              return n.edges[l].id < n.edges[r].id;
            });
  std::ostringstream out;
  out << "{\n  \"x\": {";
  for (std::size_t p = 0; p < rs.size(); ++p) {
    if (p) out << ", ";
    out << '"' << rs.routes[p].id << "\": " << wlab::io::fmt(res.x[p]);
  }
  out << "},\n  \"y\": {";
  for (std::size_t i = 0; i < edge_order.size(); ++i) {
    if (i) out << ", ";
    out << '"' << n.edges[edge_order[i]].id
        << "\": " << wlab::io::fmt(res.y[edge_order[i]]);
  }
  out << "},\n";
  out << "  \"psi\": " << wlab::io::fmt(res.psi) << ",\n";
  out << "  \"gap\": " << wlab::io::fmt(res.gap) << ",\n";
  out << "  \"iterations\": " << res.iterations << "\n}\n";
  return out.str();
}

int cmd_equilibrium(const Args& a) {
  const auto nf = wlab::io::parse_network_file(a.input);
  const auto rs = wlab::io::route_set_of(nf);
  wlab::beck::SolveOptions opt;
  opt.tol = a.real("tol", 1e-8);
  opt.max_iter = static_cast<int>(a.count("maxiter", 200000));
  const auto res = wlab::beck::solve_equilibrium(nf.network, rs, opt);
  emit(a, "output", equilibrium_json(nf.network, rs, res));
  return 0;
}

// ------------------------------------------------------------------ dynamics

wlab::dyn::GammaSchedule schedule_from(const Args& a, long long steps) {
  if (a.schedule_kind.empty()) return wlab::dyn::GammaSchedule::harmonic(1.0);
  const double p =
      wlab::io::detail::to_real(a.schedule_param, "<arg schedule>", 0);
  if (a.schedule_kind == "harmonic")
    return wlab::dyn::GammaSchedule::harmonic(p);
  if (a.schedule_kind == "constant")
    return wlab::dyn::GammaSchedule::constant(p);
  if (a.schedule_kind == "sqrt")
    return wlab::dyn::GammaSchedule::sqrt_horizon(p, steps);
  fail(ErrorCode::ParseError,
       "unknown schedule '" + a.schedule_kind + "' (harmonic|constant|sqrt)");
}

int cmd_dynamics(const Args& a) {
  const auto nf = wlab::io::parse_network_file(a.input);
  const auto rs = wlab::io::route_set_of(nf);
  wlab::dyn::DynamicsConfig cfg;
  cfg.T = a.real("T", 1.0);
  cfg.steps = a.count("steps", 1000);
  cfg.schedule = schedule_from(a, cfg.steps);
  cfg.seed = a.u64("seed", 0);
  const long long stride = a.count("stride", 1);

  const auto rec = wlab::dyn::run(nf.network, rs, cfg, stride);
  std::ostringstream csv;
  csv << "n,route_id,count,psi,gap\n";
  for (const auto& pt : rec.points)
    for (std::size_t p = 0; p < pt.counts.size(); ++p)
      csv << pt.n << ',' << rs.routes[p].id << ',' << pt.counts[p] << ','
          << wlab::io::fmt(pt.psi) << ',' << wlab::io::fmt(pt.gap) << '\n';
  emit(a, "csv", csv.str());
  return 0;
}

// ----------------------------------------------------------------- averaging

int cmd_averaging(const Args& a) {
  const auto nf = wlab::io::parse_network_file(a.input);
  const auto rs = wlab::io::route_set_of(nf);
  const double temperature = a.real("T", 1.0);
  const double alpha = a.real("alpha", 1.0);
  const long long n_total = a.count("N", 10000);
  const int replicas = static_cast<int>(a.count("replicas", 200));
  const std::uint64_t seed = a.u64("seed", 0);
  const std::vector<double> omegas =
      a.has("omegas") ? parse_real_list(a.str("omegas", ""), "omegas")
                      : std::vector<double>{0, 1, 2, 3, 4, 5, 7, 10};

  const auto rep = wlab::dyn::averaging_estimate(
      nf.network, rs, temperature, alpha, n_total, replicas, omegas, seed);
  std::ostringstream out;
  out << "{\n";
  out << "  \"gamma\": " << wlab::io::fmt(rep.gamma) << ",\n";
  out << "  \"psi_min\": " << wlab::io::fmt(rep.psi_min) << ",\n";
  out << "  \"omegas\": " << wlab::io::json_array(rep.omegas) << ",\n";
  out << "  \"tail_freq\": " << wlab::io::json_array(rep.tail_freq) << ",\n";
  out << "  \"c_hat\": " << wlab::io::fmt(rep.c_hat) << ",\n";
  out << "  \"monotone\": " << (rep.monotone ? "true" : "false") << ",\n";
  out << "  \"exponential_decay\": "
      << (rep.exponential_decay ? "true" : "false") << ",\n";
  out << "  \"deviations\": " << wlab::io::json_array(rep.deviations) << "\n";
  out << "}\n";
  emit(a, "output", out.str());
  return 0;
}

// -------------------------------------------------------- compare-projection

// Equilibrium route flows, their entropy path decomposition, and where the
// stochastic dynamics actually lands from a few pure initial assignments:
// one table, one row per route.
int cmd_compare_projection(const Args& a) {
  const auto nf = wlab::io::parse_network_file(a.input);
  const auto rs = wlab::io::route_set_of(nf);
  const double temperature = a.real("T", 1.0);
  const long long steps = a.count("steps", 100000);
  const std::uint64_t seed = a.u64("seed", 0);
  const double tol = a.real("tol", 1e-9);
  long long inits = a.count("inits", 3);
  if (inits < 1) fail(ErrorCode::DomainError, "inits must be >= 1");

  const auto eq = wlab::beck::solve_equilibrium(nf.network, rs, tol);
  const auto proj =
      wlab::beck::entropy_path_projection(nf.network, rs, eq.y, 1e-10);

  const auto demands = wlab::dyn::integer_demands(nf.network);
  std::vector<std::vector<double>> limits;
  for (long long v = 0; v < inits; ++v) {
    std::vector<long long> start(rs.size(), 0);
    for (std::size_t w = 0; w < nf.network.od_pairs.size(); ++w) {
      const auto& block = rs.by_od[w];
      if (block.empty()) continue;
      start[block[static_cast<std::size_t>(v) % block.size()]] = demands[w];
    }
    wlab::dyn::DynamicsConfig cfg;
    cfg.T = temperature;
    cfg.schedule = wlab::dyn::GammaSchedule::harmonic(1.0);
    cfg.seed = wlab::splitmix64(seed + static_cast<std::uint64_t>(v));
    cfg.steps = steps;
    const auto rec = wlab::dyn::run(nf.network, rs, cfg, steps, start);
    const auto& last = rec.points.back().counts;
    limits.emplace_back(last.begin(), last.end());
  }

  std::ostringstream csv;
  csv << "route_id,equilibrium,projection";
  for (long long v = 0; v < inits; ++v) csv << ",dynamics" << v;
  csv << '\n';
  for (std::size_t p = 0; p < rs.size(); ++p) {
    csv << rs.routes[p].id << ',' << wlab::io::fmt(eq.x[p]) << ','
        << wlab::io::fmt(proj[p]);
    for (const auto& lim : limits) csv << ',' << wlab::io::fmt(lim[p]);
    csv << '\n';
  }
  emit(a, "csv", csv.str());
  return 0;
}

int dispatch(const Args& a) {
  if (a.subcommand == "od-balance") return cmd_od_balance(a);
  if (a.subcommand == "exchange-sim") return cmd_exchange_sim(a);
  if (a.subcommand == "equilibrium") return cmd_equilibrium(a);
  if (a.subcommand == "dynamics") return cmd_dynamics(a);
  if (a.subcommand == "averaging") return cmd_averaging(a);
  if (a.subcommand == "compare-projection") return cmd_compare_projection(a);
  fail(ErrorCode::ParseError, "unknown subcommand '" + a.subcommand + "'");
}

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError:
      return 2;
    case ErrorCode::NonConvergence:
      return 3;
    default:
      return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2 && (std::string(argv[1]) == "-h" ||
                    std::string(argv[1]) == "--help" ||
                    std::string(argv[1]) == "help")) {
    std::cout << kUsage;
    return 0;
  }
  try {
    return dispatch(parse_args(argc, argv));
  } catch (const wlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
