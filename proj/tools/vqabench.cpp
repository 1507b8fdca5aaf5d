// vqabench: sweeps fusion/attention/feature configurations, measures their
// complexity, joins published-accuracy fixtures and reports the
// maximum-efficiency frontier.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vqafusion/fusion_gradcheck.hpp"
#include "vqafusion/sweep.hpp"
#include "vqafusion/toy.hpp"
#include "vqafusion/vqafusion.hpp"

namespace {

constexpr const char* kDefaultsTable = R"(Default hyperparameters:
  features   d_q=2400, answers |A|=3000 (use --answers 1460 for TDIUC)
  profiles   InceptionV4 (d_v=1536, G=144 SG), ResNet152 (2048, 196),
             ResNext101 (2048, 196), SeNet154 (2048, 196), PolyNet (2048, 144),
             BU (2048, 36); -IL variants pool to G=1
  attention  glimpses t=2, nonlinearity tanh
  Linear     intermediate=1000     C-MLP   hidden=1600, 3 layers
  MCB        D=16000               MLB     d_z=1200
  MFB        k=5, d_z=1000         MFH     m=2, k=5, d_z=1000
  Mutan      R=10, d_z=700, d_pv=d_pq=300
  Block      rank=15, d_z=1600, n=18, d_pv=d_pq=1600
Exit codes: 0 ok, 1 configuration error, 2 I/O or parse error, 3 internal
invariant failure.)";

std::vector<std::string> expand_profiles(std::vector<std::string> names) {
  if (names.size() == 1 && names[0] == "all") {
    names.clear();
    for (const auto& p : vqaf::profile_catalog()) names.push_back(p.name);
  }
  return names;
}

std::vector<vqaf::FusionKind> expand_fusions(
    const std::vector<std::string>& names) {
  std::vector<vqaf::FusionKind> kinds;
  if (names.size() == 1 && names[0] == "all") return vqaf::all_fusion_kinds();
  for (const auto& n : names) kinds.push_back(vqaf::parse_fusion_kind(n));
  return kinds;
}

vqaf::FlopConvention parse_convention(const std::string& s) {
  vqaf::FlopConvention conv;
  if (s == "default" || s == conv.id()) return conv;
  if (s.rfind("mac1", 0) == 0) {
    conv.macs_as_two = false;
    if (s == "mac1" || s == conv.id()) return conv;
  }
  throw vqaf::ConfigError("unknown convention '" + s +
                          "' (valid: default, mac1, " +
                          vqaf::FlopConvention().id() + ")");
}

vqaf::EmitFormat format_for_path(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
    return vqaf::EmitFormat::Csv;
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
    return vqaf::EmitFormat::Json;
  throw vqaf::ConfigError("output path '" + path +
                          "' must end in .csv or .json");
}

struct CommonOpts {
  std::vector<std::string> profiles{"all"};
  std::vector<std::string> fusions{"all"};
  std::string attention = "both";
  std::string dtype = "f64";
  std::string convention = "default";
  std::uint64_t seed = 42;
  std::size_t answers = 3000;
  std::size_t jobs = 1;
  std::size_t batch = 64;
  bool timing = false;
};

void add_sweep_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--profiles", o.profiles,
                  "Feature profiles (names or 'all')")
      ->delimiter(',');
  cmd->add_option("--fusions", o.fusions, "Fusion kinds (names or 'all')")
      ->delimiter(',');
  cmd->add_option("--attention", o.attention, "none, co or both")
      ->check(CLI::IsMember({"none", "co", "both"}));
  cmd->add_option("--dtype", o.dtype, "f64 or f32")
      ->check(CLI::IsMember({"f64", "f32"}));
  cmd->add_option("--seed", o.seed, "Base seed; each configuration derives "
                                    "its own");
  cmd->add_option("--answers", o.answers, "Candidate answer count");
  cmd->add_option("--convention", o.convention, "FLOP convention id");
  cmd->add_option("--jobs", o.jobs, "Parallel workers (timing forces 1)");
  cmd->add_option("--batch", o.batch, "Mini-batch size for the timing "
                                      "protocol");
  cmd->add_flag("--timing", o.timing, "Run the wall-clock protocol per "
                                      "configuration (serial)");
}

vqaf::SweepConfig to_sweep_config(const CommonOpts& o) {
  vqaf::SweepConfig cfg;
  cfg.profiles = expand_profiles(o.profiles);
  cfg.fusions = expand_fusions(o.fusions);
  cfg.attention = o.attention == "none" ? vqaf::SweepConfig::Attention::None
                  : o.attention == "co" ? vqaf::SweepConfig::Attention::Co
                                        : vqaf::SweepConfig::Attention::Both;
  cfg.dtype = o.dtype;
  cfg.seed = o.seed;
  cfg.answers = o.answers;
  cfg.timing = o.timing;
  cfg.convention = parse_convention(o.convention);
  cfg.jobs = o.jobs;
  cfg.protocol.batch = o.batch;
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{std::string("vqabench: accuracy-vs-complexity benchmark "
                           "harness for multimodal fusion operators.\n\n") +
               kDefaultsTable};
  app.require_subcommand(1);

  // ---- sweep ----
  CommonOpts sweep_opts;
  std::string sweep_out;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Measure parameter/FLOP/time complexity per configuration");
  add_sweep_options(sweep, sweep_opts);
  sweep->add_option("--out", sweep_out, "Output path (.csv or .json)")
      ->required();

  // ---- tradeoff ----
  CommonOpts trade_opts;
  std::string trade_out, trade_fixture, trade_axis = "params";
  CLI::App* tradeoff = app.add_subcommand(
      "tradeoff", "Join a sweep with an accuracy fixture into trade-off "
                  "points");
  add_sweep_options(tradeoff, trade_opts);
  tradeoff->add_option("--fixture", trade_fixture, "Accuracy fixture CSV")
      ->required();
  tradeoff->add_option("--axis", trade_axis, "params or flops")
      ->check(CLI::IsMember({"params", "flops"}));
  tradeoff->add_option("--out", trade_out, "Output path (.csv or .json)")
      ->required();

  // ---- frontier ----
  std::string front_in, front_out, front_axis = "params";
  CLI::App* frontier = app.add_subcommand(
      "frontier", "Maximum-efficiency (Pareto) subset of a points file");
  frontier->add_option("--in", front_in, "Points CSV from 'tradeoff'")
      ->required();
  frontier->add_option("--axis", front_axis, "params or flops")
      ->check(CLI::IsMember({"params", "flops"}));
  frontier->add_option("--out", front_out, "Output path (.csv or .json)")
      ->required();

  // ---- gradcheck ----
  std::vector<std::string> gc_fusions{"all"};
  std::uint64_t gc_seed = 42;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Verify analytic backward passes against central "
                   "finite differences");
  gradcheck->add_option("--fusions", gc_fusions, "Fusion kinds or 'all'")
      ->delimiter(',');
  gradcheck->add_option("--seed", gc_seed, "Base seed");

  // ---- traintoy ----
  std::vector<std::string> toy_fusions{"all"};
  std::uint64_t toy_seed = 42;
  std::size_t toy_steps = 200;
  double toy_lr = -1.0;
  CLI::App* traintoy = app.add_subcommand(
      "traintoy", "Gradient-descend each fusion kind on planted labels at "
                  "small dimensions");
  traintoy->add_option("--fusions", toy_fusions, "Fusion kinds or 'all'")
      ->delimiter(',');
  traintoy->add_option("--steps", toy_steps, "Training steps");
  traintoy->add_option("--lr", toy_lr,
                       "Learning rate (negative = per-kind default)");
  traintoy->add_option("--seed", toy_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  if (sweep->parsed()) {
    auto reports = vqaf::run_sweep(to_sweep_config(sweep_opts), &std::cerr);
    vqaf::emit_reports(reports, format_for_path(sweep_out), sweep_out);
    std::cerr << "wrote " << reports.size() << " reports to " << sweep_out
              << "\n";
    return 0;
  }

  if (tradeoff->parsed()) {
    auto reports = vqaf::run_sweep(to_sweep_config(trade_opts), &std::cerr);
    auto fixture = vqaf::parse_fixture_csv(trade_fixture);
    auto joined = vqaf::join_tradeoff(reports, fixture,
                                      vqaf::parse_axis(trade_axis));
    vqaf::emit_points(joined, format_for_path(trade_out), trade_out);
    std::cerr << "joined " << joined.points.size() << " points ("
              << joined.unmatched_reports.size() << " reports and "
              << joined.unmatched_fixture.size()
              << " fixture rows unmatched) to " << trade_out << "\n";
    return 0;
  }

  if (frontier->parsed()) {
    const vqaf::ComplexityAxis axis = vqaf::parse_axis(front_axis);
    vqaf::JoinResult points = vqaf::parse_points_csv(front_in, axis);
    vqaf::JoinResult result;
    result.points = vqaf::efficiency_frontier(points.points);
    vqaf::emit_points(result, format_for_path(front_out), front_out,
                      /*preserve_order=*/true);
    std::cerr << "frontier keeps " << result.points.size() << " of "
              << points.points.size() << " points\n";
    return 0;
  }

  if (gradcheck->parsed()) {
    bool ok = true;
    const auto wanted = expand_fusions(gc_fusions);
    for (const vqaf::FusionSpec& spec : vqaf::gradcheck_specs(gc_seed)) {
      bool selected = false;
      for (auto k : wanted) selected |= k == spec.kind;
      if (!selected) continue;
      double worst = 0;
      std::string slot;
      for (std::uint64_t trial = 0; trial < 3; ++trial) {
        auto report = vqaf::gradcheck_fusion<double>(spec, gc_seed + trial);
        if (report.worst_rel_err > worst) {
          worst = report.worst_rel_err;
          slot = report.worst_slot;
        }
      }
      const bool pass = worst <= 1e-5;
      ok &= pass;
      std::printf("%-6s  max rel err %.3e (%s)  %s\n",
                  vqaf::fusion_kind_name(spec.kind).c_str(), worst,
                  slot.c_str(), pass ? "ok" : "FAIL");
    }
    return ok ? 0 : 3;
  }

  if (traintoy->parsed()) {
    bool ok = true;
    for (auto kind : expand_fusions(toy_fusions)) {
      const double lr =
          toy_lr < 0 ? vqaf::toy_learning_rate(kind) : toy_lr;
      const auto trace =
          vqaf::toy_train_run<double>(kind, toy_steps, lr, toy_seed);
      const double initial = trace.front(), final_loss = trace.back();
      const bool halved = final_loss < 0.5 * initial;
      ok &= halved;
      std::printf("%-6s  loss %.4f -> %.4f over %zu steps  %s\n",
                  vqaf::fusion_kind_name(kind).c_str(), initial, final_loss,
                  toy_steps, halved ? "ok" : "FAIL (not halved)");
    }
    return ok ? 0 : 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vqaf::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const vqaf::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const vqaf::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const vqaf::DimensionError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const vqaf::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const vqaf::Error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
