#pragma once

#include <future>
#include <ostream>
#include <string>
#include <vector>

#include "vqafusion/complexity.hpp"
#include "vqafusion/tradeoff.hpp"

namespace vqaf {

struct SweepConfig {
  std::vector<std::string> profiles;  // catalog names
  std::vector<FusionKind> fusions;
  enum class Attention { None, Co, Both } attention = Attention::Both;
  std::string dtype = "f64";
  std::uint64_t seed = 42;
  std::size_t answers = 3000;
  bool timing = false;
  FlopConvention convention;
  TimingProtocol protocol;
  // worker count for building configurations; timing runs force 1 so the
  // measured configuration owns the machine
  std::size_t jobs = 1;
};

namespace detail {

struct SweepEntry {
  const FeatureProfile* profile;
  FusionKind kind;
  AttentionPath path;
  std::uint64_t seed;
};

template <typename T>
ComplexityReport sweep_one(const SweepEntry& e, const SweepConfig& cfg) {
  VqaModel<T> model = build_vqa_model<T>(*e.profile, e.kind, e.path,
                                         cfg.answers, e.seed);
  return make_report(model, cfg.convention, cfg.timing, cfg.protocol, e.seed);
}

}  // namespace detail

// Builds every legal (profile x fusion x attention) combination at the
// default hyperparameters and reports its complexity. Illegal pairs
// (IL features with co-attention) are skipped with a notice on `log`.
inline std::vector<ComplexityReport> run_sweep(const SweepConfig& cfg,
                                               std::ostream* log = nullptr) {
  if (cfg.profiles.empty()) throw ConfigError("sweep: no profiles selected");
  if (cfg.fusions.empty()) throw ConfigError("sweep: no fusions selected");
  if (cfg.dtype != "f64" && cfg.dtype != "f32")
    throw ConfigError("sweep: dtype must be f64 or f32");

  std::vector<AttentionPath> paths;
  if (cfg.attention != SweepConfig::Attention::Co)
    paths.push_back(AttentionPath::None);
  if (cfg.attention != SweepConfig::Attention::None)
    paths.push_back(AttentionPath::Co);

  std::vector<detail::SweepEntry> entries;
  std::uint64_t index = 0;
  for (const auto& name : cfg.profiles) {
    const FeatureProfile& profile = find_profile(name);
    for (FusionKind kind : cfg.fusions) {
      for (AttentionPath path : paths) {
        const std::uint64_t entry_seed = cfg.seed + index++;
        if (path == AttentionPath::Co && profile.kind == FeatureKind::IL) {
          if (log)
            (*log) << "skip: " << profile.name << "/" << fusion_kind_name(kind)
                   << "/co (image-level features carry no locations to "
                      "attend over)\n";
          continue;
        }
        entries.push_back({&profile, kind, path, entry_seed});
      }
    }
  }

  auto one = [&](const detail::SweepEntry& e) {
    return cfg.dtype == "f64" ? detail::sweep_one<double>(e, cfg)
                              : detail::sweep_one<float>(e, cfg);
  };

  std::vector<ComplexityReport> reports(entries.size());
  const std::size_t jobs = cfg.timing ? 1 : std::max<std::size_t>(cfg.jobs, 1);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < entries.size(); ++i)
      reports[i] = one(entries[i]);
    return reports;
  }
  std::vector<std::future<void>> workers;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next.fetch_add(1); i < entries.size();
           i = next.fetch_add(1))
        reports[i] = one(entries[i]);
    }));
  }
  for (auto& f : workers) f.get();
  return reports;
}

}  // namespace vqaf
