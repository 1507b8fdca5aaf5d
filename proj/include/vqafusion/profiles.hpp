#pragma once

#include <string>
#include <vector>

#include "vqafusion/errors.hpp"

namespace vqaf {

enum class FeatureKind { IL, SG, BU };

inline std::string feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::IL: return "IL";
    case FeatureKind::SG: return "SG";
    case FeatureKind::BU: return "BU";
  }
  return "?";
}

inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "IL") return FeatureKind::IL;
  if (s == "SG") return FeatureKind::SG;
  if (s == "BU") return FeatureKind::BU;
  throw ConfigError("unknown feature kind '" + s + "' (valid: IL, SG, BU)");
}

// Synthetic stand-in for one visual feature layout: extractor name,
// feature level, width and number of locations.
struct FeatureProfile {
  std::string name;     // catalog key, e.g. "ResNet152-SG"
  std::string feature;  // extractor, the fixture join key
  FeatureKind kind = FeatureKind::SG;
  std::size_t d_v = 0;
  std::size_t grid = 0;  // G: 1 for IL, cells for SG, proposals for BU
};

inline constexpr std::size_t kQuestionWidth = 2400;

// Fixed catalog of the feature shapes the benchmark sweeps over. IL rows
// are the pooled (G = 1) variants of the same extractors.
inline const std::vector<FeatureProfile>& profile_catalog() {
  static const std::vector<FeatureProfile> entries = {
      {"InceptionV4-IL", "InceptionV4", FeatureKind::IL, 1536, 1},
      {"InceptionV4-SG", "InceptionV4", FeatureKind::SG, 1536, 144},
      {"ResNet152-IL", "ResNet152", FeatureKind::IL, 2048, 1},
      {"ResNet152-SG", "ResNet152", FeatureKind::SG, 2048, 196},
      {"ResNext101-IL", "ResNext101", FeatureKind::IL, 2048, 1},
      {"ResNext101-SG", "ResNext101", FeatureKind::SG, 2048, 196},
      {"SeNet154-IL", "SeNet154", FeatureKind::IL, 2048, 1},
      {"SeNet154-SG", "SeNet154", FeatureKind::SG, 2048, 196},
      {"PolyNet-IL", "PolyNet", FeatureKind::IL, 2048, 1},
      {"PolyNet-SG", "PolyNet", FeatureKind::SG, 2048, 144},
      {"BU", "BU", FeatureKind::BU, 2048, 36},
  };
  return entries;
}

inline const FeatureProfile& find_profile(const std::string& name) {
  for (const auto& p : profile_catalog())
    if (p.name == name) return p;
  std::string valid;
  for (const auto& p : profile_catalog())
    valid += (valid.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown profile '" + name + "' (valid: " + valid + ")");
}

}  // namespace vqaf
