#pragma once

#include <map>
#include <string>
#include <vector>

#include "vqafusion/errors.hpp"

namespace vqaf {

// One evaluated question: the predicted answer id and the ten
// crowd-sourced ground-truth answer ids.
struct ConsensusRecord {
  std::size_t predicted = 0;
  std::vector<std::size_t> human_answers;
};

// Consensus accuracy: per record min(matching_humans / 3, 1), averaged.
inline double vqa_accuracy(const std::vector<ConsensusRecord>& records) {
  if (records.empty())
    throw ValidationError("vqa_accuracy: no records");
  double total = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.human_answers.size() != 10)
      throw ValidationError("record " + std::to_string(i) + " has " +
                            std::to_string(rec.human_answers.size()) +
                            " human answers, expected exactly 10");
    std::size_t matches = 0;
    for (std::size_t a : rec.human_answers)
      if (a == rec.predicted) ++matches;
    total += std::min(static_cast<double>(matches) / 3.0, 1.0);
  }
  return total / static_cast<double>(records.size());
}

using TypedAccuracyTable = std::map<std::string, double>;

enum class MeanKind { Arithmetic, Harmonic };

namespace detail {

inline void check_unit_interval(double v, const std::string& what) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ValidationError(what + " accuracy " + std::to_string(v) +
                          " outside [0, 1]");
}

}  // namespace detail

// Mean over per-type accuracies. The harmonic mean of a table containing
// a zero is defined as zero rather than an error.
inline double mpt(const std::vector<double>& per_type, MeanKind kind) {
  if (per_type.empty()) throw ValidationError("mpt: empty table");
  for (double v : per_type) detail::check_unit_interval(v, "per-type");
  if (kind == MeanKind::Arithmetic) {
    double s = 0;
    for (double v : per_type) s += v;
    return s / static_cast<double>(per_type.size());
  }
  double inv = 0;
  for (double v : per_type) {
    if (v == 0.0) return 0.0;
    inv += 1.0 / v;
  }
  return static_cast<double>(per_type.size()) / inv;
}

inline double mpt(const TypedAccuracyTable& table, MeanKind kind) {
  std::vector<double> values;
  values.reserve(table.size());
  for (const auto& [type, v] : table) values.push_back(v);
  return mpt(values, kind);
}

// Within each type, accuracies are first averaged uniformly over the
// distinct answers, then the per-type means feed mpt. The per-answer
// accuracies must be supplied by the caller; nothing here can derive them.
inline double normalized_mpt(
    const std::map<std::string, std::vector<double>>& per_answer,
    MeanKind kind) {
  if (per_answer.empty()) throw ValidationError("normalized_mpt: empty table");
  std::vector<double> per_type;
  per_type.reserve(per_answer.size());
  for (const auto& [type, answers] : per_answer) {
    if (answers.empty())
      throw ValidationError("normalized_mpt: type '" + type +
                            "' has no answers");
    double s = 0;
    for (double v : answers) {
      detail::check_unit_interval(v, "per-answer");
      s += v;
    }
    per_type.push_back(s / static_cast<double>(answers.size()));
  }
  return mpt(per_type, kind);
}

}  // namespace vqaf
