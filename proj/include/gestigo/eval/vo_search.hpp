// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gestigo/condense/geometry.hpp"

namespace gestigo::eval {

using VoTuple = std::vector<condense::VoName>;

/// Accuracy of every trained tuple, keyed by ordered tuple.
struct VoSearchState {
  std::map<VoTuple, double> singles;
  std::map<VoTuple, double> pairs;
  std::map<VoTuple, double> triples;
  std::size_t trainings = 0;

  /// Cached accuracy or nullptr.
  const double* find(const VoTuple& t) const;
};

/// Trains a model on the given ordered VOs and returns its validation accuracy.
using VoTrainer = std::function<double(const VoTuple&)>;

struct VoSearchOptions {
  int top_k_singles = 3;
  int top_k_pairs = 3;
  std::vector<condense::VoName> candidates;  // empty = all six
};

/// Singles, pairs over the top singles, triples extending the top pairs with
/// the remaining top singles (every ordering), then the best triple. Ties go
/// to the lexicographically smallest VO-name tuple. Tuples already in `state`
/// are not retrained; a trainer exception leaves `state` as it was up to then.
VoTuple vo_search(const VoTrainer& trainer, VoSearchState& state, const VoSearchOptions& options = {});

/// Best ordered triple of `candidates` under `trainer`, by full enumeration.
VoTuple exhaustive_triple(const VoTrainer& trainer, const std::vector<condense::VoName>& candidates);

/// "a,b,c"
std::string tuple_string(const VoTuple& t);
/// True when `a` ranks above `b`: higher accuracy, then smaller name tuple.
bool ranks_above(const VoTuple& a, double acc_a, const VoTuple& b, double acc_b);

/// Tab-separated `kind tuple accuracy` lines, then the chosen triple.
std::string format_search(const VoSearchState& state, const VoTuple& best);

}  // namespace gestigo::eval
