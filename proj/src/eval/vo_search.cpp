// SPDX-License-Identifier: Apache-2.0
#include "gestigo/eval/vo_search.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::eval {

using condense::VoName;

const double* VoSearchState::find(const VoTuple& t) const {
  const auto& m = t.size() == 1 ? singles : t.size() == 2 ? pairs : triples;
  const auto it = m.find(t);
  return it == m.end() ? nullptr : &it->second;
}

std::string tuple_string(const VoTuple& t) {
  std::vector<std::string_view> names;
  for (auto v : t) names.push_back(condense::to_string(v));
  return fmt::format("{}", fmt::join(names, ","));
}

namespace {

std::vector<std::string_view> names_of(const VoTuple& t) {
  std::vector<std::string_view> out;
  for (auto v : t) out.push_back(condense::to_string(v));
  return out;
}

std::vector<VoTuple> ranked(const std::vector<VoTuple>& tuples, const VoSearchState& state) {
  std::vector<VoTuple> out = tuples;
  std::sort(out.begin(), out.end(), [&](const VoTuple& a, const VoTuple& b) {
    return ranks_above(a, *state.find(a), b, *state.find(b));
  });
  return out;
}

}  // namespace

bool ranks_above(const VoTuple& a, double acc_a, const VoTuple& b, double acc_b) {
  if (acc_a != acc_b) return acc_a > acc_b;
  return names_of(a) < names_of(b);
}

VoTuple vo_search(const VoTrainer& trainer, VoSearchState& state, const VoSearchOptions& options) {
  std::vector<VoName> cands = options.candidates;
  if (cands.empty()) cands.assign(condense::all_vo_names().begin(), condense::all_vo_names().end());
  if (std::set<VoName>(cands.begin(), cands.end()).size() != cands.size())
    throw ArgumentError("vo_search: repeated candidate view orientation");
  if (cands.size() < 3) throw ArgumentError("vo_search: need at least three candidates");
  if (options.top_k_singles < 3) throw ArgumentError("vo_search: top_k_singles must be at least 3");
  if (options.top_k_pairs < 1) throw ArgumentError("vo_search: top_k_pairs must be positive");

  const auto run = [&](const VoTuple& t) {
    if (state.find(t)) return;
    const double acc = trainer(t);
    if (!(acc >= 0.0 && acc <= 1.0))
      throw ArgumentError(fmt::format("vo_search: trainer returned accuracy {} for {}", acc, tuple_string(t)));
    auto& m = t.size() == 1 ? state.singles : t.size() == 2 ? state.pairs : state.triples;
    m[t] = acc;
    ++state.trainings;
  };

  std::vector<VoTuple> singles;
  for (auto c : cands) {
    singles.push_back({c});
    run(singles.back());
  }
  auto top_singles = ranked(singles, state);
  top_singles.resize(std::min(top_singles.size(), static_cast<std::size_t>(options.top_k_singles)));

  std::vector<VoTuple> pairs;
  for (const auto& a : top_singles)
    for (const auto& b : top_singles)
      if (a[0] != b[0]) {
        pairs.push_back({a[0], b[0]});
        run(pairs.back());
      }
  auto top_pairs = ranked(pairs, state);
  top_pairs.resize(std::min(top_pairs.size(), static_cast<std::size_t>(options.top_k_pairs)));

  std::vector<VoTuple> triples;
  std::set<VoTuple> seen;
  for (const auto& p : top_pairs)
    for (const auto& s : top_singles) {
      if (s[0] == p[0] || s[0] == p[1]) continue;
      VoTuple combo{p[0], p[1], s[0]};
      std::sort(combo.begin(), combo.end());
      do {
        if (seen.insert(combo).second) {
          triples.push_back(combo);
          run(combo);
        }
      } while (std::next_permutation(combo.begin(), combo.end()));
    }
  return ranked(triples, state).front();
}

VoTuple exhaustive_triple(const VoTrainer& trainer, const std::vector<VoName>& candidates) {
  if (candidates.size() < 3) throw ArgumentError("exhaustive_triple: need at least three candidates");
  VoTuple best;
  double best_acc = -1.0;
  for (auto a : candidates)
    for (auto b : candidates)
      for (auto c : candidates) {
        if (a == b || b == c || a == c) continue;
        const VoTuple t{a, b, c};
        const double acc = trainer(t);
        if (best.empty() || ranks_above(t, acc, best, best_acc)) {
          best = t;
          best_acc = acc;
        }
      }
  return best;
}

std::string format_search(const VoSearchState& state, const VoTuple& best) {
  std::string out = "kind\ttuple\taccuracy\n";
  for (const auto& [name, m] : {std::pair{"single", &state.singles}, {"pair", &state.pairs}, {"triple", &state.triples}})
    for (const auto& [t, acc] : *m) out += fmt::format("{}\t{}\t{:.6f}\n", name, tuple_string(t), acc);
  out += fmt::format("trainings\t{}\n", state.trainings);
  out += fmt::format("best\t{}\n", tuple_string(best));
  return out;
}

}  // namespace gestigo::eval
