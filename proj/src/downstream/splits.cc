#include "conic/downstream/splits.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "conic/core.h"
#include "conic/parallel.h"

namespace conic {

std::vector<CvSplit> make_cv_splits(std::size_t num_patients,
                                    const std::optional<std::vector<int>>& stratify_labels,
                                    std::uint64_t seed, int folds, int repeats) {
  if (folds < 2) throw Error(ErrorCode::kConfigError, "need at least 2 folds");
  if (repeats < 1) throw Error(ErrorCode::kConfigError, "need at least 1 repeat");
  if (num_patients < static_cast<std::size_t>(std::max(folds, 5))) {
    throw Error(ErrorCode::kTooFewPatients,
                std::to_string(num_patients) + " patients cannot fill " +
                    std::to_string(folds) + " folds");
  }
  if (stratify_labels && stratify_labels->size() != num_patients) {
    throw Error(ErrorCode::kLengthMismatch, "stratification labels do not match patients");
  }

  std::vector<CvSplit> splits;
  for (int r = 0; r < repeats; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::vector<std::size_t> order;
    if (stratify_labels) {
      std::map<int, std::vector<std::size_t>> groups;
      for (std::size_t i = 0; i < num_patients; ++i) groups[(*stratify_labels)[i]].push_back(i);
      for (auto& [label, members] : groups) {
        std::shuffle(members.begin(), members.end(), rng);
        order.insert(order.end(), members.begin(), members.end());
      }
    } else {
      order.resize(num_patients);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> fold_members(static_cast<std::size_t>(folds));
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      fold_members[pos % static_cast<std::size_t>(folds)].push_back(order[pos]);
    }
    for (auto& members : fold_members) std::sort(members.begin(), members.end());

    for (int f = 0; f < folds; ++f) {
      CvSplit s;
      s.fold = f;
      s.repeat = r;
      const int v = (f + 1) % folds;
      s.test = fold_members[f];
      s.valid = fold_members[v];
      for (int k = 0; k < folds; ++k) {
        if (k == f || k == v) continue;
        s.train.insert(s.train.end(), fold_members[k].begin(), fold_members[k].end());
      }
      std::sort(s.train.begin(), s.train.end());
      splits.push_back(std::move(s));
    }
  }
  return splits;
}

nlohmann::ordered_json to_json(const CvSplit& split, std::span<const std::string> ids) {
  auto names = [&](const std::vector<std::size_t>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (auto r : rows) arr.push_back(ids[r]);
    return arr;
  };
  nlohmann::ordered_json j;
  j["fold"] = split.fold;
  j["repeat"] = split.repeat;
  j["train"] = names(split.train);
  j["valid"] = names(split.valid);
  j["test"] = names(split.test);
  return j;
}

}  // namespace conic
