#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "tgrasp/errors.hpp"
#include "tgrasp/rng.hpp"

namespace tgrasp {

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> val;
};

// Seeded shuffle, then the first floor(0.8 N) items train and the rest validate.
template <typename T>
Split<T> split_dataset(const std::vector<T>& items, std::uint64_t seed, std::size_t min_items = 5) {
  if (items.size() < min_items) {
    throw DataError("need at least " + std::to_string(min_items) + " records to split, got " +
                    std::to_string(items.size()));
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_train = items.size() * 8 / 10;
  Split<T> s;
  s.train.reserve(n_train);
  s.val.reserve(items.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? s.train : s.val).push_back(items[order[i]]);
  return s;
}

}  // namespace tgrasp
