#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lei {

/// Assigns each sample to one of k folds, balancing every stratum across
/// folds. Assignment is by sample position, so all time points of a sample
/// share a fold. Requires 2 <= k <= samples.
std::vector<int> stratified_folds(std::span<const int> strata, int k, std::uint64_t seed);

/// Positions with assignment == fold (test) or != fold (train).
std::vector<std::size_t> fold_members(std::span<const int> assignment, int fold);
std::vector<std::size_t> fold_complement(std::span<const int> assignment, int fold);

}  // namespace lei
