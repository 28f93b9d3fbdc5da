#include "lei/folds.hpp"

#include "lei/errors.hpp"
#include "lei/random.hpp"

#include <algorithm>
#include <numeric>

namespace lei {

std::vector<int> stratified_folds(std::span<const int> strata, int k, std::uint64_t seed) {
    const auto n = strata.size();
    if (k < 2) throw ValidationError("fold count must be at least 2");
    if (static_cast<std::size_t>(k) > n)
        throw ValidationError("fold count " + std::to_string(k) + " exceeds sample count " + std::to_string(n));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return strata[a] < strata[b]; });

    std::vector<int> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fold;
}

std::vector<std::size_t> fold_members(std::span<const int> assignment, int fold) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> fold_complement(std::span<const int> assignment, int fold) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] != fold) out.push_back(i);
    return out;
}

}  // namespace lei
