#pragma once

#include <cstdint>
#include <vector>

namespace pyramid {

using ItemId = std::uint64_t;

struct SearchHit {
    ItemId id;
    double score;

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Ranked hits, best first, ids distinct. Length <= k.
using QueryResult = std::vector<SearchHit>;

/// Orders hits best-first: higher score wins, ties broken by lower id.
inline bool better_hit(const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

}  // namespace pyramid
