#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "director/layout.hpp"

namespace director::attn {

class InvalidLayout : public std::runtime_error {
public:
    explicit InvalidLayout(const std::string& what) : std::runtime_error(what) {}
};

// Dense n x n boolean relation, row = query, column = key.
struct AttentionMask {
    int n = 0;
    std::vector<std::uint8_t> bits;

    AttentionMask() = default;
    explicit AttentionMask(int size) : n(size), bits(static_cast<size_t>(size) * size, 0) {}

    bool at(int q, int k) const { return bits[static_cast<size_t>(q) * n + k] != 0; }
    void set(int q, int k, bool v) { bits[static_cast<size_t>(q) * n + k] = v ? 1 : 0; }

    bool operator==(const AttentionMask& o) const { return n == o.n && bits == o.bits; }
};

// Generalized causal attention over splits: every split attends to all
//

// earlier splits; text splits are causal within themselves; vision splits
// and their adjacent ID-prompt split form a bidirectional group.
AttentionMask compile_mask(const seq::SequenceLayout& layout);

// Independent direct evaluation of the same rule, one (query, key) pair at
// a time. Kept free of any code shared with compile_mask so the two can
// check each other.
AttentionMask oracle_mask(const seq::SequenceLayout& layout);

// Portable bitmap (P1) text, row-major, 1 = may attend.
std::string render_mask(const AttentionMask& m);
AttentionMask parse_mask(const std::string& text);

}  // namespace director::attn
