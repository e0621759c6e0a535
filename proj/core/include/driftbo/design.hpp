#pragma once

#include <string>
#include <vector>

namespace driftbo {

// A structured discrete design: a token sequence over a fixed alphabet
// [0, alphabet_size). Alphabet size and maximum length are carried by the
// configs that produce sequences; the sequence itself stores only tokens.
struct DesignSequence {
  std::vector<int> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const DesignSequence& other) const = default;
};

// Throws std::invalid_argument when a token falls outside [0, alphabet_size)
// or the sequence is longer than max_length (or empty).
void validate_design(const DesignSequence& x, int alphabet_size,
                     int max_length);

// Levenshtein edit distance over token sequences.
int edit_distance(const DesignSequence& a, const DesignSequence& b);

// Edit distance divided by max(len(a), len(b)); 0 when both are empty.
// Always in [0, 1]; 0 iff the sequences are equal.
double design_distance(const DesignSequence& a, const DesignSequence& b);

// "3-1-4-1" style rendering used in CSV logs; parse is the inverse.
std::string format_design(const DesignSequence& x);
DesignSequence parse_design(const std::string& text);

}  // namespace driftbo
