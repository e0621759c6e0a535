#include "driftbo/design.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace driftbo {

void validate_design(const DesignSequence& x, int alphabet_size,
                     int max_length) {
  if (x.empty()) {
    throw std::invalid_argument("DesignSequence: empty sequence");
  }
  if (x.length() > max_length) {
    std::ostringstream msg;
    msg << "DesignSequence: length " << x.length() << " exceeds max "
        << max_length;
    throw std::invalid_argument(msg.str());
  }
  for (int t : x.tokens) {
    if (t < 0 || t >= alphabet_size) {
      std::ostringstream msg;
      msg << "DesignSequence: token " << t << " outside [0, " << alphabet_size
          << ")";
      throw std::invalid_argument(msg.str());
    }
  }
}

int edit_distance(const DesignSequence& a, const DesignSequence& b) {
  const int n = a.length();
  const int m = b.length();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<int> prev(m + 1), curr(m + 1);
  for (int j = 0; j <= m; ++j) prev[j] = j;
  for (int i = 1; i <= n; ++i) {
    curr[0] = i;
    for (int j = 1; j <= m; ++j) {
      const int sub_cost = (a.tokens[i - 1] == b.tokens[j - 1]) ? 0 : 1;
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + sub_cost});
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

double design_distance(const DesignSequence& a, const DesignSequence& b) {
  const int longest = std::max(a.length(), b.length());
  if (longest == 0) return 0.0;
  return static_cast<double>(edit_distance(a, b)) /
         static_cast<double>(longest);
}

std::string format_design(const DesignSequence& x) {
  std::ostringstream out;
  for (int i = 0; i < x.length(); ++i) {
    if (i > 0) out << '-';
    out << x.tokens[i];
  }
  return out.str();
}

DesignSequence parse_design(const std::string& text) {
  DesignSequence x;
  if (text.empty()) return x;
  std::istringstream in(text);
  std::string piece;
  while (std::getline(in, piece, '-')) {
    x.tokens.push_back(std::stoi(piece));
  }
  return x;
}

}  // namespace driftbo
