#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "rolloutlab/rng.hpp"
#include "rolloutlab/token_policy.hpp"

namespace testsupport {

using rolloutlab::TokenId;

// Reference Levenshtein: full (|a|+1) x (|b|+1) table, written independently
// of the library's rolling-row version.
inline std::size_t dp_levenshtein(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

// LCS by enumerating every subsequence of the shorter input.
inline std::size_t brute_lcs(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& t = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << s.size()); ++mask) {
    const auto len = static_cast<std::size_t>(__builtin_popcount(mask));
    if (len <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < s.size() && ok; ++i) {
      if (!(mask >> i & 1u)) continue;
      while (j < t.size() && t[j] != s[i]) ++j;
      if (j == t.size()) ok = false;
      else ++j;
    }
    if (ok) best = len;
  }
  return best;
}

// Longest suffix of a found contiguously in b, by trying every suffix and offset.
inline std::size_t brute_suffix(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  for (std::size_t len = a.size(); len > 0; --len) {
    const std::size_t start = a.size() - len;
    for (std::size_t off = 0; off + len <= b.size(); ++off) {
      bool eq = true;
      for (std::size_t i = 0; i < len && eq; ++i) eq = a[start + i] == b[off + i];
      if (eq) return len;
    }
  }
  return 0;
}

inline std::vector<TokenId> random_tokens(rolloutlab::Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<TokenId> out(len);
  for (auto& t : out) t = static_cast<TokenId>(rng.below(vocab));
  return out;
}

inline std::vector<double> random_row(rolloutlab::Rng& rng, std::size_t vocab, double scale) {
  std::vector<double> row(vocab);
  for (auto& x : row) x = (rng.uniform() * 2.0 - 1.0) * scale;
  return row;
}

// Policy with random rows for every context over `vocab` tokens (order 1),
// including the begin marker.
inline rolloutlab::SoftmaxPolicy random_policy(rolloutlab::Rng& rng, std::size_t vocab, double scale) {
  rolloutlab::SoftmaxPolicy p(vocab, 1);
  p.set_row(rolloutlab::ContextKey({rolloutlab::kBeginMarker}), random_row(rng, vocab, scale));
  for (std::size_t t = 0; t < vocab; ++t)
    p.set_row(rolloutlab::ContextKey({static_cast<TokenId>(t)}), random_row(rng, vocab, scale));
  return p;
}

inline std::vector<double> log_probs(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::log(p[i]);
  return out;
}

}  // namespace testsupport
