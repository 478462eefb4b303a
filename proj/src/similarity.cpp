#include "rolloutlab/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace rolloutlab {

std::string_view to_string(SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::edit_distance: return "edit";
    case SimilarityMetric::rouge_l: return "rouge_l";
    case SimilarityMetric::suffix_match: return "suffix";
    case SimilarityMetric::bleu_rouge_avg: return "bleu_rouge_avg";
  }
  return "edit";
}

SimilarityMetric parse_similarity_metric(std::string_view name) {
  if (name == "edit") return SimilarityMetric::edit_distance;
  if (name == "rouge_l") return SimilarityMetric::rouge_l;
  if (name == "suffix") return SimilarityMetric::suffix_match;
  if (name == "bleu_rouge_avg") return SimilarityMetric::bleu_rouge_avg;
  throw std::invalid_argument("unknown similarity metric '" + std::string(name) +
                              "' (expected edit, rouge_l, suffix or bleu_rouge_avg)");
}

std::size_t levenshtein(std::span<const TokenId> a, std::span<const TokenId> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // two-row DP, columns over the shorter sequence
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double norm_edit_distance(std::span<const TokenId> a, std::span<const TokenId> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) throw std::invalid_argument("norm_edit_distance: both sequences are empty");
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {
void require_non_empty(std::span<const TokenId> a, std::span<const TokenId> b, const char* who) {
  if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
}
}  // namespace

double rouge_l_sim(std::span<const TokenId> a, std::span<const TokenId> b) {
  require_non_empty(a, b, "rouge_l_sim");
  return static_cast<double>(lcs_length(a, b)) / static_cast<double>(std::max(a.size(), b.size()));
}

double suffix_match_sim(std::span<const TokenId> a, std::span<const TokenId> b) {
  require_non_empty(a, b, "suffix_match_sim");
  // A suffix of length L occurring in b implies every shorter suffix does,
  // so scan lengths upward and stop at the first miss.
  std::size_t best = 0;
  for (std::size_t len = 1; len <= std::min(a.size(), b.size()); ++len) {
    const auto suffix = a.subspan(a.size() - len);
    const auto hit = std::search(b.begin(), b.end(), suffix.begin(), suffix.end());
    if (hit == b.end()) break;
    best = len;
  }
  return static_cast<double>(best) / static_cast<double>(a.size());
}

double bleu_sim(std::span<const TokenId> a, std::span<const TokenId> b) {
  require_non_empty(a, b, "bleu_sim");
  constexpr std::size_t kMaxOrder = 4;
  double log_precision_sum = 0.0;
  for (std::size_t order = 1; order <= kMaxOrder; ++order) {
    std::map<std::vector<TokenId>, std::size_t> ref_counts;
    if (b.size() >= order)
      for (std::size_t i = 0; i + order <= b.size(); ++i)
        ++ref_counts[std::vector<TokenId>(b.begin() + i, b.begin() + i + order)];
    std::size_t total = 0;
    std::size_t matched = 0;
    std::map<std::vector<TokenId>, std::size_t> cand_counts;
    if (a.size() >= order)
      for (std::size_t i = 0; i + order <= a.size(); ++i)
        ++cand_counts[std::vector<TokenId>(a.begin() + i, a.begin() + i + order)];
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    double precision = 0.0;
    if (order == 1) {
      if (matched == 0) return 0.0;
      precision = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      precision = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_precision_sum += std::log(precision);
  }
  const double brevity = std::min(
      1.0, std::exp(1.0 - static_cast<double>(b.size()) / static_cast<double>(a.size())));
  return std::clamp(brevity * std::exp(log_precision_sum / kMaxOrder), 0.0, 1.0);
}

double bleu_rouge_sim(std::span<const TokenId> a, std::span<const TokenId> b) {
  return 0.5 * (bleu_sim(a, b) + rouge_l_sim(a, b));
}

double divergence(SimilarityMetric metric, std::span<const TokenId> a, std::span<const TokenId> b) {
  switch (metric) {
    case SimilarityMetric::edit_distance: return norm_edit_distance(a, b);
    case SimilarityMetric::rouge_l: return 1.0 - rouge_l_sim(a, b);
    case SimilarityMetric::suffix_match: return 1.0 - suffix_match_sim(a, b);
    case SimilarityMetric::bleu_rouge_avg: return 1.0 - bleu_rouge_sim(a, b);
  }
  return norm_edit_distance(a, b);
}

}  // namespace rolloutlab
