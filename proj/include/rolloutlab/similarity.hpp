#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// Sequence metrics over token ids. Every similarity lies in [0, 1]; the
/// distance form of a similarity is 1 - similarity.
enum class SimilarityMetric { edit_distance, rouge_l, suffix_match, bleu_rouge_avg };

/// Config names: "edit" | "rouge_l" | "suffix" | "bleu_rouge_avg".
std::string_view to_string(SimilarityMetric metric);
SimilarityMetric parse_similarity_metric(std::string_view name);

/// Levenshtein distance with unit insert / delete / substitute costs.
std::size_t levenshtein(std::span<const TokenId> a, std::span<const TokenId> b);

/// levenshtein / max(|a|, |b|). Throws std::invalid_argument when both are empty.
double norm_edit_distance(std::span<const TokenId> a, std::span<const TokenId> b);

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);

/// LCS / max(|a|, |b|). Both inputs must be non-empty.
double rouge_l_sim(std::span<const TokenId> a, std::span<const TokenId> b);

/// Length of the longest suffix of `a` found contiguously in `b`, over |a|.
double suffix_match_sim(std::span<const TokenId> a, std::span<const TokenId> b);

/// Sentence BLEU of candidate `a` against reference `b`: n-grams 1..4 with
/// uniform weights, add-one smoothing on orders 2..4, brevity penalty
/// min(1, exp(1 - |b|/|a|)). Not symmetric.
double bleu_sim(std::span<const TokenId> a, std::span<const TokenId> b);

/// (bleu_sim + rouge_l_sim) / 2.
double bleu_rouge_sim(std::span<const TokenId> a, std::span<const TokenId> b);

/// Divergence under `metric`: the normalized edit distance itself, or
/// 1 - similarity for the other metrics.
double divergence(SimilarityMetric metric, std::span<const TokenId> a, std::span<const TokenId> b);

}  // namespace rolloutlab
