#include "rolloutlab/token_policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rolloutlab {

bool is_prob_vector(std::span<const double> probs, double tol) {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

TokenId argmax(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return static_cast<TokenId>(best);
}

ProbVector softmax(std::span<const double> logits) {
  ProbVector out(logits.size());
  if (logits.empty()) return out;
  const double hi = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenId eos)
    : tokens_(std::move(tokens)), eos_(eos) {
  if (tokens_.size() < 2) throw std::invalid_argument("vocabulary needs at least 2 tokens");
  if (eos_ < 0 || static_cast<std::size_t>(eos_) >= tokens_.size())
    throw std::invalid_argument("eos id outside vocabulary");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find(' ') != std::string::npos)
      throw std::invalid_argument("token surface must be non-empty without spaces");
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw std::invalid_argument("duplicate token surface '" + tokens_[i] + "'");
  }
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += surface(ids[i]);
  }
  return out;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    auto id = find(word);
    if (!id) throw std::invalid_argument("unknown token '" + word + "'");
    out.push_back(*id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ContextKey

ContextKey ContextKey::from_history(std::span<const TokenId> prompt,
                                    std::span<const TokenId> completion, std::size_t order) {
  std::vector<TokenId> window(order, kBeginMarker);
  const std::size_t total = prompt.size() + completion.size();
  const std::size_t take = std::min(order, total);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t pos = total - take + i;  // position in prompt ⊕ completion
    window[order - take + i] = pos < prompt.size() ? prompt[pos] : completion[pos - prompt.size()];
  }
  return ContextKey(std::move(window));
}

std::string ContextKey::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < window_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(window_[i]);
  }
  return out;
}

ContextKey ContextKey::parse(std::string_view text) {
  std::vector<TokenId> window;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string part(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    std::size_t used = 0;
    long value = 0;
    try {
      value = std::stol(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (part.empty() || used != part.size() || value < kBeginMarker)
      throw std::invalid_argument("malformed context key '" + std::string(text) + "'");
    window.push_back(static_cast<TokenId>(value));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return ContextKey(std::move(window));
}

std::size_t ContextKeyHash::operator()(const ContextKey& key) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (TokenId t : key.window()) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t));
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

// ---------------------------------------------------------------------------
// SoftmaxPolicy

std::string_view to_string(PolicyRole role) {
  switch (role) {
    case PolicyRole::current: return "current";
    case PolicyRole::old: return "old";
    case PolicyRole::reference: return "reference";
  }
  return "current";
}

PolicyRole parse_policy_role(std::string_view text) {
  if (text == "current") return PolicyRole::current;
  if (text == "old") return PolicyRole::old;
  if (text == "reference") return PolicyRole::reference;
  throw std::invalid_argument("unknown policy role '" + std::string(text) + "'");
}

SoftmaxPolicy::SoftmaxPolicy(std::size_t vocab_size, std::size_t context_order, PolicyRole role)
    : vocab_size_(vocab_size), context_order_(context_order), role_(role), zero_row_(vocab_size, 0.0) {
  if (vocab_size < 2) throw std::invalid_argument("policy vocabulary must have at least 2 tokens");
  if (context_order < 1) throw std::invalid_argument("context order must be at least 1");
}

std::span<const double> SoftmaxPolicy::row(const ContextKey& context) const {
  auto it = rows_.find(context);
  if (it == rows_.end()) return zero_row_;
  return it->second;
}

ProbVector SoftmaxPolicy::next_distribution(const ContextKey& context) const {
  return softmax(row(context));
}

double SoftmaxPolicy::token_logprob(const ContextKey& context, TokenId token) const {
  const auto logits = row(context);
  const double hi = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - hi);
  return logits[static_cast<std::size_t>(token)] - hi - std::log(sum);
}

std::vector<double> SoftmaxPolicy::logprob_grad(const ContextKey& context, TokenId token) const {
  std::vector<double> grad = next_distribution(context);
  for (double& g : grad) g = -g;
  grad[static_cast<std::size_t>(token)] += 1.0;
  return grad;
}

double SoftmaxPolicy::kl_to(const SoftmaxPolicy& reference, const ContextKey& context) const {
  if (reference.vocab_size_ != vocab_size_)
    throw std::invalid_argument("kl_to: policies have different vocabularies");
  const ProbVector p = next_distribution(context);
  const ProbVector q = reference.next_distribution(context);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  return std::max(kl, 0.0);
}

void SoftmaxPolicy::set_row(const ContextKey& context, std::vector<double> logits) {
  if (logits.size() != vocab_size_) throw std::invalid_argument("logit row has wrong width");
  if (context.order() != context_order_) throw std::invalid_argument("context key has wrong order");
  for (double z : logits)
    if (!std::isfinite(z)) throw std::invalid_argument("logits must be finite");
  rows_[context] = std::move(logits);
}

void SoftmaxPolicy::apply_gradient(const LogitGradient& gradient, double step) {
  for (const auto& [key, grad] : gradient) {
    if (grad.size() != vocab_size_) throw std::invalid_argument("gradient row has wrong width");
    auto [it, inserted] = rows_.try_emplace(key, zero_row_);
    for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += step * grad[i];
  }
}

SoftmaxPolicy SoftmaxPolicy::snapshot(PolicyRole role) const {
  SoftmaxPolicy copy = *this;
  copy.role_ = role;
  return copy;
}

bool SoftmaxPolicy::same_logits(const SoftmaxPolicy& other) const {
  return vocab_size_ == other.vocab_size_ && context_order_ == other.context_order_ &&
         rows_ == other.rows_;
}

nlohmann::json SoftmaxPolicy::to_json() const {
  // nlohmann::json objects are key-sorted, so the dump is deterministic.
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [key, logits] : rows_) rows[key.to_string()] = logits;
  nlohmann::json doc;
  doc["format"] = "rolloutlab-policy/1";
  doc["vocab_size"] = vocab_size_;
  doc["context_order"] = context_order_;
  doc["role"] = std::string(to_string(role_));
  doc["rows"] = std::move(rows);
  return doc;
}

SoftmaxPolicy SoftmaxPolicy::from_json(const nlohmann::json& doc) {
  try {
    SoftmaxPolicy policy(doc.at("vocab_size").get<std::size_t>(),
                         doc.at("context_order").get<std::size_t>(),
                         parse_policy_role(doc.value("role", std::string("current"))));
    for (const auto& [key, row] : doc.at("rows").items())
      policy.set_row(ContextKey::parse(key), row.get<std::vector<double>>());
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed policy document: ") + e.what());
  }
}

void SoftmaxPolicy::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write policy checkpoint " + path.string());
  out << to_json().dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing policy checkpoint " + path.string());
}

SoftmaxPolicy SoftmaxPolicy::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open policy checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

}  // namespace rolloutlab
