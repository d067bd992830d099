#include "leakprobe/metrics_text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "leakprobe/error.hpp"

namespace leakprobe {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Decodes one UTF-8 code point at `pos`; malformed bytes decode as
// themselves with length 1.
char32_t decode_at(std::string_view s, std::size_t pos, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) { return pos + i < s.size() && (static_cast<unsigned char>(s[pos + i]) & 0xC0) == 0x80; };
  auto bits = [&](std::size_t i) { return static_cast<char32_t>(static_cast<unsigned char>(s[pos + i]) & 0x3F); };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    len = 2;
    return (static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1);
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    len = 3;
    return (static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2);
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    len = 4;
    return (static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) | (bits(2) << 6) | bits(3);
  }
  len = 1;
  return b0;
}

bool is_punct(char32_t c) {
  if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                       (c >= 0x7B && c <= 0x7E);
  switch (c) {
    case 0x00A1: case 0x00A7: case 0x00AB: case 0x00B6: case 0x00B7: case 0x00BB: case 0x00BF:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3000 && c <= 0x303F) ||
         (c >= 0xFF01 && c <= 0xFF0F);
}

std::string lowercase(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size(); ++i) {
    const auto c = static_cast<unsigned char>(token[i]);
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c + 32));
    } else if (c == 0xC3 && i + 1 < token.size()) {
      // U+00C0..U+00DE except U+00D7 map to +0x20 in the second byte.
      const auto n = static_cast<unsigned char>(token[i + 1]);
      out.push_back(static_cast<char>(c));
      out.push_back(static_cast<char>((n >= 0x80 && n <= 0x9E && n != 0x97) ? n + 0x20 : n));
      ++i;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string_view strip_edges(std::string_view token) {
  std::size_t first = token.size();
  std::size_t last = 0;
  for (std::size_t pos = 0, len = 0; pos < token.size(); pos += len) {
    if (!is_punct(decode_at(token, pos, len))) {
      first = std::min(first, pos);
      last = pos + len;
    }
  }
  return first < last ? token.substr(first, last - first) : std::string_view{};
}

using Ngram = std::vector<std::string_view>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    Ngram g(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[g];
  }
  return counts;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) continue;
    const auto stripped = strip_edges(text.substr(start, i - start));
    if (!stripped.empty()) out.push_back(lowercase(stripped));
  }
  return out;
}

double words_copied_ratio(const std::vector<std::string>& reference, const std::vector<std::string>& candidate) {
  const std::unordered_set<std::string> ref(reference.begin(), reference.end());
  if (ref.empty()) return 0.0;
  const std::unordered_set<std::string> cand(candidate.begin(), candidate.end());
  std::size_t shared = 0;
  for (const auto& t : ref) shared += cand.count(t);
  return static_cast<double>(shared) / static_cast<double>(ref.size());
}

double words_copied_ratio(std::string_view reference, std::string_view candidate) {
  return words_copied_ratio(tokenize(reference), tokenize(candidate));
}

std::size_t longest_consecutive_overlap(const std::vector<std::string>& reference,
                                        const std::vector<std::string>& candidate) {
  std::vector<std::size_t> prev(candidate.size() + 1, 0), cur(candidate.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= reference.size(); ++i) {
    for (std::size_t j = 1; j <= candidate.size(); ++j) {
      cur[j] = reference[i - 1] == candidate[j - 1] ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

std::size_t longest_consecutive_overlap(std::string_view reference, std::string_view candidate) {
  return longest_consecutive_overlap(tokenize(reference), tokenize(candidate));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::vector<std::string>& reference, const std::vector<std::string>& candidate) {
  if (reference.empty() || candidate.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(reference, candidate));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l(std::string_view reference, std::string_view candidate) {
  return rouge_l(tokenize(reference), tokenize(candidate));
}

double bleu4(const std::vector<std::string>& reference, const std::vector<std::string>& candidate) {
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t total = 0;
    std::size_t matched = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    const double p = matched == 0 ? 1.0 / static_cast<double>(total + 1)
                                  : static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double bleu4(std::string_view reference, std::string_view candidate) {
  return bleu4(tokenize(reference), tokenize(candidate));
}

const std::string_view kClairTemplate =
    "You are trying to tell if a candidate set of captions is describing the same image as a reference set of "
    "captions.\n"
    "Candidate set:\n"
    "{candidate_statements}\n"
    "Reference set:\n"
    "{target_statements}\n"
    "On a precise scale from 0 to 100, how likely is it that the candidate set is describing the same image as the "
    "reference set?\n"
    "(JSON format, with a key \"score\", value between 0 and 100, and a key \"reason\" with a string value.)";

std::string render_clair_prompt(std::string_view candidate, std::string_view reference) {
  std::string out(kClairTemplate);
  auto fill = [&out](std::string_view slot, std::string_view value) {
    const auto pos = out.find(slot);
    out.replace(pos, slot.size(), value);
  };
  // Reference first: the candidate text may itself contain a slot name.
  fill("{target_statements}", reference);
  fill("{candidate_statements}", candidate);
  return out;
}

double parse_clair_reply(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw Error(ErrorKind::parse, "judge reply has no JSON object");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(reply.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("judge reply is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("score")) throw Error(ErrorKind::parse, "judge reply has no \"score\"");
  const auto& s = doc["score"];
  double score = 0.0;
  if (s.is_number()) {
    score = s.get<double>();
  } else if (s.is_string()) {
    const auto& str = s.get_ref<const std::string&>();
    std::size_t used = 0;
    try {
      score = std::stod(str, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != str.size()) throw Error(ErrorKind::parse, "judge score is not numeric");
  } else {
    throw Error(ErrorKind::parse, "judge score is not numeric");
  }
  if (!std::isfinite(score) || score < 0.0 || score > 100.0)
    throw Error(ErrorKind::parse, "judge score outside [0, 100]: " + std::to_string(score));
  return score;
}

double clair_judge(const JudgeFn& judge, std::string_view candidate, std::string_view reference) {
  if (!judge) throw Error(ErrorKind::config, "no CLAIR judge configured");
  return parse_clair_reply(judge(render_clair_prompt(candidate, reference), {}));
}

TextVerdict score_text(std::string_view reference, std::string_view candidate, const TextThresholds& thresholds,
                       const JudgeFn* clair) {
  const auto ref = tokenize(reference);
  const auto cand = tokenize(candidate);
  TextVerdict v;
  v.thresholds = thresholds;
  v.words_ratio = words_copied_ratio(ref, cand);
  v.longest_run = longest_consecutive_overlap(ref, cand);
  v.rouge_l = rouge_l(ref, cand);
  v.bleu4 = bleu4(ref, cand);
  v.words_pass = v.words_ratio > thresholds.words;
  v.run_pass = static_cast<double>(v.longest_run) > thresholds.run;
  v.rouge_pass = v.rouge_l > thresholds.rouge;
  v.bleu_pass = v.bleu4 > thresholds.bleu;
  if (clair && *clair) {
    try {
      v.clair = clair_judge(*clair, candidate, reference);
      v.clair_pass = *v.clair > thresholds.clair;
    } catch (const Error& e) {
      v.clair_error = e.what();
    }
  }
  return v;
}

}  // namespace leakprobe
