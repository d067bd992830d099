#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/gateway.hpp"

namespace leakprobe {

// Lowercases (ASCII and Latin-1), splits on whitespace and strips
// punctuation from both ends of each token. Interior punctuation stays.
std::vector<std::string> tokenize(std::string_view text);

// Share of the reference's distinct tokens that also occur in the candidate.
double words_copied_ratio(const std::vector<std::string>& reference, const std::vector<std::string>& candidate);
double words_copied_ratio(std::string_view reference, std::string_view candidate);

// Length of the longest common contiguous token run.
std::size_t longest_consecutive_overlap(const std::vector<std::string>& reference,
                                        const std::vector<std::string>& candidate);
std::size_t longest_consecutive_overlap(std::string_view reference, std::string_view candidate);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// LCS F1 over tokens.
double rouge_l(const std::vector<std::string>& reference, const std::vector<std::string>& candidate);
double rouge_l(std::string_view reference, std::string_view candidate);

// Single-reference BLEU-4, uniform weights. An n-gram order with no clipped
// matches contributes (0 + 1) / (count + 1) instead of zero.
double bleu4(const std::vector<std::string>& reference, const std::vector<std::string>& candidate);
double bleu4(std::string_view reference, std::string_view candidate);
inline constexpr const char* kBleuSmoothing = "add-one on zero-match orders";

extern const std::string_view kClairTemplate;

std::string render_clair_prompt(std::string_view candidate, std::string_view reference);
// Extracts "score" from the JSON object in the reply. Throws Error{parse}
// when missing, non-numeric or outside [0, 100].
double parse_clair_reply(std::string_view reply);
double clair_judge(const JudgeFn& judge, std::string_view candidate, std::string_view reference);

struct TextThresholds {
  double words = 0.8;
  double run = 15;
  double rouge = 0.5;
  double bleu = 0.5;
  double clair = 80;
};

struct TextVerdict {
  double words_ratio = 0.0;
  std::size_t longest_run = 0;
  double rouge_l = 0.0;
  double bleu4 = 0.0;
  std::optional<double> clair;
  std::optional<std::string> clair_error;
  bool words_pass = false;
  bool run_pass = false;
  bool rouge_pass = false;
  bool bleu_pass = false;
  bool clair_pass = false;
  TextThresholds thresholds;
};

// Scores `candidate` against `reference`. The CLAIR judge runs only when
// provided; its failure is recorded in clair_error and leaves clair unset.
TextVerdict score_text(std::string_view reference, std::string_view candidate, const TextThresholds& thresholds = {},
                       const JudgeFn* clair = nullptr);

}  // namespace leakprobe
