#pragma once

// Check suites shared by the unit tests and the acceptance runner. Each
// returns one CaseResult per named check.

#include <string>
#include <vector>

namespace wsgic::testing {

inline constexpr double kPerOpTolerance = 1e-4;
inline constexpr double kEndToEndTolerance = 1e-3;
inline constexpr double kSoftmaxSumTolerance = 1e-6;
inline constexpr double kGoldenTolerance = 1e-9;

struct CaseResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Central-difference checks of every differentiable op and layer, plus the
// end-to-end decoder and captioner losses.
std::vector<CaseResult> gradient_suite();

// Softmax normalisation, prefix split and recurrence sensitivity over
// `decodes` random greedy decodes.
std::vector<CaseResult> attention_suite(std::size_t decodes = 100);

// Box extraction, IoU and threshold invariance against brute-force oracles.
std::vector<CaseResult> grounding_suite(std::size_t masks = 500, std::size_t box_pairs = 1000,
                                        std::size_t maps = 200);

// Hand-computed metric values.
std::vector<CaseResult> metric_golden_suite();

bool all_passed(const std::vector<CaseResult>& results);
std::string summarize_failures(const std::vector<CaseResult>& results);

}  // namespace wsgic::testing
