#pragma once

// Grounding and caption metrics.
//
// Grounding F1 convention (per object word c, macro-averaged over words):
//   a prediction of c is a true positive when c is among the image's
//   ground-truth words and its box has IoU > 0.5 with some ground-truth box
//   of c; precision_c = TP_c / #predictions of c; recall_c = #ground-truth
//   boxes of c hit by some prediction of c / #ground-truth boxes of c.
// F1_all averages over every word that occurs in ground truth or predictions.
// F1_loc keeps only predictions whose word is correct for the image, counts
// ground truth only for (image, word) pairs that were predicted, and averages
// over the words that survive that filter. F1_loc >= F1_all always holds.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsgic/grounding.hpp"

namespace wsgic {

inline constexpr double kIouThreshold = 0.5;

struct PredictedWord {
  std::string word;
  BoundingBox box;
  double score = 0.0;
};

struct GroundingRecord {
  std::string image_id;
  std::vector<PredictedWord> predictions;
  std::map<std::string, std::vector<BoundingBox>> ground_truth;  // word -> instances
};

using Sentence = std::vector<std::string>;

// Pixel-count intersection over union with inclusive corners.
double iou(const BoundingBox& a, const BoundingBox& b);

double f1_all(std::span<const GroundingRecord> records);
double f1_loc(std::span<const GroundingRecord> records);

// Corpus BLEU-n: clipped n-gram precisions for orders 1..n, uniform geometric
// mean, brevity penalty against the closest reference length.
double bleu(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references,
            int max_order);

// Fraction of candidates identical to one of their references.
double exact_match(std::span<const Sentence> candidates,
                   std::span<const std::vector<Sentence>> references);

// Mean over classes with at least one positive of the average precision of
// the score-ranked sample list. Ties keep sample order.
double relation_map(std::span<const std::vector<double>> scores,
                    std::span<const std::vector<int>> labels);

struct MetricReport {
  double f1_all = 0.0;
  double f1_loc = 0.0;
  std::array<double, 4> bleu{};
  double exact_match = 0.0;
  std::optional<double> relation_map;  // absent when the relation head is off
  std::size_t images = 0;

  // "key value" lines sorted by key.
  std::string to_table() const;
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

}  // namespace wsgic
