#include "wsgic/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

#include "wsgic/errors.hpp"

namespace wsgic {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct WordCounts {
  std::size_t predictions = 0;
  std::size_t true_positives = 0;
  std::size_t gt_instances = 0;
  std::size_t gt_hit = 0;
};

double f1_from(const WordCounts& c) {
  const double p = c.predictions ? static_cast<double>(c.true_positives) / c.predictions : 0.0;
  const double r = c.gt_instances ? static_cast<double>(c.gt_hit) / c.gt_instances : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::map<std::string, WordCounts> count_words(std::span<const GroundingRecord> records,
                                              bool correct_words_only) {
  if (records.empty()) throw NoRecords("grounding F1 needs at least one record");
  std::map<std::string, WordCounts> counts;
  for (const auto& rec : records) {
    std::map<std::string, std::vector<BoundingBox>> gt;
    for (const auto& [word, boxes] : rec.ground_truth) {
      auto& dst = gt[lower(word)];
      dst.insert(dst.end(), boxes.begin(), boxes.end());
    }
    std::map<std::string, std::vector<BoundingBox>> predicted;
    for (const auto& p : rec.predictions) {
      const std::string w = lower(p.word);
      auto it = gt.find(w);
      if (correct_words_only && it == gt.end()) continue;
      auto& c = counts[w];
      ++c.predictions;
      predicted[w].push_back(p.box);
      if (it == gt.end()) continue;
      const bool hit = std::any_of(it->second.begin(), it->second.end(),
                                   [&](const BoundingBox& g) { return iou(p.box, g) > kIouThreshold; });
      if (hit) ++c.true_positives;
    }
    for (const auto& [w, boxes] : gt) {
      auto pit = predicted.find(w);
      if (correct_words_only && pit == predicted.end()) continue;
      auto& c = counts[w];
      c.gt_instances += boxes.size();
      if (pit == predicted.end()) continue;
      for (const auto& g : boxes) {
        const bool hit = std::any_of(pit->second.begin(), pit->second.end(),
                                     [&](const BoundingBox& b) { return iou(b, g) > kIouThreshold; });
        if (hit) ++c.gt_hit;
      }
    }
  }
  return counts;
}

double macro_f1(const std::map<std::string, WordCounts>& counts) {
  if (counts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [_, c] : counts) total += f1_from(c);
  return total / static_cast<double>(counts.size());
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
  const long ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1) + 1;
  const long iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1) + 1;
  const long inter = ix > 0 && iy > 0 ? ix * iy : 0;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double f1_all(std::span<const GroundingRecord> records) { return macro_f1(count_words(records, false)); }

double f1_loc(std::span<const GroundingRecord> records) { return macro_f1(count_words(records, true)); }

double bleu(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references,
            int max_order) {
  if (max_order < 1 || max_order > 4) throw ConfigError("BLEU order must be in 1..4");
  if (candidates.empty()) throw EmptyCorpus("BLEU over an empty corpus");
  if (candidates.size() != references.size()) {
    throw LengthMismatch("BLEU needs one reference set per candidate");
  }
  std::vector<double> matches(max_order, 0.0), totals(max_order, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& refs = references[s];
    if (refs.empty()) throw EmptyCorpus("candidate without references");
    cand_len += static_cast<double>(cand.size());
    // Closest reference length, shorter one on ties.
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
      const auto dr = std::abs(static_cast<long>(r.size()) - static_cast<long>(cand.size()));
      const auto db = std::abs(static_cast<long>(best) - static_cast<long>(cand.size()));
      if (dr < db || (dr == db && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (int n = 1; n <= max_order; ++n) {
      std::map<Sentence, int> cand_counts;
      for (std::size_t i = 0; i + n <= cand.size(); ++i) {
        ++cand_counts[Sentence(cand.begin() + i, cand.begin() + i + n)];
      }
      std::map<Sentence, int> max_ref;
      for (const auto& r : refs) {
        std::map<Sentence, int> rc;
        for (std::size_t i = 0; i + n <= r.size(); ++i) ++rc[Sentence(r.begin() + i, r.begin() + i + n)];
        for (const auto& [g, k] : rc) max_ref[g] = std::max(max_ref[g], k);
      }
      for (const auto& [g, k] : cand_counts) {
        auto it = max_ref.find(g);
        matches[n - 1] += it == max_ref.end() ? 0 : std::min(k, it->second);
        totals[n - 1] += k;
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < max_order; ++n) {
    if (matches[n] == 0.0 || totals[n] == 0.0) return 0.0;
    log_sum += std::log(matches[n] / totals[n]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / max_order);
}

double exact_match(std::span<const Sentence> candidates,
                   std::span<const std::vector<Sentence>> references) {
  if (candidates.empty()) throw EmptyCorpus("exact match over an empty corpus");
  if (candidates.size() != references.size()) {
    throw LengthMismatch("exact match needs one reference set per candidate");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& refs = references[i];
    if (std::find(refs.begin(), refs.end(), candidates[i]) != refs.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(candidates.size());
}

double relation_map(std::span<const std::vector<double>> scores,
                    std::span<const std::vector<int>> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw LengthMismatch("relation mAP needs one label vector per score vector");
  }
  const std::size_t classes = scores[0].size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != classes || labels[i].size() != classes) {
      throw ShapeMismatch("relation mAP: inconsistent class count");
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a][c] > scores[b][c]; });
    std::size_t positives_seen = 0;
    double ap = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (labels[order[rank]][c] != 0) {
        ++positives_seen;
        ap += static_cast<double>(positives_seen) / static_cast<double>(rank + 1);
      }
    }
    if (positives_seen == 0) continue;
    total += ap / static_cast<double>(positives_seen);
    ++counted;
  }
  if (counted == 0) throw NoPositives("no relation class has a positive sample");
  return total / static_cast<double>(counted);
}

std::string MetricReport::to_table() const {
  std::map<std::string, std::string> rows;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  rows["bleu1"] = fmt(bleu[0]);
  rows["bleu2"] = fmt(bleu[1]);
  rows["bleu3"] = fmt(bleu[2]);
  rows["bleu4"] = fmt(bleu[3]);
  rows["exact_match"] = fmt(exact_match);
  rows["f1_all"] = fmt(f1_all);
  rows["f1_loc"] = fmt(f1_loc);
  rows["images"] = std::to_string(images);
  rows["relation_map"] = relation_map ? fmt(*relation_map) : "n/a";
  std::string out;
  for (const auto& [k, v] : rows) out += k + std::string(14 - k.size(), ' ') + v + "\n";
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["bleu"] = bleu;
  j["exact_match"] = exact_match;
  j["f1_all"] = f1_all;
  j["f1_loc"] = f1_loc;
  j["images"] = images;
  j["relation_map"] = relation_map ? nlohmann::json(*relation_map) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport r;
  try {
    auto j = nlohmann::json::parse(text);
    r.bleu = j.at("bleu").get<std::array<double, 4>>();
    r.exact_match = j.at("exact_match").get<double>();
    r.f1_all = j.at("f1_all").get<double>();
    r.f1_loc = j.at("f1_loc").get<double>();
    r.images = j.at("images").get<std::size_t>();
    if (!j.at("relation_map").is_null()) r.relation_map = j.at("relation_map").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

}  // namespace wsgic
