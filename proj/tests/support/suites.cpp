#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "wsgic/decoder.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/metrics.hpp"
#include "wsgic/training.hpp"

namespace wsgic::testing {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

// Tracks the first failure and a count of checks for one named case.
struct Tally {
  explicit Tally(std::string n) : name(std::move(n)) {}
  std::string name;
  std::size_t checks = 0;
  std::string first_failure;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && first_failure.empty()) first_failure = what;
  }
  CaseResult result() const {
    if (!first_failure.empty()) return {name, false, first_failure};
    return {name, checks > 0, std::to_string(checks) + " checks"};
  }
};

bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Tensor<float> random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor<float>::from({rows, cols}, std::move(v));
}

AttentionState<float> random_attention(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  AttentionState<float> s;
  s.s_star_sum = Tensor<float>::from({1, n}, std::move(v));
  return s;
}

}  // namespace

std::vector<CaseResult> attention_suite(std::size_t decodes) {
  DecoderConfig cfg;
  cfg.dim = 64;
  cfg.heads = 4;
  cfg.vocab = 20;
  cfg.num_patches = 64;
  cfg.max_len = 16;
  const std::size_t prefix = 2;

  // Two decoders with identical parameters, differing only in the recurrence.
  ParameterStore<float> rgm_store, gm_store;
  Rng rng_a(404), rng_b(404);
  Decoder<float> rgm(rgm_store, cfg, rng_a);
  DecoderConfig gm_cfg = cfg;
  gm_cfg.use_rgm = false;
  Decoder<float> gm(gm_store, gm_cfg, rng_b);

  Tally sums{"softmax_rows_sum_to_one"};
  Tally split{"prefix_split_drops_rows_0_1"};
  Tally pooled{"grounding_signal_is_head_sum"};
  Tally gm_inv{"gm_ignores_previous_attention"};
  Tally rgm_dep{"rgm_depends_on_previous_attention"};
  double worst_sum_err = 0.0;

  NoGradGuard no_grad;
  Rng rng(77);
  for (std::size_t d = 0; d < decodes; ++d) {
    const auto v = random_matrix(prefix + cfg.num_patches, cfg.dim, rng);
    const auto ctx = rgm.prepare(v, prefix);
    const auto gm_ctx = gm.prepare(v, prefix);
    auto state = StepState<float>::initial(cfg.dim, cfg.num_patches);
    int token = cfg.bos;
    for (std::size_t t = 0; t < cfg.max_len; ++t) {
      auto out = rgm.language_step(token, state, ctx);
      const auto& a = out.attn;
      const std::string where = "decode " + std::to_string(d) + " step " + std::to_string(t);

      split.expect(a.s_full.size() == cfg.heads && a.s_star.size() == cfg.heads, where + ": head count");
      for (std::size_t i = 0; i < a.s_full.size(); ++i) {
        const auto full = a.s_full[i].data();
        const auto star = a.s_star[i].data();
        double total = 0.0;
        for (float x : full) total += x;
        worst_sum_err = std::max(worst_sum_err, std::abs(total - 1.0));
        sums.expect(std::abs(total - 1.0) <= kSoftmaxSumTolerance,
                    where + fmt(": head sum off by %.3e", std::abs(total - 1.0)));
        split.expect(full.size() == prefix + cfg.num_patches && star.size() == cfg.num_patches &&
                         bitwise_equal(star, full.subspan(prefix)),
                     where + ": s* is not s_full without its first two entries");
      }
      std::vector<float> head_sum(cfg.num_patches, 0.0f);
      for (const auto& s : a.s_star) {
        for (std::size_t j = 0; j < cfg.num_patches; ++j) head_sum[j] += s.data()[j];
      }
      pooled.expect(bitwise_equal(head_sum, a.s_star_sum.data()), where + ": pooled signal");

      // Perturbation test on the attention recurrence at this step's h.
      const auto h = state.h;
      const auto prev_a = random_attention(cfg.num_patches, rng);
      const auto prev_b = random_attention(cfg.num_patches, rng);
      const auto g1 = gm.rgm_step(h, prev_a, gm_ctx);
      const auto g2 = gm.rgm_step(h, prev_b, gm_ctx);
      bool same = true;
      for (std::size_t i = 0; i < cfg.heads; ++i) same = same && bitwise_equal(g1.s_full[i].data(), g2.s_full[i].data());
      gm_inv.expect(same, where + ": GM attention changed with attn_prev");
      const auto r1 = rgm.rgm_step(h, prev_a, ctx);
      const auto r2 = rgm.rgm_step(h, prev_b, ctx);
      rgm_dep.expect(!bitwise_equal(r1.s_star_sum.data(), r2.s_star_sum.data()),
                     where + ": RGM attention ignored attn_prev");

      token = argmax<float>(out.logits.data());
      if (token == cfg.eos) break;
    }
  }
  auto sum_result = sums.result();
  if (sum_result.passed) sum_result.detail += fmt(", worst |sum - 1| = %.3e", worst_sum_err);
  return {sum_result, split.result(), pooled.result(), gm_inv.result(), rgm_dep.result()};
}

std::vector<CaseResult> grounding_suite(std::size_t masks, std::size_t box_pairs, std::size_t maps) {
  Rng rng(31337);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  Tally boxes{"largest_region_box_matches_union_find"};
  for (std::size_t k = 0; k < masks; ++k) {
    const int w = 1 + static_cast<int>(rng() % 24), h = 1 + static_cast<int>(rng() % 24);
    const double density = 0.1 + 0.8 * u(rng);
    BinaryMask m{static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                 std::vector<std::uint8_t>(static_cast<std::size_t>(w * h))};
    bool any = false;
    for (auto& b : m.bits) {
      b = u(rng) < density ? 1 : 0;
      any = any || b;
    }
    if (!any) m.bits[rng() % m.bits.size()] = 1;
    const auto got = largest_region_box(m);
    const auto want = union_find_largest_box(m.bits, w, h);
    boxes.expect(got == want, "mask " + std::to_string(k) + " (" + std::to_string(w) + "x" +
                                  std::to_string(h) + ") box differs from oracle");
  }
  {
    BinaryMask empty{4, 4, std::vector<std::uint8_t>(16, 0)};
    bool threw = false;
    try {
      largest_region_box(empty);
    } catch (const EmptyMask&) {
      threw = true;
    }
    boxes.expect(threw, "empty mask did not raise EmptyMask");
  }

  Tally ious{"iou_matches_pixel_count"};
  auto random_box = [&] {
    int x1 = static_cast<int>(rng() % 64), x2 = static_cast<int>(rng() % 64);
    int y1 = static_cast<int>(rng() % 64), y2 = static_cast<int>(rng() % 64);
    return BoundingBox{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
  };
  for (std::size_t k = 0; k < box_pairs; ++k) {
    const auto a = random_box(), b = random_box();
    const double got = iou(a, b);
    ious.expect(got == pixel_iou(a, b, 64, 64) && got == iou(b, a),
                "pair " + std::to_string(k) + fmt(": iou %.17g vs oracle %.17g", got, pixel_iou(a, b, 64, 64)));
  }

  Tally scaling{"threshold_mask_scale_invariant"};
  for (std::size_t k = 0; k < maps; ++k) {
    std::vector<double> weights(64);
    for (auto& x : weights) x = std::pow(u(rng), 4.0);
    const auto vlam = upsample_vlam(weights, 8, 8, 8);
    const auto base = threshold_mask(vlam);
    for (double factor : {std::ldexp(1.0, static_cast<int>(rng() % 40) - 20), std::pow(10.0, 6.0 * u(rng) - 3.0)}) {
      Vlam scaled = vlam;
      for (auto& x : scaled.map) x *= factor;
      scaling.expect(threshold_mask(scaled).bits == base.bits,
                     "map " + std::to_string(k) + fmt(": mask changed under scale %.6g", factor));
    }
  }
  return {boxes.result(), ious.result(), scaling.result()};
}

std::vector<CaseResult> metric_golden_suite() {
  std::vector<CaseResult> out;
  auto near = [&](const std::string& name, double got, double want) {
    out.push_back({name, std::abs(got - want) <= kGoldenTolerance,
                   fmt("got %.15f, expected %.15f", got, want)});
  };
  auto split = [](const std::string& s) {
    Sentence words;
    std::size_t i = 0;
    while (i < s.size()) {
      const auto j = s.find(' ', i);
      words.push_back(s.substr(i, j == std::string::npos ? std::string::npos : j - i));
      if (j == std::string::npos) break;
      i = j + 1;
    }
    return words;
  };
  auto corpus_bleu = [&](const std::vector<std::string>& cands, const std::vector<std::string>& refs, int n) {
    std::vector<Sentence> c;
    std::vector<std::vector<Sentence>> r;
    for (const auto& s : cands) c.push_back(split(s));
    for (const auto& s : refs) r.push_back({split(s)});
    return bleu(c, r, n);
  };

  near("bleu1_repeated_word", corpus_bleu({"the the the"}, {"the cat"}, 1), 1.0 / 3.0);
  near("bleu1_brevity_half_length", corpus_bleu({"a b"}, {"a b c d"}, 1), std::exp(-1.0));
  near("bleu4_identical", corpus_bleu({"a red square above a blue circle"}, {"a red square above a blue circle"}, 4), 1.0);
  {
    const std::vector<std::string> cands = {"a red square above a blue circle", "a red square", "a blue blue blue",
                                            "circle", "a green triangle left_of a yellow square"};
    const std::vector<std::string> refs = {"a red square above a blue circle", "a red circle", "a blue circle below",
                                           "a green circle", "a green triangle right_of a yellow square"};
    // Clipped precisions 18/22, 12/17, 7/13, 4/9; c = 22, r = 24.
    const double p[4] = {18.0 / 22.0, 12.0 / 17.0, 7.0 / 13.0, 4.0 / 9.0};
    const double bp = std::exp(1.0 - 24.0 / 22.0);
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
      log_sum += std::log(p[n - 1]);
      near("bleu" + std::to_string(n) + "_five_sentence_set", corpus_bleu(cands, refs, n),
           bp * std::exp(log_sum / n));
    }
    auto rc = cands;
    auto rr = refs;
    std::reverse(rc.begin(), rc.end());
    std::reverse(rr.begin(), rr.end());
    near("bleu4_permutation_invariant", corpus_bleu(rc, rr, 4), corpus_bleu(cands, refs, 4));
  }

  near("iou_overlapping_squares", iou({0, 0, 9, 9}, {5, 5, 14, 14}), 1.0 / 7.0);
  near("iou_disjoint", iou({0, 0, 3, 3}, {10, 10, 12, 12}), 0.0);

  {
    GroundingRecord r{"img", {{"circle", {0, 0, 9, 9}, 1.0}},
                      {{"circle", {{0, 0, 9, 9}, {30, 30, 39, 39}}}}};
    // IoU 0.8 against the first instance: 80 of 100 pixels.
    r.predictions[0].box = {0, 0, 9, 7};
    near("f1_all_one_of_two_instances", f1_all(std::span(&r, 1)), 2.0 / 3.0);
  }
  {
    GroundingRecord r{"img",
                      {{"square", {0, 0, 9, 9}, 1.0}, {"square", {30, 30, 39, 33}, 1.0}},
                      {{"square", {{0, 0, 9, 9}, {30, 30, 39, 39}}}}};
    // Second prediction has IoU 0.4 with the second instance.
    near("f1_loc_one_hit_one_miss", f1_loc(std::span(&r, 1)), 0.5);
  }
  {
    const std::vector<std::vector<double>> scores = {{0.9}, {0.5}, {0.1}};
    const std::vector<std::vector<int>> labels = {{0}, {0}, {1}};
    near("relation_map_reversed_ranking", relation_map(scores, labels), 1.0 / 3.0);
  }
  {
    CorpusSpec spec;
    spec.train = 120;
    spec.val = 10;
    spec.test = 60;
    const auto corpus = build_corpus(spec);
    const auto oracle = evaluate_oracle(corpus.test, EvalOptions{});
    near("oracle_injection_f1_all", oracle.report.f1_all, 1.0);
    near("oracle_injection_f1_loc", oracle.report.f1_loc, 1.0);
  }
  return out;
}

bool all_passed(const std::vector<CaseResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return !results.empty();
}

std::string summarize_failures(const std::vector<CaseResult>& results) {
  std::string out;
  for (const auto& r : results) {
    if (!r.passed) out += (out.empty() ? "" : "; ") + r.name + ": " + r.detail;
  }
  return out;
}

}  // namespace wsgic::testing
