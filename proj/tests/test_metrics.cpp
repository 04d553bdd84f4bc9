#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "suites.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/metrics.hpp"
#include "wsgic/params.hpp"

using namespace wsgic;

namespace {

BoundingBox random_box(Rng& rng, int canvas) {
  std::uniform_int_distribution<int> u(0, canvas - 1);
  int a = u(rng), b = u(rng), c = u(rng), d = u(rng);
  return {std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
}

std::vector<GroundingRecord> random_records(Rng& rng) {
  const std::vector<std::string> words = {"square", "circle", "triangle", "star"};
  std::uniform_int_distribution<int> count(0, 3), pick(0, 3);
  std::bernoulli_distribution near(0.5);
  std::vector<GroundingRecord> records(std::uniform_int_distribution<int>(1, 6)(rng));
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    r.image_id = "img" + std::to_string(i);
    for (int k = count(rng); k > 0; --k) r.ground_truth[words[pick(rng)]].push_back(random_box(rng, 32));
    for (int k = count(rng); k > 0; --k) {
      PredictedWord p{words[pick(rng)], random_box(rng, 32), 1.0};
      auto it = r.ground_truth.find(p.word);
      if (it != r.ground_truth.end() && near(rng)) p.box = it->second.front();
      r.predictions.push_back(p);
    }
  }
  return records;
}

}  // namespace

TEST_CASE("metric golden values") {
  for (const auto& c : testing::metric_golden_suite()) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
}

TEST_CASE("iou matches a pixel count and stays in [0, 1]") {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    auto a = random_box(rng, 20), b = random_box(rng, 20);
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(testing::pixel_iou(a, b, 20, 20)));
  }
  CHECK(iou({0, 0, 4, 4}, {0, 0, 4, 4}) == 1.0);
}

TEST_CASE("f1_loc never falls below f1_all") {
  Rng rng(5);
  int nontrivial = 0;
  for (int trial = 0; trial < 500; ++trial) {
    auto records = random_records(rng);
    bool any = false;
    for (const auto& r : records) any = any || !r.predictions.empty() || !r.ground_truth.empty();
    if (!any) continue;
    const double all = f1_all(records), loc = f1_loc(records);
    CHECK(all >= 0.0);
    CHECK(loc <= 1.0);
    CHECK(loc >= all - 1e-12);
    nontrivial += loc > all;
  }
  CHECK(nontrivial > 0);
}

TEST_CASE("grounding F1 does not depend on record order") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto records = random_records(rng);
    const double all = f1_all(records), loc = f1_loc(records);
    std::reverse(records.begin(), records.end());
    CHECK(f1_all(records) == doctest::Approx(all));
    CHECK(f1_loc(records) == doctest::Approx(loc));
  }
}

TEST_CASE("metric error conditions") {
  CHECK_THROWS_AS(f1_all({}), NoRecords);
  CHECK_THROWS_AS(f1_loc({}), NoRecords);
  CHECK_THROWS_AS(bleu({}, {}, 4), EmptyCorpus);
  CHECK_THROWS_AS(exact_match({}, {}), EmptyCorpus);
  const std::vector<Sentence> cand = {{"a"}};
  const std::vector<std::vector<Sentence>> two = {{{"a"}}, {{"b"}}};
  CHECK_THROWS_AS(bleu(cand, two, 4), LengthMismatch);
  const std::vector<std::vector<double>> scores = {{0.3, 0.9}, {0.1, 0.2}};
  const std::vector<std::vector<int>> none = {{0, 0}, {0, 0}};
  CHECK_THROWS_AS(relation_map(scores, none), NoPositives);
}

TEST_CASE("relation mAP ignores classes without positives") {
  const std::vector<std::vector<double>> scores = {{0.9, 0.1}, {0.2, 0.8}, {0.4, 0.3}};
  const std::vector<std::vector<int>> labels = {{1, 0}, {0, 0}, {1, 0}};
  CHECK(relation_map(scores, labels) == doctest::Approx(1.0));
}

TEST_CASE("exact match") {
  const std::vector<Sentence> cand = {{"a", "red", "square"}, {"a", "blue"}};
  const std::vector<std::vector<Sentence>> refs = {{{"a", "red", "square"}}, {{"a", "blue", "circle"}}};
  CHECK(exact_match(cand, refs) == 0.5);
}

TEST_CASE("metric report round trips through JSON and prints sorted keys") {
  MetricReport r;
  r.f1_all = 0.125;
  r.f1_loc = 0.5;
  r.bleu = {0.9, 0.8, 0.7, 0.6};
  r.exact_match = 0.25;
  r.relation_map = 0.75;
  r.images = 200;
  auto back = MetricReport::from_json(r.to_json());
  CHECK(back.f1_all == r.f1_all);
  CHECK(back.f1_loc == r.f1_loc);
  CHECK(back.bleu == r.bleu);
  CHECK(back.exact_match == r.exact_match);
  CHECK(back.relation_map == r.relation_map);
  CHECK(back.images == r.images);

  r.relation_map.reset();
  CHECK_FALSE(MetricReport::from_json(r.to_json()).relation_map.has_value());
  CHECK_THROWS_AS(MetricReport::from_json("{not json"), IoError);

  const std::string table = r.to_table();
  CHECK(table.find("bleu1") < table.find("exact_match"));
  CHECK(table.find("exact_match") < table.find("f1_all"));
}
