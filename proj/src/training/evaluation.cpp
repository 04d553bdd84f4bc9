#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/training.hpp"

namespace wsgic {

namespace {

using nlohmann::json;

std::vector<ResultRecord> records_of(std::span<const CaptionPrediction> predictions) {
  std::vector<ResultRecord> out;
  for (const auto& p : predictions) {
    for (const auto& g : p.grounded) out.push_back({p.image_id, g.word, g.box, g.score});
  }
  return out;
}

std::string flag(bool b) { return b ? "1" : "0"; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string ResultRecord::to_json() const {
  json j = {{"box", {box.x1, box.y1, box.x2, box.y2}},
            {"image_id", image_id},
            {"score", score},
            {"word", word}};
  return j.dump();
}

ResultRecord ResultRecord::from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    ResultRecord r;
    const auto& b = j.at("box");
    r.box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    r.image_id = j.at("image_id").get<std::string>();
    r.score = j.at("score").get<double>();
    r.word = j.at("word").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed result record: ") + e.what());
  }
}

MetricReport score_predictions(std::span<const CaptionPrediction> predictions,
                               std::span<const SceneSample> samples, bool with_relations) {
  if (predictions.size() != samples.size()) {
    throw LengthMismatch("one prediction per sample is required");
  }
  if (samples.empty()) throw NoRecords("nothing to score");
  std::vector<GroundingRecord> grounding;
  std::vector<Sentence> candidates;
  std::vector<std::vector<Sentence>> references;
  std::vector<std::vector<double>> rel_scores;
  std::vector<std::vector<int>> rel_labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& p = predictions[i];
    const auto& s = samples[i];
    GroundingRecord rec;
    rec.image_id = s.id;
    rec.ground_truth = s.ground_truth();
    for (const auto& g : p.grounded) rec.predictions.push_back({g.word, g.box, g.score});
    grounding.push_back(std::move(rec));
    candidates.push_back(p.words);
    references.push_back({s.caption});
    if (with_relations) {
      rel_scores.push_back(p.relation_scores);
      std::vector<int> labels(p.relation_scores.size(), 0);
      for (int id : s.relation_ids) {
        if (id >= 0 && static_cast<std::size_t>(id) < labels.size()) labels[static_cast<std::size_t>(id)] = 1;
      }
      rel_labels.push_back(std::move(labels));
    }
  }
  MetricReport r;
  r.images = samples.size();
  r.f1_all = f1_all(grounding);
  r.f1_loc = f1_loc(grounding);
  for (int n = 1; n <= 4; ++n) r.bleu[static_cast<std::size_t>(n - 1)] = bleu(candidates, references, n);
  r.exact_match = exact_match(candidates, references);
  if (with_relations) {
    try {
      r.relation_map = relation_map(rel_scores, rel_labels);
    } catch (const NoPositives&) {
      r.relation_map.reset();
    }
  }
  return r;
}

EvalResult evaluate(const Captioner<float>& model, std::span<const SceneSample> samples,
                    const Vocabulary& vocab, const EvalOptions& options) {
  EvalResult out;
  out.predictions.reserve(samples.size());
  for (const auto& s : samples) {
    auto p = model.predict(s.image, vocab, options);
    p.image_id = s.id;
    out.predictions.push_back(std::move(p));
  }
  out.report = score_predictions(out.predictions, samples, model.config().use_rel);
  out.records = records_of(out.predictions);
  return out;
}

EvalResult evaluate_oracle(std::span<const SceneSample> samples, const EvalOptions& options) {
  EvalResult out;
  for (const auto& s : samples) {
    CaptionPrediction p;
    p.image_id = s.id;
    p.words = s.caption;
    for (const auto& g : s.groundable) {
      if (std::find(options.groundable_words.begin(), options.groundable_words.end(), g.word) ==
          options.groundable_words.end()) {
        continue;
      }
      p.grounded.push_back({g.position, g.word, g.box, 1.0, {}});
    }
    out.predictions.push_back(std::move(p));
  }
  out.report = score_predictions(out.predictions, samples, false);
  out.records = records_of(out.predictions);
  return out;
}

std::vector<AblationCell> expand_ablation(const TrainConfig& base, const AblationAxes& axes) {
  auto or_base = [](const auto& axis, auto value) {
    using V = decltype(value);
    return axis.empty() ? std::vector<V>{value} : std::vector<V>(axis.begin(), axis.end());
  };
  const auto& m = base.model;
  std::vector<AblationCell> cells;
  for (bool rgm : or_base(axes.use_rgm, m.use_rgm)) {
    for (bool cls : or_base(axes.use_cls, m.use_cls)) {
      for (bool rel : or_base(axes.use_rel, m.use_rel)) {
        for (std::size_t heads : or_base(axes.heads, m.decoder_heads)) {
          for (std::size_t lr : or_base(axes.rel_layers, m.encoder.rel_layers)) {
            AblationCell c;
            c.config = base;
            c.config.model.use_rgm = rgm;
            c.config.model.use_cls = cls;
            c.config.model.use_rel = rel;
            c.config.model.decoder_heads = heads;
            c.config.model.encoder.rel_layers = lr;
            c.name = std::string(rgm ? "rgm" : "gm") + "_cls" + flag(cls) + "_rel" + flag(rel) +
                     "_h" + std::to_string(heads) + "_lr" + std::to_string(lr);
            cells.push_back(std::move(c));
          }
        }
      }
    }
  }
  return cells;
}

std::vector<AblationRow> run_ablation_matrix(const std::vector<AblationCell>& cells,
                                             const Corpus& corpus,
                                             const std::filesystem::path& out_dir,
                                             const EvalOptions& options,
                                             const std::function<void(const std::string&)>& log) {
  const std::string hash = hex64(corpus.hash());
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    AblationRow row;
    row.cell = cell;
    row.corpus_hash = hash;
    if (log) log("cell " + cell.name + " (corpus " + hash + ")");
    try {
      auto model_cfg = cell.config.model;
      model_cfg.encoder.num_relations = corpus.relations.size();
      TrainConfig cfg = cell.config;
      cfg.model = model_cfg;
      Captioner<float> model(model_cfg, corpus.vocab.size(), cfg.seed);
      TrainOptions topt;
      if (!out_dir.empty()) topt.out_dir = out_dir / cell.name;
      if (log) {
        topt.on_epoch = [&](const EpochLog& e) {
          log("  " + cell.name + " epoch " + std::to_string(e.epoch) + " train " + fmt(e.train.total) +
              " val " + fmt(e.val.total));
        };
      }
      train(model, cfg, corpus, topt);
      if (!out_dir.empty()) {
        auto best = load_captioner(topt.out_dir);
        row.report = evaluate(*best, corpus.test, corpus.vocab, options).report;
      } else {
        row.report = evaluate(model, corpus.test, corpus.vocab, options).report;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
      if (log) log("cell " + cell.name + " failed: " + row.error);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "cell                      rgm cls rel heads L_r  exact   f1_all  f1_loc  rel_map  corpus\n";
  for (const auto& r : rows) {
    const auto& m = r.cell.config.model;
    char head[160];
    std::snprintf(head, sizeof head, "%-25s %-3s %-3s %-3s %-5zu %-4zu", r.cell.name.c_str(),
                  flag(m.use_rgm).c_str(), flag(m.use_cls).c_str(), flag(m.use_rel).c_str(),
                  m.decoder_heads, m.encoder.rel_layers);
    out << head;
    if (r.report) {
      const auto& rep = *r.report;
      out << " " << fmt(rep.exact_match) << "  " << fmt(rep.f1_all) << "  " << fmt(rep.f1_loc) << "  "
          << (rep.relation_map ? fmt(*rep.relation_map) : std::string("  n/a ")) << "   "
          << r.corpus_hash << "\n";
    } else {
      out << " failed: " << r.error << "\n";
    }
  }
  return out.str();
}

}  // namespace wsgic
