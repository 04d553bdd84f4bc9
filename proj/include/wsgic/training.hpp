#pragma once

// The full captioner (encoder + decoder) with its losses and teacher-forced
// training loop. Evaluation and the ablation matrix runner live here too.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsgic/adam.hpp"
#include "wsgic/decoder.hpp"
#include "wsgic/encoder.hpp"
#include "wsgic/grounding.hpp"
#include "wsgic/metrics.hpp"
#include "wsgic/synthcorpus.hpp"

namespace wsgic {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t decoder_heads = 4;
  std::size_t decoder_ffn_mult = 4;
  std::size_t max_len = 16;
  bool use_rgm = true;
  bool use_cls = true;
  bool use_rel = true;

  TokenFlags tokens() const { return {use_cls, use_rel}; }
  DecoderConfig decoder(std::size_t vocab) const;
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 5e-4;
  double anneal = 0.8;
  std::size_t anneal_every = 3;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;
  void validate() const;
};

// lr0 * anneal^floor(epoch / anneal_every), epoch counted from 0.
double learning_rate(const TrainConfig& config, std::size_t epoch);

// Sigmoid binary cross-entropy over all classes (positive and negative
// terms), summed over classes. targets are 0/1.
template <typename T>
Tensor<T> loss_mlc(const Tensor<T>& logits, std::span<const T> targets);

// Mean over non-PAD positions of -log softmax(step_logits[t])[targets[t]].
template <typename T>
Tensor<T> loss_xe(const std::vector<Tensor<T>>& step_logits, std::span<const int> targets,
                  int pad_id);

struct LossBreakdown {
  double l_xe = 0.0;
  double l_mlc = 0.0;
  double total = 0.0;
};

template <typename T>
struct CaptionerLosses {
  Tensor<T> xe;
  Tensor<T> mlc;  // scalar zero when the relation branch is off
  Tensor<T> total;
};

struct GroundedToken {
  std::size_t position = 0;
  std::string word;
  BoundingBox box;
  double score = 0.0;  // peak head-summed attention weight
  Vlam vlam;
};

struct CaptionPrediction {
  std::string image_id;
  std::vector<int> tokens;
  std::vector<std::string> words;
  std::vector<std::vector<double>> attention;  // head-summed s* per token
  std::vector<GroundedToken> grounded;
  std::vector<double> relation_scores;  // sigmoid of the relation head; empty if off
  bool truncated = false;
};

struct EvalOptions {
  double rho = kDefaultRho;
  std::vector<std::string> groundable_words = shape_nouns();
};

template <typename T>
class Captioner {
 public:
  Captioner(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed);
  Captioner(const Captioner&) = delete;
  Captioner& operator=(const Captioner&) = delete;

  // Teacher-forced losses for one image. caption holds token ids without
  // BOS/EOS; relation_targets is the multi-hot label vector.
  CaptionerLosses<T> losses(const Image& image, std::span<const int> caption,
                            std::span<const T> relation_targets) const;

  EncoderOutput<T> encode(const Image& image) const;

  // Greedy caption plus a box for every decoded word in the groundable set.
  CaptionPrediction predict(const Image& image, const Vocabulary& vocab,
                            const EvalOptions& options) const;

  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }
  const ModelConfig& config() const { return config_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Decoder<T>& decoder() const { return decoder_; }
  std::size_t vocab_size() const { return vocab_size_; }

 private:
  ModelConfig config_;
  std::size_t vocab_size_;
  ParameterStore<T> store_;
  Rng init_rng_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

// Multi-hot relation label vector of length num_classes.
template <typename T>
std::vector<T> relation_targets(std::span<const int> ids, std::size_t num_classes);

struct EpochLog {
  std::size_t epoch = 0;  // 0-based
  LossBreakdown train;
  LossBreakdown val;
  double lr = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm over the epoch's steps
  std::string param_hash;  // FNV-1a over the parameter bytes after the epoch
  double seconds = 0.0;

  std::string to_json() const;  // key-sorted, one line
  static EpochLog from_json(const std::string& line);
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

// Files written to out_dir: model.json, last.ckpt, last.optim, best.ckpt,
// train_state.json and train_log.jsonl (one EpochLog per line).
TrainResult train(Captioner<float>& model, const TrainConfig& config, const Corpus& corpus,
                  const TrainOptions& options);

// Mean losses over a split without recording a graph.
LossBreakdown evaluate_loss(const Captioner<float>& model, std::span<const SceneSample> samples,
                            const Vocabulary& vocab);

void save_model_config(const ModelConfig& config, std::size_t vocab_size,
                       const std::filesystem::path& path);
// Accepts a run directory (uses best.ckpt) or a .ckpt file next to model.json.
std::unique_ptr<Captioner<float>> load_captioner(const std::filesystem::path& checkpoint);

struct ResultRecord {
  std::string image_id;
  std::string word;
  BoundingBox box;
  double score = 0.0;

  std::string to_json() const;  // key-sorted, one line
  static ResultRecord from_json(const std::string& line);
};

struct EvalResult {
  MetricReport report;
  std::vector<ResultRecord> records;
  std::vector<CaptionPrediction> predictions;
};

MetricReport score_predictions(std::span<const CaptionPrediction> predictions,
                               std::span<const SceneSample> samples, bool with_relations);

EvalResult evaluate(const Captioner<float>& model, std::span<const SceneSample> samples,
                    const Vocabulary& vocab, const EvalOptions& options);

// Feeds the reference captions and reference boxes through the scoring path.
EvalResult evaluate_oracle(std::span<const SceneSample> samples, const EvalOptions& options);

struct AblationAxes {
  std::vector<bool> use_rgm;
  std::vector<bool> use_cls;
  std::vector<bool> use_rel;
  std::vector<std::size_t> heads;       // decoder grounding heads
  std::vector<std::size_t> rel_layers;  // L_r
};

struct AblationCell {
  std::string name;
  TrainConfig config;
};

// Cartesian product of the axes; an empty axis keeps the base value.
std::vector<AblationCell> expand_ablation(const TrainConfig& base, const AblationAxes& axes);

struct AblationRow {
  AblationCell cell;
  std::optional<MetricReport> report;
  std::string error;  // non-empty when the cell failed
  std::string corpus_hash;
};

// Trains and evaluates each cell on the test split; a failing cell is
// recorded and the remaining cells still run.
std::vector<AblationRow> run_ablation_matrix(const std::vector<AblationCell>& cells,
                                             const Corpus& corpus,
                                             const std::filesystem::path& out_dir,
                                             const EvalOptions& options,
                                             const std::function<void(const std::string&)>& log);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace wsgic
