#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wsgic/checkpoint.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/training.hpp"

namespace wsgic {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json losses_json(const LossBreakdown& l) {
  return {{"l_mlc", l.l_mlc}, {"l_xe", l.l_xe}, {"total", l.total}};
}

LossBreakdown losses_from(const json& j) {
  return {j.at("l_xe").get<double>(), j.at("l_mlc").get<double>(), j.at("total").get<double>()};
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void dump(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string parameter_hash(const ParameterStore<float>& params) {
  const auto flat = params.flatten();
  std::string bytes(flat.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), flat.data(), bytes.size());
  return hex64(fnv1a64(bytes));
}

void save_optimizer(const ParameterStore<float>& params, const AdamState<float>& state,
                    const fs::path& path) {
  std::vector<TensorRecord> records;
  for (const auto& [name, p] : params) {
    for (const auto* moments : {&state.m, &state.v}) {
      auto it = moments->find(name);
      if (it == moments->end()) continue;
      records.push_back({(moments == &state.m ? "m/" : "v/") + name, p.tensor.shape(), it->second});
    }
  }
  write_records(path, std::move(records));
}

void load_optimizer(const ParameterStore<float>& params, AdamState<float>& state,
                    const fs::path& path) {
  state.m.clear();
  state.v.clear();
  for (auto& rec : read_records(path)) {
    const bool is_m = rec.name.rfind("m/", 0) == 0;
    const bool is_v = rec.name.rfind("v/", 0) == 0;
    const std::string name = rec.name.substr(2);
    if ((!is_m && !is_v) || !params.contains(name) ||
        params.at(name).tensor.numel() != rec.values.size()) {
      throw IoError("optimizer state does not match the model: " + rec.name);
    }
    (is_m ? state.m : state.v)[name] = std::move(rec.values);
  }
}

struct PreparedSample {
  const SceneSample* sample;
  std::vector<int> caption;
  std::vector<float> relations;
};

std::vector<PreparedSample> prepare(std::span<const SceneSample> samples, const Vocabulary& vocab,
                                    std::size_t num_relations) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back({&s, vocab.encode(s.caption), relation_targets<float>(s.relation_ids, num_relations)});
  }
  return out;
}

json model_json(const ModelConfig& m) {
  const auto& e = m.encoder;
  return {{"decoder_ffn_mult", m.decoder_ffn_mult},
          {"decoder_heads", m.decoder_heads},
          {"dim", e.dim},
          {"dim_backbone", e.dim_backbone},
          {"encoder_heads", e.heads},
          {"ffn_mult", e.ffn_mult},
          {"image_height", e.image_height},
          {"image_width", e.image_width},
          {"layers", e.layers},
          {"max_len", m.max_len},
          {"num_relations", e.num_relations},
          {"patch", e.patch},
          {"pos_init", e.pos_init},
          {"rel_layers", e.rel_layers},
          {"use_cls", m.use_cls},
          {"use_rel", m.use_rel},
          {"use_rgm", m.use_rgm}};
}

ModelConfig model_from(const json& j) {
  ModelConfig m;
  auto& e = m.encoder;
  m.decoder_ffn_mult = j.at("decoder_ffn_mult").get<std::size_t>();
  m.decoder_heads = j.at("decoder_heads").get<std::size_t>();
  e.dim = j.at("dim").get<std::size_t>();
  e.dim_backbone = j.at("dim_backbone").get<std::size_t>();
  e.heads = j.at("encoder_heads").get<std::size_t>();
  e.ffn_mult = j.at("ffn_mult").get<std::size_t>();
  e.image_height = j.at("image_height").get<std::size_t>();
  e.image_width = j.at("image_width").get<std::size_t>();
  e.layers = j.at("layers").get<std::size_t>();
  m.max_len = j.at("max_len").get<std::size_t>();
  e.num_relations = j.at("num_relations").get<std::size_t>();
  e.patch = j.at("patch").get<std::size_t>();
  e.pos_init = j.value("pos_init", std::string("zeros"));
  e.rel_layers = j.at("rel_layers").get<std::size_t>();
  m.use_cls = j.at("use_cls").get<bool>();
  m.use_rel = j.at("use_rel").get<bool>();
  m.use_rgm = j.at("use_rgm").get<bool>();
  return m;
}

}  // namespace

std::string EpochLog::to_json() const {
  json j = {{"epoch", epoch},   {"grad_norm", grad_norm},   {"lr", lr},
            {"param_hash", param_hash}, {"seconds", seconds}, {"train", losses_json(train)},
            {"val", losses_json(val)}};
  return j.dump();
}

EpochLog EpochLog::from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    EpochLog e;
    e.epoch = j.at("epoch").get<std::size_t>();
    e.grad_norm = j.at("grad_norm").get<double>();
    e.lr = j.at("lr").get<double>();
    e.param_hash = j.at("param_hash").get<std::string>();
    e.seconds = j.at("seconds").get<double>();
    e.train = losses_from(j.at("train"));
    e.val = losses_from(j.at("val"));
    return e;
  } catch (const json::exception& ex) {
    throw IoError(std::string("malformed training log line: ") + ex.what());
  }
}

void save_model_config(const ModelConfig& config, std::size_t vocab_size, const fs::path& path) {
  json j = {{"model", model_json(config)}, {"vocab_size", vocab_size}};
  dump(path, j.dump(2) + "\n");
}

std::unique_ptr<Captioner<float>> load_captioner(const fs::path& checkpoint) {
  fs::path ckpt = checkpoint;
  if (fs::is_directory(checkpoint)) ckpt = checkpoint / "best.ckpt";
  const fs::path meta = ckpt.parent_path() / "model.json";
  if (!fs::exists(ckpt)) throw MissingCheckpoint("no checkpoint at " + ckpt.string());
  if (!fs::exists(meta)) throw MissingCheckpoint("no model.json next to " + ckpt.string());
  ModelConfig config;
  std::size_t vocab = 0;
  try {
    const json j = json::parse(slurp(meta));
    config = model_from(j.at("model"));
    vocab = j.at("vocab_size").get<std::size_t>();
  } catch (const json::exception& e) {
    throw IoError("malformed " + meta.string() + ": " + e.what());
  }
  auto model = std::make_unique<Captioner<float>>(config, vocab, 0);
  load_parameters(model->params(), ckpt);
  return model;
}

LossBreakdown evaluate_loss(const Captioner<float>& model, std::span<const SceneSample> samples,
                            const Vocabulary& vocab) {
  if (samples.empty()) throw EmptyCorpus("loss over an empty split");
  NoGradGuard no_grad;
  const auto prepared = prepare(samples, vocab, model.config().encoder.num_relations);
  LossBreakdown sum;
  for (const auto& p : prepared) {
    const auto l = model.losses(p.sample->image, p.caption, p.relations);
    sum.l_xe += l.xe.item();
    sum.l_mlc += l.mlc.item();
    sum.total += l.total.item();
  }
  const double n = static_cast<double>(prepared.size());
  return {sum.l_xe / n, sum.l_mlc / n, sum.total / n};
}

TrainResult train(Captioner<float>& model, const TrainConfig& config, const Corpus& corpus,
                  const TrainOptions& options) {
  config.validate();
  if (corpus.train.empty()) throw EmptyCorpus("no training samples");
  const std::size_t num_rel = model.config().encoder.num_relations;
  if (num_rel != corpus.relations.size()) {
    throw ConfigError("model predicts " + std::to_string(num_rel) + " relation classes, corpus has " +
                      std::to_string(corpus.relations.size()));
  }
  if (model.vocab_size() != corpus.vocab.size()) {
    throw ConfigError("model vocabulary size differs from the corpus vocabulary");
  }

  const auto samples = prepare(corpus.train, corpus.vocab, num_rel);
  auto& params = model.params();
  AdamState<float> adam;
  TrainResult result;
  std::size_t start_epoch = 0;
  const bool persist = !options.out_dir.empty();
  const fs::path dir = options.out_dir;

  if (persist) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_model_config(model.config(), model.vocab_size(), dir / "model.json");
  }
  if (options.resume) {
    if (!persist) throw ConfigError("resume needs an output directory");
    if (!fs::exists(dir / "train_state.json")) {
      throw MissingCheckpoint("nothing to resume in " + dir.string());
    }
    try {
      const json st = json::parse(slurp(dir / "train_state.json"));
      start_epoch = st.at("epochs_done").get<std::size_t>();
      result.best_epoch = st.at("best_epoch").get<std::size_t>();
      result.best_val = st.at("best_val").get<double>();
      adam.step = st.at("adam_step").get<std::int64_t>();
    } catch (const json::exception& e) {
      throw IoError("malformed train_state.json: " + std::string(e.what()));
    }
    load_parameters(params, dir / "last.ckpt");
    load_optimizer(params, adam, dir / "last.optim");
    std::istringstream lines(slurp(dir / "train_log.jsonl"));
    for (std::string line; std::getline(lines, line) && result.log.size() < start_epoch;) {
      if (!line.empty()) result.log.push_back(EpochLog::from_json(line));
    }
  }

  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    AdamOptions opt;
    opt.lr = learning_rate(config, epoch);

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(sample_seed(config.seed, 0x5EED0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown sum;
    double norm_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const float inv_b = 1.0f / static_cast<float>(end - start);
      params.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = samples[order[k]];
        auto l = model.losses(p.sample->image, p.caption, p.relations);
        const double total = l.total.item();
        if (!std::isfinite(total)) {
          throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", sample " + p.sample->id +
                              ": l_xe=" + std::to_string(l.xe.item()) +
                              " l_mlc=" + std::to_string(l.mlc.item()) +
                              " lr=" + std::to_string(opt.lr));
        }
        sum.l_xe += l.xe.item();
        sum.l_mlc += l.mlc.item();
        sum.total += total;
        backward(scale(l.total, inv_b));
      }
      norm_sum += clip_grad_norm(params, config.clip_norm);
      adam_step(params, adam, opt);
      ++steps;
    }
    params.zero_grad();

    EpochLog entry;
    entry.epoch = epoch;
    const double n = static_cast<double>(samples.size());
    entry.train = {sum.l_xe / n, sum.l_mlc / n, sum.total / n};
    entry.val = corpus.val.empty() ? entry.train : evaluate_loss(model, corpus.val, corpus.vocab);
    entry.lr = opt.lr;
    entry.grad_norm = norm_sum / static_cast<double>(steps);
    entry.param_hash = parameter_hash(params);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool improved = result.log.empty() || entry.val.total < result.best_val;
    if (improved) {
      result.best_epoch = epoch;
      result.best_val = entry.val.total;
    }
    result.log.push_back(entry);

    if (persist) {
      if (improved) save_parameters(params, dir / "best.ckpt");
      save_parameters(params, dir / "last.ckpt");
      save_optimizer(params, adam, dir / "last.optim");
      std::string log_text;
      for (const auto& e : result.log) log_text += e.to_json() + "\n";
      dump(dir / "train_log.jsonl", log_text);
      json st = {{"adam_step", adam.step},
                 {"best_epoch", result.best_epoch},
                 {"best_val", result.best_val},
                 {"epochs_done", epoch + 1}};
      dump(dir / "train_state.json", st.dump(2) + "\n");
    }
    if (options.on_epoch) options.on_epoch(entry);
  }
  return result;
}

}  // namespace wsgic
