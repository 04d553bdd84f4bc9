// wsgic: corpus generation, training, evaluation, single-image grounding and
// ablation sweeps from the command line.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/image.hpp"
#include "wsgic/training.hpp"

namespace fs = std::filesystem;
using namespace wsgic;
using wsgic::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

struct Args {
  CommonArgs common;
  std::string data;
  std::string checkpoint;
  std::string image;
  std::optional<double> rho;
  bool resume = false;
  bool oracle = false;
};

void add_common(CLI::App* cmd, CommonArgs& c, bool out_required) {
  cmd->add_option("--config", c.config_file, "flat key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override one key, e.g. --set train.epochs=5")->take_all();
  cmd->add_option("--seed", c.seed, "sets corpus.seed and train.seed");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
  cmd->add_flag("--force", c.force, "replace a non-empty output directory");
}

RunConfig resolve(const Args& a) {
  RunConfig cfg;
  if (!a.common.config_file.empty()) cfg.apply_file(a.common.config_file);
  for (const auto& o : a.common.overrides) cfg.apply_assignment(o);
  if (a.common.seed) {
    cfg.corpus.seed = *a.common.seed;
    cfg.train.seed = *a.common.seed;
  }
  if (a.rho) cfg.rho = *a.rho;
  cfg.validate();
  return cfg;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

// A usable output directory: created when missing, emptied with --force,
// otherwise it must be empty (or hold a run we are resuming).
void prepare_out(const fs::path& dir, bool force, bool resume = false) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !resume) {
    if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  const std::string text = cfg.to_text();
  std::cout << "# resolved config\n" << text << std::flush;
  write_text(dir / "config.txt", text);
}

Corpus load_corpus(const std::string& data) {
  if (data.empty()) throw ConfigError("--data is required");
  return read_corpus(data);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " " : "") + words[i];
  return out;
}

int cmd_gen_data(const Args& a) {
  const RunConfig cfg = resolve(a);
  const fs::path out = a.common.out;
  prepare_out(out, a.common.force);
  echo_config(cfg, out);
  const Corpus corpus = build_corpus(cfg.corpus);
  write_corpus(corpus, out);
  const std::size_t total = corpus.train.size() + corpus.val.size() + corpus.test.size();
  std::cout << "train " << corpus.train.size() << " val " << corpus.val.size() << " test " << corpus.test.size()
            << "\nvocab " << corpus.vocab.size() << " relation classes " << corpus.relations.size()
            << "\ndropped train samples " << corpus.dropped_train << "\ncorpus hash " << hex64(corpus.hash())
            << "\n";
  if (corpus.rejected_placements * 100 > total) {
    std::cerr << "warning: " << corpus.rejected_placements << " rejected placements over " << total
              << " samples (more than 1%)\n";
  }
  return kExitOk;
}

int cmd_train(const Args& a) {
  const RunConfig cfg = resolve(a);
  const Corpus corpus = load_corpus(a.data);
  const fs::path out = a.common.out;
  if (a.resume) {
    const fs::path previous = out / "config.txt";
    if (fs::exists(previous)) {
      // Only the epoch count may change when a run is continued.
      RunConfig recorded;
      recorded.apply_text(read_text(previous));
      recorded.train.epochs = cfg.train.epochs;
      if (recorded.to_text() != cfg.to_text())
        throw ConfigError("resolved config differs from the one recorded in " + previous.string());
    }
  }
  prepare_out(out, a.common.force, a.resume);
  echo_config(cfg, out);
  write_text(out / "vocab.txt", corpus.vocab.to_text());

  const TrainConfig tc = cfg.train_for(corpus);
  Captioner<float> model(tc.model, corpus.vocab.size(), tc.seed);
  TrainOptions opts;
  opts.out_dir = out;
  opts.resume = a.resume;
  opts.on_epoch = [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " lr " << e.lr << " train " << fixed(e.train.total) << " (xe "
              << fixed(e.train.l_xe) << " mlc " << fixed(e.train.l_mlc) << ") val " << fixed(e.val.total)
              << " grad_norm " << fixed(e.grad_norm, 3) << " " << fixed(e.seconds, 1) << "s" << std::endl;
  };
  std::cout << "corpus hash " << hex64(corpus.hash()) << "\n";
  const TrainResult r = train(model, tc, corpus, opts);
  std::cout << "best epoch " << r.best_epoch << " val " << fixed(r.best_val) << "\n";
  return kExitOk;
}

void write_eval_outputs(const EvalResult& r, const fs::path& out) {
  std::string results;
  for (const auto& rec : r.records) results += rec.to_json() + "\n";
  write_text(out / "results.jsonl", results);
  write_text(out / "metrics.txt", r.report.to_table());
  write_text(out / "metrics.json", r.report.to_json() + "\n");
  std::string captions;
  for (const auto& p : r.predictions) captions += p.image_id + "\t" + join_words(p.words) + "\n";
  write_text(out / "captions.txt", captions);
}

int cmd_eval(const Args& a) {
  const RunConfig cfg = resolve(a);
  if (!a.oracle && a.checkpoint.empty()) throw ConfigError("--checkpoint is required unless --oracle is given");
  const Corpus corpus = load_corpus(a.data);
  const auto samples = corpus.split(cfg.split);
  std::unique_ptr<Captioner<float>> model;
  if (!a.oracle) {
    model = load_captioner(a.checkpoint);
    if (model->vocab_size() != corpus.vocab.size())
      throw ConfigError("checkpoint vocabulary size " + std::to_string(model->vocab_size()) +
                        " does not match the corpus (" + std::to_string(corpus.vocab.size()) + ")");
  }
  const fs::path out = a.common.out;
  prepare_out(out, a.common.force);
  echo_config(cfg, out);

  const EvalResult r = model ? evaluate(*model, samples, corpus.vocab, cfg.eval_options())
                             : evaluate_oracle(samples, cfg.eval_options());
  write_eval_outputs(r, out);
  std::cout << r.report.to_table();
  return kExitOk;
}

Vocabulary vocab_for(const Args& a) {
  fs::path ckpt_dir = a.checkpoint;
  if (!fs::is_directory(ckpt_dir)) ckpt_dir = ckpt_dir.parent_path();
  if (fs::exists(ckpt_dir / "vocab.txt")) return Vocabulary::from_text(read_text(ckpt_dir / "vocab.txt"));
  if (!a.data.empty() && fs::exists(fs::path(a.data) / "vocab.txt"))
    return Vocabulary::from_text(read_text(fs::path(a.data) / "vocab.txt"));
  throw MissingCheckpoint("no vocab.txt next to the checkpoint; pass --data <corpus dir>");
}

// Draws a one-pixel white rectangle along the box edges.
void burn_box(Image& img, const BoundingBox& b) {
  for (int x = b.x1; x <= b.x2; ++x)
    for (int y : {b.y1, b.y2})
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = 1.0f;
  for (int y = b.y1; y <= b.y2; ++y)
    for (int x : {b.x1, b.x2})
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = 1.0f;
}

int cmd_ground(const Args& a) {
  const RunConfig cfg = resolve(a);
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (a.image.empty()) throw ConfigError("--image is required");
  const auto model = load_captioner(a.checkpoint);
  const Vocabulary vocab = vocab_for(a);
  if (vocab.size() != model->vocab_size()) throw ConfigError("vocabulary does not match the checkpoint");
  const Image image = read_ppm(a.image);
  const auto& enc = model->config().encoder;
  if (image.height != enc.image_height || image.width != enc.image_width)
    throw BadDimensions("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        ", model expects " + std::to_string(enc.image_height) + "x" +
                        std::to_string(enc.image_width));

  const fs::path out = a.common.out;
  prepare_out(out, a.common.force);
  echo_config(cfg, out);
  CaptionPrediction pred = model->predict(image, vocab, cfg.eval_options());
  pred.image_id = fs::path(a.image).stem().string();

  const std::string caption = join_words(pred.words);
  write_text(out / "caption.txt", caption + "\n");
  std::cout << "caption: " << caption << (pred.truncated ? " (truncated)" : "") << "\n";
  Image overlay = image;
  std::string results;
  for (const auto& g : pred.grounded) {
    const std::string stem = "vlam_" + std::to_string(g.position) + "_" + g.word;
    write_vlam_pgm(out / (stem + ".pgm"), g.vlam);
    burn_box(overlay, g.box);
    ResultRecord rec{pred.image_id, g.word, g.box, g.score};
    results += rec.to_json() + "\n";
    std::cout << g.word << " [" << g.box.x1 << "," << g.box.y1 << "," << g.box.x2 << "," << g.box.y2
              << "] score " << fixed(g.score) << "\n";
  }
  write_ppm(out / "overlay.ppm", overlay);
  write_text(out / "results.jsonl", results);
  return kExitOk;
}

int cmd_ablate(const Args& a) {
  const RunConfig cfg = resolve(a);
  const Corpus corpus = load_corpus(a.data);
  const fs::path out = a.common.out;
  prepare_out(out, a.common.force);
  echo_config(cfg, out);
  const auto cells = expand_ablation(cfg.train_for(corpus), cfg.axes);
  std::cout << cells.size() << " cells, corpus hash " << hex64(corpus.hash()) << "\n";
  const auto rows = run_ablation_matrix(cells, corpus, out, cfg.eval_options(),
                                        [](const std::string& line) { std::cout << line << std::endl; });
  const std::string table = ablation_table(rows);
  write_text(out / "ablation.txt", table);
  std::string jsonl;
  for (const auto& r : rows) {
    nlohmann::json j;
    j["cell"] = r.cell.name;
    j["corpus_hash"] = r.corpus_hash;
    if (r.report)
      j["report"] = nlohmann::json::parse(r.report->to_json());
    else
      j["error"] = r.error;
    jsonl += j.dump() + "\n";
  }
  write_text(out / "ablation.jsonl", jsonl);
  std::cout << table;
  for (const auto& r : rows)
    if (!r.error.empty()) return kExitRuntime;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised grounded captioning on synthetic scenes"};
  app.require_subcommand(1);
  Args args;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, args.common, true);

  auto* tr = app.add_subcommand("train", "train a captioner on a corpus");
  add_common(tr, args.common, true);
  tr->add_option("--data", args.data, "corpus directory")->required();
  tr->add_flag("--resume", args.resume, "continue from last.ckpt in --out");

  auto* ev = app.add_subcommand("eval", "caption, ground and score a split");
  add_common(ev, args.common, true);
  ev->add_option("--data", args.data, "corpus directory")->required();
  ev->add_option("--checkpoint", args.checkpoint, "run directory or .ckpt file");
  ev->add_option("--rho", args.rho, "box threshold as a fraction of the map peak");
  ev->add_flag("--oracle", args.oracle, "score the reference captions and boxes");

  auto* gr = app.add_subcommand("ground", "caption one PPM image and box its object words");
  add_common(gr, args.common, true);
  gr->add_option("--checkpoint", args.checkpoint, "run directory or .ckpt file")->required();
  gr->add_option("--image", args.image, "input PPM (P6)")->required()->check(CLI::ExistingFile);
  gr->add_option("--data", args.data, "corpus directory, used for vocab.txt when the run has none");
  gr->add_option("--rho", args.rho, "box threshold as a fraction of the map peak");

  auto* ab = app.add_subcommand("ablate", "train and score every cell of an ablation grid");
  add_common(ab, args.common, true);
  ab->add_option("--data", args.data, "corpus directory")->required();
  ab->add_option("--rho", args.rho, "box threshold as a fraction of the map peak");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (tr->parsed()) return cmd_train(args);
    if (ev->parsed()) return cmd_eval(args);
    if (gr->parsed()) return cmd_ground(args);
    if (ab->parsed()) return cmd_ablate(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
