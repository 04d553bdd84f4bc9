#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/synthcorpus.hpp"

namespace wsgic {

namespace {

using nlohmann::json;

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

json box_json(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BoundingBox box_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

json sample_json(const SceneSample& s) {
  json groundable = json::array();
  for (const auto& g : s.groundable) {
    groundable.push_back({{"box", box_json(g.box)}, {"position", g.position}, {"word", g.word}});
  }
  return {{"caption", s.caption},
          {"groundable", groundable},
          {"id", s.id},
          {"image", "images/" + s.id + ".ppm"},
          {"relation_ids", s.relation_ids},
          {"relation_words", s.relation_words},
          {"seed", s.seed},
          {"split", s.split}};
}

std::string image_bytes(const Image& img) {
  std::string out(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<char>(to_byte(img.pixels[i]));
  return out;
}

std::vector<std::vector<std::string>> captions_of(std::span<const SceneSample> samples) {
  std::vector<std::vector<std::string>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.caption);
  return out;
}

std::string stats_text(const std::vector<std::pair<std::string, std::size_t>>& stats) {
  std::string out;
  for (const auto& [w, n] : stats) out += w + " " + std::to_string(n) + "\n";
  return out;
}

}  // namespace

// ---- vocabulary -----------------------------------------------------------

const std::vector<std::string>& Vocabulary::specials() {
  static const std::vector<std::string> s = {"<bos>", "<eos>", "<pad>", "<unk>"};
  return s;
}

Vocabulary::Vocabulary() : Vocabulary(specials()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& sp = specials();
  if (tokens_.size() < sp.size() || !std::equal(sp.begin(), sp.end(), tokens_.begin())) {
    throw ConfigError("vocabulary must start with the special tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw UnknownToken("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& [tok, id] : ids_) out += tok + " " + std::to_string(id) + "\n";
  return out;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  std::istringstream in(text);
  std::map<int, std::string> by_id;
  std::string tok;
  int id = 0;
  while (in >> tok >> id) {
    if (!by_id.emplace(id, tok).second) throw IoError("duplicate id in vocabulary file");
  }
  std::vector<std::string> tokens;
  for (const auto& [i, t] : by_id) {
    if (i != static_cast<int>(tokens.size())) throw IoError("vocabulary ids are not dense");
    tokens.push_back(t);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> captions, std::size_t min_count) {
  if (captions.empty()) throw EmptyCorpus("vocabulary needs at least one caption");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    for (const auto& w : c) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  const auto& sp = Vocabulary::specials();
  for (const auto& [w, n] : counts) {
    if (n >= min_count && std::find(sp.begin(), sp.end(), w) == sp.end()) kept.emplace_back(w, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = sp;
  for (const auto& [w, _] : kept) tokens.push_back(w);
  return Vocabulary(std::move(tokens));
}

// ---- relations ------------------------------------------------------------

std::vector<std::string> extract_relations(std::span<const std::string> caption,
                                           std::span<const std::string> lexicon) {
  std::vector<std::vector<std::string>> entries;
  for (const auto& e : lexicon) entries.push_back(split_words(e));
  std::set<std::string> hits;
  std::size_t i = 0;
  while (i < caption.size()) {
    std::size_t best = 0;
    std::size_t best_entry = 0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      if (e.empty() || e.size() <= best || i + e.size() > caption.size()) continue;
      if (std::equal(e.begin(), e.end(), caption.begin() + static_cast<std::ptrdiff_t>(i))) {
        best = e.size();
        best_entry = k;
      }
    }
    if (best == 0) {
      ++i;
      continue;
    }
    hits.insert(std::string(lexicon[best_entry]));
    i += best;
  }
  return {hits.begin(), hits.end()};
}

std::vector<std::pair<std::string, std::size_t>> relation_stats(
    std::span<const std::vector<std::string>> captions, std::span<const std::string> lexicon) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    for (const auto& r : extract_relations(c, lexicon)) ++counts[r];
  }
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

RelationClassSet select_relation_classes(std::span<const std::vector<std::string>> captions,
                                         std::span<const std::string> lexicon, std::size_t k) {
  if (k == 0) throw ConfigError("at least one relation class is required");
  RelationClassSet out;
  for (const auto& [w, n] : relation_stats(captions, lexicon)) {
    if (out.words.size() == k) break;
    out.words.push_back(w);
    out.counts.push_back(n);
  }
  return out;
}

int RelationClassSet::id(const std::string& word) const {
  auto it = std::find(words.begin(), words.end(), word);
  return it == words.end() ? -1 : static_cast<int>(it - words.begin());
}

std::string RelationClassSet::to_text() const {
  std::map<std::string, std::pair<std::size_t, std::size_t>> rows;
  for (std::size_t i = 0; i < words.size(); ++i) rows[words[i]] = {i, counts[i]};
  std::string out;
  for (const auto& [w, v] : rows) {
    out += w + " " + std::to_string(v.first) + " " + std::to_string(v.second) + "\n";
  }
  return out;
}

RelationClassSet RelationClassSet::from_text(const std::string& text) {
  std::istringstream in(text);
  std::map<std::size_t, std::pair<std::string, std::size_t>> by_id;
  std::string w;
  std::size_t id = 0, n = 0;
  while (in >> w >> id >> n) by_id[id] = {w, n};
  RelationClassSet out;
  for (const auto& [i, v] : by_id) {
    if (i != out.words.size()) throw IoError("relation class ids are not dense");
    out.words.push_back(v.first);
    out.counts.push_back(v.second);
  }
  return out;
}

// ---- corpus ---------------------------------------------------------------

void CorpusSpec::validate() const {
  scene.validate();
  if (train == 0) throw ConfigError("the training split must not be empty");
  if (relation_classes == 0) throw ConfigError("relation_classes must be positive");
}

std::span<const SceneSample> Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "'");
}

std::string Corpus::manifest_text() const {
  std::string out;
  for (const auto* part : {&train, &val, &test}) {
    for (const auto& s : *part) out += sample_json(s).dump() + "\n";
  }
  return out;
}

std::uint64_t Corpus::hash() const {
  std::uint64_t h = fnv1a64(manifest_text());
  h = fnv1a64(vocab.to_text(), h);
  h = fnv1a64(relations.to_text(), h);
  for (const auto* part : {&train, &val, &test}) {
    for (const auto& s : *part) h = fnv1a64(image_bytes(s.image), h);
  }
  return h;
}

Corpus build_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;
  std::uint64_t index = 0;
  auto make_split = [&](std::vector<SceneSample>& dst, const std::string& name, std::size_t n) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i, ++index) {
      auto s = generate_scene(sample_seed(spec.seed, index), spec.scene);
      corpus.rejected_placements += static_cast<std::size_t>(s.attempts - 1);
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05zu", name.c_str(), i);
      s.id = id;
      s.split = name;
      dst.push_back(std::move(s));
    }
  };
  make_split(corpus.train, "train", spec.train);
  make_split(corpus.val, "val", spec.val);
  make_split(corpus.test, "test", spec.test);

  const auto train_caps = captions_of(corpus.train);
  corpus.vocab = build_vocabulary(train_caps, spec.min_count);
  corpus.relations =
      select_relation_classes(train_caps, default_relation_lexicon(), spec.relation_classes);

  auto label = [&](SceneSample& s) {
    s.relation_ids.clear();
    for (const auto& w : s.relation_words) {
      const int id = corpus.relations.id(w);
      if (id >= 0) s.relation_ids.push_back(id);
    }
    std::sort(s.relation_ids.begin(), s.relation_ids.end());
  };
  for (auto* part : {&corpus.train, &corpus.val, &corpus.test}) {
    for (auto& s : *part) label(s);
  }
  const auto before = corpus.train.size();
  std::erase_if(corpus.train, [](const SceneSample& s) { return s.relation_ids.empty(); });
  corpus.dropped_train = before - corpus.train.size();
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  for (const auto* part : {&corpus.train, &corpus.val, &corpus.test}) {
    for (const auto& s : *part) write_ppm(dir / "images" / (s.id + ".ppm"), s.image);
  }
  write_file(dir / "manifest.jsonl", corpus.manifest_text());
  write_file(dir / "vocab.txt", corpus.vocab.to_text());
  write_file(dir / "relations.txt", corpus.relations.to_text());
  write_file(dir / "relation_stats.txt",
             stats_text(relation_stats(captions_of(corpus.train), default_relation_lexicon())));
  const auto& sc = corpus.spec.scene;
  json meta = {{"dropped_train", corpus.dropped_train},
               {"hash", hex64(corpus.hash())},
               {"rejected_placements", corpus.rejected_placements},
               {"scene",
                {{"gap", sc.gap},
                 {"height", sc.height},
                 {"max_attempts", sc.max_attempts},
                 {"max_size", sc.max_size},
                 {"min_size", sc.min_size},
                 {"noise", sc.noise},
                 {"objects", sc.objects},
                 {"width", sc.width}}},
               {"min_count", corpus.spec.min_count},
               {"relation_classes", corpus.spec.relation_classes},
               {"seed", corpus.spec.seed},
               {"test", corpus.spec.test},
               {"train", corpus.spec.train},
               {"val", corpus.spec.val}};
  write_file(dir / "corpus.json", meta.dump(2) + "\n");
}

Corpus read_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.jsonl")) {
    throw IoError("no corpus at " + dir.string() + " (manifest.jsonl missing)");
  }
  Corpus corpus;
  try {
    const json meta = json::parse(read_file(dir / "corpus.json"));
    auto& sc = corpus.spec.scene;
    const auto& js = meta.at("scene");
    sc.gap = js.at("gap").get<int>();
    sc.height = js.at("height").get<std::size_t>();
    sc.max_attempts = js.at("max_attempts").get<int>();
    sc.max_size = js.at("max_size").get<int>();
    sc.min_size = js.at("min_size").get<int>();
    sc.noise = js.at("noise").get<double>();
    sc.objects = js.at("objects").get<std::size_t>();
    sc.width = js.at("width").get<std::size_t>();
    corpus.spec.min_count = meta.at("min_count").get<std::size_t>();
    corpus.spec.relation_classes = meta.at("relation_classes").get<std::size_t>();
    corpus.spec.seed = meta.at("seed").get<std::uint64_t>();
    corpus.spec.train = meta.at("train").get<std::size_t>();
    corpus.spec.val = meta.at("val").get<std::size_t>();
    corpus.spec.test = meta.at("test").get<std::size_t>();
    corpus.dropped_train = meta.at("dropped_train").get<std::size_t>();
    corpus.rejected_placements = meta.at("rejected_placements").get<std::size_t>();

    std::istringstream lines(read_file(dir / "manifest.jsonl"));
    for (std::string line; std::getline(lines, line);) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      SceneSample s;
      s.id = j.at("id").get<std::string>();
      s.split = j.at("split").get<std::string>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.caption = j.at("caption").get<std::vector<std::string>>();
      s.relation_ids = j.at("relation_ids").get<std::vector<int>>();
      s.relation_words = j.at("relation_words").get<std::vector<std::string>>();
      for (const auto& g : j.at("groundable")) {
        s.groundable.push_back({g.at("position").get<std::size_t>(), g.at("word").get<std::string>(),
                                box_from(g.at("box"))});
      }
      s.image = read_ppm(dir / j.at("image").get<std::string>());
      if (s.split == "train") {
        corpus.train.push_back(std::move(s));
      } else if (s.split == "val") {
        corpus.val.push_back(std::move(s));
      } else if (s.split == "test") {
        corpus.test.push_back(std::move(s));
      } else {
        throw IoError("unknown split '" + s.split + "' in manifest");
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed corpus in " + dir.string() + ": " + e.what());
  }
  corpus.vocab = Vocabulary::from_text(read_file(dir / "vocab.txt"));
  corpus.relations = RelationClassSet::from_text(read_file(dir / "relations.txt"));
  return corpus;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 1099511628211ULL;
  }
  return state;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace wsgic
