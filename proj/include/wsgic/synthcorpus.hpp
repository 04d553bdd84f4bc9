#pragma once

// Deterministic synthetic scenes: coloured shapes on a noisy gray canvas.
// Each comes with the caption "a <colour> <shape> <relation> a <colour> <shape>"
// and a tight ground-truth box for both shape nouns.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wsgic/grounding.hpp"
#include "wsgic/image.hpp"

namespace wsgic {

enum class Color { Red, Green, Blue, Yellow };
enum class ShapeKind { Square, Circle, Triangle };

inline constexpr std::size_t kColorCount = 4;
inline constexpr std::size_t kShapeCount = 3;

const std::string& color_name(Color c);
const std::string& shape_name(ShapeKind s);
const std::vector<std::string>& shape_nouns();
// The six spatial relation words rendered by the generator.
const std::vector<std::string>& default_relation_lexicon();

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t objects = 2;   // 2, or 3 to add an uncaptioned distractor
  double noise = 0.05;       // uniform per-channel noise amplitude
  int min_size = 18;         // side of a free-standing shape, pixels
  int max_size = 26;
  int gap = 8;               // minimum empty pixels between separated shapes
  int max_attempts = 100;
  void validate() const;
};

struct SceneObject {
  Color color = Color::Red;
  ShapeKind shape = ShapeKind::Square;
  int x0 = 0;  // top-left of the drawing square
  int y0 = 0;
  int size = 0;
  BoundingBox box;  // tight box of the visible rendered pixels
};

struct GroundableWord {
  std::size_t position = 0;  // index into the caption
  std::string word;
  BoundingBox box;
};

struct SceneSample {
  std::string id;
  std::string split;
  std::uint64_t seed = 0;
  Image image;
  std::vector<std::string> caption;
  std::vector<GroundableWord> groundable;
  std::vector<std::string> relation_words;
  std::vector<int> relation_ids;  // filled once relation classes are chosen
  std::vector<SceneObject> objects;
  int attempts = 1;  // placements tried before one was accepted

  // Word -> every ground-truth box of that word.
  std::map<std::string, std::vector<BoundingBox>> ground_truth() const;
};

// Draw mask of one shape over an H x W canvas, row-major.
std::vector<std::uint8_t> shape_mask(ShapeKind shape, int x0, int y0, int size, std::size_t height,
                                     std::size_t width);

// Reads the relation back from two rendered masks: "inside" when one mask
// lies within the other's box and covers it, "touching" when the masks are
// 4-adjacent, otherwise the dominant centroid offset. Empty when ambiguous.
std::optional<std::string> classify_relation(const std::vector<std::uint8_t>& subject,
                                             const std::vector<std::uint8_t>& object,
                                             std::size_t height, std::size_t width, int gap);

// Throws InfeasiblePlacement after spec.max_attempts failed placements.
SceneSample generate_scene(std::uint64_t seed, const SceneSpec& spec);

// Derived per-sample seed, a pure function of (corpus seed, index).
std::uint64_t sample_seed(std::uint64_t corpus_seed, std::uint64_t index);

class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;
  static const std::vector<std::string>& specials();

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // specials first

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;  // throws UnknownToken
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  // "token id" lines sorted by token.
  std::string to_text() const;
  static Vocabulary from_text(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// Keeps tokens seen at least min_count times. Ids follow the specials in order
// of descending count, ties alphabetical.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> captions,
                            std::size_t min_count = 5);

// Longest-match scan for lexicon entries (which may span several words).
// Returns the distinct hits in sorted order.
std::vector<std::string> extract_relations(std::span<const std::string> caption,
                                           std::span<const std::string> lexicon);

struct RelationClassSet {
  std::vector<std::string> words;    // descending frequency, ties alphabetical
  std::vector<std::size_t> counts;
  std::size_t size() const { return words.size(); }
  int id(const std::string& word) const;  // -1 when not selected

  // "word id count" lines sorted by word.
  std::string to_text() const;
  static RelationClassSet from_text(const std::string& text);
};

// Number of captions mentioning each lexicon entry, descending with
// alphabetical ties. Entries never seen are omitted.
std::vector<std::pair<std::string, std::size_t>> relation_stats(
    std::span<const std::vector<std::string>> captions, std::span<const std::string> lexicon);

RelationClassSet select_relation_classes(std::span<const std::vector<std::string>> captions,
                                         std::span<const std::string> lexicon, std::size_t k);

struct CorpusSpec {
  SceneSpec scene;
  std::uint64_t seed = 7;
  std::size_t train = 2000;
  std::size_t val = 200;
  std::size_t test = 200;
  std::size_t min_count = 5;
  std::size_t relation_classes = 6;
  void validate() const;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<SceneSample> train;
  std::vector<SceneSample> val;
  std::vector<SceneSample> test;
  Vocabulary vocab;
  RelationClassSet relations;
  std::size_t dropped_train = 0;  // training samples without a selected class
  std::size_t rejected_placements = 0;

  std::span<const SceneSample> split(const std::string& name) const;
  // FNV-1a 64 over the manifest, vocabulary, relation classes and image bytes.
  std::uint64_t hash() const;
  std::string manifest_text() const;
};

Corpus build_corpus(const CorpusSpec& spec);

// Writes manifest.jsonl, images/*.ppm, vocab.txt, relations.txt,
// relation_stats.txt and corpus.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace wsgic
