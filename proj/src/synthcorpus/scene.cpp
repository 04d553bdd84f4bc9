#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "wsgic/errors.hpp"
#include "wsgic/synthcorpus.hpp"

namespace wsgic {

namespace {

using Mask = std::vector<std::uint8_t>;

constexpr std::array<std::array<float, 3>, kColorCount> kPalette = {{
    {0.90f, 0.12f, 0.12f},  // red
    {0.12f, 0.78f, 0.18f},  // green
    {0.15f, 0.25f, 0.92f},  // blue
    {0.95f, 0.90f, 0.10f},  // yellow
}};

constexpr float kBackground = 0.5f;

struct MaskStats {
  BoundingBox box;
  double cy = 0.0;
  double cx = 0.0;
  std::size_t count = 0;
};

MaskStats stats_of(const Mask& m, std::size_t width) {
  MaskStats s;
  bool first = true;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
    if (first) {
      s.box = {x, y, x, y};
      first = false;
    }
    s.box.x1 = std::min(s.box.x1, x);
    s.box.x2 = std::max(s.box.x2, x);
    s.box.y1 = std::min(s.box.y1, y);
    s.box.y2 = std::max(s.box.y2, y);
    s.cx += x;
    s.cy += y;
    ++s.count;
  }
  if (s.count) {
    s.cx /= static_cast<double>(s.count);
    s.cy /= static_cast<double>(s.count);
  }
  return s;
}

bool overlaps(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) return true;
  }
  return false;
}

bool adjacent(const Mask& a, const Mask& b, std::size_t h, std::size_t w) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!a[y * w + x]) continue;
      if ((x > 0 && b[y * w + x - 1]) || (x + 1 < w && b[y * w + x + 1]) ||
          (y > 0 && b[(y - 1) * w + x]) || (y + 1 < h && b[(y + 1) * w + x])) {
        return true;
      }
    }
  }
  return false;
}

// Every 4-neighbour of an inner pixel is inner or outer, and the inner box
// sits strictly within the outer box.
bool enclosed_by(const Mask& inner, const Mask& outer, std::size_t h, std::size_t w) {
  const auto bi = stats_of(inner, w).box, bo = stats_of(outer, w).box;
  if (!(bi.x1 > bo.x1 && bi.x2 < bo.x2 && bi.y1 > bo.y1 && bi.y2 < bo.y2)) return false;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!inner[y * w + x]) continue;
      const std::array<std::size_t, 4> nb = {y * w + x - 1, y * w + x + 1, (y - 1) * w + x,
                                             (y + 1) * w + x};
      for (auto q : nb) {
        if (!inner[q] && !outer[q]) return false;
      }
    }
  }
  return true;
}

using Rng = std::mt19937_64;

int uniform(Rng& rng, int lo, int hi) {
  if (hi < lo) return lo;
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

int color_rank(Color c) { return static_cast<int>(c); }

struct Placement {
  SceneObject subject;
  SceneObject object;
};

// Slides `mover` toward `anchor` one pixel at a time until the masks become
// 4-adjacent. Returns false if they would overlap first or never meet.
bool slide_to_contact(SceneObject& mover, const Mask& anchor, int dx, int dy, std::size_t h,
                      std::size_t w) {
  for (int step = 0; step < static_cast<int>(std::max(h, w)); ++step) {
    const Mask m = shape_mask(mover.shape, mover.x0, mover.y0, mover.size, h, w);
    if (overlaps(m, anchor)) return false;
    if (adjacent(m, anchor, h, w)) return true;
    mover.x0 += dx;
    mover.y0 += dy;
  }
  return false;
}

}  // namespace

const std::string& color_name(Color c) {
  static const std::array<std::string, kColorCount> names = {"red", "green", "blue", "yellow"};
  return names.at(static_cast<std::size_t>(c));
}

const std::string& shape_name(ShapeKind s) {
  static const std::array<std::string, kShapeCount> names = {"square", "circle", "triangle"};
  return names.at(static_cast<std::size_t>(s));
}

const std::vector<std::string>& shape_nouns() {
  static const std::vector<std::string> nouns = {"square", "circle", "triangle"};
  return nouns;
}

const std::vector<std::string>& default_relation_lexicon() {
  static const std::vector<std::string> lex = {"above", "below", "left_of",
                                               "right_of", "touching", "inside"};
  return lex;
}

void SceneSpec::validate() const {
  if (height < 32 || width < 32) throw ConfigError("scene canvas must be at least 32x32");
  if (objects < 2 || objects > 3) throw ConfigError("scenes hold 2 or 3 objects");
  if (!(noise >= 0.0 && noise <= 0.1)) throw ConfigError("noise amplitude must lie in [0, 0.1]");
  if (min_size < 4 || max_size < min_size) throw ConfigError("bad shape size range");
  if (gap < 1 || max_attempts < 1) throw ConfigError("gap and attempt budget must be positive");
  if (2 * max_size + gap > static_cast<int>(std::min(height, width))) {
    throw ConfigError("two shapes plus the gap do not fit on the canvas");
  }
}

std::map<std::string, std::vector<BoundingBox>> SceneSample::ground_truth() const {
  std::map<std::string, std::vector<BoundingBox>> out;
  for (const auto& g : groundable) out[g.word].push_back(g.box);
  return out;
}

Mask shape_mask(ShapeKind shape, int x0, int y0, int size, std::size_t height, std::size_t width) {
  Mask m(height * width, 0);
  const double c = (size - 1) / 2.0;
  const double r = size / 2.0;
  for (int dy = 0; dy < size; ++dy) {
    for (int dx = 0; dx < size; ++dx) {
      bool in = false;
      switch (shape) {
        case ShapeKind::Square:
          in = true;
          break;
        case ShapeKind::Circle:
          in = (dx - c) * (dx - c) + (dy - c) * (dy - c) <= r * r;
          break;
        case ShapeKind::Triangle:
          // Apex at the top centre, base along the bottom row.
          in = std::abs(dx - c) <= (dy + 1.0) * r / size;
          break;
      }
      const int x = x0 + dx, y = y0 + dy;
      if (in && x >= 0 && y >= 0 && x < static_cast<int>(width) && y < static_cast<int>(height)) {
        m[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = 1;
      }
    }
  }
  return m;
}

std::optional<std::string> classify_relation(const Mask& subject, const Mask& object,
                                             std::size_t height, std::size_t width, int gap) {
  const auto s = stats_of(subject, width), o = stats_of(object, width);
  if (!s.count || !o.count) return std::nullopt;
  if (enclosed_by(subject, object, height, width)) return "inside";
  if (overlaps(subject, object)) return std::nullopt;
  if (adjacent(subject, object, height, width)) return "touching";
  const int gx = std::max(o.box.x1 - s.box.x2 - 1, s.box.x1 - o.box.x2 - 1);
  const int gy = std::max(o.box.y1 - s.box.y2 - 1, s.box.y1 - o.box.y2 - 1);
  if (gy >= gap && gx < 0) return s.cy < o.cy ? "above" : "below";
  if (gx >= gap && gy < 0) return s.cx < o.cx ? "left_of" : "right_of";
  return std::nullopt;
}

std::uint64_t sample_seed(std::uint64_t corpus_seed, std::uint64_t index) {
  // splitmix64 finaliser over the combined key
  std::uint64_t z = corpus_seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SceneSample generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  Rng rng(seed);
  const auto& lexicon = default_relation_lexicon();
  const std::string relation = lexicon[static_cast<std::size_t>(uniform(rng, 0, 5))];
  const std::size_t H = spec.height, W = spec.width;
  const int h = static_cast<int>(H), w = static_cast<int>(W);

  for (int attempt = 1; attempt <= spec.max_attempts; ++attempt) {
    Color ca = static_cast<Color>(uniform(rng, 0, kColorCount - 1));
    Color cb = static_cast<Color>(uniform(rng, 0, kColorCount - 2));
    if (color_rank(cb) >= color_rank(ca)) cb = static_cast<Color>(color_rank(cb) + 1);
    if (relation != "inside" && color_rank(cb) < color_rank(ca)) std::swap(ca, cb);

    Placement p;
    p.subject.color = ca;
    p.object.color = cb;
    p.subject.shape = static_cast<ShapeKind>(uniform(rng, 0, kShapeCount - 1));
    p.object.shape = static_cast<ShapeKind>(uniform(rng, 0, kShapeCount - 1));
    auto& s = p.subject;
    auto& o = p.object;

    if (relation == "inside") {
      // subject sits within the object
      const int canvas = std::min(h, w);
      o.size = uniform(rng, std::min(canvas, std::max(24, 2 * spec.max_size - 16)),
                       std::min(canvas, std::max(30, 2 * spec.max_size - 10)));
      s.size = uniform(rng, 8, std::max(8, o.size / 3));
      o.x0 = uniform(rng, 0, w - o.size);
      o.y0 = uniform(rng, 0, h - o.size);
      const double anchor_y = o.shape == ShapeKind::Triangle ? 0.64 : 0.5;
      const int cx = o.x0 + o.size / 2 + uniform(rng, -2, 2);
      const int cy = o.y0 + static_cast<int>(anchor_y * o.size) + uniform(rng, -2, 2);
      s.x0 = cx - s.size / 2;
      s.y0 = cy - s.size / 2;
    } else if (relation == "touching") {
      s.size = uniform(rng, spec.min_size, spec.max_size);
      o.size = uniform(rng, spec.min_size, spec.max_size);
      const bool horizontal = uniform(rng, 0, 1) == 1;
      const bool subject_first = uniform(rng, 0, 1) == 1;
      auto& first = subject_first ? s : o;
      auto& second = subject_first ? o : s;
      if (horizontal) {
        first.x0 = uniform(rng, 0, w - first.size - second.size);
        first.y0 = uniform(rng, 0, h - std::max(first.size, second.size));
        second.y0 = first.y0 + (first.size - second.size) / 2 + uniform(rng, -2, 2);
        second.x0 = first.x0 + first.size + 2;
      } else {
        first.y0 = uniform(rng, 0, h - first.size - second.size);
        first.x0 = uniform(rng, 0, w - std::max(first.size, second.size));
        second.x0 = first.x0 + (first.size - second.size) / 2 + uniform(rng, -2, 2);
        second.y0 = first.y0 + first.size + 2;
      }
      second.y0 = std::clamp(second.y0, 0, h - second.size);
      second.x0 = std::clamp(second.x0, 0, w - second.size);
      const Mask anchor = shape_mask(first.shape, first.x0, first.y0, first.size, H, W);
      if (!slide_to_contact(second, anchor, horizontal ? -1 : 0, horizontal ? 0 : -1, H, W)) continue;
    } else {
      s.size = uniform(rng, spec.min_size, spec.max_size);
      o.size = uniform(rng, spec.min_size, spec.max_size);
      const bool vertical = relation == "above" || relation == "below";
      const bool subject_first = relation == "above" || relation == "left_of";
      auto& first = subject_first ? s : o;  // top or left
      auto& second = subject_first ? o : s;
      const int span = vertical ? h : w;
      const int along1 = uniform(rng, 0, span - first.size - spec.gap - second.size);
      const int along2 = uniform(rng, along1 + first.size + spec.gap, span - second.size);
      const int cross_span = vertical ? w : h;
      const int cross1 = uniform(rng, 0, cross_span - first.size);
      const int centre = cross1 + first.size / 2 + uniform(rng, -spec.gap, spec.gap);
      const int cross2 = std::clamp(centre - second.size / 2, 0, cross_span - second.size);
      if (vertical) {
        first.y0 = along1;
        second.y0 = along2;
        first.x0 = cross1;
        second.x0 = cross2;
      } else {
        first.x0 = along1;
        second.x0 = along2;
        first.y0 = cross1;
        second.y0 = cross2;
      }
    }

    Mask ms = shape_mask(s.shape, s.x0, s.y0, s.size, H, W);
    Mask mo = shape_mask(o.shape, o.x0, o.y0, o.size, H, W);
    if (relation == "inside") {
      for (std::size_t i = 0; i < mo.size(); ++i) {
        if (ms[i]) mo[i] = 0;
      }
    }
    // Shapes must be drawn whole, not clipped by the canvas.
    const Mask unclipped = shape_mask(s.shape, 0, 0, s.size, s.size, s.size);
    const auto full_s = std::count(ms.begin(), ms.end(), 1);
    const auto ref_s = std::count(unclipped.begin(), unclipped.end(), 1);
    if (s.x0 < 0 || s.y0 < 0 || s.x0 + s.size > w || s.y0 + s.size > h || o.x0 < 0 || o.y0 < 0 ||
        o.x0 + o.size > w || o.y0 + o.size > h || full_s != ref_s) {
      continue;
    }
    if (classify_relation(ms, mo, H, W, spec.gap) != relation) continue;

    std::vector<SceneObject> objects = {s, o};
    std::vector<Mask> masks = {ms, mo};
    if (spec.objects == 3) {
      SceneObject d;
      int c = uniform(rng, 0, kColorCount - 3);
      for (Color used : {std::min(s.color, o.color), std::max(s.color, o.color)}) {
        if (c >= color_rank(used)) ++c;
      }
      d.color = static_cast<Color>(c);
      d.shape = static_cast<ShapeKind>(uniform(rng, 0, kShapeCount - 1));
      d.size = uniform(rng, spec.min_size, spec.max_size);
      d.x0 = uniform(rng, 0, w - d.size);
      d.y0 = uniform(rng, 0, h - d.size);
      Mask md = shape_mask(d.shape, d.x0, d.y0, d.size, H, W);
      const auto bd = stats_of(md, W).box;
      bool clear = true;
      for (const auto& m : masks) {
        const auto b = stats_of(m, W).box;
        const int gx = std::max(bd.x1 - b.x2 - 1, b.x1 - bd.x2 - 1);
        const int gy = std::max(bd.y1 - b.y2 - 1, b.y1 - bd.y2 - 1);
        if (std::max(gx, gy) < spec.gap) clear = false;
      }
      if (!clear) continue;
      objects.push_back(d);
      masks.push_back(std::move(md));
    }

    SceneSample sample;
    sample.seed = seed;
    sample.attempts = attempt;
    sample.image = Image(H, W, kBackground);
    for (std::size_t k = 0; k < objects.size(); ++k) {
      const auto& rgb = kPalette[static_cast<std::size_t>(objects[k].color)];
      for (std::size_t i = 0; i < H * W; ++i) {
        if (!masks[k][i]) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) sample.image.pixels[i * 3 + ch] = rgb[ch];
      }
      objects[k].box = stats_of(masks[k], W).box;
    }
    std::uniform_real_distribution<float> jitter(-static_cast<float>(spec.noise),
                                                 static_cast<float>(spec.noise));
    for (auto& v : sample.image.pixels) {
      v = static_cast<float>(to_byte(v + jitter(rng))) / 255.0f;
    }

    sample.objects = objects;
    sample.caption = {"a", color_name(s.color), shape_name(s.shape), relation,
                      "a", color_name(o.color), shape_name(o.shape)};
    sample.groundable = {{2, shape_name(s.shape), objects[0].box},
                         {6, shape_name(o.shape), objects[1].box}};
    sample.relation_words = extract_relations(sample.caption, lexicon);
    return sample;
  }
  throw InfeasiblePlacement("no valid '" + relation + "' placement after " +
                            std::to_string(spec.max_attempts) + " attempts (seed " +
                            std::to_string(seed) + ")");
}

}  // namespace wsgic
