#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "wsgic/errors.hpp"

namespace wsgic::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const std::string v = trim(value);
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size() || v.empty())
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("bad boolean for " + key + ": '" + value + "' (use true/false or 1/0)");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename E>
std::string join(const std::vector<E>& items, const std::function<std::string(const E&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + f(items[i]);
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename N, typename Access>
Field number_field(Access access) {
  return {[access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<N>)
              return format_double(access(c));
            else
              return std::to_string(access(c));
          },
          [access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_number<N>(k, v);
          }};
}

template <typename Access>
Field bool_field(Access access) {
  return {[access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); },
          [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); }};
}

template <typename Access>
Field string_field(Access access) {
  return {[access](const RunConfig& c) { return access(c); },
          [access](RunConfig& c, const std::string&, const std::string& v) { access(c) = trim(v); }};
}

Field bool_list_field(std::vector<bool> AblationAxes::*member) {
  return {[member](const RunConfig& c) {
            std::string out;
            const auto& v = c.axes.*member;
            for (std::size_t i = 0; i < v.size(); ++i) out += std::string(i ? "," : "") + (v[i] ? "true" : "false");
            return out;
          },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            std::vector<bool> out;
            for (const auto& item : split_list(v)) out.push_back(parse_bool(k, item));
            c.axes.*member = out;
          }};
}

Field size_list_field(std::vector<std::size_t> AblationAxes::*member) {
  return {[member](const RunConfig& c) {
            return join<std::size_t>(c.axes.*member, [](const std::size_t& x) { return std::to_string(x); });
          },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            std::vector<std::size_t> out;
            for (const auto& item : split_list(v)) out.push_back(parse_number<std::size_t>(k, item));
            c.axes.*member = out;
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    // Corpus.
    t["corpus.seed"] = number_field<std::uint64_t>([](auto& c) -> auto& { return c.corpus.seed; });
    t["corpus.train"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.train; });
    t["corpus.val"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.val; });
    t["corpus.test"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.test; });
    t["corpus.min_count"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.min_count; });
    t["corpus.relation_classes"] =
        number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.relation_classes; });
    t["scene.height"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.scene.height; });
    t["scene.width"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.scene.width; });
    t["scene.objects"] = number_field<std::size_t>([](auto& c) -> auto& { return c.corpus.scene.objects; });
    t["scene.noise"] = number_field<double>([](auto& c) -> auto& { return c.corpus.scene.noise; });
    t["scene.min_size"] = number_field<int>([](auto& c) -> auto& { return c.corpus.scene.min_size; });
    t["scene.max_size"] = number_field<int>([](auto& c) -> auto& { return c.corpus.scene.max_size; });
    t["scene.gap"] = number_field<int>([](auto& c) -> auto& { return c.corpus.scene.gap; });
    t["scene.max_attempts"] = number_field<int>([](auto& c) -> auto& { return c.corpus.scene.max_attempts; });
    // Model.
    t["model.patch"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.patch; });
    t["model.dim_backbone"] =
        number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.dim_backbone; });
    t["model.layers"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.layers; });
    t["model.rel_layers"] =
        number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.rel_layers; });
    t["model.heads"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.heads; });
    t["model.dim"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.dim; });
    t["model.ffn_mult"] =
        number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.encoder.ffn_mult; });
    t["model.pos_init"] = string_field([](auto& c) -> auto& { return c.train.model.encoder.pos_init; });
    t["model.decoder_heads"] =
        number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.decoder_heads; });
    t["model.decoder_ffn_mult"] =
        number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.decoder_ffn_mult; });
    t["model.max_len"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.model.max_len; });
    t["model.use_rgm"] = bool_field([](auto& c) -> auto& { return c.train.model.use_rgm; });
    t["model.use_cls"] = bool_field([](auto& c) -> auto& { return c.train.model.use_cls; });
    t["model.use_rel"] = bool_field([](auto& c) -> auto& { return c.train.model.use_rel; });
    // Optimisation.
    t["train.lr"] = number_field<double>([](auto& c) -> auto& { return c.train.lr; });
    t["train.anneal"] = number_field<double>([](auto& c) -> auto& { return c.train.anneal; });
    t["train.anneal_every"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.anneal_every; });
    t["train.epochs"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.epochs; });
    t["train.batch_size"] = number_field<std::size_t>([](auto& c) -> auto& { return c.train.batch_size; });
    t["train.seed"] = number_field<std::uint64_t>([](auto& c) -> auto& { return c.train.seed; });
    t["train.clip_norm"] = number_field<double>([](auto& c) -> auto& { return c.train.clip_norm; });
    // Evaluation.
    t["eval.rho"] = number_field<double>([](auto& c) -> auto& { return c.rho; });
    t["eval.split"] = string_field([](auto& c) -> auto& { return c.split; });
    t["eval.groundable_words"] = {
        [](const RunConfig& c) {
          return join<std::string>(c.groundable_words, [](const std::string& s) { return s; });
        },
        [](RunConfig& c, const std::string&, const std::string& v) { c.groundable_words = split_list(v); }};
    // Ablation axes, comma separated; empty keeps the base value.
    t["ablate.use_rgm"] = bool_list_field(&AblationAxes::use_rgm);
    t["ablate.use_cls"] = bool_list_field(&AblationAxes::use_cls);
    t["ablate.use_rel"] = bool_list_field(&AblationAxes::use_rel);
    t["ablate.heads"] = size_list_field(&AblationAxes::heads);
    t["ablate.rel_layers"] = size_list_field(&AblationAxes::rel_layers);
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& key : config_keys()) out += key + "=" + get(key) + "\n";
  return out;
}

void RunConfig::apply_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_assignment(t);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str());
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.rho = rho;
  o.groundable_words = groundable_words;
  return o;
}

TrainConfig RunConfig::train_for(const Corpus& corpus) const {
  TrainConfig t = train;
  t.model.encoder.image_height = corpus.spec.scene.height;
  t.model.encoder.image_width = corpus.spec.scene.width;
  t.model.encoder.num_relations = corpus.relations.size();
  return t;
}

void RunConfig::validate() const {
  corpus.validate();
  TrainConfig t = train;
  t.model.encoder.image_height = corpus.scene.height;
  t.model.encoder.image_width = corpus.scene.width;
  t.model.encoder.num_relations = corpus.relation_classes;
  t.validate();
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("eval.rho must lie in [0, 1)");
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("eval.split must be train, val or test");
  if (groundable_words.empty()) throw ConfigError("eval.groundable_words must not be empty");
}

}  // namespace wsgic::cli
