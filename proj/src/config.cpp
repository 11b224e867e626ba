#include "tnt/config.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>
#include <sstream>

namespace tnt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

TntConfig imagenet_base(std::string name, std::int64_t c, int c_heads, std::int64_t d, int d_heads) {
  TntConfig cfg;
  cfg.name = std::move(name);
  cfg.image_height = cfg.image_width = 224;
  cfg.patch = 16;
  cfg.subpatch = 4;
  cfg.depth = 12;
  cfg.inner_dim = c;
  cfg.inner_heads = c_heads;
  cfg.outer_dim = d;
  cfg.outer_heads = d_heads;
  cfg.mlp_ratio = 4;
  cfg.num_classes = 1000;
  cfg.tnt_block_indices = all_layers(cfg.depth);
  cfg.drop_path_rate = 0.1;
  return cfg;
}

}  // namespace

std::vector<int> all_layers(int depth) {
  std::vector<int> v(static_cast<std::size_t>(std::max(depth, 0)));
  std::iota(v.begin(), v.end(), 1);
  return v;
}

bool TntConfig::is_tnt_layer(int layer) const {
  return std::find(tnt_block_indices.begin(), tnt_block_indices.end(), layer) != tnt_block_indices.end();
}

void TntConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  if (image_height <= 0 || image_width <= 0 || patch <= 0 || subpatch <= 0) {
    fail("image and patch sizes must be positive");
  }
  if (image_height % patch != 0 || image_width % patch != 0) {
    fail("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
         " is not divisible by patch size p=" + std::to_string(patch));
  }
  if (patch % subpatch != 0) {
    fail("patch size p=" + std::to_string(patch) + " is not divisible by sub-patch size s=" +
         std::to_string(subpatch));
  }
  if (depth < 1) fail("depth must be >= 1");
  if (inner_dim < 1 || inner_heads < 1 || inner_dim % inner_heads != 0) {
    fail("inner dim " + std::to_string(inner_dim) + " is not divisible by " + std::to_string(inner_heads) +
         " heads");
  }
  if (outer_dim < 1 || outer_heads < 1 || outer_dim % outer_heads != 0) {
    fail("outer dim " + std::to_string(outer_dim) + " is not divisible by " + std::to_string(outer_heads) +
         " heads");
  }
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (drop_path_rate < 0.0 || drop_path_rate >= 1.0) fail("drop_path_rate must lie in [0, 1)");
  std::set<int> seen;
  for (int i : tnt_block_indices) {
    if (i < 1 || i > depth) fail("TNT block index " + std::to_string(i) + " outside 1.." + std::to_string(depth));
    if (!seen.insert(i).second) fail("duplicate TNT block index " + std::to_string(i));
  }
}

TntConfig preset(std::string_view name) {
  if (name == "tnt-ti") return imagenet_base("tnt-ti", 12, 2, 192, 3);
  if (name == "tnt-s") return imagenet_base("tnt-s", 24, 4, 384, 6);
  if (name == "tnt-b") return imagenet_base("tnt-b", 40, 4, 640, 10);
  if (name == "tnt-micro") {
    TntConfig cfg;
    cfg.name = "tnt-micro";
    cfg.image_height = cfg.image_width = 32;
    cfg.patch = 8;
    cfg.subpatch = 4;
    cfg.depth = 4;
    cfg.inner_dim = 8;
    cfg.inner_heads = 2;
    cfg.outer_dim = 32;
    cfg.outer_heads = 4;
    cfg.mlp_ratio = 4;
    cfg.num_classes = 10;
    cfg.tnt_block_indices = all_layers(cfg.depth);
    cfg.drop_path_rate = 0.1;
    return cfg;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected one of tnt-ti, tnt-s, tnt-b, tnt-micro)");
}

std::vector<std::string> preset_names() { return {"tnt-ti", "tnt-s", "tnt-b", "tnt-micro"}; }

nlohmann::json config_to_json(const TntConfig& c) {
  return nlohmann::json{
      {"name", c.name},
      {"image_height", c.image_height},
      {"image_width", c.image_width},
      {"patch", c.patch},
      {"subpatch", c.subpatch},
      {"depth", c.depth},
      {"inner_dim", c.inner_dim},
      {"inner_heads", c.inner_heads},
      {"outer_dim", c.outer_dim},
      {"outer_heads", c.outer_heads},
      {"mlp_ratio", c.mlp_ratio},
      {"num_classes", c.num_classes},
      {"tnt_block_indices", c.tnt_block_indices},
      {"drop_path_rate", c.drop_path_rate},
      {"se", c.se},
      {"pos_enc", {{"sentence", c.pos_enc.sentence}, {"word", c.pos_enc.word}}},
      {"fusion_ln", c.fusion_ln},
      {"class_token_learnable", c.class_token_learnable},
      {"sentence_init_learnable", c.sentence_init_learnable},
  };
}

TntConfig config_from_json(const nlohmann::json& doc, TntConfig c) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  static const std::set<std::string> known{
      "name", "image_height", "image_width", "patch", "subpatch", "depth", "inner_dim", "inner_heads",
      "outer_dim", "outer_heads", "mlp_ratio", "num_classes", "tnt_block_indices", "drop_path_rate", "se",
      "pos_enc", "fusion_ln", "class_token_learnable", "sentence_init_learnable"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("name", c.name);
    get("image_height", c.image_height);
    get("image_width", c.image_width);
    get("patch", c.patch);
    get("subpatch", c.subpatch);
    get("depth", c.depth);
    get("inner_dim", c.inner_dim);
    get("inner_heads", c.inner_heads);
    get("outer_dim", c.outer_dim);
    get("outer_heads", c.outer_heads);
    get("mlp_ratio", c.mlp_ratio);
    get("num_classes", c.num_classes);
    get("tnt_block_indices", c.tnt_block_indices);
    get("drop_path_rate", c.drop_path_rate);
    get("se", c.se);
    get("fusion_ln", c.fusion_ln);
    get("class_token_learnable", c.class_token_learnable);
    get("sentence_init_learnable", c.sentence_init_learnable);
    if (doc.contains("pos_enc")) {
      const auto& pe = doc.at("pos_enc");
      if (pe.contains("sentence")) c.pos_enc.sentence = pe.at("sentence").get<bool>();
      if (pe.contains("word")) c.pos_enc.word = pe.at("word").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config field: ") + e.what());
  }
  std::sort(c.tnt_block_indices.begin(), c.tnt_block_indices.end());
  return c;
}

std::vector<int> parse_indices(std::string_view text) {
  std::vector<int> out;
  std::string cleaned = trim(text);
  if (!cleaned.empty() && cleaned.front() == '[') cleaned = cleaned.substr(1);
  if (!cleaned.empty() && cleaned.back() == ']') cleaned.pop_back();
  std::stringstream ss(cleaned);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("bad layer index '" + item + "'");
    }
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void apply_override(TntConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (key == "tnt_block_indices") {
    config.tnt_block_indices = parse_indices(value);
    return;
  }
  nlohmann::json parsed;
  if (key == "name") {
    parsed = value;
  } else {
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("override '" + key + "' has unparsable value '" + value + "'");
    }
  }
  nlohmann::json patch;
  if (key.rfind("pos_enc.", 0) == 0) {
    const std::string sub = key.substr(8);
    if (sub != "sentence" && sub != "word") throw ConfigError("unknown config field '" + key + "'");
    patch["pos_enc"][sub] = parsed;
  } else {
    patch[key] = parsed;
  }
  config = config_from_json(patch, config);
}

}  // namespace tnt
