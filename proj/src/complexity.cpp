#include "tnt/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace tnt::complexity {

namespace {

// Checked integer helpers; closed forms must stay exact.
std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("complexity count overflows 64 bits");
  return r;
}

template <typename... Rest>
std::uint64_t mul(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mul(mul(a, b), static_cast<std::uint64_t>(rest)...);
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("complexity count overflows 64 bits");
  return r;
}

void require_positive(std::initializer_list<std::uint64_t> values, const char* what) {
  for (auto v : values) {
    if (v < 1) throw std::invalid_argument(std::string(what) + ": all sizes must be >= 1");
  }
}

std::uint64_t u(std::int64_t v) { return static_cast<std::uint64_t>(v); }

// Exhaustive parameter count of one pre-norm block.
std::uint64_t block_params(std::uint64_t dim, std::uint64_t ratio) {
  const std::uint64_t hidden = mul(ratio, dim);
  std::uint64_t p = mul(2, dim);                // ln1
  p = add(p, mul(4, add(mul(dim, dim), dim)));  // q, k, v, proj
  p = add(p, mul(2, dim));                      // ln2
  p = add(p, add(mul(dim, hidden), hidden));    // fc1
  p = add(p, add(mul(hidden, dim), dim));       // fc2
  return p;
}

std::uint64_t se_hidden(std::uint64_t dim) { return std::max<std::uint64_t>(1, dim / 4); }

std::uint64_t se_params(std::uint64_t dim) {
  const std::uint64_t h = se_hidden(dim);
  return add(add(mul(dim, h), h), add(mul(h, dim), dim));
}

// Multiply-accumulates of one block over `seqs` sequences of `tokens`.
std::uint64_t block_macs(std::uint64_t seqs, std::uint64_t tokens, std::uint64_t dim, std::uint64_t ratio) {
  std::uint64_t per = mul(4, tokens, dim, dim);          // q, k, v, proj
  per = add(per, mul(2, tokens, tokens, dim));           // QK^T and attn * V
  per = add(per, mul(2, ratio, tokens, dim, dim));       // fc1 + fc2
  return mul(seqs, per);
}

std::uint64_t tnt_layer_params(const TntConfig& c) {
  const std::uint64_t m = u(c.num_words()), ci = u(c.inner_dim), d = u(c.outer_dim), r = u(c.mlp_ratio);
  std::uint64_t p = block_params(ci, r);
  if (c.se) p = add(p, se_params(ci));
  if (c.fusion_ln) p = add(p, mul(2, m, ci));
  p = add(p, add(mul(m, ci, d), d));
  p = add(p, block_params(d, r));
  if (c.se) p = add(p, se_params(d));
  return p;
}

std::uint64_t tnt_layer_macs(const TntConfig& c) {
  const std::uint64_t n = u(c.num_patches()), m = u(c.num_words()), ci = u(c.inner_dim), d = u(c.outer_dim),
                      r = u(c.mlp_ratio);
  std::uint64_t f = block_macs(n, m, ci, r);
  f = add(f, mul(n, m, ci, d));
  f = add(f, block_macs(1, n + 1, d, r));
  if (c.se) {
    f = add(f, mul(n, 2, ci, se_hidden(ci)));
    f = add(f, mul(2, d, se_hidden(d)));
  }
  return f;
}

std::string with_commas(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::uint64_t flops_standard_block(std::uint64_t n, std::uint64_t d) {
  require_positive({n, d}, "flops_standard_block");
  return mul(2, n, d, add(mul(6, d), n));
}

std::uint64_t flops_standard_block_general(std::uint64_t n, std::uint64_t d, std::uint64_t dk, std::uint64_t dv,
                                           std::uint64_t r) {
  require_positive({n, d, dk, dv, r}, "flops_standard_block_general");
  const std::uint64_t kv = add(dk, dv);
  return add(add(mul(2, n, d, kv), mul(n, n, kv)), mul(2, n, d, d, r));
}

std::uint64_t params_standard_block(std::uint64_t d) {
  require_positive({d}, "params_standard_block");
  return mul(12, d, d);
}

std::uint64_t flops_tnt_block(std::uint64_t n, std::uint64_t m, std::uint64_t c, std::uint64_t d) {
  require_positive({n, m, c, d}, "flops_tnt_block");
  const std::uint64_t inner = mul(2, n, m, c, add(mul(6, c), m));
  const std::uint64_t fusion = mul(n, m, c, d);
  return add(add(inner, fusion), flops_standard_block(n, d));
}

std::uint64_t params_tnt_block(std::uint64_t m, std::uint64_t c, std::uint64_t d) {
  require_positive({m, c, d}, "params_tnt_block");
  return add(add(mul(12, c, c), mul(m, c, d)), params_standard_block(d));
}

std::uint64_t exhaustive_parameter_count(const TntConfig& config) {
  return model_report(config).exhaustive_params;
}

ComplexityReport model_report(const TntConfig& config) {
  config.validate();
  const std::uint64_t n = u(config.num_patches()), m = u(config.num_words()), c = u(config.inner_dim),
                      d = u(config.outer_dim), r = u(config.mlp_ratio), k = u(config.num_classes);
  ComplexityReport rep;
  rep.model = config.name;
  rep.image_height = config.image_height;
  rep.image_width = config.image_width;
  rep.tnt_block_indices = config.tnt_block_indices;

  std::uint64_t standard_flops = 0, standard_params = 0;
  for (int l = 1; l <= config.depth; ++l) {
    LayerComplexity lc;
    lc.layer = l;
    lc.tnt = config.is_tnt_layer(l);
    if (lc.tnt) {
      lc.formula_flops = flops_tnt_block(n, m, c, d);
      lc.formula_params = params_tnt_block(m, c, d);
      lc.exhaustive_flops = tnt_layer_macs(config);
      lc.exhaustive_params = tnt_layer_params(config);
    } else {
      lc.formula_flops = flops_standard_block(n, d);
      lc.formula_params = params_standard_block(d);
      lc.exhaustive_flops = block_macs(1, n + 1, d, r);
      lc.exhaustive_params = block_params(d, r);
    }
    rep.formula_flops = add(rep.formula_flops, lc.formula_flops);
    rep.formula_params = add(rep.formula_params, lc.formula_params);
    rep.exhaustive_flops = add(rep.exhaustive_flops, lc.exhaustive_flops);
    rep.exhaustive_params = add(rep.exhaustive_params, lc.exhaustive_params);
    standard_flops = add(standard_flops, flops_standard_block(n, d));
    standard_params = add(standard_params, params_standard_block(d));
    rep.layers.push_back(lc);
  }

  const std::uint64_t word_pixels = u(config.word_pixels());
  rep.stem_flops = mul(n, m, word_pixels, c);
  rep.stem_params = add(mul(word_pixels, c), c);
  if (config.pos_enc.word) rep.encoding_params = add(rep.encoding_params, mul(m, c));
  if (config.pos_enc.sentence) rep.encoding_params = add(rep.encoding_params, mul(n + 1, d));
  if (config.class_token_learnable) rep.encoding_params = add(rep.encoding_params, d);
  if (config.sentence_init_learnable) rep.encoding_params = add(rep.encoding_params, mul(n, d));
  rep.head_flops = mul(d, k);
  rep.head_params = add(add(mul(d, k), k), mul(2, d));  // head + final LN

  rep.exhaustive_flops = add(add(rep.exhaustive_flops, rep.stem_flops), rep.head_flops);
  rep.exhaustive_params =
      add(add(add(rep.exhaustive_params, rep.stem_params), rep.encoding_params), rep.head_params);

  rep.block_flops_ratio =
      static_cast<double>(flops_tnt_block(n, m, c, d)) / static_cast<double>(flops_standard_block(n, d));
  rep.block_params_ratio =
      static_cast<double>(params_tnt_block(m, c, d)) / static_cast<double>(params_standard_block(d));
  rep.model_flops_ratio = static_cast<double>(rep.formula_flops) / static_cast<double>(standard_flops);
  rep.model_params_ratio = static_cast<double>(rep.formula_params) / static_cast<double>(standard_params);
  return rep;
}

std::string format_ratio(double ratio) {
  // The epsilon keeps exact two-decimal values from flooring one step down.
  return fixed(std::floor(ratio * 100.0 + 1e-9) / 100.0, 2) + "x";
}

std::string render_table(const ComplexityReport& rep) {
  std::ostringstream os;
  os << "model " << rep.model << " at " << rep.image_height << "x" << rep.image_width << ", TNT layers [";
  for (std::size_t i = 0; i < rep.tnt_block_indices.size(); ++i) {
    os << (i ? ", " : "") << rep.tnt_block_indices[i];
  }
  os << "]\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-8s %18s %14s %18s %14s\n", "layer", "kind", "formula FLOPs",
                "formula params", "exhaustive FLOPs", "exh. params");
  os << line;
  for (const auto& l : rep.layers) {
    std::snprintf(line, sizeof line, "%-6d %-8s %18s %14s %18s %14s\n", l.layer, l.tnt ? "tnt" : "vanilla",
                  with_commas(l.formula_flops).c_str(), with_commas(l.formula_params).c_str(),
                  with_commas(l.exhaustive_flops).c_str(), with_commas(l.exhaustive_params).c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%-15s %18s %14s %18s %14s\n", "stem", "-", "-",
                with_commas(rep.stem_flops).c_str(), with_commas(rep.stem_params).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-15s %18s %14s %18s %14s\n", "encodings", "-", "-", "0",
                with_commas(rep.encoding_params).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-15s %18s %14s %18s %14s\n", "norm+head", "-", "-",
                with_commas(rep.head_flops).c_str(), with_commas(rep.head_params).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-15s %18s %14s %18s %14s\n", "total", with_commas(rep.formula_flops).c_str(),
                with_commas(rep.formula_params).c_str(), with_commas(rep.exhaustive_flops).c_str(),
                with_commas(rep.exhaustive_params).c_str());
  os << line << '\n';
  os << "params (exhaustive): " << fixed(static_cast<double>(rep.exhaustive_params) / 1e6, 2) << "M\n";
  os << "FLOPs  (exhaustive): " << fixed(static_cast<double>(rep.exhaustive_flops) / 1e9, 2) << "B\n";
  os << "FLOPs  (formula):    " << fixed(static_cast<double>(rep.formula_flops) / 1e9, 2) << "B\n";
  os << "formula-vs-exhaustive params gap: "
     << with_commas(rep.exhaustive_params - std::min(rep.exhaustive_params, rep.formula_params)) << '\n';
  os << "TNT/standard block ratio: FLOPs " << format_ratio(rep.block_flops_ratio) << " ("
     << fixed(rep.block_flops_ratio, 4) << "), params " << format_ratio(rep.block_params_ratio) << " ("
     << fixed(rep.block_params_ratio, 4) << ")\n";
  os << "TNT/standard stack ratio: FLOPs " << format_ratio(rep.model_flops_ratio) << " ("
     << fixed(rep.model_flops_ratio, 4) << "), params " << format_ratio(rep.model_params_ratio) << " ("
     << fixed(rep.model_params_ratio, 4) << ")\n";
  return os.str();
}

nlohmann::json report_to_json(const ComplexityReport& rep) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : rep.layers) {
    layers.push_back({{"layer", l.layer},
                      {"kind", l.tnt ? "tnt" : "vanilla"},
                      {"formula_flops", l.formula_flops},
                      {"formula_params", l.formula_params},
                      {"exhaustive_flops", l.exhaustive_flops},
                      {"exhaustive_params", l.exhaustive_params}});
  }
  return {{"model", rep.model},
          {"image_height", rep.image_height},
          {"image_width", rep.image_width},
          {"tnt_block_indices", rep.tnt_block_indices},
          {"layers", layers},
          {"formula_flops", rep.formula_flops},
          {"formula_params", rep.formula_params},
          {"exhaustive_flops", rep.exhaustive_flops},
          {"exhaustive_params", rep.exhaustive_params},
          {"stem_flops", rep.stem_flops},
          {"stem_params", rep.stem_params},
          {"encoding_params", rep.encoding_params},
          {"head_flops", rep.head_flops},
          {"head_params", rep.head_params},
          {"block_flops_ratio", rep.block_flops_ratio},
          {"block_params_ratio", rep.block_params_ratio},
          {"model_flops_ratio", rep.model_flops_ratio},
          {"model_params_ratio", rep.model_params_ratio}};
}

}  // namespace tnt::complexity
