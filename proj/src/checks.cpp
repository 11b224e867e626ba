#include "tnt/checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tnt/model.hpp"
#include "tnt/ops.hpp"
#include "tnt/tnt_block.hpp"
#include "tnt/training.hpp"

namespace tnt::checks {

namespace {

Tensor random_leaf(Shape shape, Rng& rng, double scale_by = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = scale_by * rng.normal();
  Tensor t = Tensor::from_data(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor random_const(const Shape& shape, Rng& rng) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = rng.normal();
  return Tensor::from_data(shape, std::move(data));
}

std::vector<std::int64_t> pick_entries(std::int64_t numel, std::int64_t max_entries, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
  std::iota(idx.begin(), idx.end(), 0);
  if (max_entries <= 0 || numel <= max_entries) return idx;
  for (std::int64_t i = 0; i < max_entries; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(numel - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(max_entries));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Builds a scalar from `out` by a fixed random projection so every output
// entry carries a distinct weight.
struct Projector {
  Rng rng;
  Tensor weights;
  Tensor operator()(const Tensor& out) {
    if (!weights.defined() || weights.shape() != out.shape()) weights = random_const(out.shape(), rng);
    return sum_all(mul(out, weights));
  }
};

}  // namespace

std::vector<GradCheckEntry> gradient_check(const std::function<Tensor()>& loss, const NamedTensors& inputs,
                                           const GradCheckOptions& options) {
  for (const auto& [name, t] : inputs) {
    if (!t.is_leaf() || !t.requires_grad()) {
      throw std::invalid_argument("gradient_check: '" + name + "' is not a leaf requiring grad");
    }
  }
  for (auto [name, t] : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : inputs) {
    const auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(static_cast<std::size_t>(t.numel()), 0.0);
  }

  Rng rng = Rng::stream(options.seed, "gradcheck");
  NoGradGuard no_grad;
  std::vector<GradCheckEntry> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i].second;
    auto data = t.mutable_data();
    const auto entries = pick_entries(t.numel(), options.max_entries, rng);
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0, max_abs = 0.0;
    for (auto e : entries) {
      const double saved = data[e];
      data[e] = saved + options.step;
      const double up = loss().item();
      data[e] = saved - options.step;
      const double down = loss().item();
      data[e] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i][e];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
      max_abs = std::max(max_abs, std::abs(a - numeric));
    }
    GradCheckEntry entry;
    entry.name = inputs[i].first;
    entry.checked = static_cast<std::int64_t>(entries.size());
    entry.rel_err = std::sqrt(diff_sq) / std::max({std::sqrt(a_sq), std::sqrt(n_sq), options.norm_floor});
    entry.max_abs_err = max_abs;
    entry.passed = std::isfinite(entry.rel_err) && entry.rel_err < options.tolerance;
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<GradCheckEntry> op_gradient_suite(const GradCheckOptions& options) {
  std::vector<GradCheckEntry> all;
  Rng rng = Rng::stream(options.seed, "op-suite");
  auto run = [&](const std::string& op, const NamedTensors& inputs, const std::function<Tensor()>& loss) {
    NamedTensors named;
    for (const auto& [n, t] : inputs) named.emplace_back(op + ":" + n, t);
    auto res = gradient_check(loss, named, options);
    all.insert(all.end(), res.begin(), res.end());
  };
  auto proj = [&] { return std::make_shared<Projector>(Projector{Rng(rng.next_u64()), Tensor()}); };

  {
    Tensor a = random_leaf({2, 3}, rng), b = random_leaf({2, 3}, rng);
    auto p = proj();
    run("add", {{"a", a}, {"b", b}}, [=] { return (*p)(add(a, b)); });
    auto p2 = proj();
    run("sub", {{"a", a}, {"b", b}}, [=] { return (*p2)(sub(a, b)); });
    auto p3 = proj();
    run("mul", {{"a", a}, {"b", b}}, [=] { return (*p3)(mul(a, b)); });
    auto p4 = proj();
    run("scale", {{"x", a}}, [=] { return (*p4)(scale(a, -1.7)); });
  }
  {
    Tensor a = random_leaf({2, 3, 4}, rng), b = random_leaf({2, 4, 5}, rng), w = random_leaf({4, 2}, rng);
    auto p = proj();
    run("matmul", {{"a", a}, {"b", b}}, [=] { return (*p)(matmul(a, b)); });
    auto p2 = proj();
    run("matmul_broadcast", {{"a", a}, {"b", w}}, [=] { return (*p2)(matmul(a, w)); });
  }
  {
    Tensor x = random_leaf({2, 3, 5}, rng), w = random_leaf({5, 4}, rng), b = random_leaf({4}, rng);
    auto p = proj();
    run("linear", {{"x", x}, {"weight", w}, {"bias", b}}, [=] { return (*p)(linear(x, w, b)); });
  }
  {
    Tensor x = random_leaf({3, 4}, rng, 2.0);
    auto p = proj();
    run("softmax", {{"x", x}}, [=] { return (*p)(softmax(x, -1)); });
    auto p2 = proj();
    run("softmax_axis0", {{"x", x}}, [=] { return (*p2)(softmax(x, 0)); });
    auto p3 = proj();
    run("log_softmax", {{"x", x}}, [=] { return (*p3)(log_softmax(x, -1)); });
  }
  {
    Tensor x = random_leaf({3, 6}, rng), g = random_leaf({6}, rng), b = random_leaf({6}, rng);
    auto p = proj();
    run("layer_norm", {{"x", x}, {"gamma", g}, {"beta", b}}, [=] { return (*p)(layer_norm(x, g, b)); });
  }
  {
    Tensor x = random_leaf({4, 5}, rng, 1.5);
    auto p = proj();
    run("gelu", {{"x", x}}, [=] { return (*p)(gelu(x)); });
    auto p2 = proj();
    run("sigmoid", {{"x", x}}, [=] { return (*p2)(sigmoid(x)); });
  }
  {
    Tensor x = random_leaf({2, 3, 4}, rng);
    auto p = proj();
    run("reshape", {{"x", x}}, [=] { return (*p)(reshape(x, {4, -1})); });
    auto p2 = proj();
    run("transpose", {{"x", x}}, [=] { return (*p2)(transpose(x, 0, 2)); });
    auto p3 = proj();
    run("permute", {{"x", x}}, [=] { return (*p3)(permute(x, {1, 2, 0})); });
    auto p4 = proj();
    run("slice", {{"x", x}}, [=] { return (*p4)(slice(x, 2, 1, 2)); });
    auto p5 = proj();
    run("split", {{"x", x}}, [=] {
      auto parts = split(x, 1, {1, 2});
      return add((*p5)(parts[0]), scale(sum_all(parts[1]), 0.3));
    });
    auto p6 = proj();
    run("sum", {{"x", x}}, [=] { return (*p6)(sum(x, 1)); });
    auto p7 = proj();
    run("mean", {{"x", x}}, [=] { return (*p7)(mean(x, -1)); });
    run("sum_all", {{"x", x}}, [=] { return sum_all(mul(x, x)); });
    run("mean_all", {{"x", x}}, [=] { return mean_all(mul(x, x)); });
    auto p8 = proj();
    run("expand", {{"x", x}}, [=] { return (*p8)(expand(x, 1, 3)); });
  }
  {
    Tensor a = random_leaf({2, 3}, rng), b = random_leaf({2, 2}, rng);
    auto p = proj();
    run("concat", {{"a", a}, {"b", b}}, [=] { return (*p)(concat({a, b}, 1)); });
  }
  {
    Tensor x = random_leaf({2, 2, 2, 3}, rng);
    auto p = proj();
    run("vectorize", {{"x", x}}, [=] { return (*p)(vectorize(x)); });
  }
  {
    Tensor logits = random_leaf({3, 4}, rng);
    const std::vector<int> labels{0, 3, 1};
    run("smoothed_cross_entropy", {{"logits", logits}},
        [=] { return smoothed_cross_entropy(logits, labels, 0.1); });
  }
  {
    Rng init(rng.next_u64());
    MsaParams msa = make_msa(4, 2, init);
    MlpParams mlp = make_mlp(4, 2, init);
    SeParams se = make_se(4, init);
    for (auto* lp : {&msa.q, &msa.k, &msa.v, &msa.proj}) {
      // Larger weights than the 0.02 init keep the attention non-uniform.
      auto w = lp->weight.mutable_data();
      for (auto& v : w) v = init.normal() * 0.5;
    }
    Tensor x = random_leaf({2, 3, 4}, rng);
    NamedTensors msa_inputs{{"x", x}};
    msa.visit("", [&](const std::string& n, Tensor& t, ParamKind) { msa_inputs.emplace_back(n.substr(1), t); });
    auto p = proj();
    run("msa", msa_inputs, [=] { return (*p)(msa_forward(x, msa).out); });
    NamedTensors mlp_inputs{{"x", x}};
    mlp.visit("", [&](const std::string& n, Tensor& t, ParamKind) { mlp_inputs.emplace_back(n.substr(1), t); });
    auto p2 = proj();
    run("mlp", mlp_inputs, [=] { return (*p2)(mlp_forward(x, mlp)); });
    NamedTensors se_inputs{{"x", x}};
    se.visit("", [&](const std::string& n, Tensor& t, ParamKind) { se_inputs.emplace_back(n.substr(1), t); });
    auto p3 = proj();
    run("se", se_inputs, [=] { return (*p3)(se_forward(x, se)); });
    const std::uint64_t mask_seed = rng.next_u64();
    auto p4 = proj();
    run("drop_path", {{"x", x}}, [=] {
      Rng masks(mask_seed);
      return (*p4)(drop_path(x, 0.5, &masks, true));
    });
  }
  return all;
}

std::vector<GradCheckEntry> model_gradient_suite(const TntConfig& config, const GradCheckOptions& options) {
  Model model = build(config, options.seed);
  // A fresh head is near zero; scaling it up makes the upstream gradients
  // large enough that relative errors are meaningful.
  {
    Rng r = Rng::stream(options.seed, "gradcheck-head");
    auto w = model.head.weight.mutable_data();
    for (auto& v : w) v = r.normal() * 0.5;
  }
  Rng rng = Rng::stream(options.seed, "gradcheck-data");
  const std::int64_t batch = 2;
  std::vector<double> pixels(static_cast<std::size_t>(batch * config.image_height * config.image_width * 3));
  for (auto& v : pixels) v = rng.uniform(0.0, 255.0);
  const Tensor images = Tensor::from_data({batch, config.image_height, config.image_width, 3}, std::move(pixels));
  std::vector<int> labels;
  for (std::int64_t i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng.below(config.num_classes)));

  NamedTensors inputs;
  for (const auto& p : model.parameters()) inputs.emplace_back(p.name, p.tensor);
  return gradient_check([&] { return smoothed_cross_entropy(forward(model, images, false), labels, 0.1); },
                        inputs, options);
}

std::pair<std::vector<double>, std::vector<double>> naive_msa(const std::vector<double>& x, std::int64_t seq,
                                                              const MsaParams& p) {
  const std::int64_t dim = p.dim(), heads = p.heads, dk = dim / heads;
  auto project = [&](const LinearParams& lp, const std::vector<double>& in) {
    std::vector<double> out(static_cast<std::size_t>(seq * dim));
    const auto w = lp.weight.data();
    const auto b = lp.bias.data();
    for (std::int64_t t = 0; t < seq; ++t) {
      for (std::int64_t j = 0; j < dim; ++j) {
        double s = b[j];
        for (std::int64_t i = 0; i < dim; ++i) s += in[t * dim + i] * w[i * dim + j];
        out[t * dim + j] = s;
      }
    }
    return out;
  };
  const auto q = project(p.q, x), k = project(p.k, x), v = project(p.v, x);
  std::vector<double> attn(static_cast<std::size_t>(heads * seq * seq));
  std::vector<double> mixed(static_cast<std::size_t>(seq * dim), 0.0);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::int64_t h = 0; h < heads; ++h) {
    for (std::int64_t i = 0; i < seq; ++i) {
      double* row = &attn[(h * seq + i) * seq];
      double mx = -INFINITY;
      for (std::int64_t j = 0; j < seq; ++j) {
        double s = 0.0;
        for (std::int64_t c = 0; c < dk; ++c) s += q[i * dim + h * dk + c] * k[j * dim + h * dk + c];
        row[j] = s * inv;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (std::int64_t j = 0; j < seq; ++j) z += (row[j] = std::exp(row[j] - mx));
      for (std::int64_t j = 0; j < seq; ++j) row[j] /= z;
      for (std::int64_t c = 0; c < dk; ++c) {
        double s = 0.0;
        for (std::int64_t j = 0; j < seq; ++j) s += row[j] * v[j * dim + h * dk + c];
        mixed[i * dim + h * dk + c] = s;
      }
    }
  }
  return {project(p.proj, mixed), attn};
}

std::vector<OracleEntry> attention_oracle_suite(std::uint64_t seed, double tolerance) {
  std::vector<OracleEntry> out;
  Rng rng = Rng::stream(seed, "oracle");
  NoGradGuard no_grad;
  for (int heads : {1, 2}) {
    for (std::int64_t dim = heads; dim <= 8; dim += heads) {
      for (std::int64_t seq = 1; seq <= 6; ++seq) {
        Rng init(rng.next_u64());
        MsaParams p = make_msa(dim, heads, init);
        for (auto* lp : {&p.q, &p.k, &p.v, &p.proj}) {
          for (auto& v : lp->weight.mutable_data()) v = init.normal() * 0.7;
          for (auto& v : lp->bias.mutable_data()) v = init.normal() * 0.1;
        }
        std::vector<double> x(static_cast<std::size_t>(seq * dim));
        for (auto& v : x) v = rng.normal();
        const auto got = msa_forward(Tensor::from_data({seq, dim}, x), p);
        const auto [want_out, want_attn] = naive_msa(x, seq, p);
        double diff = 0.0;
        for (std::size_t i = 0; i < want_out.size(); ++i) diff = std::max(diff, std::abs(got.out.data()[i] - want_out[i]));
        for (std::size_t i = 0; i < want_attn.size(); ++i) {
          diff = std::max(diff, std::abs(got.attn.data()[i] - want_attn[i]));
        }
        OracleEntry e;
        e.name = "msa h=" + std::to_string(heads) + " dim=" + std::to_string(dim) + " seq=" + std::to_string(seq);
        e.max_abs_diff = diff;
        e.passed = diff <= tolerance;
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

}  // namespace tnt::checks
