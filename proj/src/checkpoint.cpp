#include "tnt/checkpoint.hpp"

#include <map>

namespace tnt {

namespace {

constexpr std::string_view kMagic = "TNTC";
constexpr std::string_view kOptMagic = "OPTS";

void write_record(binary::Writer& w, const std::string& name, const Shape& shape, std::span<const double> data) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) w.u64(static_cast<std::uint64_t>(e));
  w.f64s(data);
}

struct Record {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

Record read_record(binary::Reader& r) {
  Record rec;
  const auto len = r.u32();
  if (len > 4096) r.fail("implausible tensor name length");
  rec.name = r.bytes(len);
  const auto rank = r.u32();
  if (rank > 16) r.fail("implausible rank for '" + rec.name + "'");
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = r.u64();
    if (e == 0 || e > (std::uint64_t{1} << 40)) r.fail("invalid extent for '" + rec.name + "'");
    rec.shape.push_back(static_cast<std::int64_t>(e));
    count *= e;
  }
  rec.data = r.f64s(count);
  return rec;
}

nlohmann::json parse_json(binary::Reader& r, const std::string& what) {
  const auto len = r.u64();
  if (len > r.remaining()) r.fail(what + " block longer than the file");
  try {
    return nlohmann::json::parse(r.bytes(len));
  } catch (const nlohmann::json::exception& e) {
    r.fail(what + " is not valid JSON: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const OptimState* optim) {
  binary::Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  const std::string cfg = config_to_json(model.config).dump();
  w.u64(cfg.size());
  w.bytes(cfg);
  const auto params = model.parameters();
  w.u64(params.size());
  for (const auto& p : params) write_record(w, p.name, p.tensor.shape(), p.tensor.data());
  if (optim != nullptr) {
    w.bytes(kOptMagic);
    const nlohmann::json meta = {{"lr", optim->hyper.lr},
                                 {"beta1", optim->hyper.beta1},
                                 {"beta2", optim->hyper.beta2},
                                 {"eps", optim->hyper.eps},
                                 {"weight_decay", optim->hyper.weight_decay},
                                 {"step", optim->step},
                                 {"tensors", optim->moments.size()}};
    const std::string text = meta.dump();
    w.u64(text.size());
    w.bytes(text);
    for (const auto& mom : optim->moments) {
      const Shape shape{static_cast<std::int64_t>(mom.m.size())};
      write_record(w, mom.name + ".m", shape, mom.m);
      write_record(w, mom.name + ".v", shape, mom.v);
    }
  }
  binary::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::string& path) {
  binary::Reader r(binary::read_file(path), path);
  try {
    if (r.bytes(4) != kMagic) r.fail("not a checkpoint (bad magic)");
    if (const auto v = r.u32(); v != kCheckpointVersion) {
      r.fail("unsupported checkpoint version " + std::to_string(v) + " (expected " +
             std::to_string(kCheckpointVersion) + ")");
    }
    TntConfig config;
    try {
      config = config_from_json(parse_json(r, "config"));
    } catch (const ConfigError& e) {
      r.fail(std::string("invalid config: ") + e.what());
    }
    Checkpoint out{build(config, 0), std::nullopt};
    auto params = out.model.parameters();
    std::map<std::string, Tensor*> by_name;
    for (auto& p : params) by_name[p.name] = &p.tensor;

    const auto count = r.u64();
    if (count != params.size()) {
      r.fail("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
             std::to_string(params.size()));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      Record rec = read_record(r);
      auto it = by_name.find(rec.name);
      if (it == by_name.end()) r.fail("unexpected tensor '" + rec.name + "'");
      Tensor& t = *it->second;
      if (rec.shape != t.shape()) {
        r.fail("shape mismatch for '" + rec.name + "': file " + shape_str(rec.shape) + ", model " +
               shape_str(t.shape()));
      }
      auto dst = t.mutable_data();
      std::copy(rec.data.begin(), rec.data.end(), dst.begin());
      by_name.erase(it);
    }

    if (!r.at_end()) {
      if (r.bytes(4) != kOptMagic) r.fail("unknown trailing section");
      const auto meta = parse_json(r, "optimizer header");
      OptimState st;
      try {
        st.hyper.lr = meta.at("lr").get<double>();
        st.hyper.beta1 = meta.at("beta1").get<double>();
        st.hyper.beta2 = meta.at("beta2").get<double>();
        st.hyper.eps = meta.at("eps").get<double>();
        st.hyper.weight_decay = meta.at("weight_decay").get<double>();
        st.step = meta.at("step").get<std::int64_t>();
      } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("optimizer header: ") + e.what());
      }
      const auto tensors = meta.value("tensors", std::uint64_t{0});
      if (tensors != 0 && tensors != params.size()) r.fail("optimizer state does not cover every parameter");
      for (std::uint64_t i = 0; i < tensors; ++i) {
        const auto& p = params[i];
        Record m = read_record(r);
        Record v = read_record(r);
        const auto n = static_cast<std::size_t>(p.tensor.numel());
        if (m.name != p.name + ".m" || v.name != p.name + ".v" || m.data.size() != n || v.data.size() != n) {
          r.fail("optimizer moments do not match parameter '" + p.name + "'");
        }
        st.moments.push_back({p.name, std::move(m.data), std::move(v.data)});
      }
      if (!r.at_end()) r.fail("trailing bytes after optimizer state");
      out.optim = std::move(st);
    }
    return out;
  } catch (const CheckpointError&) {
    throw;
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
}

}  // namespace tnt
