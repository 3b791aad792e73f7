// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <fmt/format.h>

#include "hanet/errors.hpp"

namespace hanet {

using json = nlohmann::json;

Backbone::Backbone(const BackboneConfig& cfg, NormSettings norm, Rng& rng) : config(cfg) {
  cfg.validate();
  std::int64_t in = 3;
  for (const auto& stage : cfg.stages) {
    std::vector<ConvBlock> blocks;
    for (int i = 0; i < stage.convs; ++i) {
      blocks.emplace_back(in, stage.width, 3, rng, norm);
      in = stage.width;
    }
    stages.push_back(std::move(blocks));
  }
}

Tensor Backbone::forward(const Tensor& image, Mode mode) {
  const Shape& s = image.shape();
  if (s.c != 3) throw ValidationError(fmt::format("backbone expects 3-channel images, got {}", s.str()));
  if (s.h % 8 != 0 || s.w % 8 != 0) {
    throw ValidationError(fmt::format(
        "backbone input {}x{} is not divisible by 8; pad the image to the next multiple of 8", s.h, s.w));
  }
  Tensor x = image;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    for (auto& block : stages[i]) x = block(x, mode);
    if (i < 3) x = ops::max_pool2d(x, 2, 2);
  }
  return x;
}

void Backbone::collect(const std::string& prefix, ParameterList& out) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    for (std::size_t j = 0; j < stages[i].size(); ++j) {
      stages[i][j].collect(fmt::format("{}.s{}.c{}", prefix, i, j), out);
    }
  }
}

Backend::Backend(std::int64_t in_channels, const std::vector<std::int64_t>& widths, NormSettings norm, Rng& rng) {
  std::int64_t in = in_channels;
  for (auto w : widths) {
    blocks.emplace_back(in, w, 3, rng, norm);
    in = w;
  }
  head = Conv2d(in, 1, 1, rng);
}

Tensor Backend::forward(const Tensor& features, Mode mode) {
  const std::int64_t expect = blocks.empty() ? head.in_channels() : blocks.front().conv.in_channels();
  if (features.shape().c != expect) {
    throw ValidationError(fmt::format("backend expects {} input channels, got {}", expect, features.shape().str()));
  }
  Tensor x = features;
  for (auto& b : blocks) x = b(x, mode);
  return head(x);
}

void Backend::collect(const std::string& prefix, ParameterList& out) {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(fmt::format("{}.{}", prefix, i), out);
  head.collect(prefix + ".out", out);
}

HaNet::HaNet(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  config_.validate();
  Rng rng(derive_seed(seed, "model"));
  const NormSettings norm = cfg.attention.norm;
  backbone_ = Backbone(cfg.backbone, norm, rng);
  const std::int64_t cb = cfg.backbone.out_channels();
  switch (cfg.variant) {
    case Variant::kFull:
      cascade_ = make_cascade(cascade_config(), cfg.attention, rng);
      backend_ = Backend(cb, cfg.resolved_backend_widths(), norm, rng);
      break;
    case Variant::kNoAttention:
      backend_ = Backend(cb, cfg.resolved_backend_widths(), norm, rng);
      break;
    case Variant::kBackboneOnly:
      density_head_ = Conv2d(cb, 1, 1, rng);
      break;
  }
  if (cfg.init_std != kInitStd) {
    // Re-draw every conv/FC weight at the configured scale.
    Rng redraw(derive_seed(seed, "model.init_std"));
    std::normal_distribution<double> dist(0.0, cfg.init_std);
    for (auto& p : parameters().params) {
      if (p.name.ends_with(".weight")) {
        for (double& v : p.tensor.data()) v = dist(redraw);
      }
    }
  }
}

Tensor HaNet::forward(const Tensor& image, Mode mode, ForwardTrace* trace) {
  Tensor features = backbone_.forward(image, mode);
  if (trace) trace->features = features;
  if (config_.variant == Variant::kBackboneOnly) return density_head_(features);
  Tensor x = features;
  if (config_.variant == Variant::kFull) {
    const auto& s = features.shape();
    const int max_k = *std::max_element(config_.scales.begin(), config_.scales.end());
    if (max_k > s.h || max_k > s.w) {
      throw ValidationError(fmt::format("scale K={} exceeds the {}x{} feature map; use a larger input", max_k,
                                        s.h, s.w));
    }
    x = cascade_forward(x, cascade_config(), cascade_, mode, trace ? &trace->hams : nullptr);
    if (trace) trace->attended = x;
  }
  return backend_.forward(x, mode);
}

ParameterList HaNet::parameters() {
  ParameterList out;
  backbone_.collect("backbone", out);
  for (std::size_t i = 0; i < cascade_.size(); ++i) cascade_[i].collect(fmt::format("ham.{}", i), out);
  if (config_.variant == Variant::kBackboneOnly) {
    density_head_.collect("head", out);
  } else {
    backend_.collect("backend", out);
  }
  return out;
}

std::int64_t HaNet::parameter_count() {
  std::int64_t n = 0;
  for (const auto& p : parameters().params) n += p.tensor.numel();
  return n;
}

std::vector<double> count_from_map(const Tensor& map) {
  const Shape& s = map.shape();
  std::vector<double> out(static_cast<std::size_t>(s.n), 0.0);
  const std::int64_t per = s.c * s.plane();
  const auto d = map.data();
  for (std::int64_t n = 0; n < s.n; ++n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < per; ++i) acc += d[static_cast<std::size_t>(n * per + i)];
    out[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

const TensorBlob* ModelCheckpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

namespace {

Shape vec_shape(std::int64_t n) { return Shape{1, n, 1, 1}; }

}  // namespace

ModelCheckpoint capture(HaNet& model, const RunConfig& config, std::int64_t iteration, const std::string& rng_state) {
  ModelCheckpoint ckpt;
  ckpt.config = config;
  ckpt.config.model = model.config();
  ckpt.iteration = iteration;
  ckpt.rng_state = rng_state;
  ParameterList list = model.parameters();
  for (const auto& p : list.params) {
    ckpt.blobs.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  for (const auto& bn : list.batchnorms) {
    const auto c = static_cast<std::int64_t>(bn.state->running_mean.size());
    ckpt.blobs.push_back({bn.name + ".running_mean", vec_shape(c), bn.state->running_mean});
    ckpt.blobs.push_back({bn.name + ".running_var", vec_shape(c), bn.state->running_var});
    ckpt.bn_updates.emplace_back(bn.name, bn.state->updates);
  }
  return ckpt;
}

std::size_t restore(HaNet& model, const ModelCheckpoint& ckpt, bool strict) {
  ParameterList list = model.parameters();
  std::size_t copied = 0;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const TensorBlob* {
    const TensorBlob* b = ckpt.find(name);
    if (!b) {
      if (strict) throw ValidationError("checkpoint is missing tensor '" + name + "'");
      return nullptr;
    }
    if (b->shape != shape) {
      if (strict) {
        throw ValidationError(
            fmt::format("checkpoint tensor '{}' has shape {}, model expects {}", name, b->shape.str(), shape.str()));
      }
      return nullptr;
    }
    return b;
  };
  for (auto& p : list.params) {
    if (const TensorBlob* b = fetch(p.name, p.tensor.shape())) {
      std::copy(b->values.begin(), b->values.end(), p.tensor.data().begin());
      ++copied;
    }
  }
  std::map<std::string, std::int64_t> updates(ckpt.bn_updates.begin(), ckpt.bn_updates.end());
  for (auto& bn : list.batchnorms) {
    const Shape s = vec_shape(static_cast<std::int64_t>(bn.state->running_mean.size()));
    const TensorBlob* mean = fetch(bn.name + ".running_mean", s);
    const TensorBlob* var = fetch(bn.name + ".running_var", s);
    if (mean && var) {
      bn.state->running_mean = mean->values;
      bn.state->running_var = var->values;
      bn.state->updates = updates.count(bn.name) ? updates[bn.name] : 1;
      copied += 2;
    }
  }
  if (strict) {
    std::set<std::string> known;
    for (const auto& p : list.params) known.insert(p.name);
    for (const auto& bn : list.batchnorms) {
      known.insert(bn.name + ".running_mean");
      known.insert(bn.name + ".running_var");
    }
    for (const auto& b : ckpt.blobs) {
      if (!known.count(b.name)) throw ValidationError("checkpoint tensor '" + b.name + "' does not exist in the model");
    }
  }
  return copied;
}

namespace {

constexpr char kMagic[4] = {'H', 'N', 'C', 'K'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

json blob_table(const std::vector<TensorBlob>& blobs, std::uint64_t& offset) {
  json table = json::array();
  for (const auto& b : blobs) {
    table.push_back({{"name", b.name}, {"shape", {b.shape.n, b.shape.c, b.shape.h, b.shape.w}}, {"offset", offset}});
    offset += b.values.size();
  }
  return table;
}

std::vector<TensorBlob> read_table(const json& table, const std::uint8_t* payload, std::uint64_t payload_len) {
  std::vector<TensorBlob> out;
  for (const auto& e : table) {
    TensorBlob b;
    b.name = e.at("name").get<std::string>();
    const auto& s = e.at("shape");
    b.shape = Shape{s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>(), s.at(2).get<std::int64_t>(),
                    s.at(3).get<std::int64_t>()};
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto count = static_cast<std::uint64_t>(b.shape.numel());
    if (b.shape.numel() < 1 || offset + count > payload_len) {
      throw IoError("checkpoint tensor '" + b.name + "' points outside the payload");
    }
    b.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      b.values[i] = std::bit_cast<double>(get_le(payload + 8 * (offset + i), 8));
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt) {
  std::uint64_t offset = 0;
  json header{{"format_version", ckpt.version},
              {"config", ckpt.config},
              {"iteration", ckpt.iteration},
              {"rng_state", ckpt.rng_state},
              {"tensors", blob_table(ckpt.blobs, offset)},
              {"optimizer", blob_table(ckpt.optimizer_state, offset)},
              {"batchnorm", json::array()}};
  for (const auto& [name, n] : ckpt.bn_updates) header["batchnorm"].push_back({{"name", name}, {"updates", n}});
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le(out, ckpt.version, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto* group : {&ckpt.blobs, &ckpt.optimizer_state}) {
    for (const auto& b : *group) {
      for (double v : b.values) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
  }
  return out;
}

ModelCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not a checkpoint file (bad magic or truncated)");
  }
  ModelCheckpoint ckpt;
  ckpt.version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (ckpt.version != ModelCheckpoint::kVersion) {
    throw IoError(fmt::format("unsupported checkpoint version {} (expected {})", ckpt.version,
                              ModelCheckpoint::kVersion));
  }
  const std::uint64_t header_len = get_le(bytes.data() + 8, 8);
  if (16 + header_len > bytes.size()) throw IoError("checkpoint header is truncated");
  const std::uint64_t payload_bytes = bytes.size() - 16 - header_len;
  if (payload_bytes % 8 != 0) throw IoError("checkpoint payload is not a whole number of float64 values");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    ckpt.config = RunConfig{};
    from_json(header.at("config"), ckpt.config);
    ckpt.iteration = header.at("iteration").get<std::int64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    const std::uint8_t* payload = bytes.data() + 16 + header_len;
    ckpt.blobs = read_table(header.at("tensors"), payload, payload_bytes / 8);
    ckpt.optimizer_state = read_table(header.value("optimizer", json::array()), payload, payload_bytes / 8);
    for (const auto& e : header.at("batchnorm")) {
      ckpt.bn_updates.emplace_back(e.at("name").get<std::string>(), e.at("updates").get<std::int64_t>());
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

HaNet model_from_checkpoint(const ModelCheckpoint& ckpt) {
  HaNet model(ckpt.config.model, ckpt.config.seed);
  restore(model, ckpt, true);
  return model;
}

}  // namespace hanet
