#include "plab/net/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "plab/error.hpp"

namespace plab::net {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

void append_le(std::string& out, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

double read_le(const std::string& in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

json shapes(const ParamSet& p) {
  json arr = json::array();
  for_each_block(p, [&](const BlockId& id, std::span<const double> s) {
    json shape = json::array();
    if (id.field == BlockField::weight) {
      const auto& w = id.group == BlockGroup::layer               ? p.layers[id.index].weight
                      : id.group == BlockGroup::injected_trainable ? p.injections[id.index].trainable.weight
                                                                   : p.injections[id.index].frozen_copy.weight;
      shape = {w.rows(), w.cols()};
    } else {
      shape = {s.size()};
    }
    arr.push_back({{"name", id.name()}, {"shape", shape}});
  });
  return arr;
}

DenseParams empty_dense(const LayerSpec& s) {
  DenseParams d;
  d.weight = Matrix(s.out_dim, s.in_dim);
  d.bias.assign(s.out_dim, 0.0);
  if (s.layer_norm) {
    d.gain.assign(s.out_dim, 0.0);
    d.offset.assign(s.out_dim, 0.0);
  }
  return d;
}

ParamSet layout_for(const std::vector<LayerSpec>& specs, std::size_t injections) {
  ParamSet p;
  for (const auto& s : specs) p.layers.push_back(empty_dense(s));
  for (std::size_t i = 0; i < injections; ++i)
    p.injections.push_back({empty_dense(specs.back()), empty_dense(specs.back())});
  return p;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

json to_json(const LayerSpec& spec) {
  json init = {{"kind", std::string(to_string(spec.init.kind))}};
  switch (spec.init.kind) {
    case InitScheme::Kind::orthogonal: init["gain"] = spec.init.gain; break;
    case InitScheme::Kind::normal:
      init["mean"] = spec.init.mean;
      init["stddev"] = spec.init.stddev;
      break;
    case InitScheme::Kind::uniform_fan_in: break;
  }
  return {{"in_dim", spec.in_dim},
          {"out_dim", spec.out_dim},
          {"activation", std::string(to_string(spec.activation))},
          {"layer_norm", spec.layer_norm},
          {"init", init}};
}

LayerSpec layer_spec_from_json(const json& j) {
  try {
    LayerSpec s;
    s.in_dim = j.at("in_dim").get<std::size_t>();
    s.out_dim = j.at("out_dim").get<std::size_t>();
    s.activation = parse_activation(j.at("activation").get<std::string>());
    s.layer_norm = j.at("layer_norm").get<bool>();
    const auto& init = j.at("init");
    s.init.kind = parse_init_kind(init.at("kind").get<std::string>());
    s.init.gain = init.value("gain", 1.0);
    s.init.mean = init.value("mean", 0.0);
    s.init.stddev = init.value("stddev", 0.0);
    return s;
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed layer spec: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& manifest, const Network& net, const json& meta,
                     const ParamSet* gradients) {
  std::string blob;
  append_le(blob, flatten(net.params()));
  append_le(blob, flatten(net.init_snapshot()));
  if (gradients) {
    if (!same_layout(*gradients, net.params())) throw InvalidInput("save_checkpoint: gradient layout mismatch");
    append_le(blob, flatten(*gradients));
  }

  json layers = json::array();
  for (const auto& s : net.specs()) layers.push_back(to_json(s));
  auto blob_path = manifest;
  blob_path.replace_extension(".bin");

  json m = {{"format", "plab-checkpoint"},
            {"version", kCheckpointVersion},
            {"layers", layers},
            {"injections", net.injection_count()},
            {"parameters", shapes(net.params())},
            {"init_snapshot", shapes(net.init_snapshot())},
            {"has_gradients", gradients != nullptr},
            {"blob", blob_path.filename().string()},
            {"blob_bytes", blob.size()},
            {"blob_fnv1a64", hex64(fnv1a(blob))},
            {"meta", meta}};
  write_file(blob_path, blob);
  write_file(manifest, m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  json m;
  try {
    m = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    throw CheckpointError("unparseable manifest " + manifest.string() + ": " + e.what());
  }
  try {
    if (m.value("format", "") != "plab-checkpoint") throw CheckpointError("not a plab checkpoint");
    if (m.at("version").get<int>() != kCheckpointVersion)
      throw CheckpointError("checkpoint version " + std::to_string(m.at("version").get<int>()) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    std::vector<LayerSpec> specs;
    for (const auto& l : m.at("layers")) specs.push_back(layer_spec_from_json(l));
    validate_chain(specs);
    const auto injections = m.at("injections").get<std::size_t>();
    const bool has_grads = m.at("has_gradients").get<bool>();

    ParamSet params = layout_for(specs, injections);
    ParamSet init = layout_for(specs, 0);
    if (shapes(params) != m.at("parameters") || shapes(init) != m.at("init_snapshot"))
      throw CheckpointError("parameter shapes in manifest disagree with layer specs");

    const std::string blob = read_file(manifest.parent_path() / m.at("blob").get<std::string>());
    const std::size_t n_params = parameter_count(params);
    const std::size_t n_init = parameter_count(init);
    const std::size_t expected = 8 * (n_params + n_init + (has_grads ? n_params : 0));
    if (blob.size() != expected || blob.size() != m.at("blob_bytes").get<std::size_t>())
      throw CheckpointError("blob size " + std::to_string(blob.size()) + " does not match manifest");
    if (hex64(fnv1a(blob)) != m.at("blob_fnv1a64").get<std::string>())
      throw CheckpointError("blob checksum mismatch (corrupted checkpoint)");

    std::vector<double> values(blob.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_le(blob, 8 * i);
    std::span<const double> all(values);
    unflatten(params, all.subspan(0, n_params));
    unflatten(init, all.subspan(n_params, n_init));

    Checkpoint c{Network::from_parts(std::move(specs), std::move(params), std::move(init)), m.at("meta"),
                 std::nullopt};
    if (has_grads) {
      ParamSet g = zeros_like(c.network.params());
      unflatten(g, all.subspan(n_params + n_init, n_params));
      c.gradients = std::move(g);
    }
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  } catch (const SpecError& e) {
    throw CheckpointError(std::string("invalid network in checkpoint: ") + e.what());
  }
}

}  // namespace plab::net

namespace plab::net {

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::string bytes;
  bytes.reserve(m.size() * 8);
  append_le(bytes, m.values());
  write_file(path, bytes);
}

Matrix load_matrix(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  const auto bytes = read_file(path);
  if (bytes.size() != rows * cols * 8)
    throw CheckpointError(path.string() + ": expected " + std::to_string(rows * cols * 8) + " bytes, found " +
                          std::to_string(bytes.size()));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.storage()[i] = read_le(bytes, 8 * i);
  return m;
}

}  // namespace plab::net
