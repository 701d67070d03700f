#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "plab/net/network.hpp"

namespace plab::net {

inline constexpr int kCheckpointVersion = 1;

/// On disk a checkpoint is two files: a JSON manifest (version, layer specs,
/// per-parameter names and shapes, blob checksum, free-form meta) and a binary
/// blob next to it holding little-endian float64 values in declaration order:
/// current parameters, then the init snapshot, then optionally gradients.
struct Checkpoint {
  Network network;
  nlohmann::json meta;
  std::optional<ParamSet> gradients;
};

nlohmann::json to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

/// Writes <manifest> and <manifest with .bin extension>. Both are written to
/// temporary names and renamed into place.
void save_checkpoint(const std::filesystem::path& manifest, const Network& net,
                     const nlohmann::json& meta = nlohmann::json::object(), const ParamSet* gradients = nullptr);

/// Throws CheckpointError on version mismatch, missing files, size or checksum
/// mismatch. Nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

/// Raw little-endian float64 dump of a matrix in row-major order.
void save_matrix(const std::filesystem::path& path, const Matrix& m);
/// Throws CheckpointError when the file size does not match rows x cols.
Matrix load_matrix(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

}  // namespace plab::net
