#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blood/model.hpp"

namespace blood {

/// Binary model container:
///   "BLOODMDL1" | u64 metadata length | key=value lines (UTF-8) |
///   per parameter: u32 rank, rank x u64 dims, little-endian f64 values.
/// Parameters follow layer order, then Layer::parameters() order.
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace blood
