#pragma once

// Checkpoint file layout (all integers 64-bit little-endian):
//
//   "VLAM1"
//   repeated, sorted by name, until end of file:
//     name length, name bytes, rank, extents[rank], values as float32 LE
//
// Values are always stored as 32-bit floats regardless of training precision.

#include <filesystem>
#include <string>
#include <vector>

#include "wsgic/params.hpp"

namespace wsgic {

inline constexpr char kCheckpointMagic[] = "VLAM1";

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// Records are written in name order whatever order they are passed in.
void write_records(const std::filesystem::path& path, std::vector<TensorRecord> records);
std::vector<TensorRecord> read_records(const std::filesystem::path& path);

template <typename T>
void save_parameters(const ParameterStore<T>& params, const std::filesystem::path& path);

// Every parameter in the store must be present in the file with the same
// shape; extra records are an error as well.
template <typename T>
void load_parameters(ParameterStore<T>& params, const std::filesystem::path& path);

}  // namespace wsgic
