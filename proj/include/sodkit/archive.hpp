#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sodkit/tensor.hpp"

namespace sodkit {

// Single-file container of named float32 tensors plus string metadata.
//
// Layout (little endian):
//   "SODARC01"
//   u32 meta_count,   { str key, str value } * meta_count
//   u32 tensor_count, { str name, i32 n, i32 c, i32 h, i32 w, f32 data[n*c*h*w] } * tensor_count
// where str is a u32 byte length followed by the bytes. Entry order is kept.
struct TensorArchive {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const std::string* meta(const std::string& key) const;
    const Tensor* tensor(const std::string& name) const;
    std::map<std::string, const Tensor*> tensor_index() const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace sodkit
