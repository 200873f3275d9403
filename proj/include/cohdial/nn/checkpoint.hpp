#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "cohdial/nn/tensor.hpp"

namespace cohdial::nn {

// Binary archive of named tensors, all integers and floats little-endian:
//
//   magic "CDCKPT\0\0" | u32 version | u64 header bytes | header text
//   u64 tensor count | per tensor: u64 name bytes, name, u32 rank,
//   u64 dims[rank], f64 data[prod(dims)]
//
// The header is `key=value` lines.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using ConfigHeader = std::map<std::string, std::string>;

struct Checkpoint {
    ConfigHeader header;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path &path, const ConfigHeader &header,
                     const ParameterStore &params);
Checkpoint load_checkpoint(const std::filesystem::path &path);

// Copies checkpoint tensors into matching parameters; every parameter must
// be present with the same shape.
void restore_parameters(const Checkpoint &ckpt, ParameterStore &params);

std::string format_header(const ConfigHeader &header);
ConfigHeader parse_header(const std::string &text);

} // namespace cohdial::nn
