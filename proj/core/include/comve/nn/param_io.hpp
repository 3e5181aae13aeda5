#pragma once

#include <filesystem>
#include <span>

#include "comve/nn/tape.hpp"

namespace comve::nn {

// Binary parameter file: "CMVP" magic, format version, then per parameter
// its name, shape and little-endian float64 values in column-major order.
void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params);

// Loads values by name into `params`; every parameter must be present with a
// matching shape. Extra entries in the file are an error.
void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace comve::nn
