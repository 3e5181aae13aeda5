#include "comve/nn/param_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include "comve/error.hpp"

namespace comve::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");

constexpr char kMagic[4] = {'C', 'M', 'V', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kModule = "checkpoint";

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError(kModule, "truncated parameter file " + path.string());
  }
  return v;
}

}  // namespace

void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    put<std::uint64_t>(out, p->name.size());
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::int64_t>(out, p->value.rows());
    put<std::int64_t>(out, p->value.cols());
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  if (!out) throw IoError(kModule, "write failed for " + path.string());
}

void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(kModule, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw IoError(kModule, path.string() + " is not a parameter file");
  }
  if (get<std::uint32_t>(in, path) != kVersion) {
    throw IoError(kModule, "unsupported parameter file version in " + path.string());
  }
  std::unordered_map<std::string, Parameter*> by_name;
  for (Parameter* p : params) by_name.emplace(p->name, p);

  const auto count = get<std::uint64_t>(in, path);
  std::size_t loaded = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint64_t>(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw IoError(kModule, "truncated parameter file " + path.string());
    }
    const auto rows = get<std::int64_t>(in, path);
    const auto cols = get<std::int64_t>(in, path);
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ConfigError(kModule, "unexpected parameter '" + name + "' in " + path.string());
    }
    Parameter& p = *it->second;
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw ConfigError(kModule, "shape mismatch for parameter '" + name + "'");
    }
    if (!in.read(reinterpret_cast<char*>(p.value.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows * cols)))) {
      throw IoError(kModule, "truncated parameter file " + path.string());
    }
    p.zero_grad();
    ++loaded;
  }
  if (loaded != params.size()) {
    throw ConfigError(kModule, path.string() + " holds " + std::to_string(loaded) + " of " +
                                   std::to_string(params.size()) + " parameters");
  }
}

}  // namespace comve::nn
