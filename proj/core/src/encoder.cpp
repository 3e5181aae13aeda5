#include "comve/encoder.hpp"

#include <algorithm>
#include <cstdlib>

#include "comve/error.hpp"

namespace comve {

std::size_t EncodedInput::real_length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

fs::path resolve_encoder_path(const std::string& name_or_path) {
  if (name_or_path.empty()) throw ConfigError("encoder", "no encoder given");
  const fs::path direct(name_or_path);
  if (fs::is_directory(direct)) return direct;
  if (const char* cache = std::getenv("COMVE_CACHE_DIR"); cache && *cache) {
    const fs::path cached = fs::path(cache) / name_or_path;
    if (fs::is_directory(cached)) return cached;
  }
  throw ConfigError("encoder", "encoder '" + name_or_path +
                                   "' is neither a checkpoint directory nor present under "
                                   "$COMVE_CACHE_DIR");
}

}  // namespace comve
