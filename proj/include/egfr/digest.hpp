#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace egfr {

// SHA-256, hex-encoded. Used for cache keys, image digests and
// content-addressed stage markers.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(const void* data, size_t len);

}  // namespace egfr
