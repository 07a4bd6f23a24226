#pragma once

#include <cstdint>
#include <string_view>

namespace resbridge {

// FNV-1a over bytes; used for config hashes.
uint64_t fnv1a(std::string_view bytes);

// CRC32 (IEEE, reflected) over bytes; used by the RVB1 dataset trailer.
uint32_t crc32(const void* data, size_t len);

}  // namespace resbridge
