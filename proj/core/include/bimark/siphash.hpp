#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace bimark {

/// SipHash-2-4 with a 128-bit key, 64-bit output (reference semantics:
/// key and message bytes are read little-endian).
std::uint64_t siphash24(std::span<const std::uint8_t, 16> key,
                        std::span<const std::uint8_t> message) noexcept;

}  // namespace bimark
