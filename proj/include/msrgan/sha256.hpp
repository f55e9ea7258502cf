#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace msrgan {

/// Incremental SHA-256. Content hashes are used for checkpoint integrity,
/// backbone provenance and preprocess idempotence checks.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, size_t len);
    /// Finalizes and returns the digest as lowercase hex. The object must be
    /// reset before reuse.
    std::string hex_digest();

private:
    void process_block(const uint8_t* block);

    std::array<uint32_t, 8> h_{};
    std::array<uint8_t, 64> buffer_{};
    size_t buffer_len_ = 0;
    uint64_t total_len_ = 0;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

} // namespace msrgan
