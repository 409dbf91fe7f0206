#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace iotlens {

std::array<std::uint8_t, 32> sha256(std::string_view data);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

/// Lowercase hex SHA-256 of a file's raw bytes. Streams the file, so it
/// works for captures larger than memory. Throws FileNotFound / IoError.
std::string capture_hash(const std::filesystem::path& path);

/// Incremental SHA-256 for data that arrives in pieces.
class Sha256Stream {
public:
    Sha256Stream();
    ~Sha256Stream();
    Sha256Stream(const Sha256Stream&) = delete;
    Sha256Stream& operator=(const Sha256Stream&) = delete;

    void update(std::string_view data);
    /// Lowercase hex digest; the stream is spent afterwards.
    std::string hex();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// 12-char base-36 digest of the first 8 bytes of SHA-256(data).
std::string base36_digest12(std::string_view data);

}  // namespace iotlens
