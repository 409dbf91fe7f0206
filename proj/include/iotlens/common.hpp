#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iotlens {

/// Error categories surfaced by the library. Every thrown iotlens::Error
/// carries one of these so callers (CLI, HTTP service) can map it.
enum class Errc {
    FileNotFound,
    IoError,
    NotAPcap,
    TruncatedCapture,
    MalformedMac,
    ModelUnavailable,
    NoFixtureForIp,
    AllProvidersFailed,
    NonPublicIp,
    EmbedderUnavailable,
    EmptyText,
    EmptyIndex,
    SessionNotFound,
    RerankerUnavailable,
    ChatUnavailable,
    SearchUnavailable,
    EmptyReference,
    InvalidArgument,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// IPv4 or IPv6 address. IPv4 lives in the first four bytes.
struct IpAddr {
    bool v6 = false;
    std::array<std::uint8_t, 16> bytes{};

    static IpAddr v4_from(std::uint32_t host_order);
    static IpAddr v4_from_bytes(const std::uint8_t* p);
    static IpAddr v6_from_bytes(const std::uint8_t* p);
    static std::optional<IpAddr> parse(std::string_view text);

    std::string to_string() const;
    std::uint32_t v4_value() const;

    friend auto operator<=>(const IpAddr&, const IpAddr&) = default;
    friend bool operator==(const IpAddr&, const IpAddr&) = default;
};

struct MacAddr {
    std::array<std::uint8_t, 6> bytes{};

    /// Accepts colon or dash separated hex octets. Throws MalformedMac.
    static MacAddr parse(std::string_view text);
    std::string to_string() const;

    friend auto operator<=>(const MacAddr&, const MacAddr&) = default;
    friend bool operator==(const MacAddr&, const MacAddr&) = default;
};

/// Microseconds since the epoch, rendered with six decimals.
std::string format_ts(std::int64_t ts_us);

/// Shortest round-trippable rendering for report and feature values
/// ("0", "0.5", "12.25").
std::string format_number(double value);

std::string to_lower(std::string_view s);

/// Suffix stripper shared by the agent and the metrics: "ing" (len >= 6),
/// "ed" (>= 5), "es" (>= 5), "s" (>= 4, not "ss").
std::string light_stem(std::string_view token);
std::string trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace iotlens
