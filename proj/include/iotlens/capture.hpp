#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotlens/common.hpp"

namespace iotlens {

enum class LinkType { Ethernet, RawIP, Other };

struct RawCapture {
    std::filesystem::path path;
    std::uint64_t byte_len = 0;
    std::string content_hash;
    LinkType link_type = LinkType::Ethernet;
    std::uint32_t link_code = 1;  // DLT value as read from the global header
    bool nanosecond = false;
    bool big_endian = false;
    std::size_t frame_count = 0;
    std::size_t parse_warnings = 0;
    bool truncated = false;
};

enum class Transport : std::uint8_t { None, TCP, UDP, ICMP, Other };

std::string_view transport_name(Transport t);

/// TCP control flag set restricted to the six classic flags.
struct TcpFlags {
    static constexpr std::uint8_t FIN = 0x01;
    static constexpr std::uint8_t SYN = 0x02;
    static constexpr std::uint8_t RST = 0x04;
    static constexpr std::uint8_t PSH = 0x08;
    static constexpr std::uint8_t ACK = 0x10;
    static constexpr std::uint8_t URG = 0x20;

    std::uint8_t bits = 0;

    constexpr bool has(std::uint8_t f) const { return (bits & f) != 0; }
    /// "SYN,ACK" style rendering in a fixed order; "none" for the empty set.
    std::string to_string() const;

    friend bool operator==(TcpFlags, TcpFlags) = default;
};

enum class AppKind { DNS, HTTP, MQTT, Modbus, TLS, Other };

std::string_view app_kind_name(AppKind k);

struct AppFields {
    AppKind kind = AppKind::Other;
    // DNS
    std::optional<int> dns_opcode;
    std::optional<std::string> dns_qname;
    std::optional<int> dns_qtype;
    std::optional<bool> dns_response;
    std::optional<int> dns_trans_id;
    std::optional<int> dns_rcode;
    // HTTP
    std::optional<std::string> http_method;
    std::optional<std::string> http_path;
    std::optional<int> http_status;
    // MQTT
    std::optional<int> mqtt_control_type;
    std::optional<std::string> mqtt_topic;
    // Modbus/TCP
    std::optional<int> modbus_function;
    std::optional<int> modbus_unit_id;
    // TLS
    std::optional<std::string> tls_version;
    std::optional<std::string> tls_sni;

    /// One-line cue such as "DNS query sensor.local (A)".
    std::string summary() const;

    friend bool operator==(const AppFields&, const AppFields&) = default;
};

std::string_view dns_qtype_name(int qtype);
std::string_view mqtt_type_name(int type);

struct PacketRecord {
    std::uint64_t frame_no = 0;
    std::int64_t ts_us = 0;
    std::uint32_t frame_len = 0;
    std::optional<MacAddr> eth_src, eth_dst;
    std::optional<IpAddr> ip_src, ip_dst;
    std::optional<std::uint8_t> ip_ttl;
    Transport transport = Transport::None;
    std::uint8_t transport_code = 0;  // IP protocol number when an IP header was seen
    std::optional<std::uint16_t> src_port, dst_port;
    std::optional<TcpFlags> tcp_flags;
    std::optional<std::uint32_t> tcp_seq, tcp_ack;
    std::uint32_t payload_len = 0;
    std::optional<AppFields> app;

    // Opaque content removed by clean_packet().
    std::vector<std::uint8_t> payload;
    std::optional<std::array<std::uint8_t, 32>> tls_random;

    friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

/// Drop raw segment bytes and TLS randomness; every semantic field is kept.
PacketRecord clean_packet(PacketRecord rec);

struct ParsedCapture {
    RawCapture capture;
    std::vector<PacketRecord> packets;
};

/// Parse a classic pcap (either byte order, micro or nano resolution).
/// Records come back already cleaned. A capture whose last frame is cut
/// short is returned up to the last whole frame with `truncated` set.
ParsedCapture parse_capture(const std::filesystem::path& path);

/// Same as parse_capture but throws TruncatedCapture instead of flagging.
ParsedCapture parse_capture_strict(const std::filesystem::path& path);

/// Parse from memory. `path` is only recorded in the result.
ParsedCapture parse_capture_bytes(std::span<const std::uint8_t> bytes,
                                  const std::filesystem::path& path = {});

/// Dissect one link-layer frame. Exposed for tests and synthetic captures.
PacketRecord dissect_frame(std::span<const std::uint8_t> frame, LinkType link,
                           std::uint64_t frame_no, std::int64_t ts_us,
                           std::uint32_t orig_len, std::size_t* warnings = nullptr);

/// Serialize one record as a single JSON object line (no trailing newline).
std::string packet_to_json_line(const PacketRecord& rec);

}  // namespace iotlens
