#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "iotlens/capture.hpp"

namespace iotlens {

struct Endpoint {
    IpAddr ip;
    std::uint16_t port = 0;

    std::string to_string() const;
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// Canonical bidirectional 5-tuple: `a` <= `b` by (IP bytes, port), so both
/// directions of a conversation map to the same key.
struct SessionKey {
    Endpoint a;
    Endpoint b;
    Transport transport = Transport::None;

    static SessionKey from_packet(const PacketRecord& rec);
    /// "tcp|10.0.0.1|80|10.0.0.2|49152"
    std::string canonical_string() const;

    friend auto operator<=>(const SessionKey&, const SessionKey&) = default;
    friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

/// True when the packet can be keyed: it has IP addresses and a TCP, UDP
/// or ICMP transport.
bool has_session_key(const PacketRecord& rec);

/// 12-char base-36 uid over (canonical 5-tuple, first-packet timestamp).
std::string session_uid(const SessionKey& key, std::int64_t first_ts_us);

}  // namespace iotlens
