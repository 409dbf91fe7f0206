#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotlens/capture.hpp"
#include "iotlens/session_key.hpp"

namespace iotlens {

/// TCP/UDP-only session key; see SessionKey for the canonical ordering.
using FlowKey = SessionKey;

enum class ConnectionSignature {
    CompleteHandshake,
    HandshakeInProgress,
    MidstreamReset,
    PrematureTermination,
    RejectedOnConnect,
    GracefulClose,
    NoHandshakeObserved,
    Udp,
};

std::string_view signature_name(ConnectionSignature sig);

enum class ReputationSource { AbuseIPDB, None };
enum class Verdict { Benign, Suspicious, Malicious };

std::string_view verdict_name(Verdict v);

struct ReputationTag {
    ReputationSource source = ReputationSource::None;
    int abuse_confidence = 0;
    Verdict verdict = Verdict::Benign;

    /// Benign < 25 <= Suspicious < 75 <= Malicious.
    static ReputationTag from_confidence(int confidence,
                                         ReputationSource source = ReputationSource::AbuseIPDB);
    friend bool operator==(const ReputationTag&, const ReputationTag&) = default;
};

enum class Side { A, B };

struct FlowRecord {
    FlowKey key;
    std::string uid;
    Side initiator = Side::A;
    std::uint64_t pkt_count = 0;
    std::uint64_t byte_count = 0;
    std::uint64_t pkts_from_initiator = 0;
    std::int64_t first_ts_us = 0;
    std::int64_t last_ts_us = 0;
    std::vector<TcpFlags> flag_seq;
    std::vector<AppFields> app_cues;
    std::uint8_t ttl_min = 255;
    std::uint8_t ttl_max = 0;
    bool ttl_seen = false;
    std::optional<MacAddr> mac_a, mac_b;
    std::optional<std::string> mac_vendor_a, mac_vendor_b;
    std::optional<ReputationTag> reputation_a, reputation_b;
    std::vector<std::uint64_t> frame_nos;

    std::int64_t duration_us() const { return last_ts_us - first_ts_us; }
    const Endpoint& src() const { return initiator == Side::A ? key.a : key.b; }
    const Endpoint& dst() const { return initiator == Side::A ? key.b : key.a; }
    const std::optional<std::string>& src_vendor() const {
        return initiator == Side::A ? mac_vendor_a : mac_vendor_b;
    }
    const std::optional<std::string>& dst_vendor() const {
        return initiator == Side::A ? mac_vendor_b : mac_vendor_a;
    }
    const std::optional<ReputationTag>& src_reputation() const {
        return initiator == Side::A ? reputation_a : reputation_b;
    }
    const std::optional<ReputationTag>& dst_reputation() const {
        return initiator == Side::A ? reputation_b : reputation_a;
    }
};

struct FlowAssembly {
    std::vector<FlowRecord> flows;  // ordered by first_ts, then first frame
    std::uint64_t skipped = 0;      // packets that are not TCP/UDP over IP
};

/// Fold packets into bidirectional flows. One capture is one flow epoch;
/// there is no idle-timeout splitting.
FlowAssembly assemble_flows(const std::vector<PacketRecord>& packets);

/// Map a TCP flag sequence to its connection signature. Total: every
/// sequence, including the empty one, has a signature.
///
/// Rules, applied in order (s = first packet carrying SYN, c = packet that
/// completes SYN -> SYN+ACK -> ACK, r/f = first RST/FIN at or after s):
///  1. no SYN anywhere                                -> NoHandshakeObserved
///  2. r exists, r - s <= 2, handshake not complete   -> RejectedOnConnect
///  3. r exists after c                               -> MidstreamReset
///  4. f exists before c (or c never happens)         -> PrematureTermination
///  5. r exists later, handshake never completed      -> PrematureTermination
///  6. c exists and at least two FIN packets from c on -> GracefulClose
///  7. c never happens                                 -> HandshakeInProgress
///  8. otherwise                                       -> CompleteHandshake
ConnectionSignature decode_flag_sequence(std::span<const TcpFlags> flag_seq);

ConnectionSignature flow_signature(const FlowRecord& flow);

/// OUI prefix (24-bit) -> vendor name.
class OuiTable {
public:
    OuiTable() = default;

    /// CSV lines `prefix,vendor`, prefix as `aa:bb:cc`. Lines starting with
    /// '#' and a `prefix,vendor` header are ignored.
    static OuiTable load(const std::filesystem::path& path);
    static OuiTable parse(std::string_view csv);

    void add(std::string_view prefix, std::string vendor);
    std::optional<std::string> find(const MacAddr& mac) const;
    std::size_t size() const { return table_.size(); }

private:
    std::map<std::uint32_t, std::string> table_;
};

/// Vendor for a MAC: "Locally Administered" for unicast addresses with the
/// U/L bit set, the table entry on a prefix hit, "Unknown" otherwise.
std::string resolve_vendor(const MacAddr& mac, const OuiTable& table);
/// String overload; throws MalformedMac.
std::string resolve_vendor(std::string_view mac, const OuiTable& table);

void annotate_vendors(std::vector<FlowRecord>& flows, const OuiTable& table);

/// Deterministic narrative block for one flow, terminated by a blank line.
std::string render_narrative(const FlowRecord& flow, ConnectionSignature sig);

/// Capture-wide block: traffic distribution across devices and protocols.
std::string render_global_summary(const FlowAssembly& assembly, const std::vector<PacketRecord>& packets);

/// Global summary followed by every flow block, in flow order.
std::string render_flow_report(const FlowAssembly& assembly, const std::vector<PacketRecord>& packets);

}  // namespace iotlens
