#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iotlens/capture.hpp"
#include "iotlens/session_key.hpp"

namespace iotlens {

enum class LogKind { conn, dns, http, mqtt, modbus, tls };

std::string_view log_kind_name(LogKind k);

/// One Zeek-style log entry. `fields` keeps insertion order so the JSON
/// rendering is stable: uid, ts, id.orig_h, id.orig_p, id.resp_h,
/// id.resp_p, proto, then the per-kind attributes.
struct ProtocolEvent {
    std::string uid;
    std::int64_t ts_us = 0;
    LogKind log_kind = LogKind::conn;
    std::vector<std::pair<std::string, std::string>> fields;

    const std::string* field(std::string_view name) const;
    std::string to_json_line() const;
};

using ProtocolLogs = std::map<LogKind, std::vector<ProtocolEvent>>;

/// Group packets into canonical 5-tuple sessions and emit one conn event per
/// session plus one event per recognised application transaction. All six
/// kinds are present in the result (possibly empty).
ProtocolLogs generate_protocol_logs(const std::vector<PacketRecord>& packets);

/// All events across kinds, ordered by (ts, kind, uid).
std::vector<ProtocolEvent> flatten_logs(const ProtocolLogs& logs);

/// Parse one line produced by ProtocolEvent::to_json_line().
ProtocolEvent protocol_event_from_json_line(std::string_view line);

}  // namespace iotlens
