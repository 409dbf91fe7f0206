#include "iotlens/session_key.hpp"

#include "iotlens/hash.hpp"

namespace iotlens {

std::string Endpoint::to_string() const {
    if (ip.v6) return "[" + ip.to_string() + "]:" + std::to_string(port);
    return ip.to_string() + ":" + std::to_string(port);
}

bool has_session_key(const PacketRecord& rec) {
    return rec.ip_src && rec.ip_dst &&
           (rec.transport == Transport::TCP || rec.transport == Transport::UDP ||
            rec.transport == Transport::ICMP);
}

SessionKey SessionKey::from_packet(const PacketRecord& rec) {
    Endpoint src{rec.ip_src.value_or(IpAddr{}), rec.src_port.value_or(0)};
    Endpoint dst{rec.ip_dst.value_or(IpAddr{}), rec.dst_port.value_or(0)};
    SessionKey key;
    key.transport = rec.transport;
    if (dst < src) {
        key.a = dst;
        key.b = src;
    } else {
        key.a = src;
        key.b = dst;
    }
    return key;
}

std::string SessionKey::canonical_string() const {
    return std::string(transport_name(transport)) + "|" + a.ip.to_string() + "|" + std::to_string(a.port) +
           "|" + b.ip.to_string() + "|" + std::to_string(b.port);
}

std::string session_uid(const SessionKey& key, std::int64_t first_ts_us) {
    return base36_digest12(key.canonical_string() + "|" + format_ts(first_ts_us));
}

}  // namespace iotlens
