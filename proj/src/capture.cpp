#include "iotlens/capture.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "iotlens/hash.hpp"

namespace iotlens {

namespace {

constexpr std::uint32_t kMagicMicro = 0xa1b2c3d4;
constexpr std::uint32_t kMagicNano = 0xa1b23c4d;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}
std::uint32_t le32(const std::uint8_t* p) {
    return (std::uint32_t{p[3]} << 24) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[1]} << 8) | p[0];
}

using Bytes = std::span<const std::uint8_t>;

// ---------------------------------------------------------------- DNS

std::optional<std::string> read_dns_name(Bytes msg, std::size_t& off) {
    std::string name;
    std::size_t pos = off;
    bool jumped = false;
    int hops = 0;
    while (true) {
        if (pos >= msg.size()) return std::nullopt;
        std::uint8_t len = msg[pos];
        if (len == 0) {
            ++pos;
            break;
        }
        if ((len & 0xc0) == 0xc0) {
            if (pos + 1 >= msg.size() || ++hops > 16) return std::nullopt;
            std::size_t target = static_cast<std::size_t>(((len & 0x3f) << 8) | msg[pos + 1]);
            if (!jumped) off = pos + 2;
            jumped = true;
            pos = target;
            continue;
        }
        if ((len & 0xc0) != 0 || pos + 1 + len > msg.size()) return std::nullopt;
        if (!name.empty()) name.push_back('.');
        for (std::size_t i = 0; i < len; ++i) {
            char c = static_cast<char>(msg[pos + 1 + i]);
            name.push_back(c >= 0x21 && c <= 0x7e ? c : '?');
        }
        pos += 1 + len;
        if (name.size() > 255) return std::nullopt;
    }
    if (!jumped) off = pos;
    return name;
}

std::optional<AppFields> dissect_dns(Bytes msg) {
    if (msg.size() < 12) return std::nullopt;
    std::uint16_t flags = be16(&msg[2]);
    std::uint16_t qdcount = be16(&msg[4]);
    if (qdcount < 1 || qdcount > 16) return std::nullopt;
    std::size_t off = 12;
    auto qname = read_dns_name(msg, off);
    if (!qname || off + 4 > msg.size()) return std::nullopt;
    AppFields app;
    app.kind = AppKind::DNS;
    app.dns_trans_id = be16(&msg[0]);
    app.dns_response = (flags & 0x8000) != 0;
    app.dns_opcode = (flags >> 11) & 0x0f;
    if (*app.dns_response) app.dns_rcode = flags & 0x0f;
    app.dns_qname = qname->empty() ? std::string(".") : *qname;
    app.dns_qtype = be16(&msg[off]);
    return app;
}

// ---------------------------------------------------------------- HTTP

std::optional<AppFields> dissect_http(Bytes payload) {
    std::string_view text(reinterpret_cast<const char*>(payload.data()),
                          std::min<std::size_t>(payload.size(), 2048));
    auto eol = text.find("\r\n");
    if (eol == std::string_view::npos) eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    static constexpr std::string_view kMethods[] = {"GET",     "POST",  "PUT",    "DELETE", "HEAD",
                                                    "OPTIONS", "PATCH", "CONNECT", "TRACE"};
    AppFields app;
    app.kind = AppKind::HTTP;
    if (line.starts_with("HTTP/1.") && line.size() >= 12 && line[8] == ' ') {
        int status = 0;
        for (std::size_t i = 9; i < 12; ++i) {
            if (line[i] < '0' || line[i] > '9') return std::nullopt;
            status = status * 10 + (line[i] - '0');
        }
        app.http_status = status;
        return app;
    }
    for (auto m : kMethods) {
        if (line.size() > m.size() + 1 && line.starts_with(m) && line[m.size()] == ' ') {
            auto rest = line.substr(m.size() + 1);
            auto sp = rest.find(' ');
            if (sp == std::string_view::npos || !rest.substr(sp + 1).starts_with("HTTP/")) return std::nullopt;
            app.http_method = std::string(m);
            app.http_path = std::string(rest.substr(0, sp));
            return app;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- MQTT

std::optional<AppFields> dissect_mqtt(Bytes payload) {
    if (payload.size() < 2) return std::nullopt;
    int type = payload[0] >> 4;
    if (type < 1 || type > 15) return std::nullopt;
    std::size_t pos = 1;
    std::uint32_t remaining = 0;
    int shift = 0;
    while (true) {
        if (pos >= payload.size() || shift > 21) return std::nullopt;
        std::uint8_t b = payload[pos++];
        remaining |= static_cast<std::uint32_t>(b & 0x7f) << shift;
        if ((b & 0x80) == 0) break;
        shift += 7;
    }
    if (pos + remaining > payload.size()) return std::nullopt;
    AppFields app;
    app.kind = AppKind::MQTT;
    app.mqtt_control_type = type;
    if (type == 1) {
        // CONNECT must name the protocol.
        if (remaining < 6 || pos + 6 > payload.size()) return std::nullopt;
        std::uint16_t n = be16(&payload[pos]);
        if (pos + 2 + n > payload.size()) return std::nullopt;
        std::string_view proto(reinterpret_cast<const char*>(&payload[pos + 2]), n);
        if (proto != "MQTT" && proto != "MQIsdp") return std::nullopt;
    } else if (type == 3) {
        if (remaining < 2) return std::nullopt;
        std::uint16_t n = be16(&payload[pos]);
        if (pos + 2 + n > payload.size()) return std::nullopt;
        std::string topic(reinterpret_cast<const char*>(&payload[pos + 2]), n);
        app.mqtt_topic = topic;
    }
    return app;
}

// ---------------------------------------------------------------- Modbus/TCP

std::optional<AppFields> dissect_modbus(Bytes payload) {
    if (payload.size() < 8) return std::nullopt;
    if (be16(&payload[2]) != 0) return std::nullopt;  // protocol id
    std::uint16_t len = be16(&payload[4]);
    if (len < 2 || len > 254) return std::nullopt;
    AppFields app;
    app.kind = AppKind::Modbus;
    app.modbus_unit_id = payload[6];
    app.modbus_function = payload[7];
    return app;
}

// ---------------------------------------------------------------- TLS

std::string tls_version_name(std::uint16_t v) {
    switch (v) {
        case 0x0300: return "SSL 3.0";
        case 0x0301: return "TLS 1.0";
        case 0x0302: return "TLS 1.1";
        case 0x0303: return "TLS 1.2";
        case 0x0304: return "TLS 1.3";
        default: {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "0x%04x", v);
            return buf;
        }
    }
}

std::optional<AppFields> dissect_tls(Bytes payload, PacketRecord& rec) {
    if (payload.size() < 5) return std::nullopt;
    std::uint8_t ctype = payload[0];
    if (ctype < 20 || ctype > 23 || payload[1] != 3) return std::nullopt;
    AppFields app;
    app.kind = AppKind::TLS;
    app.tls_version = tls_version_name(be16(&payload[1]));
    if (ctype != 22 || payload.size() < 9) return app;
    std::uint8_t hs_type = payload[5];
    if (hs_type != 1 && hs_type != 2) return app;
    std::size_t pos = 9;
    if (pos + 2 + 32 > payload.size()) return app;
    std::uint16_t hello_version = be16(&payload[pos]);
    app.tls_version = tls_version_name(hello_version);
    std::array<std::uint8_t, 32> random{};
    std::memcpy(random.data(), &payload[pos + 2], 32);
    rec.tls_random = random;
    pos += 34;
    if (pos >= payload.size()) return app;
    pos += 1 + payload[pos];  // session id
    if (hs_type == 1) {
        if (pos + 2 > payload.size()) return app;
        pos += 2 + be16(&payload[pos]);  // cipher suites
        if (pos >= payload.size()) return app;
        pos += 1 + payload[pos];  // compression methods
    } else {
        pos += 3;  // chosen suite + compression
    }
    if (pos + 2 > payload.size()) return app;
    std::size_t ext_end = std::min(payload.size(), pos + 2 + be16(&payload[pos]));
    pos += 2;
    while (pos + 4 <= ext_end) {
        std::uint16_t type = be16(&payload[pos]);
        std::uint16_t len = be16(&payload[pos + 2]);
        std::size_t body = pos + 4;
        if (body + len > ext_end) break;
        if (type == 0 && hs_type == 1 && len >= 5) {
            std::uint16_t name_len = be16(&payload[body + 3]);
            if (payload[body + 2] == 0 && body + 5 + name_len <= body + len)
                app.tls_sni = std::string(reinterpret_cast<const char*>(&payload[body + 5]), name_len);
        } else if (type == 43 && len >= 2) {
            // supported_versions: ServerHello carries the negotiated one directly.
            if (hs_type == 2) app.tls_version = tls_version_name(be16(&payload[body]));
        }
        pos = body + len;
    }
    return app;
}

bool port_is(const PacketRecord& rec, std::initializer_list<std::uint16_t> ports) {
    for (auto p : ports)
        if (rec.src_port == p || rec.dst_port == p) return true;
    return false;
}

void dissect_app(PacketRecord& rec, Bytes payload) {
    if (payload.empty()) return;
    std::optional<AppFields> app;
    if (port_is(rec, {53})) {
        if (rec.transport == Transport::TCP && payload.size() > 2)
            app = dissect_dns(payload.subspan(2));
        else if (rec.transport == Transport::UDP)
            app = dissect_dns(payload);
    } else if (rec.ip_src && rec.ip_src->v6) {
        // Only DNS is dissected over IPv6.
    } else if (rec.transport == Transport::TCP && port_is(rec, {80, 8080})) {
        app = dissect_http(payload);
    } else if (rec.transport == Transport::TCP && port_is(rec, {1883})) {
        app = dissect_mqtt(payload);
    } else if (rec.transport == Transport::TCP && port_is(rec, {502})) {
        app = dissect_modbus(payload);
    } else if (rec.transport == Transport::TCP && port_is(rec, {443})) {
        app = dissect_tls(payload, rec);
    }
    rec.app = std::move(app);
}

void dissect_transport(PacketRecord& rec, std::uint8_t proto, Bytes seg, std::size_t* warnings) {
    rec.transport_code = proto;
    switch (proto) {
        case 6: {
            if (seg.size() < 20) {
                rec.transport = Transport::Other;
                if (warnings) ++*warnings;
                return;
            }
            std::size_t doff = static_cast<std::size_t>(seg[12] >> 4) * 4;
            if (doff < 20 || doff > seg.size()) {
                rec.transport = Transport::Other;
                if (warnings) ++*warnings;
                return;
            }
            rec.transport = Transport::TCP;
            rec.src_port = be16(&seg[0]);
            rec.dst_port = be16(&seg[2]);
            rec.tcp_seq = be32(&seg[4]);
            rec.tcp_ack = be32(&seg[8]);
            rec.tcp_flags = TcpFlags{static_cast<std::uint8_t>(seg[13] & 0x3f)};
            auto payload = seg.subspan(doff);
            rec.payload_len = static_cast<std::uint32_t>(payload.size());
            rec.payload.assign(payload.begin(), payload.end());
            dissect_app(rec, payload);
            return;
        }
        case 17: {
            if (seg.size() < 8) {
                rec.transport = Transport::Other;
                if (warnings) ++*warnings;
                return;
            }
            rec.transport = Transport::UDP;
            rec.src_port = be16(&seg[0]);
            rec.dst_port = be16(&seg[2]);
            std::size_t ulen = be16(&seg[4]);
            auto payload = seg.subspan(8, ulen >= 8 && ulen <= seg.size() ? ulen - 8 : seg.size() - 8);
            rec.payload_len = static_cast<std::uint32_t>(payload.size());
            rec.payload.assign(payload.begin(), payload.end());
            dissect_app(rec, payload);
            return;
        }
        case 1:
        case 58:
            rec.transport = Transport::ICMP;
            return;
        default:
            rec.transport = Transport::Other;
            return;
    }
}

void dissect_ipv4(PacketRecord& rec, Bytes pkt, std::size_t* warnings) {
    if (pkt.size() < 20 || (pkt[0] >> 4) != 4) {
        if (warnings) ++*warnings;
        return;
    }
    std::size_t ihl = static_cast<std::size_t>(pkt[0] & 0x0f) * 4;
    std::size_t total = be16(&pkt[2]);
    if (ihl < 20 || ihl > pkt.size()) {
        if (warnings) ++*warnings;
        return;
    }
    rec.ip_src = IpAddr::v4_from_bytes(&pkt[12]);
    rec.ip_dst = IpAddr::v4_from_bytes(&pkt[16]);
    rec.ip_ttl = pkt[8];
    std::uint8_t proto = pkt[9];
    rec.transport_code = proto;
    std::size_t end = total >= ihl && total <= pkt.size() ? total : pkt.size();
    std::uint16_t frag = be16(&pkt[6]);
    if ((frag & 0x1fff) != 0) {
        // Non-first fragment: no transport header to read.
        rec.transport = Transport::Other;
        return;
    }
    dissect_transport(rec, proto, pkt.subspan(ihl, end - ihl), warnings);
}

void dissect_ipv6(PacketRecord& rec, Bytes pkt, std::size_t* warnings) {
    if (pkt.size() < 40 || (pkt[0] >> 4) != 6) {
        if (warnings) ++*warnings;
        return;
    }
    rec.ip_src = IpAddr::v6_from_bytes(&pkt[8]);
    rec.ip_dst = IpAddr::v6_from_bytes(&pkt[24]);
    rec.ip_ttl = pkt[7];
    std::size_t plen = be16(&pkt[4]);
    std::size_t end = std::min(pkt.size(), 40 + plen);
    std::uint8_t next = pkt[6];
    std::size_t pos = 40;
    for (int guard = 0; guard < 8; ++guard) {
        if (next == 0 || next == 43 || next == 60) {
            if (pos + 8 > end) break;
            std::uint8_t nh = pkt[pos];
            pos += (static_cast<std::size_t>(pkt[pos + 1]) + 1) * 8;
            next = nh;
        } else if (next == 44) {
            if (pos + 8 > end) break;
            std::uint16_t off = be16(&pkt[pos + 2]) >> 3;
            next = pkt[pos];
            pos += 8;
            if (off != 0) {
                rec.transport_code = next;
                rec.transport = Transport::Other;
                return;
            }
        } else {
            break;
        }
    }
    if (pos > end) {
        if (warnings) ++*warnings;
        rec.transport = Transport::Other;
        return;
    }
    dissect_transport(rec, next, pkt.subspan(pos, end - pos), warnings);
}

}  // namespace

std::string_view transport_name(Transport t) {
    switch (t) {
        case Transport::None: return "none";
        case Transport::TCP: return "tcp";
        case Transport::UDP: return "udp";
        case Transport::ICMP: return "icmp";
        case Transport::Other: return "other";
    }
    return "other";
}

std::string TcpFlags::to_string() const {
    static constexpr std::pair<std::uint8_t, const char*> kOrder[] = {
        {SYN, "SYN"}, {FIN, "FIN"}, {RST, "RST"}, {PSH, "PSH"}, {ACK, "ACK"}, {URG, "URG"}};
    std::string s;
    for (auto [bit, name] : kOrder) {
        if (!has(bit)) continue;
        if (!s.empty()) s.push_back(',');
        s += name;
    }
    return s.empty() ? "none" : s;
}

std::string_view app_kind_name(AppKind k) {
    switch (k) {
        case AppKind::DNS: return "DNS";
        case AppKind::HTTP: return "HTTP";
        case AppKind::MQTT: return "MQTT";
        case AppKind::Modbus: return "Modbus";
        case AppKind::TLS: return "TLS";
        case AppKind::Other: return "Other";
    }
    return "Other";
}

std::string_view dns_qtype_name(int qtype) {
    switch (qtype) {
        case 1: return "A";
        case 2: return "NS";
        case 5: return "CNAME";
        case 6: return "SOA";
        case 12: return "PTR";
        case 15: return "MX";
        case 16: return "TXT";
        case 28: return "AAAA";
        case 33: return "SRV";
        case 255: return "ANY";
        default: return "";
    }
}

std::string_view mqtt_type_name(int type) {
    static constexpr std::string_view kNames[] = {
        "RESERVED", "CONNECT",  "CONNACK", "PUBLISH",     "PUBACK",   "PUBREC",  "PUBREL", "PUBCOMP",
        "SUBSCRIBE", "SUBACK", "UNSUBSCRIBE", "UNSUBACK", "PINGREQ", "PINGRESP", "DISCONNECT", "AUTH"};
    return type >= 0 && type < 16 ? kNames[type] : "UNKNOWN";
}

std::string AppFields::summary() const {
    std::string s(app_kind_name(kind));
    switch (kind) {
        case AppKind::DNS: {
            s += dns_response.value_or(false) ? " response " : " query ";
            s += dns_qname.value_or("?");
            if (dns_qtype) {
                auto n = dns_qtype_name(*dns_qtype);
                s += " (" + (n.empty() ? "type " + std::to_string(*dns_qtype) : std::string(n)) + ")";
            }
            break;
        }
        case AppKind::HTTP:
            if (http_method) s += " " + *http_method + " " + http_path.value_or("/");
            if (http_status) s += " status " + std::to_string(*http_status);
            break;
        case AppKind::MQTT:
            if (mqtt_control_type) s += " " + std::string(mqtt_type_name(*mqtt_control_type));
            if (mqtt_topic) s += " topic " + *mqtt_topic;
            break;
        case AppKind::Modbus:
            if (modbus_function) s += " function " + std::to_string(*modbus_function);
            if (modbus_unit_id) s += " unit " + std::to_string(*modbus_unit_id);
            break;
        case AppKind::TLS:
            if (tls_version)
                s += " " + (tls_version->rfind("TLS ", 0) == 0 ? tls_version->substr(4) : *tls_version);
            if (tls_sni) s += " SNI " + *tls_sni;
            break;
        case AppKind::Other:
            break;
    }
    return s;
}

PacketRecord clean_packet(PacketRecord rec) {
    rec.payload.clear();
    rec.payload.shrink_to_fit();
    rec.tls_random.reset();
    return rec;
}

PacketRecord dissect_frame(std::span<const std::uint8_t> frame, LinkType link,
                           std::uint64_t frame_no, std::int64_t ts_us, std::uint32_t orig_len,
                           std::size_t* warnings) {
    PacketRecord rec;
    rec.frame_no = frame_no;
    rec.ts_us = ts_us;
    rec.frame_len = orig_len;
    if (link == LinkType::Ethernet) {
        if (frame.size() < 14) {
            if (warnings) ++*warnings;
            return rec;
        }
        MacAddr dst, src;
        std::memcpy(dst.bytes.data(), &frame[0], 6);
        std::memcpy(src.bytes.data(), &frame[6], 6);
        rec.eth_dst = dst;
        rec.eth_src = src;
        std::size_t off = 12;
        std::uint16_t ethertype = be16(&frame[off]);
        off += 2;
        while ((ethertype == 0x8100 || ethertype == 0x88a8) && off + 4 <= frame.size()) {
            ethertype = be16(&frame[off + 2]);
            off += 4;
        }
        auto l3 = frame.subspan(off);
        if (ethertype == 0x0800)
            dissect_ipv4(rec, l3, warnings);
        else if (ethertype == 0x86dd)
            dissect_ipv6(rec, l3, warnings);
        return rec;
    }
    if (link == LinkType::RawIP) {
        if (frame.empty()) {
            if (warnings) ++*warnings;
            return rec;
        }
        if ((frame[0] >> 4) == 4)
            dissect_ipv4(rec, frame, warnings);
        else if ((frame[0] >> 4) == 6)
            dissect_ipv6(rec, frame, warnings);
        else if (warnings)
            ++*warnings;
    }
    return rec;
}

ParsedCapture parse_capture_bytes(std::span<const std::uint8_t> bytes, const std::filesystem::path& path) {
    ParsedCapture out;
    out.capture.path = path;
    out.capture.byte_len = bytes.size();
    out.capture.content_hash =
        sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    if (bytes.size() < 4)
        throw Error(Errc::NotAPcap, "not a pcap: file shorter than the magic number");
    std::uint32_t magic_le = le32(bytes.data());
    std::uint32_t magic_be = be32(bytes.data());
    bool big = false, nano = false;
    if (magic_le == kMagicMicro) {
    } else if (magic_le == kMagicNano) {
        nano = true;
    } else if (magic_be == kMagicMicro) {
        big = true;
    } else if (magic_be == kMagicNano) {
        big = true;
        nano = true;
    } else if (magic_be == 0x0a0d0d0a) {
        throw Error(Errc::NotAPcap, "not a pcap: detected pcapng (unsupported)");
    } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "not a pcap: unknown magic 0x%08x", magic_be);
        throw Error(Errc::NotAPcap, buf);
    }
    if (bytes.size() < kGlobalHeaderLen)
        throw Error(Errc::NotAPcap, "not a pcap: global header truncated");
    auto rd32 = [big](const std::uint8_t* p) { return big ? be32(p) : le32(p); };
    std::uint32_t linktype = rd32(&bytes[20]) & 0x0fffffff;
    out.capture.big_endian = big;
    out.capture.nanosecond = nano;
    out.capture.link_code = linktype;
    LinkType link = LinkType::Other;
    if (linktype == 1)
        link = LinkType::Ethernet;
    else if (linktype == 101 || linktype == 12 || linktype == 14 || linktype == 228 || linktype == 229)
        link = LinkType::RawIP;
    out.capture.link_type = link;

    std::size_t pos = kGlobalHeaderLen;
    std::uint64_t frame_no = 0;
    std::int64_t last_ts = 0;
    while (pos < bytes.size()) {
        if (pos + kRecordHeaderLen > bytes.size()) {
            out.capture.truncated = true;
            break;
        }
        std::uint32_t ts_sec = rd32(&bytes[pos]);
        std::uint32_t ts_frac = rd32(&bytes[pos + 4]);
        std::uint32_t incl = rd32(&bytes[pos + 8]);
        std::uint32_t orig = rd32(&bytes[pos + 12]);
        if (pos + kRecordHeaderLen + incl > bytes.size()) {
            out.capture.truncated = true;
            break;
        }
        std::int64_t ts_us = static_cast<std::int64_t>(ts_sec) * 1000000 +
                             static_cast<std::int64_t>(nano ? ts_frac / 1000 : ts_frac);
        if (frame_no > 0 && ts_us < last_ts) ++out.capture.parse_warnings;
        last_ts = std::max(last_ts, ts_us);
        auto frame = bytes.subspan(pos + kRecordHeaderLen, incl);
        out.packets.push_back(clean_packet(dissect_frame(frame, link, ++frame_no, ts_us,
                                                         std::max(orig, incl),
                                                         &out.capture.parse_warnings)));
        pos += kRecordHeaderLen + incl;
    }
    out.capture.frame_count = out.packets.size();
    return out;
}

ParsedCapture parse_capture(const std::filesystem::path& path) {
    auto data = read_file(path);
    return parse_capture_bytes(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()), path);
}

ParsedCapture parse_capture_strict(const std::filesystem::path& path) {
    auto parsed = parse_capture(path);
    if (parsed.capture.truncated)
        throw Error(Errc::TruncatedCapture, "truncated capture: stopped after " +
                                                std::to_string(parsed.capture.frame_count) + " whole frames");
    return parsed;
}

std::string packet_to_json_line(const PacketRecord& rec) {
    nlohmann::ordered_json j;
    j["frame_no"] = rec.frame_no;
    j["ts"] = format_ts(rec.ts_us);
    j["frame_len"] = rec.frame_len;
    if (rec.eth_src) j["eth.src"] = rec.eth_src->to_string();
    if (rec.eth_dst) j["eth.dst"] = rec.eth_dst->to_string();
    if (rec.ip_src) j["ip.src"] = rec.ip_src->to_string();
    if (rec.ip_dst) j["ip.dst"] = rec.ip_dst->to_string();
    if (rec.ip_ttl) j["ip.ttl"] = *rec.ip_ttl;
    j["transport"] = transport_name(rec.transport);
    if (rec.transport == Transport::Other) j["ip.proto"] = rec.transport_code;
    if (rec.src_port) j["src_port"] = *rec.src_port;
    if (rec.dst_port) j["dst_port"] = *rec.dst_port;
    if (rec.tcp_flags) j["tcp.flags"] = rec.tcp_flags->to_string();
    if (rec.tcp_seq) j["tcp.seq"] = *rec.tcp_seq;
    if (rec.tcp_ack) j["tcp.ack"] = *rec.tcp_ack;
    if (rec.transport == Transport::TCP || rec.transport == Transport::UDP) j["payload_len"] = rec.payload_len;
    if (rec.app) {
        const auto& a = *rec.app;
        nlohmann::ordered_json app;
        app["kind"] = app_kind_name(a.kind);
        if (a.dns_opcode) app["dns.opcode"] = *a.dns_opcode;
        if (a.dns_response) app["dns.response"] = *a.dns_response;
        if (a.dns_trans_id) app["dns.id"] = *a.dns_trans_id;
        if (a.dns_qname) app["dns.qname"] = *a.dns_qname;
        if (a.dns_qtype) app["dns.qtype"] = *a.dns_qtype;
        if (a.dns_rcode) app["dns.rcode"] = *a.dns_rcode;
        if (a.http_method) app["http.method"] = *a.http_method;
        if (a.http_path) app["http.path"] = *a.http_path;
        if (a.http_status) app["http.status"] = *a.http_status;
        if (a.mqtt_control_type) {
            app["mqtt.control_type"] = *a.mqtt_control_type;
            app["mqtt.control_name"] = mqtt_type_name(*a.mqtt_control_type);
        }
        if (a.mqtt_topic) app["mqtt.topic"] = *a.mqtt_topic;
        if (a.modbus_function) app["modbus.function"] = *a.modbus_function;
        if (a.modbus_unit_id) app["modbus.unit_id"] = *a.modbus_unit_id;
        if (a.tls_version) app["tls.version"] = *a.tls_version;
        if (a.tls_sni) app["tls.sni"] = *a.tls_sni;
        j["app"] = std::move(app);
    }
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace iotlens
