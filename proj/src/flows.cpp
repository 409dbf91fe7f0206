#include "iotlens/flows.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

namespace iotlens {

std::string_view signature_name(ConnectionSignature sig) {
    switch (sig) {
        case ConnectionSignature::CompleteHandshake: return "CompleteHandshake";
        case ConnectionSignature::HandshakeInProgress: return "HandshakeInProgress";
        case ConnectionSignature::MidstreamReset: return "MidstreamReset";
        case ConnectionSignature::PrematureTermination: return "PrematureTermination";
        case ConnectionSignature::RejectedOnConnect: return "RejectedOnConnect";
        case ConnectionSignature::GracefulClose: return "GracefulClose";
        case ConnectionSignature::NoHandshakeObserved: return "NoHandshakeObserved";
        case ConnectionSignature::Udp: return "Udp";
    }
    return "Unknown";
}

std::string_view verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Benign: return "Benign";
        case Verdict::Suspicious: return "Suspicious";
        case Verdict::Malicious: return "Malicious";
    }
    return "Benign";
}

ReputationTag ReputationTag::from_confidence(int confidence, ReputationSource source) {
    ReputationTag tag;
    tag.source = source;
    tag.abuse_confidence = std::clamp(confidence, 0, 100);
    if (tag.abuse_confidence >= 75)
        tag.verdict = Verdict::Malicious;
    else if (tag.abuse_confidence >= 25)
        tag.verdict = Verdict::Suspicious;
    else
        tag.verdict = Verdict::Benign;
    return tag;
}

FlowAssembly assemble_flows(const std::vector<PacketRecord>& packets) {
    FlowAssembly out;
    std::map<FlowKey, std::size_t> index;
    for (const auto& p : packets) {
        bool keyed = p.ip_src && p.ip_dst && p.src_port && p.dst_port &&
                     (p.transport == Transport::TCP || p.transport == Transport::UDP);
        if (!keyed) {
            ++out.skipped;
            continue;
        }
        FlowKey key = FlowKey::from_packet(p);
        Endpoint src{*p.ip_src, *p.src_port};
        auto [it, fresh] = index.try_emplace(key, out.flows.size());
        if (fresh) {
            FlowRecord f;
            f.key = key;
            f.initiator = src == key.a ? Side::A : Side::B;
            f.first_ts_us = p.ts_us;
            f.last_ts_us = p.ts_us;
            out.flows.push_back(std::move(f));
        }
        FlowRecord& f = out.flows[it->second];
        bool from_a = src == key.a;
        ++f.pkt_count;
        f.byte_count += p.frame_len;
        if (src == f.src()) ++f.pkts_from_initiator;
        f.first_ts_us = std::min(f.first_ts_us, p.ts_us);
        f.last_ts_us = std::max(f.last_ts_us, p.ts_us);
        if (p.transport == Transport::TCP) f.flag_seq.push_back(p.tcp_flags.value_or(TcpFlags{}));
        if (p.app && std::find(f.app_cues.begin(), f.app_cues.end(), *p.app) == f.app_cues.end())
            f.app_cues.push_back(*p.app);
        if (p.ip_ttl) {
            f.ttl_seen = true;
            f.ttl_min = std::min(f.ttl_min, *p.ip_ttl);
            f.ttl_max = std::max(f.ttl_max, *p.ip_ttl);
        }
        if (p.eth_src) {
            auto& mac = from_a ? f.mac_a : f.mac_b;
            if (!mac) mac = p.eth_src;
        }
        f.frame_nos.push_back(p.frame_no);
    }
    for (auto& f : out.flows) {
        std::int64_t first = f.first_ts_us;
        f.uid = session_uid(f.key, first);
    }
    std::stable_sort(out.flows.begin(), out.flows.end(), [](const FlowRecord& x, const FlowRecord& y) {
        if (x.first_ts_us != y.first_ts_us) return x.first_ts_us < y.first_ts_us;
        return x.frame_nos.front() < y.frame_nos.front();
    });
    return out;
}

ConnectionSignature decode_flag_sequence(std::span<const TcpFlags> seq) {
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    const std::size_t n = seq.size();

    std::size_t s = npos;
    for (std::size_t i = 0; i < n && s == npos; ++i)
        if (seq[i].has(TcpFlags::SYN)) s = i;
    if (s == npos) return ConnectionSignature::NoHandshakeObserved;

    // Earliest completion of SYN -> SYN+ACK -> ACK starting at or after s.
    std::size_t c = npos;
    std::size_t i = s;
    while (i < n && !(seq[i].has(TcpFlags::SYN) && !seq[i].has(TcpFlags::ACK))) ++i;
    std::size_t j = i + 1;
    while (j < n && !(seq[j].has(TcpFlags::SYN) && seq[j].has(TcpFlags::ACK))) ++j;
    std::size_t k = j + 1;
    while (k < n && !(seq[k].has(TcpFlags::ACK) && !seq[k].has(TcpFlags::SYN) && !seq[k].has(TcpFlags::RST)))
        ++k;
    if (i < n && j < n && k < n) c = k;

    std::size_t r = npos, f = npos;
    for (std::size_t x = s; x < n; ++x) {
        if (r == npos && seq[x].has(TcpFlags::RST)) r = x;
        if (f == npos && seq[x].has(TcpFlags::FIN)) f = x;
    }

    if (r != npos && r - s <= 2 && (c == npos || c > r)) return ConnectionSignature::RejectedOnConnect;
    if (r != npos && c != npos && c < r) return ConnectionSignature::MidstreamReset;
    if (f != npos && (c == npos || f < c)) return ConnectionSignature::PrematureTermination;
    if (r != npos) return ConnectionSignature::PrematureTermination;
    if (c == npos) return ConnectionSignature::HandshakeInProgress;
    std::size_t fins = 0;
    for (std::size_t x = c; x < n; ++x)
        if (seq[x].has(TcpFlags::FIN)) ++fins;
    if (fins >= 2) return ConnectionSignature::GracefulClose;
    return ConnectionSignature::CompleteHandshake;
}

ConnectionSignature flow_signature(const FlowRecord& flow) {
    if (flow.key.transport == Transport::UDP) return ConnectionSignature::Udp;
    return decode_flag_sequence(flow.flag_seq);
}

// ---------------------------------------------------------------- OUI

namespace {

std::optional<std::uint32_t> parse_prefix(std::string_view text) {
    std::string t = to_lower(trim(text));
    std::uint32_t v = 0;
    int octets = 0;
    std::size_t pos = 0;
    while (pos < t.size()) {
        if (octets == 3 || pos + 2 > t.size()) return std::nullopt;
        unsigned int b = 0;
        for (int d = 0; d < 2; ++d) {
            char c = t[pos + d];
            b <<= 4;
            if (c >= '0' && c <= '9') b |= c - '0';
            else if (c >= 'a' && c <= 'f') b |= c - 'a' + 10;
            else return std::nullopt;
        }
        v = (v << 8) | b;
        ++octets;
        pos += 2;
        if (pos < t.size()) {
            if (t[pos] != ':' && t[pos] != '-') return std::nullopt;
            ++pos;
        }
    }
    if (octets != 3) return std::nullopt;
    return v;
}

}  // namespace

OuiTable OuiTable::load(const std::filesystem::path& path) { return parse(read_file(path)); }

OuiTable OuiTable::parse(std::string_view csv) {
    OuiTable t;
    std::istringstream in{std::string(csv)};
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        auto prefix = line.substr(0, comma);
        auto vendor = trim(line.substr(comma + 1));
        if (vendor.size() >= 2 && vendor.front() == '"' && vendor.back() == '"')
            vendor = vendor.substr(1, vendor.size() - 2);
        if (!parse_prefix(prefix)) continue;  // header row or junk
        t.add(prefix, vendor);
    }
    return t;
}

void OuiTable::add(std::string_view prefix, std::string vendor) {
    auto v = parse_prefix(prefix);
    if (!v) throw Error(Errc::MalformedMac, "malformed OUI prefix: " + std::string(prefix));
    table_[*v] = std::move(vendor);
}

std::optional<std::string> OuiTable::find(const MacAddr& mac) const {
    std::uint32_t key = (std::uint32_t{mac.bytes[0]} << 16) | (std::uint32_t{mac.bytes[1]} << 8) | mac.bytes[2];
    auto it = table_.find(key);
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

std::string resolve_vendor(const MacAddr& mac, const OuiTable& table) {
    std::uint8_t b0 = mac.bytes[0];
    if ((b0 & 0x02) && !(b0 & 0x01)) return "Locally Administered";
    if (auto v = table.find(mac)) return *v;
    return "Unknown";
}

std::string resolve_vendor(std::string_view mac, const OuiTable& table) {
    return resolve_vendor(MacAddr::parse(mac), table);
}

void annotate_vendors(std::vector<FlowRecord>& flows, const OuiTable& table) {
    for (auto& f : flows) {
        if (f.mac_a) f.mac_vendor_a = resolve_vendor(*f.mac_a, table);
        if (f.mac_b) f.mac_vendor_b = resolve_vendor(*f.mac_b, table);
    }
}

// ---------------------------------------------------------------- narratives

namespace {

constexpr std::size_t kMaxFlagsShown = 16;
constexpr std::size_t kMaxCuesShown = 8;
constexpr std::size_t kMaxDevicesShown = 20;

std::string format_duration(std::int64_t us) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%lld.%06lld", static_cast<long long>(us / 1000000),
                  static_cast<long long>(us % 1000000));
    return buf;
}

std::string vendor_text(const std::optional<std::string>& vendor, const std::optional<MacAddr>& mac) {
    if (!mac) return "no MAC observed";
    return vendor.value_or("unresolved") + " (" + mac->to_string() + ")";
}

std::string reputation_text(std::string_view side, const ReputationTag& tag) {
    return std::string(side) + " abuse-confidence " + std::to_string(tag.abuse_confidence) + " (" +
           std::string(verdict_name(tag.verdict)) + ")";
}

}  // namespace

std::string render_narrative(const FlowRecord& flow, ConnectionSignature sig) {
    std::ostringstream o;
    std::string tname(transport_name(flow.key.transport));
    for (char& ch : tname) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const Endpoint& src = flow.src();
    const Endpoint& dst = flow.dst();
    bool src_is_a = flow.initiator == Side::A;
    const auto& src_mac = src_is_a ? flow.mac_a : flow.mac_b;
    const auto& dst_mac = src_is_a ? flow.mac_b : flow.mac_a;

    o << "Flow " << flow.uid << ": " << src.to_string() << " <-> " << dst.to_string() << " (" << tname << ")\n";
    o << "Vendors: src " << vendor_text(flow.src_vendor(), src_mac) << "; dst "
      << vendor_text(flow.dst_vendor(), dst_mac) << "\n";
    o << "Transport: " << tname << ", src port " << src.port << ", dst port " << dst.port << "\n";
    o << "Volume: " << flow.pkt_count << " packets, " << flow.byte_count << " bytes (pkt_count=" << flow.pkt_count
      << ", byte_count=" << flow.byte_count << "); " << flow.pkts_from_initiator << " from src, "
      << flow.pkt_count - flow.pkts_from_initiator << " from dst\n";
    o << "Timing: start " << format_ts(flow.first_ts_us) << ", end " << format_ts(flow.last_ts_us)
      << ", duration " << format_duration(flow.duration_us()) << " s\n";
    if (flow.ttl_seen)
        o << "TTL range: " << int(flow.ttl_min) << "-" << int(flow.ttl_max) << "\n";
    else
        o << "TTL range: n/a\n";
    o << "Signature: " << signature_name(sig);
    if (!flow.flag_seq.empty()) {
        o << " (flags ";
        for (std::size_t i = 0; i < flow.flag_seq.size() && i < kMaxFlagsShown; ++i) {
            if (i) o << " > ";
            o << flow.flag_seq[i].to_string();
        }
        if (flow.flag_seq.size() > kMaxFlagsShown) o << " > +" << flow.flag_seq.size() - kMaxFlagsShown << " more";
        o << ")";
    }
    o << "\n";
    o << "Application cues: ";
    if (flow.app_cues.empty()) {
        o << "none";
    } else {
        std::vector<std::string> cues;
        for (const auto& a : flow.app_cues) {
            auto s = a.summary();
            if (std::find(cues.begin(), cues.end(), s) == cues.end()) cues.push_back(s);
        }
        for (std::size_t i = 0; i < cues.size() && i < kMaxCuesShown; ++i) o << (i ? "; " : "") << cues[i];
        if (cues.size() > kMaxCuesShown) o << "; +" << cues.size() - kMaxCuesShown << " more";
    }
    o << "\n";
    const auto& rs = flow.src_reputation();
    const auto& rd = flow.dst_reputation();
    if (!rs && !rd) {
        o << "Reputation: none\n";
    } else {
        o << "Reputation: ";
        if (rs) o << reputation_text("src", *rs);
        if (rs && rd) o << "; ";
        if (rd) o << reputation_text("dst", *rd);
        o << "\n";
    }
    o << "\n";
    return o.str();
}

std::string render_global_summary(const FlowAssembly& assembly, const std::vector<PacketRecord>& packets) {
    struct Device {
        std::uint64_t sent = 0, received = 0, bytes_sent = 0;
        std::optional<std::string> vendor;
    };
    std::map<IpAddr, Device> devices;
    std::map<std::string, std::uint64_t> transports;
    std::map<std::string, std::uint64_t> apps;
    std::int64_t first = 0, last = 0;
    bool any = false;
    for (const auto& p : packets) {
        if (!any) first = last = p.ts_us;
        any = true;
        first = std::min(first, p.ts_us);
        last = std::max(last, p.ts_us);
        std::string t(transport_name(p.transport));
        if (p.transport == Transport::Other) t += "(" + std::to_string(p.transport_code) + ")";
        ++transports[t];
        if (p.app) ++apps[std::string(app_kind_name(p.app->kind))];
        if (p.ip_src) {
            auto& d = devices[*p.ip_src];
            ++d.sent;
            d.bytes_sent += p.frame_len;
        }
        if (p.ip_dst) ++devices[*p.ip_dst].received;
    }
    std::size_t tcp = 0, udp = 0;
    for (const auto& f : assembly.flows) {
        (f.key.transport == Transport::TCP ? tcp : udp)++;
        const Endpoint& a = f.key.a;
        const Endpoint& b = f.key.b;
        if (f.mac_vendor_a && !devices[a.ip].vendor) devices[a.ip].vendor = f.mac_vendor_a;
        if (f.mac_vendor_b && !devices[b.ip].vendor) devices[b.ip].vendor = f.mac_vendor_b;
    }

    std::ostringstream o;
    o << "Capture summary: " << packets.size() << " packets, " << assembly.flows.size() << " flows (" << tcp
      << " TCP, " << udp << " UDP), " << assembly.skipped << " packets outside TCP/UDP flows\n";
    if (any)
        o << "Time span: start " << format_ts(first) << ", end " << format_ts(last) << ", duration "
          << format_duration(last - first) << " s\n";
    else
        o << "Time span: n/a\n";

    o << "Protocols:";
    if (transports.empty()) o << " none";
    for (const auto& [name, n] : transports) o << " " << name << "=" << n;
    o << "\n";
    o << "Applications:";
    if (apps.empty()) o << " none";
    for (const auto& [name, n] : apps) o << " " << name << "=" << n;
    o << "\n";

    std::vector<std::pair<IpAddr, Device>> ranked(devices.begin(), devices.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        return x.second.sent + x.second.received > y.second.sent + y.second.received;
    });
    o << "Devices: " << ranked.size() << "\n";
    for (std::size_t i = 0; i < ranked.size() && i < kMaxDevicesShown; ++i) {
        const auto& [ip, d] = ranked[i];
        o << "  " << ip.to_string();
        if (d.vendor) o << " (" << *d.vendor << ")";
        o << ": sent " << d.sent << " packets (" << d.bytes_sent << " bytes), received " << d.received
          << " packets\n";
    }
    if (ranked.size() > kMaxDevicesShown) o << "  +" << ranked.size() - kMaxDevicesShown << " more devices\n";
    o << "\n";
    return o.str();
}

std::string render_flow_report(const FlowAssembly& assembly, const std::vector<PacketRecord>& packets) {
    std::string out = render_global_summary(assembly, packets);
    for (const auto& f : assembly.flows) out += render_narrative(f, flow_signature(f));
    return out;
}

}  // namespace iotlens
