#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace iotlens::testing {

namespace {

constexpr std::uint8_t FIN = 0x01, SYN = 0x02, RST = 0x04, ACK = 0x10;

bool has(std::uint8_t v, std::uint8_t f) { return (v & f) != 0; }

std::string endpoint(const IpAddr& ip, std::uint16_t port) { return ip.to_string() + "#" + std::to_string(port); }

}  // namespace

ConnectionSignature expected_signature(const std::vector<std::uint8_t>& seq) {
    const int n = static_cast<int>(seq.size());
    int s = -1;
    for (int i = n - 1; i >= 0; --i)
        if (has(seq[i], SYN)) s = i;
    if (s < 0) return ConnectionSignature::NoHandshakeObserved;

    int c = -1;
    for (int i = s; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                bool syn = has(seq[i], SYN) && !has(seq[i], ACK);
                bool synack = has(seq[j], SYN) && has(seq[j], ACK);
                bool ack = has(seq[k], ACK) && !has(seq[k], SYN) && !has(seq[k], RST);
                if (syn && synack && ack && (c < 0 || k < c)) c = k;
            }

    int r = -1, f = -1;
    for (int i = n - 1; i >= s; --i) {
        if (has(seq[i], RST)) r = i;
        if (has(seq[i], FIN)) f = i;
    }
    bool complete = c >= 0;

    if (r >= 0 && r - s <= 2 && (!complete || c > r)) return ConnectionSignature::RejectedOnConnect;
    if (r >= 0 && complete && c < r) return ConnectionSignature::MidstreamReset;
    if (f >= 0 && (!complete || f < c)) return ConnectionSignature::PrematureTermination;
    if (r >= 0) return ConnectionSignature::PrematureTermination;
    if (!complete) return ConnectionSignature::HandshakeInProgress;
    int fins = static_cast<int>(std::count_if(seq.begin() + c, seq.end(), [](std::uint8_t v) { return has(v, FIN); }));
    return fins >= 2 ? ConnectionSignature::GracefulClose : ConnectionSignature::CompleteHandshake;
}

std::map<std::string, BruteFlow> brute_flows(const std::vector<PacketRecord>& packets) {
    auto key_of = [](const PacketRecord& p) {
        std::string t = p.transport == Transport::TCP ? "TCP" : "UDP";
        std::string a = endpoint(*p.ip_src, p.src_port.value_or(0));
        std::string b = endpoint(*p.ip_dst, p.dst_port.value_or(0));
        if (b < a) std::swap(a, b);
        return t + "|" + a + "|" + b;
    };
    auto eligible = [](const PacketRecord& p) {
        return p.ip_src && p.ip_dst && (p.transport == Transport::TCP || p.transport == Transport::UDP);
    };
    std::set<std::string> keys;
    for (const auto& p : packets)
        if (eligible(p)) keys.insert(key_of(p));

    std::map<std::string, BruteFlow> out;
    for (const auto& k : keys) {
        BruteFlow f;
        for (const auto& p : packets) {
            if (!eligible(p) || key_of(p) != k) continue;
            if (f.pkts == 0) {
                f.first_ts = p.ts_us;
                f.initiator = endpoint(*p.ip_src, p.src_port.value_or(0));
            }
            f.first_ts = std::min(f.first_ts, p.ts_us);
            f.last_ts = std::max(f.last_ts, p.ts_us);
            ++f.pkts;
            f.bytes += p.frame_len;
            if (p.tcp_flags) f.flags.push_back(p.tcp_flags->bits);
        }
        out[k] = f;
    }
    return out;
}

std::string brute_key(const FlowRecord& f) {
    std::string t = f.key.transport == Transport::TCP ? "TCP" : "UDP";
    std::string a = endpoint(f.key.a.ip, f.key.a.port);
    std::string b = endpoint(f.key.b.ip, f.key.b.port);
    if (b < a) std::swap(a, b);
    return t + "|" + a + "|" + b;
}

std::vector<double> bm25_reference(const std::vector<std::vector<std::string>>& docs,
                                   const std::vector<std::string>& query, double k1, double b) {
    const double n = static_cast<double>(docs.size());
    double total = 0;
    for (const auto& d : docs) total += static_cast<double>(d.size());
    const double avg = docs.empty() ? 0 : total / n;

    std::vector<std::string> terms;
    for (const auto& q : query)
        if (std::find(terms.begin(), terms.end(), q) == terms.end()) terms.push_back(q);

    std::vector<double> scores(docs.size(), 0.0);
    for (const auto& t : terms) {
        double df = 0;
        for (const auto& d : docs)
            if (std::find(d.begin(), d.end(), t) != d.end()) df += 1;
        if (df == 0) continue;
        double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (std::size_t i = 0; i < docs.size(); ++i) {
            double tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), t));
            if (tf == 0) continue;
            double len = static_cast<double>(docs[i].size());
            double norm = avg > 0 ? len / avg : 0;
            scores[i] += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * norm));
        }
    }
    return scores;
}

namespace {

bool has_type(const Json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    if (t == "null") return v.is_null();
    return false;
}

void check(const Json& v, const Json& schema, const std::filesystem::path& dir, const std::string& at,
           std::vector<std::string>& errs) {
    if (schema.contains("$ref")) {
        auto file = dir / schema["$ref"].get<std::string>();
        check(v, Json::parse(read_file(file)), file.parent_path(), at, errs);
        return;
    }
    if (schema.contains("type")) {
        const auto& t = schema["type"];
        bool ok = t.is_string() ? has_type(v, t.get<std::string>())
                                : std::any_of(t.begin(), t.end(), [&](const Json& x) { return has_type(v, x.get<std::string>()); });
        if (!ok) {
            errs.push_back(at + ": expected " + t.dump() + ", got " + v.dump());
            return;
        }
    }
    if (schema.contains("enum") && std::find(schema["enum"].begin(), schema["enum"].end(), v) == schema["enum"].end())
        errs.push_back(at + ": " + v.dump() + " not in " + schema["enum"].dump());
    if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema["minimum"].get<double>())
        errs.push_back(at + ": below minimum");
    if (v.is_object()) {
        if (schema.contains("required"))
            for (const auto& k : schema["required"])
                if (!v.contains(k.get<std::string>())) errs.push_back(at + ": missing " + k.get<std::string>());
        if (schema.contains("properties"))
            for (const auto& [k, sub] : schema["properties"].items())
                if (v.contains(k)) check(v[k], sub, dir, at + "." + k, errs);
    }
    if (v.is_array() && schema.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], schema["items"], dir, at + "[" + std::to_string(i) + "]", errs);
}

}  // namespace

std::vector<std::string> schema_errors(const Json& value, const std::filesystem::path& schema_file) {
    std::vector<std::string> errs;
    check(value, Json::parse(read_file(schema_file)), schema_file.parent_path(), "$", errs);
    return errs;
}

}  // namespace iotlens::testing
