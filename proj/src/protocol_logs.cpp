#include "iotlens/protocol_logs.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace iotlens {

namespace {

struct SessionAgg {
    SessionKey key;
    std::string uid;
    Endpoint orig;
    Endpoint resp;
    std::int64_t first_ts = 0;
    std::int64_t last_ts = 0;
    std::uint64_t orig_pkts = 0, resp_pkts = 0;
    std::uint64_t orig_bytes = 0, resp_bytes = 0;
    std::string history;
    bool syn = false, synack = false, established = false;
    bool orig_fin = false, resp_fin = false, orig_rst = false, resp_rst = false;
};

void add_history(std::string& history, char c) {
    if (history.find(c) == std::string::npos) history.push_back(c);
}

std::string conn_state(const SessionAgg& s) {
    if (s.key.transport != Transport::TCP) return s.resp_pkts > 0 ? "SF" : "S0";
    if (!s.syn) return "OTH";
    if (!s.established) {
        if (s.resp_rst) return "REJ";
        if (s.orig_rst) return "RSTOS0";
        return s.synack ? "S1" : "S0";
    }
    if (s.orig_rst) return "RSTO";
    if (s.resp_rst) return "RSTR";
    if (s.orig_fin && s.resp_fin) return "SF";
    if (s.orig_fin) return "S2";
    if (s.resp_fin) return "S3";
    return "S1";
}

ProtocolEvent base_event(const SessionAgg& s, LogKind kind, std::int64_t ts) {
    ProtocolEvent e;
    e.uid = s.uid;
    e.ts_us = ts;
    e.log_kind = kind;
    e.fields = {
        {"uid", s.uid},
        {"ts", format_ts(ts)},
        {"id.orig_h", s.orig.ip.to_string()},
        {"id.orig_p", std::to_string(s.orig.port)},
        {"id.resp_h", s.resp.ip.to_string()},
        {"id.resp_p", std::to_string(s.resp.port)},
        {"proto", std::string(transport_name(s.key.transport))},
    };
    return e;
}

const std::set<std::string, std::less<>>& numeric_keys() {
    static const std::set<std::string, std::less<>> keys = {
        "ts",        "id.orig_p", "id.resp_p", "duration",  "orig_pkts", "resp_pkts", "orig_bytes",
        "resp_bytes", "trans_id", "qtype",     "rcode",     "opcode",    "status_code", "func",
        "unit_id",   "msg_type"};
    return keys;
}

}  // namespace

std::string_view log_kind_name(LogKind k) {
    switch (k) {
        case LogKind::conn: return "conn";
        case LogKind::dns: return "dns";
        case LogKind::http: return "http";
        case LogKind::mqtt: return "mqtt";
        case LogKind::modbus: return "modbus";
        case LogKind::tls: return "tls";
    }
    return "conn";
}

const std::string* ProtocolEvent::field(std::string_view name) const {
    for (const auto& [k, v] : fields)
        if (k == name) return &v;
    return nullptr;
}

std::string ProtocolEvent::to_json_line() const {
    nlohmann::ordered_json j;
    j["_path"] = log_kind_name(log_kind);
    for (const auto& [k, v] : fields) {
        if (numeric_keys().contains(k) && !v.empty()) {
            try {
                std::size_t used = 0;
                if (v.find('.') != std::string::npos) {
                    double d = std::stod(v, &used);
                    if (used == v.size()) {
                        j[k] = d;
                        continue;
                    }
                } else {
                    long long n = std::stoll(v, &used);
                    if (used == v.size()) {
                        j[k] = n;
                        continue;
                    }
                }
            } catch (const std::exception&) {
            }
        }
        j[k] = v;
    }
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

ProtocolEvent protocol_event_from_json_line(std::string_view line) {
    auto j = nlohmann::ordered_json::parse(line);
    ProtocolEvent e;
    std::string path = j.value("_path", "conn");
    for (auto k : {LogKind::conn, LogKind::dns, LogKind::http, LogKind::mqtt, LogKind::modbus, LogKind::tls})
        if (log_kind_name(k) == path) e.log_kind = k;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "_path") continue;
        std::string v;
        if (it->is_string()) {
            v = it->get<std::string>();
        } else if (it->is_number_float()) {
            // ts and duration are written with six decimals
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%.6f", it->get<double>());
            v = buf;
        } else {
            v = it->dump();
        }
        e.fields.emplace_back(it.key(), v);
    }
    e.uid = j.value("uid", "");
    if (const auto* ts = e.field("ts")) {
        // "1700000000.000123" -> microseconds without going through double.
        auto dot = ts->find('.');
        std::string sec = ts->substr(0, dot);
        std::string frac = dot == std::string::npos ? "" : ts->substr(dot + 1);
        frac.resize(6, '0');
        e.ts_us = std::stoll(sec.empty() ? "0" : sec) * 1000000 + std::stoll(frac);
    }
    return e;
}

ProtocolLogs generate_protocol_logs(const std::vector<PacketRecord>& packets) {
    ProtocolLogs logs;
    for (auto k : {LogKind::conn, LogKind::dns, LogKind::http, LogKind::mqtt, LogKind::modbus, LogKind::tls})
        logs[k];

    std::vector<SessionAgg> sessions;
    std::map<SessionKey, std::size_t> index;
    std::vector<std::size_t> packet_session(packets.size(), SIZE_MAX);

    for (std::size_t i = 0; i < packets.size(); ++i) {
        const auto& p = packets[i];
        if (!has_session_key(p)) continue;
        auto key = SessionKey::from_packet(p);
        auto [it, inserted] = index.try_emplace(key, sessions.size());
        if (inserted) {
            SessionAgg s;
            s.key = key;
            s.orig = Endpoint{*p.ip_src, p.src_port.value_or(0)};
            s.resp = Endpoint{*p.ip_dst, p.dst_port.value_or(0)};
            s.first_ts = s.last_ts = p.ts_us;
            s.uid = session_uid(key, p.ts_us);
            sessions.push_back(std::move(s));
        }
        packet_session[i] = it->second;
        auto& s = sessions[it->second];
        bool from_orig = Endpoint{*p.ip_src, p.src_port.value_or(0)} == s.orig;
        s.last_ts = std::max(s.last_ts, p.ts_us);
        (from_orig ? s.orig_pkts : s.resp_pkts) += 1;
        (from_orig ? s.orig_bytes : s.resp_bytes) += p.payload_len;
        if (p.tcp_flags) {
            auto f = *p.tcp_flags;
            auto mark = [&](char c) { add_history(s.history, from_orig ? c : static_cast<char>(c + 32)); };
            if (f.has(TcpFlags::SYN) && !f.has(TcpFlags::ACK)) {
                mark('S');
                s.syn = true;
            }
            if (f.has(TcpFlags::SYN) && f.has(TcpFlags::ACK)) {
                mark('H');
                s.synack = true;
            }
            if (f.has(TcpFlags::ACK) && !f.has(TcpFlags::SYN)) {
                mark('A');
                if (s.syn && s.synack && from_orig) s.established = true;
            }
            if (p.payload_len > 0) mark('D');
            if (f.has(TcpFlags::FIN)) {
                mark('F');
                (from_orig ? s.orig_fin : s.resp_fin) = true;
            }
            if (f.has(TcpFlags::RST)) {
                mark('R');
                (from_orig ? s.orig_rst : s.resp_rst) = true;
            }
        } else if (p.payload_len > 0) {
            add_history(s.history, from_orig ? 'D' : 'd');
        }
    }

    for (const auto& s : sessions) {
        auto e = base_event(s, LogKind::conn, s.first_ts);
        e.fields.emplace_back("duration", format_ts(s.last_ts - s.first_ts));
        e.fields.emplace_back("orig_pkts", std::to_string(s.orig_pkts));
        e.fields.emplace_back("resp_pkts", std::to_string(s.resp_pkts));
        e.fields.emplace_back("orig_bytes", std::to_string(s.orig_bytes));
        e.fields.emplace_back("resp_bytes", std::to_string(s.resp_bytes));
        e.fields.emplace_back("conn_state", conn_state(s));
        e.fields.emplace_back("history", s.history);
        logs[LogKind::conn].push_back(std::move(e));
    }

    // DNS: one event per (uid, transaction id); responses fill in rcode.
    std::map<std::pair<std::size_t, int>, std::size_t> dns_tx;
    // HTTP: FIFO request/response pairing per session.
    std::map<std::size_t, std::vector<std::size_t>> http_pending;
    std::map<std::size_t, std::size_t> tls_session;

    for (std::size_t i = 0; i < packets.size(); ++i) {
        const auto& p = packets[i];
        if (!p.app || packet_session[i] == SIZE_MAX) continue;
        const auto& s = sessions[packet_session[i]];
        const auto& a = *p.app;
        switch (a.kind) {
            case AppKind::DNS: {
                auto& evs = logs[LogKind::dns];
                auto key = std::make_pair(packet_session[i], a.dns_trans_id.value_or(-1));
                auto it = dns_tx.find(key);
                if (it == dns_tx.end()) {
                    auto e = base_event(s, LogKind::dns, p.ts_us);
                    e.fields.emplace_back("trans_id", std::to_string(a.dns_trans_id.value_or(0)));
                    e.fields.emplace_back("query", a.dns_qname.value_or(""));
                    e.fields.emplace_back("qtype", std::to_string(a.dns_qtype.value_or(0)));
                    e.fields.emplace_back("qtype_name", std::string(dns_qtype_name(a.dns_qtype.value_or(0))));
                    e.fields.emplace_back("opcode", std::to_string(a.dns_opcode.value_or(0)));
                    if (a.dns_rcode) e.fields.emplace_back("rcode", std::to_string(*a.dns_rcode));
                    e.fields.emplace_back("answered", a.dns_response.value_or(false) ? "true" : "false");
                    dns_tx.emplace(key, evs.size());
                    evs.push_back(std::move(e));
                } else if (a.dns_response.value_or(false)) {
                    auto& e = evs[it->second];
                    if (!e.field("rcode")) {
                        // keep rcode ahead of "answered"
                        auto pos = e.fields.end() - 1;
                        e.fields.insert(pos, {"rcode", std::to_string(a.dns_rcode.value_or(0))});
                    }
                    for (auto& [k, v] : e.fields)
                        if (k == "answered") v = "true";
                }
                break;
            }
            case AppKind::HTTP: {
                auto& evs = logs[LogKind::http];
                if (a.http_method) {
                    auto e = base_event(s, LogKind::http, p.ts_us);
                    e.fields.emplace_back("method", *a.http_method);
                    e.fields.emplace_back("uri", a.http_path.value_or("/"));
                    http_pending[packet_session[i]].push_back(evs.size());
                    evs.push_back(std::move(e));
                } else if (a.http_status) {
                    auto& pending = http_pending[packet_session[i]];
                    if (!pending.empty()) {
                        evs[pending.front()].fields.emplace_back("status_code", std::to_string(*a.http_status));
                        pending.erase(pending.begin());
                    } else {
                        auto e = base_event(s, LogKind::http, p.ts_us);
                        e.fields.emplace_back("status_code", std::to_string(*a.http_status));
                        evs.push_back(std::move(e));
                    }
                }
                break;
            }
            case AppKind::MQTT: {
                auto e = base_event(s, LogKind::mqtt, p.ts_us);
                e.fields.emplace_back("msg_type", std::to_string(a.mqtt_control_type.value_or(0)));
                e.fields.emplace_back("msg_name", std::string(mqtt_type_name(a.mqtt_control_type.value_or(0))));
                if (a.mqtt_topic) e.fields.emplace_back("topic", *a.mqtt_topic);
                logs[LogKind::mqtt].push_back(std::move(e));
                break;
            }
            case AppKind::Modbus: {
                auto e = base_event(s, LogKind::modbus, p.ts_us);
                e.fields.emplace_back("func", std::to_string(a.modbus_function.value_or(0)));
                e.fields.emplace_back("unit_id", std::to_string(a.modbus_unit_id.value_or(0)));
                e.fields.emplace_back("direction", p.dst_port == 502 ? "request" : "response");
                logs[LogKind::modbus].push_back(std::move(e));
                break;
            }
            case AppKind::TLS: {
                // One event per TLS session, as in Zeek's ssl.log.
                auto& evs = logs[LogKind::tls];
                auto it = tls_session.find(packet_session[i]);
                if (it == tls_session.end()) {
                    auto e = base_event(s, LogKind::tls, p.ts_us);
                    e.fields.emplace_back("version", a.tls_version.value_or(""));
                    if (a.tls_sni) e.fields.emplace_back("server_name", *a.tls_sni);
                    tls_session.emplace(packet_session[i], evs.size());
                    evs.push_back(std::move(e));
                } else if (a.tls_sni && !evs[it->second].field("server_name")) {
                    evs[it->second].fields.emplace_back("server_name", *a.tls_sni);
                }
                break;
            }
            case AppKind::Other:
                break;
        }
    }

    for (auto& [kind, evs] : logs)
        std::stable_sort(evs.begin(), evs.end(),
                         [](const ProtocolEvent& x, const ProtocolEvent& y) { return x.ts_us < y.ts_us; });
    return logs;
}

std::vector<ProtocolEvent> flatten_logs(const ProtocolLogs& logs) {
    std::vector<ProtocolEvent> all;
    for (const auto& [kind, evs] : logs) all.insert(all.end(), evs.begin(), evs.end());
    std::stable_sort(all.begin(), all.end(), [](const ProtocolEvent& x, const ProtocolEvent& y) {
        if (x.ts_us != y.ts_us) return x.ts_us < y.ts_us;
        if (x.log_kind != y.log_kind) return x.log_kind < y.log_kind;
        return x.uid < y.uid;
    });
    return all;
}

}  // namespace iotlens
