#include "iotlens/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace iotlens {

const std::string* FeatureRow::value(std::string_view name) const {
    for (const auto& [k, v] : values)
        if (k == name) return &v;
    return nullptr;
}

const std::vector<std::string>& feature_schema() {
    static const std::vector<std::string> schema = {
        "pkt_count",       "byte_count",     "duration",         "ip.proto",
        "ip.ttl",          "tcp.srcport",    "tcp.dstport",      "udp.srcport",
        "udp.dstport",     "tcp.flags.syn",  "tcp.flags.ack",    "tcp.flags.fin",
        "tcp.flags.rst",   "tcp.flags.psh",  "ctx_pkt_count",    "syn_count",
        "ack_ratio",       "distinct_dst_ports", "pkt_rate",     "dns.qry.type",
        "http.request.method", "mqtt.msgtype", "mbtcp.func_code", "mbtcp.unit_id",
    };
    return schema;
}

namespace {

struct Context {
    std::uint64_t count = 0, syn = 0, ack = 0, tcp = 0;
    std::set<std::uint16_t> dst_ports;
    std::int64_t first = 0, last = 0;

    double ack_ratio() const { return tcp ? static_cast<double>(ack) / static_cast<double>(tcp) : 0.0; }
    // A burst inside one microsecond counts as a one-second window.
    double rate() const {
        double dur = static_cast<double>(last - first) / 1e6;
        return dur > 0 ? static_cast<double>(count) / dur : static_cast<double>(count);
    }
};

using PairKey = std::pair<IpAddr, IpAddr>;

std::map<PairKey, Context> build_contexts(const std::vector<PacketRecord>& packets) {
    std::map<PairKey, Context> ctx;
    for (const auto& p : packets) {
        if (!p.ip_src || !p.ip_dst) continue;
        auto [it, fresh] = ctx.try_emplace({*p.ip_src, *p.ip_dst});
        Context& c = it->second;
        if (fresh) c.first = c.last = p.ts_us;
        ++c.count;
        c.first = std::min(c.first, p.ts_us);
        c.last = std::max(c.last, p.ts_us);
        if (p.dst_port) c.dst_ports.insert(*p.dst_port);
        if (p.transport == Transport::TCP && p.tcp_flags) {
            ++c.tcp;
            if (p.tcp_flags->has(TcpFlags::SYN) && !p.tcp_flags->has(TcpFlags::ACK)) ++c.syn;
            if (p.tcp_flags->has(TcpFlags::ACK)) ++c.ack;
        }
    }
    return ctx;
}

std::string num(double v) { return format_number(v); }
std::string flag(bool b) { return b ? "1" : "0"; }

struct RowInput {
    std::uint64_t pkt_count = 0, byte_count = 0;
    double duration = 0;
    int proto = 0;
    std::optional<int> ttl;
    Transport transport = Transport::None;
    std::optional<std::uint16_t> sport, dport;
    TcpFlags flags;
    std::optional<int> dns_qtype, mqtt_type, modbus_func, modbus_unit;
    std::string http_method;
};

void take_app(RowInput& in, const AppFields& a) {
    if (a.dns_qtype && !in.dns_qtype) in.dns_qtype = a.dns_qtype;
    if (a.http_method && in.http_method.empty()) in.http_method = *a.http_method;
    if (a.mqtt_control_type && !in.mqtt_type) in.mqtt_type = a.mqtt_control_type;
    if (a.modbus_function && !in.modbus_func) in.modbus_func = a.modbus_function;
    if (a.modbus_unit_id && !in.modbus_unit) in.modbus_unit = a.modbus_unit_id;
}

FeatureRow make_row(RowKind kind, const RowInput& in, const Context* ctx) {
    FeatureRow row;
    row.kind = kind;
    auto& v = row.values;
    bool tcp = in.transport == Transport::TCP;
    bool udp = in.transport == Transport::UDP;
    v.emplace_back("pkt_count", num(static_cast<double>(in.pkt_count)));
    v.emplace_back("byte_count", num(static_cast<double>(in.byte_count)));
    v.emplace_back("duration", num(in.duration));
    v.emplace_back("ip.proto", std::to_string(in.proto));
    v.emplace_back("ip.ttl", std::to_string(in.ttl.value_or(0)));
    v.emplace_back("tcp.srcport", tcp ? std::to_string(in.sport.value_or(0)) : "0");
    v.emplace_back("tcp.dstport", tcp ? std::to_string(in.dport.value_or(0)) : "0");
    v.emplace_back("udp.srcport", udp ? std::to_string(in.sport.value_or(0)) : "0");
    v.emplace_back("udp.dstport", udp ? std::to_string(in.dport.value_or(0)) : "0");
    v.emplace_back("tcp.flags.syn", flag(in.flags.has(TcpFlags::SYN)));
    v.emplace_back("tcp.flags.ack", flag(in.flags.has(TcpFlags::ACK)));
    v.emplace_back("tcp.flags.fin", flag(in.flags.has(TcpFlags::FIN)));
    v.emplace_back("tcp.flags.rst", flag(in.flags.has(TcpFlags::RST)));
    v.emplace_back("tcp.flags.psh", flag(in.flags.has(TcpFlags::PSH)));
    v.emplace_back("ctx_pkt_count", ctx ? num(static_cast<double>(ctx->count)) : "0");
    v.emplace_back("syn_count", ctx ? num(static_cast<double>(ctx->syn)) : "0");
    v.emplace_back("ack_ratio", ctx ? num(ctx->ack_ratio()) : "0");
    v.emplace_back("distinct_dst_ports", ctx ? num(static_cast<double>(ctx->dst_ports.size())) : "0");
    v.emplace_back("pkt_rate", ctx ? num(ctx->rate()) : "0");
    v.emplace_back("dns.qry.type", std::to_string(in.dns_qtype.value_or(0)));
    v.emplace_back("http.request.method", in.http_method);
    v.emplace_back("mqtt.msgtype", std::to_string(in.mqtt_type.value_or(0)));
    v.emplace_back("mbtcp.func_code", std::to_string(in.modbus_func.value_or(0)));
    v.emplace_back("mbtcp.unit_id", std::to_string(in.modbus_unit.value_or(0)));
    return row;
}

}  // namespace

std::vector<FeatureRow> extract_features(const std::vector<PacketRecord>& packets,
                                         const std::vector<FlowRecord>& flows) {
    auto ctx = build_contexts(packets);
    auto find_ctx = [&](const std::optional<IpAddr>& s, const std::optional<IpAddr>& d) -> const Context* {
        if (!s || !d) return nullptr;
        auto it = ctx.find({*s, *d});
        return it == ctx.end() ? nullptr : &it->second;
    };

    std::vector<FeatureRow> rows;
    rows.reserve(packets.size() + flows.size());
    for (const auto& p : packets) {
        RowInput in;
        in.pkt_count = 1;
        in.byte_count = p.frame_len;
        in.proto = p.ip_src ? p.transport_code : 0;
        if (p.ip_ttl) in.ttl = *p.ip_ttl;
        in.transport = p.transport;
        in.sport = p.src_port;
        in.dport = p.dst_port;
        in.flags = p.tcp_flags.value_or(TcpFlags{});
        if (p.app) take_app(in, *p.app);
        FeatureRow row = make_row(RowKind::Packet, in, find_ctx(p.ip_src, p.ip_dst));
        row.src_ip = p.ip_src;
        row.dst_ip = p.ip_dst;
        row.frames = {p.frame_no};
        rows.push_back(std::move(row));
    }
    for (const auto& f : flows) {
        RowInput in;
        in.pkt_count = f.pkt_count;
        in.byte_count = f.byte_count;
        in.duration = static_cast<double>(f.duration_us()) / 1e6;
        in.proto = f.key.transport == Transport::TCP ? 6 : 17;
        if (f.ttl_seen) in.ttl = f.ttl_min;
        in.transport = f.key.transport;
        in.sport = f.src().port;
        in.dport = f.dst().port;
        for (auto fl : f.flag_seq) in.flags.bits |= fl.bits;
        for (const auto& a : f.app_cues) take_app(in, a);
        std::optional<IpAddr> s = f.src().ip, d = f.dst().ip;
        FeatureRow row = make_row(RowKind::Flow, in, find_ctx(s, d));
        row.src_ip = s;
        row.dst_ip = d;
        row.frames = f.frame_nos;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string escape_feature_value(std::string_view v) {
    std::string out;
    out.reserve(v.size());
    for (char c : v) {
        if (c == '\\') out += "\\\\";
        else if (c == ':') out += "\\:";
        else if (c == ' ') out += "\\_";
        else out.push_back(c);
    }
    return out;
}

std::string textualize(const FeatureRow& row) {
    std::string out;
    for (const auto& [k, v] : row.values) {
        if (!out.empty()) out.push_back(' ');
        out += k;
        out.push_back(':');
        out += escape_feature_value(v);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_feature_text(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        if (i >= text.size()) break;
        std::string name, value;
        while (i < text.size() && text[i] != ':' && text[i] != ' ') name.push_back(text[i++]);
        if (i < text.size() && text[i] == ':') {
            ++i;
            while (i < text.size() && text[i] != ' ') {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    char e = text[i + 1];
                    value.push_back(e == '_' ? ' ' : e);
                    i += 2;
                } else {
                    value.push_back(text[i++]);
                }
            }
        }
        out.emplace_back(std::move(name), std::move(value));
    }
    return out;
}

// ---------------------------------------------------------------- labels

namespace {

constexpr std::string_view kLabelNames[kClassLabelCount] = {
    "Normal",   "MITM",          "Fingerprinting", "Ransomware", "Uploading",
    "SQL_Injection", "DDoS_HTTP", "DDoS_TCP",      "Password",   "Port_Scanning",
    "Vul_Scanner", "Backdoor",   "XSS",            "DDoS_UDP",   "DDoS_ICMP",
};

}  // namespace

std::string_view label_name(ClassLabel l) { return kLabelNames[static_cast<int>(l)]; }

std::optional<ClassLabel> parse_label(std::string_view s) {
    for (int i = 0; i < kClassLabelCount; ++i)
        if (kLabelNames[i] == s) return static_cast<ClassLabel>(i);
    return std::nullopt;
}

const std::vector<ClassLabel>& all_labels() {
    static const std::vector<ClassLabel> labels = [] {
        std::vector<ClassLabel> v;
        for (int i = 0; i < kClassLabelCount; ++i) v.push_back(static_cast<ClassLabel>(i));
        return v;
    }();
    return labels;
}

Classification ReferenceRules::classify(std::string_view text) {
    std::map<std::string, double> f;
    for (auto& [k, v] : parse_feature_text(text)) {
        try {
            std::size_t used = 0;
            double d = std::stod(v, &used);
            if (used == v.size()) f[k] = d;
        } catch (const std::exception&) {
        }
    }
    auto get = [&](const char* name) {
        auto it = f.find(name);
        return it == f.end() ? 0.0 : it->second;
    };
    if (get("syn_count") >= 100 && get("ack_ratio") <= 0.1) return {ClassLabel::DDoS_TCP, 0.95};
    if (get("ip.proto") == 17 && get("ctx_pkt_count") >= 1000 && get("pkt_rate") >= 100)
        return {ClassLabel::DDoS_UDP, 0.95};
    if (get("ip.proto") == 1 && get("ctx_pkt_count") >= 500 && get("pkt_rate") >= 50)
        return {ClassLabel::DDoS_ICMP, 0.95};
    if (get("distinct_dst_ports") >= 100) return {ClassLabel::Port_Scanning, 0.95};
    return {ClassLabel::Normal, 0.60};
}

RemoteModel::RemoteModel(std::string base_url, std::shared_ptr<HttpTransport> transport)
    : base_(Url::parse(base_url)), transport_(std::move(transport)) {}

Classification RemoteModel::classify(std::string_view text) {
    Json reply;
    try {
        reply = post_json(*transport_, base_.join("/classify"), Json{{"text", std::string(text)}});
    } catch (const Error& e) {
        throw Error(Errc::ModelUnavailable, std::string("classifier: ") + e.what());
    }
    if (!reply.contains("label") || !reply["label"].is_string() || !reply.contains("confidence") ||
        !reply["confidence"].is_number())
        throw Error(Errc::ModelUnavailable, "classifier: malformed reply");
    auto label = parse_label(reply["label"].get<std::string>());
    if (!label) throw Error(Errc::ModelUnavailable, "classifier: unknown label " + reply["label"].get<std::string>());
    return {*label, std::clamp(reply["confidence"].get<double>(), 0.0, 1.0)};
}

FallbackClassifier::FallbackClassifier(std::unique_ptr<Classifier> primary, std::unique_ptr<Classifier> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

Classification FallbackClassifier::classify(std::string_view text) {
    try {
        return primary_->classify(text);
    } catch (const Error& e) {
        if (e.code() != Errc::ModelUnavailable) throw;
        ++fallbacks_;
        return fallback_->classify(text);
    }
}

Classification classify(std::string_view text, Classifier& clf) { return clf.classify(text); }

// ---------------------------------------------------------------- report

namespace {

struct Template {
    std::string_view what;
    std::string_view guidance;
};

Template template_for(ClassLabel l) {
    switch (l) {
        case ClassLabel::Normal:
            return {"matched benign traffic profiles with no attack indicators",
                    "No action required. Keep the capture as a baseline for future comparisons."};
        case ClassLabel::MITM:
            return {"show signs of traffic interception between devices",
                    "Verify ARP and DNS bindings on the affected segment and rotate credentials used over it."};
        case ClassLabel::Fingerprinting:
            return {"resemble device fingerprinting probes",
                    "Restrict management interfaces to trusted hosts and review banner exposure."};
        case ClassLabel::Ransomware:
            return {"resemble ransomware staging or propagation",
                    "Isolate the source hosts, verify backups and block the listed peers at the perimeter."};
        case ClassLabel::Uploading:
            return {"resemble bulk data uploading or exfiltration",
                    "Confirm the destinations are expected and enforce egress filtering for the devices involved."};
        case ClassLabel::SQL_Injection:
            return {"carry patterns typical of SQL injection attempts",
                    "Review web application logs for the listed paths and apply input validation."};
        case ClassLabel::DDoS_HTTP:
            return {"form an HTTP request flood",
                    "Rate-limit HTTP requests from the listed sources and check server saturation."};
        case ClassLabel::DDoS_TCP:
            return {"form a TCP SYN flood with few completed handshakes",
                    "Enable SYN cookies or upstream filtering and block the listed sources if they persist."};
        case ClassLabel::Password:
            return {"resemble password guessing against device services",
                    "Enforce lockout and strong credentials on the targeted services."};
        case ClassLabel::Port_Scanning:
            return {"probe many destination ports, consistent with port scanning",
                    "Check which scanned ports are open and close services that are not needed."};
        case ClassLabel::Vul_Scanner:
            return {"resemble automated vulnerability scanning",
                    "Patch the targeted devices and restrict exposure of the scanned services."};
        case ClassLabel::Backdoor:
            return {"resemble backdoor command-and-control traffic",
                    "Isolate the affected device and inspect it for persistence mechanisms."};
        case ClassLabel::XSS:
            return {"carry patterns typical of cross-site scripting attempts",
                    "Review the listed HTTP paths and apply output encoding on the web interface."};
        case ClassLabel::DDoS_UDP:
            return {"form a high-rate UDP flood",
                    "Rate-limit UDP toward the targets and filter the listed sources upstream."};
        case ClassLabel::DDoS_ICMP:
            return {"form a high-rate ICMP flood",
                    "Rate-limit ICMP at the perimeter and filter the listed sources."};
    }
    return {"", ""};
}

std::string pct(std::size_t n, std::size_t total) {
    if (total == 0) return "0";
    return format_number(std::round(1000.0 * static_cast<double>(n) / static_cast<double>(total)) / 10.0);
}

template <class Set, class Fn>
std::string join_set(const Set& s, Fn fn, std::size_t limit = 10) {
    if (s.empty()) return "none";
    std::string out;
    std::size_t i = 0;
    for (const auto& x : s) {
        if (i == limit) {
            out += ", +" + std::to_string(s.size() - limit) + " more";
            break;
        }
        if (i++) out += ", ";
        out += fn(x);
    }
    return out;
}

std::string section_narrative(ClassLabel l, std::size_t n, std::size_t total, const AttackMetadata* md) {
    auto t = template_for(l);
    std::ostringstream o;
    o << n << " of " << total << " rows (" << pct(n, total) << "%) " << t.what << ".";
    if (md && !md->ip_pairs.empty()) {
        o << " Involved endpoints: "
          << join_set(md->ip_pairs, [](const auto& p) { return p.first + " -> " + p.second; }, 5) << ".";
    }
    return o.str();
}

std::string metadata_text(ClassLabel l, const AttackMetadata& md, const std::vector<std::string>* intel) {
    std::ostringstream o;
    o << "--- " << label_name(l) << " metadata ---\n";
    o << "IP pairs: " << join_set(md.ip_pairs, [](const auto& p) { return p.first + " -> " + p.second; }) << "\n";
    o << "MQTT topics: " << join_set(md.mqtt_topics, [](const auto& s) { return s; }) << "\n";
    o << "DNS queries: " << join_set(md.dns_queries, [](const auto& s) { return s; }) << "\n";
    o << "Modbus unit ids: " << join_set(md.modbus_unit_ids, [](int u) { return std::to_string(u); }) << "\n";
    o << "HTTP requests: " << join_set(md.http_methods_paths, [](const auto& s) { return s; }) << "\n";
    if (intel)
        for (const auto& block : *intel) o << block;
    return o.str();
}

}  // namespace

InterpretationReport build_report(const std::vector<FeatureRow>& rows, const std::vector<Classification>& labels,
                                  const std::vector<PacketRecord>& packets) {
    if (rows.size() != labels.size())
        throw Error(Errc::InvalidArgument, "build_report: rows and labels differ in length");
    InterpretationReport r;
    r.total_rows = rows.size();

    std::map<std::uint64_t, const PacketRecord*> by_frame;
    for (const auto& p : packets) by_frame[p.frame_no] = &p;

    for (std::size_t i = 0; i < rows.size(); ++i) {
        ClassLabel l = labels[i].label;
        ++r.counts[l];
        if (l == ClassLabel::Normal) continue;
        auto& md = r.metadata[l];
        const auto& row = rows[i];
        if (row.src_ip && row.dst_ip) md.ip_pairs.emplace(row.src_ip->to_string(), row.dst_ip->to_string());
        for (auto fno : row.frames) {
            auto it = by_frame.find(fno);
            if (it == by_frame.end() || !it->second->app) continue;
            const AppFields& a = *it->second->app;
            if (a.mqtt_topic) md.mqtt_topics.insert(*a.mqtt_topic);
            if (a.dns_qname) md.dns_queries.insert(*a.dns_qname);
            if (a.modbus_unit_id) md.modbus_unit_ids.insert(*a.modbus_unit_id);
            if (a.http_method) md.http_methods_paths.insert(*a.http_method + " " + a.http_path.value_or("/"));
        }
    }

    std::ostringstream g;
    g << "=== Traffic Summary ===\n";
    std::size_t pkt_rows = 0;
    for (const auto& row : rows) pkt_rows += row.kind == RowKind::Packet;
    g << "Total rows classified: " << r.total_rows << " (" << pkt_rows << " packet rows, " << r.total_rows - pkt_rows
      << " flow rows)\n";
    g << "Class distribution:";
    if (r.counts.empty()) g << " none";
    for (auto l : all_labels()) {
        auto it = r.counts.find(l);
        if (it != r.counts.end()) g << " " << label_name(l) << "=" << it->second;
    }
    g << "\n";
    if (!r.counts.empty()) {
        ClassLabel dom = r.counts.begin()->first;
        for (const auto& [l, n] : r.counts)
            if (n > r.counts[dom]) dom = l;
        g << "Dominant class: " << label_name(dom) << " (" << r.counts[dom] << " rows, "
          << pct(r.counts[dom], r.total_rows) << "%)\n";
    } else {
        g << "Dominant class: none\n";
    }
    g << "Attack classes present: ";
    if (r.metadata.empty()) g << "none";
    bool first = true;
    for (const auto& [l, md] : r.metadata) {
        g << (first ? "" : ", ") << label_name(l);
        first = false;
    }
    g << "\n";
    r.global_summary = g.str();

    for (const auto& [l, n] : r.counts) {
        const AttackMetadata* md = l == ClassLabel::Normal ? nullptr : &r.metadata[l];
        AttackSection s{section_narrative(l, n, r.total_rows, md), std::string(template_for(l).guidance)};
        if (l == ClassLabel::Normal)
            r.normal = s;
        else
            r.per_attack[l] = s;
    }
    return r;
}

std::vector<ReportSection> InterpretationReport::sections() const {
    std::vector<ReportSection> out;
    out.push_back({SectionKind::Global, std::nullopt, global_summary});
    if (normal)
        out.push_back({SectionKind::Narrative, ClassLabel::Normal,
                       "=== Normal ===\n" + normal->narrative + "\nGuidance: " + normal->guidance + "\n"});
    for (const auto& [l, s] : per_attack) {
        out.push_back({SectionKind::Narrative, l,
                       "=== " + std::string(label_name(l)) + " ===\n" + s.narrative + "\nGuidance: " + s.guidance +
                           "\n"});
        auto md = metadata.find(l);
        if (md != metadata.end()) {
            auto ib = intel_blocks.find(l);
            out.push_back({SectionKind::Metadata, l,
                           metadata_text(l, md->second, ib == intel_blocks.end() ? nullptr : &ib->second)});
        }
    }
    return out;
}

std::string InterpretationReport::render() const {
    std::string out;
    bool first = true;
    for (const auto& s : sections()) {
        if (!first) out += "\n";
        out += s.text;
        first = false;
    }
    return out;
}

std::string predictions_csv(const std::vector<Classification>& labels) {
    std::string out = "row_id,label,confidence\n";
    char buf[32];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.4f", labels[i].confidence);
        out += std::to_string(i) + "," + std::string(label_name(labels[i].label)) + "," + buf + "\n";
    }
    return out;
}

}  // namespace iotlens
