#include "iotlens/enrichment.hpp"

#include <semaphore>
#include <sstream>
#include <thread>

#include <cstdlib>
#include <ctime>

namespace iotlens {

namespace {

struct Range4 {
    std::uint32_t base;
    int bits;
};

constexpr Range4 kReserved4[] = {
    {0x00000000, 8},   // 0.0.0.0/8 "this network"
    {0x0a000000, 8},   // 10/8
    {0x64400000, 10},  // 100.64/10 CGNAT
    {0x7f000000, 8},   // loopback
    {0xa9fe0000, 16},  // link-local
    {0xac100000, 12},  // 172.16/12
    {0xc0000000, 24},  // 192.0.0/24 protocol assignments
    {0xc0000200, 24},  // 192.0.2/24 TEST-NET-1
    {0xc0586300, 24},  // 192.88.99/24 6to4 relay
    {0xc0a80000, 16},  // 192.168/16
    {0xc6120000, 15},  // 198.18/15 benchmarking
    {0xc6336400, 24},  // 198.51.100/24 TEST-NET-2
    {0xcb007100, 24},  // 203.0.113/24 TEST-NET-3
    {0xe0000000, 4},   // multicast
    {0xf0000000, 4},   // reserved + broadcast
};

bool in4(std::uint32_t v, const Range4& r) {
    std::uint32_t mask = r.bits == 0 ? 0 : ~std::uint32_t{0} << (32 - r.bits);
    return (v & mask) == r.base;
}

}  // namespace

bool is_public_ip(const IpAddr& ip) {
    if (!ip.v6) {
        std::uint32_t v = ip.v4_value();
        for (const auto& r : kReserved4)
            if (in4(v, r)) return false;
        return true;
    }
    const auto& b = ip.bytes;
    bool zero_prefix = std::all_of(b.begin(), b.begin() + 10, [](std::uint8_t x) { return x == 0; });
    if (zero_prefix && b[10] == 0xff && b[11] == 0xff) return is_public_ip(IpAddr::v4_from_bytes(&b[12]));
    if (zero_prefix && b[10] == 0 && b[11] == 0) return false;  // ::, ::1, deprecated v4-compatible
    if ((b[0] & 0xe0) != 0x20) return false;                    // only 2000::/3 is global unicast
    if (b[0] == 0x20 && b[1] == 0x01 && b[2] == 0x0d && b[3] == 0xb8) return false;  // documentation
    if (b[0] == 0x20 && b[1] == 0x01 && b[2] == 0x00 && b[3] == 0x00) return false;  // Teredo
    if (b[0] == 0x20 && b[1] == 0x02) return false;                                  // 6to4
    return true;
}

std::map<ClassLabel, std::set<IpAddr>> find_public_ips(const InterpretationReport& report) {
    std::map<ClassLabel, std::set<IpAddr>> out;
    for (const auto& [label, md] : report.metadata) {
        for (const auto& [src, dst] : md.ip_pairs) {
            for (const auto* s : {&src, &dst}) {
                auto ip = IpAddr::parse(*s);
                if (ip && is_public_ip(*ip)) out[label].insert(*ip);
            }
        }
    }
    return out;
}

std::set<IpAddr> find_public_ips(const std::vector<FlowRecord>& flows) {
    std::set<IpAddr> out;
    for (const auto& f : flows) {
        if (is_public_ip(f.key.a.ip)) out.insert(f.key.a.ip);
        if (is_public_ip(f.key.b.ip)) out.insert(f.key.b.ip);
    }
    return out;
}

std::string_view provider_name(Provider p) {
    switch (p) {
        case Provider::VirusTotal: return "VirusTotal";
        case Provider::Shodan: return "Shodan";
        case Provider::AbuseIPDB: return "AbuseIPDB";
    }
    return "";
}

std::string_view provider_dir(Provider p) {
    switch (p) {
        case Provider::VirusTotal: return "virustotal";
        case Provider::Shodan: return "shodan";
        case Provider::AbuseIPDB: return "abuseipdb";
    }
    return "";
}

const std::vector<Provider>& all_providers() {
    static const std::vector<Provider> v = {Provider::VirusTotal, Provider::Shodan, Provider::AbuseIPDB};
    return v;
}

void IntelConfig::load_env_keys() {
    if (const char* k = std::getenv("VT_API_KEY")) vt_api_key = k;
    if (const char* k = std::getenv("ABUSEIPDB_API_KEY")) abuseipdb_api_key = k;
}

// ---------------------------------------------------------------- rate limit

TokenBucket::TokenBucket(double per_minute, double capacity)
    : rate_per_s_(per_minute / 60.0),
      capacity_(capacity > 0 ? capacity : std::max(1.0, per_minute)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::refill() {
    auto now = std::chrono::steady_clock::now();
    double dt = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + dt * rate_per_s_);
}

bool TokenBucket::try_acquire() {
    std::lock_guard lock(mu_);
    refill();
    if (tokens_ < 1.0) return false;
    tokens_ -= 1.0;
    return true;
}

void TokenBucket::acquire() {
    while (true) {
        double wait_s;
        {
            std::lock_guard lock(mu_);
            refill();
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait_s = rate_per_s_ > 0 ? (1.0 - tokens_) / rate_per_s_ : 1.0;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(std::min(wait_s, 1.0)));
    }
}

// ---------------------------------------------------------------- client

namespace {

std::string utc_day() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[16];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d", &tm);
    return buf;
}

int json_int(const Json& j, std::initializer_list<const char*> path) {
    const Json* cur = &j;
    for (const char* k : path) {
        if (!cur->is_object() || !cur->contains(k)) throw Error(Errc::IoError, std::string("missing field ") + k);
        cur = &(*cur)[k];
    }
    if (!cur->is_number()) throw Error(Errc::IoError, "non-numeric field");
    return cur->get<int>();
}

}  // namespace

void merge_provider_json(IntelRecord& rec, Provider p, const Json& body) {
    switch (p) {
        case Provider::VirusTotal:
            rec.vt_malicious_count = json_int(body, {"data", "attributes", "last_analysis_stats", "malicious"});
            break;
        case Provider::AbuseIPDB:
            rec.abuse_confidence = json_int(body, {"data", "abuseConfidenceScore"});
            break;
        case Provider::Shodan:
            if (body.contains("ports"))
                for (const auto& port : body["ports"]) {
                    if (port.is_number_integer())
                        rec.shodan_ports.emplace(port.get<int>(), "tcp");
                    else if (port.is_object() && port.contains("port"))
                        rec.shodan_ports.emplace(port["port"].get<int>(), to_lower(port.value("transport", "tcp")));
                }
            if (body.contains("tags"))
                for (const auto& t : body["tags"]) rec.shodan_tags.insert(t.get<std::string>());
            if (body.contains("vulns"))
                for (const auto& v : body["vulns"]) rec.shodan_cves.insert(v.get<std::string>());
            break;
    }
}

IntelClient::IntelClient(IntelConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.transport) cfg_.transport = default_transport();
    if (cfg_.parallelism == 0) cfg_.parallelism = 1;
    for (auto p : all_providers()) buckets_[p] = std::make_unique<TokenBucket>(cfg_.rate_per_minute);
}

std::mutex& IntelClient::key_mutex(const std::string& key) {
    std::lock_guard lock(keys_mu_);
    auto& m = key_mu_[key];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
}

std::optional<std::string> IntelClient::fetch_live(Provider p, const IpAddr& ip, std::string& error) {
    HttpRequest req;
    req.timeout = cfg_.timeout;
    std::string ips = ip.to_string();
    switch (p) {
        case Provider::VirusTotal:
            if (cfg_.vt_api_key.empty()) {
                error = "missing API key (VT_API_KEY)";
                return std::nullopt;
            }
            req.url = Url::parse(cfg_.vt_base).join("/api/v3/ip_addresses/" + ips);
            req.headers["x-apikey"] = cfg_.vt_api_key;
            break;
        case Provider::Shodan:
            req.url = Url::parse(cfg_.shodan_base).join("/" + ips);
            break;
        case Provider::AbuseIPDB:
            if (cfg_.abuseipdb_api_key.empty()) {
                error = "missing API key (ABUSEIPDB_API_KEY)";
                return std::nullopt;
            }
            req.url = Url::parse(cfg_.abuseipdb_base).join("/api/v2/check?ipAddress=" + ips);
            req.headers["Key"] = cfg_.abuseipdb_api_key;
            req.headers["Accept"] = "application/json";
            break;
    }
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff * (1 << (attempt - 1)));
        buckets_[p]->acquire();
        try {
            HttpResponse resp = cfg_.transport->send(req);
            if (resp.status == 200) return resp.body;
            if (p == Provider::Shodan && resp.status == 404) return std::string("{}");  // nothing known
            error = "HTTP " + std::to_string(resp.status);
            if (resp.status != 429 && resp.status < 500) return std::nullopt;
        } catch (const Error& e) {
            error = e.what();
        }
    }
    return std::nullopt;
}

std::optional<std::string> IntelClient::fetch(Provider p, const IpAddr& ip, std::string& error) {
    std::string ips = ip.to_string();
    if (cfg_.mode == IntelMode::Fixture) {
        auto path = cfg_.fixture_dir / std::string(provider_dir(p)) / (ips + ".json");
        std::error_code ec;
        if (!std::filesystem::exists(path, ec)) {
            error = "no fixture";
            return std::nullopt;
        }
        return read_file(path);
    }
    std::optional<std::filesystem::path> cache_path;
    if (cfg_.cache_dir)
        cache_path = *cfg_.cache_dir / std::string(provider_dir(p)) / (ips + "_" + utc_day() + ".json");
    std::string key = std::string(provider_dir(p)) + "|" + ips;
    std::lock_guard lock(key_mutex(key));
    std::error_code ec;
    if (cache_path && std::filesystem::exists(*cache_path, ec)) return read_file(*cache_path);
    auto body = fetch_live(p, ip, error);
    if (body && cache_path) {
        std::filesystem::create_directories(cache_path->parent_path(), ec);
        write_file_atomic(*cache_path, *body);
    }
    return body;
}

IntelRecord IntelClient::lookup(const IpAddr& ip) {
    if (!is_public_ip(ip)) throw Error(Errc::NonPublicIp, "refusing lookup for non-public IP " + ip.to_string());
    IntelRecord rec;
    rec.ip = ip;
    rec.fetched_at = static_cast<std::int64_t>(std::time(nullptr));
    std::size_t ok = 0;
    for (auto p : cfg_.providers) {
        std::string error;
        auto body = fetch(p, ip, error);
        if (body) {
            try {
                merge_provider_json(rec, p, Json::parse(*body));
                ++ok;
                continue;
            } catch (const std::exception& e) {
                error = std::string("unparseable reply: ") + e.what();
            }
        }
        rec.provider_errors.push_back(std::string(provider_name(p)) + ": " + error);
    }
    if (ok == 0) {
        if (cfg_.mode == IntelMode::Fixture) throw Error(Errc::NoFixtureForIp, "no intel fixture for " + ip.to_string());
        std::string msg = "all providers failed for " + ip.to_string();
        for (const auto& e : rec.provider_errors) msg += "; " + e;
        throw Error(Errc::AllProvidersFailed, msg);
    }
    return rec;
}

std::map<IpAddr, IntelRecord> IntelClient::lookup_many(const std::set<IpAddr>& ips,
                                                       std::map<IpAddr, std::string>* errors) {
    std::vector<IpAddr> list(ips.begin(), ips.end());
    std::vector<std::optional<IntelRecord>> results(list.size());
    std::vector<std::string> errs(list.size());
    std::counting_semaphore<64> slots(static_cast<std::ptrdiff_t>(std::min<std::size_t>(cfg_.parallelism, 64)));
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < list.size(); ++i) {
        slots.acquire();
        workers.emplace_back([&, i] {
            try {
                results[i] = lookup(list[i]);
            } catch (const std::exception& e) {
                errs[i] = e.what();
            }
            slots.release();
        });
    }
    for (auto& w : workers) w.join();
    std::map<IpAddr, IntelRecord> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (results[i])
            out.emplace(list[i], std::move(*results[i]));
        else if (errors)
            (*errors)[list[i]] = errs[i];
    }
    return out;
}

IntelRecord lookup_intel(const IpAddr& ip, const std::vector<Provider>& providers, IntelMode mode,
                         const IntelConfig& base) {
    IntelConfig cfg = base;
    cfg.providers = providers;
    cfg.mode = mode;
    return IntelClient(cfg).lookup(ip);
}

std::string render_intel_block(const IntelRecord& rec) {
    std::ostringstream o;
    o << "Threat intelligence: " << rec.ip.to_string() << "\n";
    if (rec.vt_malicious_count)
        o << "  VirusTotal: flagged malicious by " << *rec.vt_malicious_count << " engines\n";
    bool shodan = !rec.shodan_ports.empty() || !rec.shodan_tags.empty() || !rec.shodan_cves.empty();
    if (shodan) {
        o << "  Shodan: open ports ";
        if (rec.shodan_ports.empty()) o << "none";
        bool first = true;
        for (const auto& [port, proto] : rec.shodan_ports) {
            o << (first ? "" : ", ") << port << "/" << proto;
            first = false;
        }
        o << "; tags ";
        if (rec.shodan_tags.empty()) o << "none";
        first = true;
        for (const auto& t : rec.shodan_tags) {
            o << (first ? "" : ", ") << t;
            first = false;
        }
        o << "; CVEs ";
        if (rec.shodan_cves.empty()) o << "none";
        first = true;
        for (const auto& c : rec.shodan_cves) {
            o << (first ? "" : ", ") << c;
            first = false;
        }
        o << "\n";
    }
    if (rec.abuse_confidence) {
        auto tag = ReputationTag::from_confidence(*rec.abuse_confidence);
        o << "  AbuseIPDB: abuse-confidence " << tag.abuse_confidence << " (" << verdict_name(tag.verdict) << ")\n";
    }
    for (const auto& e : rec.provider_errors) o << "  Unavailable: " << e << "\n";
    return o.str();
}

InterpretationReport annotate_report(InterpretationReport report,
                                     const std::map<ClassLabel, std::vector<IntelRecord>>& intel) {
    for (const auto& [label, records] : intel) {
        if (records.empty() || !report.metadata.count(label)) continue;
        auto sorted = records;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.ip < b.ip; });
        for (const auto& rec : sorted) report.intel_blocks[label].push_back(render_intel_block(rec));
    }
    return report;
}

void apply_reputation(std::vector<FlowRecord>& flows, const std::map<IpAddr, IntelRecord>& intel) {
    for (auto& f : flows) {
        auto a = intel.find(f.key.a.ip);
        if (a != intel.end() && a->second.abuse_confidence)
            f.reputation_a = ReputationTag::from_confidence(*a->second.abuse_confidence);
        auto b = intel.find(f.key.b.ip);
        if (b != intel.end() && b->second.abuse_confidence)
            f.reputation_b = ReputationTag::from_confidence(*b->second.abuse_confidence);
    }
}

}  // namespace iotlens
