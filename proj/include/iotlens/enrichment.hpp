#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotlens/features.hpp"
#include "iotlens/flows.hpp"
#include "iotlens/http.hpp"

namespace iotlens {

/// False for private, loopback, link-local, multicast, broadcast,
/// unspecified, CGNAT, documentation, benchmarking and other reserved
/// ranges (IPv4 and IPv6).
bool is_public_ip(const IpAddr& ip);

/// Public IPs per attack label, taken from the report metadata.
std::map<ClassLabel, std::set<IpAddr>> find_public_ips(const InterpretationReport& report);

/// Public endpoints of the given flows.
std::set<IpAddr> find_public_ips(const std::vector<FlowRecord>& flows);

enum class Provider { VirusTotal, Shodan, AbuseIPDB };

std::string_view provider_name(Provider p);
/// Directory name under fixtures/intel and the cache ("virustotal", ...).
std::string_view provider_dir(Provider p);
const std::vector<Provider>& all_providers();

struct IntelRecord {
    IpAddr ip;
    std::optional<int> vt_malicious_count;
    std::set<std::pair<int, std::string>> shodan_ports;  // (port, "tcp"/"udp")
    std::set<std::string> shodan_tags;
    std::set<std::string> shodan_cves;
    std::optional<int> abuse_confidence;
    std::int64_t fetched_at = 0;
    std::vector<std::string> provider_errors;  // "Provider: reason"
};

enum class IntelMode { Live, Fixture };

struct IntelConfig {
    IntelMode mode = IntelMode::Fixture;
    std::vector<Provider> providers = {Provider::VirusTotal, Provider::Shodan, Provider::AbuseIPDB};
    std::filesystem::path fixture_dir = "fixtures/intel";
    std::optional<std::filesystem::path> cache_dir;

    // Live mode.
    std::shared_ptr<HttpTransport> transport;  // default_transport() when null
    std::string vt_api_key, abuseipdb_api_key;
    std::string vt_base = "https://www.virustotal.com";
    std::string shodan_base = "https://internetdb.shodan.io";
    std::string abuseipdb_base = "https://api.abuseipdb.com";
    int retries = 1;
    std::chrono::milliseconds backoff{500};
    std::chrono::milliseconds timeout{5000};
    double rate_per_minute = 4.0;
    std::size_t parallelism = 4;

    /// Keys from VT_API_KEY / ABUSEIPDB_API_KEY.
    void load_env_keys();
};

/// Token bucket: `capacity` tokens refilled continuously at `per_minute`.
class TokenBucket {
public:
    explicit TokenBucket(double per_minute, double capacity = -1);
    /// Blocks until a token is available.
    void acquire();
    bool try_acquire();

private:
    void refill();
    std::mutex mu_;
    double rate_per_s_, capacity_, tokens_;
    std::chrono::steady_clock::time_point last_;
};

class IntelClient {
public:
    explicit IntelClient(IntelConfig cfg);

    /// Throws NonPublicIp before touching any provider, NoFixtureForIp
    /// (Fixture mode, no provider file) or AllProvidersFailed (Live mode).
    IntelRecord lookup(const IpAddr& ip);

    /// Concurrent lookups bounded by cfg.parallelism. Failed IPs are absent
    /// from the result; their errors land in `errors` when given.
    std::map<IpAddr, IntelRecord> lookup_many(const std::set<IpAddr>& ips,
                                              std::map<IpAddr, std::string>* errors = nullptr);

    const IntelConfig& config() const { return cfg_; }

private:
    std::optional<std::string> fetch(Provider p, const IpAddr& ip, std::string& error);
    std::optional<std::string> fetch_live(Provider p, const IpAddr& ip, std::string& error);
    std::mutex& key_mutex(const std::string& key);

    IntelConfig cfg_;
    std::map<Provider, std::unique_ptr<TokenBucket>> buckets_;
    std::mutex keys_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> key_mu_;
};

/// Merge one provider's native JSON body into a record.
void merge_provider_json(IntelRecord& rec, Provider p, const Json& body);

IntelRecord lookup_intel(const IpAddr& ip, const std::vector<Provider>& providers, IntelMode mode,
                         const IntelConfig& base = {});

/// Structured block inserted under a metadata subsection.
std::string render_intel_block(const IntelRecord& rec);

/// Add one "Threat intelligence:" block per record to the matching
/// metadata subsections. No records means the report comes back unchanged.
InterpretationReport annotate_report(InterpretationReport report,
                                     const std::map<ClassLabel, std::vector<IntelRecord>>& intel);

/// Set reputation tags on flow endpoints that have an abuse confidence.
void apply_reputation(std::vector<FlowRecord>& flows, const std::map<IpAddr, IntelRecord>& intel);

}  // namespace iotlens
