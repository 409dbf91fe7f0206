#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "iotlens/enrichment.hpp"
#include "test_support.hpp"

using namespace iotlens;
using namespace iotlens::testing;

namespace {

IpAddr ip(const std::string& s) { return *IpAddr::parse(s); }

IntelConfig fixture_config() {
    IntelConfig cfg;
    cfg.mode = IntelMode::Fixture;
    cfg.fixture_dir = source_dir() / "fixtures" / "intel";
    return cfg;
}

struct LiveSetup {
    std::shared_ptr<RecordingTransport> transport = std::make_shared<RecordingTransport>();
    IntelConfig cfg;
    LiveSetup() {
        cfg.mode = IntelMode::Live;
        cfg.transport = transport;
        cfg.vt_api_key = "vt-key";
        cfg.abuseipdb_api_key = "abuse-key";
        cfg.vt_base = "http://vt.test";
        cfg.shodan_base = "http://shodan.test";
        cfg.abuseipdb_base = "http://abuse.test";
        cfg.backoff = std::chrono::milliseconds(1);
        cfg.rate_per_minute = 1e6;
    }
};

// Reserved IPv4 blocks, as CIDR text; parsed independently of the library.
const std::vector<std::string> kReservedCidrs = {
    "0.0.0.0/8",      "10.0.0.0/8",     "100.64.0.0/10",   "127.0.0.0/8",    "169.254.0.0/16",
    "172.16.0.0/12",  "192.0.0.0/24",   "192.0.2.0/24",    "192.88.99.0/24", "192.168.0.0/16",
    "198.18.0.0/15",  "198.51.100.0/24", "203.0.113.0/24", "224.0.0.0/4",    "240.0.0.0/4",
};

std::uint32_t parse_v4(const std::string& s) {
    std::uint32_t v = 0;
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        auto dot = s.find('.', pos);
        v = (v << 8) | static_cast<std::uint32_t>(std::stoul(s.substr(pos, dot - pos)));
        pos = dot + 1;
    }
    return v;
}

std::string v4_text(std::uint32_t v) {
    return std::to_string(v >> 24) + "." + std::to_string((v >> 16) & 255) + "." + std::to_string((v >> 8) & 255) +
           "." + std::to_string(v & 255);
}

bool reserved_oracle(std::uint32_t v) {
    for (const auto& c : kReservedCidrs) {
        auto slash = c.find('/');
        std::uint32_t base = parse_v4(c.substr(0, slash));
        int bits = std::stoi(c.substr(slash + 1));
        std::uint64_t size = std::uint64_t{1} << (32 - bits);
        if (v >= base && v - base < size) return true;
    }
    return false;
}

InterpretationReport report_with(std::map<ClassLabel, std::set<std::pair<std::string, std::string>>> pairs) {
    InterpretationReport r;
    for (auto& [label, set] : pairs) {
        r.counts[label] = set.size();
        r.metadata[label].ip_pairs = set;
        r.per_attack[label] = {"narrative", "guidance"};
    }
    r.global_summary = "=== Traffic Summary ===\n";
    return r;
}

bool is_subsequence(const std::string& small, const std::string& big) {
    std::size_t j = 0;
    for (char c : big)
        if (j < small.size() && small[j] == c) ++j;
    return j == small.size();
}

}  // namespace

TEST(PublicIp, RangeBoundariesMatchOracle) {
    for (const auto& c : kReservedCidrs) {
        auto slash = c.find('/');
        std::uint32_t base = parse_v4(c.substr(0, slash));
        std::uint32_t last = base + static_cast<std::uint32_t>((std::uint64_t{1} << (32 - std::stoi(c.substr(slash + 1)))) - 1);
        for (std::uint32_t v : {base, last, base - 1, last + 1})
            EXPECT_EQ(is_public_ip(ip(v4_text(v))), !reserved_oracle(v)) << v4_text(v);
    }
}

TEST(PublicIp, RandomAddressesMatchOracle) {
    std::mt19937 rng(99);
    for (int i = 0; i < 20000; ++i) {
        std::uint32_t v = rng();
        EXPECT_EQ(is_public_ip(ip(v4_text(v))), !reserved_oracle(v)) << v4_text(v);
    }
}

TEST(PublicIp, Ipv6) {
    EXPECT_TRUE(is_public_ip(ip("2606:4700::1111")));
    EXPECT_FALSE(is_public_ip(ip("::1")));
    EXPECT_FALSE(is_public_ip(ip("::")));
    EXPECT_FALSE(is_public_ip(ip("fe80::1")));
    EXPECT_FALSE(is_public_ip(ip("fd00::1")));
    EXPECT_FALSE(is_public_ip(ip("ff02::1")));
    EXPECT_FALSE(is_public_ip(ip("2001:db8::1")));
    EXPECT_FALSE(is_public_ip(ip("::ffff:192.168.1.1")));
    EXPECT_TRUE(is_public_ip(ip("::ffff:8.8.8.8")));
}

TEST(FindPublicIps, ReportMetadata) {
    auto r = report_with({{ClassLabel::DDoS_TCP, {{"192.168.1.5", "8.8.8.8"}, {"203.0.113.7", "198.51.100.2"}}},
                          {ClassLabel::Backdoor, {{"10.0.0.5", "52.0.0.1"}, {"52.0.0.1", "8.8.8.8"}}}});
    auto found = find_public_ips(r);
    ASSERT_EQ(found.size(), 2u);
    EXPECT_EQ(found[ClassLabel::DDoS_TCP], (std::set<IpAddr>{ip("8.8.8.8")}));
    EXPECT_EQ(found[ClassLabel::Backdoor], (std::set<IpAddr>{ip("52.0.0.1"), ip("8.8.8.8")}));
    EXPECT_TRUE(find_public_ips(report_with({{ClassLabel::MITM, {{"203.0.113.7", "10.1.1.1"}}}})).empty());
}

TEST(FindPublicIps, MixedCaptureFlows) {
    auto packets = parse_capture(fixture("iot_mixed.pcap")).packets;
    auto flows = assemble_flows(packets).flows;
    EXPECT_EQ(find_public_ips(flows), (std::set<IpAddr>{ip("8.8.8.8"), ip("52.0.0.1")}));
}

TEST(IntelFixture, GoogleDns) {
    auto rec = lookup_intel(ip("8.8.8.8"), all_providers(), IntelMode::Fixture, fixture_config());
    EXPECT_EQ(rec.shodan_ports, (std::set<std::pair<int, std::string>>{{53, "udp"}, {443, "tcp"}}));
    EXPECT_EQ(rec.vt_malicious_count, 0);
    EXPECT_EQ(rec.abuse_confidence, 0);
    EXPECT_TRUE(rec.provider_errors.empty());
}

TEST(IntelFixture, MaliciousHost) {
    IntelClient client(fixture_config());
    auto rec = client.lookup(ip("52.0.0.1"));
    EXPECT_EQ(rec.vt_malicious_count, 14);
    EXPECT_EQ(rec.abuse_confidence, 82);
    EXPECT_EQ(rec.shodan_cves, (std::set<std::string>{"CVE-2021-41773"}));
    EXPECT_EQ(render_intel_block(rec),
              "Threat intelligence: 52.0.0.1\n"
              "  VirusTotal: flagged malicious by 14 engines\n"
              "  Shodan: open ports 80/tcp, 443/tcp; tags cloud; CVEs CVE-2021-41773\n"
              "  AbuseIPDB: abuse-confidence 82 (Malicious)\n");
}

TEST(IntelFixture, UnknownAndNonPublic) {
    IntelClient client(fixture_config());
    try {
        client.lookup(ip("1.2.3.4"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NoFixtureForIp);
    }
    try {
        client.lookup(ip("192.168.1.5"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonPublicIp);
    }
}

TEST(IntelFixture, LookupManyReportsFailures) {
    IntelClient client(fixture_config());
    std::map<IpAddr, std::string> errors;
    auto got = client.lookup_many({ip("8.8.8.8"), ip("52.0.0.1"), ip("1.2.3.4"), ip("10.0.0.1")}, &errors);
    EXPECT_EQ(got.size(), 2u);
    EXPECT_EQ(errors.size(), 2u);
    EXPECT_TRUE(errors.count(ip("1.2.3.4")));
}

TEST(IntelLive, OnlyShodanReachable) {
    LiveSetup s;
    s.transport->respond("http://shodan.test:80/52.0.0.1",
                         {200, R"({"ports":[22],"tags":["iot"],"vulns":["CVE-2020-1"]})"});
    IntelClient client(s.cfg);
    auto rec = client.lookup(ip("52.0.0.1"));
    EXPECT_EQ(rec.shodan_ports, (std::set<std::pair<int, std::string>>{{22, "tcp"}}));
    EXPECT_FALSE(rec.vt_malicious_count);
    ASSERT_EQ(rec.provider_errors.size(), 2u);
    EXPECT_EQ(rec.provider_errors[0].rfind("VirusTotal:", 0), 0u);
    EXPECT_EQ(rec.provider_errors[1].rfind("AbuseIPDB:", 0), 0u);

    // Unreachable providers are retried once; Shodan answered first time.
    std::map<std::string, int> hits;
    for (const auto& r : s.transport->requests()) ++hits[r.url];
    EXPECT_EQ(hits["http://vt.test:80/api/v3/ip_addresses/52.0.0.1"], 2);
    EXPECT_EQ(hits["http://shodan.test:80/52.0.0.1"], 1);
    EXPECT_EQ(hits["http://abuse.test:80/api/v2/check?ipAddress=52.0.0.1"], 2);
}

TEST(IntelLive, HeadersAndShodanNotFound) {
    LiveSetup s;
    s.transport->respond("http://vt.test:80/api/v3/ip_addresses/8.8.8.8",
                         {200, R"({"data":{"attributes":{"last_analysis_stats":{"malicious":3}}}})"});
    s.transport->respond("http://shodan.test:80/8.8.8.8", {404, R"({"detail":"No information available"})"});
    s.transport->respond("http://abuse.test:80/api/v2/check?ipAddress=8.8.8.8",
                         {200, R"({"data":{"abuseConfidenceScore":30}})"});
    IntelClient client(s.cfg);
    auto rec = client.lookup(ip("8.8.8.8"));
    EXPECT_EQ(rec.vt_malicious_count, 3);
    EXPECT_EQ(rec.abuse_confidence, 30);
    EXPECT_TRUE(rec.shodan_ports.empty());
    EXPECT_TRUE(rec.provider_errors.empty());
    for (const auto& r : s.transport->requests()) {
        if (r.url.find("vt.test") != std::string::npos) EXPECT_EQ(r.headers.at("x-apikey"), "vt-key");
        if (r.url.find("abuse.test") != std::string::npos) EXPECT_EQ(r.headers.at("Key"), "abuse-key");
    }
}

TEST(IntelLive, ClientErrorsAreNotRetried) {
    LiveSetup s;
    s.cfg.providers = {Provider::VirusTotal};
    s.transport->respond("http://vt.test:80/api/v3/ip_addresses/8.8.8.8", {401, "{}"});
    IntelClient client(s.cfg);
    try {
        client.lookup(ip("8.8.8.8"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::AllProvidersFailed);
        EXPECT_NE(std::string(e.what()).find("HTTP 401"), std::string::npos);
    }
    EXPECT_EQ(s.transport->requests().size(), 1u);
}

TEST(IntelLive, MissingKeysSkipCredentialedProviders) {
    LiveSetup s;
    s.cfg.vt_api_key.clear();
    s.transport->respond("http://shodan.test:80/8.8.8.8", {200, R"({"ports":[53]})"});
    s.transport->respond("http://abuse.test:80/api/v2/check?ipAddress=8.8.8.8",
                         {200, R"({"data":{"abuseConfidenceScore":0}})"});
    auto rec = IntelClient(s.cfg).lookup(ip("8.8.8.8"));
    ASSERT_EQ(rec.provider_errors.size(), 1u);
    EXPECT_NE(rec.provider_errors[0].find("VT_API_KEY"), std::string::npos);
    for (const auto& r : s.transport->requests()) EXPECT_EQ(r.url.find("vt.test"), std::string::npos);
}

TEST(IntelLive, DiskCacheAvoidsRepeatQueries) {
    TempDir dir;
    LiveSetup s;
    s.cfg.cache_dir = dir.path();
    s.cfg.providers = {Provider::Shodan};
    s.transport->respond("http://shodan.test:80/8.8.8.8", {200, R"({"ports":[53]})"});
    IntelClient(s.cfg).lookup(ip("8.8.8.8"));
    auto second = IntelClient(s.cfg).lookup(ip("8.8.8.8"));
    EXPECT_EQ(s.transport->requests().size(), 1u);
    EXPECT_EQ(second.shodan_ports, (std::set<std::pair<int, std::string>>{{53, "tcp"}}));
}

TEST(IntelLive, PrivacyGuardNeverQueriesPrivateAddresses) {
    LiveSetup s;
    for (const char* host : {"8.8.8.8", "52.0.0.1"})
        s.transport->respond(std::string("http://shodan.test:80/") + host, {200, R"({"ports":[80]})"});
    IntelClient client(s.cfg);
    std::set<IpAddr> ips;
    for (const char* a : {"8.8.8.8", "52.0.0.1", "10.0.0.1", "192.168.1.5", "127.0.0.1", "169.254.1.1",
                          "100.64.0.9", "203.0.113.7", "224.0.0.251", "255.255.255.255", "fe80::1"})
        ips.insert(ip(a));
    auto got = client.lookup_many(ips);
    EXPECT_EQ(got.size(), 2u);
    for (const auto& r : s.transport->requests()) {
        bool public_target = r.url.find("8.8.8.8") != std::string::npos || r.url.find("52.0.0.1") != std::string::npos;
        EXPECT_TRUE(public_target) << r.url;
    }
}

TEST(TokenBucketTest, CapacityThenEmpty) {
    TokenBucket bucket(4.0);
    int granted = 0;
    for (int i = 0; i < 10; ++i) granted += bucket.try_acquire();
    EXPECT_EQ(granted, 4);
}

TEST(Annotate, NoRecordsLeavesReportUnchanged) {
    auto r = report_with({{ClassLabel::Backdoor, {{"10.0.0.5", "10.0.0.6"}}}});
    auto before = r.render();
    EXPECT_EQ(annotate_report(r, {}).render(), before);
}

TEST(Annotate, BackdoorGetsIntelBlock) {
    auto r = report_with({{ClassLabel::Backdoor, {{"10.0.0.5", "52.0.0.1"}}}});
    auto before = r.render();
    auto rec = IntelClient(fixture_config()).lookup(ip("52.0.0.1"));
    auto after = annotate_report(r, {{ClassLabel::Backdoor, {rec}}}).render();
    EXPECT_NE(after.find("flagged malicious by 14 engines"), std::string::npos);
    auto meta = after.find("--- Backdoor metadata ---");
    ASSERT_NE(meta, std::string::npos);
    EXPECT_GT(after.find("Threat intelligence: 52.0.0.1"), meta);
    EXPECT_TRUE(is_subsequence(before, after));
    EXPECT_EQ(after, annotate_report(r, {{ClassLabel::Backdoor, {rec}}}).render());
}

TEST(Reputation, AppliedToFlowEndpoints) {
    auto packets = parse_capture(fixture("iot_mixed.pcap")).packets;
    auto flows = assemble_flows(packets).flows;
    IntelClient client(fixture_config());
    apply_reputation(flows, client.lookup_many(find_public_ips(flows)));
    int malicious = 0, benign = 0;
    for (const auto& f : flows)
        for (const auto* tag : {&f.reputation_a, &f.reputation_b})
            if (*tag) (*tag)->verdict == Verdict::Malicious ? ++malicious : ++benign;
    EXPECT_GT(malicious, 0);
    EXPECT_GT(benign, 0);
    for (const auto& f : flows) {
        auto text = render_narrative(f, flow_signature(f));
        if (f.key.b.ip == ip("52.0.0.1") || f.key.a.ip == ip("52.0.0.1"))
            EXPECT_NE(text.find("abuse-confidence 82 (Malicious)"), std::string::npos);
    }
}
