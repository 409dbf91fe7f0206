#include <gtest/gtest.h>

#include <httplib.h>

#include "iotlens/hash.hpp"
#include "iotlens/service.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace iotlens;
using namespace iotlens::testing;

namespace {

ServiceConfig config_in(const TempDir& dir) {
    ServiceConfig cfg;
    cfg.data_dir = dir / "data";
    cfg.port = 0;
    cfg.offline = true;
    cfg.oui_file = source_dir() / "data" / "oui.csv";
    cfg.intel_fixture_dir = source_dir() / "fixtures" / "intel";
    cfg.search_fixture = source_dir() / "fixtures" / "search.json";
    return cfg;
}

std::filesystem::path schema(const std::string& name) { return source_dir() / "docs" / "schemas" / name; }

void expect_schema(const std::string& body, const std::string& name) {
    auto errs = schema_errors(Json::parse(body), schema(name));
    EXPECT_TRUE(errs.empty()) << name << ": " << (errs.empty() ? "" : errs.front());
}

httplib::Result upload(httplib::Client& c, const std::string& file) {
    httplib::MultipartFormDataItems items = {{"file", read_file(fixture(file)), file, "application/vnd.tcpdump.pcap"}};
    return c.Post("/captures", items);
}

struct Running {
    TempDir dir;
    Service svc{config_in(dir)};
    int port = svc.start_background();
    httplib::Client client{"127.0.0.1", port};
};

}  // namespace

TEST(HttpStatus, Mapping) {
    EXPECT_EQ(http_status_for(Errc::SessionNotFound), 404);
    EXPECT_EQ(http_status_for(Errc::InvalidArgument), 400);
    EXPECT_EQ(http_status_for(Errc::NotAPcap), 400);
    EXPECT_EQ(http_status_for(Errc::ChatUnavailable), 503);
    EXPECT_EQ(dependent_client(Errc::ChatUnavailable), "chat");
    EXPECT_EQ(dependent_client(Errc::SessionNotFound), "");
}

TEST(HttpApi, HealthAndEmptySessions) {
    Running r;
    auto h = r.client.Get("/healthz");
    ASSERT_TRUE(h);
    EXPECT_EQ(h->status, 200);
    expect_schema(h->body, "healthz.json");
    auto s = r.client.Get("/sessions");
    ASSERT_TRUE(s);
    EXPECT_EQ(s->status, 200);
    expect_schema(s->body, "sessions.json");
    EXPECT_TRUE(Json::parse(s->body)["latest"].is_null());
}

TEST(HttpApi, UploadQueryReportLifecycle) {
    Running r;
    auto up = upload(r.client, "handshake.pcap");
    ASSERT_TRUE(up);
    ASSERT_EQ(up->status, 200) << up->body;
    expect_schema(up->body, "captures.json");
    auto first = Json::parse(up->body);
    EXPECT_FALSE(first["skipped"].get<bool>());
    EXPECT_EQ(first["packets"], 3);
    EXPECT_EQ(first["capture_hash"], sha256_hex(read_file(fixture("handshake.pcap"))));
    std::string id = first["session_id"];

    auto again = upload(r.client, "handshake.pcap");
    ASSERT_TRUE(again);
    auto second = Json::parse(again->body);
    EXPECT_TRUE(second["skipped"].get<bool>());
    EXPECT_EQ(second["session_id"], id);

    auto q = r.client.Post("/sessions/" + id + "/query", R"({"question": "how many packets were in the flow?"})",
                           "application/json");
    ASSERT_TRUE(q);
    ASSERT_EQ(q->status, 200) << q->body;
    expect_schema(q->body, "query.json");
    auto qa = Json::parse(q->body);
    EXPECT_EQ(qa["answer"]["source_class"], "CaptureGrounded") << qa["answer"]["text"];
    EXPECT_EQ(qa["bundle"]["mode"], "hybrid");

    auto dense = r.client.Post("/sessions/" + id + "/query", R"({"question": "packets", "mode": "dense"})",
                               "application/json");
    ASSERT_TRUE(dense);
    EXPECT_EQ(Json::parse(dense->body)["bundle"]["mode"], "dense");

    auto rep = r.client.Get("/sessions/" + id + "/report");
    ASSERT_TRUE(rep);
    ASSERT_EQ(rep->status, 200);
    expect_schema(rep->body, "report.json");
    EXPECT_NE(Json::parse(rep->body)["report"].get<std::string>().find("=== Traffic Summary ==="), std::string::npos);

    auto s = r.client.Get("/sessions");
    expect_schema(s->body, "sessions.json");
    auto sj = Json::parse(s->body);
    EXPECT_EQ(sj["latest"], id);
    EXPECT_EQ(sj["sessions"].size(), 1u);
    EXPECT_FALSE(r.svc.audit().entries().empty());
}

TEST(HttpApi, ErrorsUseTheErrorShape) {
    Running r;
    auto missing = r.client.Post("/sessions/nope/query", R"({"question": "x"})", "application/json");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    expect_schema(missing->body, "error.json");
    EXPECT_EQ(Json::parse(missing->body)["error"], "SessionNotFound");

    auto rep = r.client.Get("/sessions/nope/report");
    ASSERT_TRUE(rep);
    EXPECT_EQ(rep->status, 404);
    expect_schema(rep->body, "error.json");

    auto route = r.client.Get("/no/such/route");
    ASSERT_TRUE(route);
    EXPECT_EQ(route->status, 404);
    expect_schema(route->body, "error.json");

    auto up = upload(r.client, "handshake.pcap");
    std::string id = Json::parse(up->body)["session_id"];
    for (const char* body : {"{not json", R"({"q": "x"})", R"({"question": 3})", R"({"question": "x", "mode": "sparse"})",
                             R"({"question": "   "})"}) {
        auto bad = r.client.Post("/sessions/" + id + "/query", body, "application/json");
        ASSERT_TRUE(bad);
        EXPECT_EQ(bad->status, 400) << body;
        expect_schema(bad->body, "error.json");
    }

    httplib::MultipartFormDataItems junk = {{"file", read_file(fixture("not_a_pcap.pcapng")), "x.pcapng", ""}};
    auto notpcap = r.client.Post("/captures", junk);
    ASSERT_TRUE(notpcap);
    EXPECT_EQ(notpcap->status, 400);
    EXPECT_EQ(Json::parse(notpcap->body)["error"], "NotAPcap");

    auto empty = r.client.Post("/captures", "", "application/octet-stream");
    ASSERT_TRUE(empty);
    EXPECT_EQ(empty->status, 400);
    expect_schema(empty->body, "error.json");
}

TEST(HttpApi, RawBodyUpload) {
    Running r;
    auto up = r.client.Post("/captures", read_file(fixture("dns_query.pcap")), "application/octet-stream");
    ASSERT_TRUE(up);
    ASSERT_EQ(up->status, 200) << up->body;
    expect_schema(up->body, "captures.json");
}

TEST(HttpApi, UploadLimit) {
    TempDir dir;
    auto cfg = config_in(dir);
    cfg.upload_limit = 64;
    Service svc(cfg);
    int port = svc.start_background();
    httplib::Client c("127.0.0.1", port);
    auto up = c.Post("/captures", read_file(fixture("iot_mixed.pcap")), "application/octet-stream");
    ASSERT_TRUE(up);
    EXPECT_EQ(up->status, 413);
}

TEST(ServiceOps, QueryAndReportWithoutHttp) {
    TempDir dir;
    Service svc(config_in(dir));
    auto r = svc.ingest(fixture("iot_mixed.pcap"));
    EXPECT_EQ(r.packet_count, 37u);
    EXPECT_EQ(r.flow_count, 5u);
    auto hs = svc.ingest(fixture("handshake.pcap"));
    auto run = svc.query(hs.ingest.session_id, "What is the default MQTT port?");
    EXPECT_EQ(run.answer.source_class, SourceClass::WebSourced) << run.answer.text;
    auto local = svc.query(r.ingest.session_id, "What is the default MQTT port?");
    EXPECT_EQ(local.answer.source_class, SourceClass::CaptureGrounded) << local.answer.text;
    auto grounded = svc.query(r.ingest.session_id, "Which MQTT topic did 192.168.1.10 publish to?");
    EXPECT_EQ(grounded.answer.source_class, SourceClass::CaptureGrounded) << grounded.answer.text;
    EXPECT_NE(grounded.answer.text.find("home/cam/motion"), std::string::npos) << grounded.answer.text;
    EXPECT_THROW(svc.report("../etc"), Error);
    EXPECT_NE(svc.report(r.ingest.session_id).find("Traffic Summary"), std::string::npos);
}

TEST(ServiceConfig, OfflineNeverBuildsRemoteClients) {
    ServiceConfig cfg;
    cfg.offline = true;
    cfg.chat_url = "http://10.255.255.1:9";
    cfg.embedder_url = "http://10.255.255.1:9";
    auto c = make_clients(cfg);
    EXPECT_NE(dynamic_cast<FixtureChat*>(c.chat.get()), nullptr);
    EXPECT_NE(dynamic_cast<HashingEmbedder*>(c.embedder.get()), nullptr);
    EXPECT_EQ(c.reranker, nullptr);
    EXPECT_EQ(make_intel_config(cfg).mode, IntelMode::Fixture);
}
