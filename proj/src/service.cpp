#include "iotlens/service.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "iotlens/hash.hpp"

namespace iotlens {

namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

void ServiceConfig::load_env() {
    embedder_url = env_or("IOTLENS_EMBEDDER_URL", embedder_url);
    chat_url = env_or("IOTLENS_CHAT_URL", chat_url);
    reranker_url = env_or("IOTLENS_RERANKER_URL", reranker_url);
    search_url = env_or("IOTLENS_SEARCH_URL", search_url);
    classifier_url = env_or("IOTLENS_CLASSIFIER_URL", classifier_url);
    vt_api_key = env_or("VT_API_KEY", vt_api_key);
    abuseipdb_api_key = env_or("ABUSEIPDB_API_KEY", abuseipdb_api_key);
}

ClientSet make_clients(const ServiceConfig& cfg) {
    ClientSet c;
    bool live = !cfg.offline;
    if (live && !cfg.embedder_url.empty()) c.embedder = std::make_unique<RemoteEmbedder>(cfg.embedder_url);
    else c.embedder = std::make_unique<HashingEmbedder>();

    if (live && !cfg.chat_url.empty()) c.chat = std::make_unique<RemoteChat>(cfg.chat_url);
    else c.chat = std::make_unique<FixtureChat>();

    if (live && !cfg.search_url.empty()) c.search = std::make_unique<RemoteSearch>(cfg.search_url);
    else if (cfg.search_fixture && fs::exists(*cfg.search_fixture))
        c.search = std::make_unique<FixtureSearch>(*cfg.search_fixture);

    if (live && !cfg.reranker_url.empty()) c.reranker = std::make_unique<RemoteCrossEncoder>(cfg.reranker_url);

    if (live && !cfg.classifier_url.empty())
        c.classifier = std::make_unique<FallbackClassifier>(std::make_unique<RemoteModel>(cfg.classifier_url),
                                                            std::make_unique<ReferenceRules>());
    else c.classifier = std::make_unique<ReferenceRules>();
    return c;
}

IntelConfig make_intel_config(const ServiceConfig& cfg) {
    IntelConfig ic;
    ic.fixture_dir = cfg.intel_fixture_dir;
    if (!cfg.offline && (!cfg.vt_api_key.empty() || !cfg.abuseipdb_api_key.empty())) {
        ic.mode = IntelMode::Live;
        ic.vt_api_key = cfg.vt_api_key;
        ic.abuseipdb_api_key = cfg.abuseipdb_api_key;
        ic.cache_dir = cfg.data_dir / "intel-cache";
    }
    return ic;
}

int http_status_for(Errc code) {
    switch (code) {
        case Errc::SessionNotFound:
        case Errc::FileNotFound:
            return 404;
        case Errc::NotAPcap:
        case Errc::TruncatedCapture:
        case Errc::InvalidArgument:
        case Errc::EmptyText:
        case Errc::EmptyIndex:
        case Errc::EmptyReference:
        case Errc::MalformedMac:
            return 400;
        case Errc::EmbedderUnavailable:
        case Errc::ChatUnavailable:
        case Errc::SearchUnavailable:
        case Errc::RerankerUnavailable:
        case Errc::ModelUnavailable:
        case Errc::AllProvidersFailed:
            return 503;
        default:
            return 500;
    }
}

std::string_view dependent_client(Errc code) {
    switch (code) {
        case Errc::EmbedderUnavailable: return "embedder";
        case Errc::ChatUnavailable: return "chat";
        case Errc::SearchUnavailable: return "search";
        case Errc::RerankerUnavailable: return "reranker";
        case Errc::ModelUnavailable: return "classifier";
        case Errc::AllProvidersFailed: return "threat-intel";
        default: return "";
    }
}

struct Service::Http {
    httplib::Server server;
    std::thread thread;
};

Service::Service(ServiceConfig cfg) : Service(cfg, make_clients(cfg)) {}

Service::Service(ServiceConfig cfg, ClientSet clients)
    : cfg_(std::move(cfg)),
      clients_(std::move(clients)),
      store_(cfg_.data_dir),
      audit_(cfg_.audit_file ? AuditLog(*cfg_.audit_file) : AuditLog()),
      http_(std::make_unique<Http>()) {
    fs::create_directories(cfg_.data_dir);
}

Service::~Service() { stop(); }

PipelineResult Service::ingest(const fs::path& pcap) {
    PipelineConfig pc;
    pc.oui_file = cfg_.oui_file;
    pc.enrich = cfg_.enrich;
    pc.intel = make_intel_config(cfg_);
    auto r = ingest_capture(pcap, store_, *clients_.embedder, *clients_.classifier, pc);
    return r;
}

std::shared_ptr<const SearchIndex> Service::index_for(const std::string& session_id) {
    {
        std::lock_guard lock(cache_mu_);
        auto it = cache_.find(session_id);
        if (it != cache_.end() && store_.has_session(session_id)) return it->second;
    }
    LoadedSession s = store_.load(session_id);
    if (s.dims != 0 && s.dims != clients_.embedder->dims())
        throw Error(Errc::InvalidArgument, "session " + session_id + " was embedded with " +
                                               s.manifest.value("embedder", std::string("another embedder")));
    auto idx = std::make_shared<const SearchIndex>(SearchIndex::from_session(s));
    std::lock_guard lock(cache_mu_);
    // forget evicted sessions
    for (auto it = cache_.begin(); it != cache_.end();)
        it = store_.has_session(it->first) ? std::next(it) : cache_.erase(it);
    cache_[session_id] = idx;
    return idx;
}

AgentRun Service::query(const std::string& session_id, const std::string& question,
                        std::optional<RetrievalMode> mode) {
    if (trim(question).empty()) throw Error(Errc::InvalidArgument, "question is empty");
    auto idx = index_for(session_id);
    AgentConfig cfg = cfg_.agent;
    if (mode) cfg.retrieval.mode = *mode;
    return answer(question,
                  AgentDeps{*idx, *clients_.embedder, *clients_.chat, clients_.search.get(), clients_.reranker.get(),
                            &audit_},
                  cfg);
}

std::string Service::report(const std::string& session_id) const {
    if (!store_.has_session(session_id) || session_id.find('/') != std::string::npos ||
        session_id.find("..") != std::string::npos)
        throw Error(Errc::SessionNotFound, "session not found: " + session_id);
    return read_file(store_.root() / session_id / "artifacts" / "report.txt");
}

Json Service::sessions() const {
    auto idx = store_.index();
    Json j;
    j["latest"] = idx.latest.empty() ? Json(nullptr) : Json(idx.latest);
    j["sessions"] = Json::array();
    for (const auto& e : idx.entries)
        j["sessions"].push_back({{"session_id", e.session_id},
                                 {"capture_hash", e.capture_hash},
                                 {"created_at", e.created_at},
                                 {"last_used_us", e.last_used_us},
                                 {"input_hashes", e.input_hashes}});
    return j;
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                std::string_view client = "") {
    Json body{{"error", code}, {"message", message}};
    if (!client.empty()) body["client"] = client;
    send_json(res, status, body);
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        send_error(res, http_status_for(e.code()), errc_name(e.code()), e.what(), dependent_client(e.code()));
    } catch (const Json::exception& e) {
        send_error(res, 400, "InvalidArgument", std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
    }
}

}  // namespace

void Service::routes() {
    auto& svr = http_->server;
    svr.set_payload_max_length(cfg_.upload_limit);

    svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, Json{{"status", "ok"}});
    });

    svr.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, sessions()); });
    });

    svr.Post("/captures", [this](const httplib::Request& req, httplib::Response& res,
                                 const httplib::ContentReader& reader) {
        guarded(res, [&] {
            if (req.has_header("Content-Length") &&
                std::strtoull(req.get_header_value("Content-Length").c_str(), nullptr, 10) > cfg_.upload_limit) {
                send_error(res, 413, "PayloadTooLarge", "upload exceeds the size limit");
                return;
            }
            std::random_device rd;
            fs::path upload = store_.root() / (".upload-" + std::to_string(rd()) + std::to_string(rd()) + ".pcap");
            struct Cleanup {
                fs::path p;
                ~Cleanup() {
                    std::error_code ec;
                    fs::remove(p, ec);
                }
            } cleanup{upload};
            std::ofstream out(upload, std::ios::binary);
            Sha256Stream hash;
            std::size_t bytes = 0;
            bool have_file = false;
            auto sink = [&](const char* data, std::size_t n) {
                out.write(data, static_cast<std::streamsize>(n));
                hash.update(std::string_view(data, n));
                bytes += n;
                return static_cast<bool>(out);
            };
            if (req.is_multipart_form_data()) {
                bool in_file = false;
                reader(
                    [&](const httplib::MultipartFormData& part) {
                        in_file = !have_file && (part.name == "file" || part.name == "pcap" || !part.filename.empty());
                        if (in_file) have_file = true;
                        return true;
                    },
                    [&](const char* data, std::size_t n) { return in_file ? sink(data, n) : true; });
            } else {
                have_file = true;
                reader([&](const char* data, std::size_t n) { return sink(data, n); });
            }
            out.close();
            if (!have_file || bytes == 0) throw Error(Errc::InvalidArgument, "no capture file in the request");
            std::string digest = hash.hex();
            auto r = ingest(upload);
            send_json(res, 200,
                      Json{{"session_id", r.ingest.session_id},
                           {"skipped", r.ingest.skipped},
                           {"chunk_count", r.ingest.chunk_count},
                           {"capture_hash", digest},
                           {"packets", r.packet_count},
                           {"flows", r.flow_count}});
        });
    });

    svr.Post("/sessions/:id/query", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.path_params.at("id");
            Json body = Json::parse(req.body);
            if (!body.is_object() || !body.contains("question") || !body["question"].is_string())
                throw Error(Errc::InvalidArgument, "body must be {\"question\": string, \"mode\"?: string}");
            std::optional<RetrievalMode> mode;
            if (body.contains("mode")) {
                if (!body["mode"].is_string()) throw Error(Errc::InvalidArgument, "mode must be a string");
                mode = parse_mode(body["mode"].get<std::string>());
                if (!mode) throw Error(Errc::InvalidArgument, "mode must be dense or hybrid");
            }
            AgentRun run = query(id, body["question"].get<std::string>(), mode);
            send_json(res, 200, Json{{"session_id", id}, {"answer", run.answer.to_json()}, {"bundle", run.bundle.to_json()}});
        });
    });

    svr.Get("/sessions/:id/report", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.path_params.at("id");
            send_json(res, 200, Json{{"session_id", id}, {"report", report(id)}});
        });
    });

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) send_error(res, 404, "NotFound", "no such route");
        else if (res.status == 413) send_error(res, 413, "PayloadTooLarge", "upload exceeds the size limit");
        else send_error(res, res.status, "HttpError", "request failed");
    });
}

bool Service::listen() {
    routes();
    if (cfg_.port == 0) {
        port_ = http_->server.bind_to_any_port(cfg_.host);
        if (port_ <= 0) return false;
        return http_->server.listen_after_bind();
    }
    port_ = cfg_.port;
    return http_->server.listen(cfg_.host, cfg_.port);
}

int Service::start_background() {
    routes();
    if (cfg_.port == 0) {
        port_ = http_->server.bind_to_any_port(cfg_.host);
    } else {
        port_ = http_->server.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
    }
    if (port_ <= 0) throw Error(Errc::IoError, "cannot bind " + cfg_.host);
    http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
    return port_;
}

void Service::stop() {
    if (!http_) return;
    http_->server.stop();
    if (http_->thread.joinable()) http_->thread.join();
}

}  // namespace iotlens
