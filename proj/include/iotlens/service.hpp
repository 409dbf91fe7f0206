#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "iotlens/agent.hpp"
#include "iotlens/pipeline.hpp"

namespace iotlens {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "iotlens-data";
    bool offline = true;
    std::size_t upload_limit = 256ull << 20;

    std::optional<std::filesystem::path> oui_file;
    std::filesystem::path intel_fixture_dir = "fixtures/intel";
    std::optional<std::filesystem::path> search_fixture;
    std::optional<std::filesystem::path> audit_file;
    bool enrich = true;

    // Endpoints used when offline is false; an empty one falls back to the
    // fixture client.
    std::string embedder_url, chat_url, reranker_url, search_url, classifier_url;
    std::string vt_api_key, abuseipdb_api_key;

    AgentConfig agent;

    /// IOTLENS_* endpoint variables plus VT_API_KEY / ABUSEIPDB_API_KEY.
    void load_env();
};

/// The clients behind one service or CLI run.
struct ClientSet {
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<ChatClient> chat;
    std::unique_ptr<SearchClient> search;  // may be null
    std::unique_ptr<Reranker> reranker;    // null: lexical fallback
    std::unique_ptr<Classifier> classifier;
};

/// offline=true yields fixture clients only and never a socket.
ClientSet make_clients(const ServiceConfig& cfg);
IntelConfig make_intel_config(const ServiceConfig& cfg);

struct QueryResult {
    AgentRun run;
};

/// The operations shared by the CLI verbs and the HTTP routes.
class Service {
public:
    explicit Service(ServiceConfig cfg);
    Service(ServiceConfig cfg, ClientSet clients);
    ~Service();

    PipelineResult ingest(const std::filesystem::path& pcap);
    /// Throws SessionNotFound, InvalidArgument and client errors.
    AgentRun query(const std::string& session_id, const std::string& question,
                   std::optional<RetrievalMode> mode = std::nullopt);
    std::string report(const std::string& session_id) const;
    Json sessions() const;

    CorpusStore& store() { return store_; }
    const ServiceConfig& config() const { return cfg_; }
    ClientSet& clients() { return clients_; }
    AuditLog& audit() { return audit_; }

    /// Blocks serving HTTP on cfg.host:cfg.port (port 0 picks a free one,
    /// see bound_port()).
    bool listen();
    /// Binds, then serves on a background thread. Returns the port.
    int start_background();
    int bound_port() const { return port_; }
    void stop();

private:
    std::shared_ptr<const SearchIndex> index_for(const std::string& session_id);
    void routes();

    ServiceConfig cfg_;
    ClientSet clients_;
    CorpusStore store_;
    AuditLog audit_;
    std::mutex cache_mu_;
    std::map<std::string, std::shared_ptr<const SearchIndex>> cache_;

    struct Http;
    std::unique_ptr<Http> http_;
    int port_ = 0;
};

/// HTTP status for an error code (400, 404, 503 or 500).
int http_status_for(Errc code);
/// The client behind an unavailable-class error, or "".
std::string_view dependent_client(Errc code);

}  // namespace iotlens
