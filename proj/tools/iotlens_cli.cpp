// iotlens: capture ingest, question answering and benchmarking.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "iotlens/bench.hpp"
#include "iotlens/service.hpp"

namespace fs = std::filesystem;
using namespace iotlens;

namespace {

#ifndef IOTLENS_SHARE_DIR
#define IOTLENS_SHARE_DIR "."
#endif

// Relative resource paths are tried against the working directory first,
// then the install share directory.
fs::path resource(const std::string& rel) {
    fs::path p(rel);
    if (p.is_absolute() || fs::exists(p)) return p;
    fs::path shared = fs::path(IOTLENS_SHARE_DIR) / p;
    return fs::exists(shared) ? shared : p;
}

bool user_error(Errc c) {
    switch (c) {
        case Errc::SessionNotFound:
        case Errc::FileNotFound:
        case Errc::NotAPcap:
        case Errc::TruncatedCapture:
        case Errc::InvalidArgument:
        case Errc::EmptyIndex:
        case Errc::EmptyReference:
        case Errc::MalformedMac:
            return true;
        default:
            return false;
    }
}

struct Common {
    std::string data_dir = "iotlens-data";
    bool offline = false;
    std::string oui = "data/oui.csv";
    std::string intel_fixtures = "fixtures/intel";
    std::string search_fixture = "fixtures/search.json";
    std::string audit;
    bool no_enrich = false;
    double alpha = 0.5;
    std::size_t top_k = 8;
    std::size_t max_steps = 3;
    double tau = 0.15;
    double theta = 0.25;
};

ServiceConfig to_config(const Common& c) {
    ServiceConfig cfg;
    cfg.data_dir = c.data_dir;
    cfg.offline = c.offline;
    cfg.load_env();
    if (auto p = resource(c.oui); fs::exists(p)) cfg.oui_file = p;
    cfg.intel_fixture_dir = resource(c.intel_fixtures);
    if (auto p = resource(c.search_fixture); fs::exists(p)) cfg.search_fixture = p;
    if (!c.audit.empty()) cfg.audit_file = c.audit;
    cfg.enrich = !c.no_enrich;
    cfg.agent.retrieval.alpha = c.alpha;
    cfg.agent.retrieval.top_k = c.top_k;
    cfg.agent.max_steps = c.max_steps;
    cfg.agent.rerank_floor = c.tau;
    cfg.agent.faithfulness_floor = c.theta;
    cfg.agent.retrieval.validate();
    return cfg;
}

std::string resolve_session(Service& svc, const std::string& id) {
    if (id != "latest") return id;
    auto latest = svc.store().latest();
    if (!latest) throw Error(Errc::SessionNotFound, "session not found: no sessions yet");
    return *latest;
}

Service* g_serving = nullptr;

void on_signal(int) {
    if (g_serving) g_serving->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Turn packet captures into a searchable evidence corpus and answer questions about them."};
    app.require_subcommand(1);
    Common common;
    if (const char* d = std::getenv("IOTLENS_DATA_DIR"); d && *d) common.data_dir = d;
    app.add_option("--data-dir", common.data_dir, "Session store directory (env IOTLENS_DATA_DIR)");
    app.add_flag("--offline", common.offline, "Fixture clients only; no sockets beyond loopback");
    app.add_option("--oui", common.oui, "OUI vendor table (CSV prefix,vendor)");
    app.add_option("--intel-fixtures", common.intel_fixtures, "Threat-intel fixture directory");
    app.add_option("--search-fixture", common.search_fixture, "Canned web search results (JSON)");
    app.add_option("--audit-log", common.audit, "Append agent tool calls to this JSON-lines file");
    app.add_option("--alpha", common.alpha, "Dense weight in hybrid fusion")->check(CLI::Range(0.0, 1.0));
    app.add_option("--top-k", common.top_k, "Evidence chunks handed to the agent");
    app.add_option("--max-steps", common.max_steps, "Agent step budget")->check(CLI::PositiveNumber);
    app.add_option("--rerank-floor", common.tau, "Top score needed to answer without refining");
    app.add_option("--faithfulness-floor", common.theta, "Token overlap a sentence needs with its best chunk");

    auto* ingest = app.add_subcommand("ingest", "Process a pcap and index it; prints the session id");
    std::string pcap;
    ingest->add_option("pcap", pcap, "Classic pcap file")->required();
    ingest->add_flag("--no-enrich", common.no_enrich, "Skip threat-intelligence lookups");

    auto* query = app.add_subcommand("query", "Ask a question about a session; prints the answer as JSON");
    std::string session, question, mode = "hybrid";
    bool with_bundle = false;
    query->add_option("session", session, "Session id or 'latest'")->required();
    query->add_option("question", question, "Question text")->required();
    query->add_option("--mode", mode, "dense or hybrid")->check(CLI::IsMember({"dense", "hybrid"}));
    query->add_flag("--bundle", with_bundle, "Also print the evidence bundle");

    auto* report = app.add_subcommand("report", "Print a session's enriched report");
    report->add_option("session", session, "Session id or 'latest'")->required();

    auto* bench = app.add_subcommand("bench", "Compare dense and hybrid retrieval over a QA set");
    std::string qa_file, csv_out, md_out;
    bench->add_option("session", session, "Session id or 'latest'")->required();
    bench->add_option("--qa", qa_file, "QA set, JSON lines")->required()->check(CLI::ExistingFile);
    bench->add_option("--csv", csv_out, "Write per-question rows here");
    bench->add_option("--markdown", md_out, "Write the summary tables here");

    app.add_subcommand("sessions", "List indexed sessions, least recently used first");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--port", port, "Listen port (0 picks one)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        ServiceConfig cfg = to_config(common);
        cfg.host = host;
        cfg.port = port;
        Service svc(cfg);

        if (*ingest) {
            auto r = svc.ingest(pcap);
            if (r.truncated) std::cerr << "warning: capture is truncated; parsed up to the last whole frame\n";
            if (r.ingest.skipped) std::cerr << "already indexed\n";
            std::cout << r.ingest.session_id << "\n";
        } else if (*query) {
            auto run = svc.query(resolve_session(svc, session), question, parse_mode(mode));
            Json out = run.answer.to_json();
            if (with_bundle) out = Json{{"answer", out}, {"bundle", run.bundle.to_json()}};
            std::cout << out.dump(2) << "\n";
        } else if (*report) {
            std::cout << svc.report(resolve_session(svc, session));
        } else if (*bench) {
            auto id = resolve_session(svc, session);
            LoadedSession loaded = svc.store().load(id);
            SearchIndex index = SearchIndex::from_session(loaded);
            HashingEmbedder score_embedder;
            auto& c = svc.clients();
            BenchDeps deps{index, *c.embedder, score_embedder, *c.chat, c.search.get(), c.reranker.get(), nullptr};
            auto result = run_benchmark(load_qa_set(qa_file), deps, cfg.agent);
            if (!csv_out.empty()) write_file_atomic(csv_out, result.to_csv());
            std::string md = result.to_markdown();
            if (!md_out.empty()) write_file_atomic(md_out, md);
            std::cout << md;
        } else if (app.got_subcommand("sessions")) {
            std::cout << svc.sessions().dump(2) << "\n";
        } else if (*serve) {
            g_serving = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on " << host << ":" << port << " (data in " << cfg.data_dir.string() << ")\n";
            if (!svc.listen()) {
                std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
                return 2;
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return user_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
