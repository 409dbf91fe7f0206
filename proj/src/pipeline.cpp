#include "iotlens/pipeline.hpp"

#include <random>

#include "iotlens/protocol_logs.hpp"

namespace iotlens {

namespace fs = std::filesystem;

PipelineArtifacts build_artifacts(const fs::path& pcap, const fs::path& out_dir, Classifier& classifier,
                                  const PipelineConfig& cfg) {
    auto note = [&](const std::string& msg) {
        if (cfg.progress) cfg.progress(msg);
    };
    PipelineArtifacts a;
    a.dir = out_dir;
    fs::create_directories(out_dir);

    ParsedCapture parsed = parse_capture(pcap);
    a.packet_count = parsed.packets.size();
    a.truncated = parsed.capture.truncated;
    a.inputs.capture_hash = parsed.capture.content_hash;
    note("parsed " + std::to_string(a.packet_count) + " packets" + (a.truncated ? " (truncated capture)" : ""));

    std::string packet_lines;
    for (const auto& p : parsed.packets) packet_lines += packet_to_json_line(p) + "\n";
    a.inputs.packets = out_dir / "packets.jsonl";
    write_file_atomic(a.inputs.packets, packet_lines);

    std::string log_lines;
    for (const auto& e : flatten_logs(generate_protocol_logs(parsed.packets))) log_lines += e.to_json_line() + "\n";
    a.inputs.logs = out_dir / "logs.jsonl";
    write_file_atomic(a.inputs.logs, log_lines);

    FlowAssembly assembly = assemble_flows(parsed.packets);
    a.flow_count = assembly.flows.size();
    OuiTable oui;
    if (cfg.oui_file && fs::exists(*cfg.oui_file)) oui = OuiTable::load(*cfg.oui_file);
    annotate_vendors(assembly.flows, oui);
    note("assembled " + std::to_string(a.flow_count) + " flows");

    auto rows = extract_features(parsed.packets, assembly.flows);
    std::vector<Classification> labels;
    labels.reserve(rows.size());
    for (const auto& r : rows) labels.push_back(classify(textualize(r), classifier));
    a.predictions = out_dir / "predictions.csv";
    write_file_atomic(a.predictions, predictions_csv(labels));
    InterpretationReport report = build_report(rows, labels, parsed.packets);
    note("classified " + std::to_string(rows.size()) + " feature rows");

    if (cfg.enrich) {
        auto by_label = find_public_ips(report);
        std::set<IpAddr> ips = find_public_ips(assembly.flows);
        for (const auto& [label, set] : by_label) ips.insert(set.begin(), set.end());
        IntelClient client(cfg.intel);
        std::map<IpAddr, std::string> errors;
        auto intel = client.lookup_many(ips, &errors);
        a.intel_records = intel.size();
        apply_reputation(assembly.flows, intel);
        std::map<ClassLabel, std::vector<IntelRecord>> per_label;
        for (const auto& [label, set] : by_label)
            for (const auto& ip : set)
                if (auto it = intel.find(ip); it != intel.end()) per_label[label].push_back(it->second);
        report = annotate_report(std::move(report), per_label);
        note("threat intelligence for " + std::to_string(intel.size()) + " of " + std::to_string(ips.size()) +
             " public addresses");
    }

    a.inputs.flows = out_dir / "flows.txt";
    write_file_atomic(a.inputs.flows, render_flow_report(assembly, parsed.packets));
    a.inputs.report = out_dir / "report.txt";
    write_file_atomic(a.inputs.report, report.render());
    a.inputs.extras = {a.predictions};
    a.report = std::move(report);
    return a;
}

PipelineResult ingest_capture(const fs::path& pcap, CorpusStore& store, Embedder& embedder, Classifier& classifier,
                              const PipelineConfig& cfg) {
    fs::create_directories(store.root());
    std::random_device rd;
    fs::path work = store.root() / (".work-" + std::to_string(rd()) + std::to_string(rd()));
    struct Cleanup {
        fs::path p;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    } cleanup{work};

    PipelineArtifacts a = build_artifacts(pcap, work, classifier, cfg);
    PipelineResult r;
    r.packet_count = a.packet_count;
    r.flow_count = a.flow_count;
    r.truncated = a.truncated;
    r.ingest = store.ingest(a.inputs, embedder);
    if (cfg.progress)
        cfg.progress(r.ingest.skipped ? "already indexed as " + r.ingest.session_id
                                      : "indexed " + std::to_string(r.ingest.chunk_count) + " chunks as " +
                                            r.ingest.session_id);
    return r;
}

}  // namespace iotlens
