#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "iotlens/corpus.hpp"
#include "iotlens/enrichment.hpp"
#include "iotlens/features.hpp"
#include "iotlens/flows.hpp"

namespace iotlens {

struct PipelineConfig {
    std::optional<std::filesystem::path> oui_file;
    bool enrich = true;
    IntelConfig intel;  // Fixture mode by default
    std::function<void(const std::string&)> progress;
};

struct PipelineArtifacts {
    std::filesystem::path dir;
    IngestInputs inputs;  // packets, logs, flows, report, capture hash
    std::filesystem::path predictions;
    std::size_t packet_count = 0;
    std::size_t flow_count = 0;
    std::size_t intel_records = 0;
    bool truncated = false;
    InterpretationReport report;
};

/// pcap -> packets.jsonl, logs.jsonl, flows.txt, predictions.csv, report.txt
/// under `out_dir`.
PipelineArtifacts build_artifacts(const std::filesystem::path& pcap, const std::filesystem::path& out_dir,
                                  Classifier& classifier, const PipelineConfig& cfg);

struct PipelineResult {
    IngestResult ingest;
    std::size_t packet_count = 0;
    std::size_t flow_count = 0;
    bool truncated = false;
};

/// build_artifacts in a scratch directory under the store root, then ingest.
PipelineResult ingest_capture(const std::filesystem::path& pcap, CorpusStore& store, Embedder& embedder,
                              Classifier& classifier, const PipelineConfig& cfg);

}  // namespace iotlens
