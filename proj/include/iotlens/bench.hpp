#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iotlens/agent.hpp"
#include "iotlens/metrics.hpp"

namespace iotlens {

struct QAPair {
    std::string question;
    std::string reference_answer;
    std::string source_modality;  // packets | logs | flows | report
    std::string pcap_id;
};

/// JSON Lines; blank lines are skipped. Throws InvalidArgument on a record
/// with an empty question or reference.
std::vector<QAPair> load_qa_set(const std::filesystem::path& file);
std::vector<QAPair> parse_qa_set(std::string_view jsonl);

struct BenchRow {
    std::size_t qa_index = 0;
    RetrievalMode mode = RetrievalMode::Hybrid;
    std::string answer;
    SourceClass source_class = SourceClass::Insufficient;
    std::size_t tokens = 0;
    MetricReport metrics;
    ProfileReport profile;
};

struct ArmSummary {
    RetrievalMode mode = RetrievalMode::Hybrid;
    MetricReport mean;
    ProfileReport profile;  // whole-arm window
};

struct BenchResult {
    std::vector<BenchRow> rows;  // arm-major, then question order
    std::vector<ArmSummary> arms;

    std::string to_csv() const;
    /// Quality table (one column per arm) followed by the resource table.
    std::string to_markdown() const;
};

struct BenchDeps {
    const SearchIndex& index;
    Embedder& embedder;        // retrieval
    Embedder& score_embedder;  // BERTScore
    ChatClient& chat;
    SearchClient* search = nullptr;
    Reranker* reranker = nullptr;
    GpuProbe gpu = nullptr;
};

/// Runs every question under DenseOnly, then Hybrid. Token count is what the
/// chat client reported, else whitespace tokens of the answer.
BenchResult run_benchmark(const std::vector<QAPair>& qa, BenchDeps deps, const AgentConfig& cfg);

std::size_t whitespace_tokens(std::string_view text);

}  // namespace iotlens
