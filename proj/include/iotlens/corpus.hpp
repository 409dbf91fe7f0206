#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iotlens/embed.hpp"
#include "iotlens/features.hpp"
#include "iotlens/http.hpp"
#include "iotlens/protocol_logs.hpp"

namespace iotlens {

enum class Modality { ProtocolLog, Report, FlowSummary, PacketView };
enum class Level { Session, Section, Flow, Segment };

std::string_view modality_name(Modality m);
std::string_view level_name(Level l);
std::optional<Modality> parse_modality(std::string_view s);

struct Chunk {
    std::string chunk_id;
    std::string text;
    Modality modality = Modality::Report;
    Level level = Level::Section;
    std::optional<std::string> source_uid;
    std::size_t seq = 0;

    Json to_json() const;
    static Chunk from_json(const Json& j);
};

/// CRLF/CR to LF, trailing whitespace stripped from every line, trailing
/// blank lines dropped.
std::string normalize_text(std::string_view text);

/// SHA-256 hex over (modality, normalized text).
std::string chunk_id_for(std::string_view text, Modality m);

/// Builds a chunk from raw text; empty (after normalization) gives nullopt.
std::optional<Chunk> make_chunk(std::string_view text, Modality m, Level level,
                                std::optional<std::string> source_uid, std::size_t seq);

std::vector<Chunk> chunk_protocol_logs(const std::vector<ProtocolEvent>& events);
std::vector<Chunk> chunk_report(const InterpretationReport& report);
/// Splits rendered report text at its "=== " / "--- " section headers.
std::vector<Chunk> chunk_report_text(std::string_view text);
/// Blocks separated by blank lines; the capture summary block comes first.
std::vector<Chunk> chunk_flows(std::string_view narratives);

struct SemanticChunkConfig {
    double breakpoint_pct = 95.0;
    std::size_t max_chunk_lines = 40;
};

/// Linear-interpolated percentile (pct in [0,100]) of the values.
double percentile(std::vector<double> values, double pct);

std::vector<Chunk> chunk_packets_semantic(const std::vector<std::string>& packet_lines, Embedder& embedder,
                                          const SemanticChunkConfig& cfg = {});

struct IndexEntry {
    std::string capture_hash;
    std::string session_id;
    std::int64_t created_at = 0;
    std::int64_t last_used_us = 0;
    std::vector<std::string> input_hashes;  // sorted
};

struct SessionIndexFile {
    std::vector<IndexEntry> entries;  // least recently used first
    std::string latest;

    Json to_json() const;
    static SessionIndexFile from_json(const Json& j);
};

/// The four artifacts produced from one capture.
struct IngestInputs {
    std::filesystem::path packets;  // JSON lines, one packet record per line
    std::filesystem::path logs;     // JSON lines, protocol events
    std::filesystem::path flows;    // narrative text
    std::filesystem::path report;   // enriched report text
    std::string capture_hash;       // of the source pcap; optional
    /// Copied into artifacts/ as well; not part of the skip guard.
    std::vector<std::filesystem::path> extras;
};

struct IngestResult {
    std::string session_id;
    bool skipped = false;
    std::size_t chunk_count = 0;
};

struct LoadedSession {
    std::string session_id;
    std::filesystem::path directory;
    std::vector<Chunk> chunks;
    std::vector<EmbeddingVector> vectors;
    std::size_t dims = 0;
    Json manifest;
};

class CorpusStore {
public:
    explicit CorpusStore(std::filesystem::path root, std::size_t retain = 3, SemanticChunkConfig chunking = {});

    /// Skip-guard, chunk, embed, persist, evict. The build happens in a
    /// temporary directory; a failure leaves the index and the tree as they
    /// were.
    IngestResult ingest(const IngestInputs& inputs, Embedder& embedder);

    SessionIndexFile index() const;
    std::optional<std::string> latest() const;
    bool has_session(const std::string& session_id) const;
    /// Throws SessionNotFound.
    LoadedSession load(const std::string& session_id) const;

    const std::filesystem::path& root() const { return root_; }

private:
    void save_index(const SessionIndexFile& idx) const;

    std::filesystem::path root_;
    std::size_t retain_;
    SemanticChunkConfig chunking_;
};

/// Build all chunks for the four artifacts, in modality order, deduplicated
/// by chunk_id.
std::vector<Chunk> build_chunks(const IngestInputs& inputs, Embedder& embedder, const SemanticChunkConfig& cfg);

}  // namespace iotlens
