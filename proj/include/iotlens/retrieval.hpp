#pragma once

#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "iotlens/corpus.hpp"
#include "iotlens/embed.hpp"
#include "iotlens/http.hpp"

namespace iotlens {

enum class RetrievalMode { DenseOnly, Hybrid };
enum class RerankKind { CrossEncoder, LexicalFallback, Off };

std::string_view mode_name(RetrievalMode m);
std::optional<RetrievalMode> parse_mode(std::string_view s);

struct RetrievalConfig {
    double alpha = 0.5;
    std::size_t k_dense = 20;
    std::size_t k_sparse = 20;
    std::size_t top_k = 8;
    RetrievalMode mode = RetrievalMode::Hybrid;
    RerankKind rerank = RerankKind::LexicalFallback;
    double bm25_k1 = 1.2;
    double bm25_b = 0.75;

    /// Throws InvalidArgument when alpha is outside [0,1] or top_k exceeds
    /// k_dense + k_sparse.
    void validate() const;
};

struct Candidate {
    std::string chunk_id;
    std::size_t index = 0;  // position in the searched corpus
    std::optional<double> dense_score;
    std::optional<double> sparse_score;
    bool keyword_hit = false;
    std::optional<double> fused_score;
    std::optional<double> rerank_score;
};

struct EvidenceBundle {
    std::string query;
    RetrievalMode mode = RetrievalMode::Hybrid;
    std::string session_id;
    std::vector<std::pair<Candidate, Chunk>> ranked;
    bool degraded = false;  // reranker was unavailable

    /// Rerank score, else fused, else dense score of the first entry.
    std::optional<double> top_score() const;
    Json to_json() const;
};

/// Lowercased tokens made of alphanumerics, '.' and ':'. Dots and colons
/// are stripped from token edges, and tokens holding a colon also yield
/// their colon-separated parts, so "10.0.0.2:80" matches "10.0.0.2".
std::vector<std::string> search_tokens(std::string_view text);

/// Okapi BM25 over pre-tokenized documents. Query terms are deduplicated.
class Bm25Index {
public:
    Bm25Index() = default;
    explicit Bm25Index(const std::vector<std::vector<std::string>>& docs);

    std::size_t size() const { return doc_len_.size(); }
    double score(const std::vector<std::string>& query_terms, std::size_t doc, double k1, double b) const;
    /// All documents with positive score, descending, ties by index.
    std::vector<std::pair<std::size_t, double>> search(const std::vector<std::string>& query_terms, double k1,
                                                       double b) const;

private:
    std::vector<std::unordered_map<std::string, std::size_t>> tf_;
    std::unordered_map<std::string, std::size_t> df_;
    std::vector<std::size_t> doc_len_;
    double avg_len_ = 0;
};

/// Read-only search structures over one session's chunks.
class SearchIndex {
public:
    SearchIndex(std::string session_id, std::vector<Chunk> chunks, std::vector<EmbeddingVector> vectors);
    static SearchIndex from_session(const LoadedSession& s);
    /// Embeds every chunk with `embedder` (tests and benchmarks).
    static SearchIndex build(std::string session_id, std::vector<Chunk> chunks, Embedder& embedder);

    const std::string& session_id() const { return session_id_; }
    const std::vector<Chunk>& chunks() const { return chunks_; }
    const std::vector<EmbeddingVector>& vectors() const { return vectors_; }
    const Bm25Index& bm25() const { return bm25_; }
    const std::vector<std::string>& tokens(std::size_t i) const { return tokens_[i]; }
    /// True when the token occurs in any chunk.
    bool in_vocabulary(const std::string& token) const { return vocab_.count(token) > 0; }

private:
    std::string session_id_;
    std::vector<Chunk> chunks_;
    std::vector<EmbeddingVector> vectors_;
    std::vector<std::vector<std::string>> tokens_;
    std::unordered_map<std::string, std::size_t> vocab_;
    Bm25Index bm25_;
};

std::vector<Candidate> bm25_search(std::string_view query, const SearchIndex& index, const RetrievalConfig& cfg);
std::vector<Candidate> dense_search(std::string_view query, const SearchIndex& index, const RetrievalConfig& cfg,
                                    Embedder& embedder);
std::vector<Candidate> keyword_fallback(std::string_view query, const SearchIndex& index);
std::vector<Candidate> fuse(const std::vector<Candidate>& dense, const std::vector<Candidate>& sparse,
                            const std::vector<Candidate>& fallback, const RetrievalConfig& cfg);

class Reranker {
public:
    virtual ~Reranker() = default;
    /// One score per text, higher is more relevant. Throws RerankerUnavailable.
    virtual std::vector<double> score(std::string_view query, const std::vector<std::string>& texts) = 0;
};

/// Token-set F1 between the query and each text.
class LexicalReranker : public Reranker {
public:
    std::vector<double> score(std::string_view query, const std::vector<std::string>& texts) override;
};

double token_set_f1(std::string_view query, std::string_view text);

/// POST {base}/rerank {"query","texts"} -> {"scores"}; at most
/// `max_in_flight` concurrent calls per client.
class RemoteCrossEncoder : public Reranker {
public:
    explicit RemoteCrossEncoder(std::string base_url, std::shared_ptr<HttpTransport> transport = default_transport(),
                                std::ptrdiff_t max_in_flight = 2);
    std::vector<double> score(std::string_view query, const std::vector<std::string>& texts) override;

private:
    Url base_;
    std::shared_ptr<HttpTransport> transport_;
    std::counting_semaphore<64> slots_;
};

/// Stable sort by rerank score. Texts are looked up through `index`.
std::vector<Candidate> rerank(std::string_view query, std::vector<Candidate> candidates, const SearchIndex& index,
                              Reranker& reranker);

/// `reranker` may be null when cfg.rerank is Off; LexicalFallback uses a
/// built-in LexicalReranker when null.
EvidenceBundle retrieve(std::string_view query, const SearchIndex& index, const RetrievalConfig& cfg,
                        Embedder& embedder, Reranker* reranker = nullptr);

}  // namespace iotlens
