#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iotlens/retrieval.hpp"

namespace iotlens {

struct AgentConfig {
    std::size_t max_steps = 3;
    double rerank_floor = 0.15;        // tau
    double faithfulness_floor = 0.25;  // theta
    std::string instructions = default_instructions();
    RetrievalConfig retrieval;

    static std::string default_instructions();
};

enum class SourceClass { CaptureGrounded, WebSourced, Mixed, Insufficient };

std::string_view source_class_name(SourceClass s);

struct SentenceVerdict {
    std::string sentence;
    bool supported = false;
    std::string best_chunk_id;
    double overlap = 0.0;
};

struct FaithfulnessVerdict {
    std::vector<SentenceVerdict> per_sentence;
    bool passed = true;
};

struct WebCitation {
    std::string url;
    std::string snippet;
};

struct AnswerRecord {
    std::string text;
    std::vector<std::string> cited_chunk_ids;
    SourceClass source_class = SourceClass::Insufficient;
    std::vector<WebCitation> web_citations;
    std::size_t steps_used = 0;
    FaithfulnessVerdict faithfulness;
    std::optional<std::size_t> tokens;  // reported by the chat client

    /// Enforces the source invariants: a capture-grounded record without
    /// citations, or a web-sourced one without web citations, becomes
    /// Insufficient.
    static AnswerRecord make(std::string text, SourceClass cls, std::vector<std::string> cited,
                             std::vector<WebCitation> web, std::size_t steps, FaithfulnessVerdict verdict);
    Json to_json() const;
};

/// Fixed sentence used whenever evidence is missing.
extern const char* const kUnavailableSentence;

enum class ActionKind { Answer, RefineRetrieval, WebLookup };

struct Action {
    ActionKind kind = ActionKind::Answer;
    std::string terms;   // RefineRetrieval: the expanded query terms
    std::string reason;  // human-readable rationale, logged
    bool absent_subject = false;  // Answer: the query names identifiers not in the capture
};

/// Identifier-like tokens of a query: IPv4/IPv6 addresses, uids, ports and
/// other numbers, and dotted names.
std::vector<std::string> query_identifiers(std::string_view query);
/// Lowercase protocol vocabulary tokens ("dns", "mqtt", "rst", ...).
bool is_protocol_token(std::string_view token);

/// Policy, first match wins:
///  1. query names IP/uid identifiers and none occurs in the corpus -> Answer (absent subject)
///  2. query names protocols, none in the corpus, and no IP/uid     -> WebLookup
///  3. top score >= tau                                              -> Answer
///  4. a query identifier, protocol token or capture term (flow,
///     packet, device, port, ...) occurs in the corpus              -> RefineRetrieval
///  5. otherwise                                                     -> WebLookup
Action plan(std::string_view query, const EvidenceBundle& bundle, const SearchIndex& index, const AgentConfig& cfg);

struct ChatReply {
    std::string text;
    std::optional<std::size_t> tokens;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// Throws ChatUnavailable.
    virtual ChatReply complete(const std::string& system, const std::string& user) = 0;
};

/// Deterministic drafting: stitches the context lines that share a content
/// token with the question, in rank order, or returns kUnavailableSentence.
class FixtureChat : public ChatClient {
public:
    explicit FixtureChat(std::size_t max_lines = 4) : max_lines_(max_lines) {}
    ChatReply complete(const std::string& system, const std::string& user) override;

private:
    std::size_t max_lines_;
};

/// POST {base}/chat {"system","user"} -> {"text", "tokens"?}.
class RemoteChat : public ChatClient {
public:
    explicit RemoteChat(std::string base_url, std::shared_ptr<HttpTransport> transport = default_transport());
    ChatReply complete(const std::string& system, const std::string& user) override;

private:
    Url base_;
    std::shared_ptr<HttpTransport> transport_;
};

class SearchClient {
public:
    virtual ~SearchClient() = default;
    /// Throws SearchUnavailable.
    virtual std::vector<WebCitation> search(const std::string& query) = 0;
};

/// JSON file {"<query>": [{"url","snippet"}, ...], ...}; lookup by exact
/// query, then case-insensitive.
class FixtureSearch : public SearchClient {
public:
    explicit FixtureSearch(const std::filesystem::path& file);
    explicit FixtureSearch(Json table) : table_(std::move(table)) {}
    std::vector<WebCitation> search(const std::string& query) override;

private:
    Json table_;
};

/// GET {base}/search?q=... -> {"results": [{"url","snippet"}]}.
class RemoteSearch : public SearchClient {
public:
    explicit RemoteSearch(std::string base_url, std::shared_ptr<HttpTransport> transport = default_transport());
    std::vector<WebCitation> search(const std::string& query) override;

private:
    Url base_;
    std::shared_ptr<HttpTransport> transport_;
};

/// The user message: "CONTEXT:" then one "[chunk_id] text" entry per ranked
/// chunk, then "QUESTION:" and the question.
std::string build_user_prompt(std::string_view query, const EvidenceBundle& bundle);

ChatReply retrieval_answer_tool(std::string_view query, const EvidenceBundle& bundle, ChatClient& chat,
                                const AgentConfig& cfg);

/// At most 3 results with snippets cut to 500 characters at a word boundary.
std::vector<WebCitation> web_lookup_tool(const std::string& query, SearchClient& search);
std::string truncate_at_word(std::string_view text, std::size_t limit);

std::vector<std::string> split_sentences(std::string_view text);
FaithfulnessVerdict faithfulness_check(std::string_view draft, const EvidenceBundle& bundle, const AgentConfig& cfg);

/// JSON-lines audit trail: {ts, session, step, tool, input_digest, outcome}.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::filesystem::path file) : file_(std::move(file)) {}

    void append(const std::string& session, std::size_t step, const std::string& tool, std::string_view input,
                const std::string& outcome);
    std::vector<Json> entries() const;

private:
    mutable std::mutex mu_;
    std::optional<std::filesystem::path> file_;
    std::vector<Json> entries_;
};

struct AgentDeps {
    const SearchIndex& index;
    Embedder& embedder;
    ChatClient& chat;
    SearchClient* search = nullptr;
    Reranker* reranker = nullptr;
    AuditLog* audit = nullptr;
};

struct AgentRun {
    AnswerRecord answer;
    EvidenceBundle bundle;  // the evidence behind the final answer
};

AgentRun answer(std::string_view query, AgentDeps deps, const AgentConfig& cfg);

}  // namespace iotlens
