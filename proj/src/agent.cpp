#include "iotlens/agent.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "iotlens/hash.hpp"

namespace iotlens {

const char* const kUnavailableSentence = "The provided context does not contain this information.";

std::string AgentConfig::default_instructions() {
    return "You answer questions about one network capture.\n"
           "1. Treat the CONTEXT passages as the primary evidence and prefer them over prior knowledge.\n"
           "2. Cite the bracketed chunk id of each passage you rely on.\n"
           "3. If the passages do not contain the answer, say that the information is unavailable.\n"
           "4. Use web results only for general or changing facts, and mark them as external.\n"
           "5. Do not generalize beyond what the cited passages state.\n";
}

std::string_view source_class_name(SourceClass s) {
    switch (s) {
        case SourceClass::CaptureGrounded: return "CaptureGrounded";
        case SourceClass::WebSourced: return "WebSourced";
        case SourceClass::Mixed: return "Mixed";
        case SourceClass::Insufficient: return "Insufficient";
    }
    return "Insufficient";
}

namespace {

const std::set<std::string>& stopwords() {
    static const std::set<std::string> s = {
        "the",   "and",   "for",    "with",   "from",  "this",  "that",  "these", "those", "what",
        "which", "who",   "whom",   "how",    "many",  "much",  "does",  "did",   "there", "their",
        "any",   "all",   "its",    "into",   "about", "than",  "then",  "not",   "yes",   "can",
        "could", "would", "should", "will",   "has",   "have",  "had",   "show",  "tell",  "list",
        "give",  "please", "capture", "are",  "was",   "were",  "been",  "being", "our",   "you",
        "your",  "they",  "them",   "when",   "where", "why",   "also",  "only",  "some",  "such",
        "provided", "context", "contain", "information", "observed", "seen", "between", "over", "per",
    };
    return s;
}

bool has_digit(std::string_view t) {
    return std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_uid(std::string_view t) {
    if (t.size() != 12) return false;
    bool digit = false, alpha = false;
    for (char c : t) {
        if (std::isdigit(static_cast<unsigned char>(c))) digit = true;
        else if (c >= 'a' && c <= 'z') alpha = true;
        else return false;
    }
    return digit && alpha;
}

bool is_ip(std::string_view t) {
    if (t.find('.') == std::string_view::npos && std::count(t.begin(), t.end(), ':') < 2) return false;
    if (t.find('.') != std::string_view::npos && std::count(t.begin(), t.end(), '.') != 3) return false;
    return IpAddr::parse(t).has_value();
}

/// Content tokens (length >= 3, not stopwords), stemmed.
std::set<std::string> content_tokens(std::string_view text) {
    std::set<std::string> out;
    for (const auto& t : search_tokens(text))
        if (t.size() >= 3 && !stopwords().count(t)) out.insert(light_stem(t));
    return out;
}

std::set<std::string> stemmed_tokens(std::string_view text) {
    std::set<std::string> out;
    for (const auto& t : search_tokens(text)) out.insert(light_stem(t));
    for (const auto& t : alnum_tokens(text)) out.insert(light_stem(t));
    return out;
}

/// Numbers and dotted names that a supported sentence must quote exactly.
std::vector<std::string> identifier_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& t : search_tokens(text))
        if (has_digit(t) || t.find('.') != std::string::npos) out.push_back(t);
    return out;
}

struct TermExpansion {
    std::initializer_list<const char*> triggers;
    const char* expansion;
};

const TermExpansion kExpansions[] = {
    {{"reset", "resets", "rst", "reject", "rejected", "refused"}, "RST reset"},
    {{"handshake", "handshakes", "syn"}, "SYN handshake"},
    {{"close", "closed", "fin", "teardown"}, "FIN close"},
    {{"dns", "lookup", "lookups", "resolve", "resolved"}, "DNS query"},
    {{"mqtt", "publish", "topic", "topics"}, "MQTT topic"},
    {{"modbus", "register", "registers", "coil", "coils"}, "Modbus unit"},
    {{"flow", "flows", "connection", "connections", "session", "sessions"}, "Flow"},
};

}  // namespace

AnswerRecord AnswerRecord::make(std::string text, SourceClass cls, std::vector<std::string> cited,
                                std::vector<WebCitation> web, std::size_t steps, FaithfulnessVerdict verdict) {
    AnswerRecord r;
    r.steps_used = steps;
    r.faithfulness = std::move(verdict);
    bool ok = true;
    if ((cls == SourceClass::CaptureGrounded || cls == SourceClass::Mixed) && cited.empty()) ok = false;
    if ((cls == SourceClass::WebSourced || cls == SourceClass::Mixed) && web.empty()) ok = false;
    if (cls == SourceClass::Insufficient || !ok) {
        r.source_class = SourceClass::Insufficient;
        r.text = text.empty() || !ok ? std::string("This information is unavailable in the capture evidence.") : text;
        return r;
    }
    r.text = std::move(text);
    r.source_class = cls;
    r.cited_chunk_ids = std::move(cited);
    r.web_citations = std::move(web);
    return r;
}

Json AnswerRecord::to_json() const {
    Json j;
    j["text"] = text;
    j["source_class"] = source_class_name(source_class);
    j["cited_chunk_ids"] = cited_chunk_ids;
    j["web_citations"] = Json::array();
    for (const auto& w : web_citations) j["web_citations"].push_back({{"url", w.url}, {"snippet", w.snippet}});
    j["steps_used"] = steps_used;
    Json f;
    f["passed"] = faithfulness.passed;
    f["per_sentence"] = Json::array();
    for (const auto& s : faithfulness.per_sentence)
        f["per_sentence"].push_back({{"sentence", s.sentence},
                                     {"supported", s.supported},
                                     {"best_chunk_id", s.best_chunk_id},
                                     {"overlap", s.overlap}});
    j["faithfulness"] = f;
    j["tokens"] = tokens ? Json(*tokens) : Json(nullptr);
    return j;
}

std::vector<std::string> query_identifiers(std::string_view query) { return identifier_tokens(query); }

namespace {

bool is_domain_term(std::string_view token) {
    static const std::set<std::string, std::less<>> d = {
        "flow",   "flows",   "packet",  "packets", "device", "devices", "host",    "hosts",
        "port",   "ports",   "traffic", "session", "sessions", "connection", "connections", "bytes",
        "vendor", "vendors", "topic",   "topics",  "query",   "queries", "unit",    "signature",
        "reset",  "resets",  "attack",  "attacks", "duration", "protocol", "protocols",
    };
    return d.count(token) > 0;
}

}  // namespace

bool is_protocol_token(std::string_view token) {
    static const std::set<std::string, std::less<>> p = {
        "tcp", "udp", "icmp", "dns", "http", "https", "mqtt", "modbus", "tls", "ssl",
        "syn", "ack", "fin", "rst", "psh", "urg", "ttl", "ipv4", "ipv6", "handshake",
    };
    return p.count(token) > 0;
}

Action plan(std::string_view query, const EvidenceBundle& bundle, const SearchIndex& index, const AgentConfig& cfg) {
    auto tokens = search_tokens(query);
    std::vector<std::string> subjects;
    for (const auto& t : tokens)
        if (is_ip(t) || is_uid(t)) subjects.push_back(t);
    if (!subjects.empty() &&
        std::none_of(subjects.begin(), subjects.end(), [&](const std::string& t) { return index.in_vocabulary(t); })) {
        Action a;
        a.kind = ActionKind::Answer;
        a.absent_subject = true;
        a.reason = "query names " + subjects.front() + ", which does not occur in the capture";
        return a;
    }

    std::vector<std::string> protocols;
    for (const auto& t : tokens)
        if (is_protocol_token(t)) protocols.push_back(t);
    if (subjects.empty() && !protocols.empty() &&
        std::none_of(protocols.begin(), protocols.end(), [&](const std::string& t) { return index.in_vocabulary(t); })) {
        Action a;
        a.kind = ActionKind::WebLookup;
        a.reason = "query is about " + protocols.front() + ", which does not occur in the capture";
        return a;
    }

    auto top = bundle.top_score();
    if (top && *top >= cfg.rerank_floor) {
        Action a;
        a.kind = ActionKind::Answer;
        a.reason = "top score " + format_number(*top) + " meets the floor";
        return a;
    }

    std::vector<std::string> anchors;
    for (const auto& t : tokens)
        if ((has_digit(t) || t.find('.') != std::string::npos || is_protocol_token(t) || is_domain_term(t)) &&
            index.in_vocabulary(t) &&
            std::find(anchors.begin(), anchors.end(), t) == anchors.end())
            anchors.push_back(t);
    if (!anchors.empty()) {
        std::vector<std::string> terms;
        std::set<std::string> qset(tokens.begin(), tokens.end());
        for (const auto& e : kExpansions)
            if (std::any_of(e.triggers.begin(), e.triggers.end(), [&](const char* t) { return qset.count(t) > 0; }))
                terms.push_back(e.expansion);
        for (const auto& a : anchors) terms.push_back(a);
        Action a;
        a.kind = ActionKind::RefineRetrieval;
        std::string joined;
        for (const auto& t : terms) joined += (joined.empty() ? "" : " ") + t;
        a.terms = joined;
        a.reason = "weak evidence for a capture-scoped query";
        return a;
    }

    Action a;
    a.kind = ActionKind::WebLookup;
    a.reason = "query has no capture-specific terms";
    return a;
}

// ---------------------------------------------------------------- chat

std::string build_user_prompt(std::string_view query, const EvidenceBundle& bundle) {
    std::string out = "CONTEXT:\n";
    for (const auto& [c, chunk] : bundle.ranked) out += "[" + c.chunk_id + "] " + chunk.text + "\n\n";
    out += "QUESTION:\n";
    out += query;
    out += "\n";
    return out;
}

namespace {

struct ParsedPrompt {
    std::vector<std::pair<std::string, std::vector<std::string>>> context;
    std::string question;
};

bool is_entry_header(const std::string& line, std::string& id, std::string& rest) {
    if (line.size() < 2 || line[0] != '[') return false;
    auto close = line.find(']');
    if (close == std::string::npos || close < 2) return false;
    for (std::size_t i = 1; i < close; ++i)
        if (!std::isxdigit(static_cast<unsigned char>(line[i]))) return false;
    id = line.substr(1, close - 1);
    rest = close + 2 <= line.size() ? line.substr(close + 2) : "";
    return true;
}

ParsedPrompt parse_prompt(const std::string& user) {
    ParsedPrompt p;
    std::istringstream in(user);
    std::string line;
    enum { None, Context, Question } state = None;
    while (std::getline(in, line)) {
        if (line == "CONTEXT:") {
            state = Context;
            continue;
        }
        if (line == "QUESTION:") {
            state = Question;
            continue;
        }
        if (state == Context) {
            std::string id, rest;
            if (is_entry_header(line, id, rest)) {
                p.context.push_back({id, {}});
                if (!rest.empty()) p.context.back().second.push_back(rest);
            } else if (!p.context.empty() && !trim(line).empty()) {
                p.context.back().second.push_back(line);
            }
        } else if (state == Question) {
            p.question += (p.question.empty() ? "" : "\n") + line;
        }
    }
    return p;
}

}  // namespace

ChatReply FixtureChat::complete(const std::string&, const std::string& user) {
    ParsedPrompt p = parse_prompt(user);
    auto want = content_tokens(p.question);
    std::vector<std::string> picked;
    for (const auto& [id, lines] : p.context) {
        for (const auto& line : lines) {
            if (picked.size() >= max_lines_) break;
            auto have = stemmed_tokens(line);
            bool hit = std::any_of(want.begin(), want.end(), [&](const std::string& t) { return have.count(t) > 0; });
            if (hit && std::find(picked.begin(), picked.end(), line) == picked.end()) picked.push_back(line);
        }
    }
    ChatReply r;
    if (picked.empty()) {
        r.text = kUnavailableSentence;
    } else {
        for (std::size_t i = 0; i < picked.size(); ++i) r.text += (i ? "\n" : "") + picked[i];
    }
    r.tokens = search_tokens(r.text).size();
    return r;
}

RemoteChat::RemoteChat(std::string base_url, std::shared_ptr<HttpTransport> transport)
    : base_(Url::parse(base_url)), transport_(std::move(transport)) {}

ChatReply RemoteChat::complete(const std::string& system, const std::string& user) {
    ChatReply r;
    try {
        auto reply = post_json(*transport_, base_.join("/chat"), Json{{"system", system}, {"user", user}}, std::chrono::seconds(120));
        r.text = reply.at("text").get<std::string>();
        if (reply.contains("tokens") && reply["tokens"].is_number_integer()) r.tokens = reply["tokens"].get<std::size_t>();
    } catch (const std::exception& e) {
        throw Error(Errc::ChatUnavailable, std::string("chat: ") + e.what());
    }
    return r;
}

ChatReply retrieval_answer_tool(std::string_view query, const EvidenceBundle& bundle, ChatClient& chat,
                                const AgentConfig& cfg) {
    if (bundle.ranked.empty()) return ChatReply{kUnavailableSentence, std::nullopt};
    return chat.complete(cfg.instructions, build_user_prompt(query, bundle));
}

// ---------------------------------------------------------------- search

FixtureSearch::FixtureSearch(const std::filesystem::path& file) {
    try {
        table_ = Json::parse(read_file(file));
    } catch (const Json::exception& e) {
        throw Error(Errc::SearchUnavailable, "bad search fixture: " + std::string(e.what()));
    }
}

namespace {

std::vector<WebCitation> citations_from(const Json& arr) {
    std::vector<WebCitation> out;
    if (!arr.is_array()) return out;
    for (const auto& r : arr) {
        if (!r.is_object()) continue;
        out.push_back({r.value("url", std::string()), r.value("snippet", std::string())});
    }
    return out;
}

}  // namespace

std::vector<WebCitation> FixtureSearch::search(const std::string& query) {
    if (table_.is_object()) {
        if (table_.contains(query)) return citations_from(table_[query]);
        std::string q = to_lower(trim(query));
        for (const auto& [k, v] : table_.items())
            if (to_lower(trim(k)) == q) return citations_from(v);
    }
    throw Error(Errc::SearchUnavailable, "no search fixture for query");
}

RemoteSearch::RemoteSearch(std::string base_url, std::shared_ptr<HttpTransport> transport)
    : base_(Url::parse(base_url)), transport_(std::move(transport)) {}

std::vector<WebCitation> RemoteSearch::search(const std::string& query) {
    std::string q;
    for (unsigned char c : query) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            q.push_back(static_cast<char>(c));
        } else {
            char buf[4];
            std::snprintf(buf, sizeof(buf), "%%%02X", c);
            q += buf;
        }
    }
    try {
        return citations_from(get_json(*transport_, base_.join("/search?q=" + q)).at("results"));
    } catch (const std::exception& e) {
        throw Error(Errc::SearchUnavailable, std::string("search: ") + e.what());
    }
}

std::string truncate_at_word(std::string_view text, std::size_t limit) {
    if (text.size() <= limit) return std::string(text);
    std::size_t cut = limit;
    // cut at the last whitespace that keeps the result within the limit
    while (cut > 0 && !std::isspace(static_cast<unsigned char>(text[cut]))) --cut;
    if (cut == 0) cut = limit;
    return trim(text.substr(0, cut));
}

std::vector<WebCitation> web_lookup_tool(const std::string& query, SearchClient& search) {
    auto results = search.search(query);
    if (results.size() > 3) results.resize(3);
    for (auto& r : results) r.snippet = truncate_at_word(r.snippet, 500);
    return results;
}

// ---------------------------------------------------------------- faithfulness

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        auto t = trim(cur);
        if (!t.empty()) out.push_back(t);
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\n') {
            flush();
            continue;
        }
        cur.push_back(c);
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n'))
            flush();
    }
    flush();
    return out;
}

FaithfulnessVerdict faithfulness_check(std::string_view draft, const EvidenceBundle& bundle, const AgentConfig& cfg) {
    FaithfulnessVerdict v;
    std::vector<std::set<std::string>> chunk_tokens;
    std::set<std::string> all_raw;
    for (const auto& [c, chunk] : bundle.ranked) {
        chunk_tokens.push_back(stemmed_tokens(chunk.text));
        for (const auto& t : search_tokens(chunk.text)) all_raw.insert(t);
    }
    for (const auto& sentence : split_sentences(draft)) {
        SentenceVerdict sv;
        sv.sentence = sentence;
        auto content = content_tokens(sentence);
        auto ids = identifier_tokens(sentence);
        if (content.empty() && ids.empty()) {
            sv.supported = true;  // boilerplate
            v.per_sentence.push_back(sv);
            continue;
        }
        for (std::size_t i = 0; i < chunk_tokens.size(); ++i) {
            std::size_t hit = 0;
            for (const auto& t : content) hit += chunk_tokens[i].count(t);
            double overlap = content.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(content.size());
            if (overlap > sv.overlap || sv.best_chunk_id.empty()) {
                sv.overlap = overlap;
                sv.best_chunk_id = bundle.ranked[i].first.chunk_id;
            }
        }
        bool ids_ok = std::all_of(ids.begin(), ids.end(), [&](const std::string& t) { return all_raw.count(t) > 0; });
        sv.supported = !chunk_tokens.empty() && ids_ok && sv.overlap >= cfg.faithfulness_floor;
        if (!sv.supported) v.passed = false;
        v.per_sentence.push_back(sv);
    }
    return v;
}

// ---------------------------------------------------------------- audit

void AuditLog::append(const std::string& session, std::size_t step, const std::string& tool, std::string_view input,
                      const std::string& outcome) {
    Json j;
    auto now = std::chrono::system_clock::now().time_since_epoch();
    j["ts"] = format_ts(std::chrono::duration_cast<std::chrono::microseconds>(now).count());
    j["session"] = session;
    j["step"] = step;
    j["tool"] = tool;
    j["input_digest"] = sha256_hex(input).substr(0, 16);
    j["outcome"] = outcome;
    std::lock_guard lock(mu_);
    entries_.push_back(j);
    if (file_) {
        std::ofstream out(*file_, std::ios::app);
        out << j.dump() << "\n";
    }
}

std::vector<Json> AuditLog::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

// ---------------------------------------------------------------- loop

AgentRun answer(std::string_view query, AgentDeps deps, const AgentConfig& cfg) {
    const std::string q(query);
    const std::string& session = deps.index.session_id();
    auto log = [&](std::size_t step, const std::string& tool, std::string_view input, const std::string& outcome) {
        if (deps.audit) deps.audit->append(session, step, tool, input, outcome);
    };
    RetrievalConfig rcfg = cfg.retrieval;
    EvidenceBundle bundle = retrieve(q, deps.index, rcfg, deps.embedder, deps.reranker);
    std::string current = q;
    bool refined = false, revised = false;
    std::size_t max_steps = std::max<std::size_t>(1, cfg.max_steps);
    FaithfulnessVerdict last_verdict;
    std::optional<std::size_t> tokens;

    auto insufficient = [&](std::size_t steps, const std::string& why) {
        AgentRun run{AnswerRecord::make("This information is unavailable in the capture evidence: " + why + ".",
                                        SourceClass::Insufficient, {}, {}, steps, last_verdict),
                     bundle};
        run.answer.tokens = tokens;
        return run;
    };

    for (std::size_t step = 1; step <= max_steps; ++step) {
        Action action = plan(current, bundle, deps.index, cfg);
        if (action.kind == ActionKind::RefineRetrieval && refined) action.kind = ActionKind::Answer;

        if (action.kind == ActionKind::RefineRetrieval) {
            refined = true;
            current = q + " " + action.terms;
            bundle = retrieve(current, deps.index, rcfg, deps.embedder, deps.reranker);
            log(step, "refine_retrieval", current, "retrieved " + std::to_string(bundle.ranked.size()) + " chunks");
            continue;
        }

        if (action.kind == ActionKind::WebLookup) {
            if (!deps.search) {
                log(step, "web_lookup", q, "no search client configured");
                return insufficient(step, "the question is outside the capture and web lookup is not configured");
            }
            try {
                auto results = web_lookup_tool(q, *deps.search);
                log(step, "web_lookup", q, std::to_string(results.size()) + " results");
                if (results.empty()) return insufficient(step, "web lookup returned no results");
                std::string text = "Web sources (not derived from the capture):";
                for (std::size_t i = 0; i < results.size(); ++i)
                    text += "\n[" + std::to_string(i + 1) + "] " + results[i].snippet + " (" + results[i].url + ")";
                AgentRun run{AnswerRecord::make(text, SourceClass::WebSourced, {}, results, step, {}), bundle};
                return run;
            } catch (const Error& e) {
                if (e.code() != Errc::SearchUnavailable) throw;
                log(step, "web_lookup", q, std::string("unavailable: ") + e.what());
                return insufficient(step, "web lookup is unavailable");
            }
        }

        if (action.absent_subject) {
            log(step, "retrieval_answer", current, "skipped: " + action.reason);
            return insufficient(step, action.reason);
        }
        if (bundle.ranked.empty()) {
            log(step, "retrieval_answer", current, "no evidence");
            return insufficient(step, "no evidence was retrieved");
        }

        ChatReply draft = retrieval_answer_tool(q, bundle, deps.chat, cfg);
        if (draft.tokens) tokens = tokens.value_or(0) + *draft.tokens;
        last_verdict = faithfulness_check(draft.text, bundle, cfg);
        bool empty = trim(draft.text).empty() || trim(draft.text) == kUnavailableSentence;
        log(step, "retrieval_answer", current,
            empty ? "no answer in context" : (last_verdict.passed ? "draft supported" : "draft unsupported"));
        if (empty) return insufficient(step, "the retrieved passages do not answer the question");

        if (last_verdict.passed) {
            std::vector<std::string> cited;
            for (const auto& [c, chunk] : bundle.ranked)
                for (const auto& s : last_verdict.per_sentence)
                    if (s.supported && s.best_chunk_id == c.chunk_id &&
                        std::find(cited.begin(), cited.end(), c.chunk_id) == cited.end())
                        cited.push_back(c.chunk_id);
            AgentRun run{AnswerRecord::make(draft.text, SourceClass::CaptureGrounded, cited, {}, step, last_verdict),
                         bundle};
            run.answer.tokens = tokens;
            return run;
        }
        if (revised) return insufficient(step, "the drafted answer was not supported by the evidence");
        revised = true;
        // One revision: widen the evidence and draft again.
        rcfg.top_k = std::min(rcfg.top_k * 2, rcfg.k_dense + rcfg.k_sparse);
        bundle = retrieve(current, deps.index, rcfg, deps.embedder, deps.reranker);
    }
    return insufficient(max_steps, "the step budget was exhausted");
}

}  // namespace iotlens
