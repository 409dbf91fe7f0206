#include <gtest/gtest.h>

#include <random>
#include <set>

#include "iotlens/agent.hpp"
#include "test_support.hpp"

using namespace iotlens;
using namespace iotlens::testing;

namespace {

const std::vector<std::string> kTexts = {
    "Flow abc123def456: 10.0.0.2:49152 <-> 10.0.0.1:80 (TCP)\nVolume: 3 packets, 162 bytes (pkt_count=3, "
    "byte_count=162)\nSignature: CompleteHandshake (flags SYN > SYN,ACK > ACK)",
    "Flow zz9988aa7766: 10.0.0.9:50000 <-> 10.0.0.1:502 (TCP)\nVolume: 2 packets, 120 bytes\nSignature: "
    "RejectedOnConnect (flags SYN > RST,ACK)",
    "Flow qq1122ww3344: 10.0.0.3:5353 <-> 10.0.0.53:53 (UDP)\nApplication cues: DNS query sensor.local",
};

SearchIndex corpus() {
    HashingEmbedder e;
    return SearchIndex::build("sess-1", text_chunks(kTexts), e);
}

EvidenceBundle bundle_with(const SearchIndex& index, std::vector<std::size_t> which, std::optional<double> score) {
    EvidenceBundle b;
    b.session_id = index.session_id();
    for (auto i : which) {
        Candidate c;
        c.chunk_id = index.chunks()[i].chunk_id;
        c.index = i;
        c.rerank_score = score;
        b.ranked.push_back({c, index.chunks()[i]});
    }
    return b;
}

Json search_table() {
    return Json::parse(R"({
      "What is the default MQTT port?": [
        {"url": "https://mqtt.example/docs", "snippet": "MQTT uses TCP port 1883, and 8883 over TLS."},
        {"url": "https://iana.example/ports", "snippet": "Port 1883 is registered for MQTT."}
      ]
    })");
}

struct Env {
    SearchIndex index = corpus();
    HashingEmbedder embedder;
    FixtureChat chat;
    FixtureSearch search{search_table()};
    AuditLog audit;
    AgentConfig cfg;

    AgentRun ask(const std::string& q, ChatClient* c = nullptr, SearchClient* s = nullptr) {
        return answer(q, AgentDeps{index, embedder, c ? *c : chat, s ? s : &search, nullptr, &audit}, cfg);
    }
};

}  // namespace

TEST(Plan, HighTopScoreAnswers) {
    auto index = corpus();
    AgentConfig cfg;
    auto a = plan("how many packets", bundle_with(index, {0}, 0.8), index, cfg);
    EXPECT_EQ(a.kind, ActionKind::Answer);
    EXPECT_FALSE(a.absent_subject);
}

TEST(Plan, GeneralQuestionGoesToWeb) {
    auto index = corpus();
    AgentConfig cfg;
    auto a = plan("What is the default MQTT port?", bundle_with(index, {0}, 0.01), index, cfg);
    EXPECT_EQ(a.kind, ActionKind::WebLookup);
    // a lexically close chunk does not make an absent protocol capture-scoped
    EXPECT_EQ(plan("What is the default MQTT port?", bundle_with(index, {0}, 0.9), index, cfg).kind,
              ActionKind::WebLookup);
    EXPECT_EQ(plan("is mqtt or tcp used", bundle_with(index, {0}, 0.9), index, cfg).kind, ActionKind::Answer);
}

TEST(Plan, CaptureIdentifierRefines) {
    auto index = corpus();
    AgentConfig cfg;
    auto a = plan("resets from 10.0.0.9", bundle_with(index, {1}, 0.01), index, cfg);
    EXPECT_EQ(a.kind, ActionKind::RefineRetrieval);
    EXPECT_NE(a.terms.find("RST reset"), std::string::npos) << a.terms;
    EXPECT_NE(a.terms.find("10.0.0.9"), std::string::npos) << a.terms;
}

TEST(Plan, AbsentAddressIsAnsweredAsAbsent) {
    auto index = corpus();
    AgentConfig cfg;
    auto a = plan("what did 192.168.77.5 send?", bundle_with(index, {0}, 0.9), index, cfg);
    EXPECT_EQ(a.kind, ActionKind::Answer);
    EXPECT_TRUE(a.absent_subject);
    EXPECT_NE(a.reason.find("192.168.77.5"), std::string::npos);
}

TEST(Prompt, ListsChunksInRankOrder) {
    auto index = corpus();
    auto b = bundle_with(index, {2, 0}, 0.5);
    auto p = build_user_prompt("how many packets?", b);
    ASSERT_EQ(p.rfind("CONTEXT:\n[" + index.chunks()[2].chunk_id + "] ", 0), 0u);
    auto second = p.find("[" + index.chunks()[0].chunk_id + "] ");
    auto question = p.find("QUESTION:\nhow many packets?\n");
    ASSERT_NE(second, std::string::npos);
    ASSERT_NE(question, std::string::npos);
    EXPECT_LT(second, question);
}

TEST(FixtureChat, QuotesMatchingContextLines) {
    auto index = corpus();
    FixtureChat chat;
    AgentConfig cfg;
    auto r = retrieval_answer_tool("how many packets", bundle_with(index, {0}, 0.5), chat, cfg);
    EXPECT_NE(r.text.find("pkt_count=3"), std::string::npos) << r.text;
    ASSERT_TRUE(r.tokens.has_value());
    EXPECT_GT(*r.tokens, 0u);
}

TEST(FixtureChat, EmptyBundleGivesUnavailableSentence) {
    auto index = corpus();
    FixtureChat chat;
    AgentConfig cfg;
    EXPECT_EQ(retrieval_answer_tool("how many packets", EvidenceBundle{}, chat, cfg).text, kUnavailableSentence);
    EXPECT_EQ(chat.complete("", "CONTEXT:\n[ab] nothing relevant\nQUESTION:\nzebra?\n").text, kUnavailableSentence);
}

TEST(WebLookupTool, CapsResultsAndSnippets) {
    std::string long_snippet;
    for (int i = 0; i < 200; ++i) long_snippet += "word" + std::to_string(i) + " ";
    Json table = Json::object();
    table["q"] = Json::array();
    for (int i = 0; i < 5; ++i) table["q"].push_back({{"url", "https://e.example/" + std::to_string(i)}, {"snippet", long_snippet}});
    FixtureSearch s(table);
    auto r = web_lookup_tool("q", s);
    ASSERT_EQ(r.size(), 3u);
    for (const auto& c : r) {
        EXPECT_LE(c.snippet.size(), 500u);
        EXPECT_EQ(long_snippet.rfind(c.snippet, 0), 0u);
        EXPECT_EQ(long_snippet[c.snippet.size()], ' ');
    }
    EXPECT_EQ(web_lookup_tool("Q", s).size(), 3u);
    EXPECT_THROW(web_lookup_tool("other", s), Error);
}

TEST(WebLookupTool, TruncateAtWord) {
    EXPECT_EQ(truncate_at_word("short", 500), "short");
    EXPECT_EQ(truncate_at_word("alpha beta gamma", 12), "alpha beta");
    EXPECT_EQ(truncate_at_word("abcdefghij", 4), "abcd");
}

TEST(Faithfulness, VerbatimPassesInventedAddressFails) {
    auto index = corpus();
    AgentConfig cfg;
    auto b = bundle_with(index, {0, 1}, 0.5);
    auto ok = faithfulness_check("Volume: 3 packets, 162 bytes (pkt_count=3, byte_count=162)", b, cfg);
    EXPECT_TRUE(ok.passed);
    ASSERT_EQ(ok.per_sentence.size(), 1u);
    EXPECT_EQ(ok.per_sentence[0].best_chunk_id, index.chunks()[0].chunk_id);

    auto bad = faithfulness_check("The flow to 9.9.9.9 carried 3 packets.", b, cfg);
    EXPECT_FALSE(bad.passed);
    EXPECT_FALSE(bad.per_sentence[0].supported);

    EXPECT_TRUE(faithfulness_check("", b, cfg).passed);
    EXPECT_FALSE(faithfulness_check("Volume: 3 packets.", EvidenceBundle{}, cfg).passed);
}

TEST(Faithfulness, SplitsSentences) {
    EXPECT_EQ(split_sentences("One. Two!\nThree 10.0.0.1 ok? "),
              (std::vector<std::string>{"One.", "Two!", "Three 10.0.0.1 ok?"}));
    EXPECT_EQ(split_sentences("Address 10.0.0.1.5 stays"), (std::vector<std::string>{"Address 10.0.0.1.5 stays"}));
}

TEST(AnswerRecord, GroundedWithoutCitationsIsDemoted) {
    auto r = AnswerRecord::make("claim", SourceClass::CaptureGrounded, {}, {}, 1, {});
    EXPECT_EQ(r.source_class, SourceClass::Insufficient);
    auto w = AnswerRecord::make("claim", SourceClass::WebSourced, {}, {}, 1, {});
    EXPECT_EQ(w.source_class, SourceClass::Insufficient);
    auto ok = AnswerRecord::make("claim", SourceClass::CaptureGrounded, {"ab"}, {}, 1, {});
    EXPECT_EQ(ok.source_class, SourceClass::CaptureGrounded);
    auto j = ok.to_json();
    EXPECT_EQ(j["source_class"], "CaptureGrounded");
    EXPECT_EQ(j["cited_chunk_ids"], Json::array({"ab"}));
}

TEST(Agent, GroundedAnswerCitesChunks) {
    Env env;
    auto run = env.ask("how many packets did flow abc123def456 carry?");
    EXPECT_EQ(run.answer.source_class, SourceClass::CaptureGrounded) << run.answer.text;
    EXPECT_NE(run.answer.text.find("pkt_count=3"), std::string::npos);
    ASSERT_FALSE(run.answer.cited_chunk_ids.empty());
    EXPECT_EQ(run.answer.cited_chunk_ids[0], env.index.chunks()[0].chunk_id);
    EXPECT_GE(run.answer.steps_used, 1u);
    EXPECT_LE(run.answer.steps_used, env.cfg.max_steps);
    std::set<std::string> bundle_ids;
    for (const auto& [c, chunk] : run.bundle.ranked) bundle_ids.insert(c.chunk_id);
    for (const auto& id : run.answer.cited_chunk_ids) EXPECT_TRUE(bundle_ids.count(id)) << id;
}

TEST(Agent, AbsentDeviceIsInsufficient) {
    Env env;
    auto run = env.ask("what did 192.168.77.5 send to the broker?");
    EXPECT_EQ(run.answer.source_class, SourceClass::Insufficient);
    EXPECT_EQ(run.answer.text.rfind("This information is unavailable in the capture evidence:", 0), 0u)
        << run.answer.text;
    EXPECT_TRUE(run.answer.cited_chunk_ids.empty());
}

TEST(Agent, GeneralQuestionIsWebSourced) {
    Env env;
    auto run = env.ask("What is the default MQTT port?");
    ASSERT_EQ(run.answer.source_class, SourceClass::WebSourced) << run.answer.text;
    EXPECT_EQ(run.answer.web_citations.size(), 2u);
    EXPECT_EQ(run.answer.text.rfind("Web sources (not derived from the capture):\n[1] MQTT uses TCP port 1883", 0), 0u)
        << run.answer.text;
    EXPECT_NE(run.answer.text.find("(https://iana.example/ports)"), std::string::npos);
    EXPECT_TRUE(run.answer.cited_chunk_ids.empty());
}

TEST(Agent, WebWithoutSearchClientIsInsufficient) {
    Env env;
    auto run = answer("What is the default MQTT port?", AgentDeps{env.index, env.embedder, env.chat}, env.cfg);
    EXPECT_EQ(run.answer.source_class, SourceClass::Insufficient);
    EXPECT_NE(run.answer.text.find("web lookup is not configured"), std::string::npos);
}

TEST(Agent, MissingSearchFixtureIsInsufficient) {
    Env env;
    auto run = env.ask("Which cloud vendors sell thermostats?");
    EXPECT_EQ(run.answer.source_class, SourceClass::Insufficient);
    EXPECT_NE(run.answer.text.find("web lookup is unavailable"), std::string::npos) << run.answer.text;
}

TEST(Agent, UnsupportedDraftsStayWithinStepBound) {
    for (std::size_t max_steps : {1u, 2u, 3u, 5u}) {
        Env env;
        env.cfg.max_steps = max_steps;
        ScriptedChat liar({"Device 9.9.9.9 exfiltrated 4000 bytes to 7.7.7.7."});
        auto run = env.ask("how many packets did flow abc123def456 carry?", &liar);
        EXPECT_EQ(run.answer.source_class, SourceClass::Insufficient);
        EXPECT_LE(run.answer.steps_used, max_steps);
        EXPECT_LE(liar.calls(), 2u);
        EXPECT_TRUE(run.answer.cited_chunk_ids.empty());
    }
}

TEST(Agent, RefinementHappensAtMostOnce) {
    Env env;
    env.cfg.rerank_floor = 2.0;  // never confident
    auto run = env.ask("resets from 10.0.0.9");
    std::size_t refines = 0;
    for (const auto& e : env.audit.entries()) refines += e["tool"] == "refine_retrieval";
    EXPECT_EQ(refines, 1u);
    EXPECT_LE(run.answer.steps_used, env.cfg.max_steps);
}

TEST(Agent, AuditLogRecordsEveryAct) {
    Env env;
    TempDir dir;
    AuditLog file_log(dir / "audit.jsonl");
    env.ask("how many packets did flow abc123def456 carry?");
    env.ask("What is the default MQTT port?");
    answer("resets from 10.0.0.9", AgentDeps{env.index, env.embedder, env.chat, &env.search, nullptr, &file_log},
           env.cfg);
    auto entries = env.audit.entries();
    ASSERT_GE(entries.size(), 2u);
    std::set<std::string> tools;
    for (const auto& e : entries) {
        for (const char* k : {"ts", "session", "step", "tool", "input_digest", "outcome"}) EXPECT_TRUE(e.contains(k)) << k;
        EXPECT_EQ(e["session"], "sess-1");
        EXPECT_EQ(e["input_digest"].get<std::string>().size(), 16u);
        tools.insert(e["tool"].get<std::string>());
    }
    EXPECT_TRUE(tools.count("retrieval_answer"));
    EXPECT_TRUE(tools.count("web_lookup"));
    auto lines = read_file(dir / "audit.jsonl");
    EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), static_cast<long>(file_log.entries().size()));
    EXPECT_GE(file_log.entries().size(), 1u);
}

TEST(Agent, Deterministic) {
    Env a, b;
    for (const char* q : {"how many packets did flow abc123def456 carry?", "resets from 10.0.0.9",
                          "What is the default MQTT port?", "which DNS names were queried"}) {
        auto x = a.ask(q), y = b.ask(q);
        EXPECT_EQ(x.answer.text, y.answer.text) << q;
        EXPECT_EQ(x.answer.cited_chunk_ids, y.answer.cited_chunk_ids) << q;
        EXPECT_EQ(x.answer.source_class, y.answer.source_class) << q;
    }
}

TEST(Agent, InvariantsOverRandomQuestions) {
    Env env;
    std::mt19937_64 rng(11);
    const std::vector<std::string> words = {"packets", "flow",     "10.0.0.9",   "reset",   "dns",     "sensor.local",
                                            "mqtt",    "port",     "10.0.0.200", "bytes",   "vendor",  "handshake",
                                            "what",    "how many", "broker",     "weather", "qq1122ww3344"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 5);
    for (int i = 0; i < 200; ++i) {
        std::string q;
        for (std::size_t n = len(rng); n > 0; --n) q += words[pick(rng)] + " ";
        auto run = env.ask(q);
        EXPECT_LE(run.answer.steps_used, env.cfg.max_steps) << q;
        if (run.answer.source_class == SourceClass::CaptureGrounded) {
            EXPECT_FALSE(run.answer.cited_chunk_ids.empty()) << q;
            EXPECT_TRUE(run.answer.faithfulness.passed) << q;
        }
        if (run.answer.source_class == SourceClass::WebSourced) EXPECT_FALSE(run.answer.web_citations.empty()) << q;
        EXPECT_NE(run.answer.source_class, SourceClass::Mixed);
    }
}

TEST(RemoteChat, WireFormat) {
    std::string seen;
    StubServer stub([&](const std::string& m, const std::string& path, const std::string& body, int& status,
                        std::string& reply) {
        seen = m + " " + path + " " + body;
        status = 200;
        reply = R"({"text": "3 packets", "tokens": 2})";
    });
    RemoteChat chat(stub.url());
    auto r = chat.complete("sys", "user");
    EXPECT_EQ(r.text, "3 packets");
    EXPECT_EQ(r.tokens, 2u);
    EXPECT_EQ(seen, R"(POST /chat {"system":"sys","user":"user"})");
}

TEST(RemoteChat, FailuresAreChatUnavailable) {
    StubServer stub([](const std::string&, const std::string&, const std::string&, int& status, std::string& reply) {
        status = 500;
        reply = "{}";
    });
    RemoteChat chat(stub.url());
    try {
        chat.complete("s", "u");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ChatUnavailable);
    }
}

TEST(RemoteSearch, WireFormatAndFailure) {
    std::string seen;
    StubServer stub([&](const std::string&, const std::string& path, const std::string&, int& status,
                        std::string& reply) {
        seen = path;
        status = 200;
        reply = R"({"results": [{"url": "https://a.example", "snippet": "s1"}]})";
    });
    RemoteSearch s(stub.url());
    auto r = s.search("mqtt port");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].url, "https://a.example");
    EXPECT_EQ(seen, "/search?q=mqtt port");

    RemoteSearch dead("http://127.0.0.1:1");
    try {
        dead.search("x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SearchUnavailable);
    }
}
