#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iotlens/common.hpp"
#include "iotlens/embed.hpp"
#include "test_support.hpp"

using namespace iotlens;
using namespace iotlens::testing;

TEST(Fnv1a, PublishedVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(HashingEmbedder, BucketsMatchReference) {
    // Reference values computed with an independent Python implementation.
    HashingEmbedder e(256);
    using B = HashingEmbedder::Bucket;
    EXPECT_EQ(e.buckets("tcp"), (std::array<B, 2>{B{144, 1}, B{244, -1}}));
    EXPECT_EQ(e.buckets("mqtt"), (std::array<B, 2>{B{251, -1}, B{249, -1}}));
    EXPECT_EQ(e.buckets("10"), (std::array<B, 2>{B{164, 1}, B{138, -1}}));
    EXPECT_EQ(e.buckets("sensor"), (std::array<B, 2>{B{91, -1}, B{59, 1}}));
}

TEST(HashingEmbedder, SingleTokenVector) {
    HashingEmbedder e(256);
    auto v = e.embed("TCP");
    const float h = static_cast<float>(1 / std::sqrt(2.0));
    for (std::size_t i = 0; i < v.size(); ++i) {
        float want = i == 144 ? h : i == 244 ? -h : 0.0f;
        EXPECT_NEAR(v[i], want, 1e-6) << i;
    }
}

TEST(HashingEmbedder, UnitNormAndDeterministic) {
    HashingEmbedder e(64);
    std::mt19937_64 rng(4);
    const std::string alphabet = "abcdefgh 0123.:";
    for (int i = 0; i < 500; ++i) {
        std::string text;
        for (std::size_t n = 1 + rng() % 40; n > 0; --n) text += alphabet[rng() % alphabet.size()];
        if (alnum_tokens(text).empty()) continue;
        auto v = e.embed(text);
        EXPECT_EQ(v.size(), 64u);
        EXPECT_NEAR(l2_norm(v), 1.0, 1e-5) << text;
        EXPECT_EQ(v, e.embed(text));
    }
}

TEST(HashingEmbedder, EmptyTextIsRejected) {
    HashingEmbedder e;
    for (const char* t : {"", "   ", "::--"}) {
        try {
            e.embed(t);
            FAIL() << t;
        } catch (const Error& err) {
            EXPECT_EQ(err.code(), Errc::EmptyText);
        }
    }
}

TEST(HashingEmbedder, SharedTokensRaiseSimilarity) {
    HashingEmbedder e;
    auto q = e.embed("mqtt topic sensors/temp");
    EXPECT_GT(dot(q, e.embed("mqtt publish topic sensors/temp from 10.0.0.5")), dot(q, e.embed("dns query for example.com")));
}

TEST(AlnumTokens, Splits) {
    EXPECT_EQ(alnum_tokens("GET /index.html 10.0.0.1"),
              (std::vector<std::string>{"get", "index", "html", "10", "0", "0", "1"}));
    EXPECT_TRUE(alnum_tokens("").empty());
}

TEST(RemoteEmbedder, NormalizesReply) {
    StubServer stub([](const std::string& method, const std::string& path, const std::string& body, int& status,
                       std::string& reply) {
        status = 200;
        if (method == "GET" && path == "/info") {
            reply = R"({"dims":3})";
        } else if (method == "POST" && path == "/embed") {
            auto text = Json::parse(body)["text"].get<std::string>();
            reply = text == "bad" ? R"({"vector":[1,2]})" : R"({"vector":[3,4,0]})";
        } else {
            status = 404;
        }
    });
    RemoteEmbedder e(stub.url());
    EXPECT_EQ(e.dims(), 3u);
    auto v = e.embed("hello");
    ASSERT_EQ(v.size(), 3u);
    EXPECT_NEAR(v[0], 0.6, 1e-6);
    EXPECT_NEAR(v[1], 0.8, 1e-6);
    try {
        e.embed("bad");
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), Errc::EmbedderUnavailable);
    }
}

TEST(RemoteEmbedder, UnreachableIsUnavailable) {
    int port;
    {
        StubServer stub([](const std::string&, const std::string&, const std::string&, int& s, std::string&) { s = 500; });
        port = stub.port();
    }
    RemoteEmbedder e("http://127.0.0.1:" + std::to_string(port));
    try {
        e.embed("hello");
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), Errc::EmbedderUnavailable);
    }
}

TEST(FailingEmbedderHelper, FailsAfterBudget) {
    FailingEmbedder e(2);
    e.embed("a");
    e.embed("b");
    EXPECT_THROW(e.embed("c"), Error);
}
