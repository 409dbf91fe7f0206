#include "iotlens/embed.hpp"

#include <cctype>
#include <cmath>

#include "iotlens/common.hpp"

namespace iotlens {

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    double s = 0;
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

double l2_norm(const EmbeddingVector& v) { return std::sqrt(dot(v, v)); }

void l2_normalize(EmbeddingVector& v) {
    double n = l2_norm(v);
    if (n == 0) return;
    for (auto& x : v) x = static_cast<float>(x / n);
}

std::vector<std::string> alnum_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

EmbeddingVector Embedder::embed(std::string_view text) {
    if (trim(text).empty()) throw Error(Errc::EmptyText, "cannot embed empty text");
    ++calls_;
    return do_embed(text);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::array<HashingEmbedder::Bucket, 2> HashingEmbedder::buckets(std::string_view token) const {
    std::uint64_t h = fnv1a64(token);
    std::uint64_t g = h * 0x9e3779b97f4a7c15ULL;
    g ^= g >> 29;
    return {Bucket{static_cast<std::size_t>(h % dims_), (h >> 63) ? -1 : 1},
            Bucket{static_cast<std::size_t>(g % dims_), (g >> 63) ? -1 : 1}};
}

EmbeddingVector HashingEmbedder::do_embed(std::string_view text) {
    auto tokens = alnum_tokens(text);
    if (tokens.empty()) throw Error(Errc::EmptyText, "no tokens to embed");
    EmbeddingVector v(dims_, 0.0f);
    for (const auto& t : tokens)
        for (const auto& b : buckets(t)) v[b.index] += static_cast<float>(b.sign);
    l2_normalize(v);
    if (l2_norm(v) == 0) {
        // Every bucket cancelled out; fall back to a fixed direction.
        v.assign(dims_, 0.0f);
        v[buckets(tokens.front())[0].index] = 1.0f;
    }
    return v;
}

RemoteEmbedder::RemoteEmbedder(std::string base_url, std::shared_ptr<HttpTransport> transport)
    : base_(Url::parse(base_url)), transport_(std::move(transport)) {}

std::size_t RemoteEmbedder::dims() const {
    if (dims_ == 0) {
        try {
            auto info = get_json(*transport_, base_.join("/info"));
            dims_ = info.at("dims").get<std::size_t>();
        } catch (const std::exception& e) {
            throw Error(Errc::EmbedderUnavailable, std::string("embedder: ") + e.what());
        }
    }
    return dims_;
}

EmbeddingVector RemoteEmbedder::do_embed(std::string_view text) {
    EmbeddingVector v;
    try {
        auto reply = post_json(*transport_, base_.join("/embed"), Json{{"text", std::string(text)}});
        for (const auto& x : reply.at("vector")) v.push_back(x.get<float>());
    } catch (const std::exception& e) {
        throw Error(Errc::EmbedderUnavailable, std::string("embedder: ") + e.what());
    }
    if (v.empty() || (dims_ && v.size() != dims_))
        throw Error(Errc::EmbedderUnavailable, "embedder: wrong vector dimension");
    dims_ = v.size();
    l2_normalize(v);
    if (l2_norm(v) == 0) throw Error(Errc::EmbedderUnavailable, "embedder: zero vector");
    return v;
}

}  // namespace iotlens
