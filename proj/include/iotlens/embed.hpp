#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "iotlens/http.hpp"

namespace iotlens {

using EmbeddingVector = std::vector<float>;

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double l2_norm(const EmbeddingVector& v);
void l2_normalize(EmbeddingVector& v);

/// Lowercased alphanumeric runs; every other byte separates tokens.
std::vector<std::string> alnum_tokens(std::string_view text);

class Embedder {
public:
    virtual ~Embedder() = default;

    /// Unit-norm vector of dims(). Throws EmptyText / EmbedderUnavailable.
    EmbeddingVector embed(std::string_view text);
    virtual std::size_t dims() const = 0;
    virtual std::string name() const = 0;

    std::size_t calls() const { return calls_.load(); }

protected:
    virtual EmbeddingVector do_embed(std::string_view text) = 0;

private:
    std::atomic<std::size_t> calls_{0};
};

/// Feature hashing: each token lands in two signed buckets (FNV-1a 64),
/// the accumulator is L2-normalized.
class HashingEmbedder : public Embedder {
public:
    struct Bucket {
        std::size_t index;
        int sign;
        friend bool operator==(const Bucket&, const Bucket&) = default;
    };

    explicit HashingEmbedder(std::size_t dims = 256) : dims_(dims) {}

    std::size_t dims() const override { return dims_; }
    std::string name() const override { return "hashing-" + std::to_string(dims_); }

    /// The two buckets a (lowercased) token contributes to.
    std::array<Bucket, 2> buckets(std::string_view token) const;

protected:
    EmbeddingVector do_embed(std::string_view text) override;

private:
    std::size_t dims_;
};

std::uint64_t fnv1a64(std::string_view s);

/// POST {base}/embed {"text"} -> {"vector"}; GET {base}/info -> {"dims"}.
class RemoteEmbedder : public Embedder {
public:
    explicit RemoteEmbedder(std::string base_url, std::shared_ptr<HttpTransport> transport = default_transport());

    std::size_t dims() const override;
    std::string name() const override { return "remote:" + base_.origin(); }

protected:
    EmbeddingVector do_embed(std::string_view text) override;

private:
    Url base_;
    std::shared_ptr<HttpTransport> transport_;
    mutable std::size_t dims_ = 0;
};

}  // namespace iotlens
