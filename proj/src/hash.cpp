#include "iotlens/hash.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>

#include "iotlens/common.hpp"

namespace iotlens {

namespace {

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

MdCtx new_sha256_ctx() {
    MdCtx ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw Error(Errc::IoError, "sha256 init failed");
    return ctx;
}

std::array<std::uint8_t, 32> finish(EVP_MD_CTX* ctx) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, out.data(), &len) != 1 || len != 32)
        throw Error(Errc::IoError, "sha256 final failed");
    return out;
}

std::string to_hex(const std::array<std::uint8_t, 32>& digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : digest) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xf]);
    }
    return s;
}

}  // namespace

std::array<std::uint8_t, 32> sha256(std::string_view data) {
    auto ctx = new_sha256_ctx();
    EVP_DigestUpdate(ctx.get(), data.data(), data.size());
    return finish(ctx.get());
}

std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

std::string capture_hash(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        throw Error(Errc::FileNotFound, "file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open: " + path.string());
    auto ctx = new_sha256_ctx();
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        auto n = in.gcount();
        if (n > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(n));
    }
    if (in.bad()) throw Error(Errc::IoError, "read failed: " + path.string());
    return to_hex(finish(ctx.get()));
}

struct Sha256Stream::Impl {
    MdCtx ctx = new_sha256_ctx();
};

Sha256Stream::Sha256Stream() : impl_(std::make_unique<Impl>()) {}
Sha256Stream::~Sha256Stream() = default;

void Sha256Stream::update(std::string_view data) { EVP_DigestUpdate(impl_->ctx.get(), data.data(), data.size()); }

std::string Sha256Stream::hex() { return to_hex(finish(impl_->ctx.get())); }

std::string base36_digest12(std::string_view data) {
    auto digest = sha256(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
    static constexpr char kDigits[] = "0123456789abcdefghijklmnopqrstuvwxyz";
    std::string s(12, '0');
    for (int i = 11; i >= 0; --i) {
        s[i] = kDigits[v % 36];
        v /= 36;
    }
    return s;
}

}  // namespace iotlens
