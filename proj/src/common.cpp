#include "iotlens/common.hpp"

#include <arpa/inet.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace iotlens {

std::string_view errc_name(Errc code) {
    switch (code) {
        case Errc::FileNotFound: return "FileNotFound";
        case Errc::IoError: return "IoError";
        case Errc::NotAPcap: return "NotAPcap";
        case Errc::TruncatedCapture: return "TruncatedCapture";
        case Errc::MalformedMac: return "MalformedMac";
        case Errc::ModelUnavailable: return "ModelUnavailable";
        case Errc::NoFixtureForIp: return "NoFixtureForIp";
        case Errc::AllProvidersFailed: return "AllProvidersFailed";
        case Errc::NonPublicIp: return "NonPublicIp";
        case Errc::EmbedderUnavailable: return "EmbedderUnavailable";
        case Errc::EmptyText: return "EmptyText";
        case Errc::EmptyIndex: return "EmptyIndex";
        case Errc::SessionNotFound: return "SessionNotFound";
        case Errc::RerankerUnavailable: return "RerankerUnavailable";
        case Errc::ChatUnavailable: return "ChatUnavailable";
        case Errc::SearchUnavailable: return "SearchUnavailable";
        case Errc::EmptyReference: return "EmptyReference";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

IpAddr IpAddr::v4_from(std::uint32_t host_order) {
    IpAddr ip;
    ip.bytes[0] = static_cast<std::uint8_t>(host_order >> 24);
    ip.bytes[1] = static_cast<std::uint8_t>(host_order >> 16);
    ip.bytes[2] = static_cast<std::uint8_t>(host_order >> 8);
    ip.bytes[3] = static_cast<std::uint8_t>(host_order);
    return ip;
}

IpAddr IpAddr::v4_from_bytes(const std::uint8_t* p) {
    IpAddr ip;
    std::copy(p, p + 4, ip.bytes.begin());
    return ip;
}

IpAddr IpAddr::v6_from_bytes(const std::uint8_t* p) {
    IpAddr ip;
    ip.v6 = true;
    std::copy(p, p + 16, ip.bytes.begin());
    return ip;
}

std::optional<IpAddr> IpAddr::parse(std::string_view text) {
    std::string s(text);
    IpAddr ip;
    if (s.find(':') == std::string::npos) {
        in_addr a{};
        if (inet_pton(AF_INET, s.c_str(), &a) != 1) return std::nullopt;
        std::memcpy(ip.bytes.data(), &a, 4);
        return ip;
    }
    in6_addr a{};
    if (inet_pton(AF_INET6, s.c_str(), &a) != 1) return std::nullopt;
    ip.v6 = true;
    std::memcpy(ip.bytes.data(), &a, 16);
    return ip;
}

std::string IpAddr::to_string() const {
    char buf[INET6_ADDRSTRLEN] = {};
    inet_ntop(v6 ? AF_INET6 : AF_INET, bytes.data(), buf, sizeof(buf));
    return buf;
}

std::uint32_t IpAddr::v4_value() const {
    return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
           (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

MacAddr MacAddr::parse(std::string_view text) {
    MacAddr mac;
    std::size_t octet = 0;
    std::size_t i = 0;
    auto hexval = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    while (i < text.size()) {
        if (octet == 6) throw Error(Errc::MalformedMac, "malformed MAC: " + std::string(text));
        int hi = hexval(text[i]);
        int lo = i + 1 < text.size() ? hexval(text[i + 1]) : -1;
        if (hi < 0 || lo < 0) throw Error(Errc::MalformedMac, "malformed MAC: " + std::string(text));
        mac.bytes[octet++] = static_cast<std::uint8_t>(hi * 16 + lo);
        i += 2;
        if (i < text.size()) {
            if (text[i] != ':' && text[i] != '-')
                throw Error(Errc::MalformedMac, "malformed MAC: " + std::string(text));
            ++i;
            if (i == text.size()) throw Error(Errc::MalformedMac, "malformed MAC: " + std::string(text));
        }
    }
    if (octet != 6) throw Error(Errc::MalformedMac, "malformed MAC: " + std::string(text));
    return mac;
}

std::string MacAddr::to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1],
                  bytes[2], bytes[3], bytes[4], bytes[5]);
    return buf;
}

std::string format_ts(std::int64_t ts_us) {
    bool neg = ts_us < 0;
    std::uint64_t v = neg ? static_cast<std::uint64_t>(-ts_us) : static_cast<std::uint64_t>(ts_us);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%s%llu.%06llu", neg ? "-" : "",
                  static_cast<unsigned long long>(v / 1000000),
                  static_cast<unsigned long long>(v % 1000000));
    return buf;
}

std::string format_number(double value) {
    if (!std::isfinite(value)) return "0";
    if (value == std::floor(value) && std::fabs(value) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", value);
        return buf;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string light_stem(std::string_view token) {
    std::string t(token);
    auto strip = [&](std::string_view suf, std::size_t min_len) {
        if (t.size() >= min_len && t.size() > suf.size() && t.ends_with(suf)) {
            t.resize(t.size() - suf.size());
            return true;
        }
        return false;
    };
    if (strip("ing", 6) || strip("ed", 5) || strip("es", 5)) return t;
    if (!t.ends_with("ss")) strip("s", 4);
    return t;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string read_file(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        throw Error(Errc::FileNotFound, "file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(Errc::IoError, "read failed: " + path.string());
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoError, "cannot write: " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw Error(Errc::IoError, "write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoError, "rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace iotlens
