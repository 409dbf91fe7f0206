#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

namespace iotlens {

using Json = nlohmann::ordered_json;

struct Url {
    std::string scheme = "http";
    std::string host;
    int port = 80;
    std::string path = "/";

    /// "http://127.0.0.1:8081/api" style. Throws InvalidArgument.
    static Url parse(std::string_view text);
    std::string origin() const;
    /// Join the base path with a relative path ("/embed").
    std::string join(std::string_view rel) const;
};

struct HttpRequest {
    std::string method = "GET";
    std::string url;
    std::map<std::string, std::string> headers;
    std::string body;
    std::string content_type;
    std::chrono::milliseconds timeout{5000};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Outbound HTTP seam. Every remote client goes through one of these so
/// tests can record or fake traffic. Throws IoError when no response was
/// received at all (connection refused, timeout).
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse send(const HttpRequest& req) = 0;
};

class HttplibTransport : public HttpTransport {
public:
    HttpResponse send(const HttpRequest& req) override;
};

/// Records every request and answers from a canned table keyed by URL;
/// unknown URLs fail as if the host were unreachable.
class RecordingTransport : public HttpTransport {
public:
    HttpResponse send(const HttpRequest& req) override;

    void respond(const std::string& url, HttpResponse resp);
    std::vector<HttpRequest> requests() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, HttpResponse> canned_;
    std::vector<HttpRequest> log_;
};

std::shared_ptr<HttpTransport> default_transport();

/// POST a JSON body and parse a JSON reply. Throws IoError on transport
/// failure, non-2xx status, or an unparseable body.
Json post_json(HttpTransport& transport, const std::string& url, const Json& body,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
Json get_json(HttpTransport& transport, const std::string& url,
              std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

}  // namespace iotlens
