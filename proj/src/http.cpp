#include "iotlens/http.hpp"

#include "httplib.h"

#include "iotlens/common.hpp"

namespace iotlens {

Url Url::parse(std::string_view text) {
    Url u;
    auto sep = text.find("://");
    if (sep == std::string_view::npos) throw Error(Errc::InvalidArgument, "not a URL: " + std::string(text));
    u.scheme = to_lower(text.substr(0, sep));
    if (u.scheme != "http" && u.scheme != "https")
        throw Error(Errc::InvalidArgument, "unsupported scheme: " + std::string(text));
    u.port = u.scheme == "https" ? 443 : 80;
    auto rest = text.substr(sep + 3);
    auto slash = rest.find('/');
    auto hostport = rest.substr(0, slash);
    u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    if (!hostport.empty() && hostport.front() == '[') {
        auto close = hostport.find(']');
        if (close == std::string_view::npos) throw Error(Errc::InvalidArgument, "bad host: " + std::string(text));
        u.host = std::string(hostport.substr(1, close - 1));
        hostport = hostport.substr(close + 1);
        if (!hostport.empty() && hostport.front() == ':') u.port = std::stoi(std::string(hostport.substr(1)));
    } else {
        auto colon = hostport.rfind(':');
        u.host = std::string(hostport.substr(0, colon));
        if (colon != std::string_view::npos) {
            try {
                u.port = std::stoi(std::string(hostport.substr(colon + 1)));
            } catch (const std::exception&) {
                throw Error(Errc::InvalidArgument, "bad port: " + std::string(text));
            }
        }
    }
    if (u.host.empty()) throw Error(Errc::InvalidArgument, "missing host: " + std::string(text));
    return u;
}

std::string Url::origin() const {
    std::string h = host.find(':') != std::string::npos ? "[" + host + "]" : host;
    return scheme + "://" + h + ":" + std::to_string(port);
}

std::string Url::join(std::string_view rel) const {
    std::string base = path;
    while (!base.empty() && base.back() == '/') base.pop_back();
    std::string r(rel);
    if (r.empty() || r.front() != '/') r = "/" + r;
    return origin() + base + r;
}

HttpResponse HttplibTransport::send(const HttpRequest& req) {
    Url u = Url::parse(req.url);
    std::string target = u.path;
    httplib::Client cli(u.origin());
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    httplib::Result res = req.method == "POST"
                              ? cli.Post(target, headers, req.body,
                                         req.content_type.empty() ? "application/json" : req.content_type)
                              : cli.Get(target, headers);
    if (!res) throw Error(Errc::IoError, req.url + ": " + httplib::to_string(res.error()));
    return HttpResponse{res->status, res->body};
}

HttpResponse RecordingTransport::send(const HttpRequest& req) {
    std::lock_guard lock(mu_);
    log_.push_back(req);
    auto it = canned_.find(req.url);
    if (it == canned_.end()) throw Error(Errc::IoError, req.url + ": unreachable");
    return it->second;
}

void RecordingTransport::respond(const std::string& url, HttpResponse resp) {
    std::lock_guard lock(mu_);
    canned_[url] = std::move(resp);
}

std::vector<HttpRequest> RecordingTransport::requests() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::shared_ptr<HttpTransport> default_transport() {
    static auto t = std::make_shared<HttplibTransport>();
    return t;
}

namespace {

Json parse_reply(const std::string& url, const HttpResponse& resp) {
    if (resp.status < 200 || resp.status >= 300)
        throw Error(Errc::IoError, url + ": HTTP " + std::to_string(resp.status));
    try {
        return Json::parse(resp.body);
    } catch (const Json::exception& e) {
        throw Error(Errc::IoError, url + ": bad JSON reply: " + e.what());
    }
}

}  // namespace

Json post_json(HttpTransport& transport, const std::string& url, const Json& body,
               std::chrono::milliseconds timeout) {
    HttpRequest req;
    req.method = "POST";
    req.url = url;
    req.body = body.dump();
    req.content_type = "application/json";
    req.timeout = timeout;
    return parse_reply(url, transport.send(req));
}

Json get_json(HttpTransport& transport, const std::string& url, std::chrono::milliseconds timeout) {
    HttpRequest req;
    req.url = url;
    req.timeout = timeout;
    return parse_reply(url, transport.send(req));
}

}  // namespace iotlens
