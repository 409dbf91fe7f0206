#include "iotlens/corpus.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "iotlens/hash.hpp"

namespace iotlens {

namespace fs = std::filesystem;

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::ProtocolLog: return "ProtocolLog";
        case Modality::Report: return "Report";
        case Modality::FlowSummary: return "FlowSummary";
        case Modality::PacketView: return "PacketView";
    }
    return "";
}

std::string_view level_name(Level l) {
    switch (l) {
        case Level::Session: return "Session";
        case Level::Section: return "Section";
        case Level::Flow: return "Flow";
        case Level::Segment: return "Segment";
    }
    return "";
}

std::optional<Modality> parse_modality(std::string_view s) {
    for (auto m : {Modality::ProtocolLog, Modality::Report, Modality::FlowSummary, Modality::PacketView})
        if (modality_name(m) == s) return m;
    return std::nullopt;
}

namespace {

Level parse_level(std::string_view s) {
    for (auto l : {Level::Session, Level::Section, Level::Flow, Level::Segment})
        if (level_name(l) == s) return l;
    throw Error(Errc::IoError, "unknown chunk level: " + std::string(s));
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\n') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

Json Chunk::to_json() const {
    Json j;
    j["chunk_id"] = chunk_id;
    j["modality"] = modality_name(modality);
    j["level"] = level_name(level);
    j["source_uid"] = source_uid ? Json(*source_uid) : Json(nullptr);
    j["seq"] = seq;
    j["text"] = text;
    return j;
}

Chunk Chunk::from_json(const Json& j) {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    auto m = parse_modality(j.at("modality").get<std::string>());
    if (!m) throw Error(Errc::IoError, "unknown modality in chunk record");
    c.modality = *m;
    c.level = parse_level(j.at("level").get<std::string>());
    if (j.contains("source_uid") && j["source_uid"].is_string()) c.source_uid = j["source_uid"].get<std::string>();
    c.seq = j.value("seq", std::size_t{0});
    c.text = j.at("text").get<std::string>();
    return c;
}

std::string normalize_text(std::string_view text) {
    auto lines = split_lines(text);
    for (auto& l : lines) {
        while (!l.empty() && std::isspace(static_cast<unsigned char>(l.back()))) l.pop_back();
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

std::string chunk_id_for(std::string_view text, Modality m) {
    std::string buf(modality_name(m));
    buf.push_back('\0');
    buf += normalize_text(text);
    return sha256_hex(buf);
}

std::optional<Chunk> make_chunk(std::string_view text, Modality m, Level level,
                                std::optional<std::string> source_uid, std::size_t seq) {
    std::string norm = normalize_text(text);
    if (trim(norm).empty()) return std::nullopt;
    Chunk c;
    c.chunk_id = chunk_id_for(norm, m);
    c.text = std::move(norm);
    c.modality = m;
    c.level = level;
    c.source_uid = std::move(source_uid);
    c.seq = seq;
    return c;
}

std::vector<Chunk> chunk_protocol_logs(const std::vector<ProtocolEvent>& events) {
    std::map<std::string, std::vector<const ProtocolEvent*>> by_uid;
    for (const auto& e : events) by_uid[e.uid].push_back(&e);
    std::vector<std::pair<std::int64_t, std::string>> order;
    for (auto& [uid, evs] : by_uid) {
        std::stable_sort(evs.begin(), evs.end(), [](const ProtocolEvent* a, const ProtocolEvent* b) {
            if (a->ts_us != b->ts_us) return a->ts_us < b->ts_us;
            return a->log_kind < b->log_kind;
        });
        order.emplace_back(evs.front()->ts_us, uid);
    }
    std::sort(order.begin(), order.end());
    std::vector<Chunk> out;
    for (const auto& [ts, uid] : order) {
        std::string text;
        for (const auto* e : by_uid[uid]) text += e->to_json_line() + "\n";
        if (auto c = make_chunk(text, Modality::ProtocolLog, Level::Session, uid, 0)) out.push_back(std::move(*c));
    }
    return out;
}

std::vector<Chunk> chunk_report(const InterpretationReport& report) {
    std::vector<Chunk> out;
    std::size_t seq = 0;
    for (const auto& s : report.sections())
        if (auto c = make_chunk(s.text, Modality::Report, Level::Section, std::nullopt, seq)) {
            out.push_back(std::move(*c));
            ++seq;
        }
    return out;
}

std::vector<Chunk> chunk_report_text(std::string_view text) {
    std::vector<std::string> sections;
    for (auto& line : split_lines(text)) {
        bool header = line.rfind("=== ", 0) == 0 || line.rfind("--- ", 0) == 0;
        if (header || sections.empty()) sections.emplace_back();
        sections.back() += line + "\n";
    }
    std::vector<Chunk> out;
    for (const auto& s : sections)
        if (auto c = make_chunk(s, Modality::Report, Level::Section, std::nullopt, out.size())) out.push_back(std::move(*c));
    return out;
}

std::vector<Chunk> chunk_flows(std::string_view narratives) {
    std::vector<std::string> blocks(1);
    for (auto& line : split_lines(narratives)) {
        if (trim(line).empty()) {
            if (!blocks.back().empty()) blocks.emplace_back();
            continue;
        }
        blocks.back() += line + "\n";
    }
    std::vector<Chunk> out;
    for (const auto& b : blocks) {
        std::optional<std::string> uid;
        if (b.rfind("Flow ", 0) == 0) {
            auto colon = b.find(':');
            if (colon != std::string::npos) uid = b.substr(5, colon - 5);
        }
        if (auto c = make_chunk(b, Modality::FlowSummary, Level::Flow, uid, out.size())) out.push_back(std::move(*c));
    }
    return out;
}

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<Chunk> chunk_packets_semantic(const std::vector<std::string>& packet_lines, Embedder& embedder,
                                          const SemanticChunkConfig& cfg) {
    std::vector<std::string> lines;
    for (const auto& l : packet_lines)
        if (!trim(l).empty()) lines.push_back(l);
    std::vector<std::vector<std::string>> groups;
    if (lines.empty()) return {};
    std::vector<bool> split_after(lines.size(), false);
    if (lines.size() > 1) {
        std::vector<EmbeddingVector> vecs;
        vecs.reserve(lines.size());
        for (const auto& l : lines) vecs.push_back(embedder.embed(l));
        std::vector<double> dist(lines.size() - 1);
        for (std::size_t i = 0; i + 1 < lines.size(); ++i) dist[i] = 1.0 - dot(vecs[i], vecs[i + 1]);
        double threshold = percentile(dist, cfg.breakpoint_pct);
        for (std::size_t i = 0; i < dist.size(); ++i) split_after[i] = dist[i] > threshold + 1e-12;
    }
    std::size_t max_lines = std::max<std::size_t>(1, cfg.max_chunk_lines);
    groups.emplace_back();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (groups.back().size() == max_lines) groups.emplace_back();
        groups.back().push_back(lines[i]);
        if (split_after[i] && i + 1 < lines.size()) groups.emplace_back();
    }
    std::vector<Chunk> out;
    for (const auto& g : groups) {
        std::string text;
        for (const auto& l : g) text += l + "\n";
        if (auto c = make_chunk(text, Modality::PacketView, Level::Segment, std::nullopt, out.size()))
            out.push_back(std::move(*c));
    }
    return out;
}

// ---------------------------------------------------------------- index

Json SessionIndexFile::to_json() const {
    Json j;
    j["entries"] = Json::array();
    for (const auto& e : entries) {
        Json je;
        je["capture_hash"] = e.capture_hash;
        je["session_id"] = e.session_id;
        je["created_at"] = e.created_at;
        je["last_used_us"] = e.last_used_us;
        je["input_hashes"] = e.input_hashes;
        j["entries"].push_back(je);
    }
    j["latest"] = latest.empty() ? Json(nullptr) : Json(latest);
    return j;
}

SessionIndexFile SessionIndexFile::from_json(const Json& j) {
    SessionIndexFile idx;
    for (const auto& je : j.at("entries")) {
        IndexEntry e;
        e.capture_hash = je.at("capture_hash").get<std::string>();
        e.session_id = je.at("session_id").get<std::string>();
        e.created_at = je.at("created_at").get<std::int64_t>();
        e.last_used_us = je.value("last_used_us", std::int64_t{0});
        e.input_hashes = je.at("input_hashes").get<std::vector<std::string>>();
        idx.entries.push_back(std::move(e));
    }
    if (j.contains("latest") && j["latest"].is_string()) idx.latest = j["latest"].get<std::string>();
    return idx;
}

namespace {

class DirLock {
public:
    explicit DirLock(const fs::path& file) {
        fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error(Errc::IoError, "cannot open lock file " + file.string() + ": " + std::strerror(errno));
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error(Errc::IoError, "cannot lock " + file.string());
        }
    }
    ~DirLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

std::int64_t now_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string make_session_id(std::int64_t ts_us, const std::string& hash) {
    std::time_t secs = static_cast<std::time_t>(ts_us / 1000000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    char frac[16];
    std::snprintf(frac, sizeof(frac), ".%06lldZ", static_cast<long long>(ts_us % 1000000));
    return std::string(buf) + frac + "-" + hash.substr(0, 8);
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::vector<std::string> out;
    for (auto& l : split_lines(read_file(p)))
        if (!trim(l).empty()) out.push_back(std::move(l));
    return out;
}

void write_vectors(const fs::path& path, const std::vector<EmbeddingVector>& vecs) {
    std::string buf;
    for (const auto& v : vecs)
        for (float f : v) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
        }
    write_file_atomic(path, buf);
}

std::vector<EmbeddingVector> read_vectors(const fs::path& path, std::size_t rows, std::size_t dims) {
    std::string buf = read_file(path);
    if (buf.size() != rows * dims * 4) throw Error(Errc::IoError, "vectors.bin size mismatch in " + path.string());
    std::vector<EmbeddingVector> out(rows, EmbeddingVector(dims));
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t d = 0; d < dims; ++d) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= std::uint32_t{p[4 * (r * dims + d) + b]} << (8 * b);
            std::memcpy(&out[r][d], &bits, 4);
        }
    return out;
}

}  // namespace

std::vector<Chunk> build_chunks(const IngestInputs& inputs, Embedder& embedder, const SemanticChunkConfig& cfg) {
    std::vector<ProtocolEvent> events;
    for (const auto& l : read_lines(inputs.logs)) events.push_back(protocol_event_from_json_line(l));
    std::vector<Chunk> all;
    auto append = [&](std::vector<Chunk> cs) {
        for (auto& c : cs) all.push_back(std::move(c));
    };
    append(chunk_protocol_logs(events));
    append(chunk_report_text(read_file(inputs.report)));
    append(chunk_flows(read_file(inputs.flows)));
    append(chunk_packets_semantic(read_lines(inputs.packets), embedder, cfg));
    std::set<std::string> seen;
    std::vector<Chunk> out;
    for (auto& c : all)
        if (seen.insert(c.chunk_id).second) out.push_back(std::move(c));
    return out;
}

CorpusStore::CorpusStore(fs::path root, std::size_t retain, SemanticChunkConfig chunking)
    : root_(std::move(root)), retain_(std::max<std::size_t>(1, retain)), chunking_(chunking) {
    fs::create_directories(root_);
}

SessionIndexFile CorpusStore::index() const {
    auto path = root_ / "index.json";
    std::error_code ec;
    if (!fs::exists(path, ec)) return {};
    try {
        return SessionIndexFile::from_json(Json::parse(read_file(path)));
    } catch (const Json::exception& e) {
        throw Error(Errc::IoError, "corrupt index.json: " + std::string(e.what()));
    }
}

void CorpusStore::save_index(const SessionIndexFile& idx) const {
    write_file_atomic(root_ / "index.json", idx.to_json().dump(2) + "\n");
}

std::optional<std::string> CorpusStore::latest() const {
    auto idx = index();
    if (idx.latest.empty()) return std::nullopt;
    return idx.latest;
}

bool CorpusStore::has_session(const std::string& session_id) const {
    auto idx = index();
    return std::any_of(idx.entries.begin(), idx.entries.end(),
                       [&](const IndexEntry& e) { return e.session_id == session_id; });
}

IngestResult CorpusStore::ingest(const IngestInputs& inputs, Embedder& embedder) {
    const std::pair<const char*, const fs::path*> artifacts[] = {
        {"packets.jsonl", &inputs.packets}, {"logs.jsonl", &inputs.logs},
        {"flows.txt", &inputs.flows},       {"report.txt", &inputs.report}};
    std::vector<std::string> hashes;
    Json named_hashes;
    for (const auto& [name, path] : artifacts) {
        auto h = capture_hash(*path);
        hashes.push_back(h);
        named_hashes[name] = h;
    }
    std::sort(hashes.begin(), hashes.end());
    std::string combined;
    for (const auto& h : hashes) combined += h;
    std::string combined_hash = sha256_hex(combined);

    DirLock lock(root_ / ".lock");
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root_, ec))
        if (entry.path().filename().string().rfind(".tmp-", 0) == 0) fs::remove_all(entry.path(), ec);

    SessionIndexFile idx = index();
    for (std::size_t i = 0; i < idx.entries.size(); ++i) {
        if (idx.entries[i].input_hashes != hashes) continue;
        if (!fs::exists(root_ / idx.entries[i].session_id)) {
            idx.entries.erase(idx.entries.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
        IndexEntry hit = idx.entries[i];
        hit.last_used_us = now_us();
        idx.entries.erase(idx.entries.begin() + static_cast<std::ptrdiff_t>(i));
        idx.entries.push_back(hit);
        idx.latest = hit.session_id;
        save_index(idx);
        return {hit.session_id, true, 0};
    }

    std::int64_t ts = now_us();
    std::string session_id = make_session_id(ts, inputs.capture_hash.empty() ? combined_hash : inputs.capture_hash);
    std::mt19937_64 rng(static_cast<std::uint64_t>(ts) ^ static_cast<std::uint64_t>(::getpid()));
    fs::path tmp = root_ / (".tmp-" + std::to_string(rng()));
    fs::path final_dir = root_ / session_id;
    std::size_t chunk_count = 0;
    try {
        fs::create_directories(tmp / "artifacts");
        auto chunks = build_chunks(inputs, embedder, chunking_);
        std::vector<EmbeddingVector> vecs;
        vecs.reserve(chunks.size());
        for (const auto& c : chunks) vecs.push_back(embedder.embed(c.text));
        std::size_t dims = vecs.empty() ? embedder.dims() : vecs.front().size();

        std::string lines;
        std::map<std::string, std::size_t> per_modality;
        for (const auto& c : chunks) {
            lines += c.to_json().dump() + "\n";
            ++per_modality[std::string(modality_name(c.modality))];
        }
        write_file_atomic(tmp / "chunks.jsonl", lines);
        write_vectors(tmp / "vectors.bin", vecs);
        for (const auto& [name, path] : artifacts) fs::copy_file(*path, tmp / "artifacts" / name);
        for (const auto& extra : inputs.extras) fs::copy_file(extra, tmp / "artifacts" / extra.filename());

        Json manifest;
        manifest["schema_version"] = 1;
        manifest["session_id"] = session_id;
        manifest["created_at"] = ts / 1000000;
        manifest["capture_hash"] = inputs.capture_hash.empty() ? combined_hash : inputs.capture_hash;
        manifest["input_hashes"] = named_hashes;
        manifest["embedder"] = embedder.name();
        manifest["dims"] = dims;
        manifest["chunk_count"] = chunks.size();
        manifest["modality_counts"] = per_modality;
        write_file_atomic(tmp / "manifest.json", manifest.dump(2) + "\n");
        chunk_count = chunks.size();
        fs::rename(tmp, final_dir);
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }

    IndexEntry entry;
    entry.capture_hash = inputs.capture_hash.empty() ? combined_hash : inputs.capture_hash;
    entry.session_id = session_id;
    entry.created_at = ts / 1000000;
    entry.last_used_us = ts;
    entry.input_hashes = hashes;
    SessionIndexFile next = idx;
    next.entries.push_back(entry);
    next.latest = session_id;
    std::vector<std::string> evicted;
    while (next.entries.size() > retain_) {
        evicted.push_back(next.entries.front().session_id);
        next.entries.erase(next.entries.begin());
    }
    try {
        save_index(next);
    } catch (...) {
        fs::remove_all(final_dir, ec);
        throw;
    }
    for (const auto& id : evicted) fs::remove_all(root_ / id, ec);
    return {session_id, false, chunk_count};
}

LoadedSession CorpusStore::load(const std::string& session_id) const {
    if (session_id.empty() || session_id.find('/') != std::string::npos || session_id.find("..") != std::string::npos ||
        !has_session(session_id))
        throw Error(Errc::SessionNotFound, "session not found: " + session_id);
    LoadedSession s;
    s.session_id = session_id;
    s.directory = root_ / session_id;
    try {
        s.manifest = Json::parse(read_file(s.directory / "manifest.json"));
    } catch (const Error& e) {
        if (e.code() == Errc::FileNotFound) throw Error(Errc::SessionNotFound, "session not found: " + session_id);
        throw;
    }
    s.dims = s.manifest.at("dims").get<std::size_t>();
    for (const auto& line : read_lines(s.directory / "chunks.jsonl")) s.chunks.push_back(Chunk::from_json(Json::parse(line)));
    s.vectors = read_vectors(s.directory / "vectors.bin", s.chunks.size(), s.dims);
    return s;
}

}  // namespace iotlens
