#include "iotlens/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_set>

namespace iotlens {

std::string_view mode_name(RetrievalMode m) { return m == RetrievalMode::DenseOnly ? "dense" : "hybrid"; }

std::optional<RetrievalMode> parse_mode(std::string_view s) {
    std::string l = to_lower(s);
    if (l == "dense" || l == "denseonly" || l == "dense_only") return RetrievalMode::DenseOnly;
    if (l == "hybrid") return RetrievalMode::Hybrid;
    return std::nullopt;
}

void RetrievalConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "alpha must be in [0,1]");
    if (top_k > k_dense + k_sparse) throw Error(Errc::InvalidArgument, "top_k exceeds k_dense + k_sparse");
}

std::optional<double> EvidenceBundle::top_score() const {
    if (ranked.empty()) return std::nullopt;
    const Candidate& c = ranked.front().first;
    if (c.rerank_score) return c.rerank_score;
    if (c.fused_score) return c.fused_score;
    return c.dense_score;
}

Json EvidenceBundle::to_json() const {
    Json j;
    j["query"] = query;
    j["mode"] = mode_name(mode);
    j["session_id"] = session_id;
    j["degraded"] = degraded;
    j["ranked"] = Json::array();
    std::size_t rank = 1;
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    for (const auto& [c, chunk] : ranked) {
        Json e;
        e["rank"] = rank++;
        e["chunk_id"] = c.chunk_id;
        e["modality"] = modality_name(chunk.modality);
        e["level"] = level_name(chunk.level);
        e["source_uid"] = chunk.source_uid ? Json(*chunk.source_uid) : Json(nullptr);
        e["scores"] = {{"dense", opt(c.dense_score)},   {"sparse", opt(c.sparse_score)},
                       {"keyword_hit", c.keyword_hit},  {"fused", opt(c.fused_score)},
                       {"rerank", opt(c.rerank_score)}};
        e["text"] = chunk.text;
        j["ranked"].push_back(e);
    }
    return j;
}

std::vector<std::string> search_tokens(std::string_view text) {
    std::vector<std::string> out;
    auto emit = [&](std::string tok) {
        std::size_t b = 0, e = tok.size();
        while (b < e && (tok[b] == '.' || tok[b] == ':')) ++b;
        while (e > b && (tok[e - 1] == '.' || tok[e - 1] == ':')) --e;
        if (b == e) return;
        tok = tok.substr(b, e - b);
        bool has_colon = tok.find(':') != std::string::npos;
        out.push_back(tok);
        if (has_colon) {
            std::size_t start = 0;
            while (start <= tok.size()) {
                auto pos = tok.find(':', start);
                std::string part = tok.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
                std::size_t pb = 0, pe = part.size();
                while (pb < pe && part[pb] == '.') ++pb;
                while (pe > pb && part[pe - 1] == '.') --pe;
                if (pb < pe) out.push_back(part.substr(pb, pe - pb));
                if (pos == std::string::npos) break;
                start = pos + 1;
            }
        }
    };
    std::string cur;
    for (char c : text) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || c == '.' || c == ':') {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            emit(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) emit(std::move(cur));
    return out;
}

// ---------------------------------------------------------------- BM25

Bm25Index::Bm25Index(const std::vector<std::vector<std::string>>& docs) {
    tf_.resize(docs.size());
    doc_len_.resize(docs.size());
    double total = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (const auto& t : docs[i]) ++tf_[i][t];
        for (const auto& [t, n] : tf_[i]) ++df_[t];
        doc_len_[i] = docs[i].size();
        total += static_cast<double>(docs[i].size());
    }
    avg_len_ = docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
}

namespace {

std::vector<std::string> unique_terms(const std::vector<std::string>& terms) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& t : terms)
        if (seen.insert(t).second) out.push_back(t);
    return out;
}

}  // namespace

double Bm25Index::score(const std::vector<std::string>& query_terms, std::size_t doc, double k1, double b) const {
    const double n = static_cast<double>(doc_len_.size());
    const double len_ratio = avg_len_ > 0 ? static_cast<double>(doc_len_[doc]) / avg_len_ : 0.0;
    double s = 0;
    for (const auto& t : unique_terms(query_terms)) {
        auto it = tf_[doc].find(t);
        if (it == tf_[doc].end()) continue;
        double df = static_cast<double>(df_.at(t));
        double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        double tf = static_cast<double>(it->second);
        s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio));
    }
    return s;
}

std::vector<std::pair<std::size_t, double>> Bm25Index::search(const std::vector<std::string>& query_terms, double k1,
                                                              double b) const {
    std::set<std::size_t> touched;
    auto terms = unique_terms(query_terms);
    for (std::size_t d = 0; d < tf_.size(); ++d)
        for (const auto& t : terms)
            if (tf_[d].count(t)) {
                touched.insert(d);
                break;
            }
    std::vector<std::pair<std::size_t, double>> out;
    for (auto d : touched) {
        double s = score(terms, d, k1, b);
        if (s > 0) out.emplace_back(d, s);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    return out;
}

// ---------------------------------------------------------------- index

SearchIndex::SearchIndex(std::string session_id, std::vector<Chunk> chunks, std::vector<EmbeddingVector> vectors)
    : session_id_(std::move(session_id)), chunks_(std::move(chunks)), vectors_(std::move(vectors)) {
    if (vectors_.size() != chunks_.size())
        throw Error(Errc::InvalidArgument, "chunk and vector counts differ");
    tokens_.reserve(chunks_.size());
    for (const auto& c : chunks_) {
        tokens_.push_back(search_tokens(c.text));
        for (const auto& t : tokens_.back()) ++vocab_[t];
    }
    bm25_ = Bm25Index(tokens_);
}

SearchIndex SearchIndex::from_session(const LoadedSession& s) { return SearchIndex(s.session_id, s.chunks, s.vectors); }

SearchIndex SearchIndex::build(std::string session_id, std::vector<Chunk> chunks, Embedder& embedder) {
    std::vector<EmbeddingVector> vecs;
    vecs.reserve(chunks.size());
    for (const auto& c : chunks) vecs.push_back(embedder.embed(c.text));
    return SearchIndex(std::move(session_id), std::move(chunks), std::move(vecs));
}

// ---------------------------------------------------------------- stages

std::vector<Candidate> bm25_search(std::string_view query, const SearchIndex& index, const RetrievalConfig& cfg) {
    if (index.chunks().empty()) throw Error(Errc::EmptyIndex, "empty index");
    auto hits = index.bm25().search(search_tokens(query), cfg.bm25_k1, cfg.bm25_b);
    std::stable_sort(hits.begin(), hits.end(), [&](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return index.chunks()[x.first].chunk_id < index.chunks()[y.first].chunk_id;
    });
    std::vector<Candidate> out;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < hits.size() && out.size() < cfg.k_sparse; ++i) {
        Candidate c;
        c.index = hits[i].first;
        c.chunk_id = index.chunks()[c.index].chunk_id;
        if (!seen.insert(c.chunk_id).second) continue;
        c.sparse_score = hits[i].second;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Candidate> dense_search(std::string_view query, const SearchIndex& index, const RetrievalConfig& cfg,
                                    Embedder& embedder) {
    if (index.chunks().empty()) return {};
    EmbeddingVector q = embedder.embed(query);
    std::vector<std::pair<std::size_t, double>> scored;
    scored.reserve(index.chunks().size());
    for (std::size_t i = 0; i < index.vectors().size(); ++i) scored.emplace_back(i, dot(q, index.vectors()[i]));
    std::sort(scored.begin(), scored.end(), [&](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return index.chunks()[x.first].chunk_id < index.chunks()[y.first].chunk_id;
    });
    std::vector<Candidate> out;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < scored.size() && out.size() < cfg.k_dense; ++i) {
        Candidate c;
        c.index = scored[i].first;
        c.chunk_id = index.chunks()[c.index].chunk_id;
        if (!seen.insert(c.chunk_id).second) continue;
        c.dense_score = scored[i].second;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Candidate> keyword_fallback(std::string_view query, const SearchIndex& index) {
    std::vector<std::string> terms;
    for (auto& t : unique_terms(search_tokens(query)))
        if (t.size() >= 3) terms.push_back(t);
    std::vector<Candidate> out;
    if (terms.empty()) return out;
    for (std::size_t i = 0; i < index.chunks().size(); ++i) {
        const auto& toks = index.tokens(i);
        bool hit = std::any_of(terms.begin(), terms.end(),
                               [&](const std::string& t) { return std::find(toks.begin(), toks.end(), t) != toks.end(); });
        if (!hit) continue;
        Candidate c;
        c.index = i;
        c.chunk_id = index.chunks()[i].chunk_id;
        c.keyword_hit = true;
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.chunk_id < b.chunk_id; });
    return out;
}

namespace {

std::map<std::string, double> min_max(const std::vector<Candidate>& list, bool dense) {
    std::map<std::string, double> out;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& c : list) {
        auto v = dense ? c.dense_score : c.sparse_score;
        if (!v) continue;
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
    }
    for (const auto& c : list) {
        auto v = dense ? c.dense_score : c.sparse_score;
        if (!v) continue;
        double norm = hi > lo ? (*v - lo) / (hi - lo) : 1.0;
        auto [it, fresh] = out.emplace(c.chunk_id, norm);
        if (!fresh) it->second = std::max(it->second, norm);
    }
    return out;
}

}  // namespace

std::vector<Candidate> fuse(const std::vector<Candidate>& dense, const std::vector<Candidate>& sparse,
                            const std::vector<Candidate>& fallback, const RetrievalConfig& cfg) {
    auto dn = min_max(dense, true);
    auto sn = min_max(sparse, false);
    std::map<std::string, Candidate> merged;
    auto absorb = [&](const Candidate& c) {
        auto [it, fresh] = merged.emplace(c.chunk_id, c);
        if (fresh) return;
        Candidate& m = it->second;
        if (c.dense_score && (!m.dense_score || *c.dense_score > *m.dense_score)) m.dense_score = c.dense_score;
        if (c.sparse_score && (!m.sparse_score || *c.sparse_score > *m.sparse_score)) m.sparse_score = c.sparse_score;
        m.keyword_hit = m.keyword_hit || c.keyword_hit;
    };
    for (const auto& c : dense) absorb(c);
    for (const auto& c : sparse) absorb(c);
    for (const auto& c : fallback) absorb(c);

    std::vector<Candidate> scored, tail;
    for (auto& [id, c] : merged) {
        bool has_score = dn.count(id) || sn.count(id);
        if (!has_score) {
            c.fused_score.reset();
            tail.push_back(c);
            continue;
        }
        double d = dn.count(id) ? dn[id] : 0.0;
        double s = sn.count(id) ? sn[id] : 0.0;
        c.fused_score = cfg.alpha * d + (1.0 - cfg.alpha) * s;
        scored.push_back(c);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Candidate& a, const Candidate& b) {
        if (*a.fused_score != *b.fused_score) return *a.fused_score > *b.fused_score;
        return a.chunk_id < b.chunk_id;
    });
    // `merged` is keyed by chunk_id, so the tail is already in id order.
    scored.insert(scored.end(), tail.begin(), tail.end());
    return scored;
}

// ---------------------------------------------------------------- rerank

double token_set_f1(std::string_view query, std::string_view text) {
    auto qv = search_tokens(query);
    auto tv = search_tokens(text);
    std::set<std::string> q(qv.begin(), qv.end()), t(tv.begin(), tv.end());
    if (q.empty() || t.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& x : q) inter += t.count(x);
    if (inter == 0) return 0.0;
    double p = static_cast<double>(inter) / static_cast<double>(t.size());
    double r = static_cast<double>(inter) / static_cast<double>(q.size());
    return 2 * p * r / (p + r);
}

std::vector<double> LexicalReranker::score(std::string_view query, const std::vector<std::string>& texts) {
    std::vector<double> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(token_set_f1(query, t));
    return out;
}

RemoteCrossEncoder::RemoteCrossEncoder(std::string base_url, std::shared_ptr<HttpTransport> transport,
                                       std::ptrdiff_t max_in_flight)
    : base_(Url::parse(base_url)), transport_(std::move(transport)), slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 64)) {}

std::vector<double> RemoteCrossEncoder::score(std::string_view query, const std::vector<std::string>& texts) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{slots_};
    std::vector<double> out;
    try {
        auto reply = post_json(*transport_, base_.join("/rerank"), Json{{"query", std::string(query)}, {"texts", texts}});
        for (const auto& s : reply.at("scores")) out.push_back(s.get<double>());
    } catch (const std::exception& e) {
        throw Error(Errc::RerankerUnavailable, std::string("reranker: ") + e.what());
    }
    if (out.size() != texts.size()) throw Error(Errc::RerankerUnavailable, "reranker: score count mismatch");
    return out;
}

std::vector<Candidate> rerank(std::string_view query, std::vector<Candidate> candidates, const SearchIndex& index,
                              Reranker& reranker) {
    if (candidates.size() <= 1) {
        if (candidates.size() == 1) {
            auto s = reranker.score(query, {index.chunks()[candidates[0].index].text});
            candidates[0].rerank_score = s.at(0);
        }
        return candidates;
    }
    std::vector<std::string> texts;
    texts.reserve(candidates.size());
    for (const auto& c : candidates) texts.push_back(index.chunks()[c.index].text);
    auto scores = reranker.score(query, texts);
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].rerank_score = scores[i];
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return *a.rerank_score > *b.rerank_score; });
    return candidates;
}

EvidenceBundle retrieve(std::string_view query, const SearchIndex& index, const RetrievalConfig& cfg,
                        Embedder& embedder, Reranker* reranker) {
    cfg.validate();
    EvidenceBundle bundle;
    bundle.query = std::string(query);
    bundle.mode = cfg.mode;
    bundle.session_id = index.session_id();
    if (index.chunks().empty()) throw Error(Errc::EmptyIndex, "empty index");
    if (cfg.top_k == 0) return bundle;

    std::vector<Candidate> final_list;
    if (cfg.mode == RetrievalMode::DenseOnly) {
        final_list = dense_search(query, index, cfg, embedder);
    } else {
        auto dense = dense_search(query, index, cfg, embedder);
        auto sparse = bm25_search(query, index, cfg);
        auto fallback = keyword_fallback(query, index);
        final_list = fuse(dense, sparse, fallback, cfg);
        if (cfg.rerank != RerankKind::Off) {
            LexicalReranker lexical;
            Reranker* r = reranker;
            if (!r && cfg.rerank == RerankKind::LexicalFallback) r = &lexical;
            if (!r) {
                bundle.degraded = true;
            } else {
                try {
                    auto reranked = rerank(query, final_list, index, *r);
                    final_list = std::move(reranked);
                } catch (const Error& e) {
                    if (e.code() != Errc::RerankerUnavailable) throw;
                    bundle.degraded = true;
                }
            }
        }
    }
    if (final_list.size() > cfg.top_k) final_list.resize(cfg.top_k);
    for (auto& c : final_list) bundle.ranked.emplace_back(c, index.chunks()[c.index]);
    return bundle;
}

}  // namespace iotlens
