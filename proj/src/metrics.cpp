#include "iotlens/metrics.hpp"

#include <sys/resource.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>
#include <unordered_map>

#include "iotlens/common.hpp"

namespace iotlens {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> require_reference(std::string_view reference) {
    auto r = metric_tokens(reference);
    if (r.empty()) throw Error(Errc::EmptyReference, "reference has no tokens");
    return r;
}

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& t, std::size_t n) {
    std::map<Ngram, std::size_t> out;
    if (t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Ngram(t.begin() + i, t.begin() + i + n)];
    return out;
}

double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

std::size_t overlap(const std::map<Ngram, std::size_t>& a, const std::map<Ngram, std::size_t>& b) {
    std::size_t n = 0;
    for (const auto& [g, c] : a) {
        auto it = b.find(g);
        if (it != b.end()) n += std::min(c, it->second);
    }
    return n;
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_alnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if ((c == '.' || c == ':') && !cur.empty() && i + 1 < text.size() && is_alnum(text[i + 1])) {
            cur.push_back(c);
        } else {
            flush();
            out.emplace_back(1, c);
        }
    }
    flush();
    return out;
}

// ---------------------------------------------------------------- BLEU

double bleu(std::string_view candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw Error(Errc::EmptyReference, "no references");
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references) refs.push_back(require_reference(r));
    auto cand = metric_tokens(candidate);
    if (cand.empty()) return 0.0;

    double log_sum = 0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto cc = ngram_counts(cand, n);
        if (cc.empty()) break;  // candidate shorter than n
        std::map<Ngram, std::size_t> max_ref;
        for (const auto& r : refs)
            for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t total = cand.size() - n + 1;
        std::size_t clipped = overlap(cc, max_ref);
        if (n == 1 && clipped == 0) return 0.0;
        double p = clipped > 0 ? static_cast<double>(clipped) / static_cast<double>(total)
                               : 1.0 / (2.0 * static_cast<double>(total));
        log_sum += std::log(p);
        ++orders;
    }

    // closest reference length, shorter on ties
    double c = static_cast<double>(cand.size());
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
        auto d = std::abs(static_cast<double>(r.size()) - c);
        auto bd = std::abs(static_cast<double>(best) - c);
        if (d < bd || (d == bd && r.size() < best)) best = r.size();
    }
    double r = static_cast<double>(best);
    double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return 100.0 * bp * std::exp(log_sum / static_cast<double>(orders));
}

double bleu(std::string_view candidate, std::string_view reference) {
    return bleu(candidate, std::vector<std::string>{std::string(reference)});
}

// ---------------------------------------------------------------- ROUGE

RougeScores rouge(std::string_view candidate, std::string_view reference) {
    auto ref = require_reference(reference);
    auto cand = metric_tokens(candidate);
    RougeScores s;
    if (cand.empty()) return s;
    auto ngram_f = [&](std::size_t n) {
        auto cc = ngram_counts(cand, n);
        auto rc = ngram_counts(ref, n);
        if (cc.empty() || rc.empty()) return 0.0;
        double hit = static_cast<double>(overlap(cc, rc));
        return 100.0 * f1(hit / static_cast<double>(cand.size() - n + 1), hit / static_cast<double>(ref.size() - n + 1));
    };
    s.r1 = ngram_f(1);
    s.r2 = ngram_f(2);
    double l = static_cast<double>(lcs(cand, ref));
    s.rl = 100.0 * f1(l / static_cast<double>(cand.size()), l / static_cast<double>(ref.size()));
    return s;
}

double rouge1_recall(std::string_view candidate, std::string_view reference) {
    auto ref = require_reference(reference);
    auto cand = metric_tokens(candidate);
    return 100.0 * static_cast<double>(overlap(ngram_counts(cand, 1), ngram_counts(ref, 1))) /
           static_cast<double>(ref.size());
}

// ---------------------------------------------------------------- METEOR

namespace {

struct Alignment {
    std::vector<long> ref_of;  // per candidate token, -1 when unmatched
    std::size_t matches = 0;
    std::size_t exact = 0;
    std::size_t chunks = 0;
};

std::size_t count_chunks(const std::vector<long>& ref_of) {
    std::size_t chunks = 0;
    for (std::size_t i = 0; i < ref_of.size(); ++i) {
        if (ref_of[i] < 0) continue;
        bool continues = i > 0 && ref_of[i - 1] >= 0 && ref_of[i - 1] + 1 == ref_of[i];
        if (!continues) ++chunks;
    }
    return chunks;
}

// Stage one aligns equal tokens, stage two equal stems among the leftovers.
// Within a stage, prefer the reference slot right after the previous match.
Alignment greedy_align(const std::vector<std::string>& c, const std::vector<std::string>& r,
                       const std::vector<std::string>& cs, const std::vector<std::string>& rs) {
    Alignment a;
    a.ref_of.assign(c.size(), -1);
    std::vector<bool> used(r.size(), false);
    for (int stage = 0; stage < 2; ++stage) {
        const auto& ck = stage == 0 ? c : cs;
        const auto& rk = stage == 0 ? r : rs;
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (a.ref_of[i] >= 0) continue;
            long pick = -1;
            if (i > 0 && a.ref_of[i - 1] >= 0) {
                auto j = static_cast<std::size_t>(a.ref_of[i - 1] + 1);
                if (j < r.size() && !used[j] && rk[j] == ck[i]) pick = static_cast<long>(j);
            }
            for (std::size_t j = 0; pick < 0 && j < r.size(); ++j)
                if (!used[j] && rk[j] == ck[i]) pick = static_cast<long>(j);
            if (pick >= 0) {
                a.ref_of[i] = pick;
                used[static_cast<std::size_t>(pick)] = true;
                ++a.matches;
                if (stage == 0) ++a.exact;
            }
        }
    }
    a.chunks = count_chunks(a.ref_of);
    return a;
}

// Bounded search for an alignment with the same match counts and fewer chunks.
class ChunkSearch {
public:
    ChunkSearch(const std::vector<std::string>& c, const std::vector<std::string>& r, const std::vector<std::string>& cs,
                const std::vector<std::string>& rs, Alignment best)
        : c_(c), r_(r), cs_(cs), rs_(rs), best_(std::move(best)), used_(r.size(), false), cur_(c.size(), -1) {}

    Alignment run() {
        dfs(0, 0, 0, 0);
        return best_;
    }

private:
    void dfs(std::size_t i, std::size_t matches, std::size_t exact, std::size_t chunks) {
        if (++nodes_ > kBudget || chunks >= best_.chunks) return;
        if (matches + (c_.size() - i) < best_.matches) return;
        if (i == c_.size()) {
            if (matches == best_.matches && exact == best_.exact) {
                best_.ref_of = cur_;
                best_.chunks = chunks;
            }
            return;
        }
        // continuation first so good solutions are found early
        std::vector<std::pair<std::size_t, bool>> opts;
        long prev = i > 0 ? cur_[i - 1] : -1;
        auto consider = [&](std::size_t j) {
            if (used_[j]) return;
            if (r_[j] == c_[i]) opts.push_back({j, true});
            else if (rs_[j] == cs_[i]) opts.push_back({j, false});
        };
        if (prev >= 0 && static_cast<std::size_t>(prev + 1) < r_.size()) consider(static_cast<std::size_t>(prev + 1));
        for (std::size_t j = 0; j < r_.size(); ++j)
            if (static_cast<long>(j) != prev + 1 || prev < 0) consider(j);
        for (auto [j, is_exact] : opts) {
            bool cont = prev >= 0 && static_cast<long>(j) == prev + 1;
            used_[j] = true;
            cur_[i] = static_cast<long>(j);
            dfs(i + 1, matches + 1, exact + (is_exact ? 1 : 0), chunks + (cont ? 0 : 1));
            used_[j] = false;
            cur_[i] = -1;
        }
        dfs(i + 1, matches, exact, chunks);
    }

    static constexpr std::size_t kBudget = 200000;
    const std::vector<std::string>& c_;
    const std::vector<std::string>& r_;
    const std::vector<std::string>& cs_;
    const std::vector<std::string>& rs_;
    Alignment best_;
    std::vector<bool> used_;
    std::vector<long> cur_;
    std::size_t nodes_ = 0;
};

}  // namespace

MeteorDetail meteor_detail(std::string_view candidate, std::string_view reference) {
    auto r = require_reference(reference);
    auto c = metric_tokens(candidate);
    MeteorDetail d;
    if (c.empty()) return d;
    std::vector<std::string> cs, rs;
    for (const auto& t : c) cs.push_back(light_stem(t));
    for (const auto& t : r) rs.push_back(light_stem(t));
    Alignment a = greedy_align(c, r, cs, rs);
    if (a.matches == 0) return d;
    if (a.chunks > 1) a = ChunkSearch(c, r, cs, rs, a).run();

    double m = static_cast<double>(a.matches);
    double p = m / static_cast<double>(c.size());
    double rc = m / static_cast<double>(r.size());
    const double alpha = 0.9, gamma = 0.5, beta = 3.0;
    double fmean = p * rc / (alpha * p + (1 - alpha) * rc);
    double penalty = gamma * std::pow(static_cast<double>(a.chunks) / m, beta);
    d.matches = a.matches;
    d.chunks = a.chunks;
    d.score = 100.0 * fmean * (1 - penalty);
    return d;
}

double meteor(std::string_view candidate, std::string_view reference) {
    return meteor_detail(candidate, reference).score;
}

// ---------------------------------------------------------------- BERTScore

BertScore bertscore(std::string_view candidate, std::string_view reference, Embedder& embedder) {
    auto keep = [](std::string_view text) {
        std::vector<std::string> out;
        for (auto& t : metric_tokens(text))
            if (std::any_of(t.begin(), t.end(), is_alnum)) out.push_back(std::move(t));
        return out;
    };
    auto ref = keep(reference);
    if (ref.empty()) throw Error(Errc::EmptyReference, "reference has no tokens");
    auto cand = keep(candidate);
    BertScore s;
    if (cand.empty()) return s;

    std::unordered_map<std::string, EmbeddingVector> cache;
    auto vec = [&](const std::string& t) -> const EmbeddingVector& {
        auto it = cache.find(t);
        if (it == cache.end()) it = cache.emplace(t, embedder.embed(t)).first;
        return it->second;
    };
    std::vector<std::vector<double>> sim(cand.size(), std::vector<double>(ref.size()));
    for (std::size_t i = 0; i < cand.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j) sim[i][j] = dot(vec(cand[i]), vec(ref[j]));

    double p = 0, r = 0;
    for (std::size_t i = 0; i < cand.size(); ++i) p += *std::max_element(sim[i].begin(), sim[i].end());
    for (std::size_t j = 0; j < ref.size(); ++j) {
        double best = -1.0;
        for (std::size_t i = 0; i < cand.size(); ++i) best = std::max(best, sim[i][j]);
        r += best;
    }
    p /= static_cast<double>(cand.size());
    r /= static_cast<double>(ref.size());
    s.p = 100.0 * p;
    s.r = 100.0 * r;
    s.f = p + r > 0 ? 100.0 * 2 * p * r / (p + r) : 0.0;
    return s;
}

MetricReport score_all(std::string_view candidate, std::string_view reference, Embedder& embedder) {
    MetricReport m;
    m.bleu = bleu(candidate, reference);
    auto rg = rouge(candidate, reference);
    m.rouge1 = rg.r1;
    m.rouge2 = rg.r2;
    m.rougeL = rg.rl;
    m.meteor = meteor(candidate, reference);
    auto b = bertscore(candidate, reference, embedder);
    m.bert_p = b.p;
    m.bert_r = b.r;
    m.bert_f = b.f;
    return m;
}

// ---------------------------------------------------------------- profiling

const std::vector<std::string>& profile_field_names() {
    static const std::vector<std::string> names = {
        "Execution Time (s)",   "Memory Usage (MB)",     "GPU Memory Used (MB)",
        "CPU Utilization (%)",  "Avg. number of tokens", "Avg. Response size (bytes)",
    };
    return names;
}

std::vector<double> profile_values(const ProfileReport& p) {
    return {p.exec_time_s, p.mem_mb, p.gpu_mem_mb, p.cpu_pct, p.avg_tokens, p.avg_response_bytes};
}

double peak_rss_mb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            long kb = std::strtol(line.c_str() + 6, nullptr, 10);
            return static_cast<double>(kb) / 1024.0;
        }
    }
    return 0.0;
}

namespace {

double wall_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

double cpu_seconds() {
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    auto tv = [](const timeval& t) { return static_cast<double>(t.tv_sec) + static_cast<double>(t.tv_usec) / 1e6; };
    return tv(ru.ru_utime) + tv(ru.ru_stime);
}

double mean(const std::vector<std::size_t>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (auto x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
}

}  // namespace

Profiler::Profiler(GpuProbe gpu)
    : gpu_(gpu),
      start_wall_(wall_seconds()),
      start_cpu_(cpu_seconds()),
      start_hwm_mb_(peak_rss_mb()),
      start_gpu_mb_(gpu ? gpu() : 0.0) {}

ProfileReport Profiler::finish(const std::vector<std::size_t>& tokens,
                               const std::vector<std::size_t>& response_bytes) const {
    ProfileReport p;
    double wall = wall_seconds() - start_wall_;
    // strictly positive even for sub-tick windows
    p.exec_time_s = std::max(wall, 1e-9);
    p.mem_mb = std::max(0.0, peak_rss_mb() - start_hwm_mb_);
    double cores = std::max(1u, std::thread::hardware_concurrency());
    p.cpu_pct = std::max(0.0, 100.0 * (cpu_seconds() - start_cpu_) / (p.exec_time_s * cores));
    p.gpu_mem_mb = gpu_ ? std::max(0.0, gpu_() - start_gpu_mb_) : 0.0;
    p.avg_tokens = mean(tokens);
    p.avg_response_bytes = mean(response_bytes);
    return p;
}

}  // namespace iotlens
