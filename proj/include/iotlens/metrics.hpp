#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "iotlens/embed.hpp"

namespace iotlens {

/// Lowercased tokens. Punctuation becomes its own token, except '.' and ':'
/// between two alphanumerics ("10.0.0.2", "a:b" stay whole).
std::vector<std::string> metric_tokens(std::string_view text);

/// BLEU-4 on 0..100. Effective order: n-gram orders the candidate is too
/// short to have are left out of the geometric mean. A zero precision with
/// count_n candidate n-grams becomes 1/(2*count_n). No unigram match gives 0.
double bleu(std::string_view candidate, const std::vector<std::string>& references);
double bleu(std::string_view candidate, std::string_view reference);

struct RougeScores {
    double r1 = 0, r2 = 0, rl = 0;
};
RougeScores rouge(std::string_view candidate, std::string_view reference);
/// Unigram recall on 0..100, used by the monotonicity property.
double rouge1_recall(std::string_view candidate, std::string_view reference);

struct MeteorDetail {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double score = 0;
};
/// Exact then stem matching; alpha 0.9, gamma 0.5, beta 3.
MeteorDetail meteor_detail(std::string_view candidate, std::string_view reference);
double meteor(std::string_view candidate, std::string_view reference);

struct BertScore {
    double p = 0, r = 0, f = 0;
};
/// Greedy cosine matching of per-token embeddings. Tokens without any
/// alphanumeric character are ignored.
BertScore bertscore(std::string_view candidate, std::string_view reference, Embedder& embedder);

struct MetricReport {
    double bleu = 0;
    double rouge1 = 0, rouge2 = 0, rougeL = 0;
    double meteor = 0;
    double bert_p = 0, bert_r = 0, bert_f = 0;
};
MetricReport score_all(std::string_view candidate, std::string_view reference, Embedder& embedder);

struct ProfileReport {
    double exec_time_s = 0;
    double mem_mb = 0;
    double cpu_pct = 0;
    double gpu_mem_mb = 0;
    double avg_tokens = 0;
    double avg_response_bytes = 0;
};

/// Row labels of the resource table, in field order.
const std::vector<std::string>& profile_field_names();
std::vector<double> profile_values(const ProfileReport& p);

/// Optional device memory probe in MB; unset means no device.
using GpuProbe = double (*)();

/// Wall time, peak-RSS growth, process CPU share across logical cores.
class Profiler {
public:
    explicit Profiler(GpuProbe gpu = nullptr);
    /// Closes the measurement window. Tokens and bytes are per-response
    /// samples whose means are reported.
    ProfileReport finish(const std::vector<std::size_t>& tokens, const std::vector<std::size_t>& response_bytes) const;

private:
    GpuProbe gpu_;
    double start_wall_;
    double start_cpu_;
    double start_hwm_mb_;
    double start_gpu_mb_;
};

/// Peak resident set (VmHWM) in MB, 0 when unavailable.
double peak_rss_mb();

}  // namespace iotlens
