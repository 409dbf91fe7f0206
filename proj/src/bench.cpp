#include "iotlens/bench.hpp"

#include <cstdio>
#include <sstream>

namespace iotlens {

std::vector<QAPair> parse_qa_set(std::string_view jsonl) {
    std::vector<QAPair> out;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw Error(Errc::InvalidArgument, "qa set line " + std::to_string(lineno) + ": " + e.what());
        }
        QAPair q;
        q.question = j.value("question", std::string());
        q.reference_answer = j.value("reference_answer", std::string());
        q.source_modality = j.value("source_modality", std::string());
        q.pcap_id = j.value("pcap_id", std::string());
        if (trim(q.question).empty() || trim(q.reference_answer).empty())
            throw Error(Errc::InvalidArgument, "qa set line " + std::to_string(lineno) + ": empty question or reference");
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<QAPair> load_qa_set(const std::filesystem::path& file) { return parse_qa_set(read_file(file)); }

std::size_t whitespace_tokens(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::size_t n = 0;
    std::string w;
    while (in >> w) ++n;
    return n;
}

namespace {

MetricReport mean_of(const std::vector<MetricReport>& v) {
    MetricReport m;
    if (v.empty()) return m;
    for (const auto& r : v) {
        m.bleu += r.bleu;
        m.rouge1 += r.rouge1;
        m.rouge2 += r.rouge2;
        m.rougeL += r.rougeL;
        m.meteor += r.meteor;
        m.bert_p += r.bert_p;
        m.bert_r += r.bert_r;
        m.bert_f += r.bert_f;
    }
    double n = static_cast<double>(v.size());
    for (double* f : {&m.bleu, &m.rouge1, &m.rouge2, &m.rougeL, &m.meteor, &m.bert_p, &m.bert_r, &m.bert_f}) *f /= n;
    return m;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

BenchResult run_benchmark(const std::vector<QAPair>& qa, BenchDeps deps, const AgentConfig& cfg) {
    BenchResult result;
    if (qa.empty()) return result;
    for (RetrievalMode mode : {RetrievalMode::DenseOnly, RetrievalMode::Hybrid}) {
        AgentConfig arm_cfg = cfg;
        arm_cfg.retrieval.mode = mode;
        std::vector<MetricReport> metrics;
        std::vector<std::size_t> tokens, bytes;
        Profiler arm_profiler(deps.gpu);
        for (std::size_t i = 0; i < qa.size(); ++i) {
            Profiler row_profiler(deps.gpu);
            AgentRun run = answer(qa[i].question,
                                  AgentDeps{deps.index, deps.embedder, deps.chat, deps.search, deps.reranker, nullptr},
                                  arm_cfg);
            BenchRow row;
            row.qa_index = i;
            row.mode = mode;
            row.answer = run.answer.text;
            row.source_class = run.answer.source_class;
            row.tokens = run.answer.tokens.value_or(whitespace_tokens(row.answer));
            row.profile = row_profiler.finish({row.tokens}, {row.answer.size()});
            row.metrics = score_all(row.answer, qa[i].reference_answer, deps.score_embedder);
            metrics.push_back(row.metrics);
            tokens.push_back(row.tokens);
            bytes.push_back(row.answer.size());
            result.rows.push_back(std::move(row));
        }
        ArmSummary arm;
        arm.mode = mode;
        arm.profile = arm_profiler.finish(tokens, bytes);
        arm.mean = mean_of(metrics);
        result.arms.push_back(arm);
    }
    return result;
}

std::string BenchResult::to_csv() const {
    std::ostringstream out;
    out << "qa_index,mode,source_class,bleu,rouge1,rouge2,rougeL,meteor,bert_p,bert_r,bert_f";
    for (const auto& f : profile_field_names()) out << "," << csv_field(f);
    out << ",answer\n";
    for (const auto& r : rows) {
        out << r.qa_index << "," << mode_name(r.mode) << "," << source_class_name(r.source_class);
        const auto& m = r.metrics;
        for (double v : {m.bleu, m.rouge1, m.rouge2, m.rougeL, m.meteor, m.bert_p, m.bert_r, m.bert_f}) out << "," << num(v);
        for (double v : profile_values(r.profile)) out << "," << num(v);
        out << "," << csv_field(r.answer) << "\n";
    }
    return out.str();
}

std::string BenchResult::to_markdown() const {
    std::ostringstream out;
    if (arms.empty()) return "No benchmark questions.\n";
    out << "| Metric |";
    for (const auto& a : arms) out << " " << (a.mode == RetrievalMode::DenseOnly ? "Dense" : "Hybrid") << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < arms.size(); ++i) out << "---|";
    out << "\n";
    auto row = [&](const std::string& label, auto get) {
        out << "| " << label << " |";
        for (const auto& a : arms) out << " " << get(a) << " |";
        out << "\n";
    };
    row("BERT (p/r/f)", [](const ArmSummary& a) {
        return num(a.mean.bert_p) + " / " + num(a.mean.bert_r) + " / " + num(a.mean.bert_f);
    });
    row("ROUGE (r1/r2/rL)", [](const ArmSummary& a) {
        return num(a.mean.rouge1) + " / " + num(a.mean.rouge2) + " / " + num(a.mean.rougeL);
    });
    row("BLEU", [](const ArmSummary& a) { return num(a.mean.bleu); });
    row("METEOR", [](const ArmSummary& a) { return num(a.mean.meteor); });

    out << "\n| Resource |";
    for (const auto& a : arms) out << " " << (a.mode == RetrievalMode::DenseOnly ? "Dense" : "Hybrid") << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < arms.size(); ++i) out << "---|";
    out << "\n";
    const auto& names = profile_field_names();
    for (std::size_t f = 0; f < names.size(); ++f) {
        out << "| " << names[f] << " |";
        for (const auto& a : arms) out << " " << num(profile_values(a.profile)[f]) << " |";
        out << "\n";
    }
    return out.str();
}

}  // namespace iotlens
