#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iotlens/capture.hpp"
#include "iotlens/flows.hpp"
#include "iotlens/http.hpp"

namespace iotlens {

enum class RowKind { Packet, Flow };

struct FeatureRow {
    RowKind kind = RowKind::Packet;
    std::vector<std::pair<std::string, std::string>> values;

    // Provenance, never serialized into the text.
    std::optional<IpAddr> src_ip, dst_ip;
    std::vector<std::uint64_t> frames;  // contributing frame numbers

    const std::string* value(std::string_view name) const;
};

/// The 24 feature names, in serialization order. Packet and flow rows share
/// the schema; attributes that do not apply are "0" (numeric) or ""
/// (categorical: http.request.method).
const std::vector<std::string>& feature_schema();

/// One row per packet (file order) followed by one row per flow (flow
/// order). Context features (ctx_pkt_count, syn_count, ack_ratio,
/// distinct_dst_ports, pkt_rate) describe all packets sent from the row's
/// source IP to its destination IP in this capture.
std::vector<FeatureRow> extract_features(const std::vector<PacketRecord>& packets,
                                         const std::vector<FlowRecord>& flows);

/// `name:value` pairs joined by single spaces. Values are escaped so the
/// encoding stays injective: '\' -> "\\", ':' -> "\:", ' ' -> "\_".
std::string textualize(const FeatureRow& row);
std::string escape_feature_value(std::string_view v);

/// Inverse of textualize for well-formed input.
std::vector<std::pair<std::string, std::string>> parse_feature_text(std::string_view text);

enum class ClassLabel {
    Normal,
    MITM,
    Fingerprinting,
    Ransomware,
    Uploading,
    SQL_Injection,
    DDoS_HTTP,
    DDoS_TCP,
    Password,
    Port_Scanning,
    Vul_Scanner,
    Backdoor,
    XSS,
    DDoS_UDP,
    DDoS_ICMP,
};

inline constexpr int kClassLabelCount = 15;

std::string_view label_name(ClassLabel l);
std::optional<ClassLabel> parse_label(std::string_view s);
const std::vector<ClassLabel>& all_labels();

struct Classification {
    ClassLabel label = ClassLabel::Normal;
    double confidence = 0.0;
};

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual Classification classify(std::string_view text) = 0;
};

/// Deterministic rule table, first match wins:
///   syn_count >= 100 and ack_ratio <= 0.1                    -> DDoS_TCP
///   ip.proto == 17, ctx_pkt_count >= 1000, pkt_rate >= 100    -> DDoS_UDP
///   ip.proto == 1, ctx_pkt_count >= 500, pkt_rate >= 50       -> DDoS_ICMP
///   distinct_dst_ports >= 100                                 -> Port_Scanning
///   otherwise                                                 -> Normal
/// Rule hits carry confidence 0.95, the default 0.60.
class ReferenceRules : public Classifier {
public:
    Classification classify(std::string_view text) override;
};

/// POST {base}/classify {"text"} -> {"label","confidence"}. Throws
/// ModelUnavailable on transport failure or an unknown label.
class RemoteModel : public Classifier {
public:
    explicit RemoteModel(std::string base_url, std::shared_ptr<HttpTransport> transport = default_transport());
    Classification classify(std::string_view text) override;

private:
    Url base_;
    std::shared_ptr<HttpTransport> transport_;
};

/// Remote first; on ModelUnavailable the reference rules answer.
class FallbackClassifier : public Classifier {
public:
    FallbackClassifier(std::unique_ptr<Classifier> primary, std::unique_ptr<Classifier> fallback);
    Classification classify(std::string_view text) override;
    std::size_t fallbacks() const { return fallbacks_; }

private:
    std::unique_ptr<Classifier> primary_, fallback_;
    std::size_t fallbacks_ = 0;
};

Classification classify(std::string_view text, Classifier& clf);

struct AttackMetadata {
    std::set<std::pair<std::string, std::string>> ip_pairs;
    std::set<std::string> mqtt_topics;
    std::set<std::string> dns_queries;
    std::set<int> modbus_unit_ids;
    std::set<std::string> http_methods_paths;
};

struct AttackSection {
    std::string narrative;
    std::string guidance;
};

enum class SectionKind { Global, Narrative, Metadata };

struct ReportSection {
    SectionKind kind = SectionKind::Global;
    std::optional<ClassLabel> label;
    std::string text;
};

struct InterpretationReport {
    std::size_t total_rows = 0;
    std::map<ClassLabel, std::size_t> counts;
    std::string global_summary;
    std::optional<AttackSection> normal;  // present iff Normal rows exist
    std::map<ClassLabel, AttackSection> per_attack;
    std::map<ClassLabel, AttackMetadata> metadata;
    /// Threat-intelligence blocks appended to metadata subsections.
    std::map<ClassLabel, std::vector<std::string>> intel_blocks;

    std::vector<ReportSection> sections() const;
    std::string render() const;
};

/// `labels[i]` classifies `rows[i]`. Metadata is aggregated from the
/// packets that contributed to each row.
InterpretationReport build_report(const std::vector<FeatureRow>& rows, const std::vector<Classification>& labels,
                                  const std::vector<PacketRecord>& packets);

/// CSV with header row_id,label,confidence.
std::string predictions_csv(const std::vector<Classification>& labels);

}  // namespace iotlens
