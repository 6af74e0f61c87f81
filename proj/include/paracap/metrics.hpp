#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "paracap/alignment.hpp"
#include "paracap/dataset.hpp"
#include "paracap/text.hpp"

namespace paracap::metrics {

/// Clipped n-gram matches and candidate n-gram totals for orders 1..4, plus lengths.
struct BleuStats {
    std::array<double, 4> matches{};
    std::array<double, 4> totals{};
    double candidate_length = 0;
    double reference_length = 0;

    void add(const TokenList& candidate, const TokenList& reference);
    /// Geometric mean of precisions 1..n times the brevity penalty.
    double score(int n) const;
};

/// Corpus BLEU-n with one reference per image. Throws on an empty corpus or
/// mismatched list sizes.
double bleu(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references, int n);

struct CiderResult {
    double corpus = 0.0;              // mean of per_image
    std::vector<double> per_image;
};

inline constexpr double kCiderSigma = 6.0;

/// CIDEr-D: clipped TF-IDF cosine per order 1..max_n with a Gaussian length
/// penalty, averaged over orders and scaled by 10. IDF is ln(N / max(1, df)),
/// df counted over reference documents.
CiderResult cider(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
                  double sigma = kCiderSigma, int max_n = 4);

/// Occurrence count per object label within one paragraph.
struct MentionCounts {
    std::map<std::string, int> counts;

    std::set<std::string> distinct() const;
    int count(const std::string& label) const;
};

/// Finds label mentions: exact match of the label's full token span, else a
/// single word whose vector is within `threshold` cosine of the label vector.
class MentionDetector {
public:
    MentionDetector(const EmbeddingTable* table, double threshold);

    /// Precomputes label vectors (warns once per all-OOV label). Must be called
    /// before count() for any label that should use the embedding fallback.
    void prepare(const std::set<std::string>& labels);
    MentionCounts count(const std::vector<TokenList>& paragraph, const std::set<std::string>& labels) const;

private:
    const EmbeddingTable* table_;
    double threshold_;
    std::unordered_map<std::string, std::vector<double>> label_vectors_;
    double similarity(const std::vector<double>& label_vec, const std::string& word) const;
};

MentionCounts detect_mentions(const std::vector<TokenList>& paragraph, const std::set<std::string>& labels,
                              const EmbeddingTable* table, double threshold);

/// Normalised label key: tokens joined by single spaces.
std::string label_key(const std::string& label);
std::set<std::string> image_labels(const ImageRecord& image);

inline constexpr int kRepetitionThreshold = 4;

struct ObjectCounts {
    double o_cap = 0;
    double o_g = 0;
    double o_g_cap = 0;
    double rc_cap = 0;  // percent
    double rep4 = 0;
};

/// Per-image object counts from candidate and ground-truth mentions.
ObjectCounts object_counts(const MentionCounts& candidate, const MentionCounts& ground_truth);

/// Ratio of means as a percentage; 0 when mean_g is 0.
double coverage_rate(double mean_g_cap, double mean_g);

struct ObjectMetrics {
    std::vector<std::pair<std::string, ObjectCounts>> images;
    ObjectCounts mean;  // rc_cap is the ratio of the means
    std::vector<std::string> skipped;
};

/// Corpus means of per-image counts, with rc_cap = coverage_rate(mean o_g_cap, mean o_g).
ObjectCounts aggregate(const std::vector<ObjectCounts>& rows);

ObjectMetrics object_metrics(const CaptionSet& captions, const Dataset& dataset, const EmbeddingTable* table,
                             double threshold, int jobs = 1);

struct MetricValues {
    std::array<double, 4> bleu{};
    double cider = 0;
    ObjectCounts objects;
};

struct ImageMetrics {
    std::string image_id;
    MetricValues values;
};

struct MetricsReport {
    nlohmann::ordered_json config;  // run parameters, echoed into every serialization
    MetricValues corpus;
    std::vector<ImageMetrics> images;
    std::vector<std::string> skipped;
};

struct EvalConfig {
    double threshold = kDefaultAlignThreshold;
    double sigma = kCiderSigma;
    int max_n = 4;
    int jobs = 1;
};

/// Scores every dataset image that has a caption. Images without a caption
/// are skipped (warned and listed); a caption for an unknown image id is a
/// ValidationError, as is having no image in common.
MetricsReport evaluate(const CaptionSet& captions, const Dataset& dataset, const EmbeddingTable* table,
                       const EvalConfig& config);

/// Field order shared by the JSON and CSV writers.
const std::vector<std::string>& metric_fields();

nlohmann::ordered_json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& doc);
std::string report_to_csv(const MetricsReport& report);
std::string report_to_markdown(const MetricsReport& report);

}  // namespace paracap::metrics
