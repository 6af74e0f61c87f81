#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "paracap/dataset.hpp"
#include "paracap/text.hpp"

namespace paracap {

/// Static per-token word vectors of a single dimension.
struct EmbeddingTable {
    int dim = 0;
    std::unordered_map<std::string, std::vector<double>> vectors;

    const std::vector<double>* find(const std::string& token) const;
    std::size_t size() const { return vectors.size(); }
};

/// Text vector format: header `<count> <d>`, then `token f1 ... fd` per line.
/// Duplicate tokens keep the last vector (with a warning). A line with the
/// wrong number of values is a ValidationError naming the line.
EmbeddingTable parse_embeddings(std::istream& in, const std::string& source = "<stream>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

/// u.v / (|u||v|), clamped to [-1, 1]. A zero vector yields 0 and a warning.
double cosine(std::span<const double> u, std::span<const double> v);

/// Mean of the label's in-vocabulary token vectors. All-OOV gives a zero
/// vector and a warning.
std::vector<double> embed_label(const std::string& label, const EmbeddingTable& table);

/// Scores object labels against the words of a sentence.
class SimilarityBackend {
public:
    virtual ~SimilarityBackend() = default;
    /// Row-major labels.size() x tokens.size() similarity matrix.
    virtual std::vector<double> similarity(std::span<const std::string> labels, const TokenList& tokens) const = 0;
};

/// Cosine similarity between mean-pooled label vectors and static word vectors.
/// OOV words score 0 against every label.
class StaticEmbeddingBackend final : public SimilarityBackend {
public:
    explicit StaticEmbeddingBackend(const EmbeddingTable& table) : table_(table) {}
    std::vector<double> similarity(std::span<const std::string> labels, const TokenList& tokens) const override;

private:
    const EmbeddingTable& table_;
};

struct AlignmentRecord {
    std::string image_id;
    std::vector<std::vector<int>> sentences;    // sr_i: ordered object ids per sentence
    std::vector<std::vector<double>> scores;    // best similarity of each assignment

    bool empty() const;
    friend bool operator==(const AlignmentRecord&, const AlignmentRecord&) = default;
};

inline constexpr double kDefaultAlignThreshold = 0.6;

/// Assigns object o to sentence i iff some word of the sentence reaches
/// similarity >= threshold with o's label. Within a sentence, objects are
/// ordered by their first matching word, ties by ascending id.
AlignmentRecord align_image(const ImageRecord& record, const SimilarityBackend& backend, double threshold);
AlignmentRecord align_image(const ImageRecord& record, const EmbeddingTable& table, double threshold);

std::vector<AlignmentRecord> align_dataset(const std::vector<ImageRecord>& records, const SimilarityBackend& backend,
                                           double threshold, int jobs = 1);
std::vector<AlignmentRecord> align_dataset(const std::vector<ImageRecord>& records, const EmbeddingTable& table,
                                           double threshold, int jobs = 1);

nlohmann::ordered_json alignments_to_json(const std::vector<AlignmentRecord>& alignments);
std::vector<AlignmentRecord> parse_alignments(const nlohmann::json& doc);
std::vector<AlignmentRecord> load_alignments(const std::filesystem::path& path);

}  // namespace paracap
