#include "paracap/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "paracap/diag.hpp"
#include "paracap/errors.hpp"
#include "paracap/kernels.hpp"
#include "paracap/parallel.hpp"

namespace paracap {

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
    auto it = vectors.find(token);
    return it == vectors.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embeddings(std::istream& in, const std::string& source) {
    EmbeddingTable table;
    std::string line;
    std::size_t lineno = 0;
    long long declared = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        if (declared < 0) {
            long long dim = 0;
            if (!(ls >> declared >> dim) || declared < 0 || dim < 1)
                throw ValidationError(source + ":" + std::to_string(lineno) + ": bad header, expected '<count> <d>'");
            table.dim = static_cast<int>(dim);
            continue;
        }
        std::string token;
        ls >> token;
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(table.dim));
        std::string field;
        while (ls >> field) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(field, &used));
                if (used != field.size()) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw ValidationError(source + ":" + std::to_string(lineno) + ": non-numeric value '" + field + "'");
            }
        }
        if (static_cast<int>(v.size()) != table.dim)
            throw ValidationError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(table.dim) +
                                  " values for '" + token + "', got " + std::to_string(v.size()));
        auto [it, inserted] = table.vectors.insert_or_assign(token, std::move(v));
        if (!inserted) warn(source + ":" + std::to_string(lineno) + ": duplicate token '" + token + "', keeping last");
    }
    if (declared < 0) throw ValidationError(source + ": missing header line");
    if (table.vectors.empty()) warn(source + ": embedding table is empty");
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_embeddings(in, path.string());
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::vector<std::string> tokens;
    for (const auto& [t, _] : table.vectors) tokens.push_back(t);
    std::sort(tokens.begin(), tokens.end());
    std::ostringstream out;
    out.precision(17);
    out << tokens.size() << ' ' << table.dim << '\n';
    for (const auto& t : tokens) {
        out << t;
        for (double x : table.vectors.at(t)) out << ' ' << x;
        out << '\n';
    }
    write_text_file(path, out.str());
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
    double dot = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) {
        warn("cosine: zero vector, similarity taken as 0");
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::vector<double> embed_label(const std::string& label, const EmbeddingTable& table) {
    std::vector<double> sum(static_cast<std::size_t>(table.dim), 0.0);
    int hits = 0;
    for (const auto& tok : tokenize(label)) {
        if (const auto* v = table.find(tok)) {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*v)[i];
            ++hits;
        }
    }
    if (hits == 0) {
        warn("label '" + label + "' has no in-vocabulary tokens");
        return sum;
    }
    for (auto& x : sum) x /= hits;
    return sum;
}

std::vector<double> StaticEmbeddingBackend::similarity(std::span<const std::string> labels,
                                                       const TokenList& tokens) const {
    const auto d = static_cast<std::size_t>(table_.dim);
    std::vector<double> u;
    u.reserve(labels.size() * d);
    for (const auto& l : labels) {
        const auto e = embed_label(l, table_);
        u.insert(u.end(), e.begin(), e.end());
    }
    std::vector<double> v(tokens.size() * d, 0.0);
    for (std::size_t j = 0; j < tokens.size(); ++j)
        if (const auto* w = table_.find(tokens[j])) std::copy(w->begin(), w->end(), v.begin() + j * d);
    std::vector<double> out(labels.size() * tokens.size());
    kernels::cosine_matrix_serial(u, v, out, labels.size(), tokens.size(), d);
    for (auto& x : out) x = std::clamp(x, -1.0, 1.0);
    return out;
}

bool AlignmentRecord::empty() const {
    return std::all_of(sentences.begin(), sentences.end(), [](const auto& s) { return s.empty(); });
}

AlignmentRecord align_image(const ImageRecord& record, const SimilarityBackend& backend, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValidationError("alignment threshold must lie in (0, 1], got " + std::to_string(threshold));
    if (record.paragraph.empty()) throw ValidationError("image '" + record.id + "': empty paragraph");

    AlignmentRecord out;
    out.image_id = record.id;
    std::vector<std::string> labels;
    for (const auto& o : record.objects) labels.push_back(o.label);

    for (const auto& sentence : record.paragraph) {
        const auto tokens = tokenize(sentence);
        const auto sims = backend.similarity(labels, tokens);
        struct Hit {
            std::size_t first;
            int id;
            double score;
        };
        std::vector<Hit> hits;
        for (std::size_t k = 0; k < labels.size(); ++k) {
            std::size_t first = tokens.size();
            double best = -1.0;
            for (std::size_t j = 0; j < tokens.size(); ++j) {
                const double s = sims[k * tokens.size() + j];
                if (s >= threshold && first == tokens.size()) first = j;
                best = std::max(best, s);
            }
            if (first < tokens.size()) hits.push_back({first, record.objects[k].id, best});
        }
        std::sort(hits.begin(), hits.end(),
                  [](const Hit& a, const Hit& b) { return a.first != b.first ? a.first < b.first : a.id < b.id; });
        std::vector<int> ids;
        std::vector<double> scores;
        for (const auto& h : hits) {
            ids.push_back(h.id);
            scores.push_back(h.score);
        }
        out.sentences.push_back(std::move(ids));
        out.scores.push_back(std::move(scores));
    }
    return out;
}

AlignmentRecord align_image(const ImageRecord& record, const EmbeddingTable& table, double threshold) {
    return align_image(record, StaticEmbeddingBackend(table), threshold);
}

std::vector<AlignmentRecord> align_dataset(const std::vector<ImageRecord>& records, const SimilarityBackend& backend,
                                           double threshold, int jobs) {
    std::vector<AlignmentRecord> out(records.size());
    parallel_for(records.size(), jobs, [&](std::size_t i) { out[i] = align_image(records[i], backend, threshold); });
    return out;
}

std::vector<AlignmentRecord> align_dataset(const std::vector<ImageRecord>& records, const EmbeddingTable& table,
                                           double threshold, int jobs) {
    return align_dataset(records, StaticEmbeddingBackend(table), threshold, jobs);
}

nlohmann::ordered_json alignments_to_json(const std::vector<AlignmentRecord>& alignments) {
    nlohmann::ordered_json doc;
    doc["alignments"] = nlohmann::ordered_json::array();
    for (const auto& a : alignments) {
        nlohmann::ordered_json ja;
        ja["image_id"] = a.image_id;
        ja["sentences"] = a.sentences;
        ja["scores"] = a.scores;
        doc["alignments"].push_back(std::move(ja));
    }
    return doc;
}

std::vector<AlignmentRecord> parse_alignments(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("alignments") || !doc["alignments"].is_array())
        throw ValidationError("alignments: field 'alignments' is missing or not an array");
    std::vector<AlignmentRecord> out;
    for (const auto& ja : doc["alignments"]) {
        AlignmentRecord a;
        try {
            a.image_id = ja.at("image_id").get<std::string>();
            a.sentences = ja.at("sentences").get<std::vector<std::vector<int>>>();
            if (ja.contains("scores")) a.scores = ja.at("scores").get<std::vector<std::vector<double>>>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("alignments: malformed entry: ") + e.what());
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<AlignmentRecord> load_alignments(const std::filesystem::path& path) {
    return parse_alignments(read_json_file(path));
}

}  // namespace paracap
