#include "paracap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "paracap/diag.hpp"
#include "paracap/errors.hpp"
#include "paracap/parallel.hpp"

namespace paracap::metrics {

namespace {

using NgramCounts = std::map<std::string, int>;

// counts[n-1] holds the n-grams of order n.
std::vector<NgramCounts> ngram_counts(const TokenList& tokens, int max_n) {
    std::vector<NgramCounts> counts(static_cast<std::size_t>(max_n));
    for (int n = 1; n <= max_n; ++n) {
        if (tokens.size() < static_cast<std::size_t>(n)) break;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
            std::string key = tokens[i];
            for (int j = 1; j < n; ++j) {
                key.push_back(' ');
                key.append(tokens[i + static_cast<std::size_t>(j)]);
            }
            ++counts[static_cast<std::size_t>(n - 1)][key];
        }
    }
    return counts;
}

}  // namespace

void BleuStats::add(const TokenList& candidate, const TokenList& reference) {
    const auto c = ngram_counts(candidate, 4);
    const auto r = ngram_counts(reference, 4);
    for (std::size_t n = 0; n < 4; ++n) {
        for (const auto& [gram, count] : c[n]) {
            auto it = r[n].find(gram);
            const int ref = it == r[n].end() ? 0 : it->second;
            matches[n] += std::min(count, ref);
            totals[n] += count;
        }
    }
    candidate_length += static_cast<double>(candidate.size());
    reference_length += static_cast<double>(reference.size());
}

double BleuStats::score(int n) const {
    if (n < 1 || n > 4) throw std::invalid_argument("BLEU order must be in 1..4");
    double log_sum = 0.0;
    for (int k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        if (totals[i] == 0.0 || matches[i] == 0.0) return 0.0;
        log_sum += std::log(matches[i] / totals[i]);
    }
    if (candidate_length == 0.0) return 0.0;
    const double bp = candidate_length < reference_length ? std::exp(1.0 - reference_length / candidate_length) : 1.0;
    return bp * std::exp(log_sum / n);
}

double bleu(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references, int n) {
    if (candidates.empty()) throw ValidationError("BLEU: empty corpus");
    if (candidates.size() != references.size()) throw std::invalid_argument("BLEU: candidate/reference count mismatch");
    BleuStats stats;
    for (std::size_t i = 0; i < candidates.size(); ++i) stats.add(candidates[i], references[i]);
    return stats.score(n);
}

CiderResult cider(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references, double sigma,
                  int max_n) {
    if (candidates.size() != references.size()) throw std::invalid_argument("CIDEr: candidate/reference count mismatch");
    if (max_n < 1) throw std::invalid_argument("CIDEr: max_n must be >= 1");
    CiderResult result;
    const std::size_t N = references.size();
    if (N == 0) return result;
    if (N < 2) warn("CIDEr: corpus of " + std::to_string(N) + " image(s); IDF weights degenerate to zero");

    std::vector<std::vector<NgramCounts>> ref_counts, cand_counts;
    std::map<std::string, int> doc_freq;
    for (std::size_t i = 0; i < N; ++i) {
        ref_counts.push_back(ngram_counts(references[i], max_n));
        cand_counts.push_back(ngram_counts(candidates[i], max_n));
        for (const auto& order : ref_counts.back())
            for (const auto& [gram, _] : order) ++doc_freq[gram];
    }
    const double log_n = std::log(static_cast<double>(N));

    struct Weighted {
        std::vector<std::map<std::string, double>> vec;
        std::vector<double> norm;
    };
    auto weigh = [&](const std::vector<NgramCounts>& counts) {
        Weighted w{std::vector<std::map<std::string, double>>(counts.size()), std::vector<double>(counts.size(), 0.0)};
        for (std::size_t n = 0; n < counts.size(); ++n) {
            for (const auto& [gram, tf] : counts[n]) {
                auto it = doc_freq.find(gram);
                const double df = it == doc_freq.end() ? 0.0 : it->second;
                const double v = tf * (log_n - std::log(std::max(1.0, df)));
                w.vec[n][gram] = v;
                w.norm[n] += v * v;
            }
            w.norm[n] = std::sqrt(w.norm[n]);
        }
        return w;
    };

    result.per_image.assign(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        if (candidates[i].empty()) continue;
        const auto hyp = weigh(cand_counts[i]);
        const auto ref = weigh(ref_counts[i]);
        const double delta = static_cast<double>(candidates[i].size()) - static_cast<double>(references[i].size());
        const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
        double total = 0.0;
        for (std::size_t n = 0; n < hyp.vec.size(); ++n) {
            double val = 0.0;
            for (const auto& [gram, hv] : hyp.vec[n]) {
                auto it = ref.vec[n].find(gram);
                if (it == ref.vec[n].end()) continue;
                val += std::min(hv, it->second) * it->second;
            }
            if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
            total += val * penalty;
        }
        result.per_image[i] = 10.0 * total / static_cast<double>(max_n);
    }
    double sum = 0.0;
    for (double s : result.per_image) sum += s;
    result.corpus = sum / static_cast<double>(N);
    return result;
}

std::set<std::string> MentionCounts::distinct() const {
    std::set<std::string> out;
    for (const auto& [label, c] : counts)
        if (c > 0) out.insert(label);
    return out;
}

int MentionCounts::count(const std::string& label) const {
    auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
}

std::string label_key(const std::string& label) { return join(tokenize(label)); }

std::set<std::string> image_labels(const ImageRecord& image) {
    std::set<std::string> out;
    for (const auto& o : image.objects) {
        auto key = label_key(o.label);
        if (!key.empty()) out.insert(std::move(key));
    }
    return out;
}

MentionDetector::MentionDetector(const EmbeddingTable* table, double threshold) : table_(table), threshold_(threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValidationError("mention threshold must lie in (0, 1], got " + std::to_string(threshold));
}

void MentionDetector::prepare(const std::set<std::string>& labels) {
    if (table_ == nullptr) return;
    for (const auto& l : labels)
        if (!label_vectors_.count(l)) label_vectors_.emplace(l, embed_label(l, *table_));
}

double MentionDetector::similarity(const std::vector<double>& label_vec, const std::string& word) const {
    const auto* w = table_->find(word);
    if (w == nullptr) return 0.0;
    double dot = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < label_vec.size(); ++i) {
        dot += label_vec[i] * (*w)[i];
        a += label_vec[i] * label_vec[i];
        b += (*w)[i] * (*w)[i];
    }
    if (a == 0.0 || b == 0.0) return 0.0;
    return dot / (std::sqrt(a) * std::sqrt(b));
}

MentionCounts MentionDetector::count(const std::vector<TokenList>& paragraph, const std::set<std::string>& labels) const {
    MentionCounts out;
    for (const auto& label : labels) {
        const auto span = tokenize(label);
        if (span.empty()) continue;
        const std::vector<double>* vec = nullptr;
        if (table_ != nullptr) {
            auto it = label_vectors_.find(label);
            if (it != label_vectors_.end()) vec = &it->second;
        }
        int hits = 0;
        for (const auto& sentence : paragraph) {
            std::size_t j = 0;
            while (j < sentence.size()) {
                if (j + span.size() <= sentence.size() && std::equal(span.begin(), span.end(), sentence.begin() + static_cast<std::ptrdiff_t>(j))) {
                    ++hits;
                    j += span.size();
                } else if (vec != nullptr && similarity(*vec, sentence[j]) >= threshold_) {
                    ++hits;
                    ++j;
                } else {
                    ++j;
                }
            }
        }
        if (hits > 0) out.counts[label] = hits;
    }
    return out;
}

MentionCounts detect_mentions(const std::vector<TokenList>& paragraph, const std::set<std::string>& labels,
                              const EmbeddingTable* table, double threshold) {
    MentionDetector detector(table, threshold);
    detector.prepare(labels);
    return detector.count(paragraph, labels);
}

ObjectCounts object_counts(const MentionCounts& candidate, const MentionCounts& ground_truth) {
    const auto cap = candidate.distinct();
    const auto gt = ground_truth.distinct();
    ObjectCounts c;
    c.o_cap = static_cast<double>(cap.size());
    c.o_g = static_cast<double>(gt.size());
    for (const auto& l : cap)
        if (gt.count(l)) c.o_g_cap += 1;
    c.rc_cap = coverage_rate(c.o_g_cap, c.o_g);
    for (const auto& [_, n] : candidate.counts)
        if (n >= kRepetitionThreshold) c.rep4 += 1;
    return c;
}

double coverage_rate(double mean_g_cap, double mean_g) { return mean_g > 0.0 ? 100.0 * mean_g_cap / mean_g : 0.0; }

ObjectCounts aggregate(const std::vector<ObjectCounts>& rows) {
    ObjectCounts m;
    if (rows.empty()) return m;
    for (const auto& r : rows) {
        m.o_cap += r.o_cap;
        m.o_g += r.o_g;
        m.o_g_cap += r.o_g_cap;
        m.rep4 += r.rep4;
    }
    const double n = static_cast<double>(rows.size());
    m.o_cap /= n;
    m.o_g /= n;
    m.o_g_cap /= n;
    m.rep4 /= n;
    m.rc_cap = coverage_rate(m.o_g_cap, m.o_g);
    return m;
}

namespace {

std::vector<TokenList> tokenize_sentences(const std::vector<std::string>& sentences) {
    std::vector<TokenList> out;
    for (const auto& s : sentences) out.push_back(tokenize(s));
    return out;
}

struct Pairing {
    std::vector<const ImageRecord*> images;
    std::vector<const std::vector<std::string>*> captions;
    std::vector<std::string> skipped;
};

Pairing pair_captions(const CaptionSet& captions, const Dataset& dataset) {
    for (const auto& [id, _] : captions.entries)
        if (dataset.find(id) == nullptr) throw ValidationError("captions reference unknown image id '" + id + "'");
    Pairing p;
    for (const auto& im : dataset.images) {
        auto it = captions.entries.find(im.id);
        if (it == captions.entries.end()) {
            p.skipped.push_back(im.id);
            continue;
        }
        p.images.push_back(&im);
        p.captions.push_back(&it->second);
    }
    if (p.images.empty()) throw ValidationError("no overlapping image ids between captions and dataset");
    for (const auto& id : p.skipped) warn("no caption for image '" + id + "', skipped");
    return p;
}

ObjectMetrics object_metrics_for(const Pairing& pairing, const EmbeddingTable* table, double threshold, int jobs) {
    MentionDetector detector(table, threshold);
    std::set<std::string> all_labels;
    for (const auto* im : pairing.images) {
        const auto labels = image_labels(*im);
        all_labels.insert(labels.begin(), labels.end());
    }
    detector.prepare(all_labels);

    ObjectMetrics out;
    out.skipped = pairing.skipped;
    out.images.resize(pairing.images.size());
    parallel_for(pairing.images.size(), jobs, [&](std::size_t i) {
        const auto& im = *pairing.images[i];
        const auto labels = image_labels(im);
        const auto cand = detector.count(tokenize_sentences(*pairing.captions[i]), labels);
        const auto gt = detector.count(tokenize_sentences(im.paragraph), labels);
        out.images[i] = {im.id, object_counts(cand, gt)};
    });
    std::vector<ObjectCounts> rows;
    for (const auto& [_, c] : out.images) rows.push_back(c);
    out.mean = aggregate(rows);
    return out;
}

}  // namespace

ObjectMetrics object_metrics(const CaptionSet& captions, const Dataset& dataset, const EmbeddingTable* table,
                             double threshold, int jobs) {
    return object_metrics_for(pair_captions(captions, dataset), table, threshold, jobs);
}

MetricsReport evaluate(const CaptionSet& captions, const Dataset& dataset, const EmbeddingTable* table,
                       const EvalConfig& config) {
    if (config.max_n < 1 || config.max_n > 4) throw ValidationError("n_max must be in 1..4");
    const auto pairing = pair_captions(captions, dataset);
    const std::size_t n = pairing.images.size();

    std::vector<TokenList> cands(n), refs(n);
    for (std::size_t i = 0; i < n; ++i) {
        cands[i] = tokenize_paragraph(*pairing.captions[i]);
        refs[i] = tokenize_paragraph(pairing.images[i]->paragraph);
    }
    const auto objects = object_metrics_for(pairing, table, config.threshold, config.jobs);
    const auto cider_scores = cider(cands, refs, config.sigma, config.max_n);

    MetricsReport report;
    report.config = {{"theta", config.threshold}, {"sigma", config.sigma}, {"n_max", config.max_n}};
    report.skipped = pairing.skipped;
    report.images.resize(n);
    BleuStats corpus_stats;
    std::vector<BleuStats> per_image(n);
    parallel_for(n, config.jobs, [&](std::size_t i) { per_image[i].add(cands[i], refs[i]); });
    for (std::size_t i = 0; i < n; ++i) {
        auto& row = report.images[i];
        row.image_id = pairing.images[i]->id;
        for (int k = 1; k <= 4; ++k)
            row.values.bleu[static_cast<std::size_t>(k - 1)] = k <= config.max_n ? per_image[i].score(k) : 0.0;
        row.values.cider = cider_scores.per_image[i];
        row.values.objects = objects.images[i].second;
        for (std::size_t t = 0; t < 4; ++t) {
            corpus_stats.matches[t] += per_image[i].matches[t];
            corpus_stats.totals[t] += per_image[i].totals[t];
        }
        corpus_stats.candidate_length += per_image[i].candidate_length;
        corpus_stats.reference_length += per_image[i].reference_length;
    }
    for (int k = 1; k <= 4; ++k)
        report.corpus.bleu[static_cast<std::size_t>(k - 1)] = k <= config.max_n ? corpus_stats.score(k) : 0.0;
    report.corpus.cider = cider_scores.corpus;
    report.corpus.objects = objects.mean;
    return report;
}

const std::vector<std::string>& metric_fields() {
    static const std::vector<std::string> fields = {"bleu1", "bleu2", "bleu3", "bleu4", "cider", "o_cap",
                                                    "o_g",   "o_g_cap", "rc_cap", "rep4"};
    return fields;
}

namespace {

std::vector<double> flatten(const MetricValues& v) {
    return {v.bleu[0],       v.bleu[1],       v.bleu[2],           v.bleu[3],          v.cider,
            v.objects.o_cap, v.objects.o_g,   v.objects.o_g_cap,   v.objects.rc_cap,   v.objects.rep4};
}

MetricValues unflatten(const std::vector<double>& f) {
    MetricValues v;
    for (std::size_t i = 0; i < 4; ++i) v.bleu[i] = f[i];
    v.cider = f[4];
    v.objects = {f[5], f[6], f[7], f[8], f[9]};
    return v;
}

nlohmann::ordered_json values_json(const MetricValues& v) {
    nlohmann::ordered_json j;
    const auto flat = flatten(v);
    for (std::size_t i = 0; i < flat.size(); ++i) j[metric_fields()[i]] = flat[i];
    return j;
}

MetricValues values_from_json(const nlohmann::json& j) {
    std::vector<double> flat;
    for (const auto& f : metric_fields()) {
        if (!j.contains(f) || !j[f].is_number()) throw ValidationError("report: missing metric field '" + f + "'");
        flat.push_back(j[f].get<double>());
    }
    return unflatten(flat);
}

std::string fmt(double v, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

nlohmann::ordered_json report_to_json(const MetricsReport& report) {
    nlohmann::ordered_json doc;
    doc["config"] = report.config;
    doc["corpus"] = values_json(report.corpus);
    doc["images"] = nlohmann::ordered_json::array();
    for (const auto& im : report.images) {
        nlohmann::ordered_json row;
        row["image_id"] = im.image_id;
        const auto values = values_json(im.values);
        for (const auto& [k, v] : values.items()) row[k] = v;
        doc["images"].push_back(std::move(row));
    }
    doc["skipped"] = report.skipped;
    return doc;
}

MetricsReport report_from_json(const nlohmann::json& doc) {
    MetricsReport r;
    if (!doc.is_object() || !doc.contains("corpus") || !doc.contains("images"))
        throw ValidationError("report: expected 'corpus' and 'images'");
    if (doc.contains("config")) r.config = doc["config"];
    r.corpus = values_from_json(doc["corpus"]);
    for (const auto& row : doc["images"]) {
        if (!row.contains("image_id") || !row["image_id"].is_string())
            throw ValidationError("report: image row without 'image_id'");
        r.images.push_back({row["image_id"].get<std::string>(), values_from_json(row)});
    }
    if (doc.contains("skipped")) r.skipped = doc["skipped"].get<std::vector<std::string>>();
    return r;
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "image_id";
    for (const auto& f : metric_fields()) out << ',' << f;
    out << '\n';
    auto row = [&](const std::string& id, const MetricValues& v) {
        out << id;
        for (double x : flatten(v)) out << ',' << fmt(x);
        out << '\n';
    };
    for (const auto& im : report.images) row(im.image_id, im.values);
    row("MEAN", report.corpus);
    return out.str();
}

std::string report_to_markdown(const MetricsReport& report) {
    const auto& c = report.corpus;
    std::ostringstream out;
    out << "# Evaluation report\n\n";
    if (!report.config.empty()) {
        out << "Parameters:";
        for (const auto& [k, v] : report.config.items()) out << ' ' << k << '=' << v.dump();
        out << "\n\n";
    }
    out << "| Images | CIDEr | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 |\n";
    out << "|---|---|---|---|---|---|\n";
    out << "| " << report.images.size() << " | " << fmt(c.cider, 4);
    for (double b : c.bleu) out << " | " << fmt(b, 4);
    out << " |\n\n";
    out << "| Source | \\|O_G\\| | \\|O_{G-Cap}\\| | RC_cap | Rep-4 |\n";
    out << "|---|---|---|---|---|\n";
    out << "| Ground truth | " << fmt(c.objects.o_g, 2) << " | - | - | - |\n";
    out << "| Captions | " << fmt(c.objects.o_cap, 2) << " | " << fmt(c.objects.o_g_cap, 2) << " | "
        << fmt(c.objects.rc_cap, 1) << " | " << fmt(c.objects.rep4, 2) << " |\n";
    if (!report.skipped.empty()) {
        out << "\nSkipped (no caption):";
        for (const auto& id : report.skipped) out << ' ' << id;
        out << '\n';
    }
    return out.str();
}

}  // namespace paracap::metrics
