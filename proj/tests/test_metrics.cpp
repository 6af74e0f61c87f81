#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "paracap/diag.hpp"
#include "paracap/errors.hpp"
#include "paracap/fixture.hpp"
#include "paracap/metrics.hpp"

using namespace paracap;
using namespace paracap::metrics;

namespace {

std::vector<TokenList> random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t max_len) {
    static const std::vector<std::string> vocab{"a", "dog", "runs", "on", "grass"};
    std::vector<TokenList> out(docs);
    for (auto& d : out) {
        const std::size_t len = rng() % (max_len + 1);
        for (std::size_t i = 0; i < len; ++i) d.push_back(vocab[rng() % vocab.size()]);
    }
    return out;
}

MentionCounts mentions(std::initializer_list<std::pair<const std::string, int>> init) {
    MentionCounts m;
    m.counts = init;
    return m;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("BLEU matches the brute-force oracle") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t docs = 1 + rng() % 5;
            auto cands = random_corpus(rng, docs, 10);
            auto refs = random_corpus(rng, docs, 10);
            for (int n = 1; n <= 4; ++n) CHECK(std::abs(bleu(cands, refs, n) - oracle::bleu(cands, refs, n)) < 1e-12);
        }
    }

    TEST_CASE("BLEU is non-increasing in n") {
        std::mt19937_64 rng(9);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t docs = 1 + rng() % 5;
            const auto cands = random_corpus(rng, docs, 10), refs = random_corpus(rng, docs, 10);
            for (int n = 1; n < 4; ++n) CHECK(bleu(cands, refs, n + 1) <= bleu(cands, refs, n) + 1e-15);
        }
    }

    TEST_CASE("identity corpus on the fixture") {
        const auto ds = fixture::toy_dataset();
        const auto table = fixture::toy_embeddings();
        CaptionSet gt;
        for (const auto& im : ds.images) gt.entries[im.id] = im.paragraph;
        const auto rep = evaluate(gt, ds, &table, {});
        for (double b : rep.corpus.bleu) CHECK(b == 1.0);
        CHECK(rep.corpus.objects.rc_cap == doctest::Approx(100.0));
        // Rep-4 equals the repetition already present in the ground truth.
        double gt_rep4 = 0;
        for (const auto& im : ds.images) {
            std::vector<TokenList> para;
            for (const auto& s : im.paragraph) para.push_back(tokenize(s));
            const auto m = detect_mentions(para, image_labels(im), &table, 0.6);
            for (const auto& [label, n] : m.counts) gt_rep4 += n >= kRepetitionThreshold;
        }
        CHECK(rep.corpus.objects.rep4 == doctest::Approx(gt_rep4 / static_cast<double>(ds.images.size())));
    }

    TEST_CASE("BLEU identity, disjointness and errors") {
        const std::vector<TokenList> c{tokenize("a giraffe eats a cookie near the fence")};
        for (int n = 1; n <= 4; ++n) CHECK(bleu(c, c, n) == 1.0);
        const std::vector<TokenList> d{tokenize("blue sky over water")};
        CHECK(bleu(c, d, 1) == 0.0);
        CHECK_THROWS(bleu({}, {}, 1));
        CHECK_THROWS(bleu(c, {}, 1));
    }

    TEST_CASE("BLEU brevity penalty on a short candidate") {
        const std::vector<TokenList> c{tokenize("a dog")};
        const std::vector<TokenList> r{tokenize("a dog runs")};
        CHECK(bleu(c, r, 1) == doctest::Approx(std::exp(1.0 - 3.0 / 2.0)));
    }

    TEST_CASE("CIDEr-D matches the brute-force oracle") {
        WarningCapture single_image_warnings;
        std::mt19937_64 rng(6);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t docs = 1 + rng() % 5;
            auto cands = random_corpus(rng, docs, 10);
            auto refs = random_corpus(rng, docs, 10);
            const auto got = cider(cands, refs);
            double mean = 0;
            for (std::size_t i = 0; i < docs; ++i) {
                const double want = oracle::cider_image(cands, refs, i, kCiderSigma, 4);
                CHECK(std::abs(got.per_image[i] - want) < 1e-9);
                mean += want;
            }
            CHECK(std::abs(got.corpus - mean / static_cast<double>(docs)) < 1e-9);
        }
    }

    TEST_CASE("CIDEr-D scores identical captions highest") {
        const std::vector<TokenList> refs{tokenize("a dog runs on the grass"), tokenize("a cat sleeps on a sofa"),
                                          tokenize("a bus waits at the light")};
        const auto same = cider(refs, refs);
        std::vector<TokenList> shuffled{refs[1], refs[2], refs[0]};
        const auto mixed = cider(shuffled, refs);
        CHECK(same.corpus > mixed.corpus);
        for (double v : same.per_image) CHECK(v > 0.0);
        const std::vector<TokenList> empty{{}, refs[1], refs[2]};
        CHECK(cider(empty, refs).per_image[0] == 0.0);
    }

    TEST_CASE("mention detection: exact spans and synonyms") {
        const auto table = fixture::toy_embeddings();
        const std::vector<TokenList> para{tokenize("A kid feeds the giraffe."), tokenize("The giraffe eats cookies.")};
        const std::set<std::string> labels{"giraffe", "child", "cookie", "fence"};
        const auto exact = detect_mentions(para, labels, nullptr, 0.6);
        CHECK(exact.count("giraffe") == 2);
        CHECK(exact.count("child") == 0);
        CHECK(exact.count("cookie") == 0);

        const auto soft = detect_mentions(para, labels, &table, 0.6);
        CHECK(soft.count("child") == 1);
        CHECK(soft.count("cookie") == 1);
        CHECK(soft.count("fence") == 0);
        CHECK(soft.distinct() == std::set<std::string>{"child", "cookie", "giraffe"});

        // kid ~ child at 0.92: above 0.9, below 0.95.
        CHECK(detect_mentions(para, labels, &table, 0.9).count("child") == 1);
        CHECK(detect_mentions(para, labels, &table, 0.95).count("child") == 0);

        const std::vector<TokenList> multi{tokenize("The traffic light is red near the traffic light pole")};
        CHECK(detect_mentions(multi, {"traffic light"}, nullptr, 0.6).count("traffic light") == 2);
    }

    TEST_CASE("object counts and repetition") {
        const auto gt = mentions({{"dog", 1}, {"grass", 2}, {"boy", 1}});
        const auto c3 = mentions({{"dog", 3}, {"cat", 1}});
        const auto r = object_counts(c3, gt);
        CHECK(r.o_cap == 2);
        CHECK(r.o_g == 3);
        CHECK(r.o_g_cap == 1);
        CHECK(r.rc_cap == doctest::Approx(100.0 / 3.0));
        CHECK(r.rep4 == 0);
        CHECK(object_counts(mentions({{"dog", 4}}), gt).rep4 == 1);
        CHECK(object_counts(gt, gt).rc_cap == 100.0);
        CHECK(coverage_rate(1, 0) == 0.0);

        // Ratio of means, not mean of ratios.
        ObjectCounts a, b;
        a.o_g = 2, a.o_g_cap = 2, b.o_g = 8, b.o_g_cap = 2;
        const auto m = aggregate({a, b});
        CHECK(m.rc_cap == doctest::Approx(40.0));
    }

    TEST_CASE("object_metrics on ground truth is full coverage") {
        const auto ds = fixture::toy_dataset();
        CaptionSet gt;
        for (const auto& im : ds.images) gt.entries[im.id] = im.paragraph;
        const auto table = fixture::toy_embeddings();
        const auto om = object_metrics(gt, ds, &table, 0.6);
        CHECK(om.mean.rc_cap == doctest::Approx(100.0));
        CHECK(om.mean.o_cap == doctest::Approx(om.mean.o_g));
        const auto om3 = object_metrics(gt, ds, &table, 0.6, 3);
        for (std::size_t i = 0; i < om.images.size(); ++i) CHECK(om.images[i].second.o_g == om3.images[i].second.o_g);
    }

    TEST_CASE("evaluate: fixture captions, skips and errors") {
        const auto ds = fixture::toy_dataset();
        const auto caps = fixture::toy_captions();
        const auto table = fixture::toy_embeddings();
        const auto rep = evaluate(caps, ds, &table, {});
        CHECK(rep.images.size() == caps.entries.size());
        CHECK(rep.corpus.cider > 0.0);
        CHECK(rep.corpus.bleu[0] >= rep.corpus.bleu[3]);

        // Captions paired with the wrong images score lower.
        CaptionSet rotated;
        std::vector<std::string> ids;
        for (const auto& [id, _] : caps.entries) ids.push_back(id);
        for (std::size_t i = 0; i < ids.size(); ++i)
            rotated.entries[ids[i]] = caps.entries.at(ids[(i + 1) % ids.size()]);
        const auto worse = evaluate(rotated, ds, &table, {});
        CHECK(worse.corpus.cider < rep.corpus.cider);
        CHECK(worse.corpus.objects.rc_cap < rep.corpus.objects.rc_cap);

        CaptionSet partial = caps;
        partial.entries.erase(ids.front());
        WarningCapture capture;
        const auto skipped = evaluate(partial, ds, &table, {});
        CHECK(skipped.skipped == std::vector<std::string>{ids.front()});
        CHECK(capture.count() >= 1);

        CaptionSet unknown = caps;
        unknown.entries["nope"] = {"a dog"};
        CHECK_THROWS_AS(evaluate(unknown, ds, &table, {}), ValidationError);
        CHECK_THROWS_AS(evaluate(CaptionSet{}, ds, &table, {}), ValidationError);
        EvalConfig bad;
        bad.max_n = 5;
        CHECK_THROWS_AS(evaluate(caps, ds, &table, bad), ValidationError);
    }

    TEST_CASE("evaluate is independent of the job count") {
        const auto ds = fixture::toy_dataset();
        const auto caps = fixture::toy_captions();
        const auto table = fixture::toy_embeddings();
        EvalConfig c1, c4;
        c4.jobs = 4;
        CHECK(report_to_json(evaluate(caps, ds, &table, c1)).dump() ==
              report_to_json(evaluate(caps, ds, &table, c4)).dump());
    }

    TEST_CASE("report serialisations") {
        const auto ds = fixture::toy_dataset();
        const auto caps = fixture::toy_captions();
        const auto table = fixture::toy_embeddings();
        const auto rep = evaluate(caps, ds, &table, {});
        const auto j = report_to_json(rep);
        CHECK(j.contains("config"));
        CHECK(j["config"]["theta"] == 0.6);
        const auto back = report_from_json(nlohmann::json::parse(j.dump()));
        CHECK(nlohmann::json(report_to_json(back)) == nlohmann::json::parse(j.dump()));

        const auto csv = report_to_csv(rep);
        CHECK(csv.rfind("image_id,bleu1,bleu2,bleu3,bleu4,cider,o_cap,o_g,o_g_cap,rc_cap,rep4\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(rep.images.size() + 2));
        CHECK(csv.find("\nMEAN,") != std::string::npos);

        const auto md = report_to_markdown(rep);
        CHECK(md.find("| Images | CIDEr | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 |") != std::string::npos);
        CHECK(md.find("RC_cap | Rep-4 |") != std::string::npos);
        CHECK(md.find("theta=0.6") != std::string::npos);
    }
}
