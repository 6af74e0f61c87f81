#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "paracap/alignment.hpp"
#include "paracap/errors.hpp"
#include "paracap/fixture.hpp"
#include "paracap/ordering.hpp"

using namespace paracap;
using namespace paracap::ordering;

namespace {

ModelConfig small_config(int input_dim, int model_dim = 8) {
    ModelConfig c;
    c.input_dim = input_dim;
    c.model_dim = model_dim;
    c.heads = 2;
    c.ff_dim = 2 * model_dim;
    c.max_positions = 8;
    return c;
}

std::vector<TrainingSample> toy_samples() {
    const auto ds = fixture::toy_dataset();
    const auto al = align_dataset(ds.images, fixture::toy_embeddings(), kDefaultAlignThreshold);
    std::vector<TrainingSample> out;
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        out.push_back(make_sample(ds.images[i], al[i], BoxEncoding::normalized));
    return out;
}

ModelConfig toy_config() {
    ModelConfig c;
    c.input_dim = fixture::kFeatureDim + 4;
    return c;
}

double logsumexp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<std::vector<double>> random_objects(std::size_t k, int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::vector<std::vector<double>> out(k, std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& o : out)
        for (auto& x : o) x = n(rng);
    return out;
}

ImageRecord image_with(std::size_t k, int feature_dim, std::mt19937_64& rng) {
    ImageRecord r;
    r.id = "rand";
    r.width = r.height = 32;
    const auto feats = random_objects(k, feature_dim, rng);
    for (std::size_t i = 0; i < k; ++i)
        r.objects.push_back({static_cast<int>(i) + 1, "o", {static_cast<int>(i), 0, 4, 4}, feats[i]});
    r.paragraph = {"x"};
    return r;
}

}  // namespace

TEST_SUITE("ordering") {
    TEST_CASE("init_model is deterministic per seed") {
        const auto c = toy_config();
        const auto a = init_model(c, 42), b = init_model(c, 42), d = init_model(c, 43);
        CHECK(a.params == b.params);
        CHECK(a.params != d.params);
        for (double g : a.tensor(Param::ln1_gain)) CHECK(g == 1.0);
        for (double x : a.params) CHECK(std::isfinite(x));
    }

    TEST_CASE("layout shapes are consistent") {
        const auto c = small_config(6);
        const auto m = init_model(c, 1);
        std::size_t total = 0;
        for (const auto& s : m.layout) {
            CHECK(s.offset == total);
            total += s.size();
        }
        CHECK(total == m.params.size());
        CHECK(m.slot(Param::history_w).rows == 8);
        CHECK(m.slot(Param::history_w).cols == 6);
        CHECK(m.slot(Param::positions).rows == 8);
        CHECK(m.slot(Param::ff_w1).rows == 16);

        auto bad = c;
        bad.heads = 3;
        CHECK_THROWS_AS(init_model(bad, 1), ValidationError);
        bad = c;
        bad.model_dim = 2;
        CHECK_THROWS_AS(init_model(bad, 1), ValidationError);
    }

    TEST_CASE("project_history identity, zero and oracle cases") {
        auto m = init_model(small_config(8), 3);
        std::mt19937_64 rng(8);
        const auto hist = random_objects(3, 8, rng);

        auto W = m.tensor(Param::history_w);
        std::fill(W.begin(), W.end(), 0.0);
        for (int i = 0; i < 8; ++i) W[static_cast<std::size_t>(i * 8 + i)] = 1.0;
        auto bias = m.tensor(Param::history_b);
        std::fill(bias.begin(), bias.end(), 0.0);
        auto pos = m.tensor(Param::positions);
        std::fill(pos.begin(), pos.end(), 0.0);
        const auto same = project_history(hist, m);
        for (std::size_t t = 0; t < hist.size(); ++t)
            for (std::size_t i = 0; i < 8; ++i) CHECK(same[t][i] == doctest::Approx(hist[t][i]).epsilon(1e-15));

        for (std::size_t i = 0; i < 8; ++i) bias[i] = 0.25 * static_cast<double>(i);
        const std::vector<std::vector<double>> zeros(2, std::vector<double>(8, 0.0));
        for (const auto& row : project_history(zeros, m))
            for (std::size_t i = 0; i < 8; ++i) CHECK(row[i] == 0.25 * static_cast<double>(i));

        // Random model against a naive loop: W (x + E^p_{start+t}) + b.
        auto r = init_model(small_config(5, 12), 17);
        const auto h5 = random_objects(4, 5, rng);
        const auto got = project_history(h5, r, 2);
        const auto Wr = r.tensor(Param::history_w);
        const auto br = r.tensor(Param::history_b);
        const auto pr = r.tensor(Param::positions);
        for (std::size_t t = 0; t < h5.size(); ++t)
            for (std::size_t i = 0; i < 12; ++i) {
                double acc = br[i];
                for (std::size_t j = 0; j < 5; ++j) acc += Wr[i * 5 + j] * (h5[t][j] + pr[(2 + t) * 5 + j]);
                CHECK(got[t][i] == doctest::Approx(acc).epsilon(1e-12));
            }
        CHECK_THROWS_AS(project_history(random_objects(7, 5, rng), r, 2), ValidationError);
    }

    TEST_CASE("forward: normalised, symmetric and permutation-equivariant") {
        std::mt19937_64 rng(12);
        const auto m = init_model(small_config(6, 16), 5);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t K = 2 + rng() % 5;
            auto objects = random_objects(K, 6, rng);
            StepInput in;
            in.objects = &objects;
            in.sentences = random_objects(rng() % 3, 6, rng);
            if (rng() % 2) in.partial = random_objects(1, 6, rng)[0];
            const auto lp = forward(m, in);
            REQUIRE(lp.size() == K + 2);
            CHECK(std::abs(logsumexp(lp)) < 1e-9);

            std::vector<std::size_t> perm(K);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            std::vector<std::vector<double>> shuffled;
            for (auto p : perm) shuffled.push_back(objects[p]);
            StepInput pin = in;
            pin.objects = &shuffled;
            const auto plp = forward(m, pin);
            for (std::size_t k = 0; k < K; ++k) CHECK(plp[k] == doctest::Approx(lp[perm[k]]).epsilon(1e-9));
            CHECK(plp[K] == doctest::Approx(lp[K]).epsilon(1e-9));
            CHECK(plp[K + 1] == doctest::Approx(lp[K + 1]).epsilon(1e-9));

            objects[1] = objects[0];
            const auto dup = forward(m, in);
            CHECK(std::abs(dup[0] - dup[1]) < 1e-9);
        }
        std::vector<std::vector<double>> none;
        StepInput empty;
        empty.objects = &none;
        CHECK_THROWS_AS(forward(m, empty), ValidationError);
    }

    TEST_CASE("apply_penalty") {
        const std::vector<double> lp{std::log(0.5), std::log(0.5)};
        const std::vector<int> counts{4, 1};
        CHECK(apply_penalty(lp, counts, 0.0) == lp);
        const auto p = apply_penalty(lp, counts, 1.0);
        CHECK(std::abs(p[0] - (std::log(0.5) - std::log(4.0))) < 1e-12);
        CHECK(p[1] == lp[1]);
        CHECK(p[1] > p[0]);

        // Scores past the counts (EOS, EOP) are untouched.
        const std::vector<double> full{-1.0, -2.0, -3.0, -4.0};
        const std::vector<int> c2{0, 3};
        const auto q = apply_penalty(full, c2, 2.0);
        CHECK(q[0] == -1.0);
        CHECK(q[2] == -3.0);
        CHECK(q[3] == -4.0);
        CHECK(std::abs(q[1] - (-2.0 - 2.0 * std::log(3.0))) < 1e-12);

        for (int x = 0; x <= 10; ++x) {
            const std::vector<double> one{-0.7};
            const std::vector<int> cx{x}, cnext{x + 1};
            const double a = apply_penalty(one, cx, 0.5)[0];
            const double b = apply_penalty(one, cnext, 0.5)[0];
            if (x + 1 >= 2)
                CHECK(b < a);
            else
                CHECK(b == a);
        }
        const std::vector<int> neg{-1};
        CHECK_THROWS(apply_penalty(std::vector<double>{0.0}, neg, 1.0));
        CHECK_THROWS(apply_penalty(lp, counts, -1.0));
    }

    TEST_CASE("decode: forced single path gives [[1]]") {
        ModelConfig c = small_config(8, 8);
        auto m = init_model(c, 2);
        make_uniform_output(m);
        for (auto p : {Param::object_w, Param::object_b, Param::eos, Param::eop}) {
            auto t = m.tensor(p);
            std::fill(t.begin(), t.end(), 0.0);
        }
        m.tensor(Param::object_b)[0] = 10.0;
        m.tensor(Param::eop)[1] = 10.0;
        m.tensor(Param::fc_b)[0] = 1.0;
        m.tensor(Param::fc_b)[1] = 0.5;
        ImageRecord r;
        r.id = "one";
        r.width = r.height = 8;
        r.objects.push_back({1, "o", {0, 0, 2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4}});
        r.paragraph = {"o"};
        const auto seq = decode(m, r, 1.0);
        CHECK(seq.sentences == std::vector<std::vector<int>>{{1}});
        CHECK(seq.counts.at(1) == 1);
    }

    TEST_CASE("decode respects limits, terminates and keeps counts consistent") {
        std::mt19937_64 rng(33);
        for (int trial = 0; trial < 40; ++trial) {
            auto c = small_config(3 + 4, 8);
            c.max_positions = 3 + static_cast<int>(rng() % 6);
            const auto m = init_model(c, rng());
            const auto img = image_with(1 + rng() % 6, 3, rng);
            const DecodeLimits lim{1 + static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 4)};
            const double alpha = static_cast<double>(rng() % 3);
            const auto seq = decode(m, img, alpha, lim);
            CHECK(static_cast<int>(seq.sentences.size()) <= std::min(lim.max_sentences, c.max_positions - 1));
            std::map<int, int> seen;
            for (const auto& s : seq.sentences) {
                CHECK(static_cast<int>(s.size()) <= lim.max_objects_per_sentence);
                CHECK_FALSE(s.empty());
                std::set<int> uniq(s.begin(), s.end());
                CHECK(uniq.size() == s.size());
                for (int id : s) ++seen[id];
            }
            CHECK(seen == seq.counts);
        }
        auto c = toy_config();
        const auto m = init_model(c, 42);
        const auto ds = fixture::toy_dataset();
        const auto seq = decode(m, ds.images[0], 0.0, {2, 2});
        CHECK(seq.sentences.size() <= 2);
        for (const auto& s : seq.sentences) CHECK(s.size() <= 2);
    }

    TEST_CASE("decode_dataset is independent of the job count") {
        const auto ds = fixture::toy_dataset();
        const auto m = init_model(toy_config(), 42);
        const auto a = decode_dataset(m, ds.images, 1.0, {}, 1);
        const auto b = decode_dataset(m, ds.images, 1.0, {}, 3);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].sentences == b[i].sentences);
            CHECK(a[i].counts == b[i].counts);
        }
        CHECK(sequences_to_json(a).dump() == sequences_to_json(b).dump());
    }

    TEST_CASE("uniform output model: loss is ln(K+2)") {
        std::mt19937_64 rng(2);
        auto m = init_model(small_config(5, 8), 9);
        make_uniform_output(m);
        TrainingSample s;
        s.image_id = "u";
        s.objects = random_objects(4, 5, rng);
        s.object_ids = {1, 2, 3, 4};
        s.groups = {{0, 2}, {3}};
        CHECK(std::abs(teacher_forcing_loss(m, s, nullptr) - std::log(6.0)) < 1e-6);
        CHECK(target_sequence(s) == std::vector<std::size_t>{0, 2, 4, 3, 4, 5});
    }

    TEST_CASE("make_sample validates the alignment") {
        const auto ds = fixture::toy_dataset();
        AlignmentRecord a;
        a.image_id = ds.images[0].id;
        a.sentences = {{1, 99}};
        CHECK_THROWS_AS(make_sample(ds.images[0], a, BoxEncoding::normalized), ValidationError);
        a.sentences = {{}, {}};
        CHECK_THROWS_AS(make_sample(ds.images[0], a, BoxEncoding::normalized), ValidationError);
        a.sentences = {{}, {3, 1, 3}, {}};
        const auto s = make_sample(ds.images[0], a, BoxEncoding::normalized);
        CHECK(s.groups == std::vector<std::vector<std::size_t>>{{2, 0}});
    }

    TEST_CASE("gradients match central differences") {
        const auto samples = toy_samples();
        const auto m = init_model(toy_config(), 42);
        for (std::size_t i : {std::size_t{0}, std::size_t{6}}) {
            const auto rep = grad_check(m, samples[i], 1e-5, 64, 7);
            CHECK(rep.entries.size() == 64);
            CHECK(rep.max_rel_error < 1e-4);
        }
        // Sweep every tensor on a small model so no parameter block goes unchecked.
        std::mt19937_64 rng(14);
        auto sm = init_model(small_config(5, 8), 4);
        TrainingSample s;
        s.image_id = "s";
        s.objects = random_objects(3, 5, rng);
        s.object_ids = {1, 2, 3};
        s.groups = {{1, 0}, {2}, {0}};
        std::vector<double> analytic;
        teacher_forcing_loss(sm, s, &analytic);
        std::vector<std::size_t> all(sm.params.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        auto loss = [&](const std::vector<double>& p) {
            auto probe = sm;
            probe.params = p;
            return teacher_forcing_loss(probe, s, nullptr);
        };
        const auto rep = compare_gradients(sm.params, analytic, loss, all, 1e-5);
        CHECK(rep.max_rel_error < 1e-4);
    }

    TEST_CASE("a corrupted analytic gradient is detected") {
        const auto samples = toy_samples();
        const auto m = init_model(toy_config(), 42);
        std::vector<double> analytic;
        teacher_forcing_loss(m, samples[0], &analytic);
        const std::size_t idx = m.slot(Param::fc_w).offset + 3;
        auto loss = [&](const std::vector<double>& p) {
            auto probe = m;
            probe.params = p;
            return teacher_forcing_loss(probe, samples[0], nullptr);
        };
        const std::vector<std::size_t> at{idx};
        CHECK(compare_gradients(m.params, analytic, loss, at, 1e-5).max_rel_error < 1e-4);
        analytic[idx] += 1.0;
        CHECK(compare_gradients(m.params, analytic, loss, at, 1e-5).max_rel_error > 0.1);

        // The last positional row is never reached by a short history: zero gradient both ways.
        const std::size_t unused = m.slot(Param::positions).offset + m.slot(Param::positions).size() - 1;
        analytic[idx] -= 1.0;
        const std::vector<std::size_t> zero_at{unused};
        const auto rep = compare_gradients(m.params, analytic, loss, zero_at, 1e-5);
        CHECK(std::abs(rep.entries[0].analytic) < 1e-8);
        CHECK(std::abs(rep.entries[0].numeric) < 1e-8);
    }

    TEST_CASE("training: zero epochs is the identity, runs are reproducible") {
        const auto samples = toy_samples();
        auto m = init_model(toy_config(), 42);
        const auto before = m.params;
        const auto r0 = train(m, samples, {0.05, 0, 1});
        CHECK(m.params == before);
        CHECK(r0.epoch_losses.empty());

        auto a = init_model(toy_config(), 42), b = init_model(toy_config(), 42);
        const auto ra = train(a, samples, {0.05, 5, 1});
        const auto rb = train(b, samples, {0.05, 5, 3});
        CHECK(ra.epoch_losses == rb.epoch_losses);
        CHECK(a.params == b.params);
        CHECK(ra.final_loss < ra.epoch_losses.front());
    }

    TEST_CASE("200 steps on one image more than halve the loss") {
        const auto samples = toy_samples();
        for (const auto& s : samples) {
            auto m = init_model(toy_config(), 42);
            const std::vector<TrainingSample> one{s};
            const auto r = train(m, one, {0.05, 200, 1});
            CHECK(r.final_loss < 0.5 * r.epoch_losses.front());
            // Monotone on average: fixed-step descent may spike briefly, but the trend is downward.
            const auto& l = r.epoch_losses;
            const double n = static_cast<double>(l.size());
            double sx = 0, sy = 0, sxy = 0, sxx = 0;
            for (std::size_t t = 0; t < l.size(); ++t) {
                const double x = static_cast<double>(t);
                sx += x, sy += l[t], sxy += x * l[t], sxx += x * x;
            }
            CHECK((n * sxy - sx * sy) / (n * sxx - sx * sx) < 0.0);
            const auto half = static_cast<std::ptrdiff_t>(l.size() / 2);
            CHECK(std::accumulate(l.begin() + half, l.end(), 0.0) < std::accumulate(l.begin(), l.begin() + half, 0.0));
        }
    }

    TEST_CASE("model serialization round trip") {
        const auto m = init_model(toy_config(), 99);
        const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
        CHECK(back.params == m.params);
        CHECK(back.seed == m.seed);
        CHECK(back.config.model_dim == m.config.model_dim);
        auto doc = nlohmann::json::parse(model_to_json(m).dump());
        doc["params"][3]["values"].erase(0);
        CHECK_THROWS_AS(model_from_json(doc), ValidationError);
    }
}
