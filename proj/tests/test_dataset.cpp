#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "paracap/dataset.hpp"
#include "paracap/errors.hpp"
#include "paracap/fixture.hpp"

using nlohmann::json;
using namespace paracap;

namespace {

json minimal_image(const std::string& id) {
    return {{"id", id},
            {"width", 100},
            {"height", 80},
            {"objects",
             json::array({{{"id", 1}, {"label", "dog"}, {"bbox", {{"x", 0}, {"y", 0}, {"w", 10}, {"h", 10}}}, {"feature", {0.5, 1.5}}},
                          {{"id", 2}, {"label", "cat"}, {"bbox", {{"x", 90}, {"y", 70}, {"w", 10}, {"h", 10}}}, {"feature", {1.0, 2.0}}}})},
            {"paragraph", {"A dog.", "A cat."}}};
}

std::string error_of(const json& doc) {
    try {
        parse_dataset(doc);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("dataset") {
    TEST_CASE("toy fixture loads with 8 images of at least two objects") {
        testutil::TempDir dir("ds");
        fixture::write_toy_fixture(dir.path());
        const auto ds = load_dataset(dir / "toy.json");
        REQUIRE(ds.images.size() == 8);
        for (const auto& r : ds.images) CHECK(r.objects.size() >= 2);
        const auto report = validate(ds, true);
        CHECK(report.ok);
        CHECK(report.issues.empty());
    }

    TEST_CASE("empty images array is an empty dataset") {
        const auto ds = parse_dataset(json{{"feature_dim", 4}, {"images", json::array()}});
        CHECK(ds.images.empty());
        CHECK(ds.feature_dim == 4);
    }

    TEST_CASE("schema errors name the image and field") {
        auto doc = json{{"feature_dim", 2}, {"images", {minimal_image("im-a")}}};
        doc["images"][0]["objects"][1]["bbox"]["x"] = 95;
        const auto msg = error_of(doc);
        CHECK(msg.find("im-a") != std::string::npos);
        CHECK(msg.find("object 2") != std::string::npos);
        CHECK(msg.find("exceeds image bounds") != std::string::npos);

        doc = json{{"feature_dim", 2}, {"images", {minimal_image("im-b")}}};
        doc["images"][0].erase("width");
        CHECK(error_of(doc).find("im-b") != std::string::npos);
        CHECK(error_of(doc).find("width") != std::string::npos);

        doc = json{{"feature_dim", 2}, {"images", {minimal_image("im-c")}}};
        doc["images"][0]["objects"][0]["label"] = 7;
        CHECK(error_of(doc).find("objects[0].label") != std::string::npos);

        doc = json{{"feature_dim", 3}, {"images", {minimal_image("im-d")}}};
        CHECK(error_of(doc).find("feature length") != std::string::npos);
    }

    TEST_CASE("validate reports each violation with its ids") {
        auto ds = parse_dataset(json{{"feature_dim", 2}, {"images", {minimal_image("a")}}});
        auto records = ds.images;
        records[0].objects[1].id = 1;
        auto report = validate(records, 2);
        CHECK_FALSE(report.ok);
        REQUIRE(report.issues.size() == 1);
        CHECK(report.issues[0].object_id == 1);
        CHECK(report.issues[0].message.find("duplicate object id 1") != std::string::npos);

        records = ds.images;
        records[0].paragraph.clear();
        report = validate(records, 2);
        REQUIRE(report.issues.size() == 1);
        CHECK(report.issues[0].message == "empty paragraph");
        CHECK(report.issues[0].image_id == "a");
    }

    TEST_CASE("paragraph given as raw text is split into sentences") {
        auto doc = json{{"feature_dim", 2}, {"images", {minimal_image("a")}}};
        doc["images"][0]["paragraph"] = "A dog runs. A cat sleeps!";
        const auto ds = parse_dataset(doc);
        CHECK(ds.images[0].paragraph == std::vector<std::string>{"A dog runs", "A cat sleeps"});
    }

    TEST_CASE("write/load round trip reproduces every field") {
        const auto ds = fixture::toy_dataset();
        testutil::TempDir dir("rt");
        write_dataset(ds, dir / "d.json");
        const auto back = load_dataset(dir / "d.json");
        CHECK(back.feature_dim == ds.feature_dim);
        CHECK(back.images == ds.images);
    }

    TEST_CASE("concat_object_feature") {
        DetectedObject zero{1, "x", {0, 0, 0, 0}, std::vector<double>{0, 0}};
        CHECK(concat_object_feature(zero, 10, 10) == std::vector<double>{0, 0, 0, 0, 0, 0});

        DetectedObject o{1, "x", {25, 0, 100, 50}, std::vector<double>{1, 2}};
        CHECK(concat_object_feature(o, 100, 100) == std::vector<double>{1, 2, 0.5, 1.0, 0.0, 0.25});
        CHECK(concat_object_feature(o, 100, 100, BoxEncoding::raw_pixels) == std::vector<double>{1, 2, 50, 100, 0, 25});

        DetectedObject missing{3, "x", {0, 0, 1, 1}, std::nullopt};
        CHECK_THROWS_AS(concat_object_feature(missing, 10, 10), ValidationError);

        for (const auto& r : fixture::toy_dataset().images)
            for (const auto& obj : r.objects) {
                const auto v = concat_object_feature(obj, r.width, r.height);
                REQUIRE(v.size() == obj.feature->size() + 4);
                CHECK(std::equal(obj.feature->begin(), obj.feature->end(), v.begin()));
            }
    }

    TEST_CASE("captions accept sentence arrays and raw text") {
        const auto caps = parse_captions(json{{"captions",
                                               {{{"image_id", "a"}, {"paragraph", {"One", "Two"}}},
                                                {{"image_id", "b"}, {"text", "First. Second!"}}}}});
        CHECK(caps.entries.at("a") == std::vector<std::string>{"One", "Two"});
        CHECK(caps.entries.at("b") == std::vector<std::string>{"First", "Second"});
        CHECK_THROWS_AS(parse_captions(json{{"captions", {{{"image_id", "a"}}}}}), ValidationError);
        CHECK_THROWS_AS(parse_captions(json{{"captions", {{{"image_id", "a"}, {"text", "x"}}, {{"image_id", "a"}, {"text", "y"}}}}}),
                        ValidationError);
    }

    TEST_CASE("file errors: missing file is I/O, bad JSON is validation") {
        CHECK_THROWS_AS(load_dataset("/nonexistent/toy.json"), IoError);
        testutil::TempDir dir("bad");
        write_text_file(dir / "bad.json", "{ not json");
        CHECK_THROWS_AS(load_dataset(dir / "bad.json"), ValidationError);
    }
}
