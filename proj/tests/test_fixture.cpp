#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "paracap/alignment.hpp"
#include "paracap/fixture.hpp"

using namespace paracap;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("fixture") {
    TEST_CASE("generation is deterministic") {
        testutil::TempDir a("fx-a"), b("fx-b");
        fixture::write_toy_fixture(a.path());
        fixture::write_toy_fixture(b.path());
        for (const auto& e : fs::recursive_directory_iterator(a.path())) {
            if (!e.is_regular_file()) continue;
            const auto rel = fs::relative(e.path(), a.path());
            CHECK(slurp(e.path()) == slurp(b.path() / rel));
        }
    }

    TEST_CASE("committed data/toy matches the generator") {
        const fs::path committed = fs::path(PARACAP_SOURCE_DIR) / "data" / "toy";
        REQUIRE(fs::exists(committed / "toy.json"));
        testutil::TempDir fresh("fx-fresh");
        fixture::write_toy_fixture(fresh.path());
        std::size_t files = 0;
        for (const auto& e : fs::recursive_directory_iterator(fresh.path())) {
            if (!e.is_regular_file()) continue;
            const auto rel = fs::relative(e.path(), fresh.path());
            INFO(rel.string());
            CHECK(slurp(e.path()) == slurp(committed / rel));
            ++files;
        }
        CHECK(files == 3 + fixture::toy_dataset().images.size());
    }

    TEST_CASE("ground-truth paragraphs mention every object") {
        const auto ds = fixture::toy_dataset();
        const auto table = fixture::toy_embeddings();
        const auto al = align_dataset(ds.images, table, kDefaultAlignThreshold);
        for (std::size_t i = 0; i < ds.images.size(); ++i) {
            std::set<int> seen;
            for (const auto& s : al[i].sentences) seen.insert(s.begin(), s.end());
            CHECK(seen.size() == ds.images[i].objects.size());
        }
        for (std::size_t i = 0; i < ds.images.size(); ++i) {
            const auto img = fixture::toy_image(i);
            CHECK(img.width == fixture::kImageSize);
            CHECK(img.height == fixture::kImageSize);
            for (auto b : img.data) CHECK(b > 0);
        }
    }
}
