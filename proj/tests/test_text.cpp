#include <random>

#include "doctest.h"
#include "paracap/text.hpp"

using paracap::TokenList;

TEST_SUITE("text") {
    TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
        CHECK(paracap::tokenize("A child is feeding cookies to a giraffe.") ==
              TokenList{"a", "child", "is", "feeding", "cookies", "to", "a", "giraffe"});
        CHECK(paracap::tokenize("").empty());
        CHECK(paracap::tokenize("Blue-ish sky!!") == TokenList{"blue", "ish", "sky"});
        CHECK(paracap::tokenize("  \t\n ").empty());
        CHECK(paracap::tokenize("R2D2 has 3 legs") == TokenList{"r2d2", "has", "3", "legs"});
    }

    TEST_CASE("tokenize is idempotent on joined output") {
        std::mt19937_64 rng(11);
        const std::string alphabet = "abcXYZ019 .,!?-'\t";
        for (int trial = 0; trial < 200; ++trial) {
            std::string s;
            const int len = static_cast<int>(rng() % 40);
            for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
            const auto tokens = paracap::tokenize(s);
            CHECK(paracap::tokenize(paracap::join(tokens)) == tokens);
            for (const auto& t : tokens) {
                CHECK_FALSE(t.empty());
                CHECK(t.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789") == std::string::npos);
            }
        }
    }

    TEST_CASE("split_sentences") {
        CHECK(paracap::split_sentences("A man stands. It rains.") == std::vector<std::string>{"A man stands", "It rains"});
        CHECK(paracap::split_sentences("no terminator") == std::vector<std::string>{"no terminator"});
        CHECK(paracap::split_sentences("One! Two? Three.").size() == 3);
        CHECK(paracap::split_sentences("...").empty());
        CHECK(paracap::split_sentences("").empty());
    }

    TEST_CASE("tokenize_paragraph concatenates sentences in order") {
        CHECK(paracap::tokenize_paragraph({"A dog.", "Two cats"}) == TokenList{"a", "dog", "two", "cats"});
    }
}
