#include "paracap/text.hpp"

namespace paracap {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

TokenList tokenize(std::string_view text) {
    TokenList tokens;
    std::string current;
    for (char raw : text) {
        char c = raw;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
        if (keep) {
            current.push_back(c);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    auto flush = [&](std::string_view seg) {
        std::size_t b = 0, e = seg.size();
        while (b < e && is_space(seg[b])) ++b;
        while (e > b && is_space(seg[e - 1])) --e;
        if (e > b) out.emplace_back(seg.substr(b, e - b));
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
            flush(text.substr(start, i - start));
            start = i + 1;
        }
    }
    flush(text.substr(start));
    return out;
}

TokenList tokenize_paragraph(const std::vector<std::string>& sentences) {
    TokenList all;
    for (const auto& s : sentences) {
        auto t = tokenize(s);
        all.insert(all.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
    }
    return all;
}

std::string join(const TokenList& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.append(sep);
        out.append(tokens[i]);
    }
    return out;
}

}  // namespace paracap
