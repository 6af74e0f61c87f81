#include "paracap/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "paracap/errors.hpp"

namespace paracap::fixture {

namespace {

struct ObjectSpec {
    int id;
    const char* label;
    BBox box;
};

struct Scene {
    const char* id;
    std::vector<ObjectSpec> objects;
    std::vector<const char*> paragraph;
    const char* caption;
};

const std::vector<Scene>& scenes() {
    static const std::vector<Scene> s = {
        {"img0",
         {{1, "giraffe", {30, 4, 30, 50}},
          {2, "kid", {4, 24, 16, 36}},
          {3, "cookie", {18, 30, 6, 6}},
          {4, "tree", {40, 0, 24, 20}},
          {5, "fence", {0, 50, 64, 14}}},
         {"A child is feeding a cookie to a giraffe.", "The giraffe is tall and has brown spots.",
          "A green tree stands behind a wooden fence."},
         "A kid feeds a giraffe. The giraffe eats a cookie. The giraffe is tall. The giraffe stands near a tree. "
         "The giraffe is brown."},
        {"img1",
         {{1, "man", {20, 10, 20, 50}},
          {2, "umbrella", {14, 0, 32, 14}},
          {3, "shirt", {22, 20, 16, 16}},
          {4, "street", {0, 48, 64, 16}},
          {5, "car", {44, 36, 20, 14}}},
         {"A man is holding a black umbrella.", "The man wears a white shirt.",
          "A red car is parked on the street."},
         "A man is standing on the street. The man is on the street. The street is wet. A car drives down the street."},
        {"img2",
         {{1, "dog", {34, 34, 22, 16}},
          {2, "frisbee", {26, 8, 10, 6}},
          {3, "grass", {0, 44, 64, 20}},
          {4, "boy", {4, 12, 14, 40}}},
         {"A boy throws a frisbee.", "A brown puppy runs on the grass.", "The dog catches the frisbee."},
         "A boy throws a red frisbee to a dog. The dog runs."},
        {"img3",
         {{1, "cat", {24, 20, 16, 12}},
          {2, "sofa", {6, 24, 50, 30}},
          {3, "pillow", {42, 22, 12, 10}},
          {4, "lamp", {56, 2, 8, 40}}},
         {"A cat sleeps on a sofa.", "A pillow lies next to the cat.", "A tall lamp stands in the corner."},
         "A cat is on the sofa. The cat is white. The cat has a pillow. The cat is sleeping."},
        {"img4",
         {{1, "woman", {6, 4, 20, 56}},
          {2, "plate", {30, 30, 14, 6}},
          {3, "table", {24, 34, 40, 26}},
          {4, "cup", {50, 26, 8, 8}}},
         {"A lady sets a plate on the table.", "A cup sits on the table.", "The woman smiles."},
         "A woman holds a plate. A table is in the room."},
        {"img5",
         {{1, "kite", {38, 6, 12, 12}},
          {2, "sky", {0, 0, 64, 30}},
          {3, "girl", {10, 26, 12, 30}},
          {4, "sand", {0, 54, 64, 10}}},
         {"A girl flies a kite.", "The kite is high in the blue sky.", "The girl stands on the sand."},
         "A girl flies a kite in the sky. The kite is red. The kite is high. The kite flies over the sand."},
        {"img6",
         {{1, "bus", {4, 30, 36, 22}},
          {2, "traffic light", {46, 4, 6, 16}},
          {3, "sign", {50, 24, 10, 8}},
          {4, "building", {20, 0, 26, 30}}},
         {"A yellow bus stops at a traffic light.", "A street sign hangs near the building.",
          "The building is made of brick."},
         "A bus waits at the traffic light. A tall building is behind the bus."},
        {"img7",
         {{1, "horse", {10, 20, 26, 22}},
          {2, "field", {0, 36, 64, 28}},
          {3, "barn", {40, 4, 22, 24}},
          {4, "fence", {0, 44, 40, 8}},
          {5, "man", {38, 30, 8, 22}}},
         {"A brown horse grazes in the field.", "A man leans on the fence.", "A red barn stands behind the horse."},
         "A horse is in a field. A man is near a horse. The horse is brown."},
    };
    return s;
}

// Concept words own one axis each; synonyms mix their concept axis with a
// private axis so that cosine(synonym, concept) equals the listed value.
const std::vector<std::string>& concepts() {
    static const std::vector<std::string> c = {
        "giraffe", "child", "cookie", "tree",  "fence",  "man",     "umbrella", "shirt",    "street",
        "car",     "dog",   "frisbee", "grass", "boy",    "cat",     "sofa",     "pillow",   "lamp",
        "woman",   "plate", "table",  "cup",   "kite",   "sky",     "girl",     "sand",     "bus",
        "traffic", "light", "sign",   "building", "horse", "field", "barn"};
    return c;
}

struct Synonym {
    const char* word;
    const char* base;
    double cosine;
};

const std::vector<Synonym>& synonyms() {
    static const std::vector<Synonym> s = {
        {"kid", "child", 0.92}, {"puppy", "dog", 0.88}, {"lady", "woman", 0.90}, {"cookies", "cookie", 0.90}};
    return s;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform in [-1, 1).
double unit(std::uint64_t& state) { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0; }

double round4(double x) { return std::round(x * 1e4) / 1e4; }

std::uint8_t clamp_px(int v) { return static_cast<std::uint8_t>(std::clamp(v, 1, 255)); }

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Dataset toy_dataset() {
    Dataset ds;
    ds.feature_dim = kFeatureDim;
    for (std::size_t i = 0; i < scenes().size(); ++i) {
        const auto& sc = scenes()[i];
        ImageRecord r;
        r.id = sc.id;
        r.width = kImageSize;
        r.height = kImageSize;
        r.pixel_source = std::string("images/") + sc.id + ".ppm";
        for (const auto& o : sc.objects) {
            std::uint64_t proto = fnv1a(o.label);
            std::uint64_t noise = fnv1a(std::string(sc.id) + "/" + std::to_string(o.id));
            std::vector<double> f(kFeatureDim);
            for (auto& x : f) x = round4(unit(proto) + 0.05 * unit(noise));
            r.objects.push_back({o.id, o.label, o.box, std::move(f)});
        }
        for (const auto* s : sc.paragraph) r.paragraph.emplace_back(s);
        ds.images.push_back(std::move(r));
    }
    return ds;
}

RgbImage toy_image(std::size_t index) {
    const auto& sc = scenes().at(index);
    RgbImage img(kImageSize, kImageSize);
    for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y)[c] = clamp_px(1 + (x * 7 + y * 13 + c * 31 + static_cast<int>(index) * 17) % 120);
    for (const auto& o : sc.objects) {
        const auto h = fnv1a(o.label);
        for (int y = o.box.y; y < o.box.bottom(); ++y)
            for (int x = o.box.x; x < o.box.right(); ++x)
                for (int c = 0; c < 3; ++c) {
                    const int base = 60 + static_cast<int>((h >> (8 * c)) % 150);
                    img.at(x, y)[c] = clamp_px(base + ((x + 2 * y) % 16) * 3);
                }
    }
    return img;
}

CaptionSet toy_captions() {
    CaptionSet caps;
    for (const auto& sc : scenes()) caps.entries[sc.id] = split_sentences(sc.caption);
    return caps;
}

EmbeddingTable toy_embeddings() {
    EmbeddingTable t;
    t.dim = kEmbeddingDim;
    const auto& cs = concepts();
    const int first_private = static_cast<int>(cs.size());
    const int first_function = first_private + static_cast<int>(synonyms().size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
        std::vector<double> v(kEmbeddingDim, 0.0);
        v[i] = 1.0;
        t.vectors[cs[i]] = std::move(v);
    }
    for (std::size_t i = 0; i < synonyms().size(); ++i) {
        const auto& s = synonyms()[i];
        const auto axis = std::find(cs.begin(), cs.end(), s.base) - cs.begin();
        std::vector<double> v(kEmbeddingDim, 0.0);
        v[static_cast<std::size_t>(axis)] = s.cosine;
        v[static_cast<std::size_t>(first_private) + i] = std::sqrt(1.0 - s.cosine * s.cosine);
        t.vectors[s.word] = std::move(v);
    }
    // Every other word lives in a disjoint block, orthogonal to all concepts.
    std::set<std::string> words;
    for (const auto& sc : scenes()) {
        for (const auto* s : sc.paragraph)
            for (auto& w : tokenize(s)) words.insert(w);
        for (auto& w : tokenize(sc.caption)) words.insert(w);
    }
    for (const auto& w : words) {
        if (t.vectors.count(w)) continue;
        std::uint64_t state = fnv1a(w);
        std::vector<double> v(kEmbeddingDim, 0.0);
        for (int k = first_function; k < kEmbeddingDim; ++k) v[static_cast<std::size_t>(k)] = round4(unit(state));
        t.vectors[w] = std::move(v);
    }
    return t;
}

void write_toy_fixture(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
    write_dataset(toy_dataset(), dir / "toy.json");
    write_text_file(dir / "toy_caps.json", captions_to_json(toy_captions()).dump(2) + "\n");
    write_embeddings(toy_embeddings(), dir / "toy.vec");
    for (std::size_t i = 0; i < scenes().size(); ++i)
        write_ppm(toy_image(i), dir / "images" / (std::string(scenes()[i].id) + ".ppm"));
}

}  // namespace paracap::fixture
