#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "paracap/text.hpp"

namespace paracap {

/// Object box in pixels: top-left (x, y), width w, height h.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int right() const { return x + w; }
    int bottom() const { return y + h; }
    long long area() const { return static_cast<long long>(w) * h; }
    bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

struct DetectedObject {
    int id = 0;
    std::string label;
    BBox bbox;
    std::optional<std::vector<double>> feature;

    friend bool operator==(const DetectedObject&, const DetectedObject&) = default;
};

struct ImageRecord {
    std::string id;
    int width = 0;
    int height = 0;
    std::optional<std::string> pixel_source;  // P6 PPM, relative to the dataset file
    std::vector<DetectedObject> objects;
    std::vector<std::string> paragraph;       // one entry per sentence

    const DetectedObject* find_object(int object_id) const;
    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Dataset {
    int feature_dim = 0;
    std::vector<ImageRecord> images;
    std::filesystem::path base_dir;  // resolves relative pixel sources

    const ImageRecord* find(const std::string& image_id) const;
    std::filesystem::path resolve(const std::string& pixel_source) const;
};

struct ValidationIssue {
    std::string image_id;
    std::optional<int> object_id;
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<ValidationIssue> issues;
};

/// Checks every record invariant. With check_pixels, pixel sources are decoded
/// and their dimensions compared with the record.
ValidationReport validate(const Dataset& dataset, bool check_pixels = false);
ValidationReport validate(const std::vector<ImageRecord>& records, int feature_dim);

/// Parses a dataset document. Paragraphs may be a sentence array or raw text.
/// Throws ValidationError naming the image id and field on schema violations
/// and on any validation issue.
Dataset parse_dataset(const nlohmann::json& doc);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::ordered_json dataset_to_json(const Dataset& dataset);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

enum class BoxEncoding { normalized, raw_pixels };

/// v' = [feature..., h, w, y, x]; box terms divided by image height/width in
/// normalized mode.
std::vector<double> concat_object_feature(const DetectedObject& object, int image_width, int image_height,
                                          BoxEncoding encoding = BoxEncoding::normalized);

/// Generated paragraphs keyed by image id, already split into sentences.
struct CaptionSet {
    std::map<std::string, std::vector<std::string>> entries;
};

CaptionSet parse_captions(const nlohmann::json& doc);
CaptionSet load_captions(const std::filesystem::path& path);
nlohmann::ordered_json captions_to_json(const CaptionSet& captions);

/// Reads a JSON file, mapping open failures to IoError and parse failures to
/// ValidationError.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `text` to path; IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace paracap
