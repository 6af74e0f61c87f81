#include "paracap/dataset.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "paracap/errors.hpp"
#include "paracap/image.hpp"

namespace paracap {

using nlohmann::json;

const DetectedObject* ImageRecord::find_object(int object_id) const {
    for (const auto& o : objects)
        if (o.id == object_id) return &o;
    return nullptr;
}

const ImageRecord* Dataset::find(const std::string& image_id) const {
    for (const auto& r : images)
        if (r.id == image_id) return &r;
    return nullptr;
}

std::filesystem::path Dataset::resolve(const std::string& pixel_source) const {
    std::filesystem::path p(pixel_source);
    if (p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

namespace {

[[noreturn]] void schema_error(const std::string& image_id, const std::string& field, const std::string& what) {
    std::string where = image_id.empty() ? std::string("dataset") : "image '" + image_id + "'";
    throw ValidationError(where + ": field '" + field + "' " + what);
}

const json& require(const json& obj, const char* key, const std::string& image_id, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) schema_error(image_id, path + key, "is missing");
    return obj.at(key);
}

int require_int(const json& obj, const char* key, const std::string& image_id, const std::string& path) {
    const auto& v = require(obj, key, image_id, path);
    if (!v.is_number_integer()) schema_error(image_id, path + key, "must be an integer");
    const auto value = v.get<long long>();
    if (value < 0 || value > (1LL << 30)) schema_error(image_id, path + key, "is out of range");
    return static_cast<int>(value);
}

std::vector<std::string> parse_paragraph(const json& v, const std::string& image_id, const char* field) {
    std::vector<std::string> out;
    if (v.is_string()) return split_sentences(v.get<std::string>());
    if (!v.is_array()) schema_error(image_id, field, "must be a sentence array or text");
    for (const auto& s : v) {
        if (!s.is_string()) schema_error(image_id, field, "entries must be strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

void add_issue(ValidationReport& report, const std::string& image_id, std::optional<int> object_id,
               std::string message) {
    report.ok = false;
    report.issues.push_back({image_id, object_id, std::move(message)});
}

void validate_record(const ImageRecord& r, int feature_dim, ValidationReport& report) {
    if (r.width < 1 || r.height < 1) add_issue(report, r.id, std::nullopt, "image dimensions must be positive");
    if (r.paragraph.empty()) add_issue(report, r.id, std::nullopt, "empty paragraph");
    std::set<int> seen;
    for (const auto& o : r.objects) {
        if (!seen.insert(o.id).second)
            add_issue(report, r.id, o.id, "duplicate object id " + std::to_string(o.id));
        if (tokenize(o.label).empty()) add_issue(report, r.id, o.id, "label is empty after tokenization");
        const auto& b = o.bbox;
        if (b.w < 1 || b.h < 1) add_issue(report, r.id, o.id, "bbox w and h must be >= 1");
        if (b.x < 0 || b.y < 0 || b.right() > r.width || b.bottom() > r.height)
            add_issue(report, r.id, o.id, "bbox of object " + std::to_string(o.id) + " exceeds image bounds");
        if (o.feature && static_cast<int>(o.feature->size()) != feature_dim)
            add_issue(report, r.id, o.id,
                      "feature length " + std::to_string(o.feature->size()) + " != feature_dim " +
                          std::to_string(feature_dim));
    }
}

}  // namespace

ValidationReport validate(const std::vector<ImageRecord>& records, int feature_dim) {
    ValidationReport report;
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) add_issue(report, r.id, std::nullopt, "duplicate image id");
        validate_record(r, feature_dim, report);
    }
    return report;
}

ValidationReport validate(const Dataset& dataset, bool check_pixels) {
    auto report = validate(dataset.images, dataset.feature_dim);
    if (!check_pixels) return report;
    for (const auto& r : dataset.images) {
        if (!r.pixel_source) continue;
        try {
            const auto img = read_ppm(dataset.resolve(*r.pixel_source));
            if (img.width != r.width || img.height != r.height)
                add_issue(report, r.id, std::nullopt,
                          "pixel source is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                              ", record declares " + std::to_string(r.width) + "x" + std::to_string(r.height));
        } catch (const std::exception& e) {
            add_issue(report, r.id, std::nullopt, std::string("pixel source unreadable: ") + e.what());
        }
    }
    return report;
}

Dataset parse_dataset(const json& doc) {
    Dataset ds;
    if (!doc.is_object()) throw ValidationError("dataset: document must be an object");
    ds.feature_dim = require_int(doc, "feature_dim", "", "");
    const auto& images = require(doc, "images", "", "");
    if (!images.is_array()) schema_error("", "images", "must be an array");
    for (std::size_t idx = 0; idx < images.size(); ++idx) {
        const auto& im = images[idx];
        ImageRecord r;
        const std::string fallback = "#" + std::to_string(idx);
        if (!im.is_object() || !im.contains("id") || !im["id"].is_string())
            schema_error(fallback, "id", "is missing or not a string");
        r.id = im["id"].get<std::string>();
        r.width = require_int(im, "width", r.id, "");
        r.height = require_int(im, "height", r.id, "");
        if (im.contains("pixel_source") && !im["pixel_source"].is_null()) {
            if (!im["pixel_source"].is_string()) schema_error(r.id, "pixel_source", "must be a string");
            r.pixel_source = im["pixel_source"].get<std::string>();
        }
        const auto& objs = require(im, "objects", r.id, "");
        if (!objs.is_array()) schema_error(r.id, "objects", "must be an array");
        for (std::size_t k = 0; k < objs.size(); ++k) {
            const auto& jo = objs[k];
            const std::string p = "objects[" + std::to_string(k) + "].";
            DetectedObject o;
            if (!jo.is_object() || !jo.contains("id") || !jo["id"].is_number_integer())
                schema_error(r.id, p + "id", "is missing or not an integer");
            o.id = jo["id"].get<int>();
            const auto& label = require(jo, "label", r.id, p);
            if (!label.is_string()) schema_error(r.id, p + "label", "must be a string");
            o.label = label.get<std::string>();
            const auto& bb = require(jo, "bbox", r.id, p);
            o.bbox = {require_int(bb, "x", r.id, p + "bbox."), require_int(bb, "y", r.id, p + "bbox."),
                      require_int(bb, "w", r.id, p + "bbox."), require_int(bb, "h", r.id, p + "bbox.")};
            if (jo.contains("feature") && !jo["feature"].is_null()) {
                const auto& f = jo["feature"];
                if (!f.is_array()) schema_error(r.id, p + "feature", "must be an array");
                std::vector<double> v;
                v.reserve(f.size());
                for (const auto& x : f) {
                    if (!x.is_number()) schema_error(r.id, p + "feature", "entries must be numbers");
                    v.push_back(x.get<double>());
                }
                o.feature = std::move(v);
            }
            r.objects.push_back(std::move(o));
        }
        r.paragraph = parse_paragraph(require(im, "paragraph", r.id, ""), r.id, "paragraph");
        ds.images.push_back(std::move(r));
    }
    const auto report = validate(ds.images, ds.feature_dim);
    if (!report.ok) {
        const auto& issue = report.issues.front();
        std::string msg = "image '" + issue.image_id + "'";
        if (issue.object_id) msg += " object " + std::to_string(*issue.object_id);
        throw ValidationError(msg + ": " + issue.message);
    }
    return ds;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": invalid JSON: " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    auto ds = parse_dataset(read_json_file(path));
    ds.base_dir = path.parent_path();
    return ds;
}

nlohmann::ordered_json dataset_to_json(const Dataset& dataset) {
    nlohmann::ordered_json doc;
    doc["feature_dim"] = dataset.feature_dim;
    doc["images"] = nlohmann::ordered_json::array();
    for (const auto& r : dataset.images) {
        nlohmann::ordered_json im;
        im["id"] = r.id;
        im["width"] = r.width;
        im["height"] = r.height;
        if (r.pixel_source) im["pixel_source"] = *r.pixel_source;
        im["objects"] = nlohmann::ordered_json::array();
        for (const auto& o : r.objects) {
            nlohmann::ordered_json jo;
            jo["id"] = o.id;
            jo["label"] = o.label;
            jo["bbox"] = {{"x", o.bbox.x}, {"y", o.bbox.y}, {"w", o.bbox.w}, {"h", o.bbox.h}};
            if (o.feature) jo["feature"] = *o.feature;
            im["objects"].push_back(std::move(jo));
        }
        im["paragraph"] = r.paragraph;
        doc["images"].push_back(std::move(im));
    }
    return doc;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    write_text_file(path, dataset_to_json(dataset).dump(2) + "\n");
}

std::vector<double> concat_object_feature(const DetectedObject& object, int image_width, int image_height,
                                          BoxEncoding encoding) {
    if (!object.feature) throw ValidationError("object " + std::to_string(object.id) + " has no feature vector");
    if (encoding == BoxEncoding::normalized && (image_width < 1 || image_height < 1))
        throw ValidationError("image dimensions must be positive to normalize boxes");
    std::vector<double> out(*object.feature);
    out.reserve(out.size() + 4);
    const auto& b = object.bbox;
    if (encoding == BoxEncoding::normalized) {
        const double hh = image_height, ww = image_width;
        out.insert(out.end(), {b.h / hh, b.w / ww, b.y / hh, b.x / ww});
    } else {
        out.insert(out.end(), {double(b.h), double(b.w), double(b.y), double(b.x)});
    }
    return out;
}

CaptionSet parse_captions(const json& doc) {
    CaptionSet set;
    if (!doc.is_object() || !doc.contains("captions") || !doc["captions"].is_array())
        throw ValidationError("captions: field 'captions' is missing or not an array");
    for (const auto& c : doc["captions"]) {
        if (!c.is_object() || !c.contains("image_id") || !c["image_id"].is_string())
            throw ValidationError("captions: entry without string 'image_id'");
        const auto id = c["image_id"].get<std::string>();
        std::vector<std::string> sentences;
        if (c.contains("paragraph")) {
            sentences = parse_paragraph(c["paragraph"], id, "paragraph");
        } else if (c.contains("text") && c["text"].is_string()) {
            sentences = split_sentences(c["text"].get<std::string>());
        } else {
            throw ValidationError("captions: image '" + id + "' has neither 'paragraph' nor 'text'");
        }
        if (!set.entries.emplace(id, std::move(sentences)).second)
            throw ValidationError("captions: duplicate image_id '" + id + "'");
    }
    return set;
}

CaptionSet load_captions(const std::filesystem::path& path) { return parse_captions(read_json_file(path)); }

nlohmann::ordered_json captions_to_json(const CaptionSet& captions) {
    nlohmann::ordered_json doc;
    doc["captions"] = nlohmann::ordered_json::array();
    for (const auto& [id, sentences] : captions.entries)
        doc["captions"].push_back({{"image_id", id}, {"paragraph", sentences}});
    return doc;
}

}  // namespace paracap
