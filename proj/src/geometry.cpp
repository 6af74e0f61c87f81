#include "paracap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "paracap/errors.hpp"

namespace paracap {

BBox union_bbox(std::span<const BBox> boxes) {
    if (boxes.empty()) throw std::invalid_argument("union_bbox: empty box list");
    int x0 = boxes[0].x, y0 = boxes[0].y, x1 = boxes[0].right(), y1 = boxes[0].bottom();
    for (const auto& b : boxes.subspan(1)) {
        x0 = std::min(x0, b.x);
        y0 = std::min(y0, b.y);
        x1 = std::max(x1, b.right());
        y1 = std::max(y1, b.bottom());
    }
    return {x0, y0, x1 - x0, y1 - y0};
}

CompositeSpec make_composite_spec(const ImageRecord& record, int sentence_index, std::vector<int> object_ids) {
    if (object_ids.empty())
        throw ValidationError("image '" + record.id + "' sentence " + std::to_string(sentence_index) +
                              ": composite needs at least one object");
    std::vector<BBox> boxes;
    for (int id : object_ids) {
        const auto* o = record.find_object(id);
        if (o == nullptr)
            throw ValidationError("image '" + record.id + "': unknown object id " + std::to_string(id));
        boxes.push_back(o->bbox);
    }
    return {record.id, sentence_index, std::move(object_ids), union_bbox(boxes)};
}

CanvasDims batch_canvas_dims(std::span<const CompositeSpec> specs) {
    if (specs.empty()) throw std::invalid_argument("batch_canvas_dims: empty batch");
    CanvasDims d;
    for (const auto& s : specs) {
        d.height = std::max(d.height, s.extent.h);
        d.width = std::max(d.width, s.extent.w);
    }
    return d;
}

long long CompositeCanvas::covered_pixels() const {
    return std::count(mask.begin(), mask.end(), std::uint8_t{1});
}

double CompositeCanvas::fill_ratio() const {
    const double area = static_cast<double>(pixels.width) * pixels.height;
    return area > 0 ? static_cast<double>(covered_pixels()) / area : 0.0;
}

CompositeCanvas compose(const RgbImage& image, const ImageRecord& record, const CompositeSpec& spec, CanvasDims dims) {
    if (dims.height < spec.extent.h || dims.width < spec.extent.w)
        throw std::invalid_argument("compose: canvas smaller than composite extent");
    CompositeCanvas c;
    c.pixels = RgbImage(dims.width, dims.height);
    c.mask.assign(static_cast<std::size_t>(dims.width) * dims.height, 0);
    for (int id : spec.object_ids) {
        const auto* o = record.find_object(id);
        if (o == nullptr) throw ValidationError("compose: unknown object id " + std::to_string(id));
        const auto& b = o->bbox;
        if (b.x < 0 || b.y < 0 || b.right() > image.width || b.bottom() > image.height)
            throw ValidationError("compose: object " + std::to_string(id) + " lies outside the image");
        const BBox placed{b.x - spec.extent.x, b.y - spec.extent.y, b.w, b.h};
        for (int yy = 0; yy < b.h; ++yy) {
            const auto* src = image.at(b.x, b.y + yy);
            auto* dst = c.pixels.at(placed.x, placed.y + yy);
            std::copy(src, src + 3 * b.w, dst);
            std::fill_n(c.mask.begin() + static_cast<std::ptrdiff_t>((placed.y + yy) * dims.width + placed.x), b.w,
                        std::uint8_t{1});
        }
        c.placements.push_back({id, placed});
    }
    return c;
}

CompositeCanvas enlarge_if_sparse(const CompositeCanvas& canvas, double min_fill, int max_scale) {
    const double ratio = canvas.fill_ratio();
    if (ratio >= min_fill || canvas.placements.empty() || max_scale <= 1) return canvas;

    std::vector<BBox> boxes;
    for (const auto& p : canvas.placements) boxes.push_back(p.box);
    const BBox content = union_bbox(boxes);
    const int fit = std::min(canvas.width() / content.w, canvas.height() / content.h);
    const int cap = std::min(max_scale, fit);
    if (cap <= 1) return canvas;

    int s = cap;
    for (int k = 2; k <= cap; ++k) {
        if (ratio * k * k >= min_fill) {
            s = k;
            break;
        }
    }

    CompositeCanvas out;
    out.scale = canvas.scale * s;
    out.pixels = RgbImage(canvas.width(), canvas.height());
    out.mask.assign(canvas.mask.size(), 0);
    const int ox = (canvas.width() - s * content.w) / 2;
    const int oy = (canvas.height() - s * content.h) / 2;
    for (int y = 0; y < s * content.h; ++y) {
        const int sy = content.y + y / s;
        for (int x = 0; x < s * content.w; ++x) {
            const int sx = content.x + x / s;
            const auto src_idx = static_cast<std::size_t>(sy) * canvas.width() + sx;
            const auto dst_idx = static_cast<std::size_t>(oy + y) * canvas.width() + (ox + x);
            out.mask[dst_idx] = canvas.mask[src_idx];
            std::copy_n(canvas.pixels.data.begin() + static_cast<std::ptrdiff_t>(src_idx * 3), 3,
                        out.pixels.data.begin() + static_cast<std::ptrdiff_t>(dst_idx * 3));
        }
    }
    for (const auto& p : canvas.placements) {
        out.placements.push_back(
            {p.object_id, {ox + s * (p.box.x - content.x), oy + s * (p.box.y - content.y), s * p.box.w, s * p.box.h}});
    }
    return out;
}

PooledPatchExtractor::PooledPatchExtractor(int grid) : grid_(grid) {
    if (grid < 1) throw std::invalid_argument("feature grid must be >= 1");
}

std::vector<double> PooledPatchExtractor::extract(const CompositeCanvas& canvas) const {
    const int g = grid_;
    const int H = canvas.height(), W = canvas.width();
    std::vector<double> out(dim(), 0.0);
    for (int ci = 0; ci < g; ++ci) {
        const int r0 = static_cast<int>(static_cast<long long>(ci) * H / g);
        const int r1 = static_cast<int>(static_cast<long long>(ci + 1) * H / g);
        for (int cj = 0; cj < g; ++cj) {
            const int c0 = static_cast<int>(static_cast<long long>(cj) * W / g);
            const int c1 = static_cast<int>(static_cast<long long>(cj + 1) * W / g);
            const long long n = static_cast<long long>(r1 - r0) * (c1 - c0);
            double r = 0, gr = 0, b = 0, fill = 0;
            for (int y = r0; y < r1; ++y) {
                for (int x = c0; x < c1; ++x) {
                    const auto* px = canvas.pixels.at(x, y);
                    r += px[0];
                    gr += px[1];
                    b += px[2];
                    fill += canvas.mask[static_cast<std::size_t>(y) * W + x];
                }
            }
            double* cell = out.data() + 4 * (ci * g + cj);
            if (n > 0) {
                cell[0] = r / (255.0 * n);
                cell[1] = gr / (255.0 * n);
                cell[2] = b / (255.0 * n);
                cell[3] = fill / n;
            }
        }
    }
    return out;
}

std::vector<double> extract_baseline_features(const CompositeCanvas& canvas, int grid) {
    return PooledPatchExtractor(grid).extract(canvas);
}

nlohmann::ordered_json composites_to_json(const std::vector<CompositeEntry>& entries) {
    nlohmann::ordered_json doc;
    doc["composites"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["image_id"] = e.spec.image_id;
        j["sentence_index"] = e.spec.sentence_index;
        j["objects"] = e.spec.object_ids;
        j["canvas"] = {{"h", e.canvas.height}, {"w", e.canvas.width}};
        j["scale"] = e.scale;
        if (e.ppm_path) j["ppm_path"] = *e.ppm_path;
        if (!e.features.empty()) j["features"] = e.features;
        doc["composites"].push_back(std::move(j));
    }
    return doc;
}

}  // namespace paracap
