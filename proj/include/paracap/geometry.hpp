#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracap/dataset.hpp"
#include "paracap/image.hpp"

namespace paracap {

/// Smallest box covering every input. Throws std::invalid_argument on empty input.
BBox union_bbox(std::span<const BBox> boxes);

/// The objects one sentence talks about, before placement.
struct CompositeSpec {
    std::string image_id;
    int sentence_index = 0;
    std::vector<int> object_ids;
    BBox extent;  // union of member boxes in image coordinates
};

/// Builds a spec from object ids of `record`; ValidationError on unknown ids or
/// an empty member list.
CompositeSpec make_composite_spec(const ImageRecord& record, int sentence_index, std::vector<int> object_ids);

struct CanvasDims {
    int height = 0;
    int width = 0;
    friend bool operator==(const CanvasDims&, const CanvasDims&) = default;
};

/// Componentwise max of the union extents across a batch.
CanvasDims batch_canvas_dims(std::span<const CompositeSpec> specs);

struct Placement {
    int object_id = 0;
    BBox box;  // canvas coordinates
};

/// Zero-filled sub-image holding only the member objects' pixels.
struct CompositeCanvas {
    RgbImage pixels;
    std::vector<std::uint8_t> mask;  // 1 where some placed box covers the pixel
    std::vector<Placement> placements;
    int scale = 1;

    int height() const { return pixels.height; }
    int width() const { return pixels.width; }
    long long covered_pixels() const;
    double fill_ratio() const;
};

/// Copies each member box from `image` translated by (-extent.x, -extent.y)
/// onto a zero canvas of `dims`.
CompositeCanvas compose(const RgbImage& image, const ImageRecord& record, const CompositeSpec& spec, CanvasDims dims);

inline constexpr double kDefaultFillThreshold = 0.2;
inline constexpr int kDefaultMaxScale = 4;

/// Integer nearest-neighbour enlargement of the placed content when its fill
/// ratio is below `min_fill`. The factor is the smallest s reaching the ratio,
/// capped by `max_scale` and by the largest factor at which the content still
/// fits the canvas. Scaled content is re-centred.
CompositeCanvas enlarge_if_sparse(const CompositeCanvas& canvas, double min_fill, int max_scale);

/// Pluggable composite feature extractor.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> extract(const CompositeCanvas& canvas) const = 0;
};

/// g x g grid; per cell (mean R, mean G, mean B, fill fraction), colours in [0, 1].
/// Cells are [floor(i*H/g), floor((i+1)*H/g)) by rows, likewise columns.
class PooledPatchExtractor final : public FeatureExtractor {
public:
    explicit PooledPatchExtractor(int grid);
    std::size_t dim() const override { return static_cast<std::size_t>(4 * grid_ * grid_); }
    std::vector<double> extract(const CompositeCanvas& canvas) const override;

private:
    int grid_;
};

std::vector<double> extract_baseline_features(const CompositeCanvas& canvas, int grid);

/// One emitted composite in the manifest.
struct CompositeEntry {
    CompositeSpec spec;
    CanvasDims canvas;
    int scale = 1;
    std::optional<std::string> ppm_path;
    std::vector<double> features;
};

nlohmann::ordered_json composites_to_json(const std::vector<CompositeEntry>& entries);

}  // namespace paracap
