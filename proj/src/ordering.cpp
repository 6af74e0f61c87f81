#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ordering_internal.hpp"
#include "paracap/errors.hpp"
#include "paracap/parallel.hpp"

namespace paracap::ordering {

std::vector<double> apply_penalty(std::span<const double> log_probs, std::span<const int> counts, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("penalty weight alpha must be >= 0");
    if (counts.size() > log_probs.size()) throw std::invalid_argument("apply_penalty: more counts than scores");
    std::vector<double> out(log_probs.begin(), log_probs.end());
    if (alpha == 0.0) return out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0) throw std::invalid_argument("apply_penalty: negative occurrence count");
        out[i] -= alpha * std::log(static_cast<double>(std::max(counts[i], 1)));
    }
    return out;
}

void DecodeState::emit(int object_id) {
    partial.push_back(object_id);
    ++counts[object_id];
}

void DecodeState::close_sentence() {
    if (partial.empty()) return;
    sentences.push_back(std::move(partial));
    partial.clear();
}

namespace {

std::vector<double> mean_rows(const std::vector<std::vector<double>>& rows, std::span<const std::size_t> slots) {
    std::vector<double> out(rows.at(slots.front()).size(), 0.0);
    for (auto s : slots)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += rows[s][i];
    for (auto& x : out) x /= static_cast<double>(slots.size());
    return out;
}

std::vector<std::vector<double>> object_inputs(const ImageRecord& image, BoxEncoding encoding) {
    std::vector<std::vector<double>> out;
    for (const auto& o : image.objects) out.push_back(concat_object_feature(o, image.width, image.height, encoding));
    return out;
}

}  // namespace

ObjectSequence decode(const OrderingModel& model, const ImageRecord& image, double alpha, DecodeLimits limits) {
    if (image.objects.empty()) throw ValidationError("image '" + image.id + "': cannot decode without objects");
    const auto objects = object_inputs(image, model.config.box_encoding);
    const std::size_t K = objects.size();
    const int max_sentences = std::max(0, std::min(limits.max_sentences, model.config.max_positions - 1));
    const std::size_t max_per = static_cast<std::size_t>(std::max(1, limits.max_objects_per_sentence));

    const Weights w{model};
    const auto mem = build_memory(w, objects);
    DecodeState state;
    state.alpha = alpha;
    std::vector<std::size_t> partial_slots;
    StepInput input;
    input.objects = &objects;
    constexpr double kMasked = -std::numeric_limits<double>::infinity();

    while (static_cast<int>(state.sentences.size()) < max_sentences) {
        input.partial = partial_slots.empty() ? std::vector<double>{} : mean_rows(objects, partial_slots);
        StepCache cache;
        cache.build_history(model, input);
        const Vec lp = step_forward(w, mem, cache);

        std::vector<int> counts(K);
        for (std::size_t k = 0; k < K; ++k) {
            auto it = state.counts.find(image.objects[k].id);
            counts[k] = it == state.counts.end() ? 0 : it->second;
        }
        auto scores = apply_penalty(std::span<const double>(lp.data(), static_cast<std::size_t>(lp.size())), counts,
                                    alpha);
        if (partial_slots.empty()) scores[eos_index(K)] = kMasked;
        for (auto s : partial_slots) scores[s] = kMasked;
        if (partial_slots.size() >= max_per)
            for (std::size_t k = 0; k < K; ++k) scores[k] = kMasked;

        const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        if (best < K) {
            state.emit(image.objects[best].id);
            partial_slots.push_back(best);
        } else if (best == eos_index(K)) {
            input.sentences.push_back(mean_rows(objects, partial_slots));
            partial_slots.clear();
            state.close_sentence();
        } else {
            state.close_sentence();
            break;
        }
    }
    return {image.id, state.sentences, state.counts};
}

std::vector<ObjectSequence> decode_dataset(const OrderingModel& model, const std::vector<ImageRecord>& images,
                                           double alpha, DecodeLimits limits, int jobs) {
    std::vector<ObjectSequence> out(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
        if (images[i].objects.empty()) {
            out[i].image_id = images[i].id;
            return;
        }
        out[i] = decode(model, images[i], alpha, limits);
    });
    return out;
}

TrainingSample make_sample(const ImageRecord& image, const AlignmentRecord& alignment, BoxEncoding encoding) {
    if (alignment.image_id != image.id)
        throw ValidationError("alignment for '" + alignment.image_id + "' paired with image '" + image.id + "'");
    TrainingSample s;
    s.image_id = image.id;
    s.objects = object_inputs(image, encoding);
    for (const auto& o : image.objects) s.object_ids.push_back(o.id);
    for (const auto& sentence : alignment.sentences) {
        std::vector<std::size_t> group;
        for (int id : sentence) {
            auto it = std::find(s.object_ids.begin(), s.object_ids.end(), id);
            if (it == s.object_ids.end())
                throw ValidationError("image '" + image.id + "': alignment references unknown object " +
                                      std::to_string(id));
            const auto slot = static_cast<std::size_t>(it - s.object_ids.begin());
            if (std::find(group.begin(), group.end(), slot) == group.end()) group.push_back(slot);
        }
        if (!group.empty()) s.groups.push_back(std::move(group));
    }
    if (s.groups.empty()) throw ValidationError("image '" + image.id + "': alignment is empty");
    return s;
}

std::vector<std::size_t> target_sequence(const TrainingSample& sample) {
    const std::size_t K = sample.objects.size();
    std::vector<std::size_t> out;
    for (const auto& g : sample.groups) {
        out.insert(out.end(), g.begin(), g.end());
        out.push_back(eos_index(K));
    }
    out.push_back(eop_index(K));
    return out;
}

double teacher_forcing_loss(const OrderingModel& model, const TrainingSample& sample, std::vector<double>* grad) {
    if (sample.groups.empty()) throw ValidationError("image '" + sample.image_id + "': alignment is empty");
    const Weights w{model};
    const auto mem = build_memory(w, sample.objects);
    const std::size_t K = sample.objects.size();
    const auto targets = target_sequence(sample);
    const double inv_n = 1.0 / static_cast<double>(targets.size());

    MemoryGrad mg;
    if (grad != nullptr) {
        grad->assign(model.params.size(), 0.0);
        mg = MemoryGrad::zeros(mem);
    }
    StepInput input;
    input.objects = &sample.objects;
    std::vector<std::size_t> partial;
    double loss = 0.0;
    for (auto target : targets) {
        input.partial = partial.empty() ? std::vector<double>{} : mean_rows(sample.objects, partial);
        StepCache cache;
        cache.build_history(model, input);
        const Vec lp = step_forward(w, mem, cache);
        loss -= lp(static_cast<Eigen::Index>(target));
        if (grad != nullptr) {
            Vec dscores = lp.array().exp();
            dscores(static_cast<Eigen::Index>(target)) -= 1.0;
            dscores *= inv_n;
            Grads g{model, *grad};
            step_backward(w, mem, cache, dscores, g, mg);
        }
        if (target < K) {
            partial.push_back(target);
        } else if (target == eos_index(K)) {
            input.sentences.push_back(mean_rows(sample.objects, partial));
            partial.clear();
        }
    }
    if (grad != nullptr) {
        Grads g{model, *grad};
        memory_backward(w, mem, mg, g);
    }
    return loss * inv_n;
}

double dataset_loss(const OrderingModel& model, std::span<const TrainingSample> samples, std::vector<double>* grad,
                    int jobs) {
    if (samples.empty()) throw ValidationError("training set is empty");
    std::vector<double> losses(samples.size());
    std::vector<std::vector<double>> grads(grad != nullptr ? samples.size() : 0);
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        losses[i] = teacher_forcing_loss(model, samples[i], grad != nullptr ? &grads[i] : nullptr);
    });
    const double inv = 1.0 / static_cast<double>(samples.size());
    if (grad != nullptr) {
        grad->assign(model.params.size(), 0.0);
        for (const auto& g : grads)
            for (std::size_t j = 0; j < g.size(); ++j) (*grad)[j] += g[j];
        for (auto& x : *grad) x *= inv;
    }
    double total = 0.0;
    for (double l : losses) total += l;
    return total * inv;
}

TrainResult train(OrderingModel& model, std::span<const TrainingSample> samples, const TrainConfig& config) {
    if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    TrainResult result;
    std::vector<double> grad;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = dataset_loss(model, samples, &grad, config.jobs);
        if (!std::isfinite(loss))
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                                     std::to_string(loss) + ")");
        result.epoch_losses.push_back(loss);
        for (std::size_t j = 0; j < grad.size(); ++j) model.params[j] -= config.learning_rate * grad[j];
    }
    result.final_loss = dataset_loss(model, samples, nullptr, config.jobs);
    if (!std::isfinite(result.final_loss)) throw std::runtime_error("training diverged after the last epoch");
    return result;
}

GradCheckReport compare_gradients(std::vector<double> params, std::span<const double> analytic,
                                  const std::function<double(const std::vector<double>&)>& loss,
                                  std::span<const std::size_t> indices, double eps) {
    GradCheckReport report;
    for (auto idx : indices) {
        const double orig = params.at(idx);
        params[idx] = orig + eps;
        const double up = loss(params);
        params[idx] = orig - eps;
        const double down = loss(params);
        params[idx] = orig;
        GradCheckEntry e;
        e.index = idx;
        e.analytic = analytic[idx];
        e.numeric = (up - down) / (2.0 * eps);
        e.rel_error = std::abs(e.numeric - e.analytic) / std::max(1.0, std::abs(e.analytic));
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        report.entries.push_back(e);
    }
    return report;
}

GradCheckReport grad_check(const OrderingModel& model, const TrainingSample& sample, double eps,
                           std::size_t num_params, std::uint64_t seed) {
    std::vector<double> analytic;
    teacher_forcing_loss(model, sample, &analytic);
    std::vector<std::size_t> indices(model.params.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    const std::size_t n = std::min(num_params, indices.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng() % (indices.size() - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(n);
    OrderingModel probe = model;
    auto loss = [&](const std::vector<double>& p) {
        probe.params = p;
        return teacher_forcing_loss(probe, sample, nullptr);
    };
    return compare_gradients(model.params, analytic, loss, indices, eps);
}

namespace {

const char* encoding_name(BoxEncoding e) { return e == BoxEncoding::normalized ? "normalized" : "raw"; }

}  // namespace

nlohmann::ordered_json model_to_json(const OrderingModel& model) {
    nlohmann::ordered_json doc;
    doc["format"] = "paracap-ordering-1";
    const auto& c = model.config;
    doc["dims"] = {{"input_dim", c.input_dim},  {"model_dim", c.model_dim},         {"heads", c.heads},
                   {"ff_dim", c.ff_dim},        {"max_positions", c.max_positions}};
    doc["box_encoding"] = encoding_name(c.box_encoding);
    doc["seed"] = model.seed;
    doc["params"] = nlohmann::ordered_json::array();
    for (const auto& slot : model.layout) {
        nlohmann::ordered_json t;
        t["name"] = slot.name;
        t["shape"] = {slot.rows, slot.cols};
        t["values"] = std::vector<double>(model.params.begin() + static_cast<std::ptrdiff_t>(slot.offset),
                                          model.params.begin() + static_cast<std::ptrdiff_t>(slot.offset + slot.size()));
        doc["params"].push_back(std::move(t));
    }
    return doc;
}

OrderingModel model_from_json(const nlohmann::json& doc) {
    OrderingModel m;
    try {
        const auto& d = doc.at("dims");
        m.config.input_dim = d.at("input_dim").get<int>();
        m.config.model_dim = d.at("model_dim").get<int>();
        m.config.heads = d.at("heads").get<int>();
        m.config.ff_dim = d.at("ff_dim").get<int>();
        m.config.max_positions = d.at("max_positions").get<int>();
        const auto enc = doc.value("box_encoding", std::string("normalized"));
        if (enc != "normalized" && enc != "raw") throw ValidationError("model: unknown box_encoding '" + enc + "'");
        m.config.box_encoding = enc == "raw" ? BoxEncoding::raw_pixels : BoxEncoding::normalized;
        m.config.check();
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.layout = make_layout(m.config);
        m.params.assign(m.layout.back().offset + m.layout.back().size(), 0.0);
        const auto& params = doc.at("params");
        if (!params.is_array() || params.size() != m.layout.size())
            throw ValidationError("model: expected " + std::to_string(m.layout.size()) + " parameter tensors");
        for (std::size_t i = 0; i < m.layout.size(); ++i) {
            const auto& slot = m.layout[i];
            const auto& t = params[i];
            if (t.at("name").get<std::string>() != slot.name)
                throw ValidationError("model: tensor " + std::to_string(i) + " should be '" + slot.name + "'");
            const auto values = t.at("values").get<std::vector<double>>();
            if (values.size() != slot.size())
                throw ValidationError("model: tensor '" + slot.name + "' has wrong size");
            for (double v : values)
                if (!std::isfinite(v)) throw ValidationError("model: tensor '" + slot.name + "' is not finite");
            std::copy(values.begin(), values.end(), m.params.begin() + static_cast<std::ptrdiff_t>(slot.offset));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model: malformed weights file: ") + e.what());
    }
    return m;
}

void save_model(const OrderingModel& model, const std::filesystem::path& path) {
    write_text_file(path, model_to_json(model).dump() + "\n");
}

OrderingModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

nlohmann::ordered_json sequences_to_json(const std::vector<ObjectSequence>& sequences) {
    nlohmann::ordered_json doc;
    doc["sequences"] = nlohmann::ordered_json::array();
    for (const auto& s : sequences) {
        nlohmann::ordered_json counts = nlohmann::ordered_json::object();
        for (const auto& [id, n] : s.counts) counts[std::to_string(id)] = n;
        doc["sequences"].push_back({{"image_id", s.image_id}, {"sentences", s.sentences}, {"counts", counts}});
    }
    return doc;
}

}  // namespace paracap::ordering
