#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "paracap/alignment.hpp"
#include "paracap/dataset.hpp"

// Object ordering network: a one-layer attention decoder that reads the
// history of per-sentence object features on one side and every object of
// the image on the other, and scores each object (plus end-of-sentence and
// end-of-paragraph) as the next one to describe.
namespace paracap::ordering {

struct ModelConfig {
    int input_dim = 0;       // object feature length + 4 box terms
    int model_dim = 64;
    int heads = 2;
    int ff_dim = 128;
    int max_positions = 16;  // history length, start token included
    BoxEncoding box_encoding = BoxEncoding::normalized;

    void check() const;
};

/// Parameter tensors, in storage (and serialization) order.
enum class Param : int {
    history_w,     // W, model_dim x input_dim
    history_b,     // b
    positions,     // E^p, max_positions x input_dim
    start_token,
    partial_marker,
    object_w,
    object_b,
    ln1_gain,
    ln1_bias,
    self_q,
    self_k,
    self_v,
    self_out,
    ln2_gain,
    ln2_bias,
    cross_q,
    cross_k,
    cross_v,
    cross_out,
    ln3_gain,
    ln3_bias,
    ff_w1,
    ff_b1,
    ff_w2,
    ff_b2,
    lnf_gain,
    lnf_bias,
    fc_w,
    fc_b,
    eos,
    eop,
    count_
};

struct TensorSlot {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

std::vector<TensorSlot> make_layout(const ModelConfig& config);

struct OrderingModel {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::vector<TensorSlot> layout;
    std::vector<double> params;

    const TensorSlot& slot(Param p) const { return layout[static_cast<std::size_t>(p)]; }
    std::span<double> tensor(Param p);
    std::span<const double> tensor(Param p) const;
    std::size_t output_size(std::size_t objects) const { return objects + 2; }
};

/// Deterministic initialisation: weights and biases uniform in +-1/sqrt(fan_in),
/// layer-norm gains 1 and biases 0.
OrderingModel init_model(const ModelConfig& config, std::uint64_t seed);

/// Zeroes the output projection so every step predicts the uniform distribution.
void make_uniform_output(OrderingModel& model);

/// sv''_t = W (sv'_t + E^p_{first_position + t}) + b.
std::vector<std::vector<double>> project_history(std::span<const std::vector<double>> history,
                                                 const OrderingModel& model, int first_position = 0);

/// Decoder input for one prediction step.
struct StepInput {
    const std::vector<std::vector<double>>* objects = nullptr;   // v'_1..K
    std::vector<std::vector<double>> sentences;                  // completed sentence features
    std::vector<double> partial;                                 // mean of the open sentence, empty if none
};

/// Log-probabilities over [objects..., EOS, EOP].
std::vector<double> forward(const OrderingModel& model, const StepInput& input);

inline std::size_t eos_index(std::size_t objects) { return objects; }
inline std::size_t eop_index(std::size_t objects) { return objects + 1; }

/// logp_i - alpha * ln(max(X_i, 1)) for the first counts.size() entries (the
/// objects); the remaining entries (EOS, EOP) are returned unchanged.
std::vector<double> apply_penalty(std::span<const double> log_probs, std::span<const int> counts, double alpha);

struct DecodeLimits {
    int max_objects_per_sentence = 4;
    int max_sentences = 6;
};

struct DecodeState {
    std::map<int, int> counts;               // X: object id -> occurrences so far
    double alpha = 0.0;
    std::vector<int> partial;
    std::vector<std::vector<int>> sentences;

    void emit(int object_id);
    void close_sentence();
};

struct ObjectSequence {
    std::string image_id;
    std::vector<std::vector<int>> sentences;
    std::map<int, int> counts;
};

/// Greedy decoding over penalised scores. An object is not repeated inside one
/// sentence and EOS is only available for a non-empty sentence.
ObjectSequence decode(const OrderingModel& model, const ImageRecord& image, double alpha,
                      DecodeLimits limits = {});

std::vector<ObjectSequence> decode_dataset(const OrderingModel& model, const std::vector<ImageRecord>& images,
                                           double alpha, DecodeLimits limits = {}, int jobs = 1);

/// Teacher-forcing target for one image.
struct TrainingSample {
    std::string image_id;
    std::vector<std::vector<double>> objects;      // v'
    std::vector<int> object_ids;
    std::vector<std::vector<std::size_t>> groups;  // non-empty aligned sentences, as object slots
};

/// Sentences with no aligned object are skipped. Throws ValidationError when an
/// id is unknown or the alignment is empty.
TrainingSample make_sample(const ImageRecord& image, const AlignmentRecord& alignment, BoxEncoding encoding);

/// Target tokens: sr_1 EOS sr_2 EOS ... sr_S EOS EOP, as output slots.
std::vector<std::size_t> target_sequence(const TrainingSample& sample);

/// Mean NLL of the target sequence under ground-truth history. When `grad` is
/// non-null it is resized to params.size() and overwritten with dLoss/dparams.
double teacher_forcing_loss(const OrderingModel& model, const TrainingSample& sample, std::vector<double>* grad);

/// Mean over samples of teacher_forcing_loss. Per-sample gradients run on
/// `jobs` threads and are reduced in sample order.
double dataset_loss(const OrderingModel& model, std::span<const TrainingSample> samples, std::vector<double>* grad,
                    int jobs = 1);

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 300;
    int jobs = 1;
};

struct TrainResult {
    std::vector<double> epoch_losses;  // loss before each epoch's update
    double final_loss = 0.0;
};

/// Full-batch gradient descent. Throws std::runtime_error on a non-finite loss.
TrainResult train(OrderingModel& model, std::span<const TrainingSample> samples, const TrainConfig& config);

struct GradCheckEntry {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradCheckEntry> entries;
};

/// Central differences against `analytic` on the given parameter indices;
/// error = |numeric - analytic| / max(1, |analytic|).
GradCheckReport compare_gradients(std::vector<double> params, std::span<const double> analytic,
                                  const std::function<double(const std::vector<double>&)>& loss,
                                  std::span<const std::size_t> indices, double eps);

GradCheckReport grad_check(const OrderingModel& model, const TrainingSample& sample, double eps = 1e-5,
                           std::size_t num_params = 64, std::uint64_t seed = 7);

nlohmann::ordered_json model_to_json(const OrderingModel& model);
OrderingModel model_from_json(const nlohmann::json& doc);
void save_model(const OrderingModel& model, const std::filesystem::path& path);
OrderingModel load_model(const std::filesystem::path& path);

nlohmann::ordered_json sequences_to_json(const std::vector<ObjectSequence>& sequences);

}  // namespace paracap::ordering
