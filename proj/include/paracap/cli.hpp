#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace paracap::cli {

/// Fully resolved run parameters. Config-file values override these defaults
/// and explicit flags override the config file.
struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path embeddings;
    std::filesystem::path captions;
    std::filesystem::path alignments;
    std::filesystem::path model;
    std::filesystem::path input;
    std::filesystem::path out;
    std::filesystem::path out_dir;
    std::filesystem::path log;

    double theta = 0.6;
    double alpha = 1.0;
    double tau = 0.2;
    int max_scale = 4;
    int grid = 4;
    bool write_ppm = true;

    int model_dim = 64;
    int heads = 2;
    int ff_dim = 128;
    int max_positions = 16;
    std::string box_encoding = "normalized";
    std::uint64_t seed = 42;
    double learning_rate = 0.05;
    int epochs = 300;

    int max_per_sentence = 4;
    int max_sentences = 6;

    std::string format = "json";
    int jobs = 1;

    /// Throws ValidationError naming the first out-of-range parameter.
    void check() const;
};

/// Parameters echoed into report headers (paths and jobs excluded, so the
/// header is independent of where and how parallel a run happens).
nlohmann::ordered_json echo_parameters(const RunConfig& config);

/// Entry point behind the `paracap` binary; `args` excludes the program name.
/// Returns 0 on success, 1 on usage or validation errors, 2 on I/O errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace paracap::cli
