#include "paracap/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "paracap/alignment.hpp"
#include "paracap/dataset.hpp"
#include "paracap/diag.hpp"
#include "paracap/errors.hpp"
#include "paracap/fixture.hpp"
#include "paracap/geometry.hpp"
#include "paracap/image.hpp"
#include "paracap/metrics.hpp"
#include "paracap/ordering.hpp"
#include "paracap/parallel.hpp"

namespace paracap::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::check() const {
    auto fail = [](const std::string& what) { throw ValidationError("invalid parameter: " + what); };
    if (!(theta > 0.0 && theta <= 1.0)) fail("theta must be in (0, 1]");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be a finite value >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must be in [0, 1]");
    if (max_scale < 1) fail("max-scale must be >= 1");
    if (grid < 1) fail("grid must be >= 1");
    if (model_dim < 1 || heads < 1 || ff_dim < 1) fail("model dimensions must be positive");
    if (model_dim % heads != 0) fail("model-dim must be divisible by heads");
    if (max_positions < 2) fail("max-positions must be >= 2");
    if (box_encoding != "normalized" && box_encoding != "raw") fail("box-encoding must be 'normalized' or 'raw'");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning-rate must be a finite value > 0");
    if (epochs < 0) fail("epochs must be >= 0");
    if (max_per_sentence < 1) fail("max-per-sentence must be >= 1");
    if (max_sentences < 1) fail("max-sentences must be >= 1");
    if (format != "json" && format != "csv" && format != "md") fail("format must be json, csv or md");
    if (jobs < 1) fail("jobs must be >= 1");
}

ordered_json echo_parameters(const RunConfig& c) {
    return {{"theta", c.theta},
            {"alpha", c.alpha},
            {"tau", c.tau},
            {"max_scale", c.max_scale},
            {"grid", c.grid},
            {"model_dim", c.model_dim},
            {"heads", c.heads},
            {"ff_dim", c.ff_dim},
            {"max_positions", c.max_positions},
            {"box_encoding", c.box_encoding},
            {"seed", c.seed},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"max_per_sentence", c.max_per_sentence},
            {"max_sentences", c.max_sentences}};
}

namespace {

// One configurable parameter: its flag, its config-file key and how to copy it.
struct Field {
    std::string key;
    std::function<CLI::Option*(CLI::App&, RunConfig&)> add;
    std::function<void(RunConfig&, const RunConfig&)> copy;
    std::function<void(RunConfig&, const json&, const fs::path&)> load;
};

std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

template <class T>
Field field(const std::string& key, T RunConfig::*member, const std::string& help) {
    Field f;
    f.key = key;
    f.add = [=](CLI::App& app, RunConfig& target) { return app.add_option(flag_name(key), target.*member, help); };
    f.copy = [=](RunConfig& dst, const RunConfig& src) { dst.*member = src.*member; };
    f.load = [=](RunConfig& dst, const json& value, const fs::path& base) {
        if constexpr (std::is_same_v<T, fs::path>) {
            if (!value.is_string()) throw ValidationError("config: '" + key + "' must be a string");
            fs::path p = value.get<std::string>();
            dst.*member = p.is_absolute() || base.empty() ? p : base / p;
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!value.is_number_unsigned()) throw ValidationError("config: '" + key + "' must be a non-negative integer");
            dst.*member = value.get<T>();
        } else if constexpr (std::is_same_v<T, int>) {
            if (!value.is_number_integer()) throw ValidationError("config: '" + key + "' must be an integer");
            dst.*member = value.get<T>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) throw ValidationError("config: '" + key + "' must be a number");
            dst.*member = value.get<T>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) throw ValidationError("config: '" + key + "' must be true or false");
            dst.*member = value.get<T>();
        } else {
            if (!value.is_string()) throw ValidationError("config: '" + key + "' must be a string");
            dst.*member = value.get<T>();
        }
    };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        field("dataset", &RunConfig::dataset, "Dataset JSON"),
        field("embeddings", &RunConfig::embeddings, "Word-vector text file"),
        field("captions", &RunConfig::captions, "Generated captions JSON"),
        field("alignments", &RunConfig::alignments, "Alignment JSON from `align`"),
        field("model", &RunConfig::model, "Model weights JSON from `train-order`"),
        field("input", &RunConfig::input, "Report JSON from `eval`"),
        field("out", &RunConfig::out, "Output file"),
        field("out_dir", &RunConfig::out_dir, "Output directory"),
        field("log", &RunConfig::log, "Training log JSON"),
        field("theta", &RunConfig::theta, "Similarity threshold in (0, 1]"),
        field("alpha", &RunConfig::alpha, "Repetition penalty weight (>= 0)"),
        field("tau", &RunConfig::tau, "Fill ratio below which composites are enlarged"),
        field("max_scale", &RunConfig::max_scale, "Largest enlargement factor"),
        field("grid", &RunConfig::grid, "Pooled-patch grid size"),
        field("write_ppm", &RunConfig::write_ppm, "Write composite PPM files (true/false)"),
        field("model_dim", &RunConfig::model_dim, "Decoder width"),
        field("heads", &RunConfig::heads, "Attention heads"),
        field("ff_dim", &RunConfig::ff_dim, "Feed-forward width"),
        field("max_positions", &RunConfig::max_positions, "History positions, start token included"),
        field("box_encoding", &RunConfig::box_encoding, "normalized or raw"),
        field("seed", &RunConfig::seed, "Initialisation seed (falls back to PARACAP_SEED, then 42)"),
        field("learning_rate", &RunConfig::learning_rate, "Gradient-descent step"),
        field("epochs", &RunConfig::epochs, "Full-batch epochs"),
        field("max_per_sentence", &RunConfig::max_per_sentence, "Object cap per decoded sentence"),
        field("max_sentences", &RunConfig::max_sentences, "Sentence cap per decoded paragraph"),
        field("format", &RunConfig::format, "Report format: json, csv or md"),
        field("jobs", &RunConfig::jobs, "Worker threads for per-image work"),
    };
    return f;
}

const Field& find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw std::logic_error("unknown field " + key);
}

struct Command {
    std::string name;
    std::string help;
    std::vector<std::string> keys;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> c = {
        {"align", "Assign detected objects to ground-truth sentences", {"dataset", "embeddings", "theta", "out"}},
        {"compose",
         "Build combined-object sub-images and their features",
         {"dataset", "alignments", "out_dir", "tau", "max_scale", "grid", "write_ppm"}},
        {"train-order",
         "Train the object-ordering decoder with teacher forcing",
         {"dataset", "alignments", "out", "log", "model_dim", "heads", "ff_dim", "max_positions", "box_encoding", "seed",
          "learning_rate", "epochs"}},
        {"order",
         "Decode object sequences with the repetition penalty",
         {"dataset", "model", "out", "alpha", "max_per_sentence", "max_sentences"}},
        {"eval",
         "Score generated captions (BLEU, CIDEr-D, object metrics)",
         {"dataset", "captions", "embeddings", "out", "theta", "format"}},
        {"report", "Convert a JSON report to json, csv or md", {"input", "out", "format"}},
        {"selftest", "Run the pipeline and invariant checks on the bundled toy fixture", {"out_dir", "epochs"}},
    };
    return c;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> k = [] {
        std::set<std::string> s;
        for (const auto& f : fields()) s.insert(f.key);
        return s;
    }();
    return k;
}

std::uint64_t seed_from_env() {
    const char* env = std::getenv("PARACAP_SEED");
    if (!env || !*env) return 42;
    const std::string s = env;
    if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 20)
        throw ValidationError("PARACAP_SEED must be a non-negative integer, got '" + s + "'");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ValidationError("PARACAP_SEED out of range: '" + s + "'");
    }
}

void require(const fs::path& p, const std::string& key) {
    if (p.empty()) throw ValidationError("missing required " + flag_name(key));
}

void write_json(const fs::path& path, const ordered_json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

BoxEncoding encoding_of(const RunConfig& c) {
    return c.box_encoding == "raw" ? BoxEncoding::raw_pixels : BoxEncoding::normalized;
}

std::string file_stem_for(const std::string& image_id, int sentence) {
    std::string s;
    for (char ch : image_id)
        s += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
    return s + "_s" + std::to_string(sentence);
}

// --- subcommands -----------------------------------------------------------

int cmd_align(const RunConfig& c, std::ostream& out) {
    require(c.dataset, "dataset");
    require(c.embeddings, "embeddings");
    require(c.out, "out");
    const auto ds = load_dataset(c.dataset);
    const auto table = load_embeddings(c.embeddings);
    const auto records = align_dataset(ds.images, table, c.theta, c.jobs);
    std::size_t assignments = 0;
    for (const auto& r : records)
        for (const auto& s : r.sentences) assignments += s.size();
    write_json(c.out, alignments_to_json(records));
    out << "aligned " << records.size() << " images, " << assignments << " object-sentence assignments -> "
        << c.out.string() << "\n";
    return 0;
}

std::map<std::string, const AlignmentRecord*> index_alignments(const Dataset& ds,
                                                              const std::vector<AlignmentRecord>& records) {
    std::map<std::string, const AlignmentRecord*> by_id;
    for (const auto& r : records) {
        if (!ds.find(r.image_id)) throw ValidationError("alignments: unknown image id '" + r.image_id + "'");
        if (!by_id.emplace(r.image_id, &r).second)
            throw ValidationError("alignments: duplicate image id '" + r.image_id + "'");
    }
    return by_id;
}

int cmd_compose(const RunConfig& c, std::ostream& out) {
    require(c.dataset, "dataset");
    require(c.alignments, "alignments");
    require(c.out_dir, "out_dir");
    const auto ds = load_dataset(c.dataset);
    const auto records = load_alignments(c.alignments);
    const auto by_id = index_alignments(ds, records);

    // Specs grouped by image so each source image is decoded once.
    std::vector<CompositeSpec> specs;
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> groups;  // image index -> spec indices
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const auto& img = ds.images[i];
        auto it = by_id.find(img.id);
        if (it == by_id.end()) {
            warn("image '" + img.id + "' has no alignment; skipped");
            continue;
        }
        std::vector<std::size_t> members;
        for (std::size_t s = 0; s < it->second->sentences.size(); ++s) {
            if (it->second->sentences[s].empty()) continue;
            members.push_back(specs.size());
            specs.push_back(make_composite_spec(img, static_cast<int>(s), it->second->sentences[s]));
        }
        if (!members.empty()) {
            if (!img.pixel_source) throw ValidationError("image '" + img.id + "': compose needs pixel_source");
            groups.emplace_back(i, std::move(members));
        }
    }
    if (specs.empty()) throw ValidationError("no aligned sentences to compose");
    const CanvasDims dims = batch_canvas_dims(specs);
    ensure_dir(c.out_dir);

    const PooledPatchExtractor extractor(c.grid);
    std::vector<CompositeEntry> entries(specs.size());
    parallel_for(groups.size(), c.jobs, [&](std::size_t g) {
        const auto& img = ds.images[groups[g].first];
        const RgbImage pixels = read_ppm(ds.resolve(*img.pixel_source));
        if (pixels.width != img.width || pixels.height != img.height)
            throw ValidationError("image '" + img.id + "': pixel source is " + std::to_string(pixels.width) + "x" +
                                  std::to_string(pixels.height) + ", record says " + std::to_string(img.width) + "x" +
                                  std::to_string(img.height));
        for (auto si : groups[g].second) {
            const auto& spec = specs[si];
            const auto canvas = enlarge_if_sparse(compose(pixels, img, spec, dims), c.tau, c.max_scale);
            auto& e = entries[si];
            e.spec = spec;
            e.canvas = dims;
            e.scale = canvas.scale;
            e.features = extractor.extract(canvas);
            if (c.write_ppm) {
                const std::string name = file_stem_for(spec.image_id, spec.sentence_index) + ".ppm";
                write_ppm(canvas.pixels, c.out_dir / name);
                e.ppm_path = name;
            }
        }
    });
    write_json(c.out_dir / "manifest.json", composites_to_json(entries));
    out << "composed " << entries.size() << " sub-images on a " << dims.height << "x" << dims.width << " canvas -> "
        << (c.out_dir / "manifest.json").string() << "\n";
    return 0;
}

std::vector<ordering::TrainingSample> training_samples(const Dataset& ds, const std::vector<AlignmentRecord>& records,
                                                       BoxEncoding encoding) {
    const auto by_id = index_alignments(ds, records);
    std::vector<ordering::TrainingSample> samples;
    for (const auto& img : ds.images) {
        auto it = by_id.find(img.id);
        if (it == by_id.end() || it->second->empty()) {
            warn("image '" + img.id + "' has no aligned objects; not used for training");
            continue;
        }
        samples.push_back(ordering::make_sample(img, *it->second, encoding));
    }
    if (samples.empty()) throw ValidationError("no image has aligned objects to train on");
    return samples;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
    require(c.dataset, "dataset");
    require(c.alignments, "alignments");
    require(c.out, "out");
    const auto ds = load_dataset(c.dataset);
    const auto samples = training_samples(ds, load_alignments(c.alignments), encoding_of(c));

    ordering::ModelConfig mc;
    mc.input_dim = ds.feature_dim + 4;
    mc.model_dim = c.model_dim;
    mc.heads = c.heads;
    mc.ff_dim = c.ff_dim;
    mc.max_positions = c.max_positions;
    mc.box_encoding = encoding_of(c);
    auto model = ordering::init_model(mc, c.seed);
    const auto result = ordering::train(model, samples, {c.learning_rate, c.epochs, c.jobs});
    ordering::save_model(model, c.out);
    const double initial = result.epoch_losses.empty() ? result.final_loss : result.epoch_losses.front();
    if (!c.log.empty()) {
        ordered_json log;
        log["samples"] = samples.size();
        log["initial_loss"] = initial;
        log["final_loss"] = result.final_loss;
        log["epoch_losses"] = result.epoch_losses;
        write_json(c.log, log);
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "trained on %zu images: loss %.6f -> %.6f", samples.size(), initial,
                  result.final_loss);
    out << buf << " -> " << c.out.string() << "\n";
    return 0;
}

int cmd_order(const RunConfig& c, std::ostream& out) {
    require(c.dataset, "dataset");
    require(c.model, "model");
    require(c.out, "out");
    const auto ds = load_dataset(c.dataset);
    const auto model = ordering::load_model(c.model);
    if (model.config.input_dim != ds.feature_dim + 4)
        throw ValidationError("model input_dim " + std::to_string(model.config.input_dim) +
                              " does not match dataset feature_dim + 4 = " + std::to_string(ds.feature_dim + 4));
    const auto seqs =
        ordering::decode_dataset(model, ds.images, c.alpha, {c.max_per_sentence, c.max_sentences}, c.jobs);
    auto doc = ordering::sequences_to_json(seqs);
    ordered_json wrapped;
    wrapped["alpha"] = c.alpha;
    wrapped["sequences"] = doc["sequences"];
    write_json(c.out, wrapped);
    int max_count = 0;
    for (const auto& s : seqs)
        for (const auto& [id, n] : s.counts) max_count = std::max(max_count, n);
    out << "decoded " << seqs.size() << " images (alpha " << c.alpha << ", max object count " << max_count << ") -> "
        << c.out.string() << "\n";
    return 0;
}

void emit_report(const metrics::MetricsReport& report, const std::string& format, const fs::path& path,
                 std::ostream& out) {
    std::string text;
    if (format == "json")
        text = metrics::report_to_json(report).dump(2) + "\n";
    else if (format == "csv")
        text = metrics::report_to_csv(report);
    else
        text = metrics::report_to_markdown(report);
    if (path.empty())
        out << text;
    else
        write_text_file(path, text);
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
    require(c.dataset, "dataset");
    require(c.captions, "captions");
    require(c.embeddings, "embeddings");
    const auto ds = load_dataset(c.dataset);
    const auto caps = load_captions(c.captions);
    const auto table = load_embeddings(c.embeddings);
    metrics::EvalConfig ec;
    ec.threshold = c.theta;
    ec.jobs = c.jobs;
    auto report = metrics::evaluate(caps, ds, &table, ec);
    const auto echo = echo_parameters(c);
    for (const auto& [k, v] : echo.items())
        if (!report.config.contains(k)) report.config[k] = v;
    emit_report(report, c.format, c.out, out);
    if (!c.out.empty()) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "evaluated %zu images: BLEU-4 %.4f CIDEr %.4f RC_cap %.2f Rep-4 %.3f",
                      report.images.size(), report.corpus.bleu[3], report.corpus.cider,
                      report.corpus.objects.rc_cap, report.corpus.objects.rep4);
        out << buf << " -> " << c.out.string() << "\n";
    }
    return 0;
}

int cmd_report(const RunConfig& c, std::ostream& out) {
    require(c.input, "input");
    const auto report = metrics::report_from_json(read_json_file(c.input));
    emit_report(report, c.format, c.out, out);
    return 0;
}

// --- selftest --------------------------------------------------------------

struct Checker {
    std::ostream& out;
    int failed = 0;

    void operator()(const std::string& name, bool ok, const std::string& detail = {}) {
        out << (ok ? "PASS " : "FAIL ") << name;
        if (!ok && !detail.empty()) out << ": " << detail;
        out << "\n";
        if (!ok) ++failed;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    return files;
}

// Runs align -> compose -> train-order -> order (alpha 0 and 1) -> eval into `dir`.
std::string run_pipeline(const fs::path& fixture, const fs::path& dir, int jobs, int epochs) {
    ensure_dir(dir);
    const std::string j = std::to_string(jobs);
    const std::string ds = (fixture / "toy.json").string();
    const std::vector<std::vector<std::string>> stages = {
        {"align", "--dataset", ds, "--embeddings", (fixture / "toy.vec").string(), "--out",
         (dir / "alignments.json").string(), "--jobs", j},
        {"compose", "--dataset", ds, "--alignments", (dir / "alignments.json").string(), "--out-dir",
         (dir / "composites").string(), "--jobs", j},
        {"train-order", "--dataset", ds, "--alignments", (dir / "alignments.json").string(), "--out",
         (dir / "model.json").string(), "--log", (dir / "train_log.json").string(), "--epochs", std::to_string(epochs),
         "--jobs", j},
        {"order", "--dataset", ds, "--model", (dir / "model.json").string(), "--alpha", "0", "--out",
         (dir / "order_alpha0.json").string(), "--jobs", j},
        {"order", "--dataset", ds, "--model", (dir / "model.json").string(), "--alpha", "1", "--out",
         (dir / "order_alpha1.json").string(), "--jobs", j},
        {"eval", "--dataset", ds, "--captions", (fixture / "toy_caps.json").string(), "--embeddings",
         (fixture / "toy.vec").string(), "--out", (dir / "report.json").string(), "--jobs", j},
        {"report", "--input", (dir / "report.json").string(), "--format", "csv", "--out",
         (dir / "report.csv").string()},
        {"report", "--input", (dir / "report.json").string(), "--format", "md", "--out", (dir / "report.md").string()},
    };
    for (const auto& args : stages) {
        std::ostringstream sink, errs;
        if (int rc = run(args, sink, errs); rc != 0)
            return args[0] + " exited with " + std::to_string(rc) + ": " + errs.str();
    }
    return {};
}

int max_count_of(const json& seq) {
    int m = 0;
    for (const auto& [k, v] : seq["counts"].items()) m = std::max(m, v.get<int>());
    return m;
}

int rep4_of(const json& seq) {
    int r = 0;
    for (const auto& [k, v] : seq["counts"].items()) r += v.get<int>() >= metrics::kRepetitionThreshold;
    return r;
}

int cmd_selftest(const RunConfig& c, std::ostream& out) {
    const bool temporary = c.out_dir.empty();
    const fs::path work = temporary ? fs::temp_directory_path() / ("paracap-selftest-" + std::to_string(::getpid()))
                                    : c.out_dir;
    if (temporary) fs::remove_all(work);
    const fs::path fixture_dir = work / "fixture";
    fixture::write_toy_fixture(fixture_dir);

    Checker check{out};
    {
        const auto ds = load_dataset(fixture_dir / "toy.json");
        const auto report = validate(ds, true);
        check("fixture validates (including pixel dimensions)", report.ok,
              report.issues.empty() ? "" : report.issues.front().message);
    }

    // Identical pipelines at jobs=1 and jobs>1 must produce identical trees.
    const int wide = std::max(2, c.jobs);
    const auto err_a = run_pipeline(fixture_dir, work / "run-a", 1, c.epochs);
    const auto err_b = err_a.empty() ? run_pipeline(fixture_dir, work / "run-b", wide, c.epochs) : std::string();
    check("pipeline run 1 (jobs=1) completes", err_a.empty(), err_a);
    check("pipeline run 2 (jobs=" + std::to_string(wide) + ") completes", err_b.empty() && err_a.empty(), err_b);
    if (!err_a.empty() || !err_b.empty()) {
        out << check.failed << " check(s) failed\n";
        return 1;
    }

    const fs::path run = work / "run-a";
    const auto tree_a = tree_contents(run);
    const auto tree_b = tree_contents(work / "run-b");
    std::string diff;
    if (tree_a.size() != tree_b.size()) diff = "file counts differ";
    for (const auto& [name, bytes] : tree_a) {
        auto it = tree_b.find(name);
        if (it == tree_b.end() || it->second != bytes) {
            diff = name;
            break;
        }
    }
    check("runs are byte-identical (" + std::to_string(tree_a.size()) + " files)", diff.empty(), diff);

    const auto ds = load_dataset(fixture_dir / "toy.json");
    const auto alignments = load_alignments(run / "alignments.json");
    bool audit = true, nonempty = false;
    for (const auto& a : alignments)
        for (const auto& row : a.scores)
            for (double s : row) {
                audit = audit && s >= c.theta;
                nonempty = true;
            }
    check("every alignment similarity >= theta", audit && nonempty);

    {
        const auto manifest = read_json_file(run / "composites" / "manifest.json");
        bool background = true, files = true;
        std::vector<CompositeSpec> specs;
        for (const auto& e : manifest["composites"]) {
            const auto* img = ds.find(e["image_id"].get<std::string>());
            specs.push_back(make_composite_spec(*img, e["sentence_index"].get<int>(), e["objects"].get<std::vector<int>>()));
        }
        const CanvasDims dims = batch_canvas_dims(specs);
        std::size_t k = 0;
        for (const auto& e : manifest["composites"]) {
            const auto& spec = specs[k++];
            const auto* img = ds.find(spec.image_id);
            const auto canvas = compose(read_ppm(ds.resolve(*img->pixel_source)), *img, spec, dims);
            for (std::size_t p = 0; p < canvas.mask.size(); ++p)
                if (!canvas.mask[p])
                    for (int ch = 0; ch < 3; ++ch) background = background && canvas.pixels.data[p * 3 + ch] == 0;
            const auto enlarged = enlarge_if_sparse(canvas, c.tau, c.max_scale);
            files = files && e["scale"].get<int>() == enlarged.scale &&
                    read_ppm(run / "composites" / e["ppm_path"].get<std::string>()) == enlarged.pixels;
        }
        check("composites are zero outside placed boxes", background);
        check("composite files match in-process composition", files);
    }

    {
        const std::vector<double> lp{std::log(0.5), std::log(0.25), std::log(0.25)};
        const std::vector<int> counts{4, 1};
        const auto same = ordering::apply_penalty(lp, counts, 0.0);
        const auto pen = ordering::apply_penalty(lp, counts, 1.0);
        check("penalty: alpha=0 is the identity", same == lp);
        check("penalty: X<=1 unchanged, X>=2 strictly lowered",
              pen[1] == lp[1] && pen[2] == lp[2] && pen[0] < lp[0] &&
                  std::abs(pen[0] - (std::log(0.5) - std::log(4.0))) < 1e-12);
    }

    {
        const auto log = read_json_file(run / "train_log.json");
        const double initial = log["initial_loss"].get<double>(), final = log["final_loss"].get<double>();
        check("training lowers the teacher-forced loss", std::isfinite(final) && final < initial,
              std::to_string(initial) + " -> " + std::to_string(final));
    }

    {
        const auto a0 = read_json_file(run / "order_alpha0.json")["sequences"];
        const auto a1 = read_json_file(run / "order_alpha1.json")["sequences"];
        bool per_image = a0.size() == a1.size();
        int rep0 = 0, rep1 = 0;
        for (std::size_t i = 0; per_image && i < a0.size(); ++i) {
            per_image = max_count_of(a1[i]) <= max_count_of(a0[i]);
            rep0 += rep4_of(a0[i]);
            rep1 += rep4_of(a1[i]);
        }
        check("alpha=1 max object count <= alpha=0 on every image", per_image);
        check("alpha=1 Rep-4 <= alpha=0 Rep-4", rep1 <= rep0,
              std::to_string(rep1) + " > " + std::to_string(rep0));
    }

    {
        const auto report = read_json_file(run / "report.json");
        bool fields_ok = report.contains("corpus") && report["images"].size() == ds.images.size();
        for (const auto& f : metrics::metric_fields()) {
            fields_ok = fields_ok && report["corpus"].contains(f);
            for (const auto& row : report["images"]) fields_ok = fields_ok && row.contains(f);
        }
        check("report carries every metric field for corpus and images", fields_ok);
        const auto csv = slurp(run / "report.csv");
        const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
        check("csv has one row per image plus MEAN", rows == ds.images.size() + 2);
        const auto md = slurp(run / "report.md");
        check("markdown has RC_cap and Rep-4 columns",
              md.find("RC_cap") != std::string::npos && md.find("Rep-4") != std::string::npos);
    }

    if (temporary) fs::remove_all(work);
    out << (check.failed == 0 ? "selftest passed\n" : std::to_string(check.failed) + " check(s) failed\n");
    return check.failed == 0 ? 0 : 1;
}

int dispatch(const std::string& name, const RunConfig& c, std::ostream& out) {
    if (name == "align") return cmd_align(c, out);
    if (name == "compose") return cmd_compose(c, out);
    if (name == "train-order") return cmd_train(c, out);
    if (name == "order") return cmd_order(c, out);
    if (name == "eval") return cmd_eval(c, out);
    if (name == "report") return cmd_report(c, out);
    return cmd_selftest(c, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"paracap: object alignment, composition, ordering and caption metrics"};
    app.name("paracap");
    app.require_subcommand(1, 1);

    RunConfig flags;
    std::string config_path;
    std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> options;
    for (const auto& cmd : commands()) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", config_path, "JSON config file; explicit flags take precedence");
        auto& opts = options[cmd.name];
        for (const auto& key : cmd.keys) opts.emplace_back(key, find_field(key).add(*sub, flags));
        opts.emplace_back("jobs", find_field("jobs").add(*sub, flags));
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        CLI::App* failed = &app;
        for (auto* sub : app.get_subcommands()) failed = sub;
        err << "error: " << e.what() << "\n\n" << failed->help();
        return 1;
    }
    const std::string name = app.get_subcommands().front()->get_name();

    try {
        RunConfig config;
        std::set<std::string> given;
        if (!config_path.empty()) {
            const fs::path path = config_path;
            const json doc = read_json_file(path);
            if (!doc.is_object()) throw ValidationError("config: top level must be an object");
            for (const auto& [key, value] : doc.items()) {
                if (!known_keys().count(key)) throw ValidationError("config: unknown key '" + key + "'");
                find_field(key).load(config, value, path.parent_path());
                given.insert(key);
            }
        }
        for (const auto& [key, opt] : options[name])
            if (opt->count() > 0) {
                find_field(key).copy(config, flags);
                given.insert(key);
            }
        if (!given.count("seed")) config.seed = seed_from_env();
        config.check();
        return dispatch(name, config, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace paracap::cli
