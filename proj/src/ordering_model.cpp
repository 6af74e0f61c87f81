#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "ordering_internal.hpp"
#include "paracap/errors.hpp"

namespace paracap::ordering {

void ModelConfig::check() const {
    if (input_dim < 1) throw ValidationError("ordering model: input_dim must be >= 1");
    if (model_dim < 4) throw ValidationError("ordering model: model_dim must be >= 4");
    if (heads < 1 || model_dim % heads != 0)
        throw ValidationError("ordering model: heads must divide model_dim");
    if (ff_dim < 1) throw ValidationError("ordering model: ff_dim must be >= 1");
    if (max_positions < 2) throw ValidationError("ordering model: max_positions must be >= 2");
}

std::vector<TensorSlot> make_layout(const ModelConfig& c) {
    const int din = c.input_dim, d = c.model_dim, f = c.ff_dim;
    std::vector<TensorSlot> s = {
        {"history_w", d, din},     {"history_b", d, 1},       {"positions", c.max_positions, din},
        {"start_token", din, 1},   {"partial_marker", din, 1}, {"object_w", d, din},
        {"object_b", d, 1},        {"ln1_gain", d, 1},        {"ln1_bias", d, 1},
        {"self_q", d, d},          {"self_k", d, d},          {"self_v", d, d},
        {"self_out", d, d},        {"ln2_gain", d, 1},        {"ln2_bias", d, 1},
        {"cross_q", d, d},         {"cross_k", d, d},         {"cross_v", d, d},
        {"cross_out", d, d},       {"ln3_gain", d, 1},        {"ln3_bias", d, 1},
        {"ff_w1", f, d},           {"ff_b1", f, 1},           {"ff_w2", d, f},
        {"ff_b2", d, 1},           {"lnf_gain", d, 1},        {"lnf_bias", d, 1},
        {"fc_w", d, d},            {"fc_b", d, 1},            {"eos", d, 1},
        {"eop", d, 1},
    };
    std::size_t off = 0;
    for (auto& t : s) {
        t.offset = off;
        off += t.size();
    }
    return s;
}

std::span<double> OrderingModel::tensor(Param p) {
    const auto& s = slot(p);
    return std::span<double>(params).subspan(s.offset, s.size());
}

std::span<const double> OrderingModel::tensor(Param p) const {
    const auto& s = slot(p);
    return std::span<const double>(params).subspan(s.offset, s.size());
}

namespace {

double fan_in_bound(Param p, const ModelConfig& c) {
    switch (p) {
        case Param::history_w:
        case Param::history_b:
        case Param::object_w:
        case Param::object_b:
        case Param::positions:
        case Param::start_token:
        case Param::partial_marker:
            return 1.0 / std::sqrt(static_cast<double>(c.input_dim));
        case Param::ff_w2:
        case Param::ff_b2:
            return 1.0 / std::sqrt(static_cast<double>(c.ff_dim));
        default:
            return 1.0 / std::sqrt(static_cast<double>(c.model_dim));
    }
}

bool is_gain(Param p) {
    return p == Param::ln1_gain || p == Param::ln2_gain || p == Param::ln3_gain || p == Param::lnf_gain;
}

bool is_ln_bias(Param p) {
    return p == Param::ln1_bias || p == Param::ln2_bias || p == Param::ln3_bias || p == Param::lnf_bias;
}

}  // namespace

OrderingModel init_model(const ModelConfig& config, std::uint64_t seed) {
    config.check();
    OrderingModel m;
    m.config = config;
    m.seed = seed;
    m.layout = make_layout(config);
    m.params.assign(m.layout.back().offset + m.layout.back().size(), 0.0);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < static_cast<int>(Param::count_); ++i) {
        const auto p = static_cast<Param>(i);
        auto t = m.tensor(p);
        if (is_gain(p)) {
            std::fill(t.begin(), t.end(), 1.0);
        } else if (is_ln_bias(p)) {
            std::fill(t.begin(), t.end(), 0.0);
        } else {
            const double bound = fan_in_bound(p, config);
            for (auto& x : t) {
                const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                x = (2.0 * u - 1.0) * bound;
            }
        }
    }
    return m;
}

void make_uniform_output(OrderingModel& model) {
    for (auto p : {Param::fc_w, Param::fc_b}) {
        auto t = model.tensor(p);
        std::fill(t.begin(), t.end(), 0.0);
    }
}

std::vector<std::vector<double>> project_history(std::span<const std::vector<double>> history,
                                                 const OrderingModel& model, int first_position) {
    const auto& c = model.config;
    if (first_position < 0 || first_position + static_cast<int>(history.size()) > c.max_positions)
        throw ValidationError("history of length " + std::to_string(history.size()) + " exceeds max_positions " +
                              std::to_string(c.max_positions));
    const Weights w{model};
    const auto W = w.mat(Param::history_w);
    const auto b = w.vec(Param::history_b);
    const auto pos = w.mat(Param::positions);
    std::vector<std::vector<double>> out;
    for (std::size_t t = 0; t < history.size(); ++t) {
        if (static_cast<int>(history[t].size()) != c.input_dim)
            throw ValidationError("history vector length " + std::to_string(history[t].size()) + " != input_dim");
        const Vec x = Eigen::Map<const Vec>(history[t].data(), c.input_dim) +
                      pos.row(first_position + static_cast<int>(t)).transpose();
        const Vec y = W * x + b;
        out.emplace_back(y.data(), y.data() + y.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layer pieces

Vec layer_norm(const Vec& x, const CVMap& gain, const CVMap& bias, LnCache& cache) {
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    cache.rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.xhat = (x.array() - mu) * cache.rstd;
    return gain.cwiseProduct(cache.xhat) + bias;
}

Vec layer_norm_backward(const Vec& dy, const CVMap& gain, const LnCache& cache, VMap dgain, VMap dbias) {
    dbias += dy;
    dgain += dy.cwiseProduct(cache.xhat);
    const Vec dxhat = dy.cwiseProduct(gain);
    const double mean_d = dxhat.mean();
    const double mean_dx = dxhat.cwiseProduct(cache.xhat).mean();
    return cache.rstd * (dxhat.array() - mean_d - cache.xhat.array() * mean_dx).matrix();
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
    const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

Vec attend(const Vec& q, const Mat& keys, const Mat& values, int heads, std::vector<Vec>& probs) {
    const auto d = q.size();
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Vec out(d);
    probs.assign(static_cast<std::size_t>(heads), Vec());
    for (int h = 0; h < heads; ++h) {
        const auto off = h * dh;
        Vec logits = keys.middleCols(off, dh) * q.segment(off, dh) * scale;
        const double mx = logits.maxCoeff();
        Vec p = (logits.array() - mx).exp();
        p /= p.sum();
        out.segment(off, dh) = values.middleCols(off, dh).transpose() * p;
        probs[static_cast<std::size_t>(h)] = std::move(p);
    }
    return out;
}

void attend_backward(const Vec& dout, const Vec& q, const Mat& keys, const Mat& values, int heads,
                     const std::vector<Vec>& probs, Vec& dq, Mat& dkeys, Mat& dvalues) {
    const auto d = q.size();
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    dq = Vec::Zero(d);
    for (int h = 0; h < heads; ++h) {
        const auto off = h * dh;
        const Vec& p = probs[static_cast<std::size_t>(h)];
        const Vec dout_h = dout.segment(off, dh);
        dvalues.middleCols(off, dh) += p * dout_h.transpose();
        const Vec dp = values.middleCols(off, dh) * dout_h;
        const Vec dlogits = p.cwiseProduct((dp.array() - p.dot(dp)).matrix()) * scale;
        dkeys.middleCols(off, dh) += dlogits * q.segment(off, dh).transpose();
        dq.segment(off, dh) = keys.middleCols(off, dh).transpose() * dlogits;
    }
}

// ---------------------------------------------------------------------------
// Decoder step

Memory build_memory(const Weights& w, const std::vector<std::vector<double>>& objects) {
    const int din = w.model.config.input_dim;
    if (objects.empty()) throw ValidationError("ordering forward: image has no objects");
    Memory m;
    m.objects.resize(static_cast<Eigen::Index>(objects.size()), din);
    for (std::size_t k = 0; k < objects.size(); ++k) {
        if (static_cast<int>(objects[k].size()) != din)
            throw ValidationError("object feature length " + std::to_string(objects[k].size()) +
                                  " != model input_dim " + std::to_string(din));
        m.objects.row(static_cast<Eigen::Index>(k)) = Eigen::Map<const Vec>(objects[k].data(), din).transpose();
    }
    m.mem = m.objects * w.mat(Param::object_w).transpose();
    m.mem.rowwise() += w.vec(Param::object_b).transpose();
    m.keys = m.mem * w.mat(Param::cross_k).transpose();
    m.values = m.mem * w.mat(Param::cross_v).transpose();
    return m;
}

void memory_backward(const Weights& w, const Memory& m, MemoryGrad& mg, Grads& g) {
    Mat dmem = mg.dmem;
    g.mat(Param::cross_k) += mg.dkeys.transpose() * m.mem;
    dmem += mg.dkeys * w.mat(Param::cross_k);
    g.mat(Param::cross_v) += mg.dvalues.transpose() * m.mem;
    dmem += mg.dvalues * w.mat(Param::cross_v);
    g.mat(Param::object_w) += dmem.transpose() * m.objects;
    g.vec(Param::object_b) += dmem.colwise().sum().transpose();
}

MemoryGrad MemoryGrad::zeros(const Memory& m) {
    MemoryGrad g;
    g.dmem = Mat::Zero(m.mem.rows(), m.mem.cols());
    g.dkeys = Mat::Zero(m.keys.rows(), m.keys.cols());
    g.dvalues = Mat::Zero(m.values.rows(), m.values.cols());
    return g;
}

void StepCache::build_history(const OrderingModel& model, const StepInput& input) {
    const auto& c = model.config;
    const Weights w{model};
    has_partial = !input.partial.empty();
    const int T = 1 + static_cast<int>(input.sentences.size()) + (has_partial ? 1 : 0);
    if (T > c.max_positions)
        throw ValidationError("decoder history of " + std::to_string(T) + " positions exceeds max_positions " +
                              std::to_string(c.max_positions));
    history.resize(T, c.input_dim);
    history.row(0) = w.vec(Param::start_token).transpose();
    for (std::size_t t = 0; t < input.sentences.size(); ++t) {
        if (static_cast<int>(input.sentences[t].size()) != c.input_dim)
            throw ValidationError("history feature length mismatch");
        history.row(static_cast<Eigen::Index>(t) + 1) =
            Eigen::Map<const Vec>(input.sentences[t].data(), c.input_dim).transpose();
    }
    if (has_partial) {
        if (static_cast<int>(input.partial.size()) != c.input_dim)
            throw ValidationError("partial feature length mismatch");
        history.row(T - 1) = (Eigen::Map<const Vec>(input.partial.data(), c.input_dim) +
                              w.vec(Param::partial_marker)).transpose();
    }
    history += w.mat(Param::positions).topRows(T);
}

Vec step_forward(const Weights& w, const Memory& m, StepCache& s) {
    const auto& c = w.model.config;
    const int T = static_cast<int>(s.history.rows());
    const double inv = 1.0 / std::sqrt(static_cast<double>(c.model_dim));

    s.x0 = s.history * w.mat(Param::history_w).transpose();
    s.x0.rowwise() += w.vec(Param::history_b).transpose();

    // Self-attention; with one layer only the newest position reaches the
    // output, and it may attend to every earlier position.
    s.ln1.assign(static_cast<std::size_t>(T), LnCache{});
    s.n1.resize(T, c.model_dim);
    for (int t = 0; t < T; ++t)
        s.n1.row(t) = layer_norm(s.x0.row(t).transpose(), w.vec(Param::ln1_gain), w.vec(Param::ln1_bias),
                                 s.ln1[static_cast<std::size_t>(t)])
                          .transpose();
    s.q1 = w.mat(Param::self_q) * s.n1.row(T - 1).transpose();
    s.k1 = s.n1 * w.mat(Param::self_k).transpose();
    s.v1 = s.n1 * w.mat(Param::self_v).transpose();
    s.o1 = attend(s.q1, s.k1, s.v1, c.heads, s.a1);
    s.x1 = s.x0.row(T - 1).transpose() + w.mat(Param::self_out) * s.o1;

    // Cross-attention over the objects.
    s.n2 = layer_norm(s.x1, w.vec(Param::ln2_gain), w.vec(Param::ln2_bias), s.ln2);
    s.q2 = w.mat(Param::cross_q) * s.n2;
    s.o2 = attend(s.q2, m.keys, m.values, c.heads, s.a2);
    s.x2 = s.x1 + w.mat(Param::cross_out) * s.o2;

    s.n3 = layer_norm(s.x2, w.vec(Param::ln3_gain), w.vec(Param::ln3_bias), s.ln3);
    s.u = w.mat(Param::ff_w1) * s.n3 + w.vec(Param::ff_b1);
    s.hf = s.u.unaryExpr([](double v) { return gelu(v); });
    s.x3 = s.x2 + w.mat(Param::ff_w2) * s.hf + w.vec(Param::ff_b2);

    s.z = layer_norm(s.x3, w.vec(Param::lnf_gain), w.vec(Param::lnf_bias), s.lnf);
    s.qo = w.mat(Param::fc_w) * s.z + w.vec(Param::fc_b);

    const auto K = m.mem.rows();
    Vec scores(K + 2);
    scores.head(K) = m.mem * s.qo * inv;
    scores(K) = w.vec(Param::eos).dot(s.qo) * inv;
    scores(K + 1) = w.vec(Param::eop).dot(s.qo) * inv;
    const double mx = scores.maxCoeff();
    const double lse = mx + std::log((scores.array() - mx).exp().sum());
    s.log_probs = scores.array() - lse;
    return s.log_probs;
}

void step_backward(const Weights& w, const Memory& m, const StepCache& s, const Vec& dscores, Grads& g,
                   MemoryGrad& mg) {
    const auto& c = w.model.config;
    const int T = static_cast<int>(s.history.rows());
    const auto K = m.mem.rows();
    const double inv = 1.0 / std::sqrt(static_cast<double>(c.model_dim));

    Vec dqo = (m.mem.transpose() * dscores.head(K)) * inv;
    dqo += w.vec(Param::eos) * (dscores(K) * inv);
    dqo += w.vec(Param::eop) * (dscores(K + 1) * inv);
    mg.dmem += dscores.head(K) * s.qo.transpose() * inv;
    g.vec(Param::eos) += s.qo * (dscores(K) * inv);
    g.vec(Param::eop) += s.qo * (dscores(K + 1) * inv);

    g.mat(Param::fc_w) += dqo * s.z.transpose();
    g.vec(Param::fc_b) += dqo;
    const Vec dz = w.mat(Param::fc_w).transpose() * dqo;
    Vec dx3 = layer_norm_backward(dz, w.vec(Param::lnf_gain), s.lnf, g.vec(Param::lnf_gain), g.vec(Param::lnf_bias));

    // Feed-forward.
    g.mat(Param::ff_w2) += dx3 * s.hf.transpose();
    g.vec(Param::ff_b2) += dx3;
    const Vec dhf = w.mat(Param::ff_w2).transpose() * dx3;
    const Vec du = dhf.cwiseProduct(s.u.unaryExpr([](double v) { return gelu_grad(v); }));
    g.mat(Param::ff_w1) += du * s.n3.transpose();
    g.vec(Param::ff_b1) += du;
    const Vec dn3 = w.mat(Param::ff_w1).transpose() * du;
    Vec dx2 = dx3 + layer_norm_backward(dn3, w.vec(Param::ln3_gain), s.ln3, g.vec(Param::ln3_gain),
                                        g.vec(Param::ln3_bias));

    // Cross-attention.
    g.mat(Param::cross_out) += dx2 * s.o2.transpose();
    const Vec do2 = w.mat(Param::cross_out).transpose() * dx2;
    Vec dq2;
    attend_backward(do2, s.q2, m.keys, m.values, c.heads, s.a2, dq2, mg.dkeys, mg.dvalues);
    g.mat(Param::cross_q) += dq2 * s.n2.transpose();
    const Vec dn2 = w.mat(Param::cross_q).transpose() * dq2;
    Vec dx1 = dx2 + layer_norm_backward(dn2, w.vec(Param::ln2_gain), s.ln2, g.vec(Param::ln2_gain),
                                        g.vec(Param::ln2_bias));

    // Self-attention.
    Mat dx0 = Mat::Zero(T, c.model_dim);
    dx0.row(T - 1) += dx1.transpose();
    g.mat(Param::self_out) += dx1 * s.o1.transpose();
    const Vec do1 = w.mat(Param::self_out).transpose() * dx1;
    Vec dq1;
    Mat dk1 = Mat::Zero(T, c.model_dim);
    Mat dv1 = Mat::Zero(T, c.model_dim);
    attend_backward(do1, s.q1, s.k1, s.v1, c.heads, s.a1, dq1, dk1, dv1);
    g.mat(Param::self_q) += dq1 * s.n1.row(T - 1);
    g.mat(Param::self_k) += dk1.transpose() * s.n1;
    g.mat(Param::self_v) += dv1.transpose() * s.n1;
    Mat dn1 = dk1 * w.mat(Param::self_k) + dv1 * w.mat(Param::self_v);
    dn1.row(T - 1) += (w.mat(Param::self_q).transpose() * dq1).transpose();
    for (int t = 0; t < T; ++t)
        dx0.row(t) += layer_norm_backward(dn1.row(t).transpose(), w.vec(Param::ln1_gain),
                                          s.ln1[static_cast<std::size_t>(t)], g.vec(Param::ln1_gain),
                                          g.vec(Param::ln1_bias))
                          .transpose();

    // Input projection, positions and learned tokens.
    g.mat(Param::history_w) += dx0.transpose() * s.history;
    g.vec(Param::history_b) += dx0.colwise().sum().transpose();
    const Mat dhist = dx0 * w.mat(Param::history_w);
    g.mat(Param::positions).topRows(T) += dhist;
    g.vec(Param::start_token) += dhist.row(0).transpose();
    if (s.has_partial) g.vec(Param::partial_marker) += dhist.row(T - 1).transpose();
}

std::vector<double> forward(const OrderingModel& model, const StepInput& input) {
    if (input.objects == nullptr || input.objects->empty())
        throw ValidationError("ordering forward: need at least one object");
    const Weights w{model};
    const auto mem = build_memory(w, *input.objects);
    StepCache cache;
    cache.build_history(model, input);
    const Vec lp = step_forward(w, mem, cache);
    return {lp.data(), lp.data() + lp.size()};
}

}  // namespace paracap::ordering
