#pragma once

#include <vector>

#include <Eigen/Dense>

#include "paracap/ordering.hpp"

namespace paracap::ordering {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;
using CVMap = Eigen::Map<const Vec>;
using VMap = Eigen::Map<Vec>;

inline constexpr double kLayerNormEps = 1e-5;

struct Weights {
    const OrderingModel& model;

    CMap mat(Param p) const {
        const auto& s = model.slot(p);
        return CMap(model.params.data() + s.offset, s.rows, s.cols);
    }
    CVMap vec(Param p) const {
        const auto& s = model.slot(p);
        return CVMap(model.params.data() + s.offset, static_cast<Eigen::Index>(s.size()));
    }
};

// Gradient buffer with the model's layout.
struct Grads {
    const OrderingModel& model;
    std::vector<double>& data;

    MMap mat(Param p) {
        const auto& s = model.slot(p);
        return MMap(data.data() + s.offset, s.rows, s.cols);
    }
    VMap vec(Param p) {
        const auto& s = model.slot(p);
        return VMap(data.data() + s.offset, static_cast<Eigen::Index>(s.size()));
    }
};

struct LnCache {
    Vec xhat;
    double rstd = 0.0;
};

// Per-image object side: projected objects and their cross-attention keys/values.
struct Memory {
    Mat objects;
    Mat mem;
    Mat keys;
    Mat values;
};

struct MemoryGrad {
    Mat dmem;
    Mat dkeys;
    Mat dvalues;
    static MemoryGrad zeros(const Memory& m);
};

struct StepCache {
    Mat history;  // decoder input rows: token + position (+ partial marker)
    bool has_partial = false;
    Mat x0;
    std::vector<LnCache> ln1;
    Mat n1;
    Vec q1;
    Mat k1, v1;
    std::vector<Vec> a1;
    Vec o1, x1;
    LnCache ln2;
    Vec n2, q2;
    std::vector<Vec> a2;
    Vec o2, x2;
    LnCache ln3;
    Vec n3, u, hf, x3;
    LnCache lnf;
    Vec z, qo;
    Vec log_probs;

    void build_history(const OrderingModel& model, const StepInput& input);
};

Vec layer_norm(const Vec& x, const CVMap& gain, const CVMap& bias, LnCache& cache);
Vec layer_norm_backward(const Vec& dy, const CVMap& gain, const LnCache& cache, VMap dgain, VMap dbias);
double gelu(double u);
double gelu_grad(double u);
Vec attend(const Vec& q, const Mat& keys, const Mat& values, int heads, std::vector<Vec>& probs);
void attend_backward(const Vec& dout, const Vec& q, const Mat& keys, const Mat& values, int heads,
                     const std::vector<Vec>& probs, Vec& dq, Mat& dkeys, Mat& dvalues);

Memory build_memory(const Weights& w, const std::vector<std::vector<double>>& objects);
void memory_backward(const Weights& w, const Memory& m, MemoryGrad& mg, Grads& g);
Vec step_forward(const Weights& w, const Memory& m, StepCache& s);
void step_backward(const Weights& w, const Memory& m, const StepCache& s, const Vec& dscores, Grads& g,
                   MemoryGrad& mg);

}  // namespace paracap::ordering
