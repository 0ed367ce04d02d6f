#include "minsnr/denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace minsnr {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMatrix>;
using MutWeights = Eigen::Map<RowMatrix>;

struct LayerShape {
    Index in = 0;
    Index out = 0;
    Index offset = 0;  // start of weights; bias follows at offset + in * out
};

std::vector<LayerShape> layer_shapes(std::span<const int> dims, int embed_dim) {
    std::vector<LayerShape> shapes;
    Index offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        LayerShape s;
        s.in = dims[l] + (l == 0 ? embed_dim : 0);
        s.out = dims[l + 1];
        s.offset = offset;
        offset += s.in * s.out + s.out;
        shapes.push_back(s);
    }
    return shapes;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Activations kept for the backward pass.
struct Tape {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each hidden layer
};

Matrix network_input(const Matrix& x_t, std::span<const Step> t, int T, int embed_dim) {
    Matrix in(x_t.rows(), x_t.cols() + embed_dim);
    in.leftCols(x_t.cols()) = x_t;
    for (Index i = 0; i < x_t.rows(); ++i) {
        in.row(i).tail(embed_dim) = time_embedding(t[i], T, embed_dim).transpose();
    }
    return in;
}

void check_batch(const DenoiserParams& p, const Matrix& x_t, std::span<const Step> t, int T) {
    if (x_t.cols() != p.data_dim)
        throw std::invalid_argument("batch has " + std::to_string(x_t.cols()) +
                                    " columns, network expects " + std::to_string(p.data_dim));
    if (static_cast<Index>(t.size()) != x_t.rows())
        throw std::invalid_argument("step count does not match batch size");
    if (!x_t.allFinite()) throw std::invalid_argument("non-finite network input");
    for (Step s : t) {
        if (s < 1 || s > T) throw std::out_of_range("step " + std::to_string(s) + " outside [1, T]");
    }
}

Matrix run_network(const DenoiserParams& p, const Matrix& x_t, std::span<const Step> t, int T,
                   Tape* tape) {
    const auto shapes = layer_shapes(p.layer_dims, p.embed_dim);
    Matrix h = network_input(x_t, t, T, p.embed_dim);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const auto& s = shapes[l];
        ConstWeights W(p.theta.data() + s.offset, s.out, s.in);
        Eigen::Map<const Vector> b(p.theta.data() + s.offset + s.in * s.out, s.out);
        Matrix z = h * W.transpose();
        z.rowwise() += b.transpose();
        if (tape) tape->inputs.push_back(std::move(h));
        if (l + 1 == shapes.size()) return z;
        // SiLU keeps the network smooth for finite-difference checks.
        h = z.unaryExpr([](double v) { return v * sigmoid(v); });
        if (tape) tape->pre.push_back(std::move(z));
    }
    return h;
}

}  // namespace

std::size_t parameter_count(std::span<const int> layer_dims, int embed_dim) {
    std::size_t n = 0;
    for (const auto& s : layer_shapes(layer_dims, embed_dim))
        n += static_cast<std::size_t>(s.in * s.out + s.out);
    return n;
}

std::pair<Index, Index> DenoiserParams::final_layer_block() const {
    const auto shapes = layer_shapes(layer_dims, embed_dim);
    const auto& s = shapes.back();
    return {s.offset, s.in * s.out + s.out};
}

void check(const DenoiserParams& p) {
    if (p.layer_dims.size() < 2) throw std::invalid_argument("need at least one layer");
    for (int d : p.layer_dims) {
        if (d < 1) throw std::invalid_argument("layer widths must be >= 1");
    }
    if (p.layer_dims.front() != p.data_dim || p.layer_dims.back() != p.data_dim)
        throw std::invalid_argument("first and last layer widths must equal data_dim");
    if (p.embed_dim < 2 || p.embed_dim % 2 != 0)
        throw std::invalid_argument("embedding width must be even and >= 2");
    if (static_cast<std::size_t>(p.theta.size()) != parameter_count(p.layer_dims, p.embed_dim))
        throw std::invalid_argument("theta length does not match the layer layout");
    if (!p.theta.allFinite()) throw std::invalid_argument("theta holds non-finite values");
}

DenoiserParams init_params(std::vector<int> layer_dims, int embed_dim, int data_dim,
                           std::uint64_t seed) {
    DenoiserParams p;
    p.layer_dims = std::move(layer_dims);
    p.embed_dim = embed_dim;
    p.data_dim = data_dim;
    p.seed = seed;
    if (p.layer_dims.size() < 2 || data_dim < 1) throw std::invalid_argument("invalid layer dims");
    for (int d : p.layer_dims) {
        if (d < 1) throw std::invalid_argument("layer widths must be >= 1");
    }
    p.theta = Vector::Zero(static_cast<Index>(parameter_count(p.layer_dims, embed_dim)));

    std::mt19937_64 rng(derive_seed(seed, "init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto shapes = layer_shapes(p.layer_dims, embed_dim);
    for (std::size_t l = 0; l + 1 < shapes.size(); ++l) {
        const auto& s = shapes[l];
        const double scale = 1.0 / std::sqrt(static_cast<double>(s.in));
        for (Index i = 0; i < s.in * s.out; ++i) p.theta[s.offset + i] = scale * normal(rng);
    }
    check(p);
    return p;
}

Vector time_embedding(Step t, int T, int embed_dim) {
    if (embed_dim < 2 || embed_dim % 2 != 0)
        throw std::invalid_argument("embedding width must be even and >= 2");
    if (t < 1 || t > T) throw std::out_of_range("step outside [1, T]");
    const int half = embed_dim / 2;
    const double u = static_cast<double>(t) / T;
    Vector e(embed_dim);
    for (int k = 0; k < half; ++k) {
        const double freq = half > 1 ? std::exp(std::log(256.0) * k / (half - 1)) : 1.0;
        e[k] = std::sin(u * freq);
        e[half + k] = std::cos(u * freq);
    }
    return e;
}

Prediction forward(const DenoiserParams& params, const Matrix& x_t, std::span<const Step> t, int T,
                   PredictionTarget target) {
    check_batch(params, x_t, t, T);
    return {run_network(params, x_t, t, T, nullptr), target};
}

LossAndGrad regression_loss_and_grad(const DenoiserParams& p, const Matrix& x_t,
                                     std::span<const Step> t, int T, const Matrix& y_true,
                                     const Vector& sample_weights) {
    check_batch(p, x_t, t, T);
    const Index n = x_t.rows();
    if (y_true.rows() != n || y_true.cols() != p.data_dim || sample_weights.size() != n)
        throw std::invalid_argument("regression target shape mismatch");

    Tape tape;
    const Matrix y = run_network(p, x_t, t, T, &tape);
    const Matrix resid = y - y_true;
    const Vector sq = resid.rowwise().squaredNorm();
    LossAndGrad out;
    out.loss = sample_weights.dot(sq) / static_cast<double>(n);
    if (!std::isfinite(out.loss)) throw std::runtime_error("non-finite loss");

    out.grad = Vector::Zero(p.theta.size());
    const auto shapes = layer_shapes(p.layer_dims, p.embed_dim);
    // dL/dy_i = (2 / n) w_i (y_i - y_true_i)
    Matrix delta = resid.array().colwise() * (sample_weights.array() * (2.0 / static_cast<double>(n)));
    for (std::size_t l = shapes.size(); l-- > 0;) {
        const auto& s = shapes[l];
        MutWeights dW(out.grad.data() + s.offset, s.out, s.in);
        dW.noalias() = delta.transpose() * tape.inputs[l];
        out.grad.segment(s.offset + s.in * s.out, s.out) = delta.colwise().sum().transpose();
        if (l == 0) break;
        ConstWeights W(p.theta.data() + s.offset, s.out, s.in);
        Matrix d_act = delta * W;
        const Matrix& z = tape.pre[l - 1];
        delta = d_act.array() * z.unaryExpr([](double v) {
            const double sg = sigmoid(v);
            return sg * (1.0 + v * (1.0 - sg));
        }).array();
    }
    return out;
}

Matrix sample_forward(const Matrix& x0, std::span<const Step> t, const Matrix& noise,
                      const Schedule& schedule) {
    if (x0.rows() != noise.rows() || x0.cols() != noise.cols() ||
        static_cast<Index>(t.size()) != x0.rows())
        throw std::invalid_argument("sample_forward shape mismatch");
    Matrix x_t(x0.rows(), x0.cols());
    for (Index i = 0; i < x0.rows(); ++i) {
        x_t.row(i) = schedule.alpha(t[i]) * x0.row(i) + schedule.sigma(t[i]) * noise.row(i);
    }
    return x_t;
}

Matrix regression_target(const Matrix& x0, const Matrix& noise, std::span<const Step> t,
                         const Schedule& schedule, PredictionTarget target) {
    switch (target) {
        case PredictionTarget::X0: return x0;
        case PredictionTarget::Epsilon: return noise;
        case PredictionTarget::Velocity: {
            Matrix v(x0.rows(), x0.cols());
            for (Index i = 0; i < x0.rows(); ++i) {
                v.row(i) = schedule.alpha(t[i]) * noise.row(i) - schedule.sigma(t[i]) * x0.row(i);
            }
            return v;
        }
    }
    return x0;
}

LossAndGrad loss_and_grad(const DenoiserParams& params, const Matrix& x0, std::span<const Step> t,
                          const Matrix& noise, const Schedule& schedule,
                          const WeightStrategy& strategy, PredictionTarget target) {
    const Matrix x_t = sample_forward(x0, t, noise, schedule);
    Vector w(x0.rows());
    for (Index i = 0; i < x0.rows(); ++i) w[i] = loss_weight(strategy, target, schedule, t[i]);
    auto out = regression_loss_and_grad(params, x_t, t, schedule.T,
                                        regression_target(x0, noise, t, schedule, target), w);
    if (!out.grad.allFinite()) throw std::runtime_error("non-finite gradient");
    return out;
}

Prediction convert_prediction(const Prediction& pred, PredictionTarget to, const Matrix& x_t,
                              std::span<const Step> t, const Schedule& schedule) {
    if (pred.values.rows() != x_t.rows() || pred.values.cols() != x_t.cols() ||
        static_cast<Index>(t.size()) != x_t.rows())
        throw std::invalid_argument("convert_prediction shape mismatch");
    if (pred.target == to) return pred;

    Prediction out{Matrix(pred.values.rows(), pred.values.cols()), to};
    for (Index i = 0; i < x_t.rows(); ++i) {
        const double a = schedule.alpha(t[i]);
        const double s = schedule.sigma(t[i]);
        Eigen::RowVectorXd x0;
        switch (pred.target) {
            case PredictionTarget::X0: x0 = pred.values.row(i); break;
            case PredictionTarget::Epsilon:
                if (a == 0.0) throw std::domain_error("epsilon -> x0 conversion divides by alpha = 0");
                x0 = (x_t.row(i) - s * pred.values.row(i)) / a;
                break;
            case PredictionTarget::Velocity: x0 = a * x_t.row(i) - s * pred.values.row(i); break;
        }
        switch (to) {
            case PredictionTarget::X0: out.values.row(i) = x0; break;
            case PredictionTarget::Epsilon:
                if (s == 0.0) throw std::domain_error("x0 -> epsilon conversion divides by sigma = 0");
                out.values.row(i) = (x_t.row(i) - a * x0) / s;
                break;
            case PredictionTarget::Velocity: {
                if (s == 0.0) throw std::domain_error("x0 -> velocity conversion divides by sigma = 0");
                const Eigen::RowVectorXd eps = (x_t.row(i) - a * x0) / s;
                out.values.row(i) = a * eps - s * x0;
                break;
            }
        }
    }
    return out;
}

void write_checkpoint(const std::string& path, const DenoiserParams& params, long iteration) {
    check(params);
    const nlohmann::json header = {{"layer_dims", params.layer_dims},
                                   {"embed_dim", params.embed_dim},
                                   {"data_dim", params.data_dim},
                                   {"seed", params.seed},
                                   {"iteration", iteration},
                                   {"theta_size", params.theta.size()}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << header.dump() << '\n';
    for (Index i = 0; i < params.theta.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(params.theta[i]);
        unsigned char bytes[8];
        for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    Checkpoint ck;
    ck.params.layer_dims = header.at("layer_dims").get<std::vector<int>>();
    ck.params.embed_dim = header.at("embed_dim").get<int>();
    ck.params.data_dim = header.at("data_dim").get<int>();
    ck.params.seed = header.at("seed").get<std::uint64_t>();
    ck.iteration = header.at("iteration").get<long>();
    const auto n = header.at("theta_size").get<Index>();
    ck.params.theta.resize(n);
    for (Index i = 0; i < n; ++i) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8))
            throw std::runtime_error("checkpoint " + path + " is truncated");
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
        ck.params.theta[i] = std::bit_cast<double>(bits);
    }
    check(ck.params);
    return ck;
}

}  // namespace minsnr
