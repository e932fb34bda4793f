#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gprl/random.hpp"

namespace gprl {

/// Row-major dense matrix; rows are samples.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    [[nodiscard]] std::span<double const> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    [[nodiscard]] std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

enum class Activation : std::uint8_t { Relu, Tanh };

/// Per-feature z-scoring; zero-variance features keep std 1.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> std;

    static Normalization fit(Matrix const& m);
    static Normalization identity(std::size_t n);

    [[nodiscard]] double normalize(std::size_t i, double x) const { return (x - mean[i]) / std[i]; }
    [[nodiscard]] double denormalize(std::size_t i, double z) const { return z * std[i] + mean[i]; }
};

/// Fully connected net with a linear output layer. Parameters live in one flat
/// vector: for each layer, weights [out x in] row-major followed by biases.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<std::size_t> sizes, Activation hidden);

    /// Activations of one forward pass, kept for backpropagation.
    struct Tape {
        std::vector<std::vector<double>> values; // values[0] = input, values[L] = output
    };

    [[nodiscard]] std::vector<std::size_t> const& sizes() const noexcept { return sizes_; }
    [[nodiscard]] Activation activation() const noexcept { return hidden_; }
    [[nodiscard]] std::size_t input_dim() const noexcept { return sizes_.front(); }
    [[nodiscard]] std::size_t output_dim() const noexcept { return sizes_.back(); }
    [[nodiscard]] std::size_t num_layers() const noexcept { return sizes_.size() - 1; }

    [[nodiscard]] std::vector<double> const& params() const noexcept { return params_; }
    [[nodiscard]] std::vector<double>& params() noexcept { return params_; }

    [[nodiscard]] std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    [[nodiscard]] std::size_t bias_offset(std::size_t layer) const
    {
        return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
    }

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases zero.
    void initialize(Rng& rng, bool zero_output_layer = false);

    void forward(std::span<double const> input, std::span<double> output) const;
    void forward(std::span<double const> input, Tape& tape) const;

    /// Accumulates d(loss)/d(params) into `param_grad` (if non-empty) and writes
    /// d(loss)/d(input) into `input_grad` (if non-empty), given d(loss)/d(output).
    void backward(Tape const& tape, std::span<double const> output_grad, std::span<double> param_grad,
                  std::span<double> input_grad) const;

    [[nodiscard]] bool finite() const;

private:
    std::vector<std::size_t> sizes_;
    Activation hidden_ = Activation::Relu;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

/// Mlp wrapped with input/output normalization, predicting in raw units.
struct Regressor {
    Mlp net;
    Normalization input_norm;
    Normalization output_norm;

    [[nodiscard]] std::size_t input_dim() const { return net.input_dim(); }
    [[nodiscard]] std::size_t output_dim() const { return net.output_dim(); }

    void predict(std::span<double const> input, std::span<double> output) const;
    [[nodiscard]] double predict_scalar(std::span<double const> input) const;

    /// Forward pass in raw units that keeps the tape (on normalized values).
    void predict(std::span<double const> input, Mlp::Tape& tape, std::span<double> output) const;
    /// Raw-unit gradient chain around Mlp::backward.
    void backward(Mlp::Tape const& tape, std::span<double const> output_grad, std::span<double> param_grad,
                  std::span<double> input_grad) const;
};

enum class Optimizer : std::uint8_t { VarioEta, Sgd };

struct TrainConfig {
    std::vector<std::size_t> hidden{10, 10, 10};
    Activation activation = Activation::Relu;
    Optimizer optimizer = Optimizer::VarioEta;
    std::size_t epochs = 500;
    std::size_t patience = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double epsilon = 1e-8;
    double variance_decay = 0.99;
    bool zero_output_layer = false;
    std::uint64_t seed = 1;
};

struct Supervised {
    Matrix inputs;
    Matrix targets;

    [[nodiscard]] std::size_t size() const noexcept { return inputs.rows; }
};

struct TrainReport {
    std::string name;
    double train_mse = 0.0;
    double validation_mse = 0.0;
    double generalization_mse = 0.0;
    double generalization_r2 = 0.0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
};

struct TrainResult {
    Regressor regressor;
    TrainReport report;
};

/// Mini-batch training with per-weight step normalization (Vario-Eta: the step of each
/// weight is divided by the running standard deviation of its gradient). Returns the
/// parameters with the lowest validation error; the generalization split is scored
/// exactly once, on that snapshot. Throws DivergenceError on a non-finite loss.
[[nodiscard]] TrainResult train_regressor(Supervised const& train, Supervised const& validation,
                                          Supervised const& generalization, TrainConfig const& config);

/// Mean squared error in raw units, averaged over rows and outputs.
[[nodiscard]] double mean_squared_error(Regressor const& r, Supervised const& data);
/// Coefficient of determination per output column (1 - SSE/SST), averaged.
[[nodiscard]] double r_squared(Regressor const& r, Supervised const& data);

void to_json(nlohmann::json& j, Regressor const& r);
void from_json(nlohmann::json const& j, Regressor& r);

} // namespace gprl
