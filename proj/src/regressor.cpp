#include "gprl/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gprl/error.hpp"

namespace gprl {

Normalization Normalization::fit(Matrix const& m)
{
    Normalization n;
    n.mean.assign(m.cols, 0.0);
    n.std.assign(m.cols, 1.0);
    if (m.rows == 0) {
        return n;
    }
    for (std::size_t j = 0; j < m.cols; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) {
            sum += m(i, j);
        }
        double const mean = sum / static_cast<double>(m.rows);
        double ss = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) {
            ss += (m(i, j) - mean) * (m(i, j) - mean);
        }
        double const sd = std::sqrt(ss / static_cast<double>(m.rows));
        n.mean[j] = mean;
        n.std[j] = sd > 1e-12 ? sd : 1.0;
    }
    return n;
}

Normalization Normalization::identity(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

Mlp::Mlp(std::vector<std::size_t> sizes, Activation hidden) : sizes_(std::move(sizes)), hidden_(hidden)
{
    if (sizes_.size() < 2 || std::find(sizes_.begin(), sizes_.end(), 0U) != sizes_.end()) {
        throw UsageError("Mlp: need at least input and output layers of nonzero width");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(offset);
        offset += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    }
    params_.assign(offset, 0.0);
}

void Mlp::initialize(Rng& rng, bool zero_output_layer)
{
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t l = 0; l < num_layers(); ++l) {
        if (zero_output_layer && l + 1 == num_layers()) {
            break;
        }
        double const bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
        auto const w = weight_offset(l);
        for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) {
            params_[w + k] = uniform(rng, -bound, bound);
        }
    }
}

namespace {

inline double activate(Activation a, double z) { return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

// Derivative expressed through the activation's output value.
inline double activate_grad(Activation a, double y) { return a == Activation::Relu ? (y > 0.0 ? 1.0 : 0.0) : 1.0 - y * y; }

void layer_forward(double const* params, std::size_t w, std::size_t b, std::size_t in_dim, std::size_t out_dim,
                   double const* x, double* y)
{
    for (std::size_t o = 0; o < out_dim; ++o) {
        double acc = params[b + o];
        double const* row = params + w + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
            acc += row[i] * x[i];
        }
        y[o] = acc;
    }
}

} // namespace

void Mlp::forward(std::span<double const> input, std::span<double> output) const
{
    thread_local std::vector<double> a;
    thread_local std::vector<double> b;
    std::size_t const widest = *std::max_element(sizes_.begin(), sizes_.end());
    a.resize(widest);
    b.resize(widest);
    std::copy(input.begin(), input.end(), a.begin());
    for (std::size_t l = 0; l < num_layers(); ++l) {
        layer_forward(params_.data(), weight_offset(l), bias_offset(l), sizes_[l], sizes_[l + 1], a.data(), b.data());
        if (l + 1 < num_layers()) {
            for (std::size_t o = 0; o < sizes_[l + 1]; ++o) {
                b[o] = activate(hidden_, b[o]);
            }
        }
        std::swap(a, b);
    }
    std::copy_n(a.begin(), output.size(), output.begin());
}

void Mlp::forward(std::span<double const> input, Tape& tape) const
{
    tape.values.resize(sizes_.size());
    tape.values[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
        auto& y = tape.values[l + 1];
        y.resize(sizes_[l + 1]);
        layer_forward(params_.data(), weight_offset(l), bias_offset(l), sizes_[l], sizes_[l + 1],
                      tape.values[l].data(), y.data());
        if (l + 1 < num_layers()) {
            for (auto& v : y) {
                v = activate(hidden_, v);
            }
        }
    }
}

void Mlp::backward(Tape const& tape, std::span<double const> output_grad, std::span<double> param_grad,
                   std::span<double> input_grad) const
{
    thread_local std::vector<double> delta;
    thread_local std::vector<double> prev;
    delta.assign(output_grad.begin(), output_grad.end());
    for (std::size_t l = num_layers(); l-- > 0;) {
        std::size_t const in_dim = sizes_[l];
        std::size_t const out_dim = sizes_[l + 1];
        auto const w = weight_offset(l);
        auto const b = bias_offset(l);
        auto const& x = tape.values[l];
        if (!param_grad.empty()) {
            for (std::size_t o = 0; o < out_dim; ++o) {
                double const d = delta[o];
                param_grad[b + o] += d;
                double* row = param_grad.data() + w + o * in_dim;
                for (std::size_t i = 0; i < in_dim; ++i) {
                    row[i] += d * x[i];
                }
            }
        }
        if (l == 0 && input_grad.empty()) {
            break;
        }
        prev.assign(in_dim, 0.0);
        for (std::size_t o = 0; o < out_dim; ++o) {
            double const d = delta[o];
            double const* row = params_.data() + w + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) {
                prev[i] += d * row[i];
            }
        }
        if (l > 0) {
            for (std::size_t i = 0; i < in_dim; ++i) {
                prev[i] *= activate_grad(hidden_, x[i]);
            }
        }
        std::swap(delta, prev);
    }
    if (!input_grad.empty()) {
        std::copy_n(delta.begin(), input_grad.size(), input_grad.begin());
    }
}

bool Mlp::finite() const
{
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

void Regressor::predict(std::span<double const> input, std::span<double> output) const
{
    thread_local std::vector<double> z;
    thread_local std::vector<double> y;
    z.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        z[i] = input_norm.normalize(i, input[i]);
    }
    y.resize(output.size());
    net.forward(z, y);
    for (std::size_t o = 0; o < output.size(); ++o) {
        output[o] = output_norm.denormalize(o, y[o]);
    }
}

double Regressor::predict_scalar(std::span<double const> input) const
{
    double out = 0.0;
    predict(input, std::span<double>(&out, 1));
    return out;
}

void Regressor::predict(std::span<double const> input, Mlp::Tape& tape, std::span<double> output) const
{
    thread_local std::vector<double> z;
    z.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        z[i] = input_norm.normalize(i, input[i]);
    }
    net.forward(z, tape);
    auto const& y = tape.values.back();
    for (std::size_t o = 0; o < output.size(); ++o) {
        output[o] = output_norm.denormalize(o, y[o]);
    }
}

void Regressor::backward(Mlp::Tape const& tape, std::span<double const> output_grad, std::span<double> param_grad,
                         std::span<double> input_grad) const
{
    thread_local std::vector<double> dz;
    dz.resize(output_grad.size());
    for (std::size_t o = 0; o < output_grad.size(); ++o) {
        dz[o] = output_grad[o] * output_norm.std[o];
    }
    net.backward(tape, dz, param_grad, input_grad);
    for (std::size_t i = 0; i < input_grad.size(); ++i) {
        input_grad[i] /= input_norm.std[i];
    }
}

double mean_squared_error(Regressor const& r, Supervised const& data)
{
    if (data.size() == 0) {
        return 0.0;
    }
    std::vector<double> out(r.output_dim());
    double sse = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        r.predict(data.inputs.row(i), out);
        auto const t = data.targets.row(i);
        for (std::size_t o = 0; o < out.size(); ++o) {
            sse += (out[o] - t[o]) * (out[o] - t[o]);
        }
    }
    return sse / static_cast<double>(data.size() * out.size());
}

double r_squared(Regressor const& r, Supervised const& data)
{
    auto const cols = data.targets.cols;
    if (data.size() == 0 || cols == 0) {
        return 0.0;
    }
    std::vector<double> mean(cols, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t o = 0; o < cols; ++o) {
            mean[o] += data.targets(i, o) / static_cast<double>(data.size());
        }
    }
    std::vector<double> sse(cols, 0.0), sst(cols, 0.0), out(cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
        r.predict(data.inputs.row(i), out);
        for (std::size_t o = 0; o < cols; ++o) {
            double const t = data.targets(i, o);
            sse[o] += (out[o] - t) * (out[o] - t);
            sst[o] += (t - mean[o]) * (t - mean[o]);
        }
    }
    double total = 0.0;
    for (std::size_t o = 0; o < cols; ++o) {
        // A constant target is explained perfectly iff it is predicted exactly.
        total += sst[o] > 0.0 ? 1.0 - sse[o] / sst[o] : (sse[o] == 0.0 ? 1.0 : 0.0);
    }
    return total / static_cast<double>(cols);
}

namespace {

// Mean squared error in normalized target units; the training loss.
double normalized_mse(Regressor const& r, Supervised const& data)
{
    if (data.size() == 0) {
        return 0.0;
    }
    std::vector<double> out(r.output_dim());
    double sse = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        r.predict(data.inputs.row(i), out);
        for (std::size_t o = 0; o < out.size(); ++o) {
            double const e = (out[o] - data.targets(i, o)) / r.output_norm.std[o];
            sse += e * e;
        }
    }
    return sse / static_cast<double>(data.size() * out.size());
}

void check_shapes(Supervised const& d, std::size_t in, std::size_t out, char const* what)
{
    if (d.inputs.rows != d.targets.rows || (d.size() > 0 && (d.inputs.cols != in || d.targets.cols != out))) {
        throw UsageError(std::string("train_regressor: inconsistent ") + what + " split");
    }
}

} // namespace

TrainResult train_regressor(Supervised const& train, Supervised const& validation, Supervised const& generalization,
                            TrainConfig const& config)
{
    if (train.size() == 0) {
        throw UsageError("train_regressor: empty training split");
    }
    std::size_t const in_dim = train.inputs.cols;
    std::size_t const out_dim = train.targets.cols;
    check_shapes(train, in_dim, out_dim, "training");
    check_shapes(validation, in_dim, out_dim, "validation");
    check_shapes(generalization, in_dim, out_dim, "generalization");
    for (double v : train.inputs.data) {
        if (!std::isfinite(v)) throw UsageError("train_regressor: non-finite input");
    }
    for (double v : train.targets.data) {
        if (!std::isfinite(v)) throw UsageError("train_regressor: non-finite target");
    }

    Rng rng = make_rng(config.seed, 0x7261696EULL);
    std::vector<std::size_t> sizes{in_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(out_dim);

    Regressor model{Mlp(sizes, config.activation), Normalization::fit(train.inputs), Normalization::fit(train.targets)};
    model.net.initialize(rng, config.zero_output_layer);

    // Normalized copies so the inner loop works on z-scores.
    Matrix zin(train.size(), in_dim);
    Matrix zout(train.size(), out_dim);
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (std::size_t j = 0; j < in_dim; ++j) zin(i, j) = model.input_norm.normalize(j, train.inputs(i, j));
        for (std::size_t j = 0; j < out_dim; ++j) zout(i, j) = model.output_norm.normalize(j, train.targets(i, j));
    }

    auto const& val_set = validation.size() > 0 ? validation : train;
    auto& params = model.net.params();
    std::size_t const n_params = params.size();
    std::vector<double> grad(n_params), mean(n_params, 0.0), var(n_params, 0.0);
    bool moments_seeded = false;

    Regressor best = model;
    double best_val = normalized_mse(model, val_set);
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0U);
    Mlp::Tape tape;
    std::vector<double> dout(out_dim);
    std::size_t const batch = std::max<std::size_t>(1, config.batch_size);
    double const beta = config.variance_decay;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        // Fisher-Yates with our portable index draw.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[uniform_index(rng, i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::size_t const stop = std::min(order.size(), start + batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < stop; ++k) {
                auto const i = order[k];
                model.net.forward(zin.row(i), tape);
                auto const& y = tape.values.back();
                for (std::size_t o = 0; o < out_dim; ++o) {
                    double const e = y[o] - zout(i, o);
                    epoch_loss += e * e;
                    dout[o] = 2.0 * e / static_cast<double>((stop - start) * out_dim);
                }
                model.net.backward(tape, dout, grad, {});
            }
            if (config.optimizer == Optimizer::Sgd) {
                for (std::size_t p = 0; p < n_params; ++p) {
                    params[p] -= config.learning_rate * grad[p];
                }
                continue;
            }
            if (!moments_seeded) {
                for (std::size_t p = 0; p < n_params; ++p) {
                    mean[p] = grad[p];
                    var[p] = grad[p] * grad[p];
                }
                moments_seeded = true;
            } else {
                for (std::size_t p = 0; p < n_params; ++p) {
                    mean[p] = beta * mean[p] + (1.0 - beta) * grad[p];
                    double const dev = grad[p] - mean[p];
                    var[p] = beta * var[p] + (1.0 - beta) * dev * dev;
                }
            }
            for (std::size_t p = 0; p < n_params; ++p) {
                params[p] -= config.learning_rate * grad[p] / (config.epsilon + std::sqrt(var[p]));
            }
        }
        epochs_run = epoch;
        if (!std::isfinite(epoch_loss) || !model.net.finite()) {
            throw DivergenceError("train_regressor: non-finite loss in epoch " + std::to_string(epoch));
        }
        double const val = normalized_mse(model, val_set);
        if (val < best_val) {
            best_val = val;
            best = model;
            best_epoch = epoch;
        } else if (config.patience > 0 && epoch - best_epoch >= config.patience) {
            break;
        }
    }

    TrainResult result{std::move(best), {}};
    result.report.train_mse = mean_squared_error(result.regressor, train);
    result.report.validation_mse = mean_squared_error(result.regressor, val_set);
    result.report.generalization_mse = mean_squared_error(result.regressor, generalization);
    result.report.generalization_r2 = r_squared(result.regressor, generalization);
    result.report.epochs_run = epochs_run;
    result.report.best_epoch = best_epoch;
    return result;
}

void to_json(nlohmann::json& j, Regressor const& r)
{
    auto const& net = r.net;
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto const w = net.weight_offset(l);
        auto const b = net.bias_offset(l);
        auto const n_w = net.sizes()[l] * net.sizes()[l + 1];
        weights.push_back(std::vector<double>(net.params().begin() + static_cast<std::ptrdiff_t>(w),
                                              net.params().begin() + static_cast<std::ptrdiff_t>(w + n_w)));
        biases.push_back(std::vector<double>(net.params().begin() + static_cast<std::ptrdiff_t>(b),
                                             net.params().begin() + static_cast<std::ptrdiff_t>(b + net.sizes()[l + 1])));
    }
    j = nlohmann::json{
        {"sizes", net.sizes()},
        {"activation", net.activation() == Activation::Relu ? "relu" : "tanh"},
        {"weights", std::move(weights)},
        {"biases", std::move(biases)},
        {"norm",
         {{"in_mean", r.input_norm.mean},
          {"in_std", r.input_norm.std},
          {"out_mean", r.output_norm.mean},
          {"out_std", r.output_norm.std}}},
    };
}

void from_json(nlohmann::json const& j, Regressor& r)
{
    auto const sizes = j.at("sizes").get<std::vector<std::size_t>>();
    auto const act = j.at("activation").get<std::string>();
    if (act != "relu" && act != "tanh") {
        throw DataError("regressor: unknown activation '" + act + "'");
    }
    Mlp net(sizes, act == "relu" ? Activation::Relu : Activation::Tanh);
    auto const& weights = j.at("weights");
    auto const& biases = j.at("biases");
    if (weights.size() != net.num_layers() || biases.size() != net.num_layers()) {
        throw DataError("regressor: layer count does not match sizes");
    }
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto const w = weights[l].get<std::vector<double>>();
        auto const b = biases[l].get<std::vector<double>>();
        if (w.size() != sizes[l] * sizes[l + 1] || b.size() != sizes[l + 1]) {
            throw DataError("regressor: layer " + std::to_string(l) + " has the wrong shape");
        }
        std::copy(w.begin(), w.end(), net.params().begin() + static_cast<std::ptrdiff_t>(net.weight_offset(l)));
        std::copy(b.begin(), b.end(), net.params().begin() + static_cast<std::ptrdiff_t>(net.bias_offset(l)));
    }
    auto const& norm = j.at("norm");
    r.net = std::move(net);
    r.input_norm = {norm.at("in_mean").get<std::vector<double>>(), norm.at("in_std").get<std::vector<double>>()};
    r.output_norm = {norm.at("out_mean").get<std::vector<double>>(), norm.at("out_std").get<std::vector<double>>()};
    if (r.input_norm.mean.size() != sizes.front() || r.input_norm.std.size() != sizes.front()
        || r.output_norm.mean.size() != sizes.back() || r.output_norm.std.size() != sizes.back()) {
        throw DataError("regressor: normalization does not match layer sizes");
    }
}

} // namespace gprl
