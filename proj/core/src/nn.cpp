#include "adlab/nn.hpp"

#include <cmath>

namespace adlab {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::kIdentity: return "identity";
        case Activation::kRelu: return "relu";
        case Activation::kSigmoid: return "sigmoid";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::kIdentity;
    if (name == "relu") return Activation::kRelu;
    if (name == "sigmoid") return Activation::kSigmoid;
    throw ConfigError("unknown activation: " + name);
}

void MlpSpec::validate() const {
    if (input_dim == 0) throw ConfigError("MlpSpec: input_dim must be >= 1");
    if (layers.empty()) throw ConfigError("MlpSpec: at least one layer required");
    for (const auto& l : layers)
        if (l.width == 0) throw ConfigError("MlpSpec: zero-width layer");
}

Param& ParamSet::add(const std::string& name, size_t rows, size_t cols) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw ConfigError("duplicate parameter: " + name);
    Param& p = it->second;
    p.value = Matrix(rows, cols);
    p.grad = Matrix(rows, cols);
    p.accum = Matrix(rows, cols);
    return p;
}

Param& ParamSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

const Param& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

void ParamSet::zero_grads() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
}

void ParamSet::scale_grads(double factor) {
    for (auto& [name, p] : params_) {
        double* g = p.grad.data();
        for (size_t i = 0; i < p.grad.size(); ++i) g[i] *= factor;
    }
}

size_t ParamSet::value_count() const {
    size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
}

void init_uniform_fan_in(Matrix& m, size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t r = 0; r < m.rows(); ++r)
        for (size_t c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

Mlp::Mlp(std::string prefix, MlpSpec spec)
    : prefix_(std::move(prefix)), spec_(std::move(spec)) {
    spec_.validate();
}

void Mlp::init(ParamSet& ps, Rng& rng) {
    w_.clear();
    b_.clear();
    size_t in = spec_.input_dim;
    for (size_t l = 0; l < spec_.layers.size(); ++l) {
        size_t out = spec_.layers[l].width;
        Param& w = ps.add(prefix_ + ".w" + std::to_string(l), out, in);
        Param& b = ps.add(prefix_ + ".b" + std::to_string(l), out, 1);
        init_uniform_fan_in(w.value, in, rng);
        init_uniform_fan_in(b.value, in, rng);
        w_.push_back(&w);
        b_.push_back(&b);
        in = out;
    }
}

void Mlp::bind(ParamSet& ps) {
    w_.clear();
    b_.clear();
    size_t in = spec_.input_dim;
    for (size_t l = 0; l < spec_.layers.size(); ++l) {
        size_t out = spec_.layers[l].width;
        Param& w = ps.at(prefix_ + ".w" + std::to_string(l));
        Param& b = ps.at(prefix_ + ".b" + std::to_string(l));
        if (w.value.rows() != out || w.value.cols() != in || b.value.rows() != out)
            throw ConfigError("bind shape mismatch for " + prefix_);
        w_.push_back(&w);
        b_.push_back(&b);
        in = out;
    }
}

namespace {

inline void apply_activation(Activation act, std::span<const double> z,
                             std::span<double> a) {
    switch (act) {
        case Activation::kIdentity:
            for (size_t i = 0; i < z.size(); ++i) a[i] = z[i];
            break;
        case Activation::kRelu:
            for (size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
            break;
        case Activation::kSigmoid:
            for (size_t i = 0; i < z.size(); ++i) a[i] = sigmoid(z[i]);
            break;
    }
}

// dz = da * act'(z), using z and a from the tape
inline void activation_backward(Activation act, std::span<const double> z,
                                std::span<const double> a,
                                std::span<double> d) {
    switch (act) {
        case Activation::kIdentity:
            break;
        case Activation::kRelu:
            for (size_t i = 0; i < z.size(); ++i)
                if (z[i] <= 0.0) d[i] = 0.0;
            break;
        case Activation::kSigmoid:
            for (size_t i = 0; i < z.size(); ++i) d[i] *= a[i] * (1.0 - a[i]);
            break;
    }
}

}  // namespace

void Mlp::forward(std::span<const double> input, MlpTape& tape) const {
    if (input.size() != spec_.input_dim)
        throw ConfigError(prefix_ + ": input length " +
                          std::to_string(input.size()) + " != input_dim " +
                          std::to_string(spec_.input_dim));
    const size_t n_layers = spec_.layers.size();
    tape.input.assign(input.begin(), input.end());
    tape.pre.resize(n_layers);
    tape.post.resize(n_layers);
    std::span<const double> x = tape.input;
    for (size_t l = 0; l < n_layers; ++l) {
        const size_t out = spec_.layers[l].width;
        tape.pre[l].resize(out);
        tape.post[l].resize(out);
        std::span<const double> bias(b_[l]->value.data(), out);
        matvec(w_[l]->value, x, bias, tape.pre[l]);
        apply_activation(spec_.layers[l].act, tape.pre[l], tape.post[l]);
        x = tape.post[l];
    }
    tape.valid = true;
}

double Mlp::forward_scalar(std::span<const double> input, MlpTape& tape) const {
    forward(input, tape);
    return tape.post.back()[0];
}

void Mlp::backward(const MlpTape& tape, std::span<const double> upstream,
                   std::span<double> dinput) const {
    if (!tape.valid) throw UsageError(prefix_ + ": backward without forward tape");
    const size_t n_layers = spec_.layers.size();
    if (tape.pre.size() != n_layers || upstream.size() != spec_.output_dim())
        throw UsageError(prefix_ + ": tape does not match this net");

    std::vector<double> d(upstream.begin(), upstream.end());
    std::vector<double> d_prev;
    for (size_t l = n_layers; l-- > 0;) {
        activation_backward(spec_.layers[l].act, tape.pre[l], tape.post[l], d);
        std::span<const double> layer_input =
            l == 0 ? std::span<const double>(tape.input)
                   : std::span<const double>(tape.post[l - 1]);
        outer_accum(d, layer_input, w_[l]->grad);
        for (size_t i = 0; i < d.size(); ++i) b_[l]->grad(i, 0) += d[i];
        if (l == 0) {
            if (!dinput.empty()) matvec_transposed_accum(w_[l]->value, d, dinput);
        } else {
            d_prev.assign(layer_input.size(), 0.0);
            matvec_transposed_accum(w_[l]->value, d, d_prev);
            d.swap(d_prev);
        }
    }
}

const Matrix& Mlp::infer_batch_tail(size_t first_layer,
                                    const Matrix& activations, Matrix& ping,
                                    Matrix& pong) const {
    const size_t n = activations.cols();
    const size_t n_layers = spec_.layers.size();
    if (first_layer >= n_layers)
        throw UsageError(prefix_ + ": infer_batch_tail layer out of range");
    constexpr size_t kTile = 32;
    const Matrix* cur = &activations;
    Matrix* bufs[2] = {&ping, &pong};
    for (size_t l = first_layer; l < n_layers; ++l) {
        const Matrix& w = w_[l]->value;
        const Matrix& bias = b_[l]->value;
        const size_t out = w.rows(), in = w.cols();
        if (cur->rows() != in)
            throw UsageError(prefix_ + ": batch activation shape mismatch");
        Matrix* next = bufs[(l - first_layer) % 2];
        if (next->rows() != out || next->cols() != n) *next = Matrix(out, n);
        const double* __restrict__ src_base = cur->data();
        double* __restrict__ dst_base = next->data();
        const Activation act = spec_.layers[l].act;
        double acc[kTile];
        for (size_t t = 0; t < n; t += kTile) {
            const size_t len = std::min(kTile, n - t);
            for (size_t i = 0; i < out; ++i) {
                const double b0 = bias(i, 0);
                for (size_t k = 0; k < len; ++k) acc[k] = b0;
                const double* __restrict__ wrow = w.data() + i * in;
                for (size_t j = 0; j < in; ++j) {
                    const double wij = wrow[j];
                    const double* __restrict__ src = src_base + j * n + t;
                    for (size_t k = 0; k < len; ++k) acc[k] += wij * src[k];
                }
                double* __restrict__ dst = dst_base + i * n + t;
                switch (act) {
                    case Activation::kIdentity:
                        for (size_t k = 0; k < len; ++k) dst[k] = acc[k];
                        break;
                    case Activation::kRelu:
                        for (size_t k = 0; k < len; ++k)
                            dst[k] = acc[k] > 0.0 ? acc[k] : 0.0;
                        break;
                    case Activation::kSigmoid:
                        for (size_t k = 0; k < len; ++k) dst[k] = sigmoid(acc[k]);
                        break;
                }
            }
        }
        cur = next;
    }
    return *cur;
}

void Mlp::infer(std::span<const double> input, std::vector<double>& scratch,
                std::span<double> out) const {
    // two ping-pong buffers packed into `scratch`
    const size_t n_layers = spec_.layers.size();
    size_t max_width = spec_.input_dim;
    for (const auto& l : spec_.layers) max_width = std::max(max_width, l.width);
    scratch.resize(2 * max_width);
    std::span<double> buf_a(scratch.data(), max_width);
    std::span<double> buf_b(scratch.data() + max_width, max_width);
    std::copy(input.begin(), input.end(), buf_a.begin());
    std::span<const double> x(buf_a.data(), input.size());
    for (size_t l = 0; l < n_layers; ++l) {
        const size_t width = spec_.layers[l].width;
        std::span<double> y = (l % 2 == 0) ? buf_b.subspan(0, width)
                                           : buf_a.subspan(0, width);
        std::span<const double> bias(b_[l]->value.data(), width);
        matvec(w_[l]->value, x, bias, y);
        apply_activation(spec_.layers[l].act, y, y);
        x = y;
    }
    std::copy(x.begin(), x.end(), out.begin());
}

EmbeddingSet::EmbeddingSet(std::string prefix, std::vector<size_t> vocab_sizes,
                           size_t dim)
    : prefix_(std::move(prefix)), vocab_sizes_(std::move(vocab_sizes)), dim_(dim) {
    if (dim_ == 0) throw ConfigError("EmbeddingSet: dim must be >= 1");
    for (size_t v : vocab_sizes_)
        if (v == 0) throw ConfigError("EmbeddingSet: zero vocab size");
}

void EmbeddingSet::init(ParamSet& ps, Rng& rng) {
    tables_.clear();
    for (size_t s = 0; s < vocab_sizes_.size(); ++s) {
        Param& t = ps.add(prefix_ + ".emb" + std::to_string(s), vocab_sizes_[s], dim_);
        init_uniform_fan_in(t.value, dim_, rng);
        tables_.push_back(&t);
    }
}

void EmbeddingSet::bind(ParamSet& ps) {
    tables_.clear();
    for (size_t s = 0; s < vocab_sizes_.size(); ++s) {
        Param& t = ps.at(prefix_ + ".emb" + std::to_string(s));
        if (t.value.rows() != vocab_sizes_[s] || t.value.cols() != dim_)
            throw ConfigError("bind shape mismatch for " + prefix_);
        tables_.push_back(&t);
    }
}

void EmbeddingSet::forward(std::span<const int32_t> ids,
                           std::span<double> out) const {
    if (ids.size() != vocab_sizes_.size())
        throw ConfigError(prefix_ + ": expected " +
                          std::to_string(vocab_sizes_.size()) + " ids, got " +
                          std::to_string(ids.size()));
    for (size_t s = 0; s < ids.size(); ++s) {
        if (ids[s] < 0 || static_cast<size_t>(ids[s]) >= vocab_sizes_[s])
            throw DataError(prefix_ + ": feature id " + std::to_string(ids[s]) +
                            " out of range for slot " + std::to_string(s));
        auto row = tables_[s]->value.row(static_cast<size_t>(ids[s]));
        std::copy(row.begin(), row.end(), out.begin() + s * dim_);
    }
}

std::span<const double> EmbeddingSet::row(size_t slot, int32_t id) const {
    if (id < 0 || static_cast<size_t>(id) >= vocab_sizes_[slot])
        throw DataError(prefix_ + ": feature id " + std::to_string(id) +
                        " out of range for slot " + std::to_string(slot));
    return tables_[slot]->value.row(static_cast<size_t>(id));
}

void EmbeddingSet::backward(std::span<const int32_t> ids,
                            std::span<const double> grad) const {
    for (size_t s = 0; s < ids.size(); ++s) {
        auto row = tables_[s]->grad.row(static_cast<size_t>(ids[s]));
        for (size_t d = 0; d < dim_; ++d) row[d] += grad[s * dim_ + d];
    }
}

void optimizer_step(ParamSet& params, const OptimizerConfig& config) {
    if (config.lr <= 0.0) throw ConfigError("optimizer: lr must be > 0");
    for (auto& [name, p] : params) {
        double* v = p.value.data();
        const double* g = p.grad.data();
        double* acc = p.accum.data();
        const size_t n = p.value.size();
        for (size_t i = 0; i < n; ++i) {
            if (std::isnan(g[i]))
                throw NumericError("NaN gradient in parameter " + name);
        }
        switch (config.algo) {
            case OptimizerAlgo::kSgd:
                for (size_t i = 0; i < n; ++i) v[i] -= config.lr * g[i];
                break;
            case OptimizerAlgo::kAdagrad:
                for (size_t i = 0; i < n; ++i) {
                    acc[i] += g[i] * g[i];
                    v[i] -= config.lr * g[i] / (std::sqrt(acc[i]) + config.adagrad_eps);
                }
                break;
        }
    }
}

}  // namespace adlab
