#include "dsf/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "dsf/errors.hpp"
#include "dsf/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "the DSF1 container codec assumes a little-endian host");

namespace dsf {

Tensor activate(Activation act, const Tensor& x) {
    switch (act) {
        case Activation::linear: return x;
        case Activation::relu: return relu(x);
        case Activation::tanh: return tanh(x);
        case Activation::sigmoid: return sigmoid(x);
    }
    return x;
}

Array init_params(const Shape& shape, std::uint64_t seed) {
    Array out(shape);
    if (shape.size() != 2) return out;
    const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    Rng rng(seed);
    for (double& w : out.data) w = (2.0 * uniform01(rng) - 1.0) * bound;
    return out;
}

DenseLayer DenseLayer::make(const std::string& name, std::size_t in, std::size_t out,
                            Activation act, std::uint64_t seed) {
    DenseLayer layer;
    layer.weights = Parameter(name + ".weights", init_params(Shape{in, out}, seed));
    layer.bias = Parameter(name + ".bias", Array(Shape{out}));
    layer.activation = act;
    return layer;
}

Tensor DenseLayer::forward(Graph& g, const Tensor& x) {
    if (x.shape().size() != 2 || x.shape()[1] != in_dim()) {
        throw DimensionError("dense layer " + weights.name + ": input " + shape_str(x.shape()) +
                             " does not match weights " + shape_str(weights.value.shape));
    }
    return activate(activation, add_bias(matmul(x, g.param(weights)), g.param(bias)));
}

Tensor mlp_forward(Graph& g, std::span<DenseLayer> layers, const Tensor& x) {
    Tensor h = x;
    for (DenseLayer& layer : layers) h = layer.forward(g, h);
    return h;
}

Mlp::Mlp(const std::string& name, std::size_t in_dim, const std::vector<std::size_t>& widths,
         Activation hidden_act, Activation out_act, std::uint64_t seed) {
    std::size_t in = in_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const bool last = i + 1 == widths.size();
        layers_.push_back(DenseLayer::make(name + "." + std::to_string(i), in, widths[i],
                                           last ? out_act : hidden_act,
                                           derive_seed(seed, {i})));
        in = widths[i];
    }
}

Tensor Mlp::forward(Graph& g, const Tensor& x) { return mlp_forward(g, layers_, x); }

std::vector<Parameter*> Mlp::parameters() {
    std::vector<Parameter*> out;
    for (DenseLayer& layer : layers_) {
        out.push_back(&layer.weights);
        out.push_back(&layer.bias);
    }
    return out;
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

void Adam::step(std::span<Parameter* const> params) {
    if (m_.empty()) {
        for (Parameter* p : params) {
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw ContractError("Adam::step: parameter list changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        auto& m = m_[k];
        auto& v = v_[k];
        if (m.size() != p.value.size()) {
            throw ContractError("Adam::step: moment shape mismatch for " + p.name);
        }
        if (p.grad.size() != p.value.size()) p.zero_grad();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad.data[i] + config_.weight_decay * p.value.data[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p.value.data[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

// ---- container codec ------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'S', 'F', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n) {
        need(n, "tensor name");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw ParseError(std::string("truncated container while reading ") + what, pos_);
        }
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(std::span<const NamedArray> tensors) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, kContainerVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedArray& t : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.array.shape.size()));
        for (std::size_t d : t.array.shape) put<std::uint64_t>(out, d);
        for (double v : t.array.data) put<double>(out, v);
    }
    return out;
}

std::vector<NamedArray> decode_container(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("bad container magic", 0);
    r.get<std::uint32_t>("magic");
    const std::size_t version_at = r.pos();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kContainerVersion) {
        throw ParseError("unsupported container version " + std::to_string(version), version_at);
    }
    const auto count = r.get<std::uint32_t>("tensor count");
    std::vector<NamedArray> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray t;
        const auto name_len = r.get<std::uint32_t>("name length");
        t.name = r.get_string(name_len);
        const auto rank = r.get<std::uint32_t>("rank");
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dims")));
        }
        const std::size_t n = numel(shape);
        r.need(n * sizeof(double), "tensor values");
        std::vector<double> values(n);
        for (double& v : values) v = r.get<double>("tensor values");
        t.array = Array(std::move(shape), std::move(values));
        out.push_back(std::move(t));
    }
    if (!r.done()) throw ParseError("trailing bytes after last tensor", r.pos());
    return out;
}

void save_container(const std::filesystem::path& path, std::span<const NamedArray> tensors) {
    const auto bytes = encode_container(tensors);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

std::vector<NamedArray> load_container(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    return decode_container(bytes);
}

std::vector<NamedArray> snapshot(std::span<Parameter* const> params) {
    std::vector<NamedArray> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back({p->name, p->value});
    return out;
}

void restore(std::span<Parameter* const> params, std::span<const NamedArray> tensors) {
    std::unordered_map<std::string, const NamedArray*> by_name;
    for (const NamedArray& t : tensors) by_name[t.name] = &t;
    if (by_name.size() != params.size()) {
        throw ConfigError("checkpoint holds " + std::to_string(by_name.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw ConfigError("checkpoint lacks tensor " + p->name);
        if (it->second->array.shape != p->value.shape) {
            throw ConfigError("checkpoint tensor " + p->name + " has shape " +
                              shape_str(it->second->array.shape) + ", model expects " +
                              shape_str(p->value.shape));
        }
        p->value = it->second->array;
        p->zero_grad();
    }
}

}  // namespace dsf
