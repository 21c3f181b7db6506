#pragma once

#include "lsmix/core.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace lsmix {

/// Logits plus the post-ReLU hidden layer (empty for linear models).
struct ForwardPass {
    Matrix logits;
    Matrix hidden;
};

namespace detail {

inline void fill_uniform(double* p, std::size_t n, double bound, Rng& rng) {
    for (std::size_t i = 0; i < n; ++i) p[i] = uniform(rng, -bound, bound);
}

inline void check_cols(const Matrix& x, std::size_t d, const char* who) {
    if (static_cast<std::size_t>(x.cols()) != d)
        throw ConfigError(std::string(who) + ": input has " + std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(d));
}

}  // namespace detail

/// g_w(x) = σ(w·x [+ b]). Parameters: [w, bias?].
class LinearBinaryModel {
public:
    LinearBinaryModel() = default;
    explicit LinearBinaryModel(std::size_t d, bool bias = false)
        : params(Vector::Zero(static_cast<Eigen::Index>(d + (bias ? 1 : 0)))), d_(d), bias_(bias) {}

    static LinearBinaryModel init(std::size_t d, std::uint64_t seed, bool bias = false) {
        LinearBinaryModel m(d, bias);
        Rng rng = make_rng({seed, 0x11aeULL});
        detail::fill_uniform(m.params.data(), static_cast<std::size_t>(m.params.size()), 1.0 / std::sqrt(double(d)), rng);
        return m;
    }

    static LinearBinaryModel from_weights(const Vector& w) {
        LinearBinaryModel m(static_cast<std::size_t>(w.size()));
        m.params = w;
        return m;
    }

    std::size_t input_dim() const { return d_; }
    int outputs() const { return 1; }
    int classes() const { return 2; }
    bool has_bias() const { return bias_; }
    auto weights() const { return params.head(static_cast<Eigen::Index>(d_)); }
    double bias() const { return bias_ ? params(static_cast<Eigen::Index>(d_)) : 0.0; }

    ForwardPass forward(const Matrix& x) const {
        detail::check_cols(x, d_, "linear forward");
        ForwardPass out;
        out.logits = x * weights();
        if (bias_) out.logits.array() += bias();
        return out;
    }

    Vector backward(const Matrix& x, const ForwardPass&, const Matrix& dlogits) const {
        Vector g(params.size());
        g.head(static_cast<Eigen::Index>(d_)) = x.transpose() * dlogits.col(0);
        if (bias_) g(static_cast<Eigen::Index>(d_)) = dlogits.col(0).sum();
        return g;
    }

    Vector params;

private:
    std::size_t d_ = 0;
    bool bias_ = false;
};

/// Multinomial logistic regression: logits = X W^T + b with W k x d. Parameters: [W row-major, b].
class SoftmaxLinearModel {
public:
    SoftmaxLinearModel() = default;
    SoftmaxLinearModel(std::size_t d, int k)
        : params(Vector::Zero(static_cast<Eigen::Index>(d * static_cast<std::size_t>(k) + static_cast<std::size_t>(k)))), d_(d), k_(k) {}

    static SoftmaxLinearModel init(std::size_t d, int k, std::uint64_t seed) {
        SoftmaxLinearModel m(d, k);
        Rng rng = make_rng({seed, 0x50f7ULL});
        detail::fill_uniform(m.params.data(), static_cast<std::size_t>(m.params.size()), 1.0 / std::sqrt(double(d)), rng);
        return m;
    }

    std::size_t input_dim() const { return d_; }
    int outputs() const { return k_; }
    int classes() const { return k_; }

    Eigen::Map<const Matrix> weight() const { return {params.data(), k_, static_cast<Eigen::Index>(d_)}; }
    Eigen::Map<const Vector> bias() const { return {params.data() + d_ * static_cast<std::size_t>(k_), k_}; }

    ForwardPass forward(const Matrix& x) const {
        detail::check_cols(x, d_, "softmax forward");
        ForwardPass out;
        out.logits = x * weight().transpose();
        out.logits.rowwise() += bias().transpose();
        return out;
    }

    Vector backward(const Matrix& x, const ForwardPass&, const Matrix& dlogits) const {
        Vector g(params.size());
        Eigen::Map<Matrix> gw(g.data(), k_, static_cast<Eigen::Index>(d_));
        gw.noalias() = dlogits.transpose() * x;
        g.tail(k_) = dlogits.colwise().sum().transpose();
        return g;
    }

    Vector params;

private:
    std::size_t d_ = 0;
    int k_ = 2;
};

/// Two-layer ReLU network: logits = W2 relu(W1 x + b1) + b2. Parameters: [W1 (h x d), b1, W2 (k x h), b2].
class MlpModel {
public:
    MlpModel() = default;
    MlpModel(std::size_t d, std::size_t h, int k) : d_(d), h_(h), k_(k) {
        require(h >= 1, "MLP hidden width must be at least 1");
        params = Vector::Zero(static_cast<Eigen::Index>(h * d + h + static_cast<std::size_t>(k) * h + static_cast<std::size_t>(k)));
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases of each layer.
    static MlpModel init(std::size_t d, std::size_t h, int k, std::uint64_t seed) {
        MlpModel m(d, h, k);
        Rng rng = make_rng({seed, 0x3170ULL});
        const double b1 = 1.0 / std::sqrt(double(d)), b2 = 1.0 / std::sqrt(double(h));
        detail::fill_uniform(m.params.data(), h * d + h, b1, rng);
        detail::fill_uniform(m.params.data() + h * d + h, static_cast<std::size_t>(k) * h + static_cast<std::size_t>(k), b2, rng);
        return m;
    }

    std::size_t input_dim() const { return d_; }
    std::size_t hidden() const { return h_; }
    int outputs() const { return k_; }
    int classes() const { return k_; }

    Eigen::Map<const Matrix> w1() const { return {params.data(), H(), D()}; }
    Eigen::Map<const Vector> b1() const { return {params.data() + h_ * d_, H()}; }
    Eigen::Map<const Matrix> w2() const { return {params.data() + off_w2(), k_, H()}; }
    Eigen::Map<const Vector> b2() const { return {params.data() + off_w2() + static_cast<std::size_t>(k_) * h_, k_}; }
    Eigen::Map<Matrix> w2_mut() { return {params.data() + off_w2(), k_, H()}; }

    ForwardPass forward(const Matrix& x) const {
        detail::check_cols(x, d_, "mlp forward");
        ForwardPass out;
        out.hidden = x * w1().transpose();
        out.hidden.rowwise() += b1().transpose();
        out.hidden = out.hidden.cwiseMax(0.0);
        out.logits = out.hidden * w2().transpose();
        out.logits.rowwise() += b2().transpose();
        return out;
    }

    Vector backward(const Matrix& x, const ForwardPass& pass, const Matrix& dlogits) const {
        Vector g(params.size());
        Eigen::Map<Matrix> gw1(g.data(), H(), D());
        Eigen::Map<Vector> gb1(g.data() + h_ * d_, H());
        Eigen::Map<Matrix> gw2(g.data() + off_w2(), k_, H());
        Eigen::Map<Vector> gb2(g.data() + off_w2() + static_cast<std::size_t>(k_) * h_, k_);
        gw2.noalias() = dlogits.transpose() * pass.hidden;
        gb2 = dlogits.colwise().sum().transpose();
        Matrix dh = dlogits * w2();
        dh.array() *= (pass.hidden.array() > 0.0).cast<double>();
        gw1.noalias() = dh.transpose() * x;
        gb1 = dh.colwise().sum().transpose();
        return g;
    }

    Vector params;

private:
    Eigen::Index D() const { return static_cast<Eigen::Index>(d_); }
    Eigen::Index H() const { return static_cast<Eigen::Index>(h_); }
    std::size_t off_w2() const { return h_ * d_ + h_; }

    std::size_t d_ = 0;
    std::size_t h_ = 1;
    int k_ = 2;
};

/// Class probabilities n x k. Binary models give columns (P(y=-1), P(y=+1)).
template <class Model>
Matrix predict_proba(const Model& model, const Matrix& logits) {
    if (model.outputs() == 1) {
        Matrix p(logits.rows(), 2);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            p(i, 1) = sigmoid(logits(i, 0));
            p(i, 0) = sigmoid(-logits(i, 0));
        }
        return p;
    }
    Matrix p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

/// Fraction misclassified. Binary: predict +1 when the logit is >= 0; multiclass: first argmax.
inline double classification_error(const Matrix& logits, const std::vector<int>& labels) {
    require(static_cast<std::size_t>(logits.rows()) == labels.size(), "classification_error: size mismatch");
    if (labels.empty()) return 0.0;
    std::size_t wrong = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int pred;
        if (logits.cols() == 1) {
            pred = logits(i, 0) >= 0.0 ? 1 : -1;
        } else {
            Eigen::Index arg;
            logits.row(i).maxCoeff(&arg);
            pred = static_cast<int>(arg);
        }
        wrong += pred != labels[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

// Versioned JSON: shape header plus the flat parameter vector, 17 significant digits.

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline std::string params_json(const Vector& p) {
    if (!p.allFinite()) throw NumericError("refusing to serialize non-finite parameters");
    std::ostringstream out;
    out << '[';
    for (Eigen::Index i = 0; i < p.size(); ++i) out << (i ? "," : "") << fmt17(p(i));
    out << ']';
    return out.str();
}

inline std::string model_header(const char* type, std::size_t d, std::size_t h, int k, bool bias) {
    std::ostringstream out;
    out << "{\"format\":\"lsmix-model\",\"version\":" << kModelFormatVersion << ",\"type\":\"" << type
        << "\",\"input_dim\":" << d << ",\"hidden\":" << h << ",\"classes\":" << k << ",\"bias\":" << (bias ? "true" : "false");
    return out.str();
}

}  // namespace detail

inline std::string to_json(const LinearBinaryModel& m) {
    return detail::model_header("linear_binary", m.input_dim(), 0, 2, m.has_bias()) +
           ",\"params\":" + detail::params_json(m.params) + "}\n";
}
inline std::string to_json(const SoftmaxLinearModel& m) {
    return detail::model_header("softmax_linear", m.input_dim(), 0, m.classes(), true) +
           ",\"params\":" + detail::params_json(m.params) + "}\n";
}
inline std::string to_json(const MlpModel& m) {
    return detail::model_header("mlp", m.input_dim(), m.hidden(), m.classes(), true) +
           ",\"params\":" + detail::params_json(m.params) + "}\n";
}

namespace detail {

inline nlohmann::json parse_model_doc(const std::string& text, const char* type) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "lsmix-model") throw ParseError("model JSON: not an lsmix-model document");
    if (j.value("version", 0) != kModelFormatVersion)
        throw ParseError("model JSON: unsupported version " + j.value("version", nlohmann::json()).dump());
    if (j.value("type", "") != type) throw ParseError("model JSON: expected type " + std::string(type));
    return j;
}

inline void load_params(const nlohmann::json& j, Vector& params) {
    const auto& arr = j.at("params");
    if (!arr.is_array() || arr.size() != static_cast<std::size_t>(params.size()))
        throw ParseError("model JSON: parameter count does not match the shape header");
    for (std::size_t i = 0; i < arr.size(); ++i) params(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
}

}  // namespace detail

template <class Model>
Model model_from_json(const std::string& text);

template <>
inline LinearBinaryModel model_from_json<LinearBinaryModel>(const std::string& text) {
    const auto j = detail::parse_model_doc(text, "linear_binary");
    LinearBinaryModel m(j.at("input_dim").get<std::size_t>(), j.at("bias").get<bool>());
    detail::load_params(j, m.params);
    return m;
}

template <>
inline SoftmaxLinearModel model_from_json<SoftmaxLinearModel>(const std::string& text) {
    const auto j = detail::parse_model_doc(text, "softmax_linear");
    SoftmaxLinearModel m(j.at("input_dim").get<std::size_t>(), j.at("classes").get<int>());
    detail::load_params(j, m.params);
    return m;
}

template <>
inline MlpModel model_from_json<MlpModel>(const std::string& text) {
    const auto j = detail::parse_model_doc(text, "mlp");
    MlpModel m(j.at("input_dim").get<std::size_t>(), j.at("hidden").get<std::size_t>(), j.at("classes").get<int>());
    detail::load_params(j, m.params);
    return m;
}

template <class Model>
void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write file: " + path);
    out << to_json(m);
    if (!out) throw ParseError("write failed: " + path);
}

template <class Model>
Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json<Model>(ss.str());
}

}  // namespace lsmix
