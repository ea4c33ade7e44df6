#include "cflsim/representation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cflsim {

Metric metric_from_string(const std::string& s) {
    if (s == "l1") return Metric::L1;
    if (s == "js" || s == "jensen_shannon") return Metric::JensenShannon;
    if (s == "sqeuclidean" || s == "squared_euclidean") return Metric::SquaredEuclidean;
    throw InputError("unknown metric: " + s);
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::L1: return "l1";
        case Metric::JensenShannon: return "js";
        default: return "sqeuclidean";
    }
}

const std::vector<double>& rep_values(const Representation& r) {
    return std::visit([](const auto& p) -> const std::vector<double>& {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, LabelHistogram>) {
            return p.probs;
        } else {
            return p.values;
        }
    }, r.payload);
}

FeatureExtractor::FeatureExtractor(int input_dim, int hidden_dim, int out_dim,
                                   std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), out_dim_(out_dim) {
    if (input_dim < 1 || hidden_dim < 1 || out_dim < 1)
        throw InputError("feature extractor needs positive dims");
    char buf[64];
    std::snprintf(buf, sizeof buf, "rand2/%d-%d-%d/%llu", input_dim, hidden_dim, out_dim,
                  static_cast<unsigned long long>(seed));
    id_ = buf;
    auto s = rng::make_stream(seed, "feature_extractor");
    const double scale1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double scale2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    w1_.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
    for (auto& v : w1_) v = s.next_normal() * scale1;
    b1_.resize(hidden_dim);
    for (auto& v : b1_) v = s.next_normal() * 0.1;
    w2_.resize(static_cast<std::size_t>(out_dim) * hidden_dim);
    for (auto& v : w2_) v = s.next_normal() * scale2;
}

void FeatureExtractor::features(const Sample& s, std::vector<double>& out) const {
    if (static_cast<int>(s.x.size()) != input_dim_)
        throw InputError("feature extractor: sample dim mismatch");
    std::vector<double> h(hidden_dim_);
    for (int j = 0; j < hidden_dim_; ++j) {
        double z = b1_[j];
        const double* row = w1_.data() + static_cast<std::size_t>(j) * input_dim_;
        for (int d = 0; d < input_dim_; ++d) z += row[d] * s.x[d];
        h[j] = std::tanh(z);
    }
    out.assign(out_dim_, 0.0);
    for (int o = 0; o < out_dim_; ++o) {
        double z = 0.0;
        const double* row = w2_.data() + static_cast<std::size_t>(o) * hidden_dim_;
        for (int j = 0; j < hidden_dim_; ++j) z += row[j] * h[j];
        out[o] = z;
    }
}

SketchProjector::SketchProjector(std::size_t input_dim, std::size_t out_dim,
                                 std::uint64_t seed)
    : input_dim_(input_dim), out_dim_(out_dim) {
    if (input_dim == 0 || out_dim == 0) throw InputError("projector needs positive dims");
    auto s = rng::make_stream(seed, "sketch_projector");
    const double scale = 1.0 / std::sqrt(static_cast<double>(out_dim));
    matrix_.resize(input_dim * out_dim);
    for (auto& v : matrix_) v = s.next_normal() * scale;
}

std::vector<double> SketchProjector::project(std::span<const double> v) const {
    if (v.size() != input_dim_) throw InputError("projector: input dim mismatch");
    std::vector<double> out(out_dim_, 0.0);
    for (std::size_t i = 0; i < input_dim_; ++i) {
        const double x = v[i];
        if (x == 0.0) continue;
        const double* row = matrix_.data() + i * out_dim_;
        for (std::size_t o = 0; o < out_dim_; ++o) out[o] += x * row[o];
    }
    return out;
}

LabelHistogram compute_label_histogram(std::span<const Sample> samples, int num_labels) {
    if (num_labels < 1) throw InputError("compute_label_histogram: num_labels must be >= 1");
    LabelHistogram h;
    h.probs.assign(num_labels, 0.0);
    h.count = static_cast<long>(samples.size());
    if (samples.empty()) return h;
    for (const Sample& s : samples) {
        if (s.label < 0 || s.label >= num_labels)
            throw InputError("compute_label_histogram: label out of range");
        h.probs[static_cast<std::size_t>(s.label)] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& p : h.probs) p *= inv;
    return h;
}

EmbeddingVector compute_embedding(std::span<const Sample> samples,
                                  const FeatureExtractor& extractor) {
    if (samples.empty()) throw InputError("compute_embedding: empty sample set");
    EmbeddingVector e;
    e.source_model_id = extractor.id();
    e.values.assign(extractor.out_dim(), 0.0);
    std::vector<double> f;
    for (const Sample& s : samples) {
        extractor.features(s, f);
        for (int d = 0; d < extractor.out_dim(); ++d) e.values[d] += f[d];
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& v : e.values) v *= inv;
    return e;
}

GradientSketch compute_gradient_sketch(std::span<const Sample> samples,
                                       const ModelParams& shared_model,
                                       const TaskModel& model,
                                       const SketchProjector* projector) {
    if (samples.empty()) throw InputError("compute_gradient_sketch: empty sample set");
    if (shared_model.dim() != model.param_dim())
        throw InputError("compute_gradient_sketch: model dim mismatch");
    std::vector<double> grad;
    model.loss_and_grad(shared_model.values, samples, grad);
    GradientSketch g;
    g.model_round = shared_model.round;
    if (projector) {
        g.values = projector->project(grad);
    } else {
        g.values = std::move(grad);
    }
    return g;
}

namespace {

void require_probability_vector(std::span<const double> p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < -1e-12) throw InputError("jensen-shannon needs non-negative entries");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw InputError("jensen-shannon needs probability vectors summing to 1");
}

double js_distance(std::span<const double> p, std::span<const double> q) {
    require_probability_vector(p);
    require_probability_vector(q);
    // Base-2 divergence so the distance lands in [0, 1]; 0 log 0 contributes 0.
    double div = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = std::max(p[i], 0.0);
        const double b = std::max(q[i], 0.0);
        const double m = 0.5 * (a + b);
        // One commutative sum per coordinate keeps the distance exactly
        // symmetric in its arguments.
        const double ta = a > 0.0 ? 0.5 * a * std::log2(a / m) : 0.0;
        const double tb = b > 0.0 ? 0.5 * b * std::log2(b / m) : 0.0;
        div += ta + tb;
    }
    div = std::clamp(div, 0.0, 1.0);
    return std::sqrt(div);
}

}  // namespace

double vec_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
    if (a.size() != b.size()) throw InputError("distance: dimension mismatch");
    if (a.empty()) throw InputError("distance: empty vectors");
    switch (metric) {
        case Metric::L1: {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
            return s;
        }
        case Metric::JensenShannon:
            return js_distance(a, b);
        case Metric::SquaredEuclidean:
        default: {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = a[i] - b[i];
                s += d * d;
            }
            return s;
        }
    }
}

double distance(const Representation& a, const Representation& b, Metric metric) {
    if (a.payload.index() != b.payload.index())
        throw InputError("distance: representation kind mismatch");
    return vec_distance(rep_values(a), rep_values(b), metric);
}

}  // namespace cflsim
