#include "cflsim/models.hpp"

#include <algorithm>
#include <cmath>

namespace cflsim {

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "softmax") return ModelKind::Softmax;
    if (s == "mlp") return ModelKind::Mlp;
    throw InputError("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
    return k == ModelKind::Softmax ? "softmax" : "mlp";
}

SoftmaxModel::SoftmaxModel(int num_labels, int input_dim)
    : num_labels_(num_labels), input_dim_(input_dim) {
    if (num_labels < 1 || input_dim < 1) throw InputError("softmax model needs labels >= 1, dim >= 1");
}

void SoftmaxModel::logits(std::span<const double> params, const Sample& s,
                          std::vector<double>& out) const {
    const double* w = params.data();
    const double* b = params.data() + static_cast<std::size_t>(num_labels_) * input_dim_;
    out.assign(num_labels_, 0.0);
    for (int l = 0; l < num_labels_; ++l) {
        double z = b[l];
        const double* row = w + static_cast<std::size_t>(l) * input_dim_;
        for (int d = 0; d < input_dim_; ++d) z += row[d] * s.x[d];
        out[l] = z;
    }
}

MlpModel::MlpModel(int num_labels, int input_dim, int hidden)
    : num_labels_(num_labels), input_dim_(input_dim), hidden_(hidden) {
    if (num_labels < 1 || input_dim < 1 || hidden < 1) throw InputError("mlp model needs positive sizes");
}

void MlpModel::logits(std::span<const double> params, const Sample& s,
                      std::vector<double>& out) const {
    const double* w1 = params.data();
    const double* b1 = w1 + static_cast<std::size_t>(hidden_) * input_dim_;
    const double* w2 = b1 + hidden_;
    const double* b2 = w2 + static_cast<std::size_t>(num_labels_) * hidden_;
    std::vector<double> h(hidden_);
    for (int j = 0; j < hidden_; ++j) {
        double z = b1[j];
        const double* row = w1 + static_cast<std::size_t>(j) * input_dim_;
        for (int d = 0; d < input_dim_; ++d) z += row[d] * s.x[d];
        h[j] = std::tanh(z);
    }
    out.assign(num_labels_, 0.0);
    for (int l = 0; l < num_labels_; ++l) {
        double z = b2[l];
        const double* row = w2 + static_cast<std::size_t>(l) * hidden_;
        for (int j = 0; j < hidden_; ++j) z += row[j] * h[j];
        out[l] = z;
    }
}

TaskModel::TaskModel(ModelKind kind, int num_labels, int input_dim, int hidden)
    : kind_(kind),
      num_labels_(num_labels),
      input_dim_(input_dim),
      softmax_(num_labels, input_dim),
      mlp_(num_labels, input_dim, std::max(1, hidden)) {}

std::size_t TaskModel::param_dim() const {
    return kind_ == ModelKind::Softmax ? softmax_.param_dim() : mlp_.param_dim();
}

ModelParams TaskModel::zero_params() const {
    ModelParams p;
    p.values.assign(param_dim(), 0.0);
    return p;
}

void TaskModel::softmax_inplace(std::vector<double>& logits) const {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

void TaskModel::forward(std::span<const double> params, const Sample& s,
                        std::vector<double>& logits, std::vector<double>* hidden_act) const {
    if (kind_ == ModelKind::Softmax) {
        softmax_.logits(params, s, logits);
        return;
    }
    // Mlp path recomputes the hidden layer when the caller needs it for backprop.
    const int h = mlp_.hidden();
    const double* w1 = params.data();
    const double* b1 = w1 + static_cast<std::size_t>(h) * input_dim_;
    std::vector<double> act(h);
    for (int j = 0; j < h; ++j) {
        double z = b1[j];
        const double* row = w1 + static_cast<std::size_t>(j) * input_dim_;
        for (int d = 0; d < input_dim_; ++d) z += row[d] * s.x[d];
        act[j] = std::tanh(z);
    }
    const double* w2 = b1 + h;
    const double* b2 = w2 + static_cast<std::size_t>(num_labels_) * h;
    logits.assign(num_labels_, 0.0);
    for (int l = 0; l < num_labels_; ++l) {
        double z = b2[l];
        const double* row = w2 + static_cast<std::size_t>(l) * h;
        for (int j = 0; j < h; ++j) z += row[j] * act[j];
        logits[l] = z;
    }
    if (hidden_act) *hidden_act = std::move(act);
}

double TaskModel::loss_and_grad(std::span<const double> params,
                                std::span<const Sample> batch,
                                std::vector<double>& grad) const {
    if (batch.empty()) throw InputError("loss_and_grad: empty batch");
    if (params.size() != param_dim()) throw InputError("loss_and_grad: parameter dim mismatch");
    grad.assign(params.size(), 0.0);
    double total_loss = 0.0;
    std::vector<double> probs;
    std::vector<double> hidden;
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    for (const Sample& s : batch) {
        if (s.label < 0 || s.label >= num_labels_) throw InputError("loss_and_grad: label out of range");
        forward(params, s, probs, kind_ == ModelKind::Mlp ? &hidden : nullptr);
        softmax_inplace(probs);
        const double p = std::max(probs[static_cast<std::size_t>(s.label)], 1e-300);
        total_loss += -std::log(p);

        if (kind_ == ModelKind::Softmax) {
            double* gw = grad.data();
            double* gb = gw + static_cast<std::size_t>(num_labels_) * input_dim_;
            for (int l = 0; l < num_labels_; ++l) {
                const double d = (probs[l] - (l == s.label ? 1.0 : 0.0)) * inv_n;
                double* row = gw + static_cast<std::size_t>(l) * input_dim_;
                for (int k = 0; k < input_dim_; ++k) row[k] += d * s.x[k];
                gb[l] += d;
            }
        } else {
            const int h = mlp_.hidden();
            const double* w2 = params.data() + static_cast<std::size_t>(h) * (input_dim_ + 1);
            double* g1 = grad.data();
            double* gb1 = g1 + static_cast<std::size_t>(h) * input_dim_;
            double* g2 = gb1 + h;
            double* gb2 = g2 + static_cast<std::size_t>(num_labels_) * h;
            // dL/dlogit_l = p_l - 1[l == y]
            std::vector<double> dh(h, 0.0);
            for (int l = 0; l < num_labels_; ++l) {
                const double d = (probs[l] - (l == s.label ? 1.0 : 0.0)) * inv_n;
                double* row = g2 + static_cast<std::size_t>(l) * h;
                const double* w2row = w2 + static_cast<std::size_t>(l) * h;
                for (int j = 0; j < h; ++j) {
                    row[j] += d * hidden[j];
                    dh[j] += d * w2row[j];
                }
                gb2[l] += d;
            }
            for (int j = 0; j < h; ++j) {
                const double dz = dh[j] * (1.0 - hidden[j] * hidden[j]);
                double* row = g1 + static_cast<std::size_t>(j) * input_dim_;
                for (int k = 0; k < input_dim_; ++k) row[k] += dz * s.x[k];
                gb1[j] += dz;
            }
        }
    }

    const double loss = total_loss * inv_n;
    if (!std::isfinite(loss)) throw NumericalError("loss is non-finite");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i]))
            throw NumericalError("gradient is non-finite", static_cast<long>(i));
    }
    return loss;
}

double TaskModel::loss(std::span<const double> params, std::span<const Sample> batch) const {
    if (batch.empty()) throw InputError("loss: empty batch");
    double total = 0.0;
    std::vector<double> probs;
    for (const Sample& s : batch) {
        forward(params, s, probs, nullptr);
        softmax_inplace(probs);
        total += -std::log(std::max(probs[static_cast<std::size_t>(s.label)], 1e-300));
    }
    return total / static_cast<double>(batch.size());
}

int TaskModel::predict(std::span<const double> params, const Sample& s) const {
    std::vector<double> z;
    forward(params, s, z, nullptr);
    int best = 0;
    for (int l = 1; l < num_labels_; ++l) {
        if (z[l] > z[best]) best = l;
    }
    return best;
}

double TaskModel::evaluate(std::span<const double> params, std::span<const Sample> test_set) const {
    if (test_set.empty()) throw InputError("evaluate: empty test set");
    std::size_t hits = 0;
    for (const Sample& s : test_set) {
        if (predict(params, s) == s.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

}  // namespace cflsim
