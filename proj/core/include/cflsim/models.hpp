#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cflsim/errors.hpp"

namespace cflsim {

struct Sample {
    std::vector<double> x;
    int label = 0;
};

// Flat parameter vector with a (round, cluster) version tag.
struct ModelParams {
    std::vector<double> values;
    long round = 0;
    int cluster = -1;

    std::size_t dim() const { return values.size(); }
};

enum class ModelKind { Softmax, Mlp };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

// Multinomial logistic regression. Layout: [W (labels x dim, row major), b (labels)].
class SoftmaxModel {
public:
    SoftmaxModel(int num_labels, int input_dim);

    int num_labels() const { return num_labels_; }
    int input_dim() const { return input_dim_; }
    std::size_t param_dim() const {
        return static_cast<std::size_t>(num_labels_) * (input_dim_ + 1);
    }

    void logits(std::span<const double> params, const Sample& s, std::vector<double>& out) const;

private:
    int num_labels_;
    int input_dim_;
};

// One tanh hidden layer plus a softmax head.
// Layout: [W1 (h x dim), b1 (h), W2 (labels x h), b2 (labels)].
class MlpModel {
public:
    MlpModel(int num_labels, int input_dim, int hidden);

    int num_labels() const { return num_labels_; }
    int input_dim() const { return input_dim_; }
    int hidden() const { return hidden_; }
    std::size_t param_dim() const {
        return static_cast<std::size_t>(hidden_) * (input_dim_ + 1) +
               static_cast<std::size_t>(num_labels_) * (hidden_ + 1);
    }

    void logits(std::span<const double> params, const Sample& s, std::vector<double>& out) const;

private:
    int num_labels_;
    int input_dim_;
    int hidden_;
};

// Either model behind one interface; training code never branches on the kind.
class TaskModel {
public:
    TaskModel(ModelKind kind, int num_labels, int input_dim, int hidden = 32);

    ModelKind kind() const { return kind_; }
    int num_labels() const { return num_labels_; }
    int input_dim() const { return input_dim_; }
    std::size_t param_dim() const;

    ModelParams zero_params() const;

    // Mean cross-entropy over the batch and its exact gradient.
    // Throws NumericalError on non-finite results, DivergedClientError never
    // (that classification belongs to the training loop).
    double loss_and_grad(std::span<const double> params,
                         std::span<const Sample> batch,
                         std::vector<double>& grad) const;

    double loss(std::span<const double> params, std::span<const Sample> batch) const;

    // Top-1 accuracy; argmax ties go to the lowest label index.
    double evaluate(std::span<const double> params, std::span<const Sample> test_set) const;

    int predict(std::span<const double> params, const Sample& s) const;

private:
    void forward(std::span<const double> params, const Sample& s,
                 std::vector<double>& logits, std::vector<double>* hidden_act) const;
    void softmax_inplace(std::vector<double>& logits) const;

    ModelKind kind_;
    int num_labels_;
    int input_dim_;
    SoftmaxModel softmax_;
    MlpModel mlp_;
};

}  // namespace cflsim
