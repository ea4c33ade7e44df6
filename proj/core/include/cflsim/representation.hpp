#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cflsim/errors.hpp"
#include "cflsim/models.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {

enum class Metric { L1, JensenShannon, SquaredEuclidean };

Metric metric_from_string(const std::string& s);
std::string to_string(Metric m);

struct LabelHistogram {
    std::vector<double> probs;
    long count = 0;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string source_model_id;
};

struct GradientSketch {
    std::vector<double> values;
    long model_round = 0;
};

struct Representation {
    std::variant<LabelHistogram, EmbeddingVector, GradientSketch> payload;
    int client_id = -1;
    long round_collected = 0;
};

// Flat view of whichever payload kind is held.
const std::vector<double>& rep_values(const Representation& r);

// Frozen random two-layer feature map: e = W2 tanh(W1 x + b1).
// Weights are drawn once from the seed and never change during a run.
class FeatureExtractor {
public:
    FeatureExtractor(int input_dim, int hidden_dim, int out_dim, std::uint64_t seed);

    int input_dim() const { return input_dim_; }
    int out_dim() const { return out_dim_; }
    const std::string& id() const { return id_; }

    void features(const Sample& s, std::vector<double>& out) const;

private:
    int input_dim_;
    int hidden_dim_;
    int out_dim_;
    std::string id_;
    std::vector<double> w1_;
    std::vector<double> b1_;
    std::vector<double> w2_;
};

// Seeded Johnson-Lindenstrauss projection used to truncate large gradients.
class SketchProjector {
public:
    SketchProjector(std::size_t input_dim, std::size_t out_dim, std::uint64_t seed);

    std::size_t out_dim() const { return out_dim_; }
    std::vector<double> project(std::span<const double> v) const;

private:
    std::size_t input_dim_;
    std::size_t out_dim_;
    std::vector<double> matrix_;
};

LabelHistogram compute_label_histogram(std::span<const Sample> samples, int num_labels);

EmbeddingVector compute_embedding(std::span<const Sample> samples, const FeatureExtractor& extractor);

// Full-batch gradient at shared_model; projected when the model exceeds
// max_full_dim parameters (0 disables projection entirely).
GradientSketch compute_gradient_sketch(std::span<const Sample> samples,
                                       const ModelParams& shared_model,
                                       const TaskModel& model,
                                       const SketchProjector* projector = nullptr);

double vec_distance(std::span<const double> a, std::span<const double> b, Metric metric);

double distance(const Representation& a, const Representation& b, Metric metric);

inline constexpr std::size_t kSketchFullDimLimit = 4096;
inline constexpr std::size_t kSketchProjectedDim = 512;

}  // namespace cflsim
