#pragma once

// Convolutional sparse coding with the Locally Competitive Algorithm (LCA),
// dictionary learning, and the pooled logistic frame classifier.
//
// Geometry: an H x W input and K kernels of side s give K code maps of
// (H-s+1) x (W-s+1) coefficients ("valid" correlation). Reconstruction is the
// transposed operation: every coefficient stamps its kernel back into the
// image at its offset.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace onsd {

/// Dense single-channel image used as LCA input.
struct Patch {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;  // row-major

    Patch() = default;
    Patch(int r, int c, double fill = 0.0)
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    [[nodiscard]] double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Shifts to zero mean and scales to unit variance. A constant patch maps to
/// all zeros. Throws std::invalid_argument on non-finite input.
Patch normalize_patch(const Patch& p);

struct Dictionary {
    int count = 0;  // K
    int size = 0;   // s
    std::vector<double> kernels;  // K * s * s, kernel-major then row-major

    [[nodiscard]] std::span<const double> kernel(int k) const {
        return {kernels.data() + static_cast<std::size_t>(k) * size * size,
                static_cast<std::size_t>(size) * size};
    }
    [[nodiscard]] std::span<double> kernel(int k) {
        return {kernels.data() + static_cast<std::size_t>(k) * size * size,
                static_cast<std::size_t>(size) * size};
    }

    /// Scales every kernel to unit L2 norm.
    void normalize();

    /// Seeded Gaussian kernels, each scaled to unit norm.
    static Dictionary random(int count, int size, std::uint64_t seed);
};

struct Activations {
    int count = 0;
    int rows = 0;
    int cols = 0;
    double lambda = 0.0;
    std::vector<double> code;        // K * rows * cols
    std::vector<double> potentials;  // internal state u at the final step

    [[nodiscard]] std::size_t map_size() const { return static_cast<std::size_t>(rows) * cols; }
    [[nodiscard]] std::span<const double> map(int k) const {
        return {code.data() + k * map_size(), map_size()};
    }
};

struct LcaParams {
    double lambda = 0.5;
    double step = 0.05;  // dt / tau
    int n_steps = 100;

    void validate() const;
};

/// Valid cross-correlation of the image with every kernel (the LCA drive).
std::vector<double> correlate_all(const Patch& image, const Dictionary& d);

/// Transposed correlation: superposition of kernels weighted by the code.
Patch reconstruct(const Dictionary& d, const Activations& a);

/// Runs LCA on the normalized image. When `energy_trace` is given it
/// receives the energy of the code after every step.
Activations lca_encode(const Patch& image, const Dictionary& d, const LcaParams& params,
                       std::vector<double>* energy_trace = nullptr);

/// 1/2 ||image - reconstruct(d, a)||^2 + lambda * sum |a|, on the image as
/// given (callers pass the normalized image to match lca_encode).
double lca_energy(const Patch& image, const Dictionary& d, const Activations& a, double lambda);

/// Gradient of 1/2 ||image - reconstruct(d, a)||^2 with respect to every
/// kernel coefficient, laid out like Dictionary::kernels.
std::vector<double> kernel_gradient(const Patch& image, const Dictionary& d, const Activations& a);

struct DictionaryTrainingParams {
    int count = 32;
    int size = 8;
    int epochs = 5;
    double learning_rate = 0.002;
    std::uint64_t seed = 1;
    LcaParams lca;
    bool track_error = false;
};

struct DictionaryTrainingResult {
    Dictionary dictionary;
    /// Mean 1/2 ||x - recon||^2 over the corpus before training (index 0) and
    /// after every epoch. Empty unless track_error was set.
    std::vector<double> epoch_error;
};

/// Mean reconstruction error of a corpus under the given dictionary.
double mean_reconstruction_error(std::span<const Patch> images, const Dictionary& d, const LcaParams& params);

/// Learns kernels by alternating LCA encoding with a reconstruction-gradient
/// step per image; kernels are renormalized after every step. `on_update`
/// observes the dictionary after each renormalization.
DictionaryTrainingResult train_dictionary(std::span<const Patch> images, const DictionaryTrainingParams& params,
                                          const std::function<void(const Dictionary&)>& on_update = {});

/// Max |a| per code map.
std::vector<double> pool_code(const Activations& a);

struct FrameClassifier {
    std::vector<double> weights;
    double bias = 0.0;

    [[nodiscard]] double probability(std::span<const double> features) const;
};

struct ClassifierTrainingParams {
    int epochs = 2000;
    double learning_rate = 0.5;
    std::uint64_t seed = 1;
};

/// Full-batch gradient descent on mean cross-entropy over standardized
/// features; the standardization is folded back into weights and bias.
FrameClassifier train_classifier(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                                 const ClassifierTrainingParams& params);

double classify_frame(const Patch& crop, const Dictionary& d, const FrameClassifier& clf, const LcaParams& params);

/// Round-trips model values through float32 so that in-memory models match
/// their persisted form.
void round_to_float(Dictionary& d);
void round_to_float(FrameClassifier& c);

void save_dictionary(const std::filesystem::path& path, const Dictionary& d, const std::string& sidecar_json);
Dictionary load_dictionary(const std::filesystem::path& path);
void save_classifier(const std::filesystem::path& path, const FrameClassifier& c, const std::string& sidecar_json);
FrameClassifier load_classifier(const std::filesystem::path& path);

}  // namespace onsd
