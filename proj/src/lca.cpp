#include "onsd/lca.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "onsd/pnm.hpp"

namespace onsd {
namespace {

void check_geometry(const Patch& image, const Dictionary& d) {
    if (d.count < 1 || d.size < 1 || d.kernels.size() != static_cast<std::size_t>(d.count) * d.size * d.size) {
        throw std::invalid_argument("dictionary is empty or inconsistent");
    }
    if (image.rows < d.size || image.cols < d.size) {
        throw std::invalid_argument("image " + std::to_string(image.rows) + "x" + std::to_string(image.cols) +
                                    " is smaller than kernel side " + std::to_string(d.size));
    }
    if (image.values.size() != static_cast<std::size_t>(image.rows) * image.cols) {
        throw std::invalid_argument("patch pixel count does not match its shape");
    }
}

void check_code(const Patch& image, const Dictionary& d, const Activations& a) {
    check_geometry(image, d);
    if (a.count != d.count || a.rows != image.rows - d.size + 1 || a.cols != image.cols - d.size + 1 ||
        a.code.size() != static_cast<std::size_t>(a.count) * a.map_size()) {
        throw std::invalid_argument("activation shape does not match image and dictionary");
    }
}

double soft_threshold(double u, double lambda) {
    if (u > lambda) return u - lambda;
    if (u < -lambda) return u + lambda;
    return 0.0;
}

// Accumulates the transposed correlation of `code` into `out` (same shape as
// the image the code was computed from).
void reconstruct_into(const Dictionary& d, int rows, int cols, std::span<const double> code, Patch& out) {
    const int s = d.size;
    const std::size_t map = static_cast<std::size_t>(rows) * cols;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (int k = 0; k < d.count; ++k) {
        const auto phi = d.kernel(k);
        const double* ak = code.data() + k * map;
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                const double c = ak[static_cast<std::size_t>(i) * cols + j];
                if (c == 0.0) continue;
                for (int p = 0; p < s; ++p) {
                    double* row = &out.at(i + p, j);
                    const double* krow = phi.data() + static_cast<std::size_t>(p) * s;
                    for (int q = 0; q < s; ++q) row[q] += c * krow[q];
                }
            }
        }
    }
}

void correlate_into(const Patch& image, const Dictionary& d, std::vector<double>& out) {
    const int s = d.size;
    const int rows = image.rows - s + 1;
    const int cols = image.cols - s + 1;
    const std::size_t map = static_cast<std::size_t>(rows) * cols;
    out.assign(map * d.count, 0.0);
    for (int k = 0; k < d.count; ++k) {
        const auto phi = d.kernel(k);
        double* bk = out.data() + k * map;
        for (int i = 0; i < rows; ++i) {
            double* brow = bk + static_cast<std::size_t>(i) * cols;
            for (int p = 0; p < s; ++p) {
                const double* xrow = &image.values[static_cast<std::size_t>(i + p) * image.cols];
                for (int q = 0; q < s; ++q) {
                    const double w = phi[static_cast<std::size_t>(p) * s + q];
                    const double* x = xrow + q;
                    for (int j = 0; j < cols; ++j) brow[j] += w * x[j];
                }
            }
        }
    }
}

double energy_with_reconstruction(const Patch& image, const Patch& recon, std::span<const double> code,
                                  double lambda) {
    double sq = 0.0;
    for (std::size_t i = 0; i < image.values.size(); ++i) {
        const double r = image.values[i] - recon.values[i];
        sq += r * r;
    }
    double l1 = 0.0;
    for (double c : code) l1 += std::abs(c);
    return 0.5 * sq + lambda * l1;
}

// --- binary model files ---------------------------------------------------

constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                                static_cast<char>((v >> 16) & 0xffu), static_cast<char>((v >> 24) & 0xffu)};
    out.write(b.data(), 4);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) throw IoError(path, "truncated model file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f32(std::istream& in, const std::filesystem::path& path) {
    return static_cast<double>(std::bit_cast<float>(get_u32(in, path)));
}

void write_header(std::ostream& out, const char (&magic)[9]) {
    out.write(magic, 8);
    put_u32(out, kFormatVersion);
    put_u32(out, 0);
}

void read_header(std::istream& in, const std::filesystem::path& path, const char (&magic)[9]) {
    std::array<char, 8> m{};
    in.read(m.data(), 8);
    if (in.gcount() != 8 || std::memcmp(m.data(), magic, 8) != 0) {
        throw IoError(path, std::string("bad magic, expected ") + magic);
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kFormatVersion) throw IoError(path, "unsupported format version " + std::to_string(version));
    get_u32(in, path);
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
    if (in.peek() != std::char_traits<char>::eof()) throw IoError(path, "trailing bytes after model data");
}

void write_sidecar(const std::filesystem::path& path, const std::string& json) {
    std::filesystem::path side = path;
    side += ".json";
    std::ofstream out(side, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(side, "cannot open for writing");
    out << json << '\n';
    if (!out) throw IoError(side, "write failed");
}

}  // namespace

void LcaParams::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be > 0");
    if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("step must lie in (0, 1]");
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
}

Patch normalize_patch(const Patch& p) {
    if (p.values.empty()) throw std::invalid_argument("empty patch");
    for (double v : p.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite input pixel");
    }
    const double n = static_cast<double>(p.values.size());
    const double mean = std::accumulate(p.values.begin(), p.values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : p.values) var += (v - mean) * (v - mean);
    var /= n;
    Patch out = p;
    const double scale = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    for (double& v : out.values) v = (v - mean) * scale;
    return out;
}

void Dictionary::normalize() {
    for (int k = 0; k < count; ++k) {
        auto phi = kernel(k);
        double n2 = 0.0;
        for (double v : phi) n2 += v * v;
        if (n2 <= 0.0) continue;
        const double inv = 1.0 / std::sqrt(n2);
        for (double& v : phi) v *= inv;
    }
}

Dictionary Dictionary::random(int count, int size, std::uint64_t seed) {
    if (count < 1 || size < 1) throw std::invalid_argument("dictionary needs K >= 1 and s >= 1");
    Dictionary d;
    d.count = count;
    d.size = size;
    d.kernels.resize(static_cast<std::size_t>(count) * size * size);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : d.kernels) v = gauss(rng);
    d.normalize();
    return d;
}

std::vector<double> correlate_all(const Patch& image, const Dictionary& d) {
    check_geometry(image, d);
    std::vector<double> out;
    correlate_into(image, d, out);
    return out;
}

Patch reconstruct(const Dictionary& d, const Activations& a) {
    Patch out(a.rows + d.size - 1, a.cols + d.size - 1);
    if (a.count != d.count || a.code.size() != static_cast<std::size_t>(a.count) * a.map_size()) {
        throw std::invalid_argument("activation shape does not match dictionary");
    }
    reconstruct_into(d, a.rows, a.cols, a.code, out);
    return out;
}

Activations lca_encode(const Patch& image, const Dictionary& d, const LcaParams& params,
                       std::vector<double>* energy_trace) {
    params.validate();
    check_geometry(image, d);
    const Patch x = normalize_patch(image);

    Activations a;
    a.count = d.count;
    a.rows = x.rows - d.size + 1;
    a.cols = x.cols - d.size + 1;
    a.lambda = params.lambda;
    const std::size_t n = static_cast<std::size_t>(a.count) * a.map_size();
    a.code.assign(n, 0.0);
    a.potentials.assign(n, 0.0);

    std::vector<double> drive;
    correlate_into(x, d, drive);

    Patch recon(x.rows, x.cols);
    std::vector<double> gram_a(n, 0.0);  // Phi^T Phi a; zero while a == 0
    if (energy_trace) energy_trace->clear();

    const double eta = params.step;
    for (int step = 0; step < params.n_steps; ++step) {
        // Lateral inhibition excludes self-interaction: (Phi^T Phi - I) a.
        for (std::size_t i = 0; i < n; ++i) {
            double& u = a.potentials[i];
            u += eta * (drive[i] - u - (gram_a[i] - a.code[i]));
        }
        for (std::size_t i = 0; i < n; ++i) a.code[i] = soft_threshold(a.potentials[i], params.lambda);

        reconstruct_into(d, a.rows, a.cols, a.code, recon);
        if (energy_trace) energy_trace->push_back(energy_with_reconstruction(x, recon, a.code, params.lambda));
        if (step + 1 < params.n_steps) correlate_into(recon, d, gram_a);
    }
    return a;
}

double lca_energy(const Patch& image, const Dictionary& d, const Activations& a, double lambda) {
    check_code(image, d, a);
    const Patch recon = reconstruct(d, a);
    return energy_with_reconstruction(image, recon, a.code, lambda);
}

std::vector<double> kernel_gradient(const Patch& image, const Dictionary& d, const Activations& a) {
    check_code(image, d, a);
    const Patch recon = reconstruct(d, a);
    Patch residual = image;
    for (std::size_t i = 0; i < residual.values.size(); ++i) residual.values[i] -= recon.values[i];

    const int s = d.size;
    std::vector<double> grad(d.kernels.size(), 0.0);
    for (int k = 0; k < d.count; ++k) {
        const auto ak = a.map(k);
        double* gk = grad.data() + static_cast<std::size_t>(k) * s * s;
        for (int i = 0; i < a.rows; ++i) {
            for (int j = 0; j < a.cols; ++j) {
                const double c = ak[static_cast<std::size_t>(i) * a.cols + j];
                if (c == 0.0) continue;
                for (int p = 0; p < s; ++p) {
                    const double* rrow = &residual.values[static_cast<std::size_t>(i + p) * residual.cols + j];
                    for (int q = 0; q < s; ++q) gk[p * s + q] -= c * rrow[q];
                }
            }
        }
    }
    return grad;
}

double mean_reconstruction_error(std::span<const Patch> images, const Dictionary& d, const LcaParams& params) {
    if (images.empty()) throw std::invalid_argument("empty corpus");
    double total = 0.0;
    for (const Patch& img : images) {
        const Patch x = normalize_patch(img);
        const Activations a = lca_encode(x, d, params);
        const Patch recon = reconstruct(d, a);
        double sq = 0.0;
        for (std::size_t i = 0; i < x.values.size(); ++i) {
            const double r = x.values[i] - recon.values[i];
            sq += r * r;
        }
        total += 0.5 * sq;
    }
    return total / static_cast<double>(images.size());
}

DictionaryTrainingResult train_dictionary(std::span<const Patch> images, const DictionaryTrainingParams& params,
                                          const std::function<void(const Dictionary&)>& on_update) {
    if (images.empty()) throw std::invalid_argument("cannot train a dictionary on an empty corpus");
    if (params.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(params.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    params.lca.validate();

    DictionaryTrainingResult result;
    Dictionary& d = result.dictionary;
    d = Dictionary::random(params.count, params.size, params.seed);

    std::vector<Patch> corpus;
    corpus.reserve(images.size());
    for (const Patch& img : images) {
        check_geometry(img, d);
        corpus.push_back(normalize_patch(img));
    }

    if (params.track_error) result.epoch_error.push_back(mean_reconstruction_error(corpus, d, params.lca));

    std::mt19937_64 order_rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(corpus.size());
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), order_rng);
        for (std::size_t idx : order) {
            const Activations a = lca_encode(corpus[idx], d, params.lca);
            const std::vector<double> grad = kernel_gradient(corpus[idx], d, a);
            for (std::size_t i = 0; i < grad.size(); ++i) d.kernels[i] -= params.learning_rate * grad[i];
            d.normalize();
            if (on_update) on_update(d);
        }
        if (params.track_error) result.epoch_error.push_back(mean_reconstruction_error(corpus, d, params.lca));
    }
    round_to_float(d);
    return result;
}

std::vector<double> pool_code(const Activations& a) {
    std::vector<double> out(static_cast<std::size_t>(a.count), 0.0);
    for (int k = 0; k < a.count; ++k) {
        double m = 0.0;
        for (double c : a.map(k)) m = std::max(m, std::abs(c));
        out[k] = m;
    }
    return out;
}

double FrameClassifier::probability(std::span<const double> features) const {
    if (features.size() != weights.size()) {
        throw std::invalid_argument("feature vector has " + std::to_string(features.size()) +
                                    " entries, classifier expects " + std::to_string(weights.size()));
    }
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * features[i];
    z = std::clamp(z, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-z));
}

FrameClassifier train_classifier(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                                 const ClassifierTrainingParams& params) {
    if (features.empty() || features.size() != labels.size()) {
        throw std::invalid_argument("features and labels must be nonempty and of equal length");
    }
    if (params.epochs < 0 || !(params.learning_rate > 0.0)) {
        throw std::invalid_argument("classifier needs epochs >= 0 and learning_rate > 0");
    }
    const std::size_t dim = features.front().size();
    bool has0 = false;
    bool has1 = false;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != dim) throw std::invalid_argument("inconsistent feature dimensions");
        if (labels[i] == 0) has0 = true;
        else if (labels[i] == 1) has1 = true;
        else throw std::invalid_argument("labels must be 0 or 1");
    }
    if (!has0 || !has1) throw std::invalid_argument("single-class corpus: need at least one example per class");

    const double n = static_cast<double>(features.size());
    std::vector<double> mean(dim, 0.0);
    std::vector<double> sd(dim, 0.0);
    for (const auto& f : features)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += f[j] / n;
    for (const auto& f : features)
        for (std::size_t j = 0; j < dim; ++j) sd[j] += (f[j] - mean[j]) * (f[j] - mean[j]) / n;
    for (double& s : sd) s = s > 1e-24 ? std::sqrt(s) : 1.0;

    std::vector<std::vector<double>> z(features.size(), std::vector<double>(dim));
    for (std::size_t i = 0; i < features.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j) z[i][j] = (features[i][j] - mean[j]) / sd[j];

    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> gauss(0.0, 0.01);
    std::vector<double> w(dim);
    for (double& v : w) v = gauss(rng);
    double b = 0.0;

    std::vector<double> gw(dim);
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            double logit = b;
            for (std::size_t j = 0; j < dim; ++j) logit += w[j] * z[i][j];
            const double err = 1.0 / (1.0 + std::exp(-logit)) - labels[i];
            for (std::size_t j = 0; j < dim; ++j) gw[j] += err * z[i][j];
            gb += err;
        }
        for (std::size_t j = 0; j < dim; ++j) w[j] -= params.learning_rate * gw[j] / n;
        b -= params.learning_rate * gb / n;
    }

    FrameClassifier clf;
    clf.weights.resize(dim);
    clf.bias = b;
    for (std::size_t j = 0; j < dim; ++j) {
        clf.weights[j] = w[j] / sd[j];
        clf.bias -= w[j] * mean[j] / sd[j];
    }
    round_to_float(clf);
    return clf;
}

double classify_frame(const Patch& crop, const Dictionary& d, const FrameClassifier& clf, const LcaParams& params) {
    const Activations a = lca_encode(crop, d, params);
    return clf.probability(pool_code(a));
}

void round_to_float(Dictionary& d) {
    for (double& v : d.kernels) v = static_cast<double>(static_cast<float>(v));
}

void round_to_float(FrameClassifier& c) {
    for (double& v : c.weights) v = static_cast<double>(static_cast<float>(v));
    c.bias = static_cast<double>(static_cast<float>(c.bias));
}

void save_dictionary(const std::filesystem::path& path, const Dictionary& d, const std::string& sidecar_json) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    write_header(out, "ONSDDICT");
    put_u32(out, static_cast<std::uint32_t>(d.count));
    put_u32(out, static_cast<std::uint32_t>(d.size));
    for (double v : d.kernels) put_f32(out, v);
    if (!out) throw IoError(path, "write failed");
    write_sidecar(path, sidecar_json);
}

Dictionary load_dictionary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    read_header(in, path, "ONSDDICT");
    Dictionary d;
    d.count = static_cast<int>(get_u32(in, path));
    d.size = static_cast<int>(get_u32(in, path));
    if (d.count < 1 || d.size < 1 || d.count > 4096 || d.size > 256) {
        throw IoError(path, "implausible dictionary shape");
    }
    d.kernels.resize(static_cast<std::size_t>(d.count) * d.size * d.size);
    for (double& v : d.kernels) v = get_f32(in, path);
    expect_eof(in, path);
    return d;
}

void save_classifier(const std::filesystem::path& path, const FrameClassifier& c, const std::string& sidecar_json) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    write_header(out, "ONSDCLSF");
    put_u32(out, static_cast<std::uint32_t>(c.weights.size()));
    put_u32(out, 0);  // no spatial extent
    for (double v : c.weights) put_f32(out, v);
    put_f32(out, c.bias);
    if (!out) throw IoError(path, "write failed");
    write_sidecar(path, sidecar_json);
}

FrameClassifier load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    read_header(in, path, "ONSDCLSF");
    const std::uint32_t k = get_u32(in, path);
    get_u32(in, path);
    if (k < 1 || k > 4096) throw IoError(path, "implausible classifier width");
    FrameClassifier c;
    c.weights.resize(k);
    for (double& v : c.weights) v = get_f32(in, path);
    c.bias = get_f32(in, path);
    expect_eof(in, path);
    return c;
}

}  // namespace onsd
