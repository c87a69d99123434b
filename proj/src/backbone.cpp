#include "restolab/backbone.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "restolab/degradation.hpp"
#include "restolab/metrics.hpp"
#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

namespace restolab {

namespace {

constexpr char kWeightsMagic[4] = {'R', 'L', 'B', 'B'};

// 2-D sin/cos positional table, [gh*gw, d]; d must be divisible by 4.
Tensor sincos_pos_embed(int gh, int gw, int d) {
    Tensor pe({gh * gw, d});
    const int quarter = d / 4;
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            const int row = gy * gw + gx;
            for (int i = 0; i < quarter; ++i) {
                const double freq = std::pow(10000.0, -double(i) / quarter);
                pe.at(row, i) = std::sin(gy * freq);
                pe.at(row, quarter + i) = std::cos(gy * freq);
                pe.at(row, 2 * quarter + i) = std::sin(gx * freq);
                pe.at(row, 3 * quarter + i) = std::cos(gx * freq);
            }
        }
    return pe;
}

std::array<int, 3> derive_taps(const std::array<int, 3>& requested, int depth) {
    std::array<int, 3> t = requested;
    if (t[0] < 0 && t[1] < 0 && t[2] < 0) {
        t = {std::max(0, depth / 4), std::max(1, depth / 2), depth - 1};
    }
    if (!(t[0] >= 0 && t[0] < t[1] && t[1] < t[2] && t[2] < depth))
        throw std::invalid_argument(
            "backbone: tap indices must be strictly increasing and within depth");
    return t;
}

} // namespace

Backbone::Backbone(const BackboneConfig& config) : config_(config) {
    if (config_.kind == BackboneKind::ToyVit) {
        depth_ = config_.toy_depth;
        width_ = config_.toy_width;
        if (width_ % 4 != 0)
            throw std::invalid_argument("backbone: toy width must be divisible by 4");
        const int d = width_, p = config_.patch_size;
        Rng rng(config_.toy_seed, "toy_vit");
        const double std_pe = 1.0 / std::sqrt(3.0 * p * p);
        const double std_d = 1.0 / std::sqrt(double(d));
        auto add = [&](const std::string& name, std::vector<int> shape, double stddev) {
            params_[name] = make_const(rng.normal_tensor(std::move(shape), 0.0, stddev));
        };
        add("patch_embed.w", {d, 3 * p * p}, std_pe);
        add("patch_embed.b", {d}, 0.0);
        for (int l = 0; l < depth_; ++l) {
            const std::string pre = "block" + std::to_string(l) + ".";
            params_[pre + "ln1.g"] = make_const(Tensor({d}, 1.0));
            add(pre + "ln1.b", {d}, 0.0);
            add(pre + "wq", {d, d}, std_d);
            add(pre + "bq", {d}, 0.0);
            add(pre + "wk", {d, d}, std_d);
            add(pre + "bk", {d}, 0.0);
            add(pre + "wv", {d, d}, std_d);
            add(pre + "bv", {d}, 0.0);
            add(pre + "wo", {d, d}, std_d);
            add(pre + "bo", {d}, 0.0);
            params_[pre + "ln2.g"] = make_const(Tensor({d}, 1.0));
            add(pre + "ln2.b", {d}, 0.0);
            add(pre + "fc1.w", {2 * d, d}, std_d);
            add(pre + "fc1.b", {2 * d}, 0.0);
            add(pre + "fc2.w", {d, 2 * d}, 1.0 / std::sqrt(2.0 * d));
            add(pre + "fc2.b", {d}, 0.0);
        }
    } else {
        if (config_.weights_path.empty())
            throw std::invalid_argument("backbone: pretrained kind needs a weights path");
        std::ifstream in(config_.weights_path, std::ios::binary);
        if (!in) throw std::runtime_error("backbone: cannot open " + config_.weights_path);
        char magic[4];
        in.read(magic, 4);
        if (std::memcmp(magic, kWeightsMagic, 4) != 0)
            throw std::runtime_error("backbone: bad weights file magic");
        uint32_t version = 0, n_params = 0;
        int32_t patch = 0, width = 0, depth = 0;
        in.read(reinterpret_cast<char*>(&version), 4);
        in.read(reinterpret_cast<char*>(&patch), 4);
        in.read(reinterpret_cast<char*>(&width), 4);
        in.read(reinterpret_cast<char*>(&depth), 4);
        in.read(reinterpret_cast<char*>(&n_params), 4);
        if (version != 1) throw std::runtime_error("backbone: unsupported weights version");
        config_.patch_size = patch;
        width_ = width;
        depth_ = depth;
        for (uint32_t i = 0; i < n_params; ++i) {
            uint32_t name_len = 0, rank = 0;
            in.read(reinterpret_cast<char*>(&name_len), 4);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            in.read(reinterpret_cast<char*>(&rank), 4);
            std::vector<int> shape(rank);
            for (auto& dim : shape) in.read(reinterpret_cast<char*>(&dim), 4);
            Tensor t(shape);
            in.read(reinterpret_cast<char*>(t.data()),
                    static_cast<std::streamsize>(t.size() * sizeof(double)));
            params_[name] = make_const(std::move(t));
        }
        if (!in) throw std::runtime_error("backbone: truncated weights file");
    }
    taps_ = derive_taps(config_.tap_indices, depth_);
}

Var Backbone::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::logic_error("backbone: missing param " + name);
    return it->second;
}

Var Backbone::forward_tokens(const Var& img, int up_to_block,
                             std::vector<Var>* collect,
                             const std::vector<int>& want) const {
    namespace o = ops;
    const int p = config_.patch_size;
    Var x = img;
    int h = x->value.dim(1), w = x->value.dim(2);
    if (h % p != 0 || w % p != 0) {
        h = std::max(p, (h + p / 2) / p * p);
        w = std::max(p, (w + p / 2) / p * p);
        x = o::bilinear_resize(x, h, w);
    }
    const int gh = h / p, gw = w / p, d = width_;
    Var tokens = o::linear(o::patchify(x, p), param("patch_embed.w"), param("patch_embed.b"));
    tokens = o::add(tokens, make_const(sincos_pos_embed(gh, gw, d)));
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
    for (int l = 0; l <= up_to_block; ++l) {
        const std::string pre = "block" + std::to_string(l) + ".";
        Var x1 = o::layernorm_rows(tokens, param(pre + "ln1.g"), param(pre + "ln1.b"));
        Var q = o::linear(x1, param(pre + "wq"), param(pre + "bq"));
        Var k = o::linear(x1, param(pre + "wk"), param(pre + "bk"));
        Var v = o::linear(x1, param(pre + "wv"), param(pre + "bv"));
        Var attn = o::softmax_rows(o::scale(o::matmul(q, o::transpose(k)), inv_sqrt_d));
        Var ctx = o::linear(o::matmul(attn, v), param(pre + "wo"), param(pre + "bo"));
        tokens = o::add(tokens, ctx);
        Var x2 = o::layernorm_rows(tokens, param(pre + "ln2.g"), param(pre + "ln2.b"));
        Var hdn = o::gelu(o::linear(x2, param(pre + "fc1.w"), param(pre + "fc1.b")));
        tokens = o::add(tokens, o::linear(hdn, param(pre + "fc2.w"), param(pre + "fc2.b")));
        if (collect)
            for (size_t i = 0; i < want.size(); ++i)
                if (want[i] == l) (*collect)[i] = tokens;
    }
    return tokens;
}

FeatureTaps Backbone::extract_taps(const ImageTensor& img) const {
    if (!img.all_finite()) throw std::invalid_argument("extract_taps: non-finite input");
    ++call_count_;
    Var in = make_const(img);
    std::vector<int> want(taps_.begin(), taps_.end());
    std::vector<Var> collected(3);
    forward_tokens(in, taps_[2], &collected, want);

    const int p = config_.patch_size;
    const int gh = std::max(1, (img.dim(1) + p / 2) / p);
    const int gw = std::max(1, (img.dim(2) + p / 2) / p);
    auto to_map = [&](const Var& tok) {
        namespace o = ops;
        return o::reshape(o::transpose(tok), {width_, gh, gw})->value;
    };
    FeatureTaps taps;
    taps.shallow = to_map(collected[0]);
    taps.medium = to_map(collected[1]);
    taps.deep = to_map(collected[2]);
    taps.patch_size = p;
    return taps;
}

std::vector<Var> Backbone::tap_vars(const Var& img,
                                    const std::vector<int>& block_indices) const {
    if (block_indices.empty())
        throw std::invalid_argument("tap_vars: empty block index list");
    int deepest = 0;
    for (int b : block_indices) {
        if (b < 0 || b >= depth_)
            throw std::invalid_argument("tap_vars: block index out of range");
        deepest = std::max(deepest, b);
    }
    ++call_count_;
    std::vector<Var> collected(block_indices.size());
    forward_tokens(img, deepest, &collected, block_indices);
    return collected;
}

Tensor Backbone::patch_embedding_features(const ImageTensor& img) const {
    namespace o = ops;
    Var in = make_const(img);
    const int p = config_.patch_size;
    int h = img.dim(1), w = img.dim(2);
    if (h % p != 0 || w % p != 0) {
        h = std::max(p, (h + p / 2) / p * p);
        w = std::max(p, (w + p / 2) / p * p);
        in = o::bilinear_resize(in, h, w);
    }
    Var tokens = o::linear(o::patchify(in, p), param("patch_embed.w"), param("patch_embed.b"));
    return o::reshape(o::transpose(tokens), {width_, h / p, w / p})->value;
}

uint64_t Backbone::weight_checksum() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [name, var] : params_) {
        for (char c : name) {
            h ^= static_cast<uint8_t>(c);
            h *= 1099511628211ull;
        }
        const auto* bytes = reinterpret_cast<const uint8_t*>(var->value.data());
        const size_t nbytes = static_cast<size_t>(var->value.size()) * sizeof(double);
        for (size_t i = 0; i < nbytes; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

void Backbone::save_weights(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("backbone: cannot write " + path);
    out.write(kWeightsMagic, 4);
    const uint32_t version = 1;
    const int32_t patch = config_.patch_size, width = width_, depth = depth_;
    const uint32_t n_params = static_cast<uint32_t>(params_.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&patch), 4);
    out.write(reinterpret_cast<const char*>(&width), 4);
    out.write(reinterpret_cast<const char*>(&depth), 4);
    out.write(reinterpret_cast<const char*>(&n_params), 4);
    for (const auto& [name, var] : params_) {
        const uint32_t name_len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&name_len), 4);
        out.write(name.data(), name_len);
        const uint32_t rank = static_cast<uint32_t>(var->value.rank());
        out.write(reinterpret_cast<const char*>(&rank), 4);
        for (int i = 0; i < var->value.rank(); ++i) {
            const int32_t dim = var->value.dim(i);
            out.write(reinterpret_cast<const char*>(&dim), 4);
        }
        out.write(reinterpret_cast<const char*>(var->value.data()),
                  static_cast<std::streamsize>(var->value.size() * sizeof(double)));
    }
}

ImageTensor pca_project(const Tensor& fmap, int k) {
    if (fmap.rank() != 3) throw std::invalid_argument("pca_project: CHW input required");
    const int c = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2), n = h * w;
    if (c < k || n < k)
        throw std::invalid_argument("pca_project: need at least k channels and positions");

    Eigen::MatrixXd tokens(n, c);
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < n; ++i) tokens(i, ci) = fmap[ci * n + i];
    const Eigen::RowVectorXd mean = tokens.colwise().mean();
    tokens.rowwise() -= mean;
    const Eigen::MatrixXd cov = tokens.transpose() * tokens / double(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("pca_project: eigendecomposition failed");

    Tensor out({k, h, w});
    for (int comp = 0; comp < k; ++comp) {
        const int ev = c - 1 - comp; // eigenvalues ascend
        if (es.eigenvalues()(ev) < 1e-12) {
            std::cerr << "[restolab] warning: pca_project rank-deficient input, "
                         "component " << comp << " zero-filled\n";
            continue;
        }
        const Eigen::VectorXd dir = es.eigenvectors().col(ev);
        double lo = 0, hi = 0;
        std::vector<double> proj(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            proj[static_cast<size_t>(i)] = tokens.row(i).dot(dir);
            if (i == 0) lo = hi = proj[0];
            lo = std::min(lo, proj[static_cast<size_t>(i)]);
            hi = std::max(hi, proj[static_cast<size_t>(i)]);
        }
        const double range = hi - lo > 0 ? hi - lo : 1.0;
        for (int i = 0; i < n; ++i)
            out[comp * n + i] = (proj[static_cast<size_t>(i)] - lo) / range;
    }
    return out;
}

namespace {

double population_variance(const std::vector<double>& xs) {
    double mu = 0;
    for (double v : xs) mu += v;
    mu /= xs.size();
    double var = 0;
    for (double v : xs) var += (v - mu) * (v - mu);
    return var / xs.size();
}

std::vector<double> deviations(const std::vector<double>& xs) {
    double mu = 0;
    for (double v : xs) mu += v;
    mu /= xs.size();
    std::vector<double> d;
    d.reserve(xs.size());
    for (double v : xs) d.push_back(v - mu);
    return d;
}

double feature_range(const std::vector<Tensor>& feats) {
    double lo = feats[0][0], hi = feats[0][0];
    for (const auto& f : feats)
        for (int i = 0; i < f.size(); ++i) {
            lo = std::min(lo, f[i]);
            hi = std::max(hi, f[i]);
        }
    return hi > lo ? hi - lo : 1.0;
}

} // namespace

StabilityReport stability_probe(const std::vector<ImageTensor>& clean_images,
                                const std::vector<double>& sigmas,
                                const BackboneConfig& config, uint64_t seed) {
    if (clean_images.empty()) throw std::invalid_argument("stability_probe: no images");
    {
        std::vector<double> distinct;
        for (double s : sigmas)
            if (std::find(distinct.begin(), distinct.end(), s) == distinct.end())
                distinct.push_back(s);
        if (distinct.size() < 2)
            throw std::invalid_argument(
                "stability_probe: need at least 2 distinct degradation levels");
    }

    Backbone backbone(config);

    std::vector<Tensor> clean_embed, clean_deep;
    for (const auto& img : clean_images) {
        clean_embed.push_back(backbone.patch_embedding_features(img));
        clean_deep.push_back(backbone.extract_taps(img).deep);
    }
    const double embed_peak = feature_range(clean_embed);
    const double deep_peak = feature_range(clean_deep);

    StabilityReport report;
    report.sigmas = sigmas;
    for (size_t li = 0; li < sigmas.size(); ++li) {
        double raw = 0, fi = 0, fd = 0;
        for (size_t ii = 0; ii < clean_images.size(); ++ii) {
            const uint64_t s =
                derive_seed(seed, "probe:" + std::to_string(li) + ":" + std::to_string(ii));
            const Tensor noisy = add_gaussian_noise(clean_images[ii], sigmas[li], s);
            raw += psnr(noisy, clean_images[ii], 1.0);
            fi += psnr(backbone.patch_embedding_features(noisy), clean_embed[ii], embed_peak);
            fd += psnr(backbone.extract_taps(noisy).deep, clean_deep[ii], deep_peak);
        }
        const double n = double(clean_images.size());
        report.raw_psnr.push_back(raw / n);
        report.f_image_psnr.push_back(fi / n);
        report.f_dino_psnr.push_back(fd / n);
    }
    report.raw_dev = deviations(report.raw_psnr);
    report.f_image_dev = deviations(report.f_image_psnr);
    report.f_dino_dev = deviations(report.f_dino_psnr);
    report.raw_var = population_variance(report.raw_psnr);
    report.f_image_var = population_variance(report.f_image_psnr);
    report.f_dino_var = population_variance(report.f_dino_psnr);
    return report;
}

std::string StabilityReport::to_csv() const {
    std::ostringstream os;
    os << "level,raw_psnr,f_image_psnr,f_dino_psnr\n";
    for (size_t i = 0; i < sigmas.size(); ++i)
        os << sigmas[i] << "," << raw_psnr[i] << "," << f_image_psnr[i] << ","
           << f_dino_psnr[i] << "\n";
    return os.str();
}

std::string StabilityReport::to_json() const {
    std::ostringstream os;
    os << "{\"raw_variance\": " << raw_var << ", \"f_image_variance\": " << f_image_var
       << ", \"f_dino_variance\": " << f_dino_var << "}";
    return os.str();
}

} // namespace restolab
