#include "restolab/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "restolab/metrics.hpp"
#include "restolab/ops.hpp"
#include "restolab/rng.hpp"

namespace restolab {

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'L', 'C', 'K'};

std::string task_label(const DegradationSpec& spec) {
    std::ostringstream os;
    switch (spec.kind) {
        case DegradationKind::Noise: os << "noise_sigma" << spec.noise_sigma; break;
        case DegradationKind::Blur: os << "blur_k" << spec.blur_kernel_size; break;
        case DegradationKind::Rain: os << "rain_d" << spec.rain_density; break;
        case DegradationKind::Haze: os << "haze_b" << spec.haze_beta; break;
    }
    return os.str();
}

std::string describe_config(const TrainingConfig& c) {
    std::ostringstream os;
    os << "beta1=" << c.beta1 << ";beta2=" << c.beta2 << ";lr0=" << c.lr_initial
       << ";lr1=" << c.lr_final << ";steps=" << c.steps << ";batch=" << c.batch_size
       << ";patch=" << c.patch_size << ";lambda=" << c.lambda << ";clip="
       << c.grad_clip_norm << ";seed=" << c.seed << ";guidance="
       << to_string(c.net.guidance) << ";base_channels=" << c.net.base_channels
       << ";levels=" << c.net.levels << ";blocks=";
    for (int b : c.net.blocks_per_level) os << b << ",";
    os << ";tasks=";
    for (const auto& t : c.task_mix) os << task_label(t) << ",";
    return os.str();
}

uint64_t fnv_hash(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double global_grad_norm(const std::vector<Var>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (p->grad.empty()) continue;
        for (int i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    }
    return std::sqrt(sq);
}

std::vector<SamplePair> make_eval_pairs(const std::vector<ImageTensor>& images,
                                        const std::vector<DegradationSpec>& specs,
                                        uint64_t seed) {
    std::vector<SamplePair> pairs;
    uint64_t idx = 0;
    for (const auto& img : images)
        for (const auto& spec : specs) {
            SamplePair p;
            p.clean = img;
            p.spec = spec;
            p.spec.seed = derive_seed(seed, "eval:" + std::to_string(idx++));
            p.degraded = apply_degradation(p.clean, p.spec);
            pairs.push_back(std::move(p));
        }
    return pairs;
}

} // namespace

void TrainingConfig::validate() const {
    if (lr_final > lr_initial)
        throw std::invalid_argument("TrainingConfig: lr_final must be <= lr_initial");
    if (steps < 1) throw std::invalid_argument("TrainingConfig: steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainingConfig: batch_size >= 1");
    if (patch_size < 1) throw std::invalid_argument("TrainingConfig: patch_size >= 1");
    if (task_mix.empty()) throw std::invalid_argument("TrainingConfig: empty task mix");
    for (const auto& t : task_mix) t.validate();
    net.validate();
    dpc.validate();
}

double lr_at_step(const TrainingConfig& config, int step) {
    if (config.steps <= 1) return config.lr_initial;
    const double t = double(std::min(step, config.steps - 1)) / (config.steps - 1);
    return config.lr_final +
           0.5 * (config.lr_initial - config.lr_final) * (1.0 + std::cos(M_PI * t));
}

Adam::Adam(const std::vector<Var>& params, double beta1, double beta2, double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Node& p = *params_[i];
        if (p.grad.empty()) continue;
        for (int j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            p.value[j] -= lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        }
    }
}

RunLog train(const TrainingConfig& config, PatchDataset& dataset,
             RestorationModel& model, const Backbone& backbone) {
    config.validate();
    const bool guided = model.config().guidance != Guidance::None;
    Adam opt(model.params(), config.beta1, config.beta2, config.adam_eps);
    RunLog log;

    for (int step = 0; step < config.steps; ++step) {
        const double lr = lr_at_step(config, step);
        zero_grad(model.params());
        double l1_sum = 0, dpc_sum = 0, total_sum = 0;
        for (int b = 0; b < config.batch_size; ++b) {
            SamplePair pair = dataset.next();
            FeatureTaps taps;
            if (guided) taps = backbone.extract_taps(pair.degraded);
            Var input = make_const(pair.degraded);
            Var out = model.forward(input, guided ? &taps : nullptr);

            LossBreakdown bd;
            Var loss;
            if (config.lambda != 0.0) {
                loss = total_loss(out, pair.clean, pair.degraded, config.lambda,
                                  config.dpc, backbone, &bd);
            } else {
                loss = l1_loss(out, make_const(pair.clean));
                bd.l1 = loss->value.item();
                bd.total = bd.l1;
            }
            if (!std::isfinite(loss->value.item())) {
                std::cerr << "[restolab] non-finite loss at step " << step << " sample "
                          << b << " task " << task_label(pair.spec) << " l1=" << bd.l1
                          << " dpc=" << bd.dpc << "\n";
                throw std::runtime_error("train: non-finite loss, aborting");
            }
            backward(ops::scale(loss, 1.0 / config.batch_size));
            l1_sum += bd.l1;
            dpc_sum += bd.dpc;
            total_sum += bd.total;
        }
        if (config.grad_clip_norm > 0.0) {
            const double norm = global_grad_norm(model.params());
            if (norm > config.grad_clip_norm) {
                const double s = config.grad_clip_norm / norm;
                for (const auto& p : model.params()) {
                    if (p->grad.empty()) continue;
                    for (int i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
                }
            }
        }
        opt.step(lr);
        log.steps.push_back({step, l1_sum / config.batch_size, dpc_sum / config.batch_size,
                             total_sum / config.batch_size, lr});
    }
    return log;
}

std::vector<MetricRow> evaluate(const RestorationModel& model,
                                const std::vector<SamplePair>& eval_pairs,
                                const Backbone& backbone) {
    if (eval_pairs.empty()) throw std::invalid_argument("evaluate: empty eval set");
    const bool guided = model.config().guidance != Guidance::None;
    std::vector<MetricRow> rows;
    for (const auto& pair : eval_pairs) {
        FeatureTaps taps;
        if (guided) taps = backbone.extract_taps(pair.degraded);
        const ImageTensor restored = model.restore(pair.degraded, guided ? &taps : nullptr);
        const std::string task = task_label(pair.spec);
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const MetricRow& r) { return r.task == task; });
        if (it == rows.end()) {
            rows.push_back({task, 0, 0, 0});
            it = rows.end() - 1;
        }
        it->psnr += psnr(restored, pair.clean);
        it->ssim += ssim(restored, pair.clean);
        it->count += 1;
    }
    for (auto& r : rows) {
        r.psnr /= r.count;
        r.ssim /= r.count;
    }
    return rows;
}

void save_checkpoint(const std::string& path, const RestorationModel& model,
                     const TrainingConfig& config, int step) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, 4);
    const uint32_t version = 1;
    const uint32_t n = static_cast<uint32_t>(model.params().size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (size_t i = 0; i < model.params().size(); ++i) {
        const std::string& name = model.param_names()[i];
        const Tensor& t = model.params()[i]->value;
        const uint32_t name_len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&name_len), 4);
        out.write(name.data(), name_len);
        const uint32_t rank = static_cast<uint32_t>(t.rank());
        out.write(reinterpret_cast<const char*>(&rank), 4);
        for (int d = 0; d < t.rank(); ++d) {
            const int32_t dim = t.dim(d);
            out.write(reinterpret_cast<const char*>(&dim), 4);
        }
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }

    nlohmann::json meta;
    meta["config_hash"] = hex64(fnv_hash(describe_config(config)));
    meta["seed"] = config.seed;
    meta["step"] = step;
    meta["guidance"] = to_string(config.net.guidance);
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : config.task_mix) tasks.push_back(task_label(t));
    meta["task_mix"] = tasks;
    std::ofstream side(path + ".json");
    side << meta.dump(2) << "\n";
}

void load_checkpoint(const std::string& path, RestorationModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic");
    uint32_t version = 0, n = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&n), 4);
    if (version != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    if (n != model.params().size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t name_len = 0, rank = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        in.read(reinterpret_cast<char*>(&rank), 4);
        std::vector<int> shape(rank);
        for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), 4);
        if (name != model.param_names()[i])
            throw std::runtime_error("load_checkpoint: parameter name mismatch at " + name);
        Tensor& t = model.params()[i]->value;
        if (shape != t.shape())
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file");
}

std::string checkpoint_metadata(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("checkpoint_metadata: no sidecar for " + path);
    std::ostringstream os;
    os << side.rdbuf();
    return os.str();
}

std::vector<AblationRow> ablation_layers(const TrainingConfig& base,
                                         const std::vector<ImageTensor>& train_images,
                                         const std::vector<ImageTensor>& eval_images) {
    // V0 = unguided baseline, V1/V2 = single-tap guidance, V3 = full gated
    // fusion (reports the learned gating scores)
    const std::pair<std::string, Guidance> variants[] = {
        {"V0", Guidance::None},
        {"V1", Guidance::ShallowOnly},
        {"V2", Guidance::MediumOnly},
        {"V3", Guidance::PsfFull},
    };
    std::vector<AblationRow> rows;
    const auto eval_pairs =
        make_eval_pairs(eval_images, base.task_mix, derive_seed(base.seed, "ablate_eval"));
    for (const auto& [name, guidance] : variants) {
        TrainingConfig cfg = base;
        cfg.net.guidance = guidance;
        Backbone backbone(cfg.backbone);
        cfg.net.guidance_channels = backbone.width();
        RestorationModel model(cfg.net, cfg.seed);
        PatchDataset dataset(train_images, cfg.task_mix, cfg.patch_size, cfg.seed);
        train(cfg, dataset, model, backbone);
        const auto metrics = evaluate(model, eval_pairs, backbone);
        AblationRow row{name, guidance, 0, 0, std::nullopt};
        for (const auto& m : metrics) {
            row.psnr += m.psnr;
            row.ssim += m.ssim;
        }
        row.psnr /= double(metrics.size());
        row.ssim /= double(metrics.size());
        if (guidance == Guidance::PsfFull) {
            const FeatureTaps taps = backbone.extract_taps(eval_pairs.front().degraded);
            row.scores = model.psf()->gate(taps);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TaskCountRow> ablation_task_count(const TrainingConfig& base,
                                              const std::vector<ImageTensor>& train_images,
                                              const std::vector<ImageTensor>& eval_images) {
    // nested mixes: {B}, {B,N}, {B,N,R}, {B,N,R,H}; metric is always deblurring
    auto spec_of = [&](DegradationKind kind) {
        for (const auto& t : base.task_mix)
            if (t.kind == kind) return t;
        DegradationSpec s;
        s.kind = kind;
        return s;
    };
    const DegradationKind order[] = {DegradationKind::Blur, DegradationKind::Noise,
                                     DegradationKind::Rain, DegradationKind::Haze};
    const char* labels[] = {"1 (B)", "2 (B+N)", "3 (B+N+R)", "4 (B+N+R+H)"};

    const auto eval_pairs =
        make_eval_pairs(eval_images, {spec_of(DegradationKind::Blur)},
                        derive_seed(base.seed, "ablate_eval"));
    std::vector<TaskCountRow> rows;
    std::vector<DegradationSpec> mix;
    for (int i = 0; i < 4; ++i) {
        mix.push_back(spec_of(order[i]));
        TaskCountRow row{labels[i], i + 1, 0, 0};
        for (const Guidance g : {Guidance::None, Guidance::PsfFull}) {
            TrainingConfig cfg = base;
            cfg.task_mix = mix;
            cfg.net.guidance = g;
            Backbone backbone(cfg.backbone);
            cfg.net.guidance_channels = backbone.width();
            RestorationModel model(cfg.net, cfg.seed);
            PatchDataset dataset(train_images, cfg.task_mix, cfg.patch_size, cfg.seed);
            train(cfg, dataset, model, backbone);
            const auto metrics = evaluate(model, eval_pairs, backbone);
            double p = 0;
            for (const auto& m : metrics) p += m.psnr;
            p /= double(metrics.size());
            (g == Guidance::None ? row.baseline_psnr : row.guided_psnr) = p;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string RunLog::steps_csv() const {
    std::ostringstream os;
    os << "step,l1,dpc,total,lr\n";
    for (const auto& s : steps)
        os << s.step << "," << s.l1 << "," << s.dpc << "," << s.total << "," << s.lr << "\n";
    return os.str();
}

std::string RunLog::evals_csv() const {
    std::ostringstream os;
    os << "step,task,psnr,ssim\n";
    for (const auto& e : evals)
        os << e.step << "," << e.task << "," << e.psnr << "," << e.ssim << "\n";
    return os.str();
}

std::string ablation_layers_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,guidance,psnr,ssim,score_shallow,score_medium,score_deep\n";
    for (const auto& r : rows) {
        os << r.name << "," << to_string(r.guidance) << "," << r.psnr << "," << r.ssim;
        if (r.scores)
            os << "," << r.scores->s_shallow << "," << r.scores->s_medium << ","
               << r.scores->s_deep;
        else
            os << ",,,";
        os << "\n";
    }
    return os.str();
}

std::string ablation_tasks_csv(const std::vector<TaskCountRow>& rows) {
    std::ostringstream os;
    os << "tasks,deblur_psnr_baseline,deblur_psnr_guided\n";
    for (const auto& r : rows)
        os << r.label << "," << r.baseline_psnr << "," << r.guided_psnr << "\n";
    return os.str();
}

} // namespace restolab
