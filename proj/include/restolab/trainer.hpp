#ifndef RESTOLAB_TRAINER_HPP
#define RESTOLAB_TRAINER_HPP

#include <optional>
#include <string>
#include <vector>

#include "restolab/degradation.hpp"
#include "restolab/losses.hpp"
#include "restolab/restoration.hpp"

namespace restolab {

struct TrainingConfig {
    // optimizer (Adam)
    double beta1{0.9}, beta2{0.999}, adam_eps{1e-8};
    double lr_initial{2e-4};
    double lr_final{1e-4}; // cosine decay from lr_initial to lr_final
    int steps{200};
    int batch_size{4};
    int patch_size{64};
    double lambda{1.0};
    double grad_clip_norm{1.0}; // <= 0 disables
    uint64_t seed{0};
    std::vector<DegradationSpec> task_mix;
    NetConfig net;
    BackboneConfig backbone;
    DpcConfig dpc;

    void validate() const;
};

double lr_at_step(const TrainingConfig& config, int step);

struct RunLog {
    struct Step {
        int step;
        double l1, dpc, total, lr;
    };
    struct Eval {
        int step;
        std::string task;
        double psnr, ssim;
    };
    std::vector<Step> steps;
    std::vector<Eval> evals;

    std::string steps_csv() const;
    std::string evals_csv() const;
};

struct MetricRow {
    std::string task;
    double psnr{0}, ssim{0};
    int count{0};
};

class Adam {
public:
    Adam(const std::vector<Var>& params, double beta1, double beta2, double eps);
    void step(double lr);
    int64_t step_count() const { return t_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_;
    int64_t t_{0};
};

// Runs `config.steps` Adam updates of l1 + lambda * contrastive loss.
// Deterministic given (config, seed); throws on non-finite loss after dumping
// a diagnostic snapshot of the offending batch to stderr.
RunLog train(const TrainingConfig& config, PatchDataset& dataset,
             RestorationModel& model, const Backbone& backbone);

std::vector<MetricRow> evaluate(const RestorationModel& model,
                                const std::vector<SamplePair>& eval_pairs,
                                const Backbone& backbone);

// checkpointing: binary weights plus a JSON metadata sidecar at <path>.json
void save_checkpoint(const std::string& path, const RestorationModel& model,
                     const TrainingConfig& config, int step);
void load_checkpoint(const std::string& path, RestorationModel& model);
// reads the sidecar written by save_checkpoint
std::string checkpoint_metadata(const std::string& path);

struct AblationRow {
    std::string name;
    Guidance guidance;
    double psnr{0}, ssim{0};
    std::optional<GatingScores> scores; // full-model row only
};

struct TaskCountRow {
    std::string label;
    int task_count{0};
    double baseline_psnr{0}, guided_psnr{0};
};

std::vector<AblationRow> ablation_layers(const TrainingConfig& base,
                                         const std::vector<ImageTensor>& train_images,
                                         const std::vector<ImageTensor>& eval_images);

std::vector<TaskCountRow> ablation_task_count(const TrainingConfig& base,
                                              const std::vector<ImageTensor>& train_images,
                                              const std::vector<ImageTensor>& eval_images);

std::string ablation_layers_csv(const std::vector<AblationRow>& rows);
std::string ablation_tasks_csv(const std::vector<TaskCountRow>& rows);

} // namespace restolab

#endif
