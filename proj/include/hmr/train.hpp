#pragma once

// Toy trainer: deterministic on-the-fly synthetic two-view samples, the full
// six-term loss, batch-averaged Adam steps, held-out PA-MPVPE model
// selection, and bit-exact checkpoint resume.

#include <string>
#include <vector>

#include <json.hpp>

#include "hmr/losses.hpp"
#include "hmr/model.hpp"

namespace hmr {

struct TrainConfig {
    ModelConfig model = ModelConfig::toy_default();
    unsigned seed = 1;
    int train_samples = 600;
    int heldout_samples = 24;
    int epochs = 4;
    int batch_size = 8;
    double lr = 2e-3;
    int lr_decay_epoch = -1;  // divide lr by 10 from this epoch on; -1 disables
    int cameras = 4;          // viewpoints drawn from the steep rings of the camera grid
    double camera_radius = 30.0;
    LossWeights weights;
    std::string out_dir = "train_out";
    long long max_steps = -1;    // stop after this many optimizer steps (tests/resume)
    std::string resume_from;     // checkpoint directory to continue from
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainReport {
    double initial_loss = 0;  // batch-mean total of the first optimizer step
    double final_loss = 0;    // mean over the last (up to) 10 optimizer steps
    double untrained_pa = 0;  // held-out PA-MPVPE before any update
    double best_pa = 0;       // best held-out PA-MPVPE over epoch evaluations
    double final_pa = 0;
    long long steps = 0;  // global optimizer steps completed
    bool aborted = false;
    std::string abort_reason;
    std::vector<double> step_losses;  // batch-mean totals for the steps run in this call
    std::string loss_csv, best_checkpoint, last_checkpoint;
};

TrainReport train_toy(const TrainConfig& cfg);

// Held-out PA-MPVPE of a model under a config's evaluation split.
double evaluate_heldout(const HmrModel& model, const TrainConfig& cfg);

}  // namespace hmr
