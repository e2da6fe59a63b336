#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sfnet/data.hpp"
#include "sfnet/net.hpp"

namespace sfnet {

struct LrSchedule {
    double eta = 1.6;         // base learning rate
    int n_max = 2000;         // total iterations
    int warmup_iters = 0;
    double warmup_start_lr = 0.0;
};

/// Half-period cosine eta*0.5*(cos(n/n_max*pi)+1); linear warm-up from
/// warmup_start_lr to the cosine value at warmup_iters. Throws InputError for
/// n outside [0, n_max].
double lr_at(const LrSchedule& sched, int n);

struct OptimState {
    std::map<std::string, Tensor> velocity;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool decay_affine_and_bias = false;  // BN scale/shift and biases exempt by default
    long iteration = 0;
};

/// v <- momentum*v + (g + wd*p); p <- p - lr*v. Throws NumericError on
/// non-finite gradients.
void sgd_step(ParamStore& params, const ParamStore& grads, OptimState& state, double lr);

struct TrainLogEntry {
    int iter = 0;
    double lr = 0, loss = 0, train_top1 = 0;
    std::optional<double> val_top1;
};

enum class LrPolicy {
    Cosine,
    /// fine-tuning style: hold eta, multiply by step_factor whenever the
    /// validation top-1 fails to improve for `patience` consecutive evals.
    /// The saturation test is not prescribed anywhere; this patience rule is
    /// plumbing, not a reproduced recipe.
    StepOnPlateau,
};

struct TrainOptions {
    int batch = 8;
    LrSchedule sched;
    LrPolicy lr_policy = LrPolicy::Cosine;
    double step_factor = 0.1;   // StepOnPlateau: multiplier per plateau
    int patience = 2;           // StepOnPlateau: evals without improvement
    double momentum = 0.9;
    double weight_decay = 1e-4;
    uint64_t seed = 1;
    AugmentParams augment;
    int eval_every = 250;       // 0 = only final
    int eval_crop = 0;          // 0 = augment.crop
    int checkpoint_every = 0;   // 0 = none
    std::string out_dir;        // for checkpoints; empty = keep in memory only
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    double final_val_top1 = 0.0;
    double final_train_top1 = 0.0;
};

/// Deterministic given (net seed, options.seed). Aborts with NumericError
/// naming the iteration if the loss goes non-finite.
TrainResult train_loop(Network& net, const std::vector<RawVideo>& train_set,
                       const std::vector<RawVideo>& val_set, const TrainOptions& opt);

/// Single center view per video, top-1 over the whole set.
double evaluate_top1(Network& net, const std::vector<RawVideo>& videos, int crop);

std::string train_log_text(const std::vector<TrainLogEntry>& log);

}  // namespace sfnet
