#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/checkpoint.hpp"
#include "posmask/masking.hpp"
#include "posmask/model.hpp"
#include "posmask/optim.hpp"

namespace posmask {

struct TrainConfig {
    double learning_rate = 5e-5;
    double weight_decay = 0.0;
    int epochs = 6;
    int batch_size = 8;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    double token_mask_rate = 0.15;
    double position_mask_rate = 0.15;
    AdamWConfig adam;

    void validate() const {
        if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (grad_clip_norm <= 0) throw std::invalid_argument("grad_clip_norm must be > 0");
    }
};

struct StepRecord {
    long long step = 0;
    double lr = 0.0;
    double mlm = 0.0;
    double pm = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;  // post-clip
};

// Append-only run log, one self-describing key-value record per step.
class RunLog {
  public:
    void open(const std::string& path) {
        out_.open(path, std::ios::binary);
        if (!out_) throw std::runtime_error("cannot open run log " + path);
    }

    void header(const std::string& config_echo) {
        if (out_) out_ << "record=config version=" << kCodeVersion << ' ' << config_echo << '\n';
    }

    void record(const StepRecord& r) {
        records.push_back(r);
        if (out_) {
            out_ << "record=step step=" << r.step << " lr=" << fmt(r.lr)
                 << " mlm=" << fmt(r.mlm) << " pm=" << fmt(r.pm) << " loss=" << fmt(r.loss)
                 << " grad_norm=" << fmt(r.grad_norm) << '\n';
        }
    }

    void finish(double lr) {
        final_lr = lr;
        if (out_) out_ << "record=final lr=" << fmt(lr) << '\n';
    }

    void epoch_summary(int epoch, double mean_loss) {
        if (out_)
            out_ << "record=epoch epoch=" << epoch << " mean_loss=" << fmt(mean_loss) << '\n';
    }

    std::vector<StepRecord> records;
    double final_lr = 0.0;  // schedule value after the last step

    static constexpr const char* kCodeVersion = "posmask-0.1.0";

  private:
    static std::string fmt(double v) {
        std::ostringstream os;
        os.precision(12);
        os << v;
        return os.str();
    }

    std::ofstream out_;
};

namespace train_detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    return idx;
}

}  // namespace train_detail

struct PretrainResult {
    Checkpoint checkpoint;
    RunLog log;
};

// One optimizer step over a batch of pages. Shared by pre-training and by
// callers that drive their own loop (tests, fine-tuning).
inline StepRecord pretrain_step(Model& model, AdamWState& opt_state,
                                const std::vector<const PageDocument*>& batch,
                                const TrainConfig& tc, double lr, std::uint64_t mask_seed_base) {
    std::vector<PageDocument> masked;
    std::vector<MaskPlan> plans;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::uint64_t seed = Rng::mix(mask_seed_base, i);
        MaskPlan plan = sample_mask_plan(*batch[i], tc.token_mask_rate, tc.position_mask_rate,
                                         model.cfg.pm_variant, model.cfg.vocab_size, seed);
        PageDocument page = *batch[i];
        apply_token_mask(page, plan);
        apply_position_mask(page, plan, model.cfg.grid_max);
        masked.push_back(std::move(page));
        plans.push_back(std::move(plan));
    }
    Forward fwd(model);
    BatchLosses losses = pretrain_batch_loss(fwd, masked, plans);
    if (!std::isfinite(losses.combined_value))
        throw std::runtime_error("non-finite loss at training step");
    fwd.tape().backward(losses.combined);
    std::vector<Array> grads;
    for (const auto& name : model.params.names) grads.push_back(fwd.gradient(name));
    clip_gradients(grads, tc.grad_clip_norm);
    AdamWConfig ac = tc.adam;
    ac.weight_decay = tc.weight_decay;
    adamw_step(model.params.values, grads, opt_state, lr, ac);

    StepRecord r;
    r.lr = lr;
    r.mlm = losses.mlm_value;
    r.pm = losses.pm_value;
    r.loss = losses.combined_value;
    r.grad_norm = global_grad_norm(grads);
    return r;
}

// Pre-training loop: shuffled whole-page batches,
// linear decay to zero, clipping, AdamW, checkpoint every epoch.
// checkpoint_sink(epoch, ckpt) may be empty.
inline PretrainResult pretrain(
    const std::vector<PageDocument>& corpus, const ModelConfig& mc, const TrainConfig& tc,
    const std::string& log_path = "",
    const std::function<void(int, const Checkpoint&)>& checkpoint_sink = {},
    long long max_steps = -1) {
    if (corpus.empty()) throw std::invalid_argument("pretrain: corpus is empty");
    tc.validate();
    mc.validate();

    PretrainResult result;
    if (!log_path.empty()) result.log.open(log_path);
    result.log.header("lr=" + std::to_string(tc.learning_rate) +
                      " epochs=" + std::to_string(tc.epochs) +
                      " batch_size=" + std::to_string(tc.batch_size) +
                      " seed=" + std::to_string(tc.seed) + " variant=" + mc.pm_variant.name());

    Model model = Model::init(mc, Rng::mix(tc.seed, 0x1417));
    AdamWState opt_state = AdamWState::for_params(model.params.values);
    Rng shuffle_rng(Rng::mix(tc.seed, 0x5fff1e));

    long long steps_per_epoch =
        static_cast<long long>((corpus.size() + tc.batch_size - 1) / tc.batch_size);
    long long total_steps = steps_per_epoch * tc.epochs;
    if (max_steps > 0) total_steps = std::min(total_steps, max_steps);
    long long step = 0;

    for (int epoch = 0; epoch < tc.epochs && step < total_steps; ++epoch) {
        auto order = train_detail::shuffled_indices(corpus.size(), shuffle_rng);
        double epoch_loss = 0.0;
        long long epoch_steps = 0;
        for (std::size_t b = 0; b < order.size() && step < total_steps;
             b += tc.batch_size) {
            std::vector<const PageDocument*> batch;
            for (std::size_t i = b; i < std::min(order.size(), b + tc.batch_size); ++i)
                batch.push_back(&corpus[order[i]]);
            double lr = linear_schedule(step, total_steps, tc.learning_rate);
            StepRecord r = pretrain_step(model, opt_state, batch, tc, lr,
                                         Rng::mix(tc.seed, 0x900d ^ static_cast<std::uint64_t>(step)));
            r.step = step;
            result.log.record(r);
            epoch_loss += r.loss;
            ++epoch_steps;
            ++step;
        }
        if (epoch_steps > 0) result.log.epoch_summary(epoch, epoch_loss / epoch_steps);
        if (checkpoint_sink) {
            Checkpoint ck;
            ck.model = model;
            for (int i = 0; i < 4; ++i) ck.rng_state[i] = shuffle_rng.state_word(i);
            ck.step = step;
            checkpoint_sink(epoch, ck);
        }
    }
    result.log.finish(linear_schedule(step, total_steps, tc.learning_rate));
    result.checkpoint.model = std::move(model);
    for (int i = 0; i < 4; ++i) result.checkpoint.rng_state[i] = shuffle_rng.state_word(i);
    result.checkpoint.step = step;
    return result;
}

}  // namespace posmask
