#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/eval.hpp"
#include "posmask/funsd.hpp"
#include "posmask/model.hpp"
#include "posmask/optim.hpp"
#include "posmask/train.hpp"

namespace posmask {

struct FinetuneConfig {
    double learning_rate = 5e-5;
    int epochs = 100;
    int batch_size = 25;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    AdamWConfig adam;
};

// Summed token-classification cross entropy for one page (continuation
// sub-tokens and specials carry IGNORE and contribute nothing).
inline std::pair<Var, std::size_t> classify_loss_sum(Forward& fwd, const TaggedPage& tp) {
    Var h = fwd.encode(fwd.embed(tp.page));
    Var logits = fwd.token_classifier_logits(h);
    std::size_t count = 0;
    for (int l : tp.labels)
        if (l != BioLabels::IGNORE) ++count;
    return {fwd.tape().softmax_ce_sum(logits, tp.labels, BioLabels::IGNORE), count};
}

// Fine-tunes a copy of the pre-trained model with a fresh classifier head.
// Same optimizer and schedule family as pre-training.
inline Model finetune(const Model& pretrained, const std::vector<TaggedPage>& train_pages,
                      const FinetuneConfig& fc, RunLog* log = nullptr) {
    if (train_pages.empty()) throw std::invalid_argument("finetune: no training pages");
    Model model = pretrained;
    if (model.cfg.num_labels == 0)
        model.attach_classifier_head(BioLabels::COUNT, Rng::mix(fc.seed, 0xead));
    else if (model.cfg.num_labels != BioLabels::COUNT)
        throw std::invalid_argument("finetune: label set size " +
                                    std::to_string(BioLabels::COUNT) +
                                    " does not match head size " +
                                    std::to_string(model.cfg.num_labels));
    AdamWState opt_state = AdamWState::for_params(model.params.values);
    Rng shuffle_rng(Rng::mix(fc.seed, 0x50f7));

    long long steps_per_epoch =
        static_cast<long long>((train_pages.size() + fc.batch_size - 1) / fc.batch_size);
    long long total_steps = steps_per_epoch * fc.epochs;
    long long step = 0;
    for (int epoch = 0; epoch < fc.epochs; ++epoch) {
        auto order = train_detail::shuffled_indices(train_pages.size(), shuffle_rng);
        for (std::size_t b = 0; b < order.size(); b += fc.batch_size) {
            Forward fwd(model);
            Tape& t = fwd.tape();
            Var sum{};
            std::size_t n = 0;
            for (std::size_t i = b; i < std::min(order.size(), b + fc.batch_size); ++i) {
                auto [s, c] = classify_loss_sum(fwd, train_pages[order[i]]);
                if (c == 0) continue;
                sum = sum.valid() ? t.add(sum, s) : s;
                n += c;
            }
            double lr = linear_schedule(step, total_steps, fc.learning_rate);
            ++step;
            if (n == 0) continue;
            Var loss = t.scale(sum, 1.0 / static_cast<double>(n));
            double loss_value = t.value(loss).data[0];
            if (!std::isfinite(loss_value))
                throw std::runtime_error("finetune: non-finite loss");
            t.backward(loss);
            std::vector<Array> grads;
            for (const auto& name : model.params.names) grads.push_back(fwd.gradient(name));
            clip_gradients(grads, fc.grad_clip_norm);
            adamw_step(model.params.values, grads, opt_state, lr, fc.adam);
            if (log) {
                StepRecord r;
                r.step = step - 1;
                r.lr = lr;
                r.loss = loss_value;
                r.grad_norm = global_grad_norm(grads);
                log->record(r);
            }
        }
    }
    return model;
}

// Argmax label per token position.
inline std::vector<int> predict_labels(Model& model, const PageDocument& page) {
    Forward fwd(model);
    Var h = fwd.encode(fwd.embed(page));
    Var logits = fwd.token_classifier_logits(h);
    const Array& vl = fwd.tape().value(logits);
    std::vector<int> out(vl.rows());
    for (std::size_t r = 0; r < vl.rows(); ++r) {
        int best = 0;
        for (std::size_t c = 1; c < vl.cols(); ++c)
            if (vl.at(r, c) > vl.at(r, best)) best = static_cast<int>(c);
        out[r] = best;
    }
    return out;
}

// Restrict gold and predicted labels to the scored positions (first
// sub-token of each word), preserving order. Both sequences share the
// compacted index space that entity decoding operates on.
inline std::pair<std::vector<int>, std::vector<int>> scored_labels(
    const TaggedPage& tp, const std::vector<int>& predicted) {
    std::vector<int> gold, pred;
    for (std::size_t i = 0; i < tp.labels.size(); ++i) {
        if (tp.labels[i] == BioLabels::IGNORE) continue;
        gold.push_back(tp.labels[i]);
        pred.push_back(predicted.at(i));
    }
    return {gold, pred};
}

// End-to-end evaluation of one model over a test set.
inline Scores evaluate_model(Model& model, const std::vector<TaggedPage>& test_pages,
                             bool include_other = true) {
    std::vector<std::vector<EntitySpan>> gold, pred;
    for (const auto& tp : test_pages) {
        auto [g, p] = scored_labels(tp, predict_labels(model, tp.page));
        gold.push_back(decode_entities(g));
        pred.push_back(decode_entities(p));
    }
    return score_entities(gold, pred, include_other);
}

// Token-level accuracy over scored positions (used by overfit checks).
inline double token_accuracy(Model& model, const std::vector<TaggedPage>& pages) {
    long long correct = 0, total = 0;
    for (const auto& tp : pages) {
        auto [g, p] = scored_labels(tp, predict_labels(model, tp.page));
        for (std::size_t i = 0; i < g.size(); ++i) {
            ++total;
            if (g[i] == p[i]) ++correct;
        }
    }
    return total ? static_cast<double>(correct) / total : 0.0;
}

}  // namespace posmask
