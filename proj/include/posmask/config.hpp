#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "posmask/finetune.hpp"
#include "posmask/model.hpp"
#include "posmask/train.hpp"

namespace posmask {

// Effective run configuration: model + training + masking + eval settings,
// loadable from a flat key-value file. Unknown keys are errors.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    FinetuneConfig finetune;
    long long max_steps = -1;  // optional cap on pre-training steps
    bool eval_include_other = true;

    void apply(const std::string& key, const std::string& val) {
        auto to_int = [&] { return std::stoi(val); };
        auto to_ll = [&] { return std::stoll(val); };
        auto to_dbl = [&] { return std::stod(val); };
        auto to_bool = [&] {
            if (val == "true" || val == "1") return true;
            if (val == "false" || val == "0") return false;
            throw std::invalid_argument("config: bad boolean '" + val + "' for " + key);
        };
        if (key == "model.vocab_size") model.vocab_size = to_int();
        else if (key == "model.hidden") model.hidden = to_int();
        else if (key == "model.layers") model.layers = to_int();
        else if (key == "model.heads") model.heads = to_int();
        else if (key == "model.max_seq_len") model.max_seq_len = to_int();
        else if (key == "model.grid_max") model.grid_max = to_int();
        else if (key == "model.use_height_width") model.use_height_width = to_bool();
        else if (key == "model.pm_loss") model.pm_loss = parse_pm_loss(val);
        else if (key == "model.lambda") model.lambda = to_dbl();
        else if (key == "model.dropout") model.dropout = to_dbl();
        else if (key == "model.smooth_l1_beta") model.smooth_l1_beta = to_dbl();
        else if (key == "model.tie_mlm_weights") model.tie_mlm_weights = to_bool();
        else if (key == "mask.variant") model.pm_variant = MaskVariant::parse(val);
        else if (key == "mask.token_rate") train.token_mask_rate = to_dbl();
        else if (key == "mask.position_rate") train.position_mask_rate = to_dbl();
        else if (key == "train.learning_rate") train.learning_rate = to_dbl();
        else if (key == "train.weight_decay") train.weight_decay = to_dbl();
        else if (key == "train.epochs") train.epochs = to_int();
        else if (key == "train.batch_size") train.batch_size = to_int();
        else if (key == "train.grad_clip_norm") train.grad_clip_norm = to_dbl();
        else if (key == "train.seed") train.seed = static_cast<std::uint64_t>(to_ll());
        else if (key == "train.max_steps") max_steps = to_ll();
        else if (key == "finetune.learning_rate") finetune.learning_rate = to_dbl();
        else if (key == "finetune.epochs") finetune.epochs = to_int();
        else if (key == "finetune.batch_size") finetune.batch_size = to_int();
        else if (key == "eval.include_other") eval_include_other = to_bool();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }

    static RunConfig from_stream(std::istream& in) {
        RunConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::string t = detail::strip(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            cfg.apply(detail::strip(t.substr(0, eq)), detail::strip(t.substr(eq + 1)));
        }
        return cfg;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file " + path);
        return from_stream(in);
    }

    // Full effective configuration; re-reading this text reproduces the run.
    std::string echo() const {
        std::ostringstream os;
        os.precision(17);
        os << "model.vocab_size = " << model.vocab_size << '\n'
           << "model.hidden = " << model.hidden << '\n'
           << "model.layers = " << model.layers << '\n'
           << "model.heads = " << model.heads << '\n'
           << "model.max_seq_len = " << model.max_seq_len << '\n'
           << "model.grid_max = " << model.grid_max << '\n'
           << "model.use_height_width = " << (model.use_height_width ? "true" : "false") << '\n'
           << "model.pm_loss = " << (model.pm_loss == PmLoss::Classification ? "ce" : "reg")
           << '\n'
           << "model.lambda = " << model.lambda << '\n'
           << "model.dropout = " << model.dropout << '\n'
           << "model.smooth_l1_beta = " << model.smooth_l1_beta << '\n'
           << "model.tie_mlm_weights = " << (model.tie_mlm_weights ? "true" : "false") << '\n'
           << "mask.variant = " << model.pm_variant.name() << '\n'
           << "mask.token_rate = " << train.token_mask_rate << '\n'
           << "mask.position_rate = " << train.position_mask_rate << '\n'
           << "train.learning_rate = " << train.learning_rate << '\n'
           << "train.weight_decay = " << train.weight_decay << '\n'
           << "train.epochs = " << train.epochs << '\n'
           << "train.batch_size = " << train.batch_size << '\n'
           << "train.grad_clip_norm = " << train.grad_clip_norm << '\n'
           << "train.seed = " << train.seed << '\n'
           << "train.max_steps = " << max_steps << '\n'
           << "finetune.learning_rate = " << finetune.learning_rate << '\n'
           << "finetune.epochs = " << finetune.epochs << '\n'
           << "finetune.batch_size = " << finetune.batch_size << '\n'
           << "eval.include_other = " << (eval_include_other ? "true" : "false") << '\n';
        return os.str();
    }
};

}  // namespace posmask
