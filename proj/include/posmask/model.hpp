#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/corpus.hpp"
#include "posmask/masking.hpp"
#include "posmask/rng.hpp"
#include "posmask/tape.hpp"

namespace posmask {

enum class PmLoss { Classification, Regression };

inline PmLoss parse_pm_loss(const std::string& s) {
    if (s == "ce" || s == "classification") return PmLoss::Classification;
    if (s == "reg" || s == "regression") return PmLoss::Regression;
    throw std::invalid_argument("unknown pm loss '" + s + "' (expected ce|reg)");
}

struct ModelConfig {
    int vocab_size = 50;
    int hidden = 64;
    int layers = 2;
    int heads = 4;
    int max_seq_len = 128;
    int grid_max = 1000;
    bool use_height_width = true;
    MaskVariant pm_variant = MaskVariant::None();
    PmLoss pm_loss = PmLoss::Classification;
    double lambda = 1.0;
    double dropout = 0.0;
    double smooth_l1_beta = 1.0;
    bool tie_mlm_weights = false;  // untied by default; flag recorded in checkpoints
    int num_labels = 0;            // fine-tune head size; 0 = no head

    void validate() const {
        if (hidden % heads != 0)
            throw std::invalid_argument("hidden size must be divisible by head count");
        if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
        if (!pm_variant.none() && use_height_width)
            throw std::invalid_argument(
                "position-masking configurations must disable height/width embeddings");
        if (vocab_size < SpecialIds::COUNT)
            throw std::invalid_argument("vocab size must cover the special tokens");
    }

    int head_dim() const { return hidden / heads; }
};

// Named parameter store. Order is fixed by construction, which makes
// checkpoints and optimizer state addressable by name.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Array> values;
    std::map<std::string, std::size_t> index;

    Array& add(const std::string& name, Array a) {
        if (index.count(name)) throw std::logic_error("duplicate parameter " + name);
        index[name] = names.size();
        names.push_back(name);
        values.push_back(std::move(a));
        return values.back();
    }

    Array& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw std::out_of_range("no parameter named " + name);
        return values[it->second];
    }
    const Array& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    bool has(const std::string& name) const { return index.count(name) != 0; }
    std::size_t size() const { return names.size(); }
};

inline const char* coord_name(Coord c) {
    switch (c) {
        case Coord::X1: return "x1";
        case Coord::Y1: return "y1";
        case Coord::X2: return "x2";
        case Coord::Y2: return "y2";
    }
    return "?";
}

// The layout-aware encoder model: embedding tables, transformer stack,
// MLM head and per-coordinate position heads.
struct Model {
    ModelConfig cfg;
    ParamStore params;

    static Model init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        Rng rng(seed);
        auto W = [&](const std::string& name, std::size_t r, std::size_t c) {
            Array a({r, c});
            for (auto& x : a.data) x = rng.truncated_normal(0.02);
            m.params.add(name, std::move(a));
        };
        auto zeros = [&](const std::string& name, std::size_t n) {
            m.params.add(name, Array({n}));
        };
        auto ones = [&](const std::string& name, std::size_t n) {
            m.params.add(name, Array({n}, 1.0));
        };
        std::size_t d = cfg.hidden, V = cfg.vocab_size, M = cfg.grid_max + 1;
        W("emb.token", V, d);
        W("emb.pos", cfg.max_seq_len, d);
        W("emb.seg", 2, d);
        W("emb.x", M, d);
        W("emb.y", M, d);
        W("emb.w", M, d);
        W("emb.h", M, d);
        ones("emb.ln.gain", d);
        zeros("emb.ln.bias", d);
        for (int l = 0; l < cfg.layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            W(p + "attn.wq", d, d);
            zeros(p + "attn.bq", d);
            W(p + "attn.wk", d, d);
            zeros(p + "attn.bk", d);
            W(p + "attn.wv", d, d);
            zeros(p + "attn.bv", d);
            W(p + "attn.wo", d, d);
            zeros(p + "attn.bo", d);
            ones(p + "ln1.gain", d);
            zeros(p + "ln1.bias", d);
            W(p + "ffn.w1", d, 4 * d);
            zeros(p + "ffn.b1", 4 * d);
            W(p + "ffn.w2", 4 * d, d);
            zeros(p + "ffn.b2", d);
            ones(p + "ln2.gain", d);
            zeros(p + "ln2.bias", d);
        }
        if (!cfg.tie_mlm_weights) W("mlm.w", d, V);
        zeros("mlm.b", V);
        if (!cfg.pm_variant.none()) {
            for (int c = 0; c < 4; ++c) {
                if (!cfg.pm_variant.coords[c]) continue;
                std::string p = std::string("pm.") + coord_name(static_cast<Coord>(c)) + ".";
                if (cfg.pm_loss == PmLoss::Classification) {
                    W(p + "w", d, M);
                    zeros(p + "b", M);
                } else {
                    W(p + "w", d, 1);
                    zeros(p + "b", 1);
                }
            }
        }
        if (cfg.num_labels > 0) {
            W("cls.w", d, cfg.num_labels);
            zeros("cls.b", cfg.num_labels);
        }
        return m;
    }

    // Adds (or replaces) the token-classification head for fine-tuning.
    void attach_classifier_head(int num_labels, std::uint64_t seed) {
        if (params.has("cls.w")) throw std::logic_error("classifier head already attached");
        cfg.num_labels = num_labels;
        Rng rng(seed);
        Array w({static_cast<std::size_t>(cfg.hidden), static_cast<std::size_t>(num_labels)});
        for (auto& x : w.data) x = rng.truncated_normal(0.02);
        params.add("cls.w", std::move(w));
        params.add("cls.b", Array({static_cast<std::size_t>(num_labels)}));
    }
};

// One forward/backward episode: wraps parameters as tape leaves on demand
// and reads gradients back out by name after backward().
class Forward {
  public:
    explicit Forward(Model& model) : model_(model) {}

    Tape& tape() { return tape_; }
    const ModelConfig& cfg() const { return model_.cfg; }

    Var p(const std::string& name) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) return it->second;
        Var v = tape_.leaf(model_.params.at(name));
        leaves_.emplace(name, v);
        return v;
    }

    bool touched(const std::string& name) const { return leaves_.count(name) != 0; }

    // Gradient of a parameter after backward(); zero array if the parameter
    // never entered the graph.
    Array gradient(const std::string& name) {
        auto it = leaves_.find(name);
        if (it == leaves_.end() || !tape_.has_grad(it->second))
            return Array::zeros_like(model_.params.at(name));
        return tape_.grad(it->second);
    }

    // ---- embedding (elementwise sum of the per-component tables) ----
    Var embed(const PageDocument& page) {
        const auto& cfg = model_.cfg;
        std::size_t T = page.tokens.size();
        if (static_cast<int>(T) > cfg.max_seq_len)
            throw std::invalid_argument("sequence length " + std::to_string(T) +
                                        " exceeds max_seq_len " +
                                        std::to_string(cfg.max_seq_len));
        std::vector<std::size_t> tok, pos, seg, x1, y1, x2, y2, w, h;
        auto coord_idx = [&](int v, const char* table) -> std::size_t {
            if (v < 0 || v > cfg.grid_max)
                throw std::out_of_range("coordinate " + std::to_string(v) +
                                        " out of range for " + table);
            return static_cast<std::size_t>(v);
        };
        for (const auto& t : page.tokens) {
            if (t.token_id < 0 || t.token_id >= cfg.vocab_size)
                throw std::out_of_range("token id " + std::to_string(t.token_id) +
                                        " out of range for emb.token");
            tok.push_back(t.token_id);
            pos.push_back(t.seq_position);
            seg.push_back(t.segment);
            x1.push_back(coord_idx(t.box.x1, "emb.x"));
            y1.push_back(coord_idx(t.box.y1, "emb.y"));
            x2.push_back(coord_idx(t.box.x2, "emb.x"));
            y2.push_back(coord_idx(t.box.y2, "emb.y"));
            if (cfg.use_height_width) {
                w.push_back(coord_idx(t.box.w(), "emb.w"));
                h.push_back(coord_idx(t.box.h(), "emb.h"));
            }
        }
        Var e = tape_.gather_rows(p("emb.token"), tok, "emb.token");
        e = tape_.add(e, tape_.gather_rows(p("emb.pos"), pos, "emb.pos"));
        e = tape_.add(e, tape_.gather_rows(p("emb.seg"), seg, "emb.seg"));
        e = tape_.add(e, tape_.gather_rows(p("emb.x"), x1, "emb.x"));
        e = tape_.add(e, tape_.gather_rows(p("emb.y"), y1, "emb.y"));
        e = tape_.add(e, tape_.gather_rows(p("emb.x"), x2, "emb.x"));
        e = tape_.add(e, tape_.gather_rows(p("emb.y"), y2, "emb.y"));
        if (cfg.use_height_width) {
            e = tape_.add(e, tape_.gather_rows(p("emb.w"), w, "emb.w"));
            e = tape_.add(e, tape_.gather_rows(p("emb.h"), h, "emb.h"));
        }
        return e;
    }

    // Post-norm transformer encoder. `valid` restricts attention to the
    // first `valid` positions (0 = all); pad rows never feed real rows.
    Var encode(Var x, std::size_t valid = 0) {
        const auto& cfg = model_.cfg;
        if (cfg.layers > 0) x = tape_.layer_norm(x, p("emb.ln.gain"), p("emb.ln.bias"));
        double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
        for (int l = 0; l < cfg.layers; ++l) {
            std::string pre = "layer" + std::to_string(l) + ".";
            Var q = tape_.add_row(tape_.matmul(x, p(pre + "attn.wq")), p(pre + "attn.bq"));
            Var k = tape_.add_row(tape_.matmul(x, p(pre + "attn.wk")), p(pre + "attn.bk"));
            Var v = tape_.add_row(tape_.matmul(x, p(pre + "attn.wv")), p(pre + "attn.bv"));
            std::vector<Var> heads;
            for (int hd = 0; hd < cfg.heads; ++hd) {
                std::size_t c0 = hd * cfg.head_dim(), c1 = c0 + cfg.head_dim();
                Var qh = tape_.slice_cols(q, c0, c1);
                Var kh = tape_.slice_cols(k, c0, c1);
                Var vh = tape_.slice_cols(v, c0, c1);
                Var scores = tape_.scale(tape_.matmul_bt(qh, kh), scale);
                Var attn = tape_.softmax_rows(scores, valid);
                heads.push_back(tape_.matmul(attn, vh));
            }
            Var ctx = tape_.concat_cols(heads);
            Var attn_out = tape_.add_row(tape_.matmul(ctx, p(pre + "attn.wo")), p(pre + "attn.bo"));
            x = tape_.layer_norm(tape_.add(x, attn_out), p(pre + "ln1.gain"), p(pre + "ln1.bias"));
            Var h1 = tape_.gelu(
                tape_.add_row(tape_.matmul(x, p(pre + "ffn.w1")), p(pre + "ffn.b1")));
            Var h2 = tape_.add_row(tape_.matmul(h1, p(pre + "ffn.w2")), p(pre + "ffn.b2"));
            x = tape_.layer_norm(tape_.add(x, h2), p(pre + "ln2.gain"), p(pre + "ln2.bias"));
        }
        return x;
    }

    Var mlm_logits(Var hidden) {
        Var w = model_.cfg.tie_mlm_weights ? Var{} : p("mlm.w");
        if (model_.cfg.tie_mlm_weights)
            return tape_.add_row(tape_.matmul_bt(hidden, p("emb.token")), p("mlm.b"));
        return tape_.add_row(tape_.matmul(hidden, w), p("mlm.b"));
    }

    // Summed MLM cross entropy over j in J plus the count (callers divide).
    std::pair<Var, std::size_t> mlm_loss_sum(Var hidden, const PageDocument& page,
                                             const MaskPlan& plan) {
        std::vector<int> targets(page.tokens.size(), -1);
        for (const auto& e : plan.token_masks) targets[e.index] = e.original_id;
        std::size_t count = plan.token_masks.size();
        if (count == 0) return {tape_.leaf(Array({1})), 0};
        Var logits = mlm_logits(hidden);
        return {tape_.softmax_ce_sum(logits, targets, -1), count};
    }

    Var mlm_loss(Var hidden, const PageDocument& page, const MaskPlan& plan) {
        auto [s, n] = mlm_loss_sum(hidden, page, plan);
        return n == 0 ? s : tape_.scale(s, 1.0 / static_cast<double>(n));
    }

    // Summed position-masking loss over k in K and all masked coordinates,
    // plus the number of (k, coordinate) terms.
    std::pair<Var, std::size_t> pm_loss_sum(Var hidden, const MaskPlan& plan) {
        const auto& cfg = model_.cfg;
        if (cfg.pm_variant.none())
            throw std::logic_error("pm_loss requires a position-masking variant");
        if (plan.position_masks.empty()) return {tape_.leaf(Array({1})), 0};
        std::vector<std::size_t> rows;
        for (const auto& e : plan.position_masks) rows.push_back(e.index);
        Var sel = tape_.gather_rows(hidden, rows, "hidden");
        Var total{};
        std::size_t terms = 0;
        for (int c = 0; c < 4; ++c) {
            if (!cfg.pm_variant.coords[c]) continue;
            Coord coord = static_cast<Coord>(c);
            std::string pre = std::string("pm.") + coord_name(coord) + ".";
            Var part{};
            if (cfg.pm_loss == PmLoss::Classification) {
                Var logits = tape_.add_row(tape_.matmul(sel, p(pre + "w")), p(pre + "b"));
                std::vector<int> targets;
                for (const auto& e : plan.position_masks)
                    targets.push_back(original_coord(e.original, coord));
                part = tape_.softmax_ce_sum(logits, targets, -1);
            } else {
                Var z = tape_.add_row(tape_.matmul(sel, p(pre + "w")), p(pre + "b"));
                Var pred = tape_.sigmoid(z);
                std::vector<double> targets;
                for (const auto& e : plan.position_masks)
                    targets.push_back(static_cast<double>(original_coord(e.original, coord)) /
                                      cfg.grid_max);
                // smooth_l1 here is a mean; rescale back to a sum over k
                part = tape_.scale(
                    tape_.smooth_l1(pred, targets, cfg.smooth_l1_beta),
                    static_cast<double>(plan.position_masks.size()));
            }
            total = total.valid() ? tape_.add(total, part) : part;
            terms += plan.position_masks.size();
        }
        return {total, terms};
    }

    // Mean over k in K, averaged over the coordinates in the variant subset.
    Var pm_loss(Var hidden, const MaskPlan& plan) {
        auto [s, n] = pm_loss_sum(hidden, plan);
        return n == 0 ? s : tape_.scale(s, 1.0 / static_cast<double>(n));
    }

    Var combined_loss(Var mlm, Var pm, double lambda) {
        return tape_.add(mlm, tape_.scale(pm, lambda));
    }

    Var token_classifier_logits(Var hidden) {
        return tape_.add_row(tape_.matmul(hidden, p("cls.w")), p("cls.b"));
    }

  private:
    Model& model_;
    Tape tape_;
    std::map<std::string, Var> leaves_;
};

// Losses for one pre-training batch (mean over all masked terms in the
// batch). Pages are forwarded independently; no cross-page attention.
struct BatchLosses {
    Var mlm;
    Var pm;
    Var combined;
    double mlm_value = 0.0;
    double pm_value = 0.0;
    double combined_value = 0.0;
};

inline BatchLosses pretrain_batch_loss(Forward& fwd, const std::vector<PageDocument>& masked_pages,
                                       const std::vector<MaskPlan>& plans) {
    Tape& t = fwd.tape();
    const auto& cfg = fwd.cfg();
    Var mlm_sum{}, pm_sum{};
    std::size_t mlm_n = 0, pm_n = 0;
    for (std::size_t i = 0; i < masked_pages.size(); ++i) {
        Var h = fwd.encode(fwd.embed(masked_pages[i]));
        auto [ms, mn] = fwd.mlm_loss_sum(h, masked_pages[i], plans[i]);
        if (mn > 0) {
            mlm_sum = mlm_sum.valid() ? t.add(mlm_sum, ms) : ms;
            mlm_n += mn;
        }
        if (!cfg.pm_variant.none()) {
            auto [ps, pn] = fwd.pm_loss_sum(h, plans[i]);
            if (pn > 0) {
                pm_sum = pm_sum.valid() ? t.add(pm_sum, ps) : ps;
                pm_n += pn;
            }
        }
    }
    BatchLosses out;
    out.mlm = mlm_n ? t.scale(mlm_sum, 1.0 / static_cast<double>(mlm_n)) : t.leaf(Array({1}));
    out.pm = pm_n ? t.scale(pm_sum, 1.0 / static_cast<double>(pm_n)) : t.leaf(Array({1}));
    out.combined = fwd.combined_loss(out.mlm, out.pm, cfg.lambda);
    out.mlm_value = t.value(out.mlm).data[0];
    out.pm_value = t.value(out.pm).data[0];
    out.combined_value = t.value(out.combined).data[0];
    return out;
}

}  // namespace posmask
