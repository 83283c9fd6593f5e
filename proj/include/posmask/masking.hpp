#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/corpus.hpp"
#include "posmask/rng.hpp"
#include "posmask/vocab.hpp"

namespace posmask {

enum class Coord { X1 = 0, Y1 = 1, X2 = 2, Y2 = 3 };

// Which box coordinates a position-masking configuration hides.
struct MaskVariant {
    std::array<bool, 4> coords{};  // indexed by Coord

    bool masks(Coord c) const { return coords[static_cast<int>(c)]; }
    int count() const {
        int n = 0;
        for (bool b : coords) n += b;
        return n;
    }
    bool none() const { return count() == 0; }

    static MaskVariant None() { return {}; }
    static MaskVariant X1() { return {{true, false, false, false}}; }
    static MaskVariant X1Y1() { return {{true, true, false, false}}; }
    static MaskVariant X2Y2() { return {{false, false, true, true}}; }
    static MaskVariant Full() { return {{true, true, true, true}}; }

    static MaskVariant parse(const std::string& s) {
        if (s == "none") return None();
        if (s == "x1") return X1();
        if (s == "x1y1") return X1Y1();
        if (s == "x2y2") return X2Y2();
        if (s == "full") return Full();
        throw std::invalid_argument("unknown mask variant '" + s +
                                    "' (expected x1|x1y1|x2y2|full|none)");
    }

    std::string name() const {
        if (none()) return "none";
        if (coords == X1().coords) return "x1";
        if (coords == X1Y1().coords) return "x1y1";
        if (coords == X2Y2().coords) return "x2y2";
        if (coords == Full().coords) return "full";
        std::string s;
        const char* names[4] = {"x1", "y1", "x2", "y2"};
        for (int i = 0; i < 4; ++i)
            if (coords[i]) s += names[i];
        return s;
    }
};

enum class TokenAction { Mask, Random, Keep };

struct TokenMaskEntry {
    int index = 0;            // sequence index j
    int original_id = 0;      // recorded before replacement
    TokenAction action = TokenAction::Mask;
    int random_id = -1;       // sampled replacement when action == Random
};

struct PositionMaskEntry {
    int index = 0;            // sequence index k
    BoundingBox original;     // full original box, targets read per variant coord
};

// Sampled mask sets J (tokens) and K (positions). J and K are sampled
// independently; overlap is allowed.
struct MaskPlan {
    std::vector<TokenMaskEntry> token_masks;     // J
    std::vector<PositionMaskEntry> position_masks;  // K
    MaskVariant variant;
};

inline bool is_special_token(int id) { return id < SpecialIds::COUNT; }

inline int original_coord(const BoundingBox& b, Coord c) {
    switch (c) {
        case Coord::X1: return b.x1;
        case Coord::Y1: return b.y1;
        case Coord::X2: return b.x2;
        case Coord::Y2: return b.y2;
    }
    return 0;
}

// Each eligible index enters J with probability token_rate and K with
// probability position_rate, independently. 80/10/10 mask/random/keep for J.
inline MaskPlan sample_mask_plan(const PageDocument& page, double token_rate,
                                 double position_rate, MaskVariant variant, int vocab_size,
                                 std::uint64_t seed) {
    if (token_rate < 0 || token_rate > 1 || position_rate < 0 || position_rate > 1)
        throw std::invalid_argument("mask rates must be in [0, 1]");
    MaskPlan plan;
    plan.variant = variant;
    // Separate streams keep J independent of K and keep J identical across
    // configurations that differ only in the position-masking setup.
    Rng rng_tok(Rng::mix(seed, 0xA11CE));
    Rng rng_pos(Rng::mix(seed, 0xB0B));
    for (const auto& tok : page.tokens) {
        if (is_special_token(tok.token_id)) continue;
        if (rng_tok.bernoulli(token_rate)) {
            TokenMaskEntry e;
            e.index = tok.seq_position;
            e.original_id = tok.token_id;
            double r = rng_tok.uniform();
            if (r < 0.8) {
                e.action = TokenAction::Mask;
            } else if (r < 0.9) {
                e.action = TokenAction::Random;
                e.random_id = static_cast<int>(rng_tok.uniform_int(vocab_size));
            } else {
                e.action = TokenAction::Keep;
            }
            plan.token_masks.push_back(e);
        }
        if (!variant.none() && rng_pos.bernoulli(position_rate))
            plan.position_masks.push_back(PositionMaskEntry{tok.seq_position, tok.box});
    }
    return plan;
}

inline void apply_token_mask(PageDocument& page, const MaskPlan& plan) {
    for (const auto& e : plan.token_masks) {
        auto& tok = page.tokens.at(e.index);
        switch (e.action) {
            case TokenAction::Mask: tok.token_id = SpecialIds::MASK; break;
            case TokenAction::Random: tok.token_id = e.random_id; break;
            case TokenAction::Keep: break;
        }
    }
}

// Masked coordinates are set to the grid maximum m; everything else is
// left untouched.
inline void apply_position_mask(PageDocument& page, const MaskPlan& plan, int grid_max) {
    for (const auto& e : plan.position_masks) {
        auto& box = page.tokens.at(e.index).box;
        if (plan.variant.masks(Coord::X1)) box.x1 = grid_max;
        if (plan.variant.masks(Coord::Y1)) box.y1 = grid_max;
        if (plan.variant.masks(Coord::X2)) box.x2 = grid_max;
        if (plan.variant.masks(Coord::Y2)) box.y2 = grid_max;
    }
}

// Inverse of apply_token_mask + apply_position_mask; used to verify that
// targets capture everything the masking destroyed.
inline PageDocument replay_original(PageDocument masked, const MaskPlan& plan) {
    for (const auto& e : plan.token_masks) masked.tokens.at(e.index).token_id = e.original_id;
    for (const auto& e : plan.position_masks) {
        auto& box = masked.tokens.at(e.index).box;
        if (plan.variant.masks(Coord::X1)) box.x1 = e.original.x1;
        if (plan.variant.masks(Coord::Y1)) box.y1 = e.original.y1;
        if (plan.variant.masks(Coord::X2)) box.x2 = e.original.x2;
        if (plan.variant.masks(Coord::Y2)) box.y2 = e.original.y2;
    }
    return masked;
}

}  // namespace posmask
