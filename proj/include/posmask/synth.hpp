#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posmask/corpus.hpp"
#include "posmask/funsd.hpp"
#include "posmask/masking.hpp"
#include "posmask/rng.hpp"
#include "posmask/vocab.hpp"

namespace posmask {

// Synthetic desk-scale data where token identity correlates with page
// position: the page is a cell grid and each cell owns a band of the
// vocabulary. Both masking tasks are learnable from such pages.

inline Vocab make_synthetic_vocab(int content_words) {
    std::vector<std::string> words;
    for (int i = 0; i < content_words; ++i) words.push_back("w" + std::to_string(i));
    return Vocab::from_words(words);
}

inline PageDocument make_synthetic_page(int n_tokens, int vocab_size, int grid_max,
                                        std::uint64_t seed, const std::string& source_id = "synth",
                                        int cells = 4) {
    Rng rng(seed);
    PageDocument page;
    page.source_id = source_id;
    page.page_width = grid_max;
    page.page_height = grid_max;
    page.tokens.push_back(LayoutToken{SpecialIds::CLS, 0, 0, BoundingBox{}});
    int content = vocab_size - SpecialIds::COUNT;
    int per_cell = std::max(1, content / (cells * cells));
    int cell_extent = grid_max / cells;
    for (int i = 0; i < n_tokens; ++i) {
        int cx = static_cast<int>(rng.uniform_int(cells));
        int cy = static_cast<int>(rng.uniform_int(cells));
        int cell = cy * cells + cx;
        int word = cell * per_cell + static_cast<int>(rng.uniform_int(per_cell));
        BoundingBox box;
        int wbox = cell_extent / 4 + static_cast<int>(rng.uniform_int(cell_extent / 4));
        int hbox = cell_extent / 8 + 1;
        box.x1 = cx * cell_extent + static_cast<int>(rng.uniform_int(cell_extent - wbox));
        box.y1 = cy * cell_extent + static_cast<int>(rng.uniform_int(cell_extent - hbox));
        box.x2 = box.x1 + wbox;
        box.y2 = box.y1 + hbox;
        page.tokens.push_back(LayoutToken{SpecialIds::COUNT + (word % content),
                                          static_cast<int>(page.tokens.size()), 0, box});
    }
    page.tokens.push_back(
        LayoutToken{SpecialIds::SEP, static_cast<int>(page.tokens.size()), 0, BoundingBox{}});
    return page;
}

inline std::vector<PageDocument> make_synthetic_corpus(int pages, int tokens_per_page,
                                                       int vocab_size, int grid_max,
                                                       std::uint64_t seed) {
    std::vector<PageDocument> corpus;
    for (int p = 0; p < pages; ++p)
        corpus.push_back(make_synthetic_page(tokens_per_page, vocab_size, grid_max,
                                             Rng::mix(seed, p),
                                             "synth" + std::to_string(p)));
    return corpus;
}

// Entity label as a deterministic function of position: top band is header,
// left half is question, right half is answer, bottom band is other.
inline int position_entity(const BoundingBox& box, int grid_max) {
    if (box.y1 < grid_max / 8) return BioLabels::entity_index("header");
    if (box.y1 >= grid_max - grid_max / 8) return BioLabels::entity_index("other");
    return box.x1 < grid_max / 2 ? BioLabels::entity_index("question")
                                 : BioLabels::entity_index("answer");
}

// Each content token is a one-token entity whose type is position_entity().
inline TaggedPage make_position_tagged_page(int n_tokens, int vocab_size, int grid_max,
                                            std::uint64_t seed,
                                            const std::string& source_id = "tagged") {
    TaggedPage tp;
    tp.page = make_synthetic_page(n_tokens, vocab_size, grid_max, seed, source_id);
    for (const auto& tok : tp.page.tokens) {
        if (is_special_token(tok.token_id))
            tp.labels.push_back(BioLabels::IGNORE);
        else
            tp.labels.push_back(BioLabels::begin(position_entity(tok.box, grid_max)));
    }
    return tp;
}

inline std::vector<TaggedPage> make_position_tagged_pages(int pages, int tokens_per_page,
                                                          int vocab_size, int grid_max,
                                                          std::uint64_t seed) {
    std::vector<TaggedPage> out;
    for (int p = 0; p < pages; ++p)
        out.push_back(make_position_tagged_page(tokens_per_page, vocab_size, grid_max,
                                                Rng::mix(seed, 0x7a6 + p),
                                                "tagged" + std::to_string(p)));
    return out;
}

}  // namespace posmask
