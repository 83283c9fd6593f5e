#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "posmask/corpus.hpp"
#include "posmask/vocab.hpp"

namespace posmask {

// BIO label ids over the four FUNSD entity types.
struct BioLabels {
    static constexpr int O = 0;
    static constexpr int IGNORE = -1;  // continuation sub-tokens and specials
    static constexpr int COUNT = 9;    // O + {B,I} x {HEADER, QUESTION, ANSWER, OTHER}

    static const std::vector<std::string>& entity_types() {
        static const std::vector<std::string> types = {"header", "question", "answer", "other"};
        return types;
    }

    static int entity_index(const std::string& label) {
        const auto& types = entity_types();
        for (std::size_t i = 0; i < types.size(); ++i)
            if (types[i] == label) return static_cast<int>(i);
        return -1;
    }

    static int begin(int entity) { return 1 + 2 * entity; }
    static int inside(int entity) { return 2 + 2 * entity; }

    static bool is_begin(int id) { return id > 0 && id % 2 == 1; }
    static bool is_inside(int id) { return id > 0 && id % 2 == 0; }
    static int entity_of(int id) { return id <= 0 ? -1 : (id - 1) / 2; }

    static std::string name(int id) {
        if (id == O) return "O";
        if (id == IGNORE) return "IGN";
        return std::string(is_begin(id) ? "B-" : "I-") + entity_types()[entity_of(id)];
    }
};

// A page with per-token gold BIO labels, aligned with page.tokens.
struct TaggedPage {
    PageDocument page;
    std::vector<int> labels;
    int skipped_entities = 0;  // entities with empty word lists
};

struct FunsdWord {
    std::string text;
    RawWord raw;  // text + pixel box
};

// Parses one FUNSD annotation document (the {"form": [...]} layout) into a
// tagged, tokenized page. First sub-token of each word carries the tag;
// continuations are ignored in loss and scoring.
inline TaggedPage load_funsd_page(const nlohmann::json& doc, const Vocab& vocab,
                                  const std::string& source_id, int page_width, int page_height,
                                  int grid_max = 1000, int max_seq_len = 512) {
    if (!doc.contains("form")) throw std::runtime_error("FUNSD json: missing 'form' array");
    if (doc.contains("img")) {
        page_width = doc["img"].value("width", page_width);
        page_height = doc["img"].value("height", page_height);
    }
    TaggedPage out;
    out.page.source_id = source_id;
    out.page.page_width = page_width;
    out.page.page_height = page_height;
    out.page.tokens.push_back(LayoutToken{SpecialIds::CLS, 0, 0, BoundingBox{}});
    out.labels.push_back(BioLabels::IGNORE);
    int budget = max_seq_len - 2;

    for (const auto& entity : doc["form"]) {
        std::string label = entity.value("label", "");
        int ent = BioLabels::entity_index(label);
        if (ent < 0) throw std::runtime_error("FUNSD json: unknown label '" + label + "'");
        bool first_word = true;
        int words_used = 0;
        for (const auto& w : entity["words"]) {
            std::string text = w.value("text", "");
            if (detail::strip(text).empty()) continue;
            if (!w.contains("box") || w["box"].size() != 4)
                throw std::runtime_error("FUNSD json: word without box in '" + source_id + "'");
            RawWord rw;
            rw.text = detail::strip(text);
            rw.left = w["box"][0];
            rw.top = w["box"][1];
            rw.right = w["box"][2];
            rw.bottom = w["box"][3];
            BoundingBox box = normalize_box(rw, page_width, page_height, grid_max);
            bool first_piece = true;
            for (int id : vocab.wordpiece(rw.text)) {
                if (budget <= 0) break;
                out.page.tokens.push_back(
                    LayoutToken{id, static_cast<int>(out.page.tokens.size()), 0, box});
                if (first_piece)
                    out.labels.push_back(first_word ? BioLabels::begin(ent)
                                                    : BioLabels::inside(ent));
                else
                    out.labels.push_back(BioLabels::IGNORE);
                first_piece = false;
                --budget;
            }
            first_word = false;
            ++words_used;
        }
        if (words_used == 0) ++out.skipped_entities;
    }
    out.page.tokens.push_back(
        LayoutToken{SpecialIds::SEP, static_cast<int>(out.page.tokens.size()), 0, BoundingBox{}});
    out.labels.push_back(BioLabels::IGNORE);
    return out;
}

inline TaggedPage load_funsd_file(const std::string& path, const Vocab& vocab, int page_width,
                                  int page_height, int grid_max = 1000, int max_seq_len = 512) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open FUNSD file " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    auto slash = path.find_last_of('/');
    std::string source_id = slash == std::string::npos ? path : path.substr(slash + 1);
    return load_funsd_page(doc, vocab, source_id, page_width, page_height, grid_max, max_seq_len);
}

}  // namespace posmask
