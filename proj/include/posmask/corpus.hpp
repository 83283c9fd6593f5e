#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <tuple>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/hocr.hpp"
#include "posmask/vocab.hpp"

namespace posmask {

// Token rectangle on the normalized [0, m] grid. Width/height are derived
// so they can never disagree with the corners.
struct BoundingBox {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    int w() const { return x2 - x1; }
    int h() const { return y2 - y1; }

    bool operator==(const BoundingBox&) const = default;
};

struct LayoutToken {
    int token_id = 0;
    int seq_position = 0;
    int segment = 0;  // always 0 in this model
    BoundingBox box;

    bool operator==(const LayoutToken&) const = default;
};

struct PageDocument {
    std::string source_id;
    int page_width = 0, page_height = 0;
    std::vector<LayoutToken> tokens;

    bool operator==(const PageDocument&) const = default;
};

// floor(pixel * m / extent), clamped to [0, m].
inline int normalize_coord(int pixel, int extent, int grid_max) {
    if (extent <= 0) throw std::invalid_argument("normalize_coord: page extent must be > 0");
    long long v = static_cast<long long>(pixel) * grid_max / extent;
    if (pixel < 0) v = 0;
    return static_cast<int>(std::clamp<long long>(v, 0, grid_max));
}

inline BoundingBox normalize_box(const RawWord& w, int page_width, int page_height,
                                 int grid_max = 1000) {
    BoundingBox b;
    b.x1 = normalize_coord(w.left, page_width, grid_max);
    b.y1 = normalize_coord(w.top, page_height, grid_max);
    b.x2 = normalize_coord(w.right, page_width, grid_max);
    b.y2 = normalize_coord(w.bottom, page_height, grid_max);
    return b;
}

// Word-piece tokenize a page. Sub-tokens inherit the whole word's box.
// Sequence is [CLS] pieces... [SEP], truncated to max_seq_len.
inline PageDocument tokenize_page(const std::vector<RawWord>& words, const Vocab& vocab,
                                  const std::string& source_id, int page_width, int page_height,
                                  int grid_max = 1000, int max_seq_len = 512) {
    PageDocument page;
    page.source_id = source_id;
    page.page_width = page_width;
    page.page_height = page_height;
    int budget = max_seq_len - 2;  // room for CLS and SEP
    page.tokens.push_back(LayoutToken{SpecialIds::CLS, 0, 0, BoundingBox{}});
    for (const auto& w : words) {
        if (budget <= 0) break;
        BoundingBox box = normalize_box(w, page_width, page_height, grid_max);
        for (int id : vocab.wordpiece(w.text)) {
            if (budget <= 0) break;
            page.tokens.push_back(
                LayoutToken{id, static_cast<int>(page.tokens.size()), 0, box});
            --budget;
        }
    }
    page.tokens.push_back(
        LayoutToken{SpecialIds::SEP, static_cast<int>(page.tokens.size()), 0, BoundingBox{}});
    return page;
}

// ---- manifest ----

struct ManifestRow {
    std::string source_id;
    int page_number = 0;
    std::uint64_t byte_size = 0;
    bool kept = false;

    bool operator==(const ManifestRow&) const = default;
};

// Tab-separated, sorted by (source_id, page_number); byte-identical across runs.
inline std::string write_manifest(std::vector<ManifestRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) {
        return std::tie(a.source_id, a.page_number) < std::tie(b.source_id, b.page_number);
    });
    std::ostringstream out;
    for (const auto& r : rows)
        out << r.source_id << '\t' << r.page_number << '\t' << r.byte_size << '\t'
            << (r.kept ? "kept" : "dropped") << '\n';
    return out.str();
}

inline std::vector<ManifestRow> read_manifest(std::istream& in) {
    std::vector<ManifestRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestRow r;
        std::string status;
        std::getline(ls, r.source_id, '\t');
        ls >> r.page_number >> r.byte_size >> status;
        r.kept = status == "kept";
        rows.push_back(r);
    }
    return rows;
}

// ---- corpus serialization ----
// One page per line: source_id \t id:x1,y1,x2,y2 id:x1,y1,x2,y2 ...

inline std::string page_to_record(const PageDocument& page) {
    std::ostringstream out;
    out << page.source_id << '\t' << page.page_width << 'x' << page.page_height << '\t';
    for (std::size_t i = 0; i < page.tokens.size(); ++i) {
        const auto& t = page.tokens[i];
        if (i) out << ' ';
        out << t.token_id << ':' << t.box.x1 << ',' << t.box.y1 << ',' << t.box.x2 << ','
            << t.box.y2;
    }
    return out.str();
}

inline PageDocument page_from_record(const std::string& line) {
    PageDocument page;
    std::istringstream ls(line);
    std::string dims, toks;
    std::getline(ls, page.source_id, '\t');
    std::getline(ls, dims, '\t');
    std::getline(ls, toks);
    if (sscanf(dims.c_str(), "%dx%d", &page.page_width, &page.page_height) != 2)
        throw std::runtime_error("corpus record: bad page dims '" + dims + "'");
    std::istringstream ts(toks);
    std::string tok;
    while (ts >> tok) {
        LayoutToken t;
        if (sscanf(tok.c_str(), "%d:%d,%d,%d,%d", &t.token_id, &t.box.x1, &t.box.y1, &t.box.x2,
                   &t.box.y2) != 5)
            throw std::runtime_error("corpus record: bad token '" + tok + "'");
        t.seq_position = static_cast<int>(page.tokens.size());
        page.tokens.push_back(t);
    }
    return page;
}

inline void write_corpus(const std::string& path, const std::vector<PageDocument>& pages) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus file " + path);
    for (const auto& p : pages) out << page_to_record(p) << '\n';
}

inline std::vector<PageDocument> read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus file " + path);
    std::vector<PageDocument> pages;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) pages.push_back(page_from_record(line));
    return pages;
}

}  // namespace posmask
