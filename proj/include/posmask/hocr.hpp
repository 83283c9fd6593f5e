#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace posmask {

// One OCR word in page pixel coordinates, exactly as the hOCR bbox says.
struct RawWord {
    std::string text;
    int left = 0, top = 0, right = 0, bottom = 0;
};

struct HocrPage {
    std::vector<RawWord> words;
    int width = 0, height = 0;
};

struct HocrResult {
    std::vector<HocrPage> pages;
    int skipped_words = 0;  // malformed or invariant-violating bbox attributes
};

namespace detail {

inline std::string strip(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string unescape_entities(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == '&') {
            auto semi = s.find(';', i);
            if (semi != std::string::npos && semi - i <= 8) {
                std::string ent = s.substr(i + 1, semi - i - 1);
                if (ent == "amp") { out += '&'; i = semi + 1; continue; }
                if (ent == "lt") { out += '<'; i = semi + 1; continue; }
                if (ent == "gt") { out += '>'; i = semi + 1; continue; }
                if (ent == "quot") { out += '"'; i = semi + 1; continue; }
                if (ent == "apos" || ent == "#39") { out += '\''; i = semi + 1; continue; }
            }
        }
        out += s[i++];
    }
    return out;
}

// Parses "bbox x1 y1 x2 y2" out of an hOCR title attribute.
inline std::optional<std::array<int, 4>> parse_bbox(const std::string& title) {
    auto p = title.find("bbox");
    if (p == std::string::npos) return std::nullopt;
    p += 4;
    std::array<int, 4> box{};
    for (int i = 0; i < 4; ++i) {
        while (p < title.size() && std::isspace(static_cast<unsigned char>(title[p]))) ++p;
        bool neg = false;
        if (p < title.size() && title[p] == '-') { neg = true; ++p; }
        if (p >= title.size() || !std::isdigit(static_cast<unsigned char>(title[p])))
            return std::nullopt;
        long v = 0;
        while (p < title.size() && std::isdigit(static_cast<unsigned char>(title[p])))
            v = v * 10 + (title[p++] - '0');
        box[i] = static_cast<int>(neg ? -v : v);
    }
    return box;
}

struct Tag {
    std::string name;
    std::string cls;
    std::string title;
    std::size_t content_begin = 0;  // offset just past '>'
    bool closing = false;
};

inline std::string attr_value(const std::string& tag, const std::string& attr) {
    std::size_t p = 0;
    while ((p = tag.find(attr, p)) != std::string::npos) {
        std::size_t q = p + attr.size();
        while (q < tag.size() && std::isspace(static_cast<unsigned char>(tag[q]))) ++q;
        if (q < tag.size() && tag[q] == '=') {
            ++q;
            while (q < tag.size() && std::isspace(static_cast<unsigned char>(tag[q]))) ++q;
            if (q < tag.size() && (tag[q] == '"' || tag[q] == '\'')) {
                char quote = tag[q++];
                auto end = tag.find(quote, q);
                if (end != std::string::npos) return tag.substr(q, end - q);
            }
        }
        p = q;
    }
    return {};
}

}  // namespace detail

// Minimal scanner for Tesseract-style hOCR. Tracks ocr_page and ocrx_word
// elements; everything else is ignored. Words are emitted in document order.
inline HocrResult parse_hocr(const std::string& html) {
    using namespace detail;
    HocrResult result;
    std::size_t pos = 0;
    while ((pos = html.find('<', pos)) != std::string::npos) {
        std::size_t end = html.find('>', pos);
        if (end == std::string::npos) break;
        std::string tag = html.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty() || tag[0] == '!' || tag[0] == '?' || tag[0] == '/') continue;

        std::string cls = attr_value(tag, "class");
        if (cls.find("ocr_page") != std::string::npos) {
            HocrPage page;
            auto bbox = parse_bbox(attr_value(tag, "title"));
            if (bbox) {
                page.width = (*bbox)[2];
                page.height = (*bbox)[3];
            }
            result.pages.push_back(page);
        } else if (cls.find("ocrx_word") != std::string::npos) {
            // inner text runs to the next '<' (Tesseract words have flat content,
            // modulo inline <strong>/<em> which we strip by skipping tags)
            std::string text;
            std::size_t p = pos;
            while (p < html.size()) {
                if (html[p] == '<') {
                    std::size_t e = html.find('>', p);
                    if (e == std::string::npos) break;
                    std::string inner = html.substr(p + 1, e - p - 1);
                    if (!inner.empty() && inner[0] == '/' &&
                        (inner.find("span") != std::string::npos || inner.find("p") == 0))
                        break;
                    p = e + 1;
                    continue;
                }
                text += html[p++];
            }
            text = strip(unescape_entities(text));
            if (text.empty()) continue;  // whitespace-only word
            auto bbox = parse_bbox(attr_value(tag, "title"));
            if (!bbox || (*bbox)[0] > (*bbox)[2] || (*bbox)[1] > (*bbox)[3]) {
                ++result.skipped_words;
                continue;
            }
            if (result.pages.empty()) continue;  // word outside any page
            result.pages.back().words.push_back(
                RawWord{text, (*bbox)[0], (*bbox)[1], (*bbox)[2], (*bbox)[3]});
        }
    }
    return result;
}

// Corpus size filter: keep only files at or above the byte threshold
// (default 1800; tiny hOCR files are OCR noise, not real pages).
template <typename NameSize>
std::vector<NameSize> filter_small_pages(const std::vector<NameSize>& files,
                                         std::uint64_t min_bytes = 1800) {
    std::vector<NameSize> kept;
    for (const auto& f : files)
        if (f.second >= min_bytes) kept.push_back(f);
    return kept;
}

}  // namespace posmask
