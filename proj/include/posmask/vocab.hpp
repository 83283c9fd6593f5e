#pragma once

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace posmask {

// Special token ids are fixed so corpora and checkpoints stay compatible.
struct SpecialIds {
    static constexpr int PAD = 0;
    static constexpr int UNK = 1;
    static constexpr int CLS = 2;
    static constexpr int SEP = 3;
    static constexpr int MASK = 4;
    static constexpr int COUNT = 5;
};

// Vocabulary with greedy longest-match word-piece tokenization.
// Continuation pieces use the "##" prefix.
class Vocab {
  public:
    Vocab() {
        add("[PAD]");
        add("[UNK]");
        add("[CLS]");
        add("[SEP]");
        add("[MASK]");
    }

    static Vocab from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("vocab: cannot open " + path);
        Vocab v;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
            if (!line.empty()) v.add(line);
        }
        return v;
    }

    // Builds a vocab from whole words (for synthetic data and tests).
    static Vocab from_words(const std::vector<std::string>& words) {
        Vocab v;
        for (const auto& w : words) v.add(w);
        return v;
    }

    int add(const std::string& piece) {
        auto it = id_.find(piece);
        if (it != id_.end()) return it->second;
        int id = static_cast<int>(pieces_.size());
        pieces_.push_back(piece);
        id_.emplace(piece, id);
        return id;
    }

    int lookup(const std::string& piece) const {
        auto it = id_.find(piece);
        return it == id_.end() ? -1 : it->second;
    }

    const std::string& piece(int id) const { return pieces_.at(id); }
    std::size_t size() const { return pieces_.size(); }

    // Greedy longest-match word-piece split of a single word. A word with
    // no valid segmentation maps to a single UNK.
    std::vector<int> wordpiece(const std::string& word) const {
        std::vector<int> out;
        std::size_t pos = 0;
        while (pos < word.size()) {
            std::size_t end = word.size();
            int found = -1;
            while (end > pos) {
                std::string cand = word.substr(pos, end - pos);
                if (pos > 0) cand = "##" + cand;
                int id = lookup(cand);
                if (id >= 0) {
                    found = id;
                    break;
                }
                --end;
            }
            if (found < 0) return {SpecialIds::UNK};
            out.push_back(found);
            pos = end;
        }
        if (out.empty()) out.push_back(SpecialIds::UNK);
        return out;
    }

  private:
    std::vector<std::string> pieces_;
    std::unordered_map<std::string, int> id_;
};

}  // namespace posmask
