#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "posmask/funsd.hpp"

namespace posmask {

// Inclusive token span of one decoded entity.
struct EntitySpan {
    int entity = 0;  // index into BioLabels::entity_types()
    int start = 0;
    int end = 0;

    auto operator<=>(const EntitySpan&) const = default;
};

// BIO decode with conventional repair: an I-X with no open X span starts a
// new X entity; O closes any span. Ignored positions close spans too.
inline std::vector<EntitySpan> decode_entities(const std::vector<int>& labels) {
    std::vector<EntitySpan> spans;
    int open = -1, start = 0;
    auto close = [&](int at) {
        if (open >= 0) spans.push_back(EntitySpan{open, start, at});
        open = -1;
    };
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int id = labels[i];
        if (id <= 0) {
            close(static_cast<int>(i) - 1);
            continue;
        }
        int ent = BioLabels::entity_of(id);
        if (BioLabels::is_begin(id) || ent != open) {
            close(static_cast<int>(i) - 1);
            open = ent;
            start = static_cast<int>(i);
        }
        // I-X continuing an open X span: nothing to do
    }
    close(static_cast<int>(labels.size()) - 1);
    return spans;
}

// Gold spans re-encoded as BIO (round-trip partner of decode_entities).
inline std::vector<int> encode_entities(const std::vector<EntitySpan>& spans, std::size_t len) {
    std::vector<int> labels(len, BioLabels::O);
    for (const auto& s : spans) {
        labels[s.start] = BioLabels::begin(s.entity);
        for (int i = s.start + 1; i <= s.end; ++i) labels[i] = BioLabels::inside(s.entity);
    }
    return labels;
}

struct Scores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long long tp = 0, pred = 0, gold = 0;
};

// Exact-match entity scoring, micro-averaged over pages. A prediction is a
// true positive iff label, start, and end all equal a gold span.
inline Scores score_entities(const std::vector<std::vector<EntitySpan>>& gold,
                             const std::vector<std::vector<EntitySpan>>& pred,
                             bool include_other = true) {
    Scores s;
    int other = BioLabels::entity_index("other");
    for (std::size_t p = 0; p < gold.size(); ++p) {
        std::set<EntitySpan> gset;
        for (const auto& g : gold[p])
            if (include_other || g.entity != other) gset.insert(g);
        s.gold += static_cast<long long>(gset.size());
        for (const auto& q : pred[p]) {
            if (!include_other && q.entity == other) continue;
            ++s.pred;
            if (gset.count(q)) ++s.tp;
        }
    }
    s.precision = s.pred ? static_cast<double>(s.tp) / s.pred : 0.0;
    s.recall = s.gold ? static_cast<double>(s.tp) / s.gold : 0.0;
    s.f1 = (s.precision + s.recall) > 0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

// Per-run scores plus cross-run mean and standard deviation (sample std,
// matching the usual multi-seed reporting convention).
struct MetricsReport {
    std::vector<Scores> runs;

    double mean_f1() const { return mean([](const Scores& s) { return s.f1; }); }
    double mean_precision() const { return mean([](const Scores& s) { return s.precision; }); }
    double mean_recall() const { return mean([](const Scores& s) { return s.recall; }); }
    double std_f1() const { return stdev([](const Scores& s) { return s.f1; }); }

    std::vector<double> f1s() const {
        std::vector<double> out;
        for (const auto& r : runs) out.push_back(r.f1);
        return out;
    }

    template <typename F>
    double mean(F field) const {
        if (runs.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : runs) s += field(r);
        return s / runs.size();
    }

    template <typename F>
    double stdev(F field) const {
        if (runs.size() < 2) return 0.0;
        double m = mean(field);
        double s = 0.0;
        for (const auto& r : runs) s += (field(r) - m) * (field(r) - m);
        return std::sqrt(s / (runs.size() - 1));
    }

    std::string to_text() const {
        std::ostringstream os;
        os.precision(6);
        os << std::fixed;
        os << "run\tprecision\trecall\tf1\n";
        for (std::size_t i = 0; i < runs.size(); ++i)
            os << i << '\t' << runs[i].precision << '\t' << runs[i].recall << '\t' << runs[i].f1
               << '\n';
        os << "mean\t" << mean_precision() << '\t' << mean_recall() << '\t' << mean_f1() << '\n';
        os << "std_f1\t" << std_f1() << '\n';
        return os.str();
    }
};

inline MetricsReport parse_metrics_report(std::istream& in) {
    MetricsReport rep;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        std::getline(ls, tag, '\t');
        if (tag.empty() || tag == "run" || tag == "mean" || tag == "std_f1") continue;
        Scores s;
        ls >> s.precision >> s.recall >> s.f1;
        rep.runs.push_back(s);
    }
    return rep;
}

}  // namespace posmask
