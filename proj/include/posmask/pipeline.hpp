#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/checkpoint.hpp"
#include "posmask/config.hpp"
#include "posmask/corpus.hpp"
#include "posmask/eval.hpp"
#include "posmask/finetune.hpp"
#include "posmask/funsd.hpp"
#include "posmask/hocr.hpp"
#include "posmask/stats.hpp"
#include "posmask/train.hpp"

namespace posmask {

namespace fs = std::filesystem;

// Creates the output directory; refuses to reuse a non-empty one unless
// forced (subcommands are idempotent with respect to --out).
inline void prepare_out_dir(const std::string& out, bool force) {
    fs::path p(out);
    if (fs::exists(p) && !fs::is_empty(p) && !force)
        throw std::runtime_error("output directory " + out +
                                 " is not empty (use --force to overwrite)");
    fs::create_directories(p);
}

inline std::vector<fs::path> sorted_files(const std::string& dir,
                                          const std::vector<std::string>& exts) {
    if (!fs::exists(dir)) throw std::runtime_error("no such directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        if (std::find(exts.begin(), exts.end(), ext) != exts.end()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

struct IngestStats {
    int files = 0;
    int pages_kept = 0;
    int pages_dropped = 0;
    int words_skipped = 0;
};

// hOCR directory -> corpus.txt + manifest.tsv. The byte-size filter runs
// per hOCR file (one file per OCR'd page image, Tesseract-style).
inline IngestStats run_ingest(const std::string& input_dir, const Vocab& vocab,
                              std::uint64_t min_bytes, int grid_max, int max_seq_len,
                              const std::string& out_dir) {
    IngestStats stats;
    std::vector<ManifestRow> manifest;
    std::vector<PageDocument> corpus;
    for (const auto& path : sorted_files(input_dir, {".html", ".hocr", ".xhtml"})) {
        ++stats.files;
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string html = buf.str();
        bool keep = html.size() >= min_bytes;
        HocrResult parsed = keep ? parse_hocr(html) : HocrResult{};
        stats.words_skipped += parsed.skipped_words;
        std::string stem = path.stem().string();
        int npages = keep ? static_cast<int>(parsed.pages.size()) : 1;
        for (int pg = 0; pg < npages; ++pg) {
            manifest.push_back(ManifestRow{stem, pg, html.size(), keep});
            if (!keep) {
                ++stats.pages_dropped;
                continue;
            }
            const HocrPage& hp = parsed.pages[pg];
            int w = hp.width > 0 ? hp.width : 1;
            int h = hp.height > 0 ? hp.height : 1;
            corpus.push_back(tokenize_page(hp.words, vocab,
                                           stem + "#" + std::to_string(pg), w, h, grid_max,
                                           max_seq_len));
            ++stats.pages_kept;
        }
    }
    std::ofstream mf(out_dir + "/manifest.tsv", std::ios::binary);
    mf << write_manifest(manifest);
    write_corpus(out_dir + "/corpus.txt", corpus);
    return stats;
}

inline void run_pretrain(const std::string& corpus_file, const RunConfig& cfg,
                         const std::string& out_dir) {
    std::vector<PageDocument> corpus = read_corpus(corpus_file);
    {
        std::ofstream echo(out_dir + "/config.txt", std::ios::binary);
        echo << cfg.echo();
    }
    auto sink = [&](int epoch, const Checkpoint& ck) {
        save_checkpoint(out_dir + "/checkpoint-epoch" + std::to_string(epoch) + ".bin", ck);
    };
    PretrainResult result = pretrain(corpus, cfg.model, cfg.train, out_dir + "/runlog.txt", sink,
                                     cfg.max_steps);
    save_checkpoint(out_dir + "/checkpoint.bin", result.checkpoint);
}

inline std::vector<TaggedPage> load_funsd_dir(const std::string& data_dir, const Vocab& vocab,
                                              int page_width, int page_height, int grid_max,
                                              int max_seq_len) {
    std::string dir = data_dir;
    if (fs::exists(fs::path(data_dir) / "annotations")) dir = data_dir + "/annotations";
    std::vector<TaggedPage> pages;
    for (const auto& path : sorted_files(dir, {".json"}))
        pages.push_back(load_funsd_file(path.string(), vocab, page_width, page_height, grid_max,
                                        max_seq_len));
    if (pages.empty()) throw std::runtime_error("no FUNSD .json files under " + dir);
    return pages;
}

// One fine-tuned model per seed, saved separately.
inline void run_finetune(const std::string& checkpoint_path, const std::string& data_dir,
                         const Vocab& vocab, int runs, const RunConfig& cfg, int page_width,
                         int page_height, const std::string& out_dir) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    std::vector<TaggedPage> train_pages = load_funsd_dir(
        data_dir, vocab, page_width, page_height, ck.model.cfg.grid_max, ck.model.cfg.max_seq_len);
    for (int r = 0; r < runs; ++r) {
        FinetuneConfig fc = cfg.finetune;
        fc.seed = Rng::mix(cfg.train.seed, 0xF17E + r);
        RunLog log;
        log.open(out_dir + "/finetune-run" + std::to_string(r) + ".log");
        Model tuned = finetune(ck.model, train_pages, fc, &log);
        Checkpoint out;
        out.model = std::move(tuned);
        out.step = ck.step;
        save_checkpoint(out_dir + "/model-run" + std::to_string(r) + ".bin", out);
    }
}

// Entity-level metrics for one or more fine-tuned models over a test set.
inline MetricsReport run_evaluate(const std::vector<std::string>& model_paths,
                                  const std::string& data_dir, const Vocab& vocab,
                                  int page_width, int page_height, bool include_other) {
    MetricsReport report;
    for (const auto& mp : model_paths) {
        Checkpoint ck = load_checkpoint(mp);
        std::vector<TaggedPage> test_pages =
            load_funsd_dir(data_dir, vocab, page_width, page_height, ck.model.cfg.grid_max,
                           ck.model.cfg.max_seq_len);
        report.runs.push_back(evaluate_model(ck.model, test_pages, include_other));
    }
    return report;
}

// ANOVA + Tukey over the per-run F1 columns of several metrics reports.
inline std::string run_stats(const std::vector<std::string>& report_paths, double alpha = 0.05) {
    std::vector<std::vector<double>> groups;
    for (const auto& rp : report_paths) {
        std::ifstream in(rp);
        if (!in) throw std::runtime_error("cannot open report " + rp);
        MetricsReport rep = parse_metrics_report(in);
        groups.push_back(rep.f1s());
    }
    AnovaResult an = anova_oneway(groups);
    TukeyResult tk = tukey_hsd(groups);
    std::ostringstream os;
    os.precision(6);
    os << "anova\tF=" << an.f << "\tdf=(" << an.df_between << "," << an.df_within
       << ")\tp=" << an.p << (an.degenerate ? "\tdegenerate" : "") << '\n';
    for (const auto& pr : tk.pairs)
        os << "tukey\t" << report_paths[pr.group_a] << "\tvs\t" << report_paths[pr.group_b]
           << "\tdiff=" << pr.mean_diff << "\tq=" << pr.q << "\tp=" << pr.p << '\t'
           << (pr.p < alpha ? "significant" : "ns") << '\n';
    return os.str();
}

}  // namespace posmask
