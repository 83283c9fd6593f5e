// Command-line entry point for the layout-aware pre-training pipeline:
// ingest, pretrain, finetune, evaluate, stats, gradcheck.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "posmask/gradcheck.hpp"
#include "posmask/pipeline.hpp"
#include "posmask/synth.hpp"

using namespace posmask;

int main(int argc, char** argv) {
    CLI::App app{"Layout-aware masked pre-training with position masking"};
    app.require_subcommand(1);

    // ---- ingest ----
    std::string in_dir, vocab_file, out_dir, config_file;
    std::uint64_t min_bytes = 1800;
    int grid = 1000, max_seq_len = 512;
    bool force = false;
    auto* ingest = app.add_subcommand("ingest", "hOCR directory -> corpus + manifest");
    ingest->add_option("--input", in_dir, "directory of hOCR files")->required();
    ingest->add_option("--vocab", vocab_file, "word-piece vocabulary file")->required();
    ingest->add_option("--min-bytes", min_bytes, "drop hOCR files smaller than this");
    ingest->add_option("--grid", grid, "normalized coordinate grid maximum");
    ingest->add_option("--max-seq-len", max_seq_len, "token sequence cap per page");
    ingest->add_option("--out", out_dir, "output directory")->required();
    ingest->add_flag("--force", force, "allow writing into a non-empty output directory");

    // ---- pretrain ----
    std::string corpus_file;
    std::uint64_t seed = 0;
    bool seed_set = false;
    auto* pre = app.add_subcommand("pretrain", "masked pre-training over a corpus");
    pre->add_option("--corpus", corpus_file, "corpus file from ingest")->required();
    pre->add_option("--config", config_file, "run configuration file")->required();
    pre->add_option("--out", out_dir, "output directory")->required();
    pre->add_option("--seed", seed, "override train.seed")->each([&](const std::string&) {
        seed_set = true;
    });
    pre->add_flag("--force", force);

    // ---- finetune ----
    std::string checkpoint_file, data_dir;
    int runs = 5, ft_epochs = -1, page_w = 1000, page_h = 1000;
    auto* ft = app.add_subcommand("finetune", "entity-tagging fine-tuning (FUNSD format)");
    ft->add_option("--checkpoint", checkpoint_file, "pre-trained checkpoint")->required();
    ft->add_option("--data", data_dir, "FUNSD-format annotation directory")->required();
    ft->add_option("--vocab", vocab_file, "word-piece vocabulary file")->required();
    ft->add_option("--runs", runs, "number of distinct-seed fine-tuning runs");
    ft->add_option("--epochs", ft_epochs, "override finetune.epochs");
    ft->add_option("--config", config_file, "run configuration file");
    ft->add_option("--seed", seed, "base seed");
    ft->add_option("--page-width", page_w);
    ft->add_option("--page-height", page_h);
    ft->add_option("--out", out_dir, "output directory")->required();
    ft->add_flag("--force", force);

    // ---- evaluate ----
    std::vector<std::string> model_files;
    std::string report_out;
    bool exclude_other = false;
    auto* ev = app.add_subcommand("evaluate", "entity-level P/R/F1 of fine-tuned models");
    ev->add_option("--model", model_files, "fine-tuned model file(s)")->required();
    ev->add_option("--data", data_dir, "FUNSD-format annotation directory")->required();
    ev->add_option("--vocab", vocab_file, "word-piece vocabulary file")->required();
    ev->add_option("--page-width", page_w);
    ev->add_option("--page-height", page_h);
    ev->add_flag("--exclude-other", exclude_other, "drop 'other' spans from scoring");
    ev->add_option("--report", report_out, "write the metrics report here");

    // ---- stats ----
    std::vector<std::string> report_files;
    double alpha = 0.05;
    auto* st = app.add_subcommand("stats", "one-way ANOVA + Tukey HSD across metric reports");
    st->add_option("--reports", report_files, "metrics report files (one per system)")
        ->required()
        ->expected(-2);
    st->add_option("--alpha", alpha, "significance level");

    // ---- gradcheck ----
    double tol = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--config", config_file, "run configuration file")->required();
    gc->add_option("--tol", tol, "maximum allowed relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest) {
            prepare_out_dir(out_dir, force);
            Vocab vocab = Vocab::from_file(vocab_file);
            IngestStats s = run_ingest(in_dir, vocab, min_bytes, grid, max_seq_len, out_dir);
            std::cout << "ingest: files=" << s.files << " kept=" << s.pages_kept
                      << " dropped=" << s.pages_dropped
                      << " skipped_words=" << s.words_skipped << "\n";
        } else if (*pre) {
            prepare_out_dir(out_dir, force);
            RunConfig cfg = RunConfig::from_file(config_file);
            if (seed_set) cfg.train.seed = seed;
            std::cout << cfg.echo();
            run_pretrain(corpus_file, cfg, out_dir);
            std::cout << "pretrain: done, checkpoint at " << out_dir << "/checkpoint.bin\n";
        } else if (*ft) {
            prepare_out_dir(out_dir, force);
            RunConfig cfg = config_file.empty() ? RunConfig{} : RunConfig::from_file(config_file);
            if (ft_epochs >= 0) cfg.finetune.epochs = ft_epochs;
            cfg.train.seed = seed;
            Vocab vocab = Vocab::from_file(vocab_file);
            run_finetune(checkpoint_file, data_dir, vocab, runs, cfg, page_w, page_h, out_dir);
            std::cout << "finetune: " << runs << " run(s) written to " << out_dir << "\n";
        } else if (*ev) {
            Vocab vocab = Vocab::from_file(vocab_file);
            MetricsReport rep =
                run_evaluate(model_files, data_dir, vocab, page_w, page_h, !exclude_other);
            std::string text = rep.to_text();
            std::cout << text;
            if (!report_out.empty()) {
                std::ofstream out(report_out, std::ios::binary);
                out << text;
            }
        } else if (*st) {
            std::cout << run_stats(report_files, alpha);
        } else if (*gc) {
            RunConfig cfg = RunConfig::from_file(config_file);
            cfg.model.validate();
            Model model = Model::init(cfg.model, Rng::mix(cfg.train.seed, 0x1417));
            PageDocument page = make_synthetic_page(cfg.model.max_seq_len - 2,
                                                    cfg.model.vocab_size, cfg.model.grid_max,
                                                    Rng::mix(cfg.train.seed, 0x9c));
            MaskPlan plan = sample_mask_plan(page, cfg.train.token_mask_rate,
                                             cfg.train.position_mask_rate, cfg.model.pm_variant,
                                             cfg.model.vocab_size, Rng::mix(cfg.train.seed, 0x91));
            PageDocument masked = page;
            apply_token_mask(masked, plan);
            apply_position_mask(masked, plan, cfg.model.grid_max);
            auto result = check_gradients(model, [&](Forward& fwd) {
                return pretrain_batch_loss(fwd, {masked}, {plan}).combined;
            });
            std::printf("gradcheck: max_rel_err=%.3e over %zu elements (worst: %s[%zu])\n",
                        result.max_rel_err, result.checked, result.worst_param.c_str(),
                        result.worst_index);
            return result.passes(tol) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
