// Acceptance gate: one pass/fail line per criterion, each backed by an
// independent oracle (finite differences, binomial bounds, brute-force
// matching, hand-computed tables, frozen reference statistics).

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "posmask/finetune.hpp"
#include "posmask/gradcheck.hpp"
#include "posmask/pipeline.hpp"
#include "posmask/stats.hpp"
#include "posmask/synth.hpp"
#include "posmask/train.hpp"

using namespace posmask;
namespace fs = std::filesystem;

namespace {

void report(int criterion, const std::string& what, bool ok) {
    std::printf("criterion %d (%s): %s\n", criterion, what.c_str(), ok ? "PASS" : "FAIL");
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Pages whose token identities determine their boxes exactly (7x7 slot
// layout), so both the token and the position task are fully learnable.
PageDocument slot_page(int n_tokens, int vocab, int grid, std::uint64_t seed,
                       const std::string& id) {
    Rng rng(seed);
    PageDocument page;
    page.source_id = id;
    page.page_width = grid;
    page.page_height = grid;
    page.tokens.push_back(LayoutToken{SpecialIds::CLS, 0, 0, BoundingBox{}});
    int content = vocab - SpecialIds::COUNT;
    int side = 7, cell = grid / side;
    for (int i = 0; i < n_tokens; ++i) {
        int w = static_cast<int>(rng.uniform_int(content));
        int col = w % side, row = (w / side) % side;
        BoundingBox b;
        b.x1 = col * cell + 2;
        b.y1 = row * cell + 2;
        b.x2 = b.x1 + cell - 4;
        b.y2 = b.y1 + cell - 4;
        page.tokens.push_back(
            LayoutToken{SpecialIds::COUNT + w, static_cast<int>(page.tokens.size()), 0, b});
    }
    page.tokens.push_back(
        LayoutToken{SpecialIds::SEP, static_cast<int>(page.tokens.size()), 0, BoundingBox{}});
    return page;
}

std::vector<PageDocument> slot_corpus(int pages, int tokens, int vocab, int grid,
                                      std::uint64_t seed) {
    std::vector<PageDocument> out;
    for (int p = 0; p < pages; ++p)
        out.push_back(slot_page(tokens, vocab, grid, Rng::mix(seed, p),
                                "slot" + std::to_string(p)));
    return out;
}

struct SystemConfig {
    std::string name;
    MaskVariant variant;
    PmLoss loss;
};

const std::vector<SystemConfig>& system_matrix() {
    static const std::vector<SystemConfig> m = {
        {"baseline", MaskVariant::None(), PmLoss::Classification},
        {"x1-ce", MaskVariant::X1(), PmLoss::Classification},
        {"full-ce", MaskVariant::Full(), PmLoss::Classification},
        {"x1-reg", MaskVariant::X1(), PmLoss::Regression},
        {"full-reg", MaskVariant::Full(), PmLoss::Regression},
    };
    return m;
}

ModelConfig desk_config(const SystemConfig& sc, int grid_max = 100) {
    ModelConfig mc;
    mc.vocab_size = 50;
    mc.hidden = 16;
    mc.layers = 2;
    mc.heads = 2;
    mc.max_seq_len = 16;
    mc.grid_max = grid_max;
    mc.pm_variant = sc.variant;
    mc.pm_loss = sc.loss;
    mc.use_height_width = sc.variant.none();
    return mc;
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness across the system matrix") {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    double worst = 0.0;
    for (const auto& sc : system_matrix()) {
        ModelConfig mc = desk_config(sc);  // L=2, d=16, H=2, |V|=50, m=100, seq 16
        Model model = Model::init(mc, 42);
        PageDocument page = make_synthetic_page(mc.max_seq_len - 2, mc.vocab_size,
                                                mc.grid_max, 9);
        MaskPlan plan = sample_mask_plan(page, 0.3, 0.3, mc.pm_variant, mc.vocab_size, 17);
        PageDocument masked = page;
        apply_token_mask(masked, plan);
        apply_position_mask(masked, plan, mc.grid_max);
        auto result = check_gradients(model, [&](Forward& fwd) {
            return pretrain_batch_loss(fwd, {masked}, {plan}).combined;
        });
        worst = std::max(worst, result.max_rel_err);
        if (!result.passes(1e-4)) {
            ok = false;
            std::printf("  %s: max_rel_err %.3e at %s[%zu]\n", sc.name.c_str(),
                        result.max_rel_err, result.worst_param.c_str(), result.worst_index);
        }
    }
    double elapsed = seconds_since(t0);
    ok = ok && elapsed < 300.0;
    report(1, "finite-difference gradients < 1e-4, all configurations", ok);
    std::printf("  worst rel err %.3e, %.1f s\n", worst, elapsed);
    CHECK(ok);
}

TEST_CASE("criterion 2: initialization loss oracle") {
    // MLM: expected CE of near-uniform logits is ln|V|; position CE: ln(m+1)
    ModelConfig mc = desk_config(system_matrix()[2], 1000);  // full-ce, m = 1000
    Model model = Model::init(mc, 7);
    double mlm_acc = 0.0, pm_acc = 0.0;
    const int trials = 8;
    for (int t = 0; t < trials; ++t) {
        PageDocument page = make_synthetic_page(mc.max_seq_len - 2, mc.vocab_size,
                                                mc.grid_max, 100 + t);
        MaskPlan plan = sample_mask_plan(page, 0.5, 0.5, mc.pm_variant, mc.vocab_size, t);
        PageDocument masked = page;
        apply_token_mask(masked, plan);
        apply_position_mask(masked, plan, mc.grid_max);
        Forward fwd(model);
        Var h = fwd.encode(fwd.embed(masked));
        mlm_acc += fwd.tape().value(fwd.mlm_loss(h, masked, plan)).data[0];
        pm_acc += fwd.tape().value(fwd.pm_loss(h, plan)).data[0];
    }
    double mlm0 = mlm_acc / trials, pm0 = pm_acc / trials;
    bool ok = std::fabs(mlm0 - std::log(50.0)) < 0.1 * std::log(50.0) &&
              std::fabs(pm0 - std::log(1001.0)) < 0.1 * std::log(1001.0);
    report(2, "init losses near ln|V| and ln(m+1)", ok);
    std::printf("  mlm %.3f (ln 50 = %.3f), pm %.3f (ln 1001 = %.3f)\n", mlm0,
                std::log(50.0), pm0, std::log(1001.0));
    CHECK(ok);
}

TEST_CASE("criterion 3: learning capability") {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;

    // 50-page corpus, 200 steps, every configuration halves both losses
    auto corpus = slot_corpus(50, 14, 50, 100, 77);
    for (const auto& sc : system_matrix()) {
        ModelConfig mc = desk_config(sc);
        mc.layers = 1;
        mc.max_seq_len = 32;
        TrainConfig tc;
        tc.seed = 7;
        tc.epochs = 1000;  // step cap below controls the length
        tc.batch_size = 8;
        tc.learning_rate = 5e-3;
        PretrainResult r = pretrain(corpus, mc, tc, "", {}, 200);
        const auto& recs = r.log.records;
        double mlm0 = recs.front().mlm, pm0 = recs.front().pm;
        double mlm1 = 0.0, pm1 = 0.0;
        const int k = 10;
        for (int i = 0; i < k; ++i) {
            mlm1 += recs[recs.size() - 1 - i].mlm;
            pm1 += recs[recs.size() - 1 - i].pm;
        }
        mlm1 /= k;
        pm1 /= k;
        bool cfg_ok = mlm1 <= 0.5 * mlm0 && (sc.variant.none() || pm1 <= 0.5 * pm0);
        std::printf("  %-8s mlm %.3f -> %.3f, pm %.4f -> %.4f%s\n", sc.name.c_str(), mlm0,
                    mlm1, pm0, pm1, cfg_ok ? "" : "  (insufficient)");
        ok = ok && cfg_ok;
    }

    // 2-page overfit below 0.1x initial within 300 steps
    {
        auto tiny = slot_corpus(2, 14, 50, 100, 13);
        ModelConfig mc = desk_config(system_matrix()[1]);  // x1-ce
        mc.layers = 1;
        mc.max_seq_len = 32;
        TrainConfig tc;
        tc.seed = 41;
        tc.epochs = 300;
        tc.batch_size = 2;
        tc.learning_rate = 5e-3;
        PretrainResult r = pretrain(tiny, mc, tc, "", {}, 300);
        double first = r.log.records.front().loss;
        double last = r.log.records.back().loss;
        bool overfit_ok = last < 0.1 * first;
        std::printf("  overfit: %.3f -> %.3f (bound %.3f)\n", first, last, 0.1 * first);
        ok = ok && overfit_ok;
    }
    double elapsed = seconds_since(t0);
    ok = ok && elapsed < 600.0;
    report(3, "200-step halving + 2-page overfit", ok);
    std::printf("  %.1f s\n", elapsed);
    CHECK(ok);
}

TEST_CASE("criterion 4: masking statistics") {
    const int N = 10000;
    const double p = 0.15;
    PageDocument page = make_synthetic_page(N, 50, 1000, 1);
    MaskPlan plan = sample_mask_plan(page, p, p, MaskVariant::Full(), 50, 4242);

    std::set<int> j_set, k_set;
    for (const auto& e : plan.token_masks) j_set.insert(e.index);
    for (const auto& e : plan.position_masks) k_set.insert(e.index);
    int overlap = 0;
    for (int idx : j_set) overlap += k_set.count(idx);

    double sigma = std::sqrt(p * (1 - p) / N);
    double p2 = p * p, sigma2 = std::sqrt(p2 * (1 - p2) / N);
    bool bounds_ok = std::fabs(static_cast<double>(j_set.size()) / N - p) < 3 * sigma &&
                     std::fabs(static_cast<double>(k_set.size()) / N - p) < 3 * sigma &&
                     std::fabs(static_cast<double>(overlap) / N - p2) < 3 * sigma2;

    PageDocument masked = page;
    apply_token_mask(masked, plan);
    apply_position_mask(masked, plan, 1000);
    bool coords_ok = true;
    for (const auto& e : plan.position_masks) {
        const auto& b = masked.tokens[e.index].box;
        coords_ok = coords_ok && b.x1 == 1000 && b.y1 == 1000 && b.x2 == 1000 && b.y2 == 1000;
    }
    bool replay_ok = replay_original(masked, plan) == page;

    bool ok = bounds_ok && coords_ok && replay_ok;
    report(4, "3-sigma binomial rates, exact-m coordinates, lossless replay", ok);
    std::printf("  |J|/N %.4f, |K|/N %.4f, overlap %.4f\n",
                static_cast<double>(j_set.size()) / N,
                static_cast<double>(k_set.size()) / N, static_cast<double>(overlap) / N);
    CHECK(ok);
}

TEST_CASE("criterion 5: evaluation oracle equivalence") {
    bool ok = true;
    Rng rng(555);
    for (int page = 0; page < 50 && ok; ++page) {
        std::vector<int> g, q;
        std::size_t len = 5 + rng.uniform_int(25);
        for (std::size_t i = 0; i < len; ++i) {
            g.push_back(static_cast<int>(rng.uniform_int(BioLabels::COUNT)));
            q.push_back(static_cast<int>(rng.uniform_int(BioLabels::COUNT)));
        }
        std::vector<std::vector<EntitySpan>> gold = {decode_entities(g)};
        std::vector<std::vector<EntitySpan>> pred = {decode_entities(q)};
        Scores fast = score_entities(gold, pred);
        long long tp = 0;
        for (const auto& a : pred[0])
            for (const auto& b : gold[0])
                if (a.entity == b.entity && a.start == b.start && a.end == b.end) {
                    ++tp;
                    break;
                }
        ok = fast.tp == tp &&
             fast.pred == static_cast<long long>(pred[0].size()) &&
             fast.gold == static_cast<long long>(gold[0].size());
    }

    // hand fixture: 2 gold spans, prediction has 1 TP and 1 FP
    int qn = BioLabels::entity_index("question"), an = BioLabels::entity_index("answer");
    Scores s = score_entities({{{qn, 0, 1}, {an, 3, 4}}}, {{{qn, 0, 1}, {an, 3, 3}}});
    ok = ok && s.precision == 0.5 && s.recall == 0.5 && s.f1 == 0.5;
    report(5, "brute-force span matcher agreement, hand fixture 0.5", ok);
    CHECK(ok);
}

TEST_CASE("criterion 6: statistics oracles") {
    AnovaResult hand = anova_oneway({{1, 2, 3}, {2, 3, 4}, {3, 4, 5}});
    bool hand_ok = std::fabs(hand.f - 3.0) < 1e-12 && hand.df_between == 2.0 &&
                   hand.df_within == 6.0;

    // frozen reference (SciPy) for a worked three-group example
    std::vector<std::vector<double>> groups = {{24.5, 23.5, 26.4, 27.1, 29.9},
                                               {28.4, 34.2, 29.5, 32.2, 30.1},
                                               {26.1, 28.3, 24.3, 26.2, 27.8}};
    AnovaResult an = anova_oneway(groups);
    TukeyResult tk = tukey_hsd(groups);
    bool ref_ok = std::fabs(an.f - 7.137827822120864) < 1e-6 &&
                  std::fabs(an.p - 0.009073317468563) < 1e-6 &&
                  std::fabs(tk.pair(0, 1).p - 0.014448326736401) < 1e-6 &&
                  std::fabs(tk.pair(0, 2).p - 0.980310724094108) < 1e-6 &&
                  std::fabs(tk.pair(1, 2).p - 0.020331136739715) < 1e-6;
    // accept/reject decisions at alpha = 0.05: 0-1 and 1-2 differ, 0-2 does not
    bool decisions_ok = (tk.pair(0, 1).p < 0.05) && (tk.pair(1, 2).p < 0.05) &&
                        (tk.pair(0, 2).p >= 0.05) && (an.p < 0.05);
    bool ok = hand_ok && ref_ok && decisions_ok;
    report(6, "hand ANOVA table F=3.0 df(2,6), reference example within 1e-6", ok);
    CHECK(ok);
}

namespace {

std::string hocr_fixture_page(int words, std::uint64_t seed) {
    Rng rng(seed);
    std::ostringstream os;
    os << "<html><body><div class='ocr_page' title='bbox 0 0 1000 1000'>\n";
    for (int i = 0; i < words; ++i) {
        int x = 20 + static_cast<int>(rng.uniform_int(850));
        int y = 20 + static_cast<int>(rng.uniform_int(900));
        os << " <span class='ocrx_word' title='bbox " << x << ' ' << y << ' ' << x + 80 << ' '
           << y + 30 << "'>word" << rng.uniform_int(7) << "</span>\n";
    }
    os << "</div></body></html>\n";
    return os.str();
}

// Synthetic tagged pages in the FUNSD annotation layout, labels a function
// of position (top band header, bottom band other, left/right question/answer).
std::string funsd_fixture_page(std::uint64_t seed) {
    Rng rng(seed);
    std::ostringstream os;
    os << "{\"img\": {\"width\": 1000, \"height\": 1000}, \"form\": [\n";
    for (int e = 0; e < 8; ++e) {
        int x = 20 + static_cast<int>(rng.uniform_int(850));
        int y = 20 + static_cast<int>(rng.uniform_int(900));
        const char* label = y < 125 ? "header" : (y >= 875 ? "other"
                                                : (x < 500 ? "question" : "answer"));
        os << (e ? ",\n" : "") << " {\"label\": \"" << label << "\", \"words\": [{\"text\": "
           << "\"word" << rng.uniform_int(7) << "\", \"box\": [" << x << ", " << y << ", "
           << x + 80 << ", " << y + 30 << "]}]}";
    }
    os << "\n]}\n";
    return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// One full pipeline pass into `root`; returns the stats text.
std::string run_pipeline(const fs::path& root, const Vocab& vocab) {
    fs::create_directories(root / "hocr");
    for (int i = 0; i < 19; ++i)
        write_file(root / "hocr" / ("page" + std::string(i < 10 ? "0" : "") +
                                    std::to_string(i) + ".hocr"),
                   hocr_fixture_page(30, 1000 + i));
    write_file(root / "hocr" / "page19.hocr", "<html><body>stub</body></html>\n");  // < 1.8 kb

    fs::create_directories(root / "corpus");
    IngestStats ist = run_ingest((root / "hocr").string(), vocab, 1800, 1000, 64,
                                 (root / "corpus").string());
    if (ist.pages_dropped != 1 || ist.pages_kept != 19)
        throw std::runtime_error("ingest filter mismatch");

    fs::create_directories(root / "funsd");
    for (int i = 0; i < 5; ++i)
        write_file(root / "funsd" / ("doc" + std::to_string(i) + ".json"),
                   funsd_fixture_page(2000 + i));

    std::vector<std::string> reports;
    for (const std::string& variant : {"none", "x1"}) {
        RunConfig cfg;
        cfg.model.vocab_size = 12;  // 5 specials + word0..word6
        cfg.model.hidden = 16;
        cfg.model.layers = 1;
        cfg.model.heads = 2;
        cfg.model.max_seq_len = 64;
        cfg.model.grid_max = 1000;
        cfg.model.pm_variant = MaskVariant::parse(variant);
        cfg.model.use_height_width = false;
        cfg.train.seed = 5;
        cfg.train.epochs = 1000;
        cfg.train.batch_size = 8;
        cfg.train.learning_rate = 1e-3;
        cfg.max_steps = 100;
        cfg.finetune.epochs = 5;
        cfg.finetune.batch_size = 8;

        fs::path sys = root / ("sys-" + variant);
        fs::create_directories(sys / "pretrain");
        fs::create_directories(sys / "finetune");
        run_pretrain((root / "corpus" / "corpus.txt").string(), cfg,
                     (sys / "pretrain").string());
        run_finetune((sys / "pretrain" / "checkpoint.bin").string(),
                     (root / "funsd").string(), vocab, 2, cfg, 1000, 1000,
                     (sys / "finetune").string());
        MetricsReport rep = run_evaluate({(sys / "finetune" / "model-run0.bin").string(),
                                          (sys / "finetune" / "model-run1.bin").string()},
                                         (root / "funsd").string(), vocab, 1000, 1000, true);
        fs::path report = sys / "report.tsv";
        write_file(report, rep.to_text());
        reports.push_back(report.string());
    }
    // relabel the report paths so both passes produce identical stats text
    std::string stats = run_stats(reports, 0.05);
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::string from = reports[i];
        std::string to = "report" + std::to_string(i);
        for (std::size_t at; (at = stats.find(from)) != std::string::npos;)
            stats.replace(at, from.size(), to);
    }
    write_file(root / "stats.txt", stats);
    return stats;
}

}  // namespace

TEST_CASE("criterion 7: deterministic end-to-end pipeline smoke") {
    auto t0 = std::chrono::steady_clock::now();
    fs::path base = "acceptance_scratch";
    fs::remove_all(base);
    Vocab vocab = Vocab::from_words(
        {"word0", "word1", "word2", "word3", "word4", "word5", "word6"});

    bool ok = true;
    std::string stats_a, stats_b;
    try {
        stats_a = run_pipeline(base / "a", vocab);
        stats_b = run_pipeline(base / "b", vocab);
    } catch (const std::exception& e) {
        std::printf("  pipeline error: %s\n", e.what());
        ok = false;
    }
    if (ok) {
        ok = stats_a == stats_b;
        // every artifact byte-identical between the two passes
        for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
            if (!entry.is_regular_file()) continue;
            fs::path rel = fs::relative(entry.path(), base / "a");
            if (slurp(entry.path()) != slurp(base / "b" / rel)) {
                std::printf("  differs: %s\n", rel.string().c_str());
                ok = false;
            }
        }
    }
    double elapsed = seconds_since(t0);
    ok = ok && elapsed < 900.0;
    report(7, "ingest->pretrain->finetune->evaluate->stats, twice, identical", ok);
    std::printf("  %.1f s\n", elapsed);
    CHECK(ok);
}

TEST_CASE("criterion 8: directional smoke (position signal carries to tagging)") {
    // Entity labels are a deterministic function of the box; a position-
    // masked pre-trained model overfit on the training set must reach F1 = 1.
    ModelConfig mc = desk_config(system_matrix()[1]);  // x1-ce
    mc.layers = 1;
    mc.max_seq_len = 32;
    TrainConfig tc;
    tc.seed = 7;
    tc.epochs = 100;
    tc.batch_size = 8;
    tc.learning_rate = 5e-3;
    auto corpus = make_synthetic_corpus(20, 14, mc.vocab_size, mc.grid_max, 5);
    PretrainResult pre = pretrain(corpus, mc, tc, "", {}, 100);

    auto tagged = make_position_tagged_pages(3, 14, mc.vocab_size, mc.grid_max, 11);
    FinetuneConfig fc;
    fc.seed = 2;
    fc.epochs = 200;
    fc.batch_size = 8;
    fc.learning_rate = 3e-3;
    Model tuned = finetune(pre.checkpoint.model, tagged, fc);
    Scores s = evaluate_model(tuned, tagged);
    bool ok = s.f1 == 1.0;
    report(8, "overfit training-set F1 reaches 1.0 on position-determined labels", ok);
    std::printf("  P %.4f R %.4f F1 %.4f\n", s.precision, s.recall, s.f1);
    CHECK(ok);
}
