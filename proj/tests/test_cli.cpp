#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
    fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    std::string cmd = std::string(POSMASK_CLI_PATH) + " " + args + " >" + out.string() +
                      " 2>" + err.string();
    int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::path("cli_scratch") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// An hOCR page with enough words to clear the default byte-size filter.
std::string big_hocr_page(int words) {
    std::ostringstream os;
    os << "<html><body><div class='ocr_page' id='page_1' title='bbox 0 0 1000 1000'>\n";
    for (int i = 0; i < words; ++i) {
        int x = 20 + (i % 10) * 90, y = 20 + (i / 10) * 40;
        os << " <span class='ocrx_word' title='bbox " << x << ' ' << y << ' ' << x + 80 << ' '
           << y + 30 << "'>word" << i % 7 << "</span>\n";
    }
    os << "</div></body></html>\n";
    return os.str();
}

const char* kVocabWords = "word0\nword1\nword2\nword3\nword4\nword5\nword6\n";

}  // namespace

TEST_CASE("no arguments exits with usage error code 2") {
    fs::path dir = fresh_dir("noargs");
    CliResult r = run_cli("", dir);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("subcommand") != std::string::npos);
}

TEST_CASE("unknown subcommand exits 2") {
    fs::path dir = fresh_dir("unknown");
    CHECK(run_cli("frobnicate", dir).exit_code == 2);
}

TEST_CASE("missing required option exits 2") {
    fs::path dir = fresh_dir("missingopt");
    CHECK(run_cli("pretrain --corpus x.txt", dir).exit_code == 2);
}

TEST_CASE("nonexistent input path exits 1 and names the path") {
    fs::path dir = fresh_dir("badpath");
    write_file(dir / "cfg.txt", "model.hidden = 16\n");
    CliResult r = run_cli("pretrain --corpus " + (dir / "no_such_corpus.txt").string() +
                              " --config " + (dir / "cfg.txt").string() + " --out " +
                              (dir / "out").string(),
                          dir);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("no_such_corpus.txt") != std::string::npos);
}

TEST_CASE("ingest writes manifest and corpus; --force guards reuse") {
    fs::path dir = fresh_dir("ingest");
    fs::path in = dir / "hocr", out = dir / "out";
    fs::create_directories(in);
    write_file(in / "doc_a.hocr", big_hocr_page(40));
    write_file(in / "tiny.hocr", "<html><div class='ocr_page' title='bbox 0 0 10 10'></div></html>");
    write_file(in / "notes.txt", "not an hocr file");
    write_file(dir / "vocab.txt", kVocabWords);

    std::string base = "ingest --input " + in.string() + " --vocab " +
                       (dir / "vocab.txt").string() + " --out " + out.string();
    CliResult r = run_cli(base, dir);
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("kept=1") != std::string::npos);
    CHECK(r.out.find("dropped=1") != std::string::npos);
    REQUIRE(fs::exists(out / "manifest.tsv"));
    REQUIRE(fs::exists(out / "corpus.txt"));
    std::string manifest = slurp(out / "manifest.tsv");
    CHECK(manifest.find("doc_a") != std::string::npos);
    CHECK(manifest.find("tiny") != std::string::npos);

    SECTION("second run into the same directory is refused without --force") {
        CliResult again = run_cli(base, dir);
        CHECK(again.exit_code == 1);
        CHECK(again.err.find("force") != std::string::npos);
        CHECK(run_cli(base + " --force", dir).exit_code == 0);
    }
}

TEST_CASE("pretrain runs end to end on a tiny config and writes a checkpoint") {
    fs::path dir = fresh_dir("pretrain");
    fs::path in = dir / "hocr", corpus_dir = dir / "corpus", out = dir / "out";
    fs::create_directories(in);
    write_file(in / "page.hocr", big_hocr_page(40));
    write_file(dir / "vocab.txt", kVocabWords);
    REQUIRE(run_cli("ingest --input " + in.string() + " --vocab " +
                        (dir / "vocab.txt").string() + " --out " + corpus_dir.string(),
                    dir)
                .exit_code == 0);
    write_file(dir / "cfg.txt",
               "model.vocab_size = 12\n"
               "model.hidden = 16\n"
               "model.layers = 1\n"
               "model.heads = 2\n"
               "model.max_seq_len = 64\n"
               "model.grid_max = 1000\n"
               "model.use_height_width = false\n"
               "mask.variant = x1\n"
               "train.epochs = 2\n"
               "train.batch_size = 4\n"
               "train.seed = 5\n");
    CliResult r = run_cli("pretrain --corpus " + (corpus_dir / "corpus.txt").string() +
                              " --config " + (dir / "cfg.txt").string() + " --out " +
                              out.string(),
                          dir);
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "checkpoint.bin"));
    CHECK(fs::exists(out / "runlog.txt"));
    CHECK(fs::exists(out / "config.txt"));
    // the echoed config is itself loadable (round trip guarded elsewhere)
    CHECK(slurp(out / "config.txt").find("mask.variant = x1") != std::string::npos);
}

TEST_CASE("gradcheck subcommand verifies gradients and reports the error") {
    fs::path dir = fresh_dir("gradcheck");
    write_file(dir / "cfg.txt",
               "model.vocab_size = 20\n"
               "model.hidden = 8\n"
               "model.layers = 1\n"
               "model.heads = 2\n"
               "model.max_seq_len = 8\n"
               "model.grid_max = 20\n"
               "model.use_height_width = false\n"
               "mask.variant = x1\n"
               "mask.token_rate = 0.4\n"
               "mask.position_rate = 0.4\n"
               "train.seed = 3\n");
    CliResult r = run_cli("gradcheck --config " + (dir / "cfg.txt").string(), dir);
    INFO(r.out << r.err);
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("max_rel_err") != std::string::npos);

    SECTION("an unachievable tolerance fails with exit 1") {
        CliResult strict =
            run_cli("gradcheck --config " + (dir / "cfg.txt").string() + " --tol 1e-18", dir);
        CHECK(strict.exit_code == 1);
    }
}

TEST_CASE("stats subcommand reports ANOVA and Tukey lines") {
    fs::path dir = fresh_dir("stats");
    auto report = [&](const std::string& name, std::initializer_list<double> f1s) {
        std::ostringstream os;
        os << "run\tprecision\trecall\tf1\n";
        int i = 0;
        for (double f : f1s) os << i++ << "\t0.5\t0.5\t" << f << "\n";
        write_file(dir / name, os.str());
    };
    report("a.tsv", {0.50, 0.52, 0.51});
    report("b.tsv", {0.70, 0.72, 0.71});
    CliResult r = run_cli("stats --reports " + (dir / "a.tsv").string() + " " +
                              (dir / "b.tsv").string(),
                          dir);
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("anova\tF=") != std::string::npos);
    CHECK(r.out.find("tukey\t") != std::string::npos);
    CHECK(r.out.find("significant") != std::string::npos);

    SECTION("a single report is rejected by the parser") {
        CHECK(run_cli("stats --reports " + (dir / "a.tsv").string(), dir).exit_code == 2);
    }
}

TEST_CASE("bad config key exits 1 with the offending key named") {
    fs::path dir = fresh_dir("badcfg");
    write_file(dir / "cfg.txt", "model.hiden = 16\n");
    CliResult r = run_cli("gradcheck --config " + (dir / "cfg.txt").string(), dir);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("model.hiden") != std::string::npos);
}
