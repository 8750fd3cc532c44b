#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "director/cli.hpp"
#include "director/common.hpp"
#include "director/mask.hpp"

using namespace director;
namespace fs = std::filesystem;

namespace {

const char* kValidScript =
    "<User>\n"
    "style: 2\n"
    "A fox crosses a frozen lake.\n"
    "\n"
    "<Character1>\n"
    "short: fox\n"
    "A red fox with a torn ear.\n"
    "\n"
    "<Frame1>\n"
    "The fox<Character1> steps onto the ice.\n"
    "\n"
    "<Video1>\n"
    "Cracks spread. <-Careful now.->\n"
    "\n"
    "<Frame2>\n"
    "The fox<Character1> leaps to the far bank.\n"
    "\n"
    "<Video2>\n"
    "Snow scatters.\n";

struct CapturedRun {
    int exit_code = 0;
    std::string out;
    std::string err;
};

CapturedRun run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    CapturedRun result;
    result.exit_code = cli::run(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    result.out = out.str();
    result.err = err.str();
    return result;
}

std::string temp_path(const std::string& name) {
    const auto dir = fs::path("/tmp/director_cli_test");
    fs::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("validate: exit 0 and silence on a valid script") {
    const std::string path = temp_path("ok.script");
    write_file(path, kValidScript);
    auto r = run_cli({"validate", path});
    CHECK(r.exit_code == 0);
    CHECK(r.out.empty());
}

TEST_CASE("validate: exit 1 and one diagnostic line per error") {
    const std::string path = temp_path("bad.script");
    write_file(path, "<User>\nA tale.\n\n<Frame1>\nA face<Character9> appears.\n\n<Video1>\nQuiet.\n");
    auto r = run_cli({"validate", path});
    CHECK(r.exit_code == 1);
    CHECK(r.out.find("UnresolvedReference") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
    // diagnostics carry path:line:col
    CHECK(r.out.find(path + ":5:7:") != std::string::npos);
}

TEST_CASE("canonicalize reproduces canonical bytes") {
    const std::string path = temp_path("canon.script");
    write_file(path, std::string("\n\n") + kValidScript);  // leading blank lines normalize away
    auto r = run_cli({"canonicalize", path});
    CHECK(r.exit_code == 0);
    CHECK(r.out == kValidScript);
}

TEST_CASE("split subcommand inserts markers") {
    const std::string path = temp_path("split.script");
    write_file(path, kValidScript);
    auto ext = run_cli({"split", "--mode", "ext", "--at", "1", path});
    CHECK(ext.exit_code == 0);
    CHECK(ext.out.find("<Extension>") != std::string::npos);
    auto cont = run_cli({"split", "--mode", "cont", path});
    CHECK(cont.exit_code == 0);
    CHECK(cont.out.find("<Continuation>") != std::string::npos);
    auto bad = run_cli({"split", "--mode", "ext", "--at", "2", path});
    CHECK(bad.exit_code == 1);
}

TEST_CASE("mask subcommand emits a layout dump and a parsable P1 bitmap") {
    const std::string path = temp_path("mask.script");
    write_file(path, kValidScript);
    auto r = run_cli({"mask", path, "--gen-shot", "2"});
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("0: TEXT shot=[0]") != std::string::npos);
    const size_t p1 = r.out.find("P1\n");
    REQUIRE(p1 != std::string::npos);
    auto mask = attn::parse_mask(r.out.substr(p1));
    CHECK(mask.n > 0);
    CHECK(mask.at(0, 0));
    CHECK(!mask.at(0, mask.n - 1));
}

TEST_CASE("corpus gen writes a manifest; bad usage exits 2") {
    const std::string cfg_path = temp_path("corpus.cfg");
    const std::string out_dir = temp_path("corpus_out");
    fs::remove_all(out_dir);
    write_file(cfg_path, "out_dir=" + out_dir + "\ninterleaved=2\ntext=1\npairs=1\nseed=5\nimage_size=16\n");
    auto r = run_cli({"corpus", "gen", cfg_path});
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(fs::path(out_dir) / "manifest.txt"));

    auto usage = run_cli({"corpus"});
    CHECK(usage.exit_code == 2);
    auto unknown = run_cli({"frobnicate"});
    CHECK(unknown.exit_code == 2);
}

TEST_CASE("train subcommand writes a checkpoint and a loss trace") {
    const std::string corpus_cfg = temp_path("train_corpus.cfg");
    const std::string corpus_dir = temp_path("train_corpus");
    fs::remove_all(corpus_dir);
    write_file(corpus_cfg, "out_dir=" + corpus_dir +
                               "\ninterleaved=2\ntext=2\npairs=1\nseed=3\nimage_size=16\nmax_shots=2\n"
                               "max_characters=2\nmin_environments=1\nmax_environments=1\n");
    REQUIRE(run_cli({"corpus", "gen", corpus_cfg}).exit_code == 0);

    const std::string train_cfg = temp_path("train.cfg");
    const std::string ckpt = temp_path("model.ckpt");
    const std::string trace = temp_path("trace.csv");
    write_file(train_cfg, "corpus_dir=" + corpus_dir + "\nout_checkpoint=" + ckpt + "\ntrace_file=" + trace +
                              "\nstage1_steps=2\nstage2_steps=2\nlearning_rate=0.001\n"
                              "layers=1\nwidth=16\nheads=2\nimage_size=16\nmax_positions=420\n"
                              "vit_slot_width=8\ntime_width=8\nmax_entities=2\nmax_shots=2\n");
    auto r1 = run_cli({"train", "--stage", "1", train_cfg, "--seed", "4"});
    CHECK(r1.exit_code == 0);
    CHECK(fs::exists(ckpt));
    CHECK(split_lines(read_file(trace)).size() == 2);

    // stage 2 resumes from the stage-1 checkpoint
    const std::string train2_cfg = temp_path("train2.cfg");
    write_file(train2_cfg, "corpus_dir=" + corpus_dir + "\ninit_checkpoint=" + ckpt + "\nout_checkpoint=" + ckpt +
                               ".s2\ntrace_file=" + trace + ".s2\nstage2_steps=3\nlearning_rate=0.001\n");
    auto r2 = run_cli({"train", "--stage", "2", train2_cfg, "--seed", "4"});
    CHECK(r2.exit_code == 0);
    const auto lines = split_lines(read_file(trace + ".s2"));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0].find("text") != std::string::npos);
}
