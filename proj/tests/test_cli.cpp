#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gpcd/geometry.hpp"
#include "gpcd/mesh.hpp"
#include "gpcd/point_cloud.hpp"
#include "support/test_meshes.hpp"

#ifndef GPCD_CLI_PATH
#error "GPCD_CLI_PATH must point at the gpcd binary"
#endif

using namespace gpcd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("gpcd_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
    int code = -1;
    std::string out, err;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

CliResult run_cli(const TempDir& dir, const std::string& args) {
    const std::string out_path = dir.file("cli_stdout.txt");
    const std::string err_path = dir.file("cli_stderr.txt");
    const std::string cmd =
        std::string(GPCD_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    const int raw = std::system(cmd.c_str());
    CliResult res;
    res.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    res.out = read_file(out_path);
    res.err = read_file(err_path);
    return res;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t')) fields.push_back(field);
    return fields;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << text;
}

// train.* keys are sized so every subprocess stage finishes in seconds
const char* kTinyConfig =
    "noise.scale = 0.02\n"
    "denoise.T = 4\n"
    "denoise.t_act = 2\n"
    "denoise.patch_size = 64\n"
    "denoise.coverage = 2\n"
    "model.k_feat = 8\n"
    "model.k_uninet = 6\n"
    "train.epochs = 2\n"
    "train.lr0 = 1e-3\n"
    "train.batch = 1\n"
    "train.steps_per_epoch = 2\n"
    "train.patch_size = 48\n"
    "train.noise_min = 0.01\n"
    "train.noise_max = 0.02\n"
    "train.pool = 4\n"
    "train.val_pairs = 2\n"
    "train.seed = 5\n";

}  // namespace

TEST_CASE("cli requires a subcommand and documents the config schema") {
    TempDir dir("cli_help");
    CHECK(run_cli(dir, "").code == 2);
    CHECK(run_cli(dir, "frobnicate").code == 2);

    const CliResult help = run_cli(dir, "--help");
    CHECK(help.code == 0);
    for (const char* sub : {"make-dataset", "add-noise", "train", "denoise", "evaluate"})
        CHECK(contains(help.out, sub));
    for (const char* key : {"noise.kind", "denoise.scale_uninet", "model.k_feat",
                            "train.lr_milestones", "train.seed"})
        CHECK(contains(help.out, key));
}

TEST_CASE("make-dataset samples meshes into normalized clouds plus a manifest") {
    TempDir dir("cli_dataset");
    const std::string meshes = dir.file("meshes");
    fs::create_directories(meshes);
    save_obj(testing::box(1.2, 1.0, 0.8), meshes + "/box.obj");
    save_obj(testing::icosphere(1), meshes + "/ball.obj");
    write_text(meshes + "/broken.obj", "v 0 0 0\nf 1 2 3\n");
    write_text(meshes + "/notes.txt", "not a mesh\n");

    const std::string base =
        " --counts 90 --seed 4 --meshes " + meshes + " --out " + dir.file("d1");
    const CliResult res = run_cli(dir, "make-dataset" + base);
    CHECK(res.code == 0);
    CHECK(contains(res.out, "wrote 2 clouds"));
    CHECK(contains(res.err, "skipping"));
    CHECK(contains(res.err, "broken.obj"));

    for (const char* name : {"ball_90.xyz", "box_90.xyz"}) {
        const PointCloud cloud = load_points(dir.file("d1/") + name);
        CHECK(cloud.n() == 90);
        double max_norm = 0.0;
        for (const auto& p : cloud.points) max_norm = std::max(max_norm, norm(p));
        CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(read_lines(dir.file("d1/manifest.txt")).size() == 2);

    const CliResult rerun = run_cli(dir, "make-dataset --counts 90 --seed 4 --meshes " +
                                             meshes + " --out " + dir.file("d2"));
    CHECK(rerun.code == 0);
    CHECK(read_file(dir.file("d1/ball_90.xyz")) == read_file(dir.file("d2/ball_90.xyz")));
    CHECK(read_file(dir.file("d1/box_90.xyz")) == read_file(dir.file("d2/box_90.xyz")));

    CHECK(run_cli(dir, "make-dataset --counts 90 --seed 4 --meshes " + dir.file("absent") +
                           " --out " + dir.file("d3"))
              .code == 2);
    CHECK(run_cli(dir, "make-dataset --counts 90 --meshes " + meshes + " --out " +
                           dir.file("d3"))
              .code == 2);

    const std::string bad_only = dir.file("bad_meshes");
    fs::create_directories(bad_only);
    write_text(bad_only + "/broken.obj", "v 0 0 0\nf 1 2 3\n");
    const CliResult all_bad = run_cli(dir, "make-dataset --counts 90 --seed 4 --meshes " +
                                               bad_only + " --out " + dir.file("d3"));
    CHECK(all_bad.code == 2);
    CHECK(contains(all_bad.err, "every mesh failed"));
}

TEST_CASE("add-noise matches the requested model and seed") {
    TempDir dir("cli_noise");
    const PointCloud clean =
        normalize_unit_sphere(poisson_disk_sample(testing::icosphere(2), 500, 11).cloud).cloud;
    save_points(clean, dir.file("a.xyz"));

    const std::string gauss = "add-noise --kind isotropic_gaussian --scale 0.02 --seed 7"
                              " --in " + dir.file("a.xyz");
    CHECK(run_cli(dir, gauss + " --out " + dir.file("b.xyz")).code == 0);
    const PointCloud noisy = load_points(dir.file("b.xyz"));
    REQUIRE(noisy.n() == clean.n());
    double sq_sum = 0.0;
    for (int i = 0; i < noisy.n(); ++i) sq_sum += dist2(noisy.points[i], clean.points[i]);
    // 1500 coordinate draws put the sample std within 10% of the target
    const double coord_std = std::sqrt(sq_sum / (3.0 * noisy.n()));
    CHECK(coord_std == doctest::Approx(0.02).epsilon(0.10));

    CHECK(run_cli(dir, gauss + " --out " + dir.file("b2.xyz")).code == 0);
    CHECK(read_file(dir.file("b.xyz")) == read_file(dir.file("b2.xyz")));

    CHECK(run_cli(dir, "add-noise --kind uniform_ball --scale 0.01 --seed 7 --in " +
                           dir.file("a.xyz") + " --out " + dir.file("u.xyz"))
              .code == 0);
    const PointCloud ball = load_points(dir.file("u.xyz"));
    REQUIRE(ball.n() == clean.n());
    double max_shift = 0.0;
    for (int i = 0; i < ball.n(); ++i)
        max_shift = std::max(max_shift, std::sqrt(dist2(ball.points[i], clean.points[i])));
    CHECK(max_shift <= 0.01 + 1e-12);
    CHECK(max_shift > 0.005);

    const CliResult bad_kind = run_cli(dir, "add-noise --kind sparkle --scale 0.01 --seed 1"
                                            " --in " + dir.file("a.xyz") +
                                            " --out " + dir.file("c.xyz"));
    CHECK(bad_kind.code == 2);
    CHECK(contains(bad_kind.err, "valid:"));

    CHECK(run_cli(dir, "add-noise --scale 0.01 --in " + dir.file("a.xyz") + " --out " +
                           dir.file("c.xyz"))
              .code == 2);

    const CliResult mismatch = run_cli(dir, "add-noise --scale 0.01 --seed 1 --in " +
                                                dir.file("a.xyz") + " --out " +
                                                dir.file("c.ply"));
    CHECK(mismatch.code == 2);
    CHECK(contains(mismatch.err, "mirror"));

    save_points(clean, dir.file("a.ply"));
    CHECK(run_cli(dir, "add-noise --scale 0.01 --seed 1 --in " + dir.file("a.ply") +
                           " --out " + dir.file("n.ply"))
              .code == 0);
    CHECK(load_points(dir.file("n.ply")).n() == clean.n());
}

TEST_CASE("evaluate reports exact zeros for a perfect result") {
    TempDir dir("cli_eval");
    const Mesh mesh = testing::icosphere(2);
    save_obj(mesh, dir.file("mesh.obj"));
    // self-evaluation centers every uniformity ball on a blue-noise sample, so
    // the smallest ball only sees a second point once spacing drops below its
    // radius; 6000 points on the unit sphere clear that with margin
    save_points(poisson_disk_sample(mesh, 6000, 5).cloud, dir.file("clean.xyz"));

    const CliResult res = run_cli(dir, "evaluate --denoised " + dir.file("clean.xyz") +
                                           " --clean " + dir.file("clean.xyz") + " --mesh " +
                                           dir.file("mesh.obj") + " --report " +
                                           dir.file("r.tsv"));
    CHECK(res.code == 0);
    CHECK(contains(res.err, "exceed 2048 points"));
    const auto lines = read_lines(dir.file("r.tsv"));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "file\tcd_x1e4\tp2m_x1e4\tuni_x1e3");
    CHECK(contains(res.out, lines[0]));
    CHECK(contains(res.out, lines[1]));

    const auto fields = split_tabs(lines[1]);
    REQUIRE(fields.size() == 4);
    CHECK(fields[0] == "clean.xyz");
    CHECK(std::stod(fields[1]) == 0.0);           // chamfer
    CHECK(std::stod(fields[2]) < 1e-6);           // sampled points sit on the mesh
    CHECK(std::stod(fields[3]) == 0.0);           // uniformity

    CHECK(run_cli(dir, "evaluate --denoised " + dir.file("absent.xyz") + " --clean " +
                           dir.file("clean.xyz") + " --report " + dir.file("r2.tsv"))
              .code == 2);
}

TEST_CASE("train denoise evaluate pipeline round trip") {
    TempDir dir("cli_pipeline");
    const std::string meshes = dir.file("meshes");
    fs::create_directories(meshes);
    save_obj(testing::icosphere(2), meshes + "/ball.obj");
    REQUIRE(run_cli(dir, "make-dataset --counts 1600,1700,1800 --seed 2 --meshes " + meshes +
                             " --out " + dir.file("data"))
                .code == 0);
    write_text(dir.file("tiny.cfg"), kTinyConfig);
    const std::string common = " --config " + dir.file("tiny.cfg") + " --data " +
                               dir.file("data");

    CHECK(run_cli(dir, "train --stage uninet" + common + " --out " + dir.file("u.ckpt"))
              .code == 2);

    const std::string backbone_cmd = "train --stage backbone" + common;
    const CliResult bb = run_cli(dir, backbone_cmd + " --out " + dir.file("b.ckpt"));
    CHECK(bb.code == 0);
    CHECK(contains(bb.out, "best epoch"));
    REQUIRE(fs::exists(dir.file("b.ckpt")));
    const auto bb_log = read_lines(dir.file("b.ckpt.csv"));
    REQUIRE(bb_log.size() == 3);
    CHECK(bb_log[0] == "epoch,lr,train_loss,val_cd,val_emd");

    CHECK(run_cli(dir, backbone_cmd + " --out " + dir.file("b2.ckpt")).code == 0);
    CHECK(read_file(dir.file("b.ckpt")) == read_file(dir.file("b2.ckpt")));
    CHECK(read_file(dir.file("b.ckpt.csv")) == read_file(dir.file("b2.ckpt.csv")));

    std::string longer(kTinyConfig);
    longer.replace(longer.find("train.epochs = 2"), 16, "train.epochs = 3");
    write_text(dir.file("longer.cfg"), longer);
    const CliResult resumed =
        run_cli(dir, "train --stage backbone --resume --config " + dir.file("longer.cfg") +
                         " --data " + dir.file("data") + " --out " + dir.file("b.ckpt"));
    CHECK(resumed.code == 0);
    CHECK(contains(resumed.out, "resuming backbone training at epoch"));

    const CliResult un = run_cli(dir, "train --stage uninet" + common + " --backbone " +
                                          dir.file("b2.ckpt") + " --out " + dir.file("u.ckpt"));
    CHECK(un.code == 0);
    CHECK(contains(un.out, "identity-refinement val emd"));
    REQUIRE(fs::exists(dir.file("u.ckpt")));
    CHECK(read_lines(dir.file("u.ckpt.csv")).size() == 3);

    REQUIRE(run_cli(dir, "add-noise --scale 0.02 --seed 3 --in " +
                             dir.file("data/ball_1600.xyz") + " --out " + dir.file("noisy.xyz"))
                .code == 0);

    const std::string denoise_cmd = "denoise --ckpt " + dir.file("u.ckpt") + " --config " +
                                    dir.file("tiny.cfg") + " --in " + dir.file("noisy.xyz");
    CHECK(run_cli(dir, denoise_cmd + " --out " + dir.file("den.xyz")).code == 0);
    CHECK(load_points(dir.file("den.xyz")).n() == 1600);
    CHECK(read_file(dir.file("den.xyz")) != read_file(dir.file("noisy.xyz")));

    CHECK(run_cli(dir, denoise_cmd + " --out " + dir.file("den2.xyz")).code == 0);
    CHECK(read_file(dir.file("den.xyz")) == read_file(dir.file("den2.xyz")));

    // t_act == T keeps the refinement head inactive for the whole schedule
    CHECK(run_cli(dir, denoise_cmd + " --t-act 4 --out " + dir.file("den_bb.xyz")).code == 0);
    CHECK(read_file(dir.file("den_bb.xyz")) != read_file(dir.file("den.xyz")));

    CHECK(run_cli(dir, denoise_cmd + " --t-act 9 --out " + dir.file("den3.xyz")).code == 2);
    CHECK(run_cli(dir, denoise_cmd + " --out " + dir.file("den.ply")).code == 2);

    const CliResult ev = run_cli(dir, "evaluate --denoised " + dir.file("den.xyz") +
                                          " --clean " + dir.file("data/ball_1600.xyz") +
                                          " --report " + dir.file("r.tsv"));
    CHECK(ev.code == 0);
    const auto report = read_lines(dir.file("r.tsv"));
    REQUIRE(report.size() == 2);
    CHECK(report[0] == "file\tcd_x1e4\tuni_x1e3\temd_x1e4");
    CHECK(std::stod(split_tabs(report[1])[1]) > 0.0);

    const CliResult mismatch = run_cli(dir, "evaluate --denoised " + dir.file("den.xyz") +
                                                " --clean " + dir.file("data/ball_1700.xyz") +
                                                " --report " + dir.file("r2.tsv"));
    CHECK(mismatch.code == 0);
    CHECK(contains(mismatch.err, "EMD column omitted"));
    CHECK(read_lines(dir.file("r2.tsv"))[0] == "file\tcd_x1e4\tuni_x1e3");
}
