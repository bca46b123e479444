#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>

#include "rela/cli.hpp"

using namespace rela;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::map<std::string, std::string> read_all_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream is(entry.path(), std::ios::binary);
        out[fs::relative(entry.path(), dir).string()] =
            std::string((std::istreambuf_iterator<char>(is)), {});
    }
    return out;
}

}  // namespace

TEST_CASE("merge_config rejects unknown keys and wrong types") {
    CHECK_THROWS_AS(cli::merge_config("overlap", json{{"bogus", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(cli::merge_config("rela-run", json{{"data", {{"bogus", 1}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(cli::merge_config("overlap", json{{"seed", "one"}}), std::invalid_argument);
    CHECK_THROWS_AS(cli::merge_config("nope", json{}), std::invalid_argument);

    const json merged = cli::merge_config("overlap", json{{"n", 50000}});
    CHECK(merged.at("n") == 50000);
    CHECK(merged.at("delta_mu") == 1.0);
}

TEST_CASE("config hash is stable and seed-sensitive") {
    const json a = cli::merge_config("overlap", json{});
    const json b = cli::merge_config("overlap", json{{"seed", 2}});
    CHECK(cli::config_hash("overlap", a) == cli::config_hash("overlap", a));
    CHECK(cli::config_hash("overlap", a) != cli::config_hash("overlap", b));
    CHECK(cli::config_hash("overlap", a).size() == 16);
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 12345.678901234567, 1e-17, -2.5e300, 0.0}) {
        const std::string s = cli::format_double(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
    CHECK(cli::format_double(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("overlap command replays byte-identically across thread counts") {
    const json user{{"n", 40000}};
    cli::CliOptions opts;
    opts.quiet = true;

    const fs::path d1 = fresh_dir("rela_cli_rep1");
    const fs::path d2 = fresh_dir("rela_cli_rep2");
    opts.out_dir = d1.string();
    opts.threads = 1;
    cli::run_command("overlap", user, opts);
    opts.out_dir = d2.string();
    opts.threads = 4;
    cli::run_command("overlap", user, opts);

    const auto files1 = read_all_files(d1);
    const auto files2 = read_all_files(d2);
    REQUIRE(!files1.empty());
    CHECK(files1 == files2);

    // replaying into the same directory leaves identical bytes
    opts.out_dir = d1.string();
    cli::run_command("overlap", user, opts);
    CHECK(read_all_files(d1) == files1);

    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("case-sigma writes one trajectory per (sigma, seed) plus a summary") {
    json user{{"sigma_grid", {0.1, 1.0}}, {"seeds", 2},        {"steps", 30},
              {"train_n", 64},            {"val_n", 256},      {"dim", 2}};
    cli::CliOptions opts;
    opts.quiet = true;
    const fs::path dir = fresh_dir("rela_cli_sigma");
    opts.out_dir = dir.string();
    const std::string run_dir = cli::run_command("case-sigma", user, opts);

    std::size_t csv_count = 0;
    for (const auto& entry : fs::directory_iterator(run_dir))
        if (entry.path().extension() == ".csv") ++csv_count;
    CHECK(csv_count == 4);

    std::ifstream is(fs::path(run_dir) / "summary.json");
    const json summary = json::parse(is);
    CHECK(summary.at("command") == "case-sigma");
    CHECK(summary.at("per_sigma").size() == 2);
    CHECK(summary.contains("final_mse_nondecreasing"));

    // a trajectory file has steps + 1 data lines
    std::ifstream traj(fs::path(run_dir) / "traj_sigma0.1_seed0.csv");
    std::size_t lines = 0;
    std::string line;
    while (std::getline(traj, line)) ++lines;
    CHECK(lines == 32);  // header + 31 records

    fs::remove_all(dir);
}

TEST_CASE("seed override lands in the effective config") {
    cli::CliOptions opts;
    opts.quiet = true;
    opts.seed_override = 777;
    const fs::path dir = fresh_dir("rela_cli_seed");
    opts.out_dir = dir.string();
    const std::string run_dir = cli::run_command("overlap", json{{"n", 20000}}, opts);
    std::ifstream is(fs::path(run_dir) / "config.json");
    const json cfg = json::parse(is);
    CHECK(cfg.at("seed") == 777);
    fs::remove_all(dir);
}

TEST_CASE("rela-run emits store, log and summary") {
    json user{{"data", {{"n_train", 256}, {"n_eval", 256}, {"dim", 4}}},
              {"encoder_hidden", {16}},
              {"encoder_out", 4},
              {"train", {{"epochs", 3}, {"batch_size", 64}}},
              {"probe", {{"epochs", 5}}},
              {"probe_every", 0}};
    cli::CliOptions opts;
    opts.quiet = true;
    const fs::path dir = fresh_dir("rela_cli_run");
    opts.out_dir = dir.string();
    const std::string run_dir = cli::run_command("rela-run", user, opts);
    CHECK(fs::exists(fs::path(run_dir) / "targets.store"));
    CHECK(fs::exists(fs::path(run_dir) / "run_log.csv"));
    std::ifstream is(fs::path(run_dir) / "summary.json");
    const json summary = json::parse(is);
    CHECK(summary.at("rela").contains("probe_accuracy"));
    CHECK(summary.at("rela").at("probe_accuracy").get<double>() >= 0.0);
    fs::remove_all(dir);
}
