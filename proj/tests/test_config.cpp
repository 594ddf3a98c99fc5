#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "drsmt/config.hpp"

using namespace drsmt;
namespace fs = std::filesystem;

namespace {

RunConfig parse_str(const std::string& text) {
    std::istringstream in(text);
    return parse_config_text(in, "<test>");
}

}  // namespace

TEST_CASE("config parsing") {
    SECTION("minimal config needs only a seed") {
        auto cfg = parse_str("[run]\nseed = 42\n");
        CHECK(cfg.seed == 42);
        CHECK(cfg.n_steps == 25);
        CHECK(cfg.k_folds == 5);
        CHECK(cfg.agent.hidden == 64);
        CHECK(cfg.reward.tp_val == 10.0);
        cfg.validate();
    }

    SECTION("seed is mandatory") {
        auto cfg = parse_str("[data]\nn_steps = 10\n");
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    SECTION("values land in their sections") {
        auto cfg = parse_str(
            "[run]\nseed = 7\nfixed_lambda = 1.5\ndisable_al = true\n"
            "[data]\nn_steps = 12\ntrain_fraction = 0.3\n"
            "[vae]\nlatent = 4\n"
            "[agent]\nhidden = 16\nepisodes = 3\n"
            "[reward]\npenalty_mode = subtract_on_normal\nlambda0 = 2.0\n"
            "[active]\nk_al = 3\n");
        CHECK(cfg.fixed_lambda.has_value());
        CHECK(*cfg.fixed_lambda == 1.5);
        CHECK(cfg.disable_al);
        CHECK(cfg.n_steps == 12);
        CHECK(cfg.train_fraction == 0.3);
        CHECK(cfg.vae.latent == 4);
        CHECK(cfg.agent.hidden == 16);
        CHECK(cfg.agent.episodes == 3);
        CHECK(cfg.reward.penalty_mode == RewardConfig::PenaltyMode::subtract_on_normal);
        CHECK(cfg.lambda0 == 2.0);
        CHECK(cfg.active.k_al == 3);
        // derived stage seeds
        CHECK(cfg.synth.seed == 7);
        CHECK(cfg.vae.seed == 8);
        CHECK(cfg.agent.seed == 9);
    }

    SECTION("comments and blank lines ignored") {
        auto cfg = parse_str("# top comment\n\n[run]\n# inner\nseed = 1\n");
        CHECK(cfg.seed == 1);
    }

    SECTION("unknown keys rejected") {
        CHECK_THROWS_AS(parse_str("[run]\nseed = 1\nbogus = 2\n"), ConfigError);
    }

    SECTION("key outside a section rejected") {
        CHECK_THROWS_AS(parse_str("seed = 1\n"), ConfigError);
    }

    SECTION("malformed booleans and numbers rejected") {
        CHECK_THROWS_AS(parse_str("[run]\nseed = 1\ndisable_al = maybe\n"), ConfigError);
        CHECK_THROWS_AS(parse_str("[run]\nseed = 1\n[data]\nn_steps = twelve\n"), ConfigError);
    }

    SECTION("validation guards") {
        auto cfg = parse_str("[run]\nseed = 1\n[data]\ntrain_fraction = 1.5\n");
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        auto cfg2 = parse_str("[run]\nseed = 1\n[reward]\ntp = -1\n");
        CHECK_THROWS_AS(cfg2.validate(), ConfigError);
        auto cfg3 = parse_str("[run]\nseed = 1\n[reward]\nlambda0 = 99\n");
        CHECK_THROWS_AS(cfg3.validate(), ConfigError);
        auto cfg4 = parse_str("[run]\nseed = 1\n[agent]\ngamma = 1.0\n");
        CHECK_THROWS_AS(cfg4.validate(), ConfigError);
        auto cfg5 = parse_str("[run]\nseed = 1\n[agent]\ntarget_sync = 0\n");
        CHECK_THROWS_AS(cfg5.validate(), ConfigError);
    }
}

TEST_CASE("effective config round trip") {
    auto dir = fs::temp_directory_path() / "drsmt_cfg_tests";
    fs::create_directories(dir);
    const auto path = (dir / "effective.cfg").string();

    auto cfg = parse_str(
        "[run]\nseed = 31\nfixed_lambda = 0.75\n"
        "[data]\ncsv = some/data.csv\nlabels = some/data.labels\nn_steps = 14\n"
        "[agent]\nlr = 0.0005\ngamma = 0.97\n"
        "[active]\noracle_cap = 0.03\n");
    write_effective_config(cfg, path);
    RunConfig back = load_config(path);

    CHECK(back.seed == cfg.seed);
    CHECK(back.fixed_lambda == cfg.fixed_lambda);
    CHECK(back.csv == cfg.csv);
    CHECK(back.labels == cfg.labels);
    CHECK(back.n_steps == cfg.n_steps);
    CHECK(back.train_fraction == cfg.train_fraction);
    CHECK(back.agent.lr == cfg.agent.lr);
    CHECK(back.agent.gamma == cfg.agent.gamma);
    CHECK(back.active.oracle_cap == cfg.active.oracle_cap);
    CHECK(back.reward.tp_val == cfg.reward.tp_val);
    CHECK(back.vae.latent == cfg.vae.latent);

    // writing the parsed copy again reproduces the file byte-for-byte
    const auto path2 = (dir / "effective2.cfg").string();
    write_effective_config(back, path2);
    std::ifstream f1(path), f2(path2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
}
