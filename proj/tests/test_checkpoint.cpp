#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "drsmt/checkpoint.hpp"
#include "drsmt/pipeline.hpp"

using namespace drsmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "drsmt_ckpt_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
    auto dir = temp_dir();

    SECTION("tensors and metadata survive bit-exactly") {
        std::mt19937_64 rng(3);
        Checkpoint ck;
        ck.set_meta("kind", "test");
        ck.set_meta("note", "contains spaces and = signs");
        Tensor2 a = Tensor2::uniform(7, 5, 3.0, rng);
        a.v[0] = 1e-300;
        a.v[1] = -1.7976931348623157e308;
        a.v[2] = 4.9406564584124654e-324;  // denormal min
        Tensor2 b = Tensor2::uniform(1, 9, 0.01, rng);
        ck.add_tensor("layer.w", a);
        ck.add_tensor("layer.b", b);
        const auto path = (dir / "t.ckpt").string();
        ck.save(path);

        Checkpoint back = Checkpoint::load(path);
        CHECK(back.meta("kind") == "test");
        CHECK(back.meta("note") == "contains spaces and = signs");
        CHECK(back.tensor("layer.w").v == a.v);
        CHECK(back.tensor("layer.b").v == b.v);
    }

    SECTION("corrupt files name the file in the error") {
        const auto path = (dir / "bad.ckpt").string();
        {
            std::ofstream out(path);
            out << "not a checkpoint\n";
        }
        try {
            Checkpoint::load(path);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(path) != std::string::npos);
        }
    }

    SECTION("truncated tensor detected") {
        const auto path = (dir / "trunc.ckpt").string();
        {
            std::ofstream out(path);
            out << Checkpoint::kMagic << "\ntensor w 2 2\n1 2\n";
        }
        CHECK_THROWS_AS(Checkpoint::load(path), DataError);
    }

    SECTION("missing end marker detected") {
        const auto path = (dir / "noend.ckpt").string();
        {
            std::ofstream out(path);
            out << Checkpoint::kMagic << "\nmeta k v\n";
        }
        CHECK_THROWS_AS(Checkpoint::load(path), DataError);
    }

    SECTION("restore into mismatched shapes is an error") {
        Checkpoint ck;
        ck.add_tensor("w", Tensor2(2, 2));
        ParamSet ps;
        ps.add("w", Tensor2(3, 2));
        CHECK_THROWS_AS(ck.restore_params(ps), DataError);
    }
}

TEST_CASE("model checkpoints reproduce behavior exactly") {
    auto dir = temp_dir();

    SECTION("qnet round trip preserves every output") {
        QNet net = build_qnet(4, 6, 5, 99);
        const auto path = (dir / "q.ckpt").string();
        save_qnet_checkpoint(net, path);
        QNet back = load_qnet_checkpoint(path);
        std::mt19937_64 rng(1);
        for (int i = 0; i < 20; ++i) {
            Tensor2 s = Tensor2::uniform(5, 4, 1.0, rng);
            auto a = q_forward(net, s);
            auto b = q_forward(back, s);
            CHECK(a.first == b.first);
            CHECK(a.second == b.second);
        }
    }

    SECTION("vae round trip preserves reconstructions and the scaler") {
        VaeConfig cfg;
        cfg.latent = 3;
        cfg.hidden = 8;
        cfg.seed = 17;
        VaeModel m = build_vae(4, 3, cfg);
        ScalerStats scaler;
        scaler.mean = {0.5, -1.0, 2.0};
        scaler.std = {1.0, 0.25, 3.0};
        scaler.remove_flag = {false, false, false};
        const auto path = (dir / "v.ckpt").string();
        save_vae_checkpoint(m, scaler, {"s1", "s2", "s3"}, path);

        LoadedVae back = load_vae_checkpoint(path);
        CHECK(back.features == std::vector<std::string>{"s1", "s2", "s3"});
        CHECK(back.scaler.mean == scaler.mean);
        CHECK(back.scaler.std == scaler.std);
        std::mt19937_64 rng(2);
        Tensor2 x = Tensor2::uniform(2, 12, 1.0, rng);
        CHECK(reconstruct(back.model, x).v == reconstruct(m, x).v);
    }

    SECTION("wrong checkpoint kind rejected") {
        QNet net = build_qnet(3, 4, 5, 1);
        const auto path = (dir / "kind.ckpt").string();
        save_qnet_checkpoint(net, path);
        CHECK_THROWS_AS(load_vae_checkpoint(path), DataError);
    }
}
