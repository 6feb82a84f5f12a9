#include <bmdqn/checkpoint.hpp>
#include <bmdqn/meta.hpp>

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

using namespace bmdqn;
using namespace bmdqn::cli;

namespace {

std::filesystem::path temp_dir() {
    const std::filesystem::path dir = std::filesystem::path(BMDQN_TEST_TMP) / "ckpt";
    std::filesystem::create_directories(dir);
    return dir;
}

meta::MetaState sample_state(const net::NetSpec& spec) {
    meta::MetaConfig cfg;
    cfg.net = spec;
    meta::MetaState state = meta::initial_state(cfg, 321);
    state.iteration = 42;
    state.lambda_init.mu[0] = -0.12345678901234567;
    state.theta_prior.log_sigma[0] = -3.0000000000000004;
    return state;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("checkpoints reload bit-identically") {
    const net::NetSpec spec = net::mlp_spec({2, 5, 3});
    const meta::MetaState state = sample_state(spec);
    const std::string path = (temp_dir() / "roundtrip.ckpt").string();
    save_checkpoint(path, spec, state);

    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.spec.descriptor() == spec.descriptor());
    CHECK(loaded.state.iteration == 42);
    CHECK(loaded.state.theta_prior.mu == state.theta_prior.mu);
    CHECK(loaded.state.theta_prior.log_sigma == state.theta_prior.log_sigma);
    CHECK(loaded.state.lambda_init.mu == state.lambda_init.mu);
    CHECK(loaded.state.lambda_init.log_sigma == state.lambda_init.log_sigma);
    CHECK(loaded.state.lambda_init.spec_hash == spec.hash());
}

TEST_CASE("checkpoints for the scoring architecture also round-trip") {
    const net::NetSpec spec = net::phase_shared_spec({1, 4}, {4, 6, 1}, net::Activation::Tanh);
    const meta::MetaState state = sample_state(spec);
    const std::string path = (temp_dir() / "shared.ckpt").string();
    save_checkpoint(path, spec, state);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.spec.hash() == spec.hash());
    CHECK(loaded.state.lambda_init.mu == state.lambda_init.mu);
}

TEST_CASE("corrupted checkpoints are rejected with a reason") {
    const net::NetSpec spec = net::mlp_spec({1, 2});
    const meta::MetaState state = sample_state(spec);
    const std::filesystem::path dir = temp_dir();
    const std::string good = (dir / "good.ckpt").string();
    save_checkpoint(good, spec, state);
    const std::string original = slurp(good);

    SUBCASE("wrong magic line") {
        const std::string bad = (dir / "magic.ckpt").string();
        std::ofstream(bad, std::ios::binary) << "other-format 1\n";
        CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
    }

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint((dir / "absent.ckpt").string()),
                        std::runtime_error);
    }

    SUBCASE("tampered hash is reported with both values") {
        std::string text = original;
        const std::size_t pos = text.find("spec_hash ");
        REQUIRE(pos != std::string::npos);
        text[pos + 10] = text[pos + 10] == '0' ? '1' : '0';
        const std::string bad = (dir / "hash.ckpt").string();
        std::ofstream(bad, std::ios::binary) << text;
        CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("spec hash"),
                             std::runtime_error);
    }

    SUBCASE("malformed value in a vector section") {
        std::string text = original;
        const std::size_t pos = text.find("0x");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 2, "zz");
        const std::string bad = (dir / "value.ckpt").string();
        std::ofstream(bad, std::ios::binary) << text;
        CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
    }

    SUBCASE("truncated file") {
        const std::string bad = (dir / "short.ckpt").string();
        std::ofstream(bad, std::ios::binary) << original.substr(0, original.size() / 2);
        CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
    }
}
