#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "freegan/run_config.hpp"
#include "freegan/trainer.hpp"
#include "testutil.hpp"

using namespace freegan;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_cfg() {
    TrainConfig c;
    c.spectral.sample_rate_hz = 800;
    c.spectral.frame_len = 8;
    c.spectral.frame_shift = 4;
    c.spectral.fft_size = 8;
    c.spectral.mel_bins = 3;
    c.model.width = 8;
    c.model.expansion = 2;
    c.model.kernel = 3;
    c.steps = 10;
    c.batch_size = 2;
    c.segment_frames = 12;
    c.seed = 4242;
    c.checkpoint_every = 100;
    return c;
}

Dataset tiny_dataset(int utterances = 4, size_t samples = 400) {
    Dataset d;
    for (int u = 0; u < utterances; ++u) {
        d.names.push_back("utt" + std::to_string(u));
        d.waves.push_back(testutil::random_wave(samples, 500 + u, 0.4));
    }
    return d;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("freegan_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<uint8_t> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("two seeded runs produce bitwise-identical loss logs") {
    const TrainConfig cfg = tiny_train_cfg();
    const Dataset data = tiny_dataset();
    auto run = [&] {
        std::vector<std::string> log;
        TrainHooks hooks;
        hooks.on_step = [&](long step, const LossReport& r) {
            log.push_back(format_log_line(step, r));
        };
        train(cfg, data, hooks);
        return log;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == 10);
    REQUIRE(a == b);
}

TEST_CASE("training rejects bad datasets") {
    const TrainConfig cfg = tiny_train_cfg();
    REQUIRE_THROWS_AS(train(cfg, Dataset{}), InvalidInput);
    Dataset tiny;
    tiny.names.push_back("short");
    tiny.waves.push_back(std::vector<real>(16, 0.1));  // < segment_frames * shift
    REQUIRE_THROWS_AS(train(cfg, tiny), InvalidInput);
}

TEST_CASE("checkpoint save/load round-trips bitwise at the file level") {
    const TrainConfig cfg = tiny_train_cfg();
    const Dataset data = tiny_dataset();
    const Checkpoint end = train(cfg, data);
    REQUIRE(end.step == 10);

    const fs::path dir = temp_dir("ckpt");
    const fs::path a = dir / "a.fgv";
    const fs::path b = dir / "b.fgv";
    save_checkpoint(end, a.string());
    const Checkpoint loaded = load_checkpoint(a.string());
    save_checkpoint(loaded, b.string());
    REQUIRE(slurp(a) == slurp(b));

    // loaded values are the float32 projection of the saved ones
    REQUIRE(loaded.model.params.size() == end.model.params.size());
    for (size_t p = 0; p < end.model.params.size(); ++p) {
        REQUIRE(loaded.model.params[p].name == end.model.params[p].name);
        for (size_t i = 0; i < end.model.params[p].value.size(); ++i)
            REQUIRE(loaded.model.params[p].value[i] ==
                    static_cast<real>(static_cast<float>(end.model.params[p].value[i])));
    }
    REQUIRE(loaded.step == 10);
    REQUIRE(loaded.cfg.seed == cfg.seed);
    REQUIRE(loaded.cfg.steps == cfg.steps);
}

TEST_CASE("corrupt checkpoints fail as FormatError, never crash") {
    const TrainConfig cfg = tiny_train_cfg();
    Checkpoint ck;
    ck.cfg = cfg;
    ck.model = init_model(cfg.spectral, cfg.model, cfg.seed);
    ck.opt.init(ck.model.params);

    const fs::path dir = temp_dir("corrupt");
    const fs::path good = dir / "good.fgv";
    save_checkpoint(ck, good.string());

    SECTION("truncated file") {
        auto bytes = slurp(good);
        bytes.resize(bytes.size() / 2);
        const fs::path bad = dir / "trunc.fgv";
        std::ofstream(bad, std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        REQUIRE_THROWS_AS(load_checkpoint(bad.string()), FormatError);
    }
    SECTION("bad magic") {
        auto bytes = slurp(good);
        bytes[0] = 'X';
        const fs::path bad = dir / "magic.fgv";
        std::ofstream(bad, std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        REQUIRE_THROWS_AS(load_checkpoint(bad.string()), FormatError);
    }
    SECTION("flipped payload byte breaks the CRC") {
        auto bytes = slurp(good);
        bytes[bytes.size() / 2] ^= 0x40;
        const fs::path bad = dir / "crc.fgv";
        std::ofstream(bad, std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        REQUIRE_THROWS_AS(load_checkpoint(bad.string()), FormatError);
    }
    SECTION("missing file") { REQUIRE_THROWS_AS(load_checkpoint("/nonexistent.fgv"), FormatError); }
}

TEST_CASE("ablation mismatch is a FormatError naming the tensor") {
    TrainConfig pseudo = tiny_train_cfg();
    Checkpoint ck;
    ck.cfg = pseudo;
    ck.model = init_model(pseudo.spectral, pseudo.model, pseudo.seed);
    ck.opt.init(ck.model.params);

    TrainConfig learnable = pseudo;
    learnable.model.prior = PriorMode::LearnableLinear;
    try {
        validate_resume_compat(ck, learnable);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        REQUIRE(std::string(e.what()).find("prior.w") != std::string::npos);
    }
    // and the opposite direction: checkpoint has a tensor the runtime lacks
    Checkpoint ck2;
    ck2.cfg = learnable;
    ck2.model = init_model(learnable.spectral, learnable.model, learnable.seed);
    ck2.opt.init(ck2.model.params);
    REQUIRE_THROWS_AS(validate_resume_compat(ck2, pseudo), FormatError);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
    TrainConfig cfg = tiny_train_cfg();
    const Dataset data = tiny_dataset();

    std::vector<LossReport> straight;
    {
        TrainHooks hooks;
        hooks.on_step = [&](long, const LossReport& r) { straight.push_back(r); };
        train(cfg, data, hooks);
    }

    TrainConfig first = cfg;
    first.steps = 5;
    const Checkpoint mid = train(first, data);
    const fs::path dir = temp_dir("resume");
    const fs::path p = dir / "mid.fgv";
    save_checkpoint(mid, p.string());
    const Checkpoint reloaded = load_checkpoint(p.string());

    std::vector<LossReport> resumed;
    {
        TrainHooks hooks;
        hooks.on_step = [&](long, const LossReport& r) { resumed.push_back(r); };
        TrainConfig rest = cfg;  // steps = 10
        train(rest, data, hooks, &reloaded);
    }
    REQUIRE(resumed.size() == 5);
    const real a = straight.back().total;
    const real b = resumed.back().total;
    REQUIRE(std::abs(a - b) / std::abs(a) < 1e-6);
}

TEST_CASE("every ablation flag combination trains briefly without numerical error") {
    const Dataset data = tiny_dataset(2, 300);
    for (int prior = 0; prior < 2; ++prior)
        for (int act = 0; act < 2; ++act)
            for (int weighted = 0; weighted < 2; ++weighted) {
                TrainConfig cfg = tiny_train_cfg();
                cfg.steps = 3;
                cfg.model.prior = prior ? PriorMode::LearnableLinear : PriorMode::PseudoInverse;
                cfg.model.activation = act ? Activation::Gelu : Activation::Snake;
                cfg.fwaw_weighted = weighted == 0;
                std::vector<LossReport> log;
                TrainHooks hooks;
                hooks.on_step = [&](long, const LossReport& r) { log.push_back(r); };
                const Checkpoint end = train(cfg, data, hooks);
                REQUIRE(log.size() == 3);
                for (const auto& r : log) REQUIRE(std::isfinite(r.total));
                // the learnable prior shows up in the parameter count
                if (prior)
                    REQUIRE(count_params(end.model) >
                            count_params(init_model(cfg.spectral, ModelConfig{8, 2, 3}, 1)));
            }
}

TEST_CASE("checkpoint cadence honors checkpoint_every plus a final checkpoint") {
    TrainConfig cfg = tiny_train_cfg();
    cfg.steps = 7;
    cfg.checkpoint_every = 3;
    std::vector<long> at;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](const Checkpoint& c) { at.push_back(c.step); };
    train(cfg, tiny_dataset(), hooks);
    REQUIRE(at == std::vector<long>{3, 6, 7});
}

TEST_CASE("run config parsing: defaults, overrides, comments, rejects") {
    const TrainConfig def = parse_run_config("");
    REQUIRE(def.spectral.sample_rate_hz == 16000);
    REQUIRE(def.model.width == 512);
    REQUIRE(def.optim.lr == 2e-4);
    REQUIRE(def.loss_weights.lambda_a == 0.45);
    REQUIRE(def.rho == 2.5);

    const TrainConfig c = parse_run_config(
        "# comment line\n"
        "width = 64\n"
        "activation = gelu\n"
        "prior = learnable_linear\n"
        "phase_loss = unweighted\n"
        "steps = 123   # trailing comment\n"
        "seed = 99\n");
    REQUIRE(c.model.width == 64);
    REQUIRE(c.model.activation == Activation::Gelu);
    REQUIRE(c.model.prior == PriorMode::LearnableLinear);
    REQUIRE(c.fwaw_weighted == false);
    REQUIRE(c.steps == 123);
    REQUIRE(c.seed == 99);

    REQUIRE_THROWS_AS(parse_run_config("not_a_key = 3\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config("width\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config("activation = tanh\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_run_config("frame_shift = 7\n"), ConfigError);  // breaks COLA
}

TEST_CASE("crc32 reference values") {
    // standard IEEE CRC-32 check value
    const char* s = "123456789";
    REQUIRE(crc32_ieee(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
    REQUIRE(crc32_ieee(nullptr, 0) == 0x00000000u);
}
