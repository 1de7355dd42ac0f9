#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "shield/config.hpp"
#include "shield/errors.hpp"
#include "shield/io.hpp"
#include "shield/pipeline.hpp"

using namespace shield;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const auto p = fs::temp_directory_path() / "shield_test_io";
    fs::create_directories(p);
    return p;
}

ValueGrid small_grid() {
    ValueGrid vg;
    vg.grid = Grid3{5, 4, 3, -1, 1, -0.5, 0.5};
    for (std::size_t i = 0; i < vg.grid.size(); ++i) vg.values.push_back(0.01 * static_cast<double>(i) - 0.3);
    vg.meta = {0.99, 17, 3e-7, true, {1.0, 0.5}};
    return vg;
}

Dataset small_dataset() {
    const WorldConfig w;
    Dataset d;
    d.trajectories = gen_random(6, 12, w, 4);
    d.seed = 4;
    d.provenance = {0, 6, 12};
    return d;
}

}  // namespace

TEST_CASE("atomic writes replace the target and leave no temp file") {
    const auto path = (scratch_dir() / "atomic.bin").string();
    write_atomic(path, "first");
    CHECK(read_file(path) == "first");
    write_atomic(path, std::string("a\0b", 3));
    CHECK(read_file(path) == std::string("a\0b", 3));
    CHECK_FALSE(fs::exists(path + ".tmp"));
    CHECK_THROWS_AS(read_file((scratch_dir() / "missing").string()), Error);
    // parent directories are created; a file in the way is an error
    write_atomic((scratch_dir() / "nested" / "deeper" / "x").string(), "x");
    CHECK(read_file((scratch_dir() / "nested" / "deeper" / "x").string()) == "x");
    CHECK_THROWS_AS(write_atomic(path + "/x", "x"), Error);
    CHECK(read_file(path) == std::string("a\0b", 3));
}

TEST_CASE("value grids round-trip at float precision") {
    const auto vg = small_grid();
    const auto bytes = encode_value_grid(vg, "abc");
    CHECK(bytes.rfind("SHIELD-VALUEGRID 1 ", 0) == 0);
    CHECK(encode_value_grid(vg, "abc") == bytes);
    std::string hash;
    const auto back = decode_value_grid(bytes, &hash);
    CHECK(hash == "abc");
    CHECK(back.grid == vg.grid);
    REQUIRE(back.values.size() == vg.values.size());
    for (std::size_t i = 0; i < vg.values.size(); ++i) {
        CHECK(back.values[i] == static_cast<double>(static_cast<float>(vg.values[i])));
    }
    CHECK(back.meta.iterations == 17);
    CHECK(back.meta.converged);
    CHECK(back.meta.gamma == 0.99);
}

TEST_CASE("corrupted binary artifacts are rejected") {
    const auto bytes = encode_value_grid(small_grid(), "abc");
    CHECK_THROWS_AS(decode_value_grid(bytes.substr(0, bytes.size() - 1)), Error);
    CHECK_THROWS_AS(decode_value_grid(bytes + "x"), Error);
    CHECK_THROWS_AS(decode_value_grid("SHIELD-ENSEMBLE" + bytes.substr(16)), Error);
    auto wrongVersion = bytes;
    wrongVersion[17] = '2';
    CHECK_THROWS_AS(decode_value_grid(wrongVersion), Error);
    CHECK_THROWS_AS(decode_value_grid(""), Error);
}

TEST_CASE("ensembles and margin models round-trip exactly") {
    Ensemble ens(3, 17, 1e-4, 8);
    ens.set_output_scale({0.3, 0.3, 0.1});
    ens.set_output_anchor({0, 0, 1});
    ens.final_losses() = {-1.0, -2.0, -3.0};
    MarginTrainConfig mc;
    mc.epochs = 2;
    const auto margin = train_margin_classifier(small_dataset(), mc);

    const auto bytes = encode_ensemble(ens, &margin, "h1");
    CHECK(encode_ensemble(ens, &margin, "h1") == bytes);
    MarginModel m2;
    bool has = false;
    std::string hash;
    const auto back = decode_ensemble(bytes, &m2, &has, &hash);
    CHECK(has);
    CHECK(hash == "h1");
    CHECK(back.size() == 3);
    CHECK(back.seed() == 17);
    CHECK(back.var_floor() == 1e-4);
    CHECK(back.final_losses() == ens.final_losses());
    for (const DubinsState z : {DubinsState{0.1, -0.4, 2.0}, DubinsState{-0.8, 0.3, -1.0}}) {
        for (int a = 0; a < kNumActions; ++a) {
            const auto p = ens.predict_all(z, ActionId(a));
            const auto q = back.predict_all(z, ActionId(a));
            for (int k = 0; k < 3; ++k) {
                CHECK(p[static_cast<std::size_t>(k)].mean == q[static_cast<std::size_t>(k)].mean);
                CHECK(p[static_cast<std::size_t>(k)].variance == q[static_cast<std::size_t>(k)].variance);
            }
        }
        CHECK(m2.margin_of(z) == margin.margin_of(z));
    }
    CHECK(m2.degenerate == margin.degenerate);

    const auto noMargin = encode_ensemble(ens, nullptr, "h1");
    decode_ensemble(noMargin, &m2, &has);
    CHECK_FALSE(has);
}

TEST_CASE("q-functions round-trip exactly") {
    Rng rng = make_rng(8);
    const QFunction q(4, {12, 6}, rng, 0.7);
    const auto bytes = encode_qfunction(q, {12, 6}, "qq");
    std::string hash;
    const auto back = decode_qfunction(bytes, &hash);
    CHECK(hash == "qq");
    CHECK(back.net().parameters() == q.net().parameters());
    CHECK(back.values(DubinsState{0.2, 0.1, 1.0}) == q.values(DubinsState{0.2, 0.1, 1.0}));
}

TEST_CASE("datasets round-trip and tampering is detected") {
    const auto d = small_dataset();
    const auto text = encode_dataset(d, "dd");
    CHECK(encode_dataset(d, "dd") == text);
    std::string hash;
    const auto back = decode_dataset(text, WorldConfig{}, &hash);
    CHECK(hash == "dd");
    CHECK(back.seed == d.seed);
    CHECK(back.provenance == d.provenance);
    CHECK(back.trajectories == d.trajectories);

    // altering one recorded action breaks the replay check
    auto j = json::parse(text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n') - 1));
    auto& acts = j.at("actions");
    acts[0] = (acts[0].get<int>() + 1) % kNumActions;
    std::string tampered = text.substr(0, text.find('\n') + 1) + j.dump() + "\n" +
                           text.substr(text.find('\n', text.find('\n') + 1) + 1);
    CHECK_THROWS_AS(decode_dataset(tampered, WorldConfig{}), Error);
    // a missing trajectory is caught by the count
    CHECK_THROWS_AS(decode_dataset(text.substr(0, text.rfind('\n', text.size() - 2) + 1), WorldConfig{}), Error);
}

TEST_CASE("calibration results round-trip including an infinite threshold") {
    CalibrationResult r;
    r.epsilonHat = std::numeric_limits<double>::infinity();
    r.degenerate = true;
    r.trajScores = {0.1, 0.2, 0.3, 0.4};
    r.N = 4;
    r.config = {0.05, 0.1};
    const auto j = to_json(r, "cc");
    CHECK(j.at("epsilonHat").is_null());
    std::string hash;
    const auto back = calibration_from_json(json::parse(j.dump()), &hash);
    CHECK(hash == "cc");
    CHECK(std::isinf(back.epsilonHat));
    CHECK(back.degenerate);
    CHECK(back.trajScores == r.trajScores);
    CHECK(back.config.alphaTrans == 0.1);

    r.epsilonHat = 0.25;
    r.degenerate = false;
    CHECK(calibration_from_json(to_json(r, "cc")).epsilonHat == 0.25);
}

TEST_CASE("rollout logs expose task actions and the start state") {
    RolloutResult r;
    FilterDecision pass{ActionId(0), ActionId(0), false, false, 0.4, 0.0, std::nullopt};
    FilterDecision halt{ActionId(2), std::nullopt, true, true, -0.1, 0.9, 0.8};
    r.records = {{0, {0.1, 0.2, 0.3}, pass}, {1, {0.2, 0.2, 0.3}, halt}};
    const auto log = encode_rollout_log(r);
    CHECK(decode_task_actions(log) == std::vector<ActionId>{ActionId(0), ActionId(2)});
    CHECK(decode_log_start(log) == DubinsState{0.1, 0.2, 0.3});
    const auto second = json::parse(log.substr(log.find('\n') + 1));
    CHECK(second["executed"] == "HALT");
    CHECK(second["uFallback"] == 0.8);
    CHECK_THROWS_AS(decode_log_start(""), Error);
    CHECK_THROWS_AS(decode_task_actions("{\"aTask\": 5}\n"), Error);
}

TEST_CASE("config hash mismatches are refused") {
    CHECK_NOTHROW(require_config("a", "a", "x"));
    try {
        require_config("a", "b", "ensemble");
        FAIL("expected a mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigMismatch);
    }
}

TEST_CASE("configs round-trip through json") {
    for (const auto& cfg : {circle_preset(), band_preset()}) {
        const auto back = config_from_json(json::parse(to_json(cfg).dump(2)));
        CHECK(canonical_dump(back) == canonical_dump(cfg));
        CHECK(config_hash(back) == config_hash(cfg));
    }
    CHECK(config_hash(circle_preset()) != config_hash(band_preset()));
    const auto h = config_hash(circle_preset());
    CHECK(h.size() == 64);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("config hash agrees with the system sha256sum") {
    const auto cfg = band_preset();
    const auto path = (scratch_dir() / "canonical.json").string();
    write_atomic(path, canonical_dump(cfg));
    FILE* p = popen(("sha256sum " + path).c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[65] = {};
    const auto n = fread(buf, 1, 64, p);
    pclose(p);
    REQUIRE(n == 64);
    CHECK(config_hash(cfg) == std::string(buf, 64));
    CHECK(canonical_dump(cfg).find(' ') == std::string::npos);
    CHECK(config_hash(circle_preset()) == config_hash(config_from_json(json::object())));
}

TEST_CASE("partial configs keep defaults and unknown keys are rejected") {
    const auto c = config_from_json(json::parse(R"({"ensemble": {"K": 4}, "filter": {"delta": 0.2}})"));
    CHECK(c.ensemble.K == 4);
    CHECK(c.delta == 0.2);
    CHECK(c.ensemble.width == EnsembleConfig{}.width);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"ensmble": {}})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"ensemble": {"k": 4}})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"ensemble": {"K": "four"}})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"world": {"failure": {"type": "square"}}})")), Error);

    const auto path = (scratch_dir() / "cfg.json").string();
    write_atomic(path, R"({"penalty": {"kappa": -1}})");
    CHECK_THROWS_AS(load_config(path), Error);
    write_atomic(path, R"({"world": {"failure": {"type": "band", "halfWidth": 0.6}}})");
    CHECK(std::get<Band>(load_config(path).world.failure.shape).halfWidth == 0.6);
}

TEST_CASE("failure specs round-trip, including unions") {
    const auto f = FailureSpec::any_of({FailureSpec::circle(0.1, 0.2, 0.3), FailureSpec::band(0.7)});
    const auto back = failure_from_json(to_json(f));
    CHECK(to_json(back) == to_json(f));
    for (const DubinsState s : {DubinsState{0.1, 0.2, 0}, DubinsState{0, 0.9, 0}, DubinsState{-0.5, -0.1, 0}}) {
        CHECK(margin(s, back) == margin(s, f));
    }
}

TEST_CASE("solved grids equal their reloaded artifact") {
    ExperimentConfig cfg;
    cfg.grid = Grid3{21, 21, 15, -1, 1, -1, 1};
    const ValueGrid gt = stage_solve_gt(cfg);
    const ValueGrid back = decode_value_grid(encode_value_grid(gt, config_hash(cfg)));
    CHECK(back.values == gt.values);
}
