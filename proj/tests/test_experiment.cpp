#include <sstream>

#include "doctest.h"
#include "lwsr/binary_io.hpp"
#include "lwsr/experiment.hpp"
#include "support.hpp"

using namespace lwsr;
using nlohmann::json;

namespace {

json tiny_config(const std::string& mode = "lwsr") {
    return json::parse(R"({
      "seed": 2,
      "mode": ")" + mode + R"(",
      "stream": {"synthetic": {"num_tasks": 3, "slides_per_class": 6, "patches_per_slide": 5, "feature_dim": 6, "seed": 4}},
      "hyperparameters": {"number_of_epochs": 3, "learning_rate": 0.001, "buffer_size": 4, "batch_size": 4,
                          "minibatch_size": 4, "patch_sampling_number_per_wsi": 4, "distance_consistency_loss_weight": 1.0,
                          "scheduler": {"name": "steplr", "step_size": 2, "gamma": 0.5}},
      "model": {"hidden_dim": 8, "attention_dim": 4, "repr_dim": 5},
      "metrics": {"test_fraction": 0.25}
    })");
}

std::string config_error(const json& doc) {
    try {
        parse_experiment_config(doc);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::invalid_config);
        return e.what();
    }
    FAIL("expected parse_experiment_config to throw");
    return {};
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& doc) {
    const auto p = dir / "config.json";
    io::write_text_file(p, doc.dump(2));
    return p;
}

}  // namespace

TEST_CASE("config parsing fills every field") {
    const ExperimentConfig c = parse_experiment_config(tiny_config("finetune"));
    CHECK(c.seed == 2);
    CHECK(c.trainer.mode == TrainMode::finetune);
    CHECK(c.trainer.epochs_per_task == 3);
    CHECK(c.trainer.buffer_capacity == 4);
    CHECK(c.trainer.alpha == 1.0);
    CHECK(c.trainer.scheduler_step == 2);
    CHECK(c.trainer.repr_dim == 5);
    CHECK(c.test_fraction == 0.25);
    REQUIRE(std::holds_alternative<SyntheticSpec>(c.stream));
    CHECK(std::get<SyntheticSpec>(c.stream).num_tasks == 3);
    CHECK(std::get<SyntheticSpec>(c.stream).seed == 4);
}

TEST_CASE("config serialization round trips") {
    const ExperimentConfig c = parse_experiment_config(tiny_config());
    const json once = to_json(c);
    CHECK(to_json(parse_experiment_config(once)) == once);
}

TEST_CASE("config errors name the offending field") {
    json doc = tiny_config();
    doc["hyperparameters"]["learning_rat"] = 0.1;
    CHECK(config_error(doc).find("hyperparameters.learning_rat") != std::string::npos);

    doc = tiny_config();
    doc["mode"] = "ewc";
    CHECK(config_error(doc).find("ewc") != std::string::npos);

    doc = tiny_config();
    doc.erase("stream");
    CHECK(config_error(doc).find("stream") != std::string::npos);

    doc = tiny_config();
    doc["hyperparameters"]["buffer_size"] = "ten";
    CHECK(config_error(doc).find("buffer_size") != std::string::npos);

    doc = tiny_config();
    doc["hyperparameters"]["optimizer"] = "sgd";
    CHECK(config_error(doc).find("optimizer") != std::string::npos);

    doc = tiny_config();
    doc["metrics"]["test_fraction"] = 1.5;
    CHECK(config_error(doc).find("test_fraction") != std::string::npos);
}

TEST_CASE("the synthetic seed derives from the run seed when omitted") {
    json doc = tiny_config();
    doc["stream"]["synthetic"].erase("seed");
    const auto a = parse_experiment_config(doc);
    doc["seed"] = 3;
    const auto b = parse_experiment_config(doc);
    CHECK(std::get<SyntheticSpec>(a.stream).seed == derive_seed(2, "synthetic"));
    CHECK(std::get<SyntheticSpec>(a.stream).seed != std::get<SyntheticSpec>(b.stream).seed);
}

TEST_CASE("run_experiment produces one report per stage and consistency at the end") {
    const ExperimentResult r = run_experiment(parse_experiment_config(tiny_config()));
    REQUIRE(r.reports.size() == 3);
    REQUIRE(r.consistency.has_value());
    CHECK(r.consistency->rho.size() == 3);
    CHECK(r.reports.back().src.has_value());
    CHECK_FALSE(r.reports.front().src.has_value());
    for (const auto& rep : r.reports) {
        CHECK(rep.map >= 0.0);
        CHECK(rep.map <= 1.0);
    }

    const ExperimentResult joint = run_experiment(parse_experiment_config(tiny_config("joint")));
    CHECK(joint.reports.size() == 1);
    CHECK_FALSE(joint.consistency.has_value());
}

TEST_CASE("cmd_run writes a complete run directory; compare reads it") {
    const auto dir = lwsr::testing::scratch_dir("experiment_run");
    const auto cfg = write_config(dir, tiny_config());
    std::ostringstream out, err;
    CliOverrides o;
    o.out = dir / "a";
    REQUIRE(cmd_run(cfg, o, out, err) == 0);
    for (const char* f : {"status.json", "config.json", "trajectory.csv", "consistency.json", "run_log.csv",
                          "final_report.json", "checkpoints/stage_2.bin", "checkpoints/stage_2.index",
                          "reports/stage_0.json"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / "a" / f), f);
    }
    CHECK(json::parse(io::read_text_file(dir / "a" / "status.json"))["status"] == "complete");
    CHECK(out.str().find("SRC=") != std::string::npos);

    o.out = dir / "b";
    o.mode = "finetune";
    REQUIRE(cmd_run(cfg, o, out, err) == 0);
    const auto final_b = json::parse(io::read_text_file(dir / "b" / "final_report.json"));
    CHECK(final_b["mode"] == "finetune");

    const auto rows = compare_runs({dir / "a", dir / "b"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].run == "a");
    CHECK(rows[1].mode == "finetune");
    CHECK(rows[0].values.size() == comparison_columns().size());

    std::ostringstream cmp;
    CHECK(cmd_compare({dir / "a", dir / "b"}, dir / "cmp.csv", cmp, err) == 0);
    CHECK(cmp.str().find("lwsr") != std::string::npos);
    CHECK(io::read_text_file(dir / "cmp.csv").rfind("run,mode,mAP", 0) == 0);
}

TEST_CASE("two identical runs are byte-identical") {
    const auto dir = lwsr::testing::scratch_dir("experiment_determinism");
    const auto cfg = write_config(dir, tiny_config());
    std::ostringstream out, err;
    CliOverrides o;
    o.out = dir / "a";
    REQUIRE(cmd_run(cfg, o, out, err) == 0);
    o.out = dir / "b";
    REQUIRE(cmd_run(cfg, o, out, err) == 0);
    for (const char* f : {"final_report.json", "consistency.json", "run_log.csv", "checkpoints/stage_1.bin"}) {
        CHECK(io::read_text_file(dir / "a" / f) == io::read_text_file(dir / "b" / f));
    }
    o.out = dir / "c";
    o.seed = 99;
    REQUIRE(cmd_run(cfg, o, out, err) == 0);
    CHECK(io::read_text_file(dir / "a" / "checkpoints/stage_1.bin") !=
          io::read_text_file(dir / "c" / "checkpoints/stage_1.bin"));
}

TEST_CASE("command failures return 1 with a message") {
    const auto dir = lwsr::testing::scratch_dir("experiment_errors");
    std::ostringstream out, err;

    CHECK(cmd_run(write_config(dir, tiny_config()), {}, out, err) == 1);
    CHECK(err.str().find("output_dir") != std::string::npos);

    err.str("");
    CHECK(cmd_compare({dir}, std::nullopt, out, err) == 1);
    std::filesystem::create_directories(dir / "x");
    std::filesystem::create_directories(dir / "y");
    io::write_text_file(dir / "x" / "status.json", R"({"status": "incomplete"})");
    CHECK(cmd_compare({dir / "x", dir / "y"}, std::nullopt, out, err) == 1);

    err.str("");
    io::write_text_file(dir / "spec.json", R"({"num_tasks": 0})");
    CHECK(cmd_gen(dir / "spec.json", dir / "m.json", out, err) == 1);
    CHECK(err.str().find("num_tasks") != std::string::npos);
}

TEST_CASE("cmd_gen output feeds a manifest-backed run") {
    const auto dir = lwsr::testing::scratch_dir("experiment_gen");
    io::write_text_file(dir / "spec.json",
                        R"({"num_tasks": 2, "slides_per_class": 5, "patches_per_slide": 4, "feature_dim": 6, "seed": 1})");
    std::ostringstream out, err;
    REQUIRE(cmd_gen(dir / "spec.json", dir / "data" / "manifest.json", out, err) == 0);

    json doc = tiny_config();
    doc["stream"] = {{"manifest", "data/manifest.json"}};
    doc["output_dir"] = (dir / "run").string();
    const auto cfg = write_config(dir, doc);
    REQUIRE(cmd_run(cfg, {}, out, err) == 0);
    const auto report = json::parse(io::read_text_file(dir / "run" / "final_report.json"));
    CHECK(report["stage"] == 1);
}
