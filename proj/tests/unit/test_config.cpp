#include "doctest.h"

#include "cyclemae/config.hpp"

#include <string>

using namespace cyclemae;
using namespace cyclemae::config;

TEST_CASE("the annotated example configuration parses to the defaults") {
    const RunConfig cfg = load_run_config(CYCLEMAE_SOURCE_DIR "/configs/example.jsonc");
    CHECK(cfg.model == backbone::ModelConfig{});
    CHECK(cfg.data.corpus.count == 200);
    CHECK(cfg.pretrain.mask_ratio == 0.75);
    CHECK(cfg.finetune.freeze_encoder);
    CHECK(cfg.ablation.patch_sizes.size() == 4);
    CHECK(cfg.output.dir.is_absolute());
    CHECK(cfg.output.dir.filename() == "example");
}

TEST_CASE("unknown keys and bad values name the key path") {
    CHECK_THROWS_WITH(parse_run_config(R"({"model": {"foo": 1}})"),
                      doctest::Contains("'model.foo'"));
    CHECK_THROWS_WITH(parse_run_config(R"({"bogus": {}})"), doctest::Contains("'bogus'"));
    CHECK_THROWS_WITH(parse_run_config(R"({"pretrain": {"epochs": "many"}})"),
                      doctest::Contains("pretrain.epochs"));
    CHECK_THROWS_WITH(parse_run_config(R"({"finetune": {"augment": {"spin": true}}})"),
                      doctest::Contains("finetune.augment.spin"));
    CHECK_THROWS(parse_run_config(R"({"data": {"frames": 16}})"));
    CHECK_THROWS(parse_run_config(R"({"model": {"patch_t": 3}})"));
    CHECK_THROWS(parse_run_config("{ not json"));
}

TEST_CASE("canonical JSON round-trips and seeds can be overridden") {
    RunConfig cfg = parse_run_config(R"(
      // comment
      {"pretrain": {"epochs": 3, "alpha": 0.25}, "finetune": {"task": "segmentation"}})",
                                     "/tmp/base");
    CHECK(cfg.data.dir == std::filesystem::path("/tmp/base/data"));
    const std::string text = to_json(cfg);
    const RunConfig back = parse_run_config(text, "/elsewhere");
    CHECK(to_json(back) == text);
    CHECK(back.pretrain.epochs == 3);
    CHECK(back.finetune.task == adapt::Task::segmentation);
    override_seed(cfg, 42);
    CHECK(cfg.data.corpus.seed == 42);
    CHECK(cfg.pretrain.seed == 42);
    CHECK(cfg.finetune.seed == 42);
}

TEST_CASE("split assignment is positional") {
    DataConfig d;
    d.corpus.count = 10;
    CHECK(d.split_of(0) == video::Split::train);
    CHECK(d.split_of(6) == video::Split::train);
    CHECK(d.split_of(7) == video::Split::val);
    CHECK(d.split_of(8) == video::Split::test);
    CHECK(d.split_of(9) == video::Split::test);
}
