#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dmrn/config.hpp"
#include "dmrn/dataset_io.hpp"

using namespace dmrn;

namespace {

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

struct FileGuard {
    std::string path;
    ~FileGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("key=value parsing handles comments, blanks, and whitespace") {
    const auto kv = cfgio::parse_kv_text(
        "# a comment\n"
        "\n"
        "model.feature_dim = 32\n"
        "  train.lr=0.001  \n"
        "train.use_immediate = false\n");
    CHECK(kv.size() == 3);
    CHECK(kv.at("model.feature_dim") == "32");
    CHECK(kv.at("train.lr") == "0.001");

    cfgio::Settings s;
    cfgio::apply(s, kv);
    CHECK(s.model.feature_dim == 32);
    CHECK(s.train.lr == doctest::Approx(0.001));
    CHECK(s.train.use_immediate == false);
}

TEST_CASE("unknown keys and malformed values are rejected") {
    cfgio::Settings s;
    CHECK_THROWS_WITH_AS(cfgio::apply(s, {{"model.feture_dim", "32"}}),
                         doctest::Contains("unknown key"), std::runtime_error);
    CHECK_THROWS_AS(cfgio::apply(s, {{"train.lr", "fast"}}), std::runtime_error);
    CHECK_THROWS_AS(cfgio::apply(s, {{"model.feature_dim", "-3"}}), std::runtime_error);
    CHECK_THROWS_AS(cfgio::apply(s, {{"train.use_ultimate", "maybe"}}), std::runtime_error);
    CHECK_THROWS_AS(cfgio::parse_kv_text("no equals sign here\n"), std::runtime_error);
}

TEST_CASE("config json round trips preserve every field") {
    ModelConfig mc;
    mc.feature_dim = 48;
    mc.fusion_layers = 3;
    mc.encoder_norm = false;
    const ModelConfig mc2 = cfgio::model_from_json(cfgio::to_json(mc));
    CHECK(mc2.feature_dim == 48);
    CHECK(mc2.fusion_layers == 3);
    CHECK(mc2.encoder_norm == false);
    CHECK(mc2.n_max == mc.n_max);

    TrainConfig tc;
    tc.lr = 3e-4;
    tc.seed = 777;
    tc.box_loss_all_steps = true;
    const TrainConfig tc2 = cfgio::train_from_json(cfgio::to_json(tc));
    CHECK(tc2.lr == doctest::Approx(3e-4));
    CHECK(tc2.seed == 777);
    CHECK(tc2.box_loss_all_steps == true);

    synth::GenConfig gc;
    gc.grid_size = 4;
    gc.n_objects_max = 5;
    const synth::GenConfig gc2 = cfgio::gen_from_json(cfgio::to_json(gc));
    CHECK(gc2.grid_size == 4);
    CHECK(gc2.n_objects_max == 5);
}

TEST_CASE("dataset JSONL round trip reproduces instances exactly") {
    synth::GenConfig gen;
    gen.grid_size = 4;
    gen.image_px = 32;
    gen.n_objects_min = 3;
    gen.n_objects_max = 4;
    gen.n_max = 16;
    const auto data = dataio::make_dataset(71, 6, gen, 3);

    const std::string path = tmp_path("dmrn_data.jsonl");
    FileGuard g{path};
    dataio::save_jsonl(path, data);
    const auto loaded = dataio::load_jsonl(path);
    REQUIRE(loaded.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(loaded[i].token_ids == data[i].token_ids);
        CHECK(loaded[i].expression_text == data[i].expression_text);
        CHECK(loaded[i].target_index == data[i].target_index);
        CHECK(loaded[i].hop_count == data[i].hop_count);
        CHECK(loaded[i].gt_box.x_min == data[i].gt_box.x_min);
        CHECK(loaded[i].gt_box.y_max == data[i].gt_box.y_max);
        REQUIRE(loaded[i].scene.objects.size() == data[i].scene.objects.size());
        for (std::size_t j = 0; j < data[i].scene.objects.size(); ++j) {
            CHECK(loaded[i].scene.objects[j].pixel_box.x_min ==
                  data[i].scene.objects[j].pixel_box.x_min);
        }
        // renders must agree pixel for pixel
        const Tensor ra = synth::render(data[i].scene, gen.image_px);
        const Tensor rb = synth::render(loaded[i].scene, gen.image_px);
        CHECK(ra.data == rb.data);
        // the stored expression still uniquely selects the target
        const auto sat = synth::satisfying_objects(loaded[i].scene, loaded[i].expr);
        REQUIRE(sat.size() == 1);
        CHECK(sat[0] == loaded[i].target_index);
    }
}

TEST_CASE("malformed dataset lines are reported with their line number") {
    const std::string path = tmp_path("dmrn_bad.jsonl");
    FileGuard g{path};
    {
        std::ofstream out(path);
        out << "{not json}\n";
    }
    CHECK_THROWS_WITH_AS(dataio::load_jsonl(path), doctest::Contains("line 1"),
                         std::runtime_error);
}

TEST_CASE("dataset cycles hop counts") {
    synth::GenConfig gen;
    gen.grid_size = 4;
    gen.image_px = 32;
    gen.n_objects_min = 3;
    gen.n_objects_max = 4;
    gen.n_max = 16;
    const auto data = dataio::make_dataset(73, 6, gen, 3);
    CHECK(data[0].hop_count == 1);
    CHECK(data[1].hop_count == 2);
    CHECK(data[2].hop_count == 3);
    CHECK(data[3].hop_count == 1);
}
