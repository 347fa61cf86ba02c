#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "splatflow.h"

namespace fs = std::filesystem;

namespace {

const char* kMicroWorld = R"({
  "num_cameras": 2, "width": 32, "height": 24,
  "static_boxes": 2, "dynamic_objects": 1, "samples_per_scene": 1
})";

const char* kMicroTrain = R"({
  "epochs": 1, "learning_rate": 0.001, "seed": 3,
  "arch": {"base_channels": 4, "pyramid_levels": 2, "num_cameras": 2,
           "height": 24, "width": 32, "d_min": 1.0, "d_max": 40.0}
})";

std::string work_dir() {
  const std::string dir = (fs::temp_directory_path() / "sf_capi_test").string();
  return dir;
}

}  // namespace

TEST_CASE("C API end-to-end surface") {
  const std::string dir = work_dir();
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data_dir = dir + "/data";
  const std::string ckpt1 = dir + "/stage1.ckpt";
  const std::string ckpt2 = dir + "/stage2.ckpt";

  REQUIRE(sf_synth(kMicroWorld, 100, 1, data_dir.c_str()) == SF_OK);

  sf_dataset* data = nullptr;
  REQUIRE(sf_dataset_open(data_dir.c_str(), &data) == SF_OK);
  CHECK(sf_dataset_sample_count(data) == 1);

  REQUIRE(sf_train_stage1(data, kMicroTrain, ckpt1.c_str()) == SF_OK);
  CHECK(fs::exists(ckpt1));
  CHECK(fs::exists(ckpt1 + ".history.jsonl"));

  REQUIRE(sf_train_stage2(data, ckpt1.c_str(), kMicroTrain, 0, ckpt2.c_str()) == SF_OK);

  sf_weights* w = nullptr;
  REQUIRE(sf_weights_load(ckpt2.c_str(), &w) == SF_OK);
  CHECK(sf_weights_parameter_count(w) > 0);
  char manifest[1024];
  REQUIRE(sf_weights_manifest(w, manifest, sizeof manifest) == SF_OK);
  CHECK(std::string(manifest).find("stage=2") != std::string::npos);

  REQUIRE(sf_infer(w, data, 0, 0, (dir + "/infer").c_str()) == SF_OK);
  CHECK(fs::exists(dir + "/infer/cloud_t.ply"));
  REQUIRE(sf_render_mid(w, data, 0, 0, (dir + "/mid").c_str()) == SF_OK);
  CHECK(fs::exists(dir + "/mid/mid_cam0.ppm"));

  char summary[1024];
  REQUIRE(sf_evaluate(w, data, 0, (dir + "/metrics.jsonl").c_str(), summary, sizeof summary) ==
          SF_OK);
  CHECK(std::string(summary).find("psnr") != std::string::npos);
  CHECK(fs::exists(dir + "/metrics.jsonl"));

  // --no-residual path works with the same weights
  REQUIRE(sf_evaluate(w, data, 1, nullptr, summary, sizeof summary) == SF_OK);

  sf_weights_free(w);
  sf_dataset_free(data);
}

TEST_CASE("C API error reporting") {
  CHECK(sf_synth(nullptr, 0, 0, nullptr) == SF_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(sf_last_error()) > 0);

  sf_dataset* data = nullptr;
  CHECK(sf_dataset_open("/nonexistent/path", &data) == SF_ERR_IO);

  sf_weights* w = nullptr;
  CHECK(sf_weights_load("/nonexistent/ckpt", &w) == SF_ERR_IO);

  // malformed config JSON key
  const std::string dir = work_dir() + "_err";
  fs::remove_all(dir);
  REQUIRE(sf_synth(kMicroWorld, 7, 1, (dir + "/d").c_str()) == SF_OK);
  sf_dataset* d2 = nullptr;
  REQUIRE(sf_dataset_open((dir + "/d").c_str(), &d2) == SF_OK);
  CHECK(sf_train_stage1(d2, "{\"bogus_key\": 1}", (dir + "/x.ckpt").c_str()) == SF_ERR_IO);
  sf_dataset_free(d2);

  CHECK(std::string(sf_status_name(SF_ERR_CONTRACT)) == "contract_error");
  CHECK(std::string(sf_version()).size() > 0);
}

TEST_CASE("default configs are valid JSON and round-trip through training config parsing") {
  std::vector<char> buf(8192);
  REQUIRE(sf_default_world_config(buf.data(), buf.size()) == SF_OK);
  CHECK(std::string(buf.data()).find("num_cameras") != std::string::npos);
  REQUIRE(sf_default_train_config(buf.data(), buf.size()) == SF_OK);
  CHECK(std::string(buf.data()).find("learning_rate") != std::string::npos);
}
