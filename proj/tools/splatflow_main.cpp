// splatflow command-line tool. Links only the C API.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "splatflow.h"

namespace {

std::string read_file_or_empty(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream f(path);
  if (!f) {
    std::cerr << "error: cannot read " << path << "\n";
    std::exit(2);
  }
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string git_describe() {
  FILE* p = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!p) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof buf, p)) out += buf;
  pclose(p);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

// One manifest per run: what ran, with which inputs, and the headline result.
void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_json, std::uint64_t seed,
                    const std::string& summary_json) {
  std::ofstream f(path);
  f << "{\n  \"command\": \"" << command << "\",\n  \"seed\": " << seed
    << ",\n  \"git\": \"" << git_describe() << "\",\n  \"config\": "
    << (config_json.empty() ? "null" : config_json) << ",\n  \"summary\": "
    << (summary_json.empty() ? "null" : summary_json) << "\n}\n";
}

int die(sf_status st, const char* what) {
  std::cerr << "error (" << sf_status_name(st) << ") in " << what << ": " << sf_last_error()
            << "\n";
  return 1;
}

struct DatasetHandle {
  sf_dataset* d = nullptr;
  ~DatasetHandle() { sf_dataset_free(d); }
};
struct WeightsHandle {
  sf_weights* w = nullptr;
  ~WeightsHandle() { sf_weights_free(w); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatflow: feed-forward multi-camera scene reconstruction"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_world, synth_out;
  std::uint64_t synth_seed = 0;
  int synth_scenes = 1;
  synth->add_option("--world", synth_world, "world config JSON file");
  synth->add_option("--seed", synth_seed, "base scene seed")->required();
  synth->add_option("--scenes", synth_scenes, "number of scenes (seeds seed..seed+n-1)");
  synth->add_option("--out", synth_out, "output dataset directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train stage 1, stage 2, or single-stage");
  int train_stage = 1;
  std::string train_data, train_config, train_ckpt_in, train_out;
  bool train_single = false, train_no_warp = false;
  train->add_option("--stage", train_stage, "training stage (1 or 2)");
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--config", train_config, "train config JSON file");
  train->add_option("--ckpt", train_ckpt_in, "input checkpoint (stage 2: the stage-1 result)");
  train->add_option("--out", train_out, "output checkpoint path")->required();
  train->add_flag("--single-stage", train_single, "train everything jointly from scratch");
  train->add_flag("--no-warp-loss", train_no_warp, "stage 2 with the warp weight set to zero");

  // infer
  auto* infer = app.add_subcommand("infer", "run the feed-forward pass on one sample");
  std::string infer_ckpt, infer_sample, infer_out;
  bool infer_no_residual = false;
  infer->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
  infer->add_option("--sample", infer_sample, "sample directory (<dataset>/sampleNNNN)")
      ->required();
  infer->add_option("--out", infer_out, "output directory")->required();
  infer->add_flag("--no-residual", infer_no_residual, "disable the residual flow network");

  // render-mid
  auto* mid = app.add_subcommand("render-mid", "render mid-frame novel views for one sample");
  std::string mid_ckpt, mid_out, mid_sample;
  bool mid_no_residual = false;
  mid->add_option("--ckpt", mid_ckpt, "checkpoint path")->required();
  mid->add_option("--sample", mid_sample, "sample directory (<dataset>/sampleNNNN)")->required();
  mid->add_option("--out", mid_out, "output directory")->required();
  mid->add_flag("--no-residual", mid_no_residual, "disable the residual flow network");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_out;
  bool eval_no_residual = false;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--out", eval_out, "metrics output path (JSON lines)")->required();
  eval->add_flag("--no-residual", eval_no_residual, "disable the residual flow network");

  // print-config
  auto* pc = app.add_subcommand("print-config", "print default world and train configs");

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    const std::string world_json = read_file_or_empty(synth_world);
    sf_status st = sf_synth(world_json.empty() ? nullptr : world_json.c_str(), synth_seed,
                            synth_scenes, synth_out.c_str());
    if (st != SF_OK) return die(st, "synth");
    write_manifest(synth_out + "/manifest.json", "synth", world_json, synth_seed, "");
    std::cout << "wrote dataset to " << synth_out << "\n";
    return 0;
  }

  if (train->parsed()) {
    DatasetHandle data;
    sf_status st = sf_dataset_open(train_data.c_str(), &data.d);
    if (st != SF_OK) return die(st, "train");
    const std::string config_json = read_file_or_empty(train_config);
    const char* cfg = config_json.empty() ? nullptr : config_json.c_str();
    if (train_single)
      st = sf_train_single_stage(data.d, cfg, train_out.c_str());
    else if (train_stage == 1)
      st = sf_train_stage1(data.d, cfg, train_out.c_str());
    else if (train_stage == 2) {
      if (train_ckpt_in.empty()) {
        std::cerr << "error: --stage 2 requires --ckpt <stage-1 checkpoint>\n";
        return 2;
      }
      st = sf_train_stage2(data.d, train_ckpt_in.c_str(), cfg, train_no_warp ? 1 : 0,
                           train_out.c_str());
    } else {
      std::cerr << "error: --stage must be 1 or 2\n";
      return 2;
    }
    if (st != SF_OK) return die(st, "train");
    write_manifest(train_out + ".manifest.json",
                   train_single ? "train --single-stage"
                                : (train_stage == 1 ? "train --stage 1" : "train --stage 2"),
                   config_json, 0, "");
    std::cout << "wrote checkpoint to " << train_out << "\n";
    return 0;
  }

  auto open_both = [&](const std::string& ckpt, const std::string& datadir, WeightsHandle& w,
                       DatasetHandle& d, const char* what) -> int {
    sf_status st = sf_weights_load(ckpt.c_str(), &w.w);
    if (st != SF_OK) return die(st, what);
    st = sf_dataset_open(datadir.c_str(), &d.d);
    if (st != SF_OK) return die(st, what);
    return -1;
  };

  if (infer->parsed()) {
    WeightsHandle w;
    sf_status st = sf_weights_load(infer_ckpt.c_str(), &w.w);
    if (st != SF_OK) return die(st, "infer");
    st = sf_infer_sample_dir(w.w, infer_sample.c_str(), infer_no_residual ? 1 : 0,
                             infer_out.c_str());
    if (st != SF_OK) return die(st, "infer");
    write_manifest(infer_out + "/manifest.json", "infer", "", 0, "");
    std::cout << "wrote inference products to " << infer_out << "\n";
    return 0;
  }

  if (mid->parsed()) {
    WeightsHandle w;
    sf_status st = sf_weights_load(mid_ckpt.c_str(), &w.w);
    if (st != SF_OK) return die(st, "render-mid");
    st = sf_render_mid_sample_dir(w.w, mid_sample.c_str(), mid_no_residual ? 1 : 0,
                                  mid_out.c_str());
    if (st != SF_OK) return die(st, "render-mid");
    write_manifest(mid_out + "/manifest.json", "render-mid", "", 0, "");
    std::cout << "wrote mid-frame renders to " << mid_out << "\n";
    return 0;
  }

  if (eval->parsed()) {
    WeightsHandle w;
    DatasetHandle d;
    int rc = open_both(eval_ckpt, eval_data, w, d, "eval");
    if (rc >= 0) return rc;
    std::vector<char> summary(4096);
    sf_status st = sf_evaluate(w.w, d.d, eval_no_residual ? 1 : 0, eval_out.c_str(),
                               summary.data(), summary.size());
    if (st != SF_OK) return die(st, "eval");
    write_manifest(eval_out + ".manifest.json", "eval", "", 0, summary.data());
    std::cout << summary.data() << "\n";
    return 0;
  }

  if (pc->parsed()) {
    std::vector<char> buf(8192);
    if (sf_default_world_config(buf.data(), buf.size()) == SF_OK)
      std::cout << "# world config\n" << buf.data() << "\n";
    if (sf_default_train_config(buf.data(), buf.size()) == SF_OK)
      std::cout << "# train config\n" << buf.data() << "\n";
    return 0;
  }
  return 0;
}
