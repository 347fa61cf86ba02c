/* C API for the splatflow library: feed-forward reconstruction of dynamic
 * multi-camera scenes into 3D Gaussians, depth, and scene flow.
 *
 * All functions return sf_status; on failure sf_last_error() describes the
 * problem for the calling thread. Objects returned through out-parameters are
 * owned by the caller and released with the matching _free function.
 */
#ifndef SPLATFLOW_H
#define SPLATFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
  SF_OK = 0,
  SF_ERR_INVALID_ARGUMENT = 1,
  SF_ERR_SHAPE = 2,
  SF_ERR_DOMAIN = 3,
  SF_ERR_CONTRACT = 4,
  SF_ERR_IO = 5,
  SF_ERR_GENERATION = 6,
  SF_ERR_INTERNAL = 7
} sf_status;

const char* sf_status_name(sf_status status);
const char* sf_version(void);

/* Message for the most recent failure on this thread. */
const char* sf_last_error(void);

typedef struct sf_dataset sf_dataset;
typedef struct sf_weights sf_weights;

/* ---- synthetic data ------------------------------------------------- */

/* Generates `scene_count` scenes with seeds seed, seed+1, ... and writes the
 * dataset under out_dir. world_json may be NULL or empty for defaults. */
sf_status sf_synth(const char* world_json, uint64_t seed, int scene_count, const char* out_dir);

sf_status sf_dataset_open(const char* dir, sf_dataset** out);
void sf_dataset_free(sf_dataset* dataset);
int sf_dataset_sample_count(const sf_dataset* dataset);

/* ---- training ------------------------------------------------------- */

/* config_json may be NULL/empty for defaults. Stage 2 requires a stage-1
 * checkpoint path. The resulting checkpoint is written to out_ckpt and the
 * per-step loss history (JSON lines) next to it as <out_ckpt>.history.jsonl. */
sf_status sf_train_stage1(const sf_dataset* data, const char* config_json, const char* out_ckpt);
sf_status sf_train_stage2(const sf_dataset* data, const char* stage1_ckpt,
                          const char* config_json, int no_warp_loss, const char* out_ckpt);
sf_status sf_train_single_stage(const sf_dataset* data, const char* config_json,
                                const char* out_ckpt);

/* ---- checkpoints ---------------------------------------------------- */

sf_status sf_weights_load(const char* path, sf_weights** out);
void sf_weights_free(sf_weights* weights);
/* Copies the checkpoint manifest ("key=value\n" lines) into buf. */
sf_status sf_weights_manifest(const sf_weights* weights, char* buf, size_t buf_len);
int64_t sf_weights_parameter_count(const sf_weights* weights);

/* ---- inference / evaluation ----------------------------------------- */

/* Runs the feed-forward pass on one sample of the dataset and writes depth
 * (PFM), flows (.flo), clouds (PLY), and renders (PPM + 16-bit PNG) under
 * out_dir. no_residual disables the residual flow network. */
sf_status sf_infer(const sf_weights* weights, const sf_dataset* data, int sample_index,
                   int no_residual, const char* out_dir);

/* Mid-frame novel views for one sample, written as PPM + PNG under out_dir. */
sf_status sf_render_mid(const sf_weights* weights, const sf_dataset* data, int sample_index,
                        int no_residual, const char* out_dir);

/* Path-based variants operating on a single saved sample directory (as
 * written by sf_synth: <dataset>/sampleNNNN). */
sf_status sf_infer_sample_dir(const sf_weights* weights, const char* sample_dir, int no_residual,
                              const char* out_dir);
sf_status sf_render_mid_sample_dir(const sf_weights* weights, const char* sample_dir,
                                   int no_residual, const char* out_dir);

/* Evaluates the whole dataset; per-view records go to metrics_jsonl (one JSON
 * object per line) and the aggregate is written into summary_json_buf. */
sf_status sf_evaluate(const sf_weights* weights, const sf_dataset* data, int no_residual,
                      const char* metrics_jsonl, char* summary_json_buf, size_t buf_len);

/* Default configuration listings, as JSON, for --print-config style tooling. */
sf_status sf_default_world_config(char* buf, size_t buf_len);
sf_status sf_default_train_config(char* buf, size_t buf_len);

#ifdef __cplusplus
}
#endif

#endif /* SPLATFLOW_H */
