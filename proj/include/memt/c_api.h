/* C interface to the memory-transformer engine (libmemt).
 *
 * Every function returns MT_OK on success or an error code; the message for
 * the most recent failure on the calling thread is available through
 * mt_last_error(). Strings returned through out-parameters are heap-allocated
 * and must be released with mt_string_free(). */

#ifndef MEMT_C_API_H
#define MEMT_C_API_H

#ifdef __cplusplus
extern "C" {
#endif

enum {
  MT_OK = 0,
  MT_ERR_CONFIG = 2, /* bad config/usage (CLI exit code 2) */
  MT_ERR_RUNTIME = 3 /* runtime failure (CLI exit code 3) */
};

/* An opened checkpoint directory: model, vocabularies, run settings. */
typedef struct mt_checkpoint mt_checkpoint;

const char* mt_version(void);
const char* mt_last_error(void);
void mt_string_free(char* s);

/* Trains per the key=value config file; writes checkpoint, metrics.jsonl and
 * heldout.tsv under the config's out_dir. *json_out receives a summary. */
int mt_train(const char* config_path, char** json_out);

mt_checkpoint* mt_checkpoint_open(const char* dir);
void mt_checkpoint_close(mt_checkpoint* ckpt);

/* data_path: TSV file, or NULL for the checkpoint's held-out data.
 * mem_size: inference memory size; -1 evaluates as trained. */
int mt_eval(mt_checkpoint* ckpt, const char* data_path, int mem_size, char** json_out);

/* sizes_csv: e.g. "0,2,5,10,20,30". */
int mt_lesion(mt_checkpoint* ckpt, const char* sizes_csv, const char* data_path,
              char** json_out);

int mt_extend(mt_checkpoint* ckpt, int add, long long finetune_steps, const char* out_dir,
              char** json_out);

/* variants_csv: comma-separated variant names, or NULL/"" for the default
 * {baseline, mem, mem_bottleneck}. lengths_csv e.g. "128,256,512,1024". */
int mt_bench(const char* variants_csv, const char* lengths_csv, int mem, int trials,
             char** json_out);

int mt_dump_attention(mt_checkpoint* ckpt, const char* input_line, const char* out_dir,
                      char** json_out);

int mt_analyze(const char* dump_dir, const char* out_dir, char** json_out);

/* Greedy-decodes one line; max_out <= 0 picks a length-based cap. */
int mt_translate(mt_checkpoint* ckpt, const char* input_line, int max_out, char** text_out);

#ifdef __cplusplus
}
#endif

#endif /* MEMT_C_API_H */
