// memt command line: train / eval / lesion / extend / bench / dump-attn /
// analyze / translate. Drives the engine exclusively through the C API so the
// binary doubles as a usage example for foreign-language clients.
//
// Exit codes: 0 ok, 2 usage or config error, 3 runtime error.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "memt/c_api.h"

namespace {

int finish(int rc, char* json) {
  if (json) {
    std::fputs(json, stdout);
    std::fputc('\n', stdout);
    mt_string_free(json);
  }
  if (rc != MT_OK) std::fprintf(stderr, "error: %s\n", mt_last_error());
  return rc;
}

struct CheckpointHandle {
  mt_checkpoint* ptr = nullptr;
  ~CheckpointHandle() { mt_checkpoint_close(ptr); }
  bool open(const std::string& dir) {
    ptr = mt_checkpoint_open(dir.c_str());
    if (!ptr) std::fprintf(stderr, "error: %s\n", mt_last_error());
    return ptr != nullptr;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memory-augmented transformer workbench"};
  app.require_subcommand(1);

  std::string config_path, ckpt_dir, data_path, out_dir, dump_dir, input_line;
  std::string sizes = "0,2,5,10,20,30";
  std::string variants;
  std::string lengths = "128,256,512,1024";
  int mem_size = -1, add = 5, mem = 20, trials = 3, max_out = 0;
  long long finetune_steps = 0;

  auto* cmd_train = app.add_subcommand("train", "train a model from a config file");
  cmd_train->add_option("--config", config_path, "key=value run config")->required();

  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  cmd_eval->add_option("--checkpoint", ckpt_dir)->required();
  cmd_eval->add_option("--data", data_path, "TSV pairs; default: checkpoint heldout");
  cmd_eval->add_option("--mem-size", mem_size, "inference memory size (lesion)");

  auto* cmd_lesion = app.add_subcommand("lesion", "memory-size grid evaluation");
  cmd_lesion->add_option("--checkpoint", ckpt_dir)->required();
  cmd_lesion->add_option("--sizes", sizes, "comma-separated memory sizes");
  cmd_lesion->add_option("--data", data_path);

  auto* cmd_extend = app.add_subcommand("extend", "append memory and fine-tune");
  cmd_extend->add_option("--checkpoint", ckpt_dir)->required();
  cmd_extend->add_option("--add", add, "memory rows to append");
  cmd_extend->add_option("--steps", finetune_steps, "fine-tune steps");
  cmd_extend->add_option("--out", out_dir, "directory for the extended checkpoint");

  auto* cmd_bench = app.add_subcommand("bench", "attention complexity scaling");
  cmd_bench->add_option("--variants", variants, "comma-separated variant names");
  cmd_bench->add_option("--lengths", lengths, "comma-separated sequence lengths");
  cmd_bench->add_option("--mem", mem, "memory size for memory variants");
  cmd_bench->add_option("--trials", trials, "timing repetitions (median)");

  auto* cmd_dump = app.add_subcommand("dump-attn", "capture attention maps for one input");
  cmd_dump->add_option("--checkpoint", ckpt_dir)->required();
  cmd_dump->add_option("--input", input_line, "source line")->required();
  cmd_dump->add_option("--out", out_dir, "dump directory")->required();

  auto* cmd_analyze = app.add_subcommand("analyze", "classify a captured attention dump");
  cmd_analyze->add_option("--dump", dump_dir, "dump directory")->required();
  cmd_analyze->add_option("--out", out_dir, "report + heatmap directory");

  auto* cmd_translate = app.add_subcommand("translate", "greedy-decode one line");
  cmd_translate->add_option("--checkpoint", ckpt_dir)->required();
  cmd_translate->add_option("--input", input_line)->required();
  cmd_translate->add_option("--max-out", max_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : MT_ERR_CONFIG;
  }

  char* json = nullptr;
  if (cmd_train->parsed()) return finish(mt_train(config_path.c_str(), &json), json);

  if (cmd_bench->parsed()) {
    return finish(mt_bench(variants.empty() ? nullptr : variants.c_str(), lengths.c_str(), mem,
                           trials, &json),
                  json);
  }
  if (cmd_analyze->parsed()) {
    return finish(mt_analyze(dump_dir.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
                             &json),
                  json);
  }

  CheckpointHandle ckpt;
  if (!ckpt.open(ckpt_dir)) return MT_ERR_CONFIG;

  if (cmd_eval->parsed()) {
    return finish(mt_eval(ckpt.ptr, data_path.empty() ? nullptr : data_path.c_str(), mem_size,
                          &json),
                  json);
  }
  if (cmd_lesion->parsed()) {
    return finish(mt_lesion(ckpt.ptr, sizes.c_str(),
                            data_path.empty() ? nullptr : data_path.c_str(), &json),
                  json);
  }
  if (cmd_extend->parsed()) {
    return finish(mt_extend(ckpt.ptr, add, finetune_steps,
                            out_dir.empty() ? nullptr : out_dir.c_str(), &json),
                  json);
  }
  if (cmd_dump->parsed()) {
    return finish(mt_dump_attention(ckpt.ptr, input_line.c_str(), out_dir.c_str(), &json), json);
  }
  if (cmd_translate->parsed()) {
    char* text = nullptr;
    const int rc = mt_translate(ckpt.ptr, input_line.c_str(), max_out, &text);
    return finish(rc, text);
  }
  return MT_ERR_CONFIG;
}
