#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "memt/c_api.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  std::string path;
  TempDir() {
    path = (fs::temp_directory_path() / ("memt_capi_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter++)))
               .string();
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out = s;
  mt_string_free(s);
  return out;
}

// One tiny trained checkpoint shared by the API tests.
const std::string& shared_checkpoint() {
  static TempDir dir;
  static bool trained = false;
  static std::string ckpt = dir.path + "/run";
  if (!trained) {
    const std::string cfg_path = dir.path + "/run.cfg";
    std::ofstream(cfg_path) << "variant = mem\n"
                            << "n_layers_enc = 1\n"
                            << "n_layers_dec = 1\n"
                            << "d_model = 16\n"
                            << "d_ff = 32\n"
                            << "heads = 2\n"
                            << "m_enc = 2\n"
                            << "vocab_size = 16\n"
                            << "len_min = 2\n"
                            << "len_max = 5\n"
                            << "batch_size = 8\n"
                            << "steps = 5\n"
                            << "warmup_steps = 100\n"
                            << "seed = 3\n"
                            << "out_dir = " << ckpt << "\n";
    char* out = nullptr;
    const int rc = mt_train(cfg_path.c_str(), &out);
    INFO("train error: ", mt_last_error());
    REQUIRE(rc == MT_OK);
    const json summary = json::parse(take(out));
    CHECK(summary.at("steps").get<int>() == 5);
    trained = true;
  }
  return ckpt;
}

}  // namespace

TEST_CASE("version string") { CHECK(std::string(mt_version()).find("memt") == 0); }

TEST_CASE("train rejects unknown config keys with MT_ERR_CONFIG") {
  TempDir dir;
  const std::string cfg = dir.path + "/bad.cfg";
  std::ofstream(cfg) << "vairant = mem\nout_dir = " << dir.path << "/x\n";
  char* out = nullptr;
  CHECK(mt_train(cfg.c_str(), &out) == MT_ERR_CONFIG);
  CHECK(std::string(mt_last_error()).find("vairant") != std::string::npos);
}

TEST_CASE("train requires out_dir") {
  TempDir dir;
  const std::string cfg = dir.path + "/noout.cfg";
  std::ofstream(cfg) << "variant = baseline\n";
  char* out = nullptr;
  CHECK(mt_train(cfg.c_str(), &out) == MT_ERR_CONFIG);
  CHECK(std::string(mt_last_error()).find("out_dir") != std::string::npos);
}

TEST_CASE("open, eval and close a checkpoint") {
  mt_checkpoint* ckpt = mt_checkpoint_open(shared_checkpoint().c_str());
  REQUIRE(ckpt != nullptr);
  char* out = nullptr;
  REQUIRE(mt_eval(ckpt, nullptr, -1, &out) == MT_OK);
  const json j = json::parse(take(out));
  CHECK(j.at("mem_size").get<int>() == 2);
  CHECK(j.at("metrics").contains("bleu4"));
  CHECK(j.contains("config_hash"));
  mt_checkpoint_close(ckpt);
}

TEST_CASE("eval with a lesioned memory size") {
  mt_checkpoint* ckpt = mt_checkpoint_open(shared_checkpoint().c_str());
  REQUIRE(ckpt != nullptr);
  char* out = nullptr;
  REQUIRE(mt_eval(ckpt, nullptr, 4, &out) == MT_OK);
  const json j = json::parse(take(out));
  CHECK(j.at("mem_size").get<int>() == 4);
  mt_checkpoint_close(ckpt);
}

TEST_CASE("lesion grid over sizes") {
  mt_checkpoint* ckpt = mt_checkpoint_open(shared_checkpoint().c_str());
  REQUIRE(ckpt != nullptr);
  char* out = nullptr;
  REQUIRE(mt_lesion(ckpt, "0,2,4", nullptr, &out) == MT_OK);
  const json j = json::parse(take(out));
  CHECK(j.at("rows").size() == 3);
  CHECK(j.at("kind") == "lesion");
  mt_checkpoint_close(ckpt);
}

TEST_CASE("extension writes a new checkpoint") {
  TempDir dir;
  mt_checkpoint* ckpt = mt_checkpoint_open(shared_checkpoint().c_str());
  REQUIRE(ckpt != nullptr);
  char* out = nullptr;
  const std::string ext_dir = dir.path + "/extended";
  REQUIRE(mt_extend(ckpt, 2, 0, ext_dir.c_str(), &out) == MT_OK);
  const json j = json::parse(take(out));
  CHECK(j.at("rows").size() == 2);
  CHECK(fs::exists(ext_dir + "/manifest.json"));
  mt_checkpoint* ext = mt_checkpoint_open(ext_dir.c_str());
  REQUIRE(ext != nullptr);
  mt_checkpoint_close(ext);
  mt_checkpoint_close(ckpt);
}

TEST_CASE("bench returns slopes") {
  char* out = nullptr;
  REQUIRE(mt_bench("baseline", "8,16,32", 4, 1, &out) == MT_OK);
  const json j = json::parse(take(out));
  bool found = false;
  for (const auto& row : j.at("rows"))
    if (row.at("setting") == "baseline:slopes") {
      CHECK(row.at("metrics").at("analytic_slope").get<double>() ==
            doctest::Approx(2.0).epsilon(1e-9));
      found = true;
    }
  CHECK(found);
  CHECK(mt_bench("baseline", "8", 4, 1, &out) == MT_ERR_CONFIG);
}

TEST_CASE("dump and analyze round trip") {
  TempDir dir;
  mt_checkpoint* ckpt = mt_checkpoint_open(shared_checkpoint().c_str());
  REQUIRE(ckpt != nullptr);
  char* out = nullptr;
  const std::string dump_dir = dir.path + "/dump";
  REQUIRE(mt_dump_attention(ckpt, "4 5 6", dump_dir.c_str(), &out) == MT_OK);
  const json dj = json::parse(take(out));
  CHECK(dj.at("records").get<int>() > 0);
  CHECK(fs::exists(dump_dir + "/manifest.json"));

  const std::string an_dir = dir.path + "/analysis";
  REQUIRE(mt_analyze(dump_dir.c_str(), an_dir.c_str(), &out) == MT_OK);
  const json aj = json::parse(take(out));
  CHECK(aj.at("record_count").get<int>() == dj.at("records").get<int>());
  CHECK(fs::exists(an_dir + "/analysis.json"));
  mt_checkpoint_close(ckpt);
}

TEST_CASE("translate returns deterministic text") {
  mt_checkpoint* ckpt = mt_checkpoint_open(shared_checkpoint().c_str());
  REQUIRE(ckpt != nullptr);
  char* a = nullptr;
  char* b = nullptr;
  REQUIRE(mt_translate(ckpt, "4 5 6", 0, &a) == MT_OK);
  REQUIRE(mt_translate(ckpt, "4 5 6", 0, &b) == MT_OK);
  CHECK(take(a) == take(b));
  mt_checkpoint_close(ckpt);
}

TEST_CASE("null and missing inputs surface as error codes, not crashes") {
  CHECK(mt_checkpoint_open("/no/such/dir") == nullptr);
  CHECK(std::string(mt_last_error()).find("manifest") != std::string::npos);
  char* out = nullptr;
  CHECK(mt_eval(nullptr, nullptr, -1, &out) == MT_ERR_CONFIG);
  CHECK(mt_train(nullptr, &out) == MT_ERR_CONFIG);
  CHECK(mt_analyze("/no/such/dump", nullptr, &out) == MT_ERR_CONFIG);
}
