// Exercises the shared library strictly through the C header.
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "umner/umner_c.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("umner_capi_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_file(const TempDir& dir, const std::string& name,
                       const std::string& body) {
  std::string p = (dir.path / name).string();
  std::ofstream(p) << body;
  return p;
}

const char* kTinyCorpus =
    "IMGID:100\n"
    "ali\tB-PER\n"
    "visited\tO\n"
    "lahore\tB-LOC\n"
    "\n"
    "IMGID:101\n"
    "khan\tB-PER\n"
    "leads\tO\n"
    "psl\tB-ORG\n"
    "\n";

}  // namespace

TEST_CASE("version and error plumbing") {
  REQUIRE(umner_version() != nullptr);
  CHECK(std::strlen(umner_version()) > 0);
  CHECK(umner_last_error() != nullptr);  // never NULL, even before any failure
  umner_string_free(nullptr);            // safe no-op
}

TEST_CASE("kappa through the C surface") {
  TempDir dir;
  std::string csv = write_file(dir, "m.csv", "A,B\n40,10\n20,30\n");
  double k = 0.0;
  REQUIRE(umner_kappa(csv.c_str(), &k) == UMNER_OK);
  CHECK(k == doctest::Approx(0.4));

  CHECK(umner_kappa((dir.path / "absent.csv").string().c_str(), &k) == UMNER_ERR_IO);
  CHECK(std::strlen(umner_last_error()) > 0);

  std::string bad = write_file(dir, "bad.csv", "A,B\n1,x\n2,3\n");
  CHECK(umner_kappa(bad.c_str(), &k) == UMNER_ERR_FORMAT);

  CHECK(umner_kappa(nullptr, &k) == UMNER_ERR_CONTRACT);
  CHECK(umner_kappa(csv.c_str(), nullptr) == UMNER_ERR_CONTRACT);
}

TEST_CASE("stats table") {
  TempDir dir;
  std::string data = write_file(dir, "train.txt", kTinyCorpus);
  const char* paths[] = {data.c_str()};
  char* table = nullptr;
  REQUIRE(umner_stats(paths, 1, &table) == UMNER_OK);
  REQUIRE(table != nullptr);
  std::string s(table);
  umner_string_free(table);
  CHECK(s.find("PER") != std::string::npos);
  CHECK(s.find("2") != std::string::npos);  // two PER entities, two tweets

  CHECK(umner_stats(paths, 0, &table) == UMNER_ERR_CONTRACT);
  CHECK(umner_stats(nullptr, 1, &table) == UMNER_ERR_CONTRACT);
}

TEST_CASE("gradcheck passes normally and fails under an injected fault") {
  char* report = nullptr;
  int pass = 0;
  REQUIRE(umner_gradcheck(7, 0, &report, &pass) == UMNER_OK);
  CHECK(pass == 1);
  REQUIRE(report != nullptr);
  CHECK(std::strlen(report) > 0);
  umner_string_free(report);

  report = nullptr;
  REQUIRE(umner_gradcheck(7, 1, &report, &pass) == UMNER_OK);
  CHECK(pass == 0);
  umner_string_free(report);
}

TEST_CASE("run config handles") {
  TempDir dir;
  umner_run* run = nullptr;
  CHECK(umner_run_open((dir.path / "absent.cfg").string().c_str(), &run) == UMNER_ERR_IO);
  CHECK(run == nullptr);

  std::string cfg = write_file(dir, "run.cfg", "d = 8\nheads = 2\n");
  REQUIRE(umner_run_open(cfg.c_str(), &run) == UMNER_OK);
  REQUIRE(run != nullptr);
  CHECK(umner_run_set(run, "lstm_hidden", "8") == UMNER_OK);
  CHECK(umner_run_set(run, "no_such_key", "1") == UMNER_ERR_CONFIG);
  CHECK(umner_run_set(run, "d", "banana") == UMNER_ERR_CONFIG);
  CHECK(umner_run_set(nullptr, "d", "8") == UMNER_ERR_CONTRACT);
  umner_run_close(run);
  umner_run_close(nullptr);  // safe no-op
}

TEST_CASE("train, evaluate, and predict on a tiny fixture") {
  TempDir dir;
  std::string data = write_file(dir, "train.txt", kTinyCorpus);
  fs::create_directories(dir.path / "feats");
  std::string ckpt = (dir.path / "model.umnr").string();
  std::string cfg_path = write_file(
      dir, "run.cfg",
      "d = 8\nheads = 2\nlstm_hidden = 8\nvisual_rows = 4\nvisual_dims = 8\n"
      "dropout = 0\nepochs = 2\nbatch_size = 2\nlearning_rate = 0.01\nseed = 5\n"
      "train_data = " + data + "\n"
      "features_dir = " + (dir.path / "feats").string() + "\n"
      "checkpoint_out = " + ckpt + "\n");

  umner_run* run = nullptr;
  REQUIRE(umner_run_open(cfg_path.c_str(), &run) == UMNER_OK);
  char* metrics = nullptr;
  REQUIRE(umner_train(run, &metrics) == UMNER_OK);
  umner_run_close(run);
  REQUIRE(metrics != nullptr);
  std::string m(metrics);
  umner_string_free(metrics);
  CHECK(m.find("overall.f1") != std::string::npos);
  CHECK(m.find("parameter_count") != std::string::npos);
  CHECK(fs::exists(ckpt));

  char* eval_metrics = nullptr;
  REQUIRE(umner_evaluate(ckpt.c_str(), data.c_str(), (dir.path / "feats").string().c_str(),
                         nullptr, &eval_metrics) == UMNER_OK);
  REQUIRE(eval_metrics != nullptr);
  CHECK(std::string(eval_metrics).find("overall.precision") != std::string::npos);
  umner_string_free(eval_metrics);

  std::string pred_path = (dir.path / "pred.txt").string();
  REQUIRE(umner_predict(ckpt.c_str(), data.c_str(),
                        (dir.path / "feats").string().c_str(),
                        pred_path.c_str()) == UMNER_OK);
  std::ifstream pf(pred_path);
  std::string line;
  REQUIRE(std::getline(pf, line));
  CHECK(line == "IMGID:100");

  CHECK(umner_evaluate((dir.path / "no.umnr").string().c_str(), data.c_str(),
                       (dir.path / "feats").string().c_str(), nullptr,
                       &eval_metrics) == UMNER_ERR_IO);
}
