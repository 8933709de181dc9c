#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "ctxenc/data.hpp"
#include "ctxenc/diagnostics.hpp"

using namespace ctxenc;

namespace {

namespace fs = std::filesystem;

const fs::path kTmp = fs::path(CTXENC_TEST_TMPDIR) / "cli";

struct RunOutcome {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

RunOutcome run_cli(const std::string& args) {
  const fs::path log = kTmp / "last_run.log";
  std::string command = std::string("CTXENC_FETCH_SCRIPT='") + CTXENC_FETCH_SCRIPT + "' '" +
                        CTXENC_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(command.c_str());
  RunOutcome outcome;
  outcome.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  outcome.output = buffer.str();
  return outcome;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// Small separable corpus written once per test binary run, registered under
/// the CR name so the loader accepts it (expected-count mismatches only warn).
fs::path synthetic_data_dir() {
  static const fs::path dir = [] {
    const fs::path root = kTmp / "data";
    fs::create_directories(root / "CR");
    Dataset ds = make_marker_dataset(240, 404);
    std::ofstream neg(root / "CR" / "neg.txt", std::ios::binary);
    std::ofstream pos(root / "CR" / "pos.txt", std::ios::binary);
    for (const Document& doc : ds.documents) {
      (doc.label == 0 ? neg : pos) << doc.text << "\n";
    }
    return root;
  }();
  return dir;
}

const char* kTinyFlags =
    "--steps 1 --embedding-dim 16 --position-dim 4 --rank 4 --epochs 2 --batch-size 32";

}  // namespace

TEST_CASE("version and help succeed") {
  fs::create_directories(kTmp);
  CHECK(run_cli("--version").exit_code == 0);
  RunOutcome help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("train") != std::string::npos);
  CHECK(help.output.find("cross-validate") != std::string::npos);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("train --bogus-flag").exit_code == 1);
  CHECK(run_cli("train --precision f99").exit_code == 1);
  CHECK(run_cli("no-such-subcommand").exit_code == 1);
  CHECK(run_cli("report").exit_code == 1);  // --table is required
  CHECK(run_cli("fetch-data NOPE --from /tmp").exit_code == 1);
}

TEST_CASE("missing datasets exit with code 2") {
  const fs::path empty = kTmp / "empty";
  fs::create_directories(empty);
  RunOutcome train = run_cli("train --dataset MPQA --data-dir '" + empty.string() + "'");
  CHECK(train.exit_code == 2);
  CHECK(train.output.find("fetch-data") != std::string::npos);
  CHECK(run_cli("report --table 2 --data-dir '" + empty.string() + "'").exit_code == 2);
}

TEST_CASE("gradcheck, oracle-check, and complexity-probe succeed") {
  const fs::path out = kTmp / "checks";
  CHECK(run_cli("gradcheck --output-dir '" + (out / "grad").string() + "'").exit_code == 0);
  CHECK(fs::exists(out / "grad" / "gradcheck.json"));
  CHECK(fs::exists(out / "grad" / "manifest.json"));

  CHECK(run_cli("oracle-check --instances 100 --output-dir '" + (out / "oracle").string() + "'")
            .exit_code == 0);
  CHECK(fs::exists(out / "oracle" / "oracle.json"));

  RunOutcome probe = run_cli("complexity-probe --n 8,16,32 --output-dir '" +
                             (out / "probe").string() + "'");
  CHECK(probe.exit_code == 0);
  CHECK(probe.output.find("n,context_measured") != std::string::npos);
  CHECK(fs::exists(out / "probe" / "complexity.csv"));
  CHECK(run_cli("complexity-probe --n 8").exit_code == 1);  // need two lengths
}

TEST_CASE("train writes its artifacts and the checkpoint") {
  const fs::path out = kTmp / "train_run";
  RunOutcome train = run_cli("train --dataset CR --data-dir '" + synthetic_data_dir().string() +
                             "' " + kTinyFlags + " --fold 1 --output-dir '" + out.string() + "'");
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(out / "model.bin"));
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "report.canonical.json"));
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "folds.txt"));
  CHECK(train.output.find("fold 1") != std::string::npos);
  CHECK(run_cli("train --dataset CR --data-dir '" + synthetic_data_dir().string() +
                "' --fold 5").exit_code == 1);

  const std::string manifest = file_bytes(out / "manifest.json");
  CHECK(manifest.find("\"schema\": \"run-manifest/1\"") != std::string::npos);
  CHECK(manifest.find("\"sha256\"") != std::string::npos);
  CHECK(manifest.find("\"config_fingerprint\"") != std::string::npos);
}

TEST_CASE("cross-validate is byte-deterministic across reruns") {
  const fs::path out1 = kTmp / "cv1";
  const fs::path out2 = kTmp / "cv2";
  const std::string base = "cross-validate --dataset CR --data-dir '" +
                           synthetic_data_dir().string() + "' " + kTinyFlags;
  REQUIRE(run_cli(base + " --output-dir '" + out1.string() + "'").exit_code == 0);
  REQUIRE(run_cli(base + " --output-dir '" + out2.string() + "'").exit_code == 0);
  CHECK(file_bytes(out1 / "report.canonical.json") == file_bytes(out2 / "report.canonical.json"));
  // the CSV's trailing wall_time_seconds column is volatile; everything else
  // must match byte for byte
  const auto strip_wall_time = [](std::string csv) {
    std::string out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
      out.append(line, 0, line.rfind(','));
      out.push_back('\n');
    }
    return out;
  };
  CHECK(strip_wall_time(file_bytes(out1 / "report.csv")) ==
        strip_wall_time(file_bytes(out2 / "report.csv")));
  CHECK(file_bytes(out1 / "folds.txt") == file_bytes(out2 / "folds.txt"));

  // a different seed must change the canonical report
  const fs::path out3 = kTmp / "cv3";
  REQUIRE(run_cli(base + " --seed 9999 --output-dir '" + out3.string() + "'").exit_code == 0);
  CHECK(file_bytes(out1 / "report.canonical.json") != file_bytes(out3 / "report.canonical.json"));
}

TEST_CASE("config files fill defaults and flags override them") {
  const fs::path cfg = kTmp / "defaults.ini";
  {
    std::ofstream out(cfg);
    out << "[cross-validate]\n"
        << "dataset=CR\n"
        << "steps=4\n"
        << "embedding-dim=16\nposition-dim=4\nrank=4\nepochs=1\nbatch-size=32\n";
  }
  const fs::path out = kTmp / "cfg_run";
  RunOutcome run = run_cli("cross-validate --config '" + cfg.string() + "' --data-dir '" +
                           synthetic_data_dir().string() + "' --steps 2 --output-dir '" +
                           out.string() + "'");
  REQUIRE(run.exit_code == 0);
  const std::string manifest = file_bytes(out / "manifest.json");
  CHECK(manifest.find("\"dataset\": \"CR\"") != std::string::npos);
  CHECK(manifest.find("\"steps\": 2") != std::string::npos);    // flag wins
  CHECK(manifest.find("\"epochs\": 1") != std::string::npos);   // config wins over default
}

TEST_CASE("fetch-data normalizes offline sources and verifies on re-fetch") {
  // stage raw source files for the offline path; wipe fetch state from
  // earlier runs (the tamper step below leaves a corrupted file behind)
  const fs::path src = kTmp / "offline_src";
  fs::remove_all(src);
  fs::remove_all(kTmp / "fetched");
  fs::create_directories(src);
  fs::copy_file(synthetic_data_dir() / "CR" / "neg.txt", src / "custrev.neg",
                fs::copy_options::overwrite_existing);
  fs::copy_file(synthetic_data_dir() / "CR" / "pos.txt", src / "custrev.pos",
                fs::copy_options::overwrite_existing);

  const fs::path target = kTmp / "fetched";
  const std::string cmd = "fetch-data CR --data-dir '" + target.string() + "' --from '" +
                          src.string() + "'";
  RunOutcome fetched = run_cli(cmd);
  REQUIRE(fetched.exit_code == 0);
  CHECK(fs::exists(target / "CR" / "neg.txt"));
  CHECK(fs::exists(target / "CR" / "pos.txt"));
  const std::string meta = file_bytes(target / "CR" / "meta.json");
  CHECK(meta.find("\"sha256_neg\"") != std::string::npos);

  // second fetch verifies against the recorded checksums
  RunOutcome verified = run_cli(cmd);
  CHECK(verified.exit_code == 0);
  CHECK(verified.output.find("verified") != std::string::npos);

  // tampering must be caught
  {
    std::ofstream out(target / "CR" / "neg.txt", std::ios::app);
    out << "tampered\n";
  }
  RunOutcome tampered = run_cli(cmd);
  CHECK(tampered.exit_code == 2);
  CHECK(tampered.output.find("checksum") != std::string::npos);
}

TEST_CASE("train results are reproducible from the written checkpoint") {
  const fs::path out = kTmp / "train_eval";
  const std::string base = "train --dataset CR --data-dir '" + synthetic_data_dir().string() +
                           "' " + kTinyFlags;
  REQUIRE(run_cli(base + " --output-dir '" + out.string() + "'").exit_code == 0);
  const fs::path out2 = kTmp / "train_eval2";
  REQUIRE(run_cli(base + " --output-dir '" + out2.string() + "'").exit_code == 0);
  CHECK(file_bytes(out / "model.bin") == file_bytes(out2 / "model.bin"));
}
