// End-to-end exercise of the command-line tool: every subcommand, the files
// each one writes, and the exit-code contract (0 ok, 1 bad input, 2 runtime
// failure). Takes the binary path as argv[1]; runs in a throwaway temp dir.
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& label) {
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", label.c_str());
    if (!ok) ++failures;
}

// exit code of a shell command, with output silenced
int run(const std::string& cmd) {
    const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
    if (st == -1) return -1;
    return WIFEXITED(st) ? WEXITSTATUS(st) : -2;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_smoke <path-to-stms-binary>\n");
        return 2;
    }
    const std::string bin = argv[1];
    const fs::path root = fs::temp_directory_path() / "stms_cli_smoke";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string d = root.string();

    // synth: writes the dataset plus the resolved-config echo
    check(run(bin + " synth --nodes 3 --days 2 --seed 5 --out " + d +
              "/synth") == 0,
          "synth exits 0");
    check(fs::exists(root / "synth/synthetic.csv"), "synth writes the csv");
    check(fs::exists(root / "synth/synthetic.csv.meta"),
          "synth writes the meta file");
    check(fs::exists(root / "synth/config_resolved.txt"),
          "synth writes config_resolved.txt");

    // invalid input is a usage error, not a crash
    check(run(bin + " synth --nodes 0 --out " + d + "/bad") == 1,
          "synth --nodes 0 exits 1");

    // tiny training run
    const std::string model_flags =
        " --window 6 --horizon 3 --d-embed 2 --d-adaptive 2 --heads 2"
        " --d-state 4 --attn-layers 1 --mamba-layers 1 --expand 2";
    const std::string train_flags =
        model_flags + " --batch 32 --epochs 2 --lr 0.01 --seed 9";
    check(run(bin + " train --data " + d + "/synth/synthetic.csv --out " + d +
              "/run" + train_flags) == 0,
          "train exits 0");
    for (const char* f :
         {"checkpoint.stms", "epochs.csv", "metrics.csv",
          "config_resolved.txt"})
        check(fs::exists(root / "run" / f),
              std::string("train writes ") + f);

    // eval reads the checkpoint back and writes per-step metrics
    check(run(bin + " eval --data " + d + "/synth/synthetic.csv" +
              " --checkpoint " + d + "/run/checkpoint.stms --out " + d +
              "/eval") == 0,
          "eval exits 0");
    const std::string metrics = slurp(root / "eval/metrics.csv");
    check(metrics.rfind("step,mae,rmse,mape\n", 0) == 0,
          "eval metrics.csv has the header");
    check(count_lines(metrics) == 1 + 3 + 1,
          "eval metrics.csv has horizon rows plus the overall row");
    check(metrics.find("\nall,") != std::string::npos,
          "eval metrics.csv has the overall row");

    // a missing checkpoint is a runtime failure: exit 2
    check(run(bin + " eval --data " + d + "/synth/synthetic.csv" +
              " --checkpoint " + d + "/nope.stms --out " + d + "/eval2") == 2,
          "eval with missing checkpoint exits 2");

    // verification suite
    check(run(bin + " verify --seed 7") == 0, "verify exits 0");

    // bench: flops table is a pure function of the architecture, so two
    // runs must write identical tables
    check(run(bin + " bench --data " + d + "/synth/synthetic.csv --out " + d +
              "/bench1 --repeats 2" + model_flags) == 0,
          "bench exits 0");
    check(fs::exists(root / "bench1/flops.txt") &&
              fs::exists(root / "bench1/bench.txt"),
          "bench writes flops.txt and bench.txt");
    check(run(bin + " bench --data " + d + "/synth/synthetic.csv --out " + d +
              "/bench2 --repeats 2" + model_flags) == 0,
          "second bench exits 0");
    check(!slurp(root / "bench1/flops.txt").empty() &&
              slurp(root / "bench1/flops.txt") ==
                  slurp(root / "bench2/flops.txt"),
          "flops.txt is identical across runs");

    // same seed, same data: byte-identical training history
    check(run(bin + " train --data " + d + "/synth/synthetic.csv --out " + d +
              "/run2" + train_flags) == 0,
          "repeat train exits 0");
    const std::string e1 = slurp(root / "run/epochs.csv");
    check(!e1.empty() && e1 == slurp(root / "run2/epochs.csv"),
          "same-seed epochs.csv is byte-identical");

    fs::remove_all(root);
    std::printf("cli_smoke: %d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
