// marsdust-synth: writes a synthetic dust-patch dataset (images + manifest)
// with the library's terrain/dust generator, for running the pipeline without
// the original orbital data. Same seed, same bytes.
#include <cstdio>
#include <iostream>
#include <string>

#include <marsdust/synth.hpp>

namespace {

const char* kUsage = R"(usage: marsdust-synth --out DIR [options]

options:
  --out DIR       output directory (images/ + manifest.csv)   [required]
  --seed N        master dataset seed                          [default 0]
  --train N       training split size                          [default 2454]
  --val N         validation split size                        [default 1303]
  --test N        test split size                              [default 1242]
  --patch N       square patch edge in pixels                  [default 100]
)";

}  // namespace

int main(int argc, char** argv) {
  using namespace marsdust;
  std::string out;
  uint64_t seed = 0;
  SynthConfig cfg;
  try {
    for (int i = 1; i < argc; ++i) {
      std::string k = argv[i];
      if (k == "--help" || k == "-h") {
        std::cout << kUsage;
        return 0;
      }
      if (i + 1 >= argc) throw ConfigError("flag " + k + " expects a value");
      std::string v = argv[++i];
      if (k == "--out") out = v;
      else if (k == "--seed") seed = std::stoull(v);
      else if (k == "--train") cfg.train = std::stoi(v);
      else if (k == "--val") cfg.val = std::stoi(v);
      else if (k == "--test") cfg.test = std::stoi(v);
      else if (k == "--patch") cfg.patch = std::stoi(v);
      else throw ConfigError("unknown flag " + k);
    }
    if (out.empty()) {
      std::cerr << kUsage;
      return 1;
    }
    SplitManifest man = write_synth_dataset(out, cfg, seed);
    std::printf("wrote %zu images to %s (train %zu, val %zu, test %zu)\n", man.rows.size(),
                out.c_str(), man.count(Split::train), man.count(Split::val),
                man.count(Split::test));
    return 0;
  } catch (const Error& e) {
    std::cerr << "marsdust-synth: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "marsdust-synth: error: " << e.what() << "\n";
    return 2;
  }
}
