// Writes a generated desk-scale corpus as JSON lines.
//
//   make_corpus OUT.jsonl [--records N] [--feat-dim D] [--seed S]

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sgae/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic scene-graph corpus"};
  std::string out;
  sgae::SyntheticOptions options;
  app.add_option("out", out, "Output JSONL path")->required();
  app.add_option("--records", options.records, "Number of records");
  app.add_option("--feat-dim", options.feature_dim, "RoI feature length");
  app.add_option("--seed", options.seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    sgae::write_raw_corpus(out, sgae::synthetic_corpus(options));
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 3;
  }
  return 0;
}
