// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gestigo/error.hpp"
#include "gestigo/synth/generator.hpp"

using namespace gestigo;

int main(int argc, char** argv) {
  CLI::App app{"gestigo-synth: write a synthetic dataset tree in a supported on-disk layout"};
  std::string dataset, out;
  synth::TreeOptions opt;
  app.add_option("--dataset", dataset, "Dataset id")->required();
  app.add_option("--out", out, "Root directory to create")->required();
  app.add_option("--seed", opt.seed, "Generator seed")->capture_default_str();
  app.add_option("--gestures", opt.gestures, "DHG/SHREC gesture numbers to write (default all)")->delimiter(',');
  app.add_option("--subjects", opt.subjects, "Subjects (0 = protocol size)")->capture_default_str();
  app.add_option("--repetitions", opt.repetitions, "Repetitions per subject (0 = protocol size)")->capture_default_str();
  app.add_flag("--official-split", opt.official_split_files, "Write train/test split files (DHG/SHREC)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    const auto n = synth::write_tree(dataset::dataset_from_string(dataset), out, opt);
    std::cout << fmt::format("wrote {} sequences to {}\n", n, out);
    return 0;
  } catch (const ArgumentError& e) {
    std::cerr << fmt::format("gestigo-synth: error [{}] {}\n", to_string(e.kind()), e.what());
    return 1;
  } catch (const Error& e) {
    std::cerr << fmt::format("gestigo-synth: error [{}] {}\n", to_string(e.kind()), e.what());
    return 2;
  }
}
