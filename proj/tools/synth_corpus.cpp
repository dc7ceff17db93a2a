#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pretext_forge/synth.hpp"

using namespace pforge;

int main(int argc, char** argv) {
  CLI::App app{"synth-corpus: render a synthetic chart corpus"};
  int count = 40;
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--count", count, "Number of records")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Render seed");
  app.add_option("--out", out, "Output directory")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto vocab = parse_vocabulary(synth::kDefaultVocabulary);
    synth::write_corpus(synth::make_records(count, seed, vocab), out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  std::cout << "records=" << count << " out=" << out << "\n";
  return 0;
}
