// Writes the synthetic shapes corpus used by the smoke runs.

#include <iostream>

#include <CLI11.hpp>

#include "lgvq/toy_corpus.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic image-caption corpus"};
    std::string out = "toy_corpus";
    lgvq::ToyCorpusOptions options;
    app.add_option("--out", out, "output directory");
    app.add_option("--count", options.count, "number of images");
    app.add_option("--size", options.image_size, "image side in pixels");
    app.add_option("--seed", options.seed, "generator seed");
    CLI11_PARSE(app, argc, argv);
    try {
        std::cout << lgvq::write_toy_corpus(out, options).string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
