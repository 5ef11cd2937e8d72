#include "qfm/cli.hpp"

int main(int argc, char** argv) { return qfm::cli::run(argc, argv); }
