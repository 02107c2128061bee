#include "metairl/cli.hpp"

int main(int argc, char** argv) { return metairl::cli::run(argc, argv); }
