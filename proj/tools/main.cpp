#include "cli.hpp"

int main(int argc, char** argv) { return structrep::tools::run(argc, argv); }
