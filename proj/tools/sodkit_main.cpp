#include "sodkit/cli.hpp"

int main(int argc, char** argv) { return sodkit::cli::run(std::vector<std::string>(argv, argv + argc)); }
