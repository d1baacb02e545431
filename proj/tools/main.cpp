#include "cli_main.hpp"

int main(int argc, char** argv) { return res2net::cli::run(argc, argv); }
