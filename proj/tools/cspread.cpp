#include "cspread/cli.hpp"

int main(int argc, char** argv) { return cspread::cli::run(argc, argv); }
