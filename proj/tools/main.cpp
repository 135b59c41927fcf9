#include "pinet/cli.hpp"

int main(int argc, char** argv) { return pinet::cli::run(argc, argv); }
