#include "kolambert/cli_app.hpp"

int main(int argc, char** argv) { return kolambert::run_cli(argc, argv); }
