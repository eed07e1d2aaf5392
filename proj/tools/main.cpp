#include "langsamp/commands.hpp"

int main(int argc, char** argv) { return langsamp::run_cli(argc, argv); }
