#include "tbscreen/cli.hpp"

int main(int argc, char** argv) { return tbs::run_main(argc, argv); }
