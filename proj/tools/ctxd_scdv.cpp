#include <ctxd_scdv/cli.hpp>

int main(int argc, char** argv) { return ctxd::run_cli(argc, argv); }
