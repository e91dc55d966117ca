#include "ebshrink/iocli.hpp"

int main(int argc, char** argv) { return ebshrink::cli_main(argc, argv); }
