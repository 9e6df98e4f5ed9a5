#include "lwp/experiment.hpp"

int main(int argc, char** argv) { return lwp::cli::main_entry(argc, argv); }
