#include "dap/cli.hpp"

int main(int argc, char** argv)
{
  return dap::cli::main_entry(argc, argv);
}
