// SPDX-License-Identifier: Apache-2.0
#include "april/cli.hpp"

int main(int argc, char** argv) { return april::dispatch(argc, argv); }
