#pragma once

namespace eegalign {

int run_cli(int argc, char** argv);

}  // namespace eegalign
