#pragma once

namespace quadtensor {

/// Entry point of the quadtensor command-line tool. Returns 0 on success,
/// 1 on a runtime failure and 2 on a usage error.
int cli_main(int argc, char** argv);

}  // namespace quadtensor
