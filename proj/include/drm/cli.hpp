#pragma once

#include <ostream>

namespace drm {

/// Entry point of the `drm` tool. Returns 0 on success, 2 on usage or
/// configuration errors, 1 on runtime failures.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drm
