#pragma once

#include <functional>

#include <CLI11.hpp>

namespace unpack::cli {

/// Each registers a subcommand and returns the action to run once parsing succeeds.
using Action = std::function<void()>;

Action add_trace(CLI::App& app, int argc, char** argv);
Action add_reroot(CLI::App& app, int argc, char** argv);
Action add_eval(CLI::App& app, int argc, char** argv);
Action add_knockout(CLI::App& app, int argc, char** argv);
Action add_panel(CLI::App& app, int argc, char** argv);
Action add_toy(CLI::App& app, int argc, char** argv);

}  // namespace unpack::cli
