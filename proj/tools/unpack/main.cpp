#include <iostream>

#include "commands.hpp"
#include "unpack/errors.hpp"

int main(int argc, char** argv) {
  using namespace unpack;
  CLI::App app{"unpack: attention and MLP attribution for decoder-only transformers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", UNPACK_BUILD_ID);
  std::vector<std::pair<CLI::App*, cli::Action>> actions;
  auto reg = [&](cli::Action (*add)(CLI::App&, int, char**)) {
    const auto before = app.get_subcommands({}).size();
    cli::Action a = add(app, argc, argv);
    actions.emplace_back(app.get_subcommands({})[before], std::move(a));
  };
  reg(cli::add_trace);
  reg(cli::add_reroot);
  reg(cli::add_eval);
  reg(cli::add_knockout);
  reg(cli::add_panel);
  reg(cli::add_toy);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (auto& [sub, action] : actions) {
      if (sub->parsed()) action();
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
