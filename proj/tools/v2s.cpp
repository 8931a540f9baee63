#include <iostream>

#include "CLI11.hpp"
#include "v2s/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"two-species mean-field and semiclassical experiments"};
  app.require_subcommand(1);
  std::string config_path, output_dir;

  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"quantum", "evolve the lattice system; Husimi measures and their checks"},
      {"vlasov", "run the kinetic solver with the conservation log"},
      {"compare", "W1 between quantum and kinetic one-particle measures"},
      {"hierarchy", "hierarchy consistency, remainders and factorised residuals"},
      {"picard", "Picard series against the truncation bound"},
      {"validate-config", "parse, validate and print the resolved config"},
  };
  for (const auto& [name, help] : cmds) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output-dir", output_dir, "override output_dir");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    auto cfg = v2s::load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    const std::string name = app.get_subcommands().front()->get_name();
    v2s::Summary sum;
    if (name == "quantum") sum = v2s::cmd_quantum(cfg);
    else if (name == "vlasov") sum = v2s::cmd_vlasov(cfg);
    else if (name == "compare") sum = v2s::cmd_compare(cfg);
    else if (name == "hierarchy") sum = v2s::cmd_hierarchy(cfg);
    else if (name == "picard") sum = v2s::cmd_picard(cfg);
    else {
      cfg.validate();
      std::cout << v2s::render_config(cfg);
      return 0;
    }
    sum.print(std::cout);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return v2s::exit_code_for(e);
  }
}
