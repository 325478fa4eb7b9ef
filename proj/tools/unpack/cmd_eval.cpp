#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "common.hpp"
#include "unpack/composition.hpp"
#include "unpack/errors.hpp"
#include "unpack/ioi.hpp"
#include "unpack/metrics.hpp"
#include "unpack/text_io.hpp"

namespace unpack::cli {

namespace {

std::vector<double> parse_grid(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw UsageError("--beta-sweep expects start:stop:step");
  double a, b, step;
  try {
    a = std::stod(parts[0]), b = std::stod(parts[1]), step = std::stod(parts[2]);
  } catch (const std::logic_error&) {
    throw UsageError("--beta-sweep: not a number in '" + spec + "'");
  }
  if (!(step > 0) || b < a) throw UsageError("--beta-sweep needs step > 0 and stop >= start");
  std::vector<double> out;
  const long n = std::lround((b - a) / step);
  for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
  return out;
}

std::vector<std::string> parse_configs(const std::string& spec) {
  if (spec == "all") return TraceConfig::names();
  std::vector<std::string> out;
  for (const auto& s : split(spec, ',')) {
    const std::string name = trim(s);
    TraceConfig::named(name);  // validates
    out.push_back(name);
  }
  return out;
}

void emit(const std::filesystem::path& dir, const std::string& file, const Table& t, Manifest& man, bool show) {
  std::ofstream out(dir / file);
  t.write_tsv(out);
  if (!out) throw UsageError("cannot write " + (dir / file).string());
  man.add_output(dir / file);
  if (show) {
    std::cout << "\n" << file << "\n";
    t.write_pretty(std::cout);
  }
}

nlohmann::ordered_json prompt_json(const IoiPrompt& p) {
  nlohmann::ordered_json j;
  j["text"] = p.text;
  j["template"] = p.template_id;
  j["order"] = p.abba ? "ABBA" : "BABA";
  j["names"] = p.names;
  j["positions"] = {{"io", p.pos_io}, {"s1", p.pos_s1}, {"s2", p.pos_s2}, {"end", p.pos_end}};
  return j;
}

}  // namespace

Action add_eval(CLI::App& app, int argc, char** argv) {
  auto* sub = app.add_subcommand("eval", "IOI / ABC evaluation tables");
  auto c = std::make_shared<Common>();
  auto tf = std::make_shared<TraceFlags>();
  auto n = std::make_shared<int>(100);
  auto configs = std::make_shared<std::string>("all");
  auto sweep = std::make_shared<std::string>();
  auto composition = std::make_shared<bool>(false);
  auto roles = std::make_shared<std::string>();
  auto label = std::make_shared<std::string>();
  auto layer_floor = std::make_shared<int>(1);
  c->add_model(*sub);
  c->add_output(*sub);
  c->add_jobs(*sub);
  tf->add(*sub);
  sub->add_option("--seed", c->seed, "prompt generator seed")->capture_default_str();
  sub->add_option("--n", *n, "number of prompt pairs")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--configs", *configs, "'all' or a comma-separated list of variants")->capture_default_str();
  sub->add_option("--beta-sweep", *sweep, "start:stop:step grid for kqv_aligned, e.g. 0:2:0.1");
  sub->add_flag("--composition", *composition, "reroot at role heads and rank upstream roles");
  sub->add_option("--layer-floor", *layer_floor, "lowest upstream layer ranked in composition")->capture_default_str();
  sub->add_option("--roles", *roles, "role table (default: fixtures ioi/roles.txt)");
  sub->add_option("--fixtures", c->fixtures, "fixture directory (overrides UNPACK_FIXTURES)");
  sub->add_option("--label", *label, "model name in model_summary.tsv (default: the directory name)");
  return [=] {
    const auto names = parse_configs(*configs);
    const auto grid = sweep->empty() ? std::vector<double>{} : parse_grid(*sweep);
    const Model m = open_model(c->model);
    const Tokenizer& tok = require_tokenizer(m);
    if (m.config().bos_token_id < 0) throw ModelError("model defines no BOS token");
    const auto fx_dir = c->fixture_dir() / "ioi";
    const IoiFixtures fx = load_ioi_fixtures(fx_dir, tok);
    const auto pairs = gen_prompts(fx, tok, m.config().bos_token_id, c->seed, *n);
    const std::filesystem::path rp = roles->empty() ? fx_dir / "roles.txt" : std::filesystem::path(*roles);
    const RoleTable table = *composition ? load_role_table(rp, m.config()) : RoleTable{};

    Manifest man("eval", argc, argv);
    man.body()["model"] = c->model;
    man.body()["seed"] = c->seed;
    man.body()["n"] = *n;
    man.body()["bos_policy"] = "one BOS per prompt";
    man.body()["names_dropped"] = fx.names_dropped;
    for (const char* f : {"names.txt", "templates.txt", "places.txt", "objects.txt"}) man.add_fixture(fx_dir / f);
    const std::filesystem::path out = c->output;
    std::filesystem::create_directories(out);
    {
      std::ofstream pj(out / "prompts.jsonl");
      for (const auto& p : pairs) pj << nlohmann::ordered_json{{"ioi", prompt_json(p.ioi)}, {"abc", prompt_json(p.abc)}}.dump() << "\n";
      man.add_output(out / "prompts.jsonl");
    }

    auto build = [&](const std::string& name) {
      TraceFlags f = *tf;
      f.config = name;
      if (TraceConfig::named(name).attn_key_side != AttnKeySide::kqv) f.weights.clear();
      TraceConfig cfg = f.build();
      cfg.validate();
      return cfg;
    };

    std::vector<ConfigReport> reports;
    for (const auto& name : names) {
      std::cerr << "eval " << name << " on " << pairs.size() << " prompts\n";
      reports.push_back(evaluate_config(m, pairs, build(name), c->jobs));
    }
    man.set_config(build(tf->config));
    if (!reports.empty()) {
      emit(out, "token_metrics.tsv", token_table(reports), man, true);
      emit(out, "s2_suppression.tsv", suppression_table(reports), man, true);
    }
    const auto primary = std::find(names.begin(), names.end(), tf->config);
    const ConfigReport row = primary != names.end() ? reports[primary - names.begin()]
                                                    : evaluate_config(m, pairs, build(tf->config), c->jobs);
    const std::string name = label->empty() ? std::filesystem::path(c->model).lexically_normal().filename().string()
                                            : *label;
    const std::vector<std::pair<std::string, ConfigReport>> rows{{name.empty() ? c->model : name, row}};
    emit(out, "model_summary.tsv", model_table(rows), man, false);
    emit(out, "model_suppression.tsv", model_suppression_table(rows), man, false);

    if (!grid.empty()) {
      std::cerr << "beta sweep over " << grid.size() << " values\n";
      TraceFlags f = *tf;
      std::vector<ConfigReport> sw;
      for (double b : grid) {
        f.config = "kqv_aligned";
        f.beta = b;
        TraceConfig cfg = f.build();
        cfg.validate();
        sw.push_back(evaluate_config(m, pairs, cfg, c->jobs));
      }
      emit(out, "beta_sweep.tsv", beta_table(sw), man, true);
    }

    if (*composition) {
      man.add_fixture(rp);
      std::cerr << "composition with " << tf->config << "\n";
      CompositionOptions opts;
      opts.layer_floor = *layer_floor;
      man.body()["layer_floor"] = *layer_floor;
      const auto cells = composition_verification(m, pairs, build(tf->config), table, opts, c->jobs);
      for (const char* mode : {"K", "Q", "V", "all"}) {
        emit(out, std::string("composition_") + mode + ".tsv", composition_table(cells, mode), man, true);
      }
    }
    man.write(out);
  };
}

}  // namespace unpack::cli
