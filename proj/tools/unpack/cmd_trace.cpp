#include <fstream>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "common.hpp"
#include "unpack/attribution.hpp"
#include "unpack/errors.hpp"
#include "unpack/paths.hpp"
#include "unpack/text_io.hpp"

namespace unpack::cli {

namespace {

struct PromptFlags {
  std::string text, text_file;
  int position = -1;

  void add(CLI::App& app) {
    auto* t = app.add_option("--text", text, "prompt text (BOS is prepended)");
    auto* f = app.add_option("--text-file", text_file, "read the prompt from a file");
    t->excludes(f);
    app.add_option("--position", position, "query position (default: last)");
  }
  std::string prompt() const {
    if (!text_file.empty()) {
      std::ifstream in(text_file);
      if (!in) throw UsageError("cannot open " + text_file);
      std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
      return s;
    }
    if (text.empty()) throw UsageError("one of --text or --text-file is required");
    return text;
  }
  int resolve(int n) const {
    const int p = position < 0 ? n + position : position;
    if (p < 0 || p >= n) throw UsageError("--position " + std::to_string(position) + " outside a " + std::to_string(n) + "-token prompt");
    return p;
  }
};

void print_top(const VecD& credit, const std::vector<std::string>& tokens, int n) {
  const VecD pct = percent_of_positive(credit);
  std::vector<int> idx(credit.size());
  for (int i = 0; i < credit.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return credit(a) > credit(b); });
  Table t;
  t.header = {"pos", "token", "credit", "% of positive"};
  for (int i = 0; i < std::min<int>(n, idx.size()); ++i) {
    t.add({std::to_string(idx[i]), "'" + tokens[idx[i]] + "'", fmt(credit(idx[i]), 4), fmt(pct(idx[i]), 1)});
  }
  t.write_pretty(std::cout);
}

void write_outputs(const std::filesystem::path& dir, Manifest& man, const VecD& credit,
                   const std::vector<std::string>& tokens, const std::vector<Path>& paths) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "token_credit.tsv");
    write_token_credit(credit, tokens, out);
    if (!out) throw UsageError("cannot write " + (dir / "token_credit.tsv").string());
  }
  {
    std::ofstream out(dir / "paths.jsonl");
    write_paths_jsonl(paths, out);
    if (!out) throw UsageError("cannot write " + (dir / "paths.jsonl").string());
  }
  man.add_output(dir / "token_credit.tsv");
  man.add_output(dir / "paths.jsonl");
  man.write(dir);
}

void ledger_summary(nlohmann::ordered_json& j, const CreditLedger& led) {
  j["position"] = led.position;
  j["root"] = led.root;
  j["total_root_importance"] = led.total_root_importance;
  j["lost_credit"] = led.lost_credit;
  j["pruned_credit"] = led.pruned_credit;
  j["floor_trips"] = led.floor_trips;
  j["frames"] = led.frames;
  j["truncated"] = led.truncated;
  j["paths_kept"] = led.paths.size();
}

}  // namespace

Action add_trace(CLI::App& app, int argc, char** argv) {
  auto* sub = app.add_subcommand("trace", "attribute a target logit to input tokens");
  auto c = std::make_shared<Common>();
  auto tf = std::make_shared<TraceFlags>();
  auto pf = std::make_shared<PromptFlags>();
  auto target = std::make_shared<std::string>();
  auto alt = std::make_shared<std::string>();
  auto exact = std::make_shared<bool>(false);
  c->add_model(*sub);
  c->add_output(*sub);
  tf->add(*sub);
  pf->add(*sub);
  sub->add_option("--target", *target, "target token as text (\" Mary\") or #id")->required();
  sub->add_option("--target-alt", *alt, "distractor token; the target becomes the logit difference");
  sub->add_flag("--exact", *exact, "token credit from the exact aggregate instead of the traced paths");
  return [=] {
    const Model m = open_model(c->model);
    const auto ids = encode_prompt(m, pf->prompt());
    const int pos = pf->resolve(static_cast<int>(ids.size()));
    TraceConfig cfg = tf->build();
    const int t = parse_token(m, *target);
    cfg.target = alt->empty() ? Target::single_token(t) : Target::diff(t, parse_token(m, *alt));
    cfg.validate();

    Manifest man("trace", argc, argv);
    man.body()["model"] = c->model;
    man.set_config(cfg);
    man.body()["bos_policy"] = "one BOS per prompt";
    man.body()["tokens"] = ids;

    const ForwardCapture cap = forward(m, ids);
    Attributor attr(m, cap, cfg);
    const CreditLedger led = attr.trace(pos);
    VecD credit = led.token_credit;
    if (*exact) credit = attr.aggregate_token_credit(pos).token_credit;
    if (!credit.allFinite()) throw NumericError("non-finite token credit");
    ledger_summary(man.body()["ledger"], led);
    man.body()["token_credit_source"] = *exact ? "aggregate" : "trace";

    const auto toks = token_strings(m, ids);
    write_outputs(c->output, man, credit, toks, led.paths);
    std::cout << "trace " << cfg.variant_name() << " at position " << pos << ": " << led.paths.size()
              << " paths, " << led.frames << " frames" << (led.truncated ? " (truncated)" : "") << "\n";
    print_top(credit, toks, 8);
  };
}

Action add_reroot(CLI::App& app, int argc, char** argv) {
  auto* sub = app.add_subcommand("reroot", "attribute a component's output at a position");
  auto c = std::make_shared<Common>();
  auto tf = std::make_shared<TraceFlags>();
  auto pf = std::make_shared<PromptFlags>();
  auto component = std::make_shared<std::string>();
  auto mode = std::make_shared<std::string>("all");
  auto floor = std::make_shared<int>(0);
  c->add_model(*sub);
  c->add_output(*sub);
  tf->add(*sub);
  pf->add(*sub);
  sub->add_option("--component", *component, "component to reroot at, e.g. A8.H6 or MLP3")->required();
  sub->add_option("--mode", *mode, "keep paths entering the root through K, Q, V, or all")
      ->check(CLI::IsMember({"K", "Q", "V", "all"}))
      ->capture_default_str();
  sub->add_option("--layer-floor", *floor, "lowest layer included in the upstream head ranking")->capture_default_str();
  return [=] {
    const Model m = open_model(c->model);
    const auto ids = encode_prompt(m, pf->prompt());
    const int pos = pf->resolve(static_cast<int>(ids.size()));
    const TraceConfig cfg = tf->build();
    cfg.validate();
    ComponentId root;
    try {
      root = ComponentId::parse(*component);
    } catch (const std::exception& e) {
      throw UsageError(std::string("--component: ") + e.what());
    }

    Manifest man("reroot", argc, argv);
    man.body()["model"] = c->model;
    man.set_config(cfg);
    man.body()["component"] = root.name();
    man.body()["mode"] = *mode;
    man.body()["tokens"] = ids;

    const ForwardCapture cap = forward(m, ids);
    Attributor attr(m, cap, cfg);
    const CreditLedger led = attr.reroot(root, pos);
    const std::optional<EntryMode> filter = *mode == "all" ? std::nullopt : std::optional(parse_entry_mode(*mode));
    const auto kept = filter_paths(led.paths, filter);
    VecD credit = VecD::Zero(cap.n_pos());
    for (const Path& p : kept) credit(p.hops.front().position) += p.magnitude;
    ledger_summary(man.body()["ledger"], led);
    man.body()["token_credit_source"] = "filtered paths";

    const auto toks = token_strings(m, ids);
    std::filesystem::create_directories(c->output);
    Table heads;
    heads.header = {"rank", "head", "score"};
    int rank = 0;
    for (const auto& [h, s] : upstream_head_scores(led, filter, *floor)) {
      heads.add({std::to_string(++rank), h.name(), fmt(s, 6)});
    }
    {
      std::ofstream out(std::filesystem::path(c->output) / "upstream_heads.tsv");
      heads.write_tsv(out);
    }
    man.add_output(std::filesystem::path(c->output) / "upstream_heads.tsv");
    write_outputs(c->output, man, credit, toks, kept);
    std::cout << "reroot " << root.name() << " at position " << pos << " (" << *mode << "): " << kept.size() << " of "
              << led.paths.size() << " paths\n";
    Table top = heads;
    if (top.rows.size() > 10) top.rows.resize(10);
    top.write_pretty(std::cout);
  };
}

}  // namespace unpack::cli
