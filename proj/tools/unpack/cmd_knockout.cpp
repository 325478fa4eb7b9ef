#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "common.hpp"
#include "unpack/errors.hpp"
#include "unpack/knockout.hpp"
#include "unpack/score_panel.hpp"
#include "unpack/text_io.hpp"

namespace unpack::cli {

namespace {

std::vector<std::vector<int>> load_corpus(const Model& m, const std::string& path) {
  std::vector<std::vector<int>> out;
  for (const auto& line : read_lines(path)) {
    std::vector<int> ids = encode_prompt_truncated(m, line);
    if (ids.size() >= 2) out.push_back(std::move(ids));
  }
  if (out.empty()) throw UsageError("corpus " + path + " has no usable sentences");
  return out;
}

void write_table(const std::filesystem::path& file, const Table& t, Manifest& man) {
  std::ofstream out(file);
  t.write_tsv(out);
  if (!out) throw UsageError("cannot write " + file.string());
  man.add_output(file);
}

}  // namespace

Action add_knockout(CLI::App& app, int argc, char** argv) {
  auto* sub = app.add_subcommand("knockout", "communication-specific ablations vs panel strength");
  auto c = std::make_shared<Common>();
  auto corpus = std::make_shared<std::string>();
  auto score_corpus = std::make_shared<std::string>();
  auto per_layer = std::make_shared<int>(5);
  auto channel = std::make_shared<std::string>("both");
  c->add_model(*sub);
  c->add_output(*sub);
  c->add_jobs(*sub);
  sub->add_option("--corpus", *corpus, "held-out sentences, one per line (perplexity)")->required();
  sub->add_option("--score-corpus", *score_corpus, "sentences for the score panel (default: --corpus)");
  sub->add_option("--per-layer", *per_layer, "components per source layer")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--channel", *channel, "cut_attention, cut_mlp or both")
      ->check(CLI::IsMember({"cut_attention", "cut_mlp", "both"}))
      ->capture_default_str();
  return [=] {
    const Model m = open_model(c->model);
    const auto eval = load_corpus(m, *corpus);
    const std::string score_path = score_corpus->empty() ? *corpus : *score_corpus;
    const auto score = score_path == *corpus ? eval : load_corpus(m, score_path);

    Manifest man("knockout", argc, argv);
    man.body()["model"] = c->model;
    man.body()["per_layer"] = *per_layer;
    man.body()["channel"] = *channel;
    man.body()["bos_policy"] = "one BOS per sentence";
    man.add_fixture(*corpus);
    if (score_path != *corpus) man.add_fixture(score_path);

    std::cerr << "score panel over " << score.size() << " sentences\n";
    const ScorePanel panel = stream_score_panel(m, score);
    std::vector<AblationSpec> specs;
    for (Channel ch : {Channel::cut_attention, Channel::cut_mlp}) {
      if (*channel != "both" && parse_channel(*channel) != ch) continue;
      for (const auto& comp : select_knockout_components(panel, *per_layer, ch)) specs.push_back({comp, ch});
    }
    std::cerr << specs.size() << " knockouts over " << eval.size() << " sentences\n";
    const KnockoutRun run = delta_ppl(m, specs, eval, &panel, c->jobs);
    for (const auto& r : run.results) {
      if (!std::isfinite(r.ablated_ppl)) throw NumericError("non-finite perplexity for " + r.spec.component.name());
    }

    const std::filesystem::path out = c->output;
    std::filesystem::create_directories(out);
    {
      std::ofstream pt(out / "panel.tsv");
      write_panel_tsv(panel, pt);
      man.add_output(out / "panel.tsv");
    }
    write_table(out / "knockout.tsv", knockout_table(run), man);
    const auto rows = spearman_report(run.results);
    write_table(out / "spearman.tsv", spearman_table(rows), man);
    man.body()["baseline_ppl"] = run.baseline_ppl;
    man.body()["tokens"] = run.tokens;
    man.write(out);

    std::cout << "baseline ppl " << fmt(run.baseline_ppl, 4) << " over " << run.tokens << " tokens; "
              << run.results.size() << " knockouts\n";
    spearman_table(rows).write_pretty(std::cout);
  };
}

Action add_panel(CLI::App& app, int argc, char** argv) {
  auto* sub = app.add_subcommand("panel", "component -> sublayer communication scores over a corpus");
  auto c = std::make_shared<Common>();
  auto corpus = std::make_shared<std::string>();
  c->add_model(*sub);
  c->add_output(*sub);
  sub->add_option("--corpus", *corpus, "sentences, one per line")->required();
  return [=] {
    const Model m = open_model(c->model);
    const auto sents = load_corpus(m, *corpus);
    Manifest man("panel", argc, argv);
    man.body()["model"] = c->model;
    man.add_fixture(*corpus);
    const ScorePanel panel = stream_score_panel(m, sents);
    const std::filesystem::path out = c->output;
    std::filesystem::create_directories(out);
    {
      std::ofstream pt(out / "panel.tsv");
      write_panel_tsv(panel, pt);
    }
    write_panel_binary(panel, out / "panel.manifest", out / "panel.bin");
    for (const char* f : {"panel.tsv", "panel.manifest", "panel.bin"}) man.add_output(out / f);
    man.write(out);
    std::cout << "panel over " << panel.n_prompts << " sentences, " << panel.n_positions << " positions\n";
  };
}

}  // namespace unpack::cli
