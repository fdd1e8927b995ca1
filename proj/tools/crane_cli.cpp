// crane: train / ingest / query / bench / theory / synth entry points.
// Exit codes: 0 success, 1 failed property run, 2 usage or parse error,
// 3 numeric failure during training.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "crane/evaluation.hpp"
#include "crane/io.hpp"
#include "crane/theory.hpp"
#include "crane/training.hpp"

namespace {

struct CliError {
  int code;
  std::string message;
};

void warn_reduced(std::uint64_t n) {
  if (n)
    std::cerr << "warning: " << n
              << " node id(s) exceeded 2^32 and were reduced modulo 2^32\n";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

// query edge files: `origin destination [ignored...]`, '#' comments
std::vector<crane::EdgeKey> load_edge_keys(const std::string& path,
                                           std::uint64_t& reduced) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open edges file: " + path);
  std::vector<crane::EdgeKey> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::uint64_t o = 0, d = 0;
    if (!(ss >> o >> d))
      throw crane::ParseError(line_no, "expected 'origin destination'");
    reduced += (o >= (1ull << 32)) + (d >= (1ull << 32));
    keys.push_back({static_cast<std::uint32_t>(o & 0xffffffffull),
                    static_cast<std::uint32_t>(d & 0xffffffffull)});
  }
  return keys;
}

int cmd_train(const std::string& config_path, std::uint64_t seed,
              const std::string& out_path, const std::string& trace_path) {
  crane::TrainConfig cfg;
  crane::TaskConfig task_cfg;
  crane::apply_config(crane::load_config(config_path), cfg, task_cfg);
  cfg.seed = seed;

  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path, std::ios::trunc);
    if (!trace)
      throw std::invalid_argument("cannot open trace for writing: " + trace_path);
    trace << std::setprecision(17);
  }
  auto cb = [&](std::uint64_t step, double loss) {
    if (trace.is_open()) trace << step << "\t" << loss << "\n";
    if (step % 50 == 0)
      std::cerr << "step " << step << "  mean loss " << loss << "\n";
  };
  const crane::TrainResult res = crane::train(cfg, task_cfg, cb);
  const std::vector<crane::Tensor> mems(
      1, crane::Tensor(crane::kEmbedDim, crane::kEmbedDim));
  crane::save_model(res.model, mems, out_path);
  std::cout << "trained " << cfg.total_tasks << " tasks (" << res.trace.size()
            << " optimizer steps); model written to " << out_path << "\n";
  return 0;
}

int cmd_ingest(const std::string& model_path, const std::string& stream_path,
               const std::string& out_path, std::size_t b_size) {
  crane::LoadedModel lm = crane::load_model(model_path);
  crane::ParsedStream ps = crane::load_edge_list(stream_path);
  warn_reduced(ps.reduced_ids);
  const auto l0 = static_cast<std::uint32_t>(
      lm.memories.empty() ? 1 : lm.memories.size());
  crane::CraneSketch sk(
      lm.model,
      crane::SketchConfig{b_size, crane::CarryMode::minibatch, true}, l0);
  for (std::size_t i = 0; i < lm.memories.size(); ++i)
    sk.memory_mut(i) = lm.memories[i];
  sk.ingest(ps.updates);
  std::vector<crane::Tensor> mems;
  for (std::uint32_t i = 0; i < sk.active_layers(); ++i)
    mems.push_back(sk.memory(i));
  crane::save_model(lm.model, mems, out_path);
  std::cout << "ingested " << ps.updates.size() << " updates; active layers "
            << sk.active_layers() << "; model written to " << out_path << "\n";
  return 0;
}

int cmd_query(const std::string& model_path, const std::string& edges_path) {
  crane::LoadedModel lm = crane::load_model(model_path);
  std::uint64_t reduced = 0;
  const std::vector<crane::EdgeKey> keys = load_edge_keys(edges_path, reduced);
  warn_reduced(reduced);
  const auto l0 = static_cast<std::uint32_t>(
      lm.memories.empty() ? 1 : lm.memories.size());
  crane::CraneSketch sk(
      lm.model, crane::SketchConfig{4, crane::CarryMode::minibatch, false}, l0);
  for (std::size_t i = 0; i < lm.memories.size(); ++i)
    sk.memory_mut(i) = lm.memories[i];
  if (keys.empty()) return 0;
  const std::vector<double> est = sk.batch_query(keys);
  std::cout << std::setprecision(17);
  for (std::size_t i = 0; i < keys.size(); ++i)
    std::cout << keys[i].origin << "\t" << keys[i].destination << "\t" << est[i]
              << "\n";
  return 0;
}

int cmd_bench(const std::string& model_path, const std::string& stream_path,
              std::uint64_t budget, const std::string& methods,
              const std::string& report_base, std::size_t b_size,
              std::uint64_t seed) {
  crane::LoadedModel lm = crane::load_model(model_path);
  crane::ParsedStream ps = crane::load_edge_list(stream_path);
  warn_reduced(ps.reduced_ids);
  crane::BenchmarkOptions opt;
  opt.methods = split_csv(methods);
  opt.budget = budget;
  opt.b_size = b_size;
  opt.seed = seed;
  const crane::BenchmarkReport rep =
      crane::run_benchmark(lm.model, ps.updates, opt);
  if (!report_base.empty()) {
    std::ofstream tsv(report_base + ".tsv", std::ios::trunc);
    std::ofstream txt(report_base + ".txt", std::ios::trunc);
    if (!tsv || !txt)
      throw std::invalid_argument("cannot open report files at base: " +
                                  report_base);
    crane::write_report_tsv(rep, tsv);
    crane::write_report_text(rep, txt);
  }
  crane::write_report_text(rep, std::cout);
  return 0;
}

int cmd_theory(std::uint64_t seed) {
  const std::vector<crane::TheoryResult> rs = crane::theory_suite(seed);
  for (const auto& r : rs)
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail
              << "\n";
  return crane::all_pass(rs) ? 0 : 1;
}

int cmd_synth(const std::string& out_path, std::size_t n_updates, double alpha,
              std::size_t n_distinct, std::uint64_t id_space,
              std::uint64_t seed) {
  const auto stream = crane::zipf_edge_stream(
      n_updates, alpha, n_distinct ? n_distinct : std::max<std::size_t>(n_updates / 4, 1),
      id_space, seed);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::invalid_argument("cannot open for writing: " + out_path);
  os << "# synthetic zipf edge stream: updates=" << n_updates
     << " alpha=" << alpha << " seed=" << seed << "\n";
  os << std::setprecision(17);
  for (const auto& e : stream)
    os << e.origin << "\t" << e.destination << "\t" << e.weight << "\n";
  std::cout << "wrote " << stream.size() << " updates to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crane: hierarchical neural sketch for graph streams"};
  app.require_subcommand(1);

  std::string config_path, model_path, stream_path, edges_path, out_path,
      trace_path, report_base, methods = "crane,tcm,cms";
  std::uint64_t seed = 1, budget = 65536, id_space = 1ull << 20;
  std::size_t b_size = 4, n_updates = 20000, n_distinct = 0;
  double alpha = 1.1;

  auto* train = app.add_subcommand("train", "train a model on synthetic tasks");
  train->add_option("--config", config_path, "key=value config file")->required();
  train->add_option("--seed", seed, "run seed");
  train->add_option("--out", out_path, "output model path")->required();
  train->add_option("--trace", trace_path, "loss trace output path");

  auto* ingest = app.add_subcommand("ingest", "store an edge stream into a model");
  ingest->add_option("--model", model_path)->required();
  ingest->add_option("--stream", stream_path)->required();
  ingest->add_option("--out", out_path)->required();
  ingest->add_option("--b-size", b_size, "mini-batch size");

  auto* query = app.add_subcommand("query", "estimate frequencies for edges");
  query->add_option("--model", model_path)->required();
  query->add_option("--edges", edges_path)->required();

  auto* bench = app.add_subcommand("bench", "equal-memory benchmark");
  bench->add_option("--model", model_path)->required();
  bench->add_option("--stream", stream_path)->required();
  bench->add_option("--budget", budget, "byte budget per method");
  bench->add_option("--methods", methods, "comma list: crane,tcm,cms,oracle");
  bench->add_option("--report", report_base, "report base path (.tsv/.txt)");
  bench->add_option("--b-size", b_size, "crane mini-batch size");
  bench->add_option("--seed", seed, "hash/report seed");

  auto* theory = app.add_subcommand("theory", "run property experiments");
  theory->add_option("--seed", seed, "experiment seed");

  auto* synth = app.add_subcommand("synth", "write a synthetic zipf stream");
  synth->add_option("--out", out_path)->required();
  synth->add_option("--updates", n_updates);
  synth->add_option("--alpha", alpha);
  synth->add_option("--distinct", n_distinct, "edge pool size (default updates/4)");
  synth->add_option("--id-space", id_space);
  synth->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train->parsed())
      return cmd_train(config_path, seed, out_path, trace_path);
    if (ingest->parsed())
      return cmd_ingest(model_path, stream_path, out_path, b_size);
    if (query->parsed()) return cmd_query(model_path, edges_path);
    if (bench->parsed())
      return cmd_bench(model_path, stream_path, budget, methods, report_base,
                       b_size, seed);
    if (theory->parsed()) return cmd_theory(seed);
    if (synth->parsed())
      return cmd_synth(out_path, n_updates, alpha, n_distinct, id_space, seed);
  } catch (const crane::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
