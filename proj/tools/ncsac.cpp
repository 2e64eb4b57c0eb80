#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>

#include "ncsac/encoder.hpp"
#include "ncsac/error.hpp"
#include "ncsac/eval.hpp"
#include "ncsac/extractor.hpp"
#include "ncsac/io.hpp"
#include "ncsac/refiner.hpp"
#include "ncsac/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace ncsac;

namespace {

// splitmix64 finalizer; gives each phase its own stream from one run seed.
std::uint64_t phase_seed(std::uint64_t seed, std::string_view phase) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : phase) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct GraphPaths {
  std::string graph;
  std::string attrs;
};

struct SplitOptions {
  std::string communities;
  std::array<double, 3> ratios{5, 1, 4};
};

std::optional<std::size_t> hop_cap(std::size_t max_hop) {
  if (max_hop == 0) return std::nullopt;
  return max_hop;
}

void print_labels(std::ostream& out, const LoadedGraph& lg,
                  std::span<const NodeId> nodes) {
  std::vector<std::int64_t> labels;
  for (NodeId u : nodes) labels.push_back(lg.labels[u]);
  std::sort(labels.begin(), labels.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << (i ? " " : "") << labels[i];
  }
  out << '\n';
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
}

CommunitySplit load_split(const LoadedGraph& lg, const SplitOptions& opt,
                          std::uint64_t seed) {
  require_file(opt.communities, "communities");
  const CommunitySet all = load_communities(opt.communities, lg);
  return split_communities(all, opt.ratios, phase_seed(seed, "split"));
}

void add_graph_options(CLI::App* app, GraphPaths& paths) {
  app->add_option("--graph", paths.graph, "edge list file")->required();
  app->add_option("--attrs", paths.attrs, "attribute file")->required();
}

void add_split_options(CLI::App* app, SplitOptions& split) {
  app->add_option("--communities", split.communities, "ground-truth communities")->required();
  app->add_option("--split", split.ratios, "train:validation:test ratios")
      ->expected(3)
      ->delimiter(':')
      ->capture_default_str();
}

void add_refine_options(CLI::App* app, RefineConfig& cfg, std::size_t& max_hop,
                        std::size_t& max_steps) {
  app->add_option("--beta", cfg.beta, "conductance blend")->capture_default_str();
  app->add_option("--max-hop", max_hop, "BFS depth cap, 0 for none")->capture_default_str();
  app->add_option("--max-steps", max_steps, "steps per episode, 0 for 2|C|+20")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attributed community search: extraction, encoder, refiner"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file");

  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "run seed")->envname("NCSAC_SEED")->capture_default_str();

  GraphPaths paths;
  SplitOptions split;
  RefineConfig rcfg;
  EncoderConfig ecfg;
  std::size_t max_hop = 6;
  std::size_t max_steps = 0;
  std::string objective = "f1";

  auto* gen = app.add_subcommand("gen", "write a planted-partition dataset");
  SyntheticSpec spec;
  std::string out_dir = ".";
  gen->add_option("--out-dir", out_dir)->capture_default_str();
  gen->add_option("--blocks", spec.blocks)->capture_default_str();
  gen->add_option("--block-size", spec.block_size)->capture_default_str();
  gen->add_option("--p-in", spec.p_in)->capture_default_str();
  gen->add_option("--p-out", spec.p_out)->capture_default_str();
  gen->add_option("--k", spec.k)->capture_default_str();
  gen->add_option("--attrs-per-block", spec.attrs_per_block)->capture_default_str();
  gen->add_option("--attr-noise", spec.attr_noise)->capture_default_str();

  auto* extract = app.add_subcommand("extract", "coarse candidate for one query");
  std::int64_t query = 0;
  bool naive = false;
  add_graph_options(extract, paths);
  extract->add_option("--query", query)->required();
  add_refine_options(extract, rcfg, max_hop, max_steps);
  extract->add_flag("--naive", naive, "use the multigraph extractor");

  auto* pretrain = app.add_subcommand("pretrain", "train the node encoder");
  std::string model_out;
  add_graph_options(pretrain, paths);
  add_split_options(pretrain, split);
  pretrain->add_option("--model-out", model_out)->required();
  pretrain->add_option("--hidden", ecfg.hidden)->capture_default_str();
  pretrain->add_option("--out-dim", ecfg.out)->capture_default_str();
  pretrain->add_option("--dropout", ecfg.dropout)->capture_default_str();
  pretrain->add_option("--lr", ecfg.learning_rate)->capture_default_str();
  pretrain->add_option("--epochs", ecfg.epochs)->capture_default_str();
  pretrain->add_option("--alpha", ecfg.loss.alpha)->capture_default_str();
  pretrain->add_option("--margin", ecfg.loss.margin_triplet)->capture_default_str();

  auto* train = app.add_subcommand("train", "train the refinement policy");
  std::string encoder_path;
  std::string returns_out;
  add_graph_options(train, paths);
  add_split_options(train, split);
  train->add_option("--encoder", encoder_path)->required();
  train->add_option("--model-out", model_out)->required();
  add_refine_options(train, rcfg, max_hop, max_steps);
  train->add_option("--episodes", rcfg.episodes)->capture_default_str();
  train->add_option("--discount", rcfg.discount)->capture_default_str();
  train->add_option("--clip", rcfg.clip)->capture_default_str();
  train->add_option("--epsilon-start", rcfg.epsilon_start)->capture_default_str();
  train->add_option("--epsilon-end", rcfg.epsilon_end)->capture_default_str();
  train->add_option("--lr", rcfg.learning_rate)->capture_default_str();
  train->add_option("--ppo-epochs", rcfg.ppo_epochs)->capture_default_str();
  train->add_option("--head-hidden", rcfg.head_hidden)->capture_default_str();
  train->add_option("--objective", objective, "f1 or phi")
      ->check(CLI::IsMember({"f1", "phi"}))
      ->capture_default_str();
  train->add_option("--returns-out", returns_out, "per-episode returns");

  auto* query_cmd = app.add_subcommand("query", "extract and refine one query");
  std::string policy_path;
  add_graph_options(query_cmd, paths);
  query_cmd->add_option("--query", query)->required();
  query_cmd->add_option("--encoder", encoder_path)->required();
  query_cmd->add_option("--policy", policy_path)->required();
  add_refine_options(query_cmd, rcfg, max_hop, max_steps);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score the test split");
  std::string report_out;
  std::size_t jobs = 1;
  add_graph_options(evaluate_cmd, paths);
  add_split_options(evaluate_cmd, split);
  evaluate_cmd->add_option("--encoder", encoder_path)->required();
  evaluate_cmd->add_option("--policy", policy_path)->required();
  evaluate_cmd->add_option("--report-out", report_out);
  evaluate_cmd->add_option("--jobs", jobs)->capture_default_str();
  add_refine_options(evaluate_cmd, rcfg, max_hop, max_steps);

  auto* oracle = app.add_subcommand("oracle-check", "run the built-in oracle suites");
  std::size_t size = 200;
  oracle->add_option("--size", size)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ncsac: " << e.what() << '\n';
    return 2;
  }

  try {
    rcfg.max_hop = hop_cap(max_hop);
    if (max_steps > 0) rcfg.max_steps = max_steps;
    rcfg.objective = objective == "phi" ? Objective::negative_phi : Objective::labeled_f1;
    rcfg.validate();
    ecfg.validate();

    if (gen->parsed()) {
      spec.seed = phase_seed(seed, "gen");
      spec.validate();
      const SyntheticDataset data = gen_synthetic(spec);
      fs::create_directories(out_dir);
      write_graph(data.graph, fs::path(out_dir) / "graph.edges",
                  fs::path(out_dir) / "graph.attrs");
      write_communities(data.communities, fs::path(out_dir) / "communities.txt");
      std::cout << "nodes=" << data.graph.num_nodes()
                << " edges=" << data.graph.num_edges()
                << " communities=" << data.communities.size() << '\n';
      return 0;
    }
    if (oracle->parsed()) {
      if (size < 16) throw ConfigError("--size must be at least 16");
      bool ok = true;
      for (const SuiteResult& r : run_oracle_checks(size, seed)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " cases=" << r.cases
                  << " " << r.detail << '\n';
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }

    const LoadedGraph lg = load_graph(paths.graph, paths.attrs);
    const AttributedGraph& g = lg.graph;

    if (extract->parsed()) {
      const NodeId q = lg.id_of(query);
      const ExtractionResult r = naive ? extract_candidate_naive(g, q, rcfg.beta, rcfg.max_hop)
                                       : extract_candidate(g, q, rcfg.beta, rcfg.max_hop);
      std::cout << "community: ";
      print_labels(std::cout, lg, r.community);
      std::cout << "phi: " << r.phi << '\n';
      for (const HopRecord& h : r.trace) {
        std::cout << "hop=" << h.hop << " frontier=" << h.frontier_size
                  << " phi=" << h.phi << '\n';
      }
      return 0;
    }
    if (pretrain->parsed()) {
      const CommunitySplit parts = load_split(lg, split, seed);
      const PretrainResult r = pretrain_encoder(g, parts.train, ecfg, phase_seed(seed, "pretrain"));
      save_encoder(r.model, model_out);
      std::cout << "epochs=" << r.loss_history.size();
      if (!r.loss_history.empty()) {
        std::cout << " loss_first=" << r.loss_history.front()
                  << " loss_last=" << r.loss_history.back();
      }
      std::cout << '\n';
      return 0;
    }
    if (train->parsed()) {
      const CommunitySplit parts = load_split(lg, split, seed);
      const EncoderModel encoder = load_encoder(encoder_path);
      const RefineContext ctx(g, encoder);
      const TrainResult r = train_refiner(ctx, parts.train, rcfg, phase_seed(seed, "train"));
      save_policy(r.policy, model_out);
      if (!returns_out.empty()) {
        std::ofstream out(returns_out);
        if (!out) throw IoError("cannot write " + returns_out);
        for (std::size_t e = 0; e < r.episode_returns.size(); ++e) {
          out << "episode=" << e << " return=" << r.episode_returns[e] << '\n';
        }
      }
      std::cout << "episodes=" << r.episode_returns.size() << '\n';
      return 0;
    }
    if (query_cmd->parsed()) {
      const EncoderModel encoder = load_encoder(encoder_path);
      const PolicyModel policy = load_policy(policy_path);
      const RefineContext ctx(g, encoder);
      const QueryOutcome r = run_query(ctx, policy, lg.id_of(query), rcfg);
      std::cout << "community: ";
      print_labels(std::cout, lg, r.refined);
      std::cout << "coarse: ";
      print_labels(std::cout, lg, r.coarse);
      return 0;
    }
    if (evaluate_cmd->parsed()) {
      if (jobs == 0) throw ConfigError("--jobs must be >= 1");
      const CommunitySplit parts = load_split(lg, split, seed);
      const EncoderModel encoder = load_encoder(encoder_path);
      const PolicyModel policy = load_policy(policy_path);
      const RefineContext ctx(g, encoder);
      const EvalReport report =
          evaluate(ctx, policy, parts.test, rcfg, phase_seed(seed, "evaluate"), jobs);
      if (!report_out.empty()) {
        std::ofstream out(report_out);
        if (!out) throw IoError("cannot write " + report_out);
        write_report(report, out);
      }
      write_summary_table(report, std::cout);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "ncsac: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ncsac: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
