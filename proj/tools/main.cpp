// txgnn: illicit-account detection on transaction multigraphs.
//
// Subcommands: gen-synth, ingest-check, train, evaluate, predict, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical fault.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "txgnn/ingest.hpp"
#include "txgnn/metrics.hpp"
#include "txgnn/model.hpp"
#include "txgnn/sampler.hpp"
#include "txgnn/seqgen.hpp"
#include "txgnn/synth.hpp"
#include "txgnn/train.hpp"

namespace {

using namespace txgnn;

std::string default_data_dir() {
  const char* env = std::getenv("TXGNN_DATA_DIR");
  return env ? env : ".";
}

struct CommonData {
  std::string data_dir = default_data_dir();
  std::string schema = "transfer";
};

EdgeSchema parse_schema(const std::string& s) {
  if (s == "transfer") return EdgeSchema::transfer;
  if (s == "tx_list") return EdgeSchema::tx_list;
  throw ArgumentError("unknown schema '" + s + "' (expected transfer or tx_list)");
}

Dataset load_dataset(const CommonData& d) {
  return load_edges(d.data_dir + "/edges.csv", parse_schema(d.schema));
}

void add_common(CLI::App* cmd, CommonData& d) {
  cmd->add_option("--data", d.data_dir, "dataset directory (default: $TXGNN_DATA_DIR or .)");
  cmd->add_option("--schema", d.schema, "edge file schema: transfer | tx_list");
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg, std::string& ablation) {
  cmd->add_option("-c,--width", cfg.c, "node representation width (even)");
  cmd->add_option("-L,--layers", cfg.L, "message-passing layers");
  cmd->add_option("--t-max", cfg.t_max, "sequence length cap");
  cmd->add_option("--lr", cfg.lr, "learning rate");
  cmd->add_option("--dropout", cfg.dropout, "dropout rate");
  cmd->add_option("--batch", cfg.batch_size, "mini-batch size");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--fanouts", cfg.fanouts, "per-hop sample sizes (one per layer)")
      ->delimiter(',');
  cmd->add_option("--seed", cfg.seed, "global seed; all streams derive from it");
  cmd->add_option("--ablation", ablation, "none | no_attention | no_mgd");
  cmd->add_option("--threshold", cfg.threshold, "decision threshold");
  cmd->add_option("--workers", cfg.workers, "evaluation worker threads");
  cmd->add_flag("--full-neighborhood", cfg.full_neighborhood_eval,
                "evaluate without neighborhood sampling");
  cmd->add_flag("!--no-standardize", cfg.standardize,
                "disable per-column attribute standardization");
}

int cmd_gen_synth(const std::string& out_dir, const SynthConfig& cfg) {
  SynthResult r = generate(cfg);
  write_dataset(r, out_dir);
  SplitAssignment a = split(r.labels, cfg.seed);
  write_split(out_dir + "/splits.csv", a, r.names);
  std::cout << "wrote " << out_dir << "/{edges,labels,splits}.csv: "
            << r.graph.node_count() << " nodes, " << r.graph.edge_count()
            << " edges, " << r.labels.count_of(1) << " illicit / "
            << r.labels.count_of(0) << " normal\n";
  return 0;
}

int cmd_ingest_check(const CommonData& d) {
  Dataset ds = load_dataset(d);
  LabelSet labels = load_labels(d.data_dir + "/labels.csv", ds);
  std::cout << "nodes " << ds.graph.node_count() << "\nedges "
            << ds.graph.edge_count() << "\nattr_dim " << ds.graph.attr_dim()
            << "\nlabeled " << labels.size() << " (illicit "
            << labels.count_of(1) << ", normal " << labels.count_of(0) << ")\n";
  std::size_t parallel = 0;
  for (NodeId v = 0; v < ds.graph.node_count(); ++v) {
    auto nb = ds.graph.out_neighbors(v);
    std::vector<NodeId> dsts;
    for (auto& [u, e] : nb) dsts.push_back(u);
    std::sort(dsts.begin(), dsts.end());
    if (std::adjacent_find(dsts.begin(), dsts.end()) != dsts.end()) ++parallel;
  }
  std::cout << "nodes with parallel out-edges " << parallel << "\n";
  return 0;
}

int cmd_train(const CommonData& d, TrainConfig cfg, const std::string& ablation,
              const std::string& out_dir) {
  cfg.ablation = ablation_from_string(ablation);
  Dataset ds = load_dataset(d);
  LabelSet labels = load_labels(d.data_dir + "/labels.csv", ds);
  SplitAssignment splits;
  std::string split_path = d.data_dir + "/splits.csv";
  if (std::filesystem::exists(split_path)) {
    splits = load_split(split_path, ds);
  } else {
    splits = split(labels, cfg.seed);
  }
  std::filesystem::create_directories(out_dir);
  TrainResult r = train(cfg, ds.graph, labels, splits, &std::cout);
  write_history(out_dir + "/history.csv", r.history);
  if (r.best_epoch > 0) {
    save_checkpoint(out_dir + "/checkpoint.txt", r.best,
                    checkpoint_meta(cfg, r.standardizer));
    std::cout << "checkpoint " << out_dir << "/checkpoint.txt (epoch "
              << r.best_epoch << ", val f1 " << r.best_val_f1 << ")\n";
  }
  if (!r.fault.empty()) throw NumericalFault(r.fault);
  return 0;
}

std::pair<ModelParams, TrainConfig> load_model(const std::string& checkpoint,
                                               TrainConfig cfg,
                                               Standardizer& std_) {
  auto [params, meta] = load_checkpoint(checkpoint);
  cfg.c = params.c;
  cfg.L = params.L;
  apply_checkpoint_meta(meta, cfg, std_);
  return {std::move(params), cfg};
}

int cmd_evaluate(const CommonData& d, const std::string& checkpoint,
                 const std::string& which, const std::string& out_path,
                 TrainConfig base_cfg) {
  Dataset ds = load_dataset(d);
  LabelSet labels = load_labels(d.data_dir + "/labels.csv", ds);
  SplitAssignment splits = load_split(d.data_dir + "/splits.csv", ds);
  const std::vector<NodeId>* nodes = nullptr;
  if (which == "train") nodes = &splits.train;
  else if (which == "val") nodes = &splits.val;
  else if (which == "test") nodes = &splits.test;
  else throw ArgumentError("unknown split '" + which + "'");
  if (nodes->empty()) throw DataError("split '" + which + "' is empty");

  Standardizer std_;
  auto [params, cfg] = load_model(checkpoint, base_cfg, std_);
  std::vector<double> probs = predict(params, ds.graph, *nodes, cfg, std_);
  std::vector<int> ys;
  for (NodeId v : *nodes) ys.push_back(labels.labels.at(v));
  EvalReport rep = evaluate(probs, ys, cfg.threshold);
  std::cout << which << ": " << rep.pretty() << "\n";
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw DataError("cannot write " + out_path);
    f << rep.csv_header() << "\n" << rep.csv_row() << "\n";
  }
  return 0;
}

int cmd_predict(const CommonData& d, const std::string& checkpoint,
                const std::string& nodes_arg, const std::string& out_path,
                TrainConfig base_cfg) {
  Dataset ds = load_dataset(d);
  std::vector<NodeId> nodes;
  if (nodes_arg == "all") {
    for (NodeId v = 0; v < ds.graph.node_count(); ++v) nodes.push_back(v);
  } else {
    std::istringstream is(nodes_arg);
    std::string name;
    while (std::getline(is, name, ',')) nodes.push_back(ds.require_node(name));
  }
  if (nodes.empty()) throw ArgumentError("no nodes requested");

  Standardizer std_;
  auto [params, cfg] = load_model(checkpoint, base_cfg, std_);
  std::vector<double> probs = predict(params, ds.graph, nodes, cfg, std_);
  std::ostream* out = &std::cout;
  std::ofstream f;
  if (!out_path.empty()) {
    f.open(out_path);
    if (!f) throw DataError("cannot write " + out_path);
    out = &f;
  }
  out->precision(10);
  *out << "node,prob\n";
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    *out << ds.node_names[nodes[i]] << ',' << probs[i] << '\n';
  }
  return 0;
}

// Central finite differences over a handful of coordinates of every
// parameter block on a small generated instance. Attributes stay O(1) so the
// loss sits in the smooth regime where the difference quotient is reliable.
int cmd_gradcheck(std::uint64_t seed, double tolerance, std::size_t per_block,
                  bool verbose) {
  std::mt19937_64 graph_rng(derive_seed(seed, "gradcheck-graph", {}));
  std::uniform_int_distribution<NodeId> pick(0, 19);
  std::uniform_real_distribution<double> attr(-1.0, 1.0);
  std::vector<EdgeRecord> edges;
  for (int e = 0; e < 55; ++e) {
    EdgeRecord r;
    r.src = pick(graph_rng);
    r.dst = pick(graph_rng);
    r.timestamp = attr(graph_rng) * 100.0;
    r.attrs = {attr(graph_rng), attr(graph_rng), attr(graph_rng)};
    edges.push_back(r);
    if (e % 10 == 0) edges.push_back(r);  // guaranteed parallel edges
  }
  Multigraph g2 = Multigraph::build(20, edges);

  TrainConfig cfg;
  cfg.c = 8;
  cfg.L = 2;
  cfg.t_max = 4;
  cfg.dropout = 0.0;
  cfg.fanouts = {25, 25};  // above max degree, every neighborhood is exact
  cfg.seed = seed;

  std::vector<NodeId> nodes;
  for (NodeId v = 0; v < g2.node_count(); ++v) nodes.push_back(v);
  auto seqs = build_all(g2, cfg.t_max, nodes);

  ModelParams params = make_params(cfg.c, cfg.L, g2.attr_dim());
  xavier_init(params, seed);
  // Damp the output layer so no probability sits against the clamp
  // boundary, where the loss is flat and the difference quotient lies.
  params.cls_W2 *= 0.25;

  Block block = sample_block(g2, nodes, cfg.fanouts, seed);
  std::bernoulli_distribution lab(0.3);
  Vec y(block.levels.back().size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    y[i] = lab(graph_rng) ? 1.0 : 0.0;
  }

  auto loss_of = [&](const ModelParams& p, bool want_grads,
                     std::vector<Mat>* grads) {
    Tape tape;
    ParamLeaves leaves = watch(tape, p, want_grads);
    ForwardOptions opt;
    ForwardResult fr = forward(tape, leaves, block, seqs, opt);
    Tensor loss = tape.bce_sum(fr.probs, y);
    if (want_grads) {
      tape.backward(loss);
      auto entries = const_cast<ModelParams&>(p).entries();
      // leaves were created in entries() order by watch()
      std::vector<Tensor> handles = {leaves.W_out, leaves.b_out, leaves.W_in, leaves.b_in};
      for (const GruLeaves* gl : {&leaves.gru_out, &leaves.gru_in}) {
        for (Tensor t : {gl->Wr, gl->Wu, gl->Wn, gl->Ur, gl->Uu, gl->Un, gl->br, gl->bu, gl->bn}) {
          handles.push_back(t);
        }
      }
      for (const LayerLeaves& ll : leaves.layers) {
        for (Tensor t : {ll.W2, ll.b2, ll.W3, ll.q}) handles.push_back(t);
      }
      for (Tensor t : {leaves.cls_W1, leaves.cls_b1, leaves.cls_W2, leaves.cls_b2}) {
        handles.push_back(t);
      }
      grads->clear();
      for (std::size_t i = 0; i < handles.size(); ++i) {
        const Mat& gm = tape.grad(handles[i]);
        const Mat& vm = tape.val(handles[i]);
        grads->push_back(gm.size() ? gm : Mat::Zero(vm.rows(), vm.cols()));
      }
    }
    return tape.val(loss)(0, 0);
  };

  std::vector<Mat> analytic;
  loss_of(params, true, &analytic);

  std::mt19937_64 rng(derive_seed(seed, "gradcheck", {}));
  double worst = 0.0;
  std::string worst_at;
  auto entries = params.entries();
  const double step = 1e-5;
  for (std::size_t bi = 0; bi < entries.size(); ++bi) {
    Mat* m = entries[bi].second;
    std::size_t count = std::min<std::size_t>(per_block, static_cast<std::size_t>(m->size()));
    for (std::size_t k = 0; k < count; ++k) {
      Eigen::Index i = static_cast<Eigen::Index>(
          std::uniform_int_distribution<std::size_t>(0, m->rows() - 1)(rng));
      Eigen::Index j = static_cast<Eigen::Index>(
          std::uniform_int_distribution<std::size_t>(0, m->cols() - 1)(rng));
      double saved = (*m)(i, j);
      (*m)(i, j) = saved + step;
      double up = loss_of(params, false, nullptr);
      (*m)(i, j) = saved - step;
      double down = loss_of(params, false, nullptr);
      (*m)(i, j) = saved;
      double fd = (up - down) / (2.0 * step);
      double an = analytic[bi](i, j);
      double rel = std::abs(an - fd) / std::max(1e-4, std::abs(an) + std::abs(fd));
      if (rel > worst) {
        worst = rel;
        worst_at = entries[bi].first + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
      }
      if (verbose && rel > tolerance) {
        std::cout << entries[bi].first << "(" << i << "," << j << "): analytic "
                  << an << " fd " << fd << " rel " << rel << "\n";
      }
    }
  }
  std::cout << "worst relative error " << worst << " at " << worst_at
            << " (tolerance " << tolerance << ")\n";
  if (worst > tolerance) {
    std::cout << "FAIL\n";
    return 3;
  }
  std::cout << "PASS\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"illicit-account detector for transaction multigraphs"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; flags override");

  CommonData common;
  TrainConfig cfg;
  std::string ablation = "none";
  std::string out_dir = default_data_dir();
  std::string checkpoint, split_name = "test", out_path, nodes_arg = "all";
  SynthConfig scfg;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  std::size_t gc_coords = 100;
  bool gc_verbose = false;

  CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
  gen->add_option("--normal", scfg.n_normal, "normal account count");
  gen->add_option("--illicit", scfg.n_illicit, "illicit account count");
  gen->add_option("--mean-degree", scfg.mean_out_degree, "mean out-degree");
  gen->add_option("--amount-ratio", scfg.amount_ratio, "illicit receive/send amount ratio");
  gen->add_option("--degree-skew", scfg.degree_skew, "victim in-edge multiplier");
  gen->add_option("--camouflage", scfg.camouflage, "pool-wiring probability for illicit edges");
  gen->add_option("--seed", scfg.seed, "generator seed");
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* ing = app.add_subcommand("ingest-check", "load a dataset and print a summary");
  add_common(ing, common);

  CLI::App* tr = app.add_subcommand("train", "train a detector");
  add_common(tr, common);
  add_train_flags(tr, cfg, ablation);
  tr->add_option("--out", out_dir, "output directory for checkpoint + history");

  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--split", split_name, "train | val | test");
  ev->add_option("--report", out_path, "write the report CSV here");
  ev->add_option("--seed", cfg.seed, "sampling seed");
  ev->add_option("--workers", cfg.workers, "evaluation worker threads");
  ev->add_flag("--full-neighborhood", cfg.full_neighborhood_eval,
               "evaluate without neighborhood sampling");

  CLI::App* pr = app.add_subcommand("predict", "probabilities for chosen nodes");
  add_common(pr, common);
  pr->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  pr->add_option("--nodes", nodes_arg, "comma-separated node names, or 'all'");
  pr->add_option("--out", out_path, "write node,prob CSV here");
  pr->add_option("--seed", cfg.seed, "sampling seed");
  pr->add_option("--workers", cfg.workers, "evaluation worker threads");
  pr->add_flag("--full-neighborhood", cfg.full_neighborhood_eval,
               "evaluate without neighborhood sampling");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_option("--tolerance", gc_tol, "max relative error");
  gc->add_option("--coords", gc_coords, "coordinates tested per parameter block");
  gc->add_flag("--verbose", gc_verbose, "print every failing coordinate");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_synth(out_dir, scfg);
    if (ing->parsed()) return cmd_ingest_check(common);
    if (tr->parsed()) return cmd_train(common, cfg, ablation, out_dir);
    if (ev->parsed()) return cmd_evaluate(common, checkpoint, split_name, out_path, cfg);
    if (pr->parsed()) return cmd_predict(common, checkpoint, nodes_arg, out_path, cfg);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_tol, gc_coords, gc_verbose);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << "\n";
    return 3;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
