#include "advrec/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advrec/checkpoint.hpp"
#include "advrec/dataio.hpp"
#include "advrec/errors.hpp"
#include "advrec/eval.hpp"
#include "advrec/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace advrec {

namespace {

struct DataPaths {
  std::string train;
  std::string valid;
  std::string test;
};

void add_data_options(CLI::App* cmd, DataPaths& p) {
  cmd->add_option("--train", p.train, "train pairs (user<TAB>item)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--valid", p.valid, "validation pairs")->check(CLI::ExistingFile);
  cmd->add_option("--test", p.test, "test pairs")->check(CLI::ExistingFile);
}

InteractionSet load(const DataPaths& p) { return load_interactions(p.train, p.valid, p.test); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// key = value lines that can be fed back through --config.
class IniWriter {
 public:
  template <typename T>
  void add(const std::string& key, const T& v) {
    if constexpr (std::is_floating_point_v<T>) {
      lines_ << key << " = " << fmt_double(v) << '\n';
    } else {
      lines_ << key << " = " << v << '\n';
    }
  }
  void write(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << lines_.str();
  }

 private:
  std::ostringstream lines_;
};

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create output directory " + dir);
  return p;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  DataPaths data;
  std::string out_dir = "run";
  std::string backbone = "lightgcn";
  std::string loss = "advinfonce";
  std::string strategy = "adv";
  std::string hardness_model = "embed";
  int save_every = 0;
  TrainConfig cfg;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "alternating min-max training");
  c->add_option("--config", "INI file of key = value pairs; flags override it");
  add_data_options(c, a.data);
  c->add_option("--out", a.out_dir, "output directory")->capture_default_str();
  c->add_option("--backbone", a.backbone, "mf | lightgcn")->capture_default_str();
  c->add_option("--dim", a.cfg.dim)->capture_default_str();
  c->add_option("--layers", a.cfg.layers, "LightGCN propagation layers")->capture_default_str();
  c->add_option("--tau", a.cfg.tau, "cosine temperature")->capture_default_str();
  c->add_option("--loss", a.loss, "advinfonce | bpr")->capture_default_str();
  c->add_option("--hardness_strategy", a.strategy, "adv | reverse | rand | none")->capture_default_str();
  c->add_option("--hardness_model", a.hardness_model, "embed | mlp")->capture_default_str();
  c->add_option("--mlp_latent", a.cfg.mlp_latent)->capture_default_str();
  c->add_option("--lr", a.cfg.lr)->capture_default_str();
  c->add_option("--lr_adv", a.cfg.lr_adv)->capture_default_str();
  c->add_option("--batch_size", a.cfg.batch_size)->capture_default_str();
  c->add_option("--n_negatives", a.cfg.n_negatives)->capture_default_str();
  c->add_option("--k_weight", a.cfg.k_weight)->capture_default_str();
  c->add_option("--e_adv_max", a.cfg.e_adv_max)->capture_default_str();
  c->add_option("--t_adv_interval", a.cfg.t_adv_interval)->capture_default_str();
  c->add_option("--max_epochs", a.cfg.max_epochs)->capture_default_str();
  c->add_option("--eval_every", a.cfg.eval_every)->capture_default_str();
  c->add_option("--patience", a.cfg.patience)->capture_default_str();
  c->add_option("--k_eval", a.cfg.k_eval)->capture_default_str();
  c->add_option("--threads", a.cfg.threads)->capture_default_str();
  c->add_option("--seed", a.cfg.seed)->capture_default_str();
  c->add_option("--save_every", a.save_every, "also write epoch_NNNN.ckpt every n epochs (0 = off)")
      ->capture_default_str();
}

int cmd_train(TrainArgs& a, std::ostream& err) {
  a.cfg.backbone = parse_backbone(a.backbone);
  a.cfg.loss = parse_loss_kind(a.loss);
  a.cfg.hardness_strategy = parse_strategy(a.strategy);
  a.cfg.hardness_model = parse_hardness_kind(a.hardness_model);
  a.cfg.validate();
  if (a.save_every < 0) throw BadParam("save_every must be >= 0");

  const auto data = load(a.data);
  const auto dir = prepare_dir(a.out_dir);

  IniWriter ini;
  ini.add("train", a.data.train);
  ini.add("valid", a.data.valid);
  ini.add("test", a.data.test);
  ini.add("out", a.out_dir);
  ini.add("backbone", to_string(a.cfg.backbone));
  ini.add("dim", a.cfg.dim);
  ini.add("layers", a.cfg.layers);
  ini.add("tau", a.cfg.tau);
  ini.add("loss", to_string(a.cfg.loss));
  ini.add("hardness_strategy", to_string(a.cfg.hardness_strategy));
  ini.add("hardness_model", to_string(a.cfg.hardness_model));
  ini.add("mlp_latent", a.cfg.mlp_latent);
  ini.add("lr", a.cfg.lr);
  ini.add("lr_adv", a.cfg.lr_adv);
  ini.add("batch_size", a.cfg.batch_size);
  ini.add("n_negatives", a.cfg.n_negatives);
  ini.add("k_weight", a.cfg.k_weight);
  ini.add("e_adv_max", a.cfg.e_adv_max);
  ini.add("t_adv_interval", a.cfg.t_adv_interval);
  ini.add("max_epochs", a.cfg.max_epochs);
  ini.add("eval_every", a.cfg.eval_every);
  ini.add("patience", a.cfg.patience);
  ini.add("k_eval", a.cfg.k_eval);
  ini.add("threads", a.cfg.threads);
  ini.add("seed", a.cfg.seed);
  ini.add("save_every", a.save_every);
  ini.write(dir / "config.ini");

  std::ofstream log(dir / "metrics.jsonl");
  if (!log) throw IoError("cannot write " + (dir / "metrics.jsonl").string());

  err << "train: " << data.n_users() << " users, " << data.n_items() << " items, "
      << data.pairs(Split::Train).size() << " train pairs\n";
  const auto result = run_training(data, a.cfg, [&](const TrainState& st, const MetricsRecord* rec) {
    if (rec != nullptr) {
      log << to_json_line(*rec) << '\n';
      log.flush();
      err << "epoch " << rec->epoch << "  loss " << fmt_double(rec->loss) << "  recall@" << rec->k << ' '
          << fmt_double(rec->recall) << "  e_adv " << rec->e_adv << '\n';
    }
    if (a.save_every > 0 && st.epoch % a.save_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", st.epoch);
      save_checkpoint((dir / name).string(), st.encoder, st.hardness);
    }
  });
  save_checkpoint((dir / "best.ckpt").string(), result.best_encoder, result.best_hardness);
  save_checkpoint((dir / "final.ckpt").string(), result.state.encoder, result.state.hardness);
  err << "done: best epoch " << result.best_epoch << ", stopped after " << result.stopped_epoch << '\n';
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvalArgs {
  DataPaths data;
  std::string checkpoint;
  std::string split = "test";
  std::string candidates;
  std::size_t k_eval = 20;
  unsigned threads = 1;
};

void add_evaluate(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("evaluate", "all-ranking Top-K metrics of a checkpoint");
  add_data_options(c, a.data);
  c->add_option("--checkpoint", a.checkpoint)->required()->check(CLI::ExistingFile);
  c->add_option("--split", a.split, "valid | test")->capture_default_str();
  c->add_option("--k_eval", a.k_eval)->capture_default_str();
  c->add_option("--candidates", a.candidates, "file of raw item ids; rank only these")
      ->check(CLI::ExistingFile);
  c->add_option("--threads", a.threads)->capture_default_str();
}

std::vector<ItemId> load_candidates(const std::string& path, const InteractionSet& data) {
  std::vector<ItemId> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::int64_t raw = 0;
    try {
      raw = std::stoll(line);
    } catch (const std::exception&) {
      throw ParseError(path + ": bad item id '" + line + "'");
    }
    if (const auto d = data.dense_item(raw); d >= 0) out.push_back(static_cast<ItemId>(d));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw NoCandidates(path + " names no known item");
  return out;
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  Split split;
  if (a.split == "valid") {
    split = Split::Valid;
  } else if (a.split == "test") {
    split = Split::Test;
  } else {
    throw BadParam("split must be valid or test");
  }
  if (a.k_eval < 1) throw BadParam("k_eval must be >= 1");
  const auto data = load(a.data);
  const auto ck = load_checkpoint(a.checkpoint, data);
  const auto cand = load_candidates(a.candidates, data);
  const auto rep = evaluate_split(ck.encoder, data, split, a.k_eval, cand, a.threads);
  const std::string k = std::to_string(a.k_eval);
  nlohmann::ordered_json j;
  j["split"] = a.split;
  j["hr@" + k] = rep.hr;
  j["recall@" + k] = rep.recall;
  j["ndcg@" + k] = rep.ndcg;
  j["users"] = rep.users;
  out << j.dump() << '\n';
  return kExitOk;
}

// ---- generate -------------------------------------------------------------

struct GenArgs {
  SyntheticSpec spec;
  std::string out_dir = "data";
  double gamma = 0.0;
  std::size_t groups = 50;
  std::size_t n0 = 10;
};

void add_generate(CLI::App& app, GenArgs& a) {
  auto* c = app.add_subcommand("generate", "synthetic biased-exposure dataset");
  c->add_option("--config", "INI file of key = value pairs; flags override it");
  c->add_option("--out", a.out_dir, "output directory")->capture_default_str();
  c->add_option("--n_users", a.spec.n_users)->capture_default_str();
  c->add_option("--n_items", a.spec.n_items)->capture_default_str();
  c->add_option("--latent_dim", a.spec.latent_dim)->capture_default_str();
  c->add_option("--exposure_bias_strength", a.spec.exposure_bias_strength)->capture_default_str();
  c->add_option("--train_fraction", a.spec.train_fraction)->capture_default_str();
  c->add_option("--fn_plant_rate", a.spec.fn_plant_rate)->capture_default_str();
  c->add_option("--relevance_quantile", a.spec.relevance_quantile)->capture_default_str();
  c->add_option("--zipf_exponent", a.spec.zipf_exponent)->capture_default_str();
  c->add_option("--seed", a.spec.seed)->capture_default_str();
  c->add_option("--gamma", a.gamma, "long-tail test split with this imbalance (0 = off)")
      ->capture_default_str();
  c->add_option("--groups", a.groups, "popularity groups for --gamma")->capture_default_str();
  c->add_option("--n0", a.n0, "test interactions drawn from the most popular group")
      ->capture_default_str();
}

int cmd_generate(const GenArgs& a, std::ostream& err) {
  a.spec.validate();
  auto world = generate_synthetic(a.spec);
  const auto dir = prepare_dir(a.out_dir);

  IniWriter ini;
  ini.add("n_users", a.spec.n_users);
  ini.add("n_items", a.spec.n_items);
  ini.add("latent_dim", a.spec.latent_dim);
  ini.add("exposure_bias_strength", a.spec.exposure_bias_strength);
  ini.add("train_fraction", a.spec.train_fraction);
  ini.add("fn_plant_rate", a.spec.fn_plant_rate);
  ini.add("relevance_quantile", a.spec.relevance_quantile);
  ini.add("zipf_exponent", a.spec.zipf_exponent);
  ini.add("seed", a.spec.seed);
  ini.add("gamma", a.gamma);
  ini.add("groups", a.groups);
  ini.add("n0", a.n0);
  ini.write(dir / "spec.ini");

  const auto& set = world.set;
  if (a.gamma > 0.0) {
    std::vector<Pair> pool = set.pairs(Split::Train);
    const auto& valid = set.pairs(Split::Valid);
    pool.insert(pool.end(), valid.begin(), valid.end());
    std::sort(pool.begin(), pool.end());
    auto rng = substream(a.spec.seed, "gamma-split");
    const auto g = gamma_split(pool, set.n_items(), a.gamma, a.groups, a.n0, rng);
    write_pairs(dir / "train.tsv", g.train, set);
    write_pairs(dir / "valid.tsv", g.valid, set);
    write_pairs(dir / "test.tsv", g.test, set);
    write_pairs(dir / "planted_fn.tsv", std::vector<Pair>{}, set);
    std::ofstream man(dir / "manifest.tsv");
    if (!man) throw IoError("cannot write manifest");
    man << "group\tquota\tdrawn\n";
    for (std::size_t i = 0; i < g.quotas.size(); ++i) {
      man << i + 1 << '\t' << g.quotas[i] << '\t' << g.drawn[i] << '\n';
    }
    err << "generate: gamma split " << g.train.size() << '/' << g.valid.size() << '/' << g.test.size()
        << '\n';
    return kExitOk;
  }
  write_pairs(dir / "train.tsv", set.pairs(Split::Train), set);
  write_pairs(dir / "valid.tsv", set.pairs(Split::Valid), set);
  write_pairs(dir / "test.tsv", set.pairs(Split::Test), set);
  write_pairs(dir / "planted_fn.tsv", world.planted_fn, set);
  err << "generate: " << set.pairs(Split::Train).size() << " train, " << set.pairs(Split::Valid).size()
      << " valid, " << set.pairs(Split::Test).size() << " test pairs, " << world.planted_fn.size()
      << " planted false negatives\n";
  return kExitOk;
}

// ---- diagnose -------------------------------------------------------------

struct DiagArgs {
  DataPaths data;
  std::string which;
  std::vector<std::string> checkpoints;
  std::string planted;
  std::string out = "diagnose.csv";
  std::size_t bins = 10;
  std::size_t n_negatives = 128;
  std::size_t samples = 2000;
  std::size_t resamples = 1;
  std::size_t max_entities = 2000;
  std::uint64_t seed = 2023;
};

void add_diagnose(CLI::App& app, DiagArgs& a) {
  auto* c = app.add_subcommand("diagnose", "hardness and representation diagnostics");
  add_data_options(c, a.data);
  c->add_option("--which", a.which, "profile | fnrate | alignuniform")
      ->required()
      ->check(CLI::IsMember({"profile", "fnrate", "alignuniform"}));
  c->add_option("--checkpoint", a.checkpoints, "one or more checkpoints (one CSV row each for alignuniform)")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--planted", a.planted, "planted false negatives (fnrate)");
  c->add_option("--out", a.out, "CSV output path")->capture_default_str();
  c->add_option("--bins", a.bins)->capture_default_str();
  c->add_option("--n_negatives", a.n_negatives)->capture_default_str();
  c->add_option("--samples", a.samples, "sampled train pairs (profile)")->capture_default_str();
  c->add_option("--resamples", a.resamples, "contexts per planted pair (fnrate)")->capture_default_str();
  c->add_option("--max_entities", a.max_entities, "entity sample size (alignuniform)")
      ->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
}

int cmd_diagnose(const DiagArgs& a, std::ostream& err) {
  const auto data = load(a.data);
  auto rng = substream(a.seed, "diagnose-" + a.which);
  std::ostringstream csv;

  if (a.which == "profile") {
    if (a.bins < 2) throw BadParam("bins must be >= 2");
    const auto ck = load_checkpoint(a.checkpoints.front(), data);
    const auto prof =
        hardness_popularity_profile(ck.hardness, ck.encoder, data, a.bins, a.n_negatives, a.samples, rng);
    csv << "bin,mean_p,count,uniform\n";
    for (const auto& b : prof) {
      csv << b.bin << ',' << fmt_double(b.mean_p) << ',' << b.count << ','
          << fmt_double(1.0 / static_cast<double>(a.n_negatives)) << '\n';
    }
  } else if (a.which == "fnrate") {
    std::vector<Pair> planted;
    if (!a.planted.empty()) {
      if (!fs::exists(a.planted)) throw IoError("planted file not found: " + a.planted);
      planted = load_pairs_mapped(a.planted, data);
    }
    if (planted.empty()) {
      throw EmptyFnList("no planted false negatives; fnrate needs a synthetic dataset with --planted");
    }
    csv << "checkpoint,rate,trials,identified\n";
    for (const auto& path : a.checkpoints) {
      const auto ck = load_checkpoint(path, data);
      const auto r = fn_identification_rate(ck.hardness, planted, ck.encoder, data, a.n_negatives,
                                            a.resamples, rng);
      csv << path << ',' << fmt_double(r.rate) << ',' << r.trials << ',' << r.identified << '\n';
    }
  } else {
    auto positives = data.pairs(Split::Test);
    if (positives.empty()) positives = data.pairs(Split::Train);
    std::vector<std::size_t> entities(data.n_users() + data.n_items());
    std::iota(entities.begin(), entities.end(), std::size_t{0});
    if (entities.size() > a.max_entities) {
      std::shuffle(entities.begin(), entities.end(), rng);
      entities.resize(a.max_entities);
      std::sort(entities.begin(), entities.end());
    }
    csv << "checkpoint,align,uniform\n";
    for (const auto& path : a.checkpoints) {
      const auto ck = load_checkpoint(path, data);
      const auto au = alignment_uniformity(ck.encoder, positives, entities);
      csv << path << ',' << fmt_double(au.align) << ',' << fmt_double(au.uniform) << '\n';
    }
  }

  std::ofstream out(a.out);
  if (!out) throw IoError("cannot write " + a.out);
  out << csv.str();
  err << "diagnose: wrote " << a.out << '\n';
  return kExitOk;
}

// Flat "key = value" file expanded to --key value, placed ahead of the real
// flags so that those win under TakeLast.
std::vector<std::string> read_config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string x) {
    const auto b = x.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = x.find_last_not_of(" \t\r");
    return x.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw BadParam(path + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw BadParam(path + ":" + std::to_string(lineno) + ": empty key");
    if (key == "config" || value.empty()) continue;
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

std::vector<std::string> expand_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return args;
  std::vector<std::string> from_file;
  for (std::size_t k = 1; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      auto more = read_config_args(args[k + 1]);
      from_file.insert(from_file.end(), more.begin(), more.end());
    } else if (args[k].rfind("--config=", 0) == 0) {
      auto more = read_config_args(args[k].substr(9));
      from_file.insert(from_file.end(), more.begin(), more.end());
    }
  }
  args.insert(args.begin() + 1, from_file.begin(), from_file.end());
  return args;
}

void last_flag_wins(CLI::App& app) {
  for (auto* sub : app.get_subcommands({}))
    for (auto* opt : sub->get_options({}))
      if (opt->get_expected_max() == 1 && opt->get_type_size_max() == 1)
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial InfoNCE collaborative filtering"};
  app.name("advrec");
  app.require_subcommand(1);

  TrainArgs train;
  EvalArgs evaluate;
  GenArgs generate;
  DiagArgs diagnose;
  add_train(app, train);
  add_evaluate(app, evaluate);
  add_generate(app, generate);
  add_diagnose(app, diagnose);
  last_flag_wins(app);

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BadParam& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train, err);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(evaluate, out);
    if (app.got_subcommand("generate")) return cmd_generate(generate, err);
    return cmd_diagnose(diagnose, err);
  } catch (const NonFinite& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NonFiniteGradient& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace advrec
