#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "contourcnn/contour.hpp"
#include "contourcnn/dataset.hpp"
#include "contourcnn/errors.hpp"
#include "contourcnn/training.hpp"

namespace fs = std::filesystem;
using namespace contourcnn;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kNumeric = 3;

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("cannot write " + path.string());
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key = value lines; '#' starts a comment. Only options not given on the
// command line take the file's value.
void apply_config_file(CLI::App& cmd, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key == "config") throw UsageError(path.string() + ": config files cannot nest");
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": unknown option '" + key + "'");
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

std::string drop_summary(const DropReport& drops) {
  std::ostringstream os;
  os << "dropped " << drops.total() << " images";
  bool first = true;
  for (const auto& [reason, n] : drops.counts) {
    os << (first ? ": " : ", ") << reason << " " << n;
    first = false;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string images, labels, subset = "digits", representation = "cartesian", out;
  bool polar = false, cartesian = false;
  int threshold = 128;
  Index min_length = 3;
  Index per_class = 200;
  double noise = 0.05;
  std::uint64_t seed = 1;
  unsigned workers = default_workers();
};

Representation chosen_representation(const std::string& name, bool polar, bool cartesian) {
  if (polar) return Representation::Polar;
  if (cartesian) return Representation::Cartesian;
  return parse_representation(name);
}

int run_prepare(const PrepareArgs& a) {
  const Subset subset = parse_subset(a.subset);
  const Representation rep = chosen_representation(a.representation, a.polar, a.cartesian);
  if (a.threshold < 0 || a.threshold > 255) throw UsageError("--threshold must be in [0, 255]");
  SampleCache cache;
  cache.representation = rep;
  if (subset == Subset::Synthetic) {
    cache.class_count = kSyntheticClasses;
    cache.samples = synthetic_shapes(a.per_class, a.noise, a.seed, rep, a.threshold);
    std::cout << "generated " << cache.samples.size() << " synthetic samples\n";
  } else {
    if (a.images.empty() || a.labels.empty()) throw UsageError("--images and --labels are required");
    IdxData data = read_idx(a.images, a.labels);
    const Index read = static_cast<Index>(data.images.size());
    const Index filtered = select_subset(data, subset);
    cache.class_count = subset == Subset::Digits ? 10 : 26;
    BuildResult built = build_contour_dataset(data, rep, a.threshold, a.min_length, a.workers);
    cache.samples = std::move(built.samples);
    std::cout << "read " << read << " images, " << filtered << " outside the " << to_string(subset)
              << " subset\n";
    std::cout << drop_summary(built.drops) << "\n";
  }
  cache_write(cache, a.out);
  std::cout << "wrote " << cache.samples.size() << " " << to_string(rep) << " samples to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string train, test, out, metrics;
  std::string pooling = "remove-one", activation = "relu", optimizer = "adam";
  double lr = 1e-3;
  Index epochs = 20, batch = 32, kernel = 3, window = 3, hidden = 80;
  std::vector<Index> channels{32, 64, 128}, targets{40, 30, 20};
  bool no_length_norm = false;
  std::uint64_t seed = 1;
  unsigned workers = default_workers();
};

int run_train(const TrainArgs& a) {
  const SampleCache train_set = cache_read(a.train);
  const SampleCache test_set = cache_read(a.test);
  if (train_set.representation != test_set.representation) {
    throw UsageError("train cache is " + std::string(to_string(train_set.representation)) + " but test cache is " +
                     std::string(to_string(test_set.representation)));
  }
  if (train_set.class_count != test_set.class_count) {
    throw UsageError("train and test caches disagree on the class count");
  }
  ModelConfig model;
  model.f_out = train_set.class_count;
  model.conv_channels = a.channels;
  model.pooling_targets = a.targets;
  model.conv_kernel_size = a.kernel;
  model.pooling_window = a.window;
  model.pooling_variant = parse_pooling_variant(a.pooling);
  model.activation = parse_activation(a.activation);
  model.hidden_fc = a.hidden;
  model.use_length_norm = !a.no_length_norm;

  TrainConfig cfg;
  cfg.optimizer = parse_optimizer(a.optimizer);
  cfg.learning_rate = a.lr;
  cfg.effective_batch = a.batch;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.workers = a.workers;
  cfg.validate();

  Network net(model, a.seed);
  std::cout << "training on " << train_set.samples.size() << " samples, testing on " << test_set.samples.size()
            << " (" << net.parameter_count() << " parameters)\n";
  const Checkpoint ckpt = train(net, train_set.samples, test_set.samples, cfg, [&](const EpochMetrics& m) {
    std::cout << "epoch " << m.epoch << "/" << cfg.epochs << "  loss " << m.train_loss << "  test "
              << percent(m.test_accuracy) << std::endl;
  });
  checkpoint_save(a.out, ckpt);
  if (!a.metrics.empty()) write_text(a.metrics, metrics_csv(ckpt.history));
  const double final_acc = ckpt.history.empty() ? evaluate(net, test_set.samples, cfg.workers).accuracy
                                                 : ckpt.history.back().test_accuracy;
  std::cout << "Final test accuracy: " << percent(final_acc) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, confusion;
  unsigned workers = default_workers();
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = checkpoint_load(a.checkpoint);
  const SampleCache data = cache_read(a.data);
  const Evaluation ev = evaluate(ckpt, data, a.workers);
  std::cout << "Accuracy: " << percent(ev.accuracy) << " (" << ev.confusion.correct() << "/" << ev.confusion.total()
            << ")\n";
  if (!a.confusion.empty()) write_text(a.confusion, ev.confusion.to_csv(class_names(data.class_count)));
  return kOk;
}

// ---------------------------------------------------------------------------

struct SimplifyArgs {
  std::string checkpoint, data, out_prefix;
  long long index = 0;
};

std::string svg_stage(const Points& pts, const SimplificationStage& stage, Index stage_no) {
  constexpr double size = 400.0, pad = 20.0, rmax = 8.0;
  const Eigen::RowVector2d lo = pts.colwise().minCoeff();
  const Eigen::RowVector2d hi = pts.colwise().maxCoeff();
  const double span = std::max({hi(0) - lo(0), hi(1) - lo(1), 1e-12});
  auto map = [&](Index i) {
    const double s = (size - 2 * pad) / span;
    return std::pair{pad + (pts(i, 0) - lo(0)) * s, pad + (pts(i, 1) - lo(1)) * s};
  };
  const double peak = stage.magnitudes.empty() ? 0.0 : *std::max_element(stage.magnitudes.begin(), stage.magnitudes.end());

  std::ostringstream os;
  os.precision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << size << "\" height=\"" << size
     << "\" viewBox=\"0 0 " << size << " " << size << "\">\n"
     << "<title>stage " << stage_no << ": " << stage.indices.size() << " points</title>\n"
     << "<polyline fill=\"none\" stroke=\"#333\" stroke-width=\"1.5\" points=\"";
  for (std::size_t k = 0; k <= stage.indices.size(); ++k) {
    if (stage.indices.empty()) break;
    const auto [x, y] = map(stage.indices[k % stage.indices.size()]);
    os << (k ? " " : "") << x << "," << y;
  }
  os << "\"/>\n";
  for (std::size_t k = 0; k < stage.indices.size(); ++k) {
    const auto [x, y] = map(stage.indices[k]);
    const double w = peak > 0 ? stage.magnitudes[k] / peak : 0.0;
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << rmax * w << "\" fill=\"#c0392b\" fill-opacity=\""
       << w << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int run_simplify(const SimplifyArgs& a) {
  const Checkpoint ckpt = checkpoint_load(a.checkpoint);
  const SampleCache data = cache_read(a.data);
  if (data.representation != ckpt.representation) {
    throw UsageError("checkpoint and data use different representations");
  }
  if (a.index < 0 || a.index >= static_cast<long long>(data.samples.size())) {
    throw UsageError("--index " + std::to_string(a.index) + " out of range [0, " +
                     std::to_string(data.samples.size()) + ")");
  }
  const ContourSample& s = data.samples[static_cast<std::size_t>(a.index)];
  const Points pts = s.representation == Representation::Cartesian
                         ? Points(s.features)
                         : reconstruct_points(s.features, Eigen::Vector2d::Zero(), 0.0, 1.0);
  const auto stages = simplification_trace(ckpt.network(), s.features);
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const std::string base = a.out_prefix + "_stage" + std::to_string(k);
    write_text(base + ".svg", svg_stage(pts, stages[k], static_cast<Index>(k)));
    std::ostringstream csv;
    csv.precision(17);
    csv << "x,y,magnitude\n";
    for (std::size_t j = 0; j < stages[k].indices.size(); ++j) {
      const Index i = stages[k].indices[j];
      csv << pts(i, 0) << "," << pts(i, 1) << "," << stages[k].magnitudes[j] << "\n";
    }
    write_text(base + ".csv", csv.str());
    std::cout << "stage " << k << ": " << stages[k].indices.size() << " points -> " << base << ".svg\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string data, checkpoint;
};

int run_inspect(const InspectArgs& a) {
  int status = kOk;
  if (!a.data.empty()) {
    const SampleCache cache = cache_read(a.data);
    std::cout << a.data << ": " << cache.samples.size() << " " << to_string(cache.representation) << " samples, "
              << cache.class_count << " classes\n";
    std::map<Index, Index> per_class;
    Index shortest = 0, longest = 0, invalid = 0;
    for (const auto& s : cache.samples) {
      ++per_class[s.label];
      const Index n = s.features.rows();
      shortest = shortest == 0 ? n : std::min(shortest, n);
      longest = std::max(longest, n);
      if (const std::string err = validate_sample(s, cache.class_count); !err.empty()) {
        if (invalid++ < 10) std::cerr << "sample " << s.source_id << ": " << err << "\n";
      }
    }
    std::cout << "contour length " << shortest << ".." << longest << "\n";
    const auto names = class_names(cache.class_count);
    for (const auto& [label, n] : per_class) {
      const bool known = label >= 0 && label < static_cast<Index>(names.size());
      std::cout << "  " << (known ? names[static_cast<std::size_t>(label)] : std::to_string(label)) << ": " << n << "\n";
    }
    if (invalid > 0) {
      std::cout << invalid << " invalid samples\n";
      status = kUsage;
    }
  }
  if (!a.checkpoint.empty()) {
    const Checkpoint ck = checkpoint_load(a.checkpoint);
    const Network net = ck.network();
    const ModelConfig& m = ck.model;
    std::cout << a.checkpoint << ": epoch " << ck.epoch << ", " << to_string(ck.representation) << ", "
              << m.f_out << " classes, " << net.parameter_count() << " parameters\n"
              << "  pooling " << to_string(m.pooling_variant) << ", activation " << to_string(m.activation)
              << (m.use_length_norm ? ", length norm" : "") << "\n";
    if (!ck.history.empty()) {
      std::cout << "  last test accuracy " << percent(ck.history.back().test_accuracy) << "\n";
    }
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contour classification with circular convolutions and priority pooling"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Extract contours from IDX images (or generate shapes) into a cache");
  prepare->add_option("--images", prep.images, "IDX image file (gzip or plain)")->check(CLI::ExistingFile);
  prepare->add_option("--labels", prep.labels, "IDX label file (gzip or plain)")->check(CLI::ExistingFile);
  prepare->add_option("--subset", prep.subset, "digits | letters | synthetic")->capture_default_str();
  auto* rep_opt = prepare->add_option("--representation", prep.representation, "cartesian | polar")
                      ->capture_default_str();
  auto* polar_flag = prepare->add_flag("--polar", prep.polar, "Same as --representation polar");
  auto* cart_flag = prepare->add_flag("--cartesian", prep.cartesian, "Same as --representation cartesian");
  rep_opt->excludes(polar_flag)->excludes(cart_flag);
  polar_flag->excludes(cart_flag);
  prepare->add_option("--threshold", prep.threshold, "Binarization threshold")->capture_default_str();
  prepare->add_option("--min-length", prep.min_length, "Drop contours shorter than this")->capture_default_str();
  prepare->add_option("--per-class", prep.per_class, "Synthetic samples per class")->capture_default_str();
  prepare->add_option("--noise", prep.noise, "Synthetic boundary jitter")->capture_default_str();
  prepare->add_option("--seed", prep.seed, "Synthetic generator seed")->capture_default_str();
  prepare->add_option("--workers", prep.workers, "Extraction threads");
  prepare->add_option("--out", prep.out, "Output cache")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on a cache");
  train_cmd->add_option("--train", tr.train, "Training cache")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--test", tr.test, "Test cache")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--pooling", tr.pooling, "remove-one | max | avg")->capture_default_str();
  train_cmd->add_option("--activation", tr.activation, "relu | sigmoid | tanh")->capture_default_str();
  train_cmd->add_option("--optimizer", tr.optimizer, "adam | sgd")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Samples per optimizer step")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Initialisation and shuffle seed")->capture_default_str();
  train_cmd->add_option("--kernel", tr.kernel, "Convolution kernel size (odd)")->capture_default_str();
  train_cmd->add_option("--window", tr.window, "Priority pooling window")->capture_default_str();
  train_cmd->add_option("--channels", tr.channels, "Channels per block")->delimiter(',')->capture_default_str();
  train_cmd->add_option("--targets", tr.targets, "Pooling target per block")->delimiter(',')->capture_default_str();
  train_cmd->add_option("--hidden", tr.hidden, "Hidden fully connected width")->capture_default_str();
  train_cmd->add_flag("--no-length-norm", tr.no_length_norm, "Disable per-sample length normalization");
  train_cmd->add_option("--workers", tr.workers, "Gradient threads (1 for bit-exact runs)");
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--metrics", tr.metrics, "Per-epoch metrics CSV");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a cache");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--confusion", ev.confusion, "Confusion matrix CSV");
  eval_cmd->add_option("--workers", ev.workers);

  SimplifyArgs si;
  auto* simplify_cmd = app.add_subcommand("simplify", "Export the contour kept by each pooling stage");
  simplify_cmd->add_option("--checkpoint", si.checkpoint)->required()->check(CLI::ExistingFile);
  simplify_cmd->add_option("--data", si.data)->required()->check(CLI::ExistingFile);
  simplify_cmd->add_option("--index", si.index, "Sample index in the cache")->capture_default_str();
  simplify_cmd->add_option("--out-prefix", si.out_prefix, "Writes PREFIX_stageK.svg and .csv")->required();

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarise and validate a cache or checkpoint");
  inspect_cmd->add_option("--data", in.data)->check(CLI::ExistingFile);
  inspect_cmd->add_option("--checkpoint", in.checkpoint)->check(CLI::ExistingFile);
  inspect_cmd->require_option(1, 2);

  std::map<CLI::App*, std::string> config_paths;
  for (CLI::App* cmd : {prepare, train_cmd, eval_cmd, simplify_cmd}) {
    cmd->add_option("--config", config_paths[cmd], "key = value file; explicit flags win");
  }

  try {
    // Config files may supply required options, so requirements are checked
    // after they are merged.
    std::vector<std::pair<CLI::App*, CLI::Option*>> required;
    for (CLI::App* cmd : {prepare, train_cmd, eval_cmd, simplify_cmd}) {
      for (CLI::Option* opt : cmd->get_options()) {
        if (opt->get_required()) {
          required.emplace_back(cmd, opt);
          opt->required(false);
        }
      }
    }
    app.parse(argc, argv);
    for (auto& [cmd, path] : config_paths) {
      if (cmd->parsed() && !path.empty()) apply_config_file(*cmd, path);
    }
    for (auto [cmd, opt] : required) {
      if (cmd->parsed() && opt->count() == 0) {
        throw CLI::RequiredError(opt->get_name());
      }
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (prepare->parsed()) return run_prepare(prep);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (simplify_cmd->parsed()) return run_simplify(si);
    if (inspect_cmd->parsed()) return run_inspect(in);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
