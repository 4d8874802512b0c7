// Acceptance gate: one PASS / FAIL / SKIP line per criterion. Exits non-zero
// if any criterion fails.
//
// AC7 and the drop-rate half of AC9 need EMNIST files in CONTOURCNN_EMNIST_DIR
// (emnist-digits-{train,test}-{images-idx3,labels-idx1}-ubyte[.gz]). AC8 also
// needs CONTOURCNN_LONG=1.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "contourcnn/contour.hpp"
#include "contourcnn/dataset.hpp"
#include "contourcnn/gradcheck.hpp"
#include "contourcnn/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace contourcnn;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Star-shaped random contour in the unit square, counter-clockwise.
Points random_contour(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<double> r(0.2, 0.45), jitter(-0.3, 0.3);
  Points p(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5 + jitter(rng)) / static_cast<double>(n);
    const double rad = r(rng);
    p(i, 0) = 0.5 + rad * std::cos(t);
    p(i, 1) = 0.5 + rad * std::sin(t);
  }
  return p;
}

double min_stage_margin(const Network& net, const Matrix& x) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& st : net.forward(x, nullptr, true).stages) m = std::min(m, st.trace.min_margin);
  return m;
}

// ---------------------------------------------------------------------------

Outcome ac1_conv_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int c = 0; c < 500; ++c) {
    const Index n = uniform_index(rng, 1, 16), d = uniform_index(rng, 1, 4), k = uniform_index(rng, 1, 4);
    const Index m = std::array<Index, 3>{1, 3, 5}[c % 3];
    const Matrix x = oracle::random_matrix(rng, n, d);
    std::vector<Matrix> kernels;
    std::vector<double> biases;
    for (Index j = 0; j < k; ++j) {
      kernels.push_back(oracle::random_matrix(rng, m, d));
      biases.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
    }
    Matrix b(1, k);
    for (Index j = 0; j < k; ++j) b(0, j) = biases[static_cast<std::size_t>(j)];
    const Matrix got = circular_conv(Tensor(x), Tensor(oracle::pack_kernels(kernels)), Tensor(b), m).value();
    worst = std::max(worst, (got - oracle::circular_conv(x, kernels, biases)).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-12 && secs < 5.0;
  return {ok ? Status::Pass : Status::Fail, fmt("500 cases, max abs error %.3g (<= 1e-12), %.2f s (< 5 s)", worst, secs)};
}

Outcome ac2_shift_invariance() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(102);
  double conv_worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const Index n = uniform_index(rng, 1, 24), d = uniform_index(rng, 1, 4), k = uniform_index(rng, 1, 4);
    const Index m = std::array<Index, 3>{1, 3, 5}[c % 3];
    const Tensor w(oracle::random_matrix(rng, k, m * d)), b(oracle::random_matrix(rng, 1, k));
    const Matrix x = oracle::random_matrix(rng, n, d);
    const Matrix base = circular_conv(Tensor(x), w, b, m).value();
    for (Index s = 0; s < n; ++s) {
      const Matrix shifted = circular_conv(Tensor(roll(x, s)), w, b, m).value();
      conv_worst = std::max(conv_worst, (shifted - roll(base, s)).cwiseAbs().maxCoeff());
    }
  }

  ModelConfig cfg;
  cfg.f_out = 10;
  const Network net(cfg, 7);
  double net_worst = 0.0;
  int contours = 0, resampled = 0;
  while (contours < 100) {
    const Matrix x = random_contour(rng, uniform_index(rng, 45, 90));
    if (min_stage_margin(net, x) < 1e-9) {
      ++resampled;
      continue;
    }
    const Matrix base = net.logits(x);
    for (Index s = 0; s < x.rows(); ++s) {
      net_worst = std::max(net_worst, (net.logits(roll(x, s)) - base).cwiseAbs().maxCoeff());
    }
    ++contours;
  }
  const double secs = seconds_since(t0);
  const bool ok = conv_worst <= 1e-12 && net_worst <= 1e-6 && secs < 30.0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("conv all shifts max %.3g (<= 1e-12); network logits 100 contours max %.3g (<= 1e-6, %d tied redrawn); "
              "%.2f s (< 30 s)",
              conv_worst, net_worst, resampled, secs)};
}

Outcome ac3_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(103);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& layer, const std::function<Tensor(const Tensor&)>& f, const Matrix& x) {
    double& w = worst[layer];
    w = std::max(w, finite_difference_check(f, x).max_relative_error);
  };
  auto probe_loss = [](const Tensor& y, const Matrix& probe) { return sum(mul(y, Tensor(probe))); };

  for (int i = 0; i < 100; ++i) {
    const Index n = uniform_index(rng, 3, 12), d = uniform_index(rng, 1, 4), k = uniform_index(rng, 1, 4);
    const Index m = std::array<Index, 3>{1, 3, 5}[i % 3];
    const Matrix x = oracle::random_matrix(rng, n, d);
    const Matrix w = oracle::random_matrix(rng, k, m * d), b = oracle::random_matrix(rng, 1, k);
    const Matrix probe = oracle::random_matrix(rng, n, k);
    note("conv", [&](const Tensor& t) { return probe_loss(circular_conv(t, Tensor(w), Tensor(b), m), probe); }, x);
    note("conv", [&](const Tensor& t) { return probe_loss(circular_conv(Tensor(x), t, Tensor(b), m), probe); }, w);
    note("conv", [&](const Tensor& t) { return probe_loss(circular_conv(Tensor(x), Tensor(w), t, m), probe); }, b);

    const Matrix g = oracle::random_matrix(rng, 1, d), be = oracle::random_matrix(rng, 1, d);
    const Matrix np = oracle::random_matrix(rng, n, d);
    note("norm", [&](const Tensor& t) { return probe_loss(length_norm(t, Tensor(g), Tensor(be)), np); }, x);
    note("norm", [&](const Tensor& t) { return probe_loss(length_norm(Tensor(x), t, Tensor(be)), np); }, g);
    note("norm", [&](const Tensor& t) { return probe_loss(length_norm(Tensor(x), Tensor(g), t), np); }, be);

    const Matrix dw = oracle::random_matrix(rng, k, d), db = oracle::random_matrix(rng, 1, k);
    const Matrix dp = oracle::random_matrix(rng, 1, k);
    note("dense", [&](const Tensor& t) { return probe_loss(dense(global_avg_pool(t), Tensor(dw), Tensor(db)), dp); }, x);
    note("dense", [&](const Tensor& t) { return probe_loss(dense(global_avg_pool(Tensor(x)), t, Tensor(db)), dp); }, dw);
    note("dense", [&](const Tensor& t) { return probe_loss(dense(global_avg_pool(Tensor(x)), Tensor(dw), t), dp); }, db);

    Matrix ax = x;
    while (ax.cwiseAbs().minCoeff() < 1e-3) ax = oracle::random_matrix(rng, n, d);  // away from the ReLU kink
    for (Activation a : {Activation::ReLU, Activation::Sigmoid, Activation::TanH}) {
      note(std::string(to_string(a)), [&](const Tensor& t) { return probe_loss(activation(t, a), np); }, ax);
    }

    const Matrix logits = oracle::random_matrix(rng, 1, k + 1, -3, 3);
    const Index label = static_cast<Index>(rng() % static_cast<std::uint64_t>(k + 1));
    note("loss", [&](const Tensor& t) { return softmax_cross_entropy(t, label); }, logits);
  }

  int resampled = 0;
  for (PoolingVariant v : {PoolingVariant::RemoveOne, PoolingVariant::Max, PoolingVariant::Average}) {
    const std::string name = "pool:" + std::string(to_string(v));
    for (int i = 0; i < 100;) {
      const Index n = uniform_index(rng, 4, 20), d = uniform_index(rng, 1, 4);
      const Index target = uniform_index(rng, 1, n - 1);
      const Matrix x = oracle::random_matrix(rng, n, d);
      const PoolingSpec spec{v, target, 3};
      if (priority_pool(Tensor(x), spec).trace.min_margin < 1e-3) {
        ++resampled;
        continue;
      }
      const Matrix probe = oracle::random_matrix(rng, target, d);
      note(name, [&](const Tensor& t) { return probe_loss(priority_pool(t, spec).output, probe); }, x);
      ++i;
    }
  }

  ModelConfig cfg;
  cfg.f_out = 3;
  cfg.conv_channels = {4, 5, 6};
  cfg.pooling_targets = {6, 5, 4};
  cfg.hidden_fc = 7;
  for (int i = 0; i < 100;) {
    cfg.pooling_variant = static_cast<PoolingVariant>(i % 3);
    cfg.activation = i % 2 ? Activation::TanH : Activation::Sigmoid;
    const Network net(cfg, static_cast<std::uint64_t>(500 + i));
    const Matrix x = oracle::random_matrix(rng, 8, 2);
    if (min_stage_margin(net, x) < 1e-3) {
      ++resampled;
      continue;
    }
    const Index label = i % 3;
    note("network", [&](const Tensor& t) { return softmax_cross_entropy(net.forward(t, t.tape()).logits, label); }, x);
    ++i;
  }

  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  std::ostringstream os;
  for (const auto& [layer, err] : worst) {
    const bool selection = layer.rfind("pool:", 0) == 0 || layer == "network";
    const double bound = selection ? 1e-4 : 1e-6;
    ok = ok && err < bound;
    os << layer << " " << fmt("%.2g", err) << (selection ? "/1e-4" : "/1e-6") << "; ";
  }
  os << resampled << " near-flip draws resampled; " << fmt("%.2f s (< 60 s)", secs);
  return {ok ? Status::Pass : Status::Fail, "100 instances per layer; " + os.str()};
}

Outcome ac4_pool_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(104);
  int mismatches = 0, odd = 0;
  for (int i = 0; i < 1000; ++i) {
    const Index n = uniform_index(rng, 1, 60), target = uniform_index(rng, 1, 60);
    const Matrix x = oracle::random_matrix(rng, n, uniform_index(rng, 1, 4));
    const PoolResult r = remove_one_pool(Tensor(x), target);
    bool same = r.trace.anchors == oracle::remove_one_kept(x, target);
    for (std::size_t k = 0; same && k < r.trace.anchors.size(); ++k) {
      same = r.output.value().row(static_cast<Index>(k)) == x.row(r.trace.anchors[k]);
    }
    mismatches += !same;
  }
  for (PoolingVariant v : {PoolingVariant::Max, PoolingVariant::Average}) {
    for (int i = 0; i < 1000; ++i) {
      const Index n = uniform_index(rng, 2, 60), target = uniform_index(rng, 1, n);
      const Index window = i % 5 == 4 ? 5 : 3;
      odd += (n - target) % 2 == 1;
      const Matrix x = oracle::random_matrix(rng, n, uniform_index(rng, 1, 4));
      const PoolResult r = priority_pool(Tensor(x), {v, target, window});
      const auto naive = oracle::naive_priority_pool(x, v, target, window);
      bool same = r.output.value() == naive.values && r.trace.anchors == naive.anchors &&
                  r.trace.steps.size() == naive.steps.size();
      const auto anchor = oracle::trace_anchor_map(r.trace);
      for (std::size_t s = 0; same && s < naive.steps.size(); ++s) {
        std::vector<Index> members;
        for (Index id : r.trace.steps[s].members) members.push_back(anchor[id]);
        same = anchor[r.trace.steps[s].centre] == naive.steps[s].centre_anchor &&
               members == naive.steps[s].member_anchors &&
               (r.trace.steps[s].kind == PoolStep::Kind::Merge) == naive.steps[s].merge;
      }
      mismatches += !same;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = mismatches == 0 && secs < 30.0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("remove-one vs sort oracle 1000, max/avg vs re-scan simulator 1000 each (%d odd-parity); %d mismatches; "
              "%.2f s (< 30 s)",
              odd, mismatches, secs)};
}

Outcome ac5_polar() {
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(-10, 10), s(0.05, 20);
  double inv = 0.0, round = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Points p = random_contour(rng, uniform_index(rng, 3, 120));
    const Points q = transform_points(p, u(rng), s(rng), Eigen::Vector2d(u(rng), u(rng)));
    const Points enc = polar_encoding(p);
    inv = std::max(inv, (polar_encoding(q) - enc).cwiseAbs().maxCoeff());

    const Eigen::RowVector2d e0 = p.row(1) - p.row(0);
    double perimeter = 0.0;
    for (Index k = 0; k < p.rows(); ++k) perimeter += (p.row((k + 1) % p.rows()) - p.row(k)).norm();
    const Points back = reconstruct_points(enc, p.row(0).transpose(), std::atan2(e0(1), e0(0)), perimeter);
    round = std::max(round, (back - p).cwiseAbs().maxCoeff());
    round = std::max(round, (polar_encoding(back) - enc).cwiseAbs().maxCoeff());
  }
  const bool ok = inv <= 1e-9 && round <= 1e-6;
  return {ok ? Status::Pass : Status::Fail,
          fmt("200 contours: rigid+scale max %.3g (<= 1e-9), reconstruct/encode round trip max %.3g (<= 1e-6)", inv,
              round)};
}

Outcome ac6_synthetic_learning() {
  const auto t0 = Clock::now();
  const auto train_set = synthetic_shapes(200, 0.05, 2024);
  const auto test_set = synthetic_shapes(100, 0.05, 2025);
  ModelConfig cfg;
  cfg.f_out = kSyntheticClasses;
  Network net(cfg, 1);
  TrainConfig tc;
  tc.workers = 1;
  const Checkpoint ck = train(net, train_set, test_set, tc);
  const double acc = ck.history.back().test_accuracy;
  const double secs = seconds_since(t0);
  const bool ok = train_set.size() == 600 && test_set.size() == 300 && acc >= 0.95 && secs < 300.0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("600/300 synthetic, remove-one/relu/cartesian, %lld epochs: test accuracy %.2f%% (>= 95%%), %.1f s "
              "(< 300 s, 1 worker)",
              static_cast<long long>(tc.epochs), 100.0 * acc, secs)};
}

std::optional<fs::path> emnist_file(const fs::path& dir, const std::string& stem) {
  for (const std::string suffix : {".gz", ""}) {
    if (fs::path p = dir / (stem + suffix); fs::exists(p)) return p;
  }
  return std::nullopt;
}

struct EmnistDigits {
  IdxData train, test;
};

std::optional<EmnistDigits> load_emnist(std::string& why) {
  const char* dir = std::getenv("CONTOURCNN_EMNIST_DIR");
  if (dir == nullptr || *dir == '\0') {
    why = "CONTOURCNN_EMNIST_DIR not set";
    return std::nullopt;
  }
  const auto ti = emnist_file(dir, "emnist-digits-train-images-idx3-ubyte");
  const auto tl = emnist_file(dir, "emnist-digits-train-labels-idx1-ubyte");
  const auto vi = emnist_file(dir, "emnist-digits-test-images-idx3-ubyte");
  const auto vl = emnist_file(dir, "emnist-digits-test-labels-idx1-ubyte");
  if (!ti || !tl || !vi || !vl) {
    why = "EMNIST digits files not found in " + std::string(dir);
    return std::nullopt;
  }
  EmnistDigits d{read_idx(*ti, *tl), read_idx(*vi, *vl)};
  select_subset(d.train, Subset::Digits);
  select_subset(d.test, Subset::Digits);
  return d;
}

void truncate(IdxData& d, std::size_t n) {
  if (d.images.size() > n) {
    d.images.resize(n);
    d.labels.resize(n);
  }
}

double scaled_digits_accuracy(const EmnistDigits& full, PoolingVariant pooling, Representation rep) {
  EmnistDigits d = full;
  truncate(d.train, 10000);
  truncate(d.test, 2000);
  const auto train_set = build_contour_dataset(d.train, rep).samples;
  const auto test_set = build_contour_dataset(d.test, rep).samples;
  ModelConfig cfg;
  cfg.f_out = 10;
  cfg.pooling_variant = pooling;
  Network net(cfg, 1);
  TrainConfig tc;
  tc.workers = 1;
  return train(net, train_set, test_set, tc).history.back().test_accuracy;
}

Outcome ac7_emnist(const std::optional<EmnistDigits>& data, const std::string& why) {
  if (!data) return {Status::Skip, why + "; needs user-supplied EMNIST digits"};
  const auto t0 = Clock::now();
  const double acc = scaled_digits_accuracy(*data, PoolingVariant::RemoveOne, Representation::Cartesian);
  const double mins = seconds_since(t0) / 60.0;
  const bool ok = acc >= 0.85 && mins < 30.0;
  return {ok ? Status::Pass : Status::Fail,
          fmt("10000/2000 EMNIST digits: test accuracy %.2f%% (>= 85%%), %.1f min (< 30 min, 1 worker)", 100.0 * acc,
              mins)};
}

Outcome ac8_ablation(const std::optional<EmnistDigits>& data, const std::string& why) {
  if (!data) return {Status::Skip, why + "; long-running ablation"};
  const char* long_runs = std::getenv("CONTOURCNN_LONG");
  if (long_runs == nullptr || std::string(long_runs) != "1") return {Status::Skip, "set CONTOURCNN_LONG=1 to run"};
  const double ro = scaled_digits_accuracy(*data, PoolingVariant::RemoveOne, Representation::Cartesian);
  const double mx = scaled_digits_accuracy(*data, PoolingVariant::Max, Representation::Cartesian);
  const double av = scaled_digits_accuracy(*data, PoolingVariant::Average, Representation::Cartesian);
  const double po = scaled_digits_accuracy(*data, PoolingVariant::RemoveOne, Representation::Polar);
  const bool ok = ro >= mx && mx > av && ro > po;
  return {ok ? Status::Pass : Status::Fail,
          fmt("remove-one %.2f%% >= max %.2f%% > avg %.2f%%; cartesian %.2f%% > polar %.2f%%", 100 * ro, 100 * mx,
              100 * av, 100 * ro, 100 * po)};
}

Outcome ac9_extraction(const std::optional<EmnistDigits>& data, const std::string& why) {
  int bad = 0;
  for (Index w = 2; w <= 12; ++w) {
    for (Index h = 2; h <= 12; ++h) {
      Bitmap b(16, 16);
      for (Index y = 2; y < 2 + h; ++y)
        for (Index x = 1; x < 1 + w; ++x) b.set(x, y);
      const ContourPoints c = trace_outer_contour(b);
      bad += c.size() != 2 * (w + h) - 4 || !check_contour(c).empty();
    }
  }
  std::string detail = fmt("rectangles 2..12 x 2..12: %d of 121 wrong border length", bad);
  bool ok = bad == 0;
  if (data) {
    Index total = 0, dropped = 0;
    for (const IdxData* set : {&data->train, &data->test}) {
      const BuildResult r = build_contour_dataset(*set, Representation::Cartesian, 128, 3, 1);
      total += static_cast<Index>(set->images.size());
      dropped += r.drops.total();
    }
    const double rate = static_cast<double>(dropped) / static_cast<double>(std::max<Index>(total, 1));
    ok = ok && rate < 0.01;
    detail += fmt("; EMNIST digits drop rate %.3f%% of %lld (< 1%%)", 100.0 * rate, static_cast<long long>(total));
  } else {
    detail += "; EMNIST drop rate not checked (" + why + ")";
  }
  return {ok ? Status::Pass : Status::Fail, detail};
}

}  // namespace

int main() {
  std::string why;
  std::optional<EmnistDigits> emnist;
  try {
    emnist = load_emnist(why);
  } catch (const std::exception& e) {
    why = std::string("EMNIST load failed: ") + e.what();
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 circular convolution oracle", ac1_conv_oracle},
      {"AC2 shift equivariance / invariance", ac2_shift_invariance},
      {"AC3 gradient checks", ac3_gradients},
      {"AC4 priority pooling oracles", ac4_pool_oracles},
      {"AC5 polar invariance", ac5_polar},
      {"AC6 synthetic desk-scale learning", ac6_synthetic_learning},
      {"AC7 scaled EMNIST digits", [&] { return ac7_emnist(emnist, why); }},
      {"AC8 ablation ordering", [&] { return ac8_ablation(emnist, why); }},
      {"AC9 contour extraction", [&] { return ac9_extraction(emnist, why); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::printf("%s  %-38s %s\n", tag, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.status == Status::Fail;
  }
  return failed == 0 ? 0 : 1;
}
