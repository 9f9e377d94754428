// slsp: structured-sparsity transform toolkit.
//
// Subcommands: pack, verify, lift, analyze, bench.
// Exit codes: 0 success, 1 verification failure, 2 usage error,
// 3 I/O or container format error.

#include "slsp/slsp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;
using namespace slsp;

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 1;
  bool quiet = false;

  int resolved_threads() const {
    if (const char* env = std::getenv("SLSP_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    return threads;
  }
};

std::pair<int, int> parse_ratio_arg(const std::string& text, const char* what) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw UsageError(std::string(what) + " must look like Z:L, got '" + text + "'");
  }
  try {
    const int a = std::stoi(text.substr(0, colon));
    const int b = std::stoi(text.substr(colon + 1));
    return {a, b};
  } catch (const std::exception&) {
    throw UsageError(std::string(what) + " must look like Z:L, got '" + text + "'");
  }
}

SparsityPattern parse_pattern(const std::string& pattern_text, const std::string& hw_text) {
  const auto [z, l] = parse_ratio_arg(pattern_text, "--pattern");
  const auto [m, n] = parse_ratio_arg(hw_text, "--hw");
  try {
    return SparsityPattern(z, l, m, n);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return buf;
}

// ---------------------------------------------------------------------------
// pack

struct PackArgs {
  std::string in_path, out_path;
  std::string pattern_text, hw_text = "2:4";
  bool prune = false;
  bool do_compress = false;
};

template <typename T>
int run_pack_typed(const Container& in, const PackArgs& args, const GlobalOpts& g) {
  const SparsityPattern pattern = parse_pattern(args.pattern_text, args.hw_text);
  Matrix<T> w = dense_from<T>(in);
  if (w.cols % static_cast<std::size_t>(pattern.l) != 0) {
    throw DimensionMismatchError("input cols " + std::to_string(w.cols) +
                                 " not divisible by block length " + std::to_string(pattern.l));
  }
  if (args.prune) w = magnitude_prune(w, pattern);

  const auto source_report = verify_compliance(w, pattern.z, pattern.l);
  if (!source_report.compliant) {
    const auto [row, block] = *source_report.first_violation;
    throw NotCompliantError("input is not " + pattern.label() + "-compliant (row " +
                            std::to_string(row) + ", block " + std::to_string(block) +
                            "); rerun with --prune to enforce the pattern");
  }

  std::size_t nnz = 0;
  for (const T v : w.data) nnz += is_nonzero(v) ? 1 : 0;

  SlidedMatrix<T> slided;
  double gamma = 1.0;
  if (plan_status(pattern) == PlanStatus::already_compliant) {
    // Sparser than the hardware pattern: direct execution, identity layout.
    const auto hw_report = verify_compliance(w, pattern.hw_m, pattern.hw_n);
    if (!hw_report.compliant) {
      const auto [row, window] = *hw_report.first_violation;
      throw NotCompliantError("input density is below " + pattern.hw_label() +
                              " but row " + std::to_string(row) + ", window " +
                              std::to_string(window) + " still violates the hardware pattern");
    }
    slided.rows = w.rows;
    slided.cols_expanded = w.cols;
    slided.pattern = pattern;
    slided.data = w.data;
    if (!g.quiet) {
      std::cout << "pattern " << pattern.label() << " is sparser than " << pattern.hw_label()
                << "; identity transform applied\n";
    }
  } else {
    slided = pack_matrix(w, pattern, g.resolved_threads());
    gamma = to_double(expansion_factor(pattern));
  }

  const auto hw_check = verify_compliance(slided, pattern.hw_m, pattern.hw_n);
  if (!hw_check.compliant) {
    throw NotCompliantError("internal error: packed output violates hardware pattern");
  }

  if (args.do_compress) {
    save_container(args.out_path, to_container(compress(slided)));
  } else {
    save_container(args.out_path, to_container(slided));
  }
  if (!g.quiet) {
    std::cout << "packed " << slided.rows << "x" << w.cols << " -> " << slided.rows << "x"
              << slided.cols_expanded << (args.do_compress ? " (compressed)" : "") << "\n"
              << "nnz: " << nnz << "\n"
              << "gamma: " << fixed(gamma, 3) << "\n"
              << "compliance: every " << pattern.hw_label() << " window verified\n";
  }
  return kExitOk;
}

int run_pack(const PackArgs& args, const GlobalOpts& g) {
  const Container in = load_container(args.in_path);
  if (in.kind != Kind::dense) throw ContainerError("pack expects a dense container");
  switch (in.dtype) {
    case Dtype::int8:
      return run_pack_typed<std::int8_t>(in, args, g);
    case Dtype::int32:
      return run_pack_typed<std::int32_t>(in, args, g);
    case Dtype::fp32:
      return run_pack_typed<float>(in, args, g);
    case Dtype::fp64:
      return run_pack_typed<double>(in, args, g);
    default:
      throw ContainerError("pack does not support this dtype");
  }
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::string weights_path;
  std::string pattern_text, hw_text = "2:4";
  int trials = 100;
  int tokens = 8;
  double tolerance = 1e-3;
};

template <typename T>
Matrix<T> random_activations(std::size_t k, std::size_t tokens, std::mt19937_64& rng) {
  Matrix<T> x(k, tokens);
  if constexpr (std::is_integral_v<T>) {
    std::uniform_int_distribution<int> dist(-127, 127);
    for (auto& v : x.data) v = static_cast<T>(dist(rng));
  } else {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : x.data) v = static_cast<T>(dist(rng));
  }
  return x;
}

template <typename T>
int verify_dense_weights(Matrix<T> w, const SparsityPattern& pattern, const VerifyArgs& args,
                         const GlobalOpts& g) {
  const auto report = verify_compliance(w, pattern.z, pattern.l);
  if (!report.compliant) {
    const auto [row, block] = *report.first_violation;
    std::cerr << "compliance failure: row " << row << ", block " << block << " exceeds "
              << pattern.z << " nonzeros per " << pattern.l << "\n";
    return kExitVerification;
  }
  std::mt19937_64 rng(g.seed);
  double max_diff = 0.0;
  int exact = 0;
  for (int t = 0; t < args.trials; ++t) {
    const auto x = random_activations<T>(w.cols, static_cast<std::size_t>(args.tokens), rng);
    const auto r = check_equivalence(w, x, pattern, g.resolved_threads());
    max_diff = std::max(max_diff, r.max_abs_diff);
    exact += r.exact ? 1 : 0;
  }
  const bool integral = std::is_integral_v<T>;
  const bool pass = integral ? exact == args.trials : max_diff <= args.tolerance;
  if (!g.quiet) {
    std::cout << "trials: " << args.trials << "\n"
              << "exact: " << exact << "/" << args.trials << "\n"
              << "max_abs_diff: " << max_diff << "\n"
              << (integral ? "mode: integer (zero tolerance)\n"
                           : "mode: real (tolerance " + fixed(args.tolerance, 6) + ")\n")
              << "result: " << (pass ? "PASS" : "FAIL") << "\n";
  }
  return pass ? kExitOk : kExitVerification;
}

template <typename T>
int verify_slided_weights(const SlidedMatrix<T>& s, const VerifyArgs& args, const GlobalOpts& g) {
  const auto& pattern = s.pattern;
  const auto hw_report = verify_compliance(s, pattern.hw_m, pattern.hw_n);
  if (!hw_report.compliant) {
    const auto [row, window] = *hw_report.first_violation;
    std::cerr << "compliance failure: row " << row << ", window " << window << " exceeds "
              << pattern.hw_m << " nonzeros per " << pattern.hw_n << "\n";
    return kExitVerification;
  }
  const auto w = unslide(s);
  const auto src_report = verify_compliance(w, pattern.z, pattern.l);
  if (!src_report.compliant) {
    const auto [row, block] = *src_report.first_violation;
    std::cerr << "compliance failure: reconstructed row " << row << ", block " << block
              << " exceeds " << pattern.z << " nonzeros per " << pattern.l << "\n";
    return kExitVerification;
  }
  return verify_dense_weights(w, pattern, args, g);
}

int run_verify(const VerifyArgs& args, const GlobalOpts& g) {
  const Container in = load_container(args.weights_path);
  const auto dispatch_dense = [&](auto tag) -> int {
    using T = decltype(tag);
    if (args.pattern_text.empty()) {
      throw UsageError("verify on a dense container requires --pattern");
    }
    const SparsityPattern pattern = parse_pattern(args.pattern_text, args.hw_text);
    return verify_dense_weights(dense_from<T>(in), pattern, args, g);
  };
  const auto dispatch_slided = [&](auto tag) -> int {
    using T = decltype(tag);
    return verify_slided_weights(slided_from<T>(in), args, g);
  };
  const auto dispatch_compressed = [&](auto tag) -> int {
    using T = decltype(tag);
    return verify_slided_weights(decompress(compressed_from<T>(in)), args, g);
  };

  switch (in.kind) {
    case Kind::dense:
      switch (in.dtype) {
        case Dtype::int8:
          return dispatch_dense(std::int8_t{});
        case Dtype::int32:
          return dispatch_dense(std::int32_t{});
        case Dtype::fp32:
          return dispatch_dense(float{});
        case Dtype::fp64:
          return dispatch_dense(double{});
        default:
          throw ContainerError("verify does not support this dtype");
      }
    case Kind::slided:
      switch (in.dtype) {
        case Dtype::int8:
          return dispatch_slided(std::int8_t{});
        case Dtype::int32:
          return dispatch_slided(std::int32_t{});
        case Dtype::fp32:
          return dispatch_slided(float{});
        case Dtype::fp64:
          return dispatch_slided(double{});
        default:
          throw ContainerError("verify does not support this dtype");
      }
    case Kind::compressed:
      switch (in.dtype) {
        case Dtype::int8:
          return dispatch_compressed(std::int8_t{});
        case Dtype::int32:
          return dispatch_compressed(std::int32_t{});
        case Dtype::fp32:
          return dispatch_compressed(float{});
        case Dtype::fp64:
          return dispatch_compressed(double{});
        default:
          throw ContainerError("verify does not support this dtype");
      }
    case Kind::quantized_lifted:
      throw UsageError("verify expects a weights container, not quantized activations");
  }
  throw ContainerError("unknown container kind");
}

// ---------------------------------------------------------------------------
// lift

struct LiftArgs {
  std::string in_path, out_path;
  std::string pattern_text, hw_text = "2:4";
  std::string format = "int8";
};

int run_lift(const LiftArgs& args, const GlobalOpts& g) {
  const Container in = load_container(args.in_path);
  if (in.kind != Kind::dense) throw ContainerError("lift expects a dense container");
  const SparsityPattern pattern = parse_pattern(args.pattern_text, args.hw_text);
  QuantKind kind;
  if (args.format == "int8") {
    kind = QuantKind::int8;
  } else if (args.format == "fp8e4m3") {
    kind = QuantKind::fp8e4m3;
  } else {
    throw UsageError("--format must be int8 or fp8e4m3");
  }
  QuantizedLiftedActivation out;
  if (in.dtype == Dtype::fp32) {
    out = fused_quant_slide(dense_from<float>(in), pattern, kind, g.resolved_threads());
  } else if (in.dtype == Dtype::fp64) {
    out = fused_quant_slide(dense_from<double>(in), pattern, kind, g.resolved_threads());
  } else {
    throw ContainerError("lift expects fp32 or fp64 activations");
  }
  save_container(args.out_path, to_container(out));
  if (!g.quiet) {
    std::cout << "lifted " << out.rows << " rows x " << in.cols << " -> " << out.words_per_row
              << " words/row (" << out.lifted_cols() << " lanes)\n"
              << "gamma: " << fixed(to_double(expansion_factor(pattern)), 3) << "\n"
              << "format: " << args.format << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string pattern_text, hw_text = "2:4";
  std::string family_text;
  std::string efficiency_csv;
  bool table = false;
  bool rtheory = false;
  std::optional<double> alpha;
  std::string json_path, csv_path;
};

std::vector<std::pair<int, int>> parse_family(const std::string& text) {
  if (text.empty()) return default_case_family();
  std::vector<std::pair<int, int>> family;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) family.push_back(parse_ratio_arg(item, "--family entry"));
  }
  if (family.empty()) throw UsageError("--family has no entries");
  return family;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContainerError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw ContainerError("short write to " + path);
}

Ratio alpha_for(const SparsityPattern& p, const std::optional<double>& alpha) {
  if (!alpha) return p.alpha;
  return Ratio(static_cast<std::int64_t>(std::llround(*alpha * 10000)), 10000);
}

int run_analyze(const AnalyzeArgs& args, const GlobalOpts& g) {
  json out_json;
  std::string out_csv;

  if (args.table) {
    const auto [m, n] = parse_ratio_arg(args.hw_text, "--hw");
    auto family = parse_family(args.family_text);
    auto rows = case_table(m, n, family);
    if (args.alpha) {
      for (auto& row : rows) {
        row.s_eff = alpha_for(row.pattern, args.alpha) / row.gamma;
        row.achieves_bound = row.s_eff == row.bound;
      }
    }
    if (!g.quiet) {
      std::cout << "pattern  density  gamma  s_eff  bound  achieves_bound\n";
    }
    out_csv = "pattern,density_pct,gamma,s_eff,bound,achieves_bound\n";
    for (const auto& row : rows) {
      const std::string density = fixed(to_double(row.density) * 100.0, 1);
      const std::string gamma = fixed(to_double(row.gamma), 2);
      const std::string s_eff = fixed(to_double(row.s_eff), 2);
      const std::string bound = fixed(to_double(row.bound), 2);
      if (!g.quiet) {
        std::cout << row.pattern.label() << "  " << density << "%  " << gamma << "  " << s_eff
                  << "  " << bound << "  " << (row.achieves_bound ? "yes" : "no") << "\n";
      }
      out_csv += row.pattern.label() + "," + density + "," + gamma + "," + s_eff + "," + bound +
                 "," + (row.achieves_bound ? "true" : "false") + "\n";
      out_json["case_table"].push_back({{"pattern", row.pattern.label()},
                                        {"density_pct", to_double(row.density) * 100.0},
                                        {"gamma", to_double(row.gamma)},
                                        {"s_eff", to_double(row.s_eff)},
                                        {"bound", to_double(row.bound)},
                                        {"achieves_bound", row.achieves_bound}});
    }
  } else if (!args.efficiency_csv.empty()) {
    std::ifstream in(args.efficiency_csv);
    if (!in) throw ContainerError("cannot open " + args.efficiency_csv);
    std::string line;
    if (!std::getline(in, line)) throw ContainerError("efficiency CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "s_24,s_pattern,z,l") {
      throw ContainerError("efficiency CSV must start with header s_24,s_pattern,z,l");
    }
    out_csv = "s_24,s_pattern,pattern,efficiency_pct\n";
    if (!g.quiet) std::cout << "s_24  s_pattern  pattern  efficiency\n";
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string f0, f1, f2, f3;
      if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') ||
          !std::getline(ss, f2, ',') || !std::getline(ss, f3, ',')) {
        throw ContainerError("bad efficiency CSV row: " + line);
      }
      EfficiencyInput input;
      try {
        input.s_baseline_24 = std::stod(f0);
        input.s_pattern = std::stod(f1);
        input.pattern = SparsityPattern(std::stoi(f2), std::stoi(f3));
      } catch (const std::exception&) {
        throw ContainerError("bad efficiency CSV row: " + line);
      }
      const double pct = efficiency(input);
      if (!g.quiet) {
        std::cout << f0 << "  " << f1 << "  " << input.pattern.label() << "  "
                  << fixed(pct, 1) << "%\n";
      }
      out_csv += f0 + "," + f1 + "," + input.pattern.label() + "," + fixed(pct, 1) + "\n";
      out_json["efficiency"].push_back({{"s_24", input.s_baseline_24},
                                        {"s_pattern", input.s_pattern},
                                        {"pattern", input.pattern.label()},
                                        {"efficiency_pct", pct}});
    }
  } else if (args.rtheory) {
    const auto rows = r_theory_table();
    if (!g.quiet) std::cout << "pattern  density  s_theory  r_theory\n";
    out_csv = "pattern,density,s_theory,r_theory\n";
    for (const auto& row : rows) {
      const std::string density = fixed(to_double(row.density), 3);
      const std::string s_theory = fixed(to_double(row.s_theory), 2);
      const std::string r_theory = fixed(to_double(row.r_theory), 3);
      if (!g.quiet) {
        std::cout << row.label << "  " << density << "  " << s_theory << "x  " << r_theory
                  << "\n";
      }
      out_csv += row.label + "," + density + "," + s_theory + "," + r_theory + "\n";
      out_json["r_theory"].push_back({{"pattern", row.label},
                                      {"density", to_double(row.density)},
                                      {"s_theory", to_double(row.s_theory)},
                                      {"r_theory", to_double(row.r_theory)}});
    }
  } else if (!args.pattern_text.empty()) {
    SparsityPattern p = parse_pattern(args.pattern_text, args.hw_text);
    p.alpha = alpha_for(p, args.alpha);
    const Ratio gamma = expansion_factor(p);
    const Ratio s_eff = p.alpha / gamma;
    const Ratio bound = speedup_bound(p);
    if (!g.quiet) {
      std::cout << "pattern: " << p.label() << " on " << p.hw_label() << "\n"
                << "density: " << fixed(to_double(p.density()) * 100.0, 1) << "%\n"
                << "gamma: " << fixed(to_double(gamma), 3) << "\n"
                << "s_eff: " << fixed(to_double(s_eff), 3) << "\n"
                << "bound: " << fixed(to_double(bound), 3) << "\n"
                << "memory_ratio: " << fixed(to_double(p.density()), 3) << "\n"
                << "fused_overhead: " << fixed(to_double(gamma - Ratio(1)), 3) << "\n";
    }
    out_csv = "pattern,hw,density_pct,gamma,s_eff,bound\n" + p.label() + "," + p.hw_label() +
              "," + fixed(to_double(p.density()) * 100.0, 1) + "," +
              fixed(to_double(gamma), 3) + "," + fixed(to_double(s_eff), 3) + "," +
              fixed(to_double(bound), 3) + "\n";
    out_json["pattern"] = {{"pattern", p.label()},       {"hw", p.hw_label()},
                           {"density_pct", to_double(p.density()) * 100.0},
                           {"gamma", to_double(gamma)},  {"s_eff", to_double(s_eff)},
                           {"bound", to_double(bound)}};
  } else {
    throw UsageError("analyze needs one of --pattern, --table, --efficiency, --r-theory");
  }

  if (!args.json_path.empty()) write_text_file(args.json_path, out_json.dump(2) + "\n");
  if (!args.csv_path.empty()) write_text_file(args.csv_path, out_csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string weights_path;
  std::string pattern_text, hw_text = "2:4";
  std::string m_list = "16,64";
  int repeats = 5;
  int warmup = 2;
  std::string out_csv;
};

struct BenchRow {
  std::size_t m = 0;
  std::string path;
  double mean_ns = 0.0;
  double stddev_ns = 0.0;
  std::uint64_t multiplies = 0;
};

template <typename Fn>
std::pair<double, double> time_ns(Fn&& fn, int warmup, int repeats) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(
        static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
  }
  double mean = 0.0;
  for (const double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(samples.size());
  return {mean, std::sqrt(var)};
}

int run_bench(const BenchArgs& args, const GlobalOpts& g) {
  const Container in = load_container(args.weights_path);
  if (in.dtype != Dtype::int8) throw ContainerError("bench expects int8 weights");

  SparsityPattern pattern(6, 8);
  Matrix<std::int8_t> w;
  if (in.kind == Kind::dense) {
    if (args.pattern_text.empty()) {
      throw UsageError("bench on a dense container requires --pattern");
    }
    pattern = parse_pattern(args.pattern_text, args.hw_text);
    w = dense_from<std::int8_t>(in);
  } else if (in.kind == Kind::slided) {
    const auto s = slided_from<std::int8_t>(in);
    pattern = s.pattern;
    w = unslide(s);
  } else if (in.kind == Kind::compressed) {
    const auto s = decompress(compressed_from<std::int8_t>(in));
    pattern = s.pattern;
    w = unslide(s);
  } else {
    throw ContainerError("bench expects a weights container");
  }
  const auto report = verify_compliance(w, pattern.z, pattern.l);
  if (!report.compliant) throw NotCompliantError("weights are not pattern-compliant");

  std::vector<std::size_t> m_values;
  {
    std::stringstream ss(args.m_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const long v = std::stol(item);
      if (v <= 0) throw UsageError("--m-list entries must be positive");
      m_values.push_back(static_cast<std::size_t>(v));
    }
  }
  if (m_values.empty()) throw UsageError("--m-list has no entries");

  const int threads = g.resolved_threads();
  const WindowPlan plan = plan_decomposition(pattern);
  const auto compressed = compress(pack_matrix(w, pattern, threads));

  std::vector<BenchRow> rows;
  std::mt19937_64 rng(g.seed);
  for (const std::size_t m : m_values) {
    Matrix<float> x_real(m, w.cols);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& v : x_real.data) v = dist(rng);

    // int8 activations for the GEMM paths, quantized once up front.
    const auto quantized = fused_quant_slide(x_real, pattern, QuantKind::int8, threads);
    Matrix<std::int8_t> x_cols(w.cols, m);
    for (std::size_t t = 0; t < m; ++t) {
      const auto q = quantize_row<float>(x_real.row(t), QuantKind::int8);
      for (std::size_t k = 0; k < w.cols; ++k) x_cols(k, t) = static_cast<std::int8_t>(q.bytes[k]);
    }

    OpCounts dense_counts;
    auto [dense_mean, dense_sd] = time_ns(
        [&] {
          OpCounts c;
          dense_gemm(w, x_cols, threads, &c);
          dense_counts.multiplies = c.multiplies.load();
        },
        args.warmup, args.repeats);
    rows.push_back({m, "dense_gemm", dense_mean, dense_sd, dense_counts.multiplies.load()});

    OpCounts sparse_counts;
    auto [sparse_mean, sparse_sd] = time_ns(
        [&] {
          OpCounts c;
          sparse_gemm(compressed, quantized, threads, &c);
          sparse_counts.multiplies = c.multiplies.load();
        },
        args.warmup, args.repeats);
    rows.push_back({m, "sparse_gemm", sparse_mean, sparse_sd, sparse_counts.multiplies.load()});

    auto [quant_mean, quant_sd] = time_ns(
        [&] {
          for (std::size_t t = 0; t < m; ++t) {
            volatile auto q = quantize_row<float>(x_real.row(t), QuantKind::int8).scale;
            (void)q;
          }
        },
        args.warmup, args.repeats);
    rows.push_back({m, "quantize_only", quant_mean, quant_sd, 0});

    auto [fused_mean, fused_sd] = time_ns(
        [&] { fused_quant_slide(x_real, pattern, QuantKind::int8, threads); }, args.warmup,
        args.repeats);
    rows.push_back({m, "fused_quant_slide", fused_mean, fused_sd, 0});
  }

  std::string csv = "m,path,mean_ns,stddev_ns,multiplies\n";
  for (const auto& row : rows) {
    csv += std::to_string(row.m) + "," + row.path + "," + fixed(row.mean_ns, 1) + "," +
           fixed(row.stddev_ns, 1) + "," + std::to_string(row.multiplies) + "\n";
  }
  if (!args.out_csv.empty()) write_text_file(args.out_csv, csv);
  if (!g.quiet) {
    std::cout << csv;
    const Ratio expect = expansion_factor(pattern) * Ratio(pattern.hw_m, pattern.hw_n);
    std::cout << "# sparse/dense multiply ratio expected: " << to_double(expect) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured-sparsity transform toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "RNG seed for generated data")->capture_default_str();
  app.add_option("--threads", g.threads,
                 "worker threads (0 = hardware; SLSP_THREADS overrides)")
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress informational output");

  PackArgs pack_args;
  auto* pack_cmd = app.add_subcommand("pack", "transform dense weights into hardware windows");
  pack_cmd->add_option("--in", pack_args.in_path, "input dense container")->required();
  pack_cmd->add_option("--out", pack_args.out_path, "output container")->required();
  pack_cmd->add_option("--pattern", pack_args.pattern_text, "source pattern Z:L")->required();
  pack_cmd->add_option("--hw", pack_args.hw_text, "hardware pattern M:N")->capture_default_str();
  pack_cmd->add_flag("--prune", pack_args.prune, "magnitude-prune to the pattern first");
  pack_cmd->add_flag("--compress", pack_args.do_compress, "emit compressed storage");

  VerifyArgs verify_args;
  auto* verify_cmd = app.add_subcommand("verify", "check compliance and dual-path equivalence");
  verify_cmd->add_option("--weights", verify_args.weights_path, "weights container")->required();
  verify_cmd->add_option("--pattern", verify_args.pattern_text, "source pattern Z:L (dense input)");
  verify_cmd->add_option("--hw", verify_args.hw_text, "hardware pattern M:N")
      ->capture_default_str();
  verify_cmd->add_option("--trials", verify_args.trials, "random activation trials")
      ->capture_default_str();
  verify_cmd->add_option("--tokens", verify_args.tokens, "tokens per trial")
      ->capture_default_str();
  verify_cmd->add_option("--tolerance", verify_args.tolerance, "max |diff| for real dtypes")
      ->capture_default_str();

  LiftArgs lift_args;
  auto* lift_cmd = app.add_subcommand("lift", "fused quantize + lift of activations");
  lift_cmd->add_option("--in", lift_args.in_path, "input dense fp32/fp64 container")->required();
  lift_cmd->add_option("--out", lift_args.out_path, "output quantized-lifted container")
      ->required();
  lift_cmd->add_option("--pattern", lift_args.pattern_text, "source pattern Z:L")->required();
  lift_cmd->add_option("--hw", lift_args.hw_text, "hardware pattern M:N")->capture_default_str();
  lift_cmd->add_option("--format", lift_args.format, "int8 or fp8e4m3")->capture_default_str();

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "closed-form pattern analysis");
  analyze_cmd->add_option("--pattern", analyze_args.pattern_text, "pattern Z:L");
  analyze_cmd->add_option("--hw", analyze_args.hw_text, "hardware pattern M:N")
      ->capture_default_str();
  analyze_cmd->add_flag("--table", analyze_args.table, "print the case table");
  analyze_cmd->add_option("--family", analyze_args.family_text,
                          "comma-separated Z:L list for --table");
  analyze_cmd->add_option("--efficiency", analyze_args.efficiency_csv,
                          "CSV of measured speedups (header s_24,s_pattern,z,l)");
  analyze_cmd->add_flag("--r-theory", analyze_args.rtheory, "print the theoretical-ratio table");
  analyze_cmd->add_option("--alpha", analyze_args.alpha, "override hardware speedup alpha");
  analyze_cmd->add_option("--json", analyze_args.json_path, "write report as JSON");
  analyze_cmd->add_option("--csv", analyze_args.csv_path, "write report as CSV");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "wall-time and multiply-count harness");
  bench_cmd->add_option("--weights", bench_args.weights_path, "weights container")->required();
  bench_cmd->add_option("--pattern", bench_args.pattern_text, "source pattern Z:L (dense input)");
  bench_cmd->add_option("--hw", bench_args.hw_text, "hardware pattern M:N")->capture_default_str();
  bench_cmd->add_option("--m-list", bench_args.m_list, "comma-separated token counts")
      ->capture_default_str();
  bench_cmd->add_option("--repeats", bench_args.repeats, "timed repetitions")
      ->capture_default_str();
  bench_cmd->add_option("--warmup", bench_args.warmup, "warmup repetitions")
      ->capture_default_str();
  bench_cmd->add_option("--out", bench_args.out_csv, "write CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (pack_cmd->parsed()) return run_pack(pack_args, g);
    if (verify_cmd->parsed()) return run_verify(verify_args, g);
    if (lift_cmd->parsed()) return run_lift(lift_args, g);
    if (analyze_cmd->parsed()) return run_analyze(analyze_args, g);
    if (bench_cmd->parsed()) return run_bench(bench_args, g);
    std::cerr << "no subcommand given\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NotCompliantError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return kExitVerification;
  } catch (const DimensionMismatchError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return kExitVerification;
  } catch (const ContainerError& e) {
    std::cerr << "container error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
