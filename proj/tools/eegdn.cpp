// eegdn: synth / train / eval / convert2d / bench / plot
//
// Exit codes: 0 success, 1 usage error, 2 data or validation error,
// 3 verification failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eegdn/eegdn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eegdn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Records one command invocation; written next to every output file.
struct RunManifest {
  std::string command;
  json flags = json::object();
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string started = utc_now();

  void write_all() const {
    json j = {{"command", command},
              {"flags", flags},
              {"seeds", seeds},
              {"version", EEGDN_VERSION},
              {"inputs", inputs},
              {"outputs", outputs},
              {"started_utc", started},
              {"finished_utc", utc_now()}};
    for (const auto& out : outputs) {
      std::ofstream f(out + ".manifest.json");
      if (!f) throw InputError("cannot write manifest next to " + out);
      f << j.dump(2) << '\n';
    }
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open " + path + " for writing");
  f << text;
}

/// A reference name or a JSON spec file.
ModelSpec resolve_spec(const std::string& arg, std::uint64_t seed) {
  if (is_reference_name(arg)) return reference_spec(arg, seed);
  if (fs::exists(arg)) return load_spec(arg);
  return reference_spec(arg, seed);  // throws, listing the known names
}

/// Spec + weights; a store of rank-4 weights selects the expanded 2-D spec.
template <class T>
Model<T> resolve_model(const std::string& spec_arg, const std::string& weights, std::uint64_t seed) {
  ModelSpec spec = resolve_spec(spec_arg, seed);
  if (weights.empty()) return Model<T>(spec);
  auto store = read_weights<T>(weights);
  if (spec.dimensionality == Dimensionality::one_d && !store.entries.empty() &&
      store.entries.front().weights.rank() == 4) {
    spec = expand_spec(spec);
  }
  return Model<T>(spec, std::move(store));
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / p.stem()).string() + suffix;
}

template <class T>
Tensor<T> window_tensor(const std::vector<float>& v, const Shape& shape) {
  return Tensor<T>(shape, std::vector<T>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// commands

struct SynthArgs {
  std::string kind = "eog";
  double snr_db = 0.0;
  double duration_s = 60.0;
  std::uint64_t seed = 7;
  std::size_t recordings = 1;
  double native_fs = 256.0;
  double trim_s = 3.0;
  std::string out;
};

int run_synth(const SynthArgs& a, RunManifest& man) {
  SynthConfig cfg;
  cfg.kind = artifact_kind_from(a.kind);
  cfg.snr_db = a.snr_db;
  cfg.duration_s = a.duration_s;
  cfg.seed = a.seed;
  cfg.native_fs = a.native_fs;
  PipelineOptions opt;
  opt.trim_s = a.trim_s;
  const auto pairs = synthesize_dataset(cfg, a.recordings, opt);
  save_dataset(pairs, a.out);
  std::size_t degenerate = 0;
  for (const auto& p : pairs) degenerate += p.degenerate ? 1 : 0;
  std::cout << "wrote " << pairs.size() << " synthetic pairs (" << to_string(cfg.kind) << ", snr " << a.snr_db
            << " dB, " << a.recordings << " recording(s), " << degenerate << " degenerate) to " << a.out << "\n";
  man.seeds["synth"] = a.seed;
  man.outputs.push_back(a.out);
  return 0;
}

struct TrainArgs {
  std::string spec, data, out;
  std::size_t epochs = 20;
  std::uint64_t seed = 7;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t patience = 10;
  double val_frac = 0.1;
  bool use_double = false;
};

template <class T>
int run_train_t(const TrainArgs& a, RunManifest& man) {
  const ModelSpec spec = resolve_spec(a.spec, a.seed);
  const auto data = load_dataset(a.data);
  TrainConfig cfg;
  cfg.max_epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.patience = a.patience;
  cfg.validation_fraction = a.val_frac;
  auto res = train<T>(spec, data, cfg);
  save_weights(res.model, a.out);
  const std::string hist = with_suffix(a.out, ".history.csv");
  save_history_csv(res.history, hist);
  const auto& h = res.history;
  std::cout << "trained " << spec.name << " for " << h.val_loss.size() << " epoch(s) on " << h.n_train
            << " pairs (val " << h.n_val << ", skipped degenerate " << h.n_skipped_degenerate << "); best epoch "
            << h.best_epoch + 1 << ", val loss " << std::setprecision(6) << h.val_loss[h.best_epoch] << "\n";
  man.seeds["init"] = a.seed;
  man.seeds["shuffle"] = a.seed;
  man.inputs.push_back(a.data);
  man.outputs = {a.out, hist};
  return 0;
}

struct EvalArgs {
  std::string spec, weights, data, out, task;
  bool denormalized = false;
  bool baseline = false;
};

int run_eval(const EvalArgs& a, RunManifest& man) {
  const auto model = resolve_model<float>(a.spec, a.weights, 7);
  const auto data = load_dataset(a.data);
  const auto rep = evaluate(model, data, a.denormalized, model.spec().name, a.task);
  std::string summary = rep.summary_csv();
  if (a.baseline) {
    const auto base = evaluate_baseline(data, a.denormalized, a.task);
    const auto s = base.summary_csv();
    summary += s.substr(s.find('\n') + 1);
  }
  std::cout << summary;
  if (rep.n_skipped_degenerate || rep.n_skipped_metric_error) {
    std::cerr << "skipped " << rep.n_skipped_degenerate << " degenerate and " << rep.n_skipped_metric_error
              << " zero-power segment(s)\n";
  }
  man.inputs = {a.weights, a.data};
  if (!a.out.empty()) {
    const std::string seg = with_suffix(a.out, ".segments.csv");
    const std::string sum = with_suffix(a.out, ".summary.csv");
    write_text(seg, rep.segments_csv());
    write_text(sum, summary);
    man.outputs = {seg, sum};
  }
  return 0;
}

struct ConvertArgs {
  std::string spec, weights, out;
  std::size_t verify = 100;
  std::optional<double> tol;
  bool use_double = false;
  std::uint64_t seed = 7;
};

template <class T>
int run_convert_t(const ConvertArgs& a, RunManifest& man) {
  const auto m1 = resolve_model<T>(a.spec, a.weights, a.seed);
  if (m1.spec().dimensionality != Dimensionality::one_d) throw InputError("convert2d: model is already 2-D");
  const auto m2 = expand_model(m1);
  const double tol = a.tol.value_or(sizeof(T) == 8 ? 1e-12 : 1e-5);
  const auto rep = verify_equivalence(m1, m2, a.verify, tol, a.seed);
  std::cout << rep.to_text();
  if (rep.vacuous) std::cerr << "warning: --verify 0 checks nothing; the equivalence result is vacuous\n";
  man.seeds["verify"] = a.seed;
  if (!a.weights.empty()) man.inputs.push_back(a.weights);
  if (!a.out.empty()) {
    const std::string report = with_suffix(a.out, ".report.json");
    const std::string spec_out = with_suffix(a.out, ".spec.json");
    write_text(report, rep.to_json().dump(2) + "\n");
    man.outputs = {report};
    if (rep.pass) {
      save_weights(m2, a.out);
      save_spec(m2.spec(), spec_out);
      man.outputs = {a.out, spec_out, report};
    }
  }
  if (!rep.pass) throw VerificationFailure("2-D model differs from its 1-D source by " +
                                           std::to_string(rep.max_abs_difference) + " > " + std::to_string(tol));
  return 0;
}

struct BenchArgs {
  std::string spec, weights, weights_2d, power_log, out;
  bool paired = false;
  std::size_t iters = 200;
  std::size_t warmup = 20;
  std::optional<double> power_start, power_end;
  std::uint64_t seed = 7;
};

int run_bench(const BenchArgs& a, RunManifest& man) {
  std::vector<Model<float>> models;
  models.push_back(resolve_model<float>(a.spec, a.weights, a.seed));
  if (!a.weights_2d.empty()) {
    models.push_back(resolve_model<float>(a.spec, a.weights_2d, a.seed));
  } else if (a.paired) {
    if (models.front().spec().dimensionality != Dimensionality::one_d) throw InputError("bench --paired needs a 1-D model");
    models.push_back(expand_model(models.front()));
  }
  std::optional<double> power;
  if (!a.power_log.empty()) {
    const auto log = load_power_log(a.power_log);
    power = power_from_log(log, a.power_start.value_or(log.start()), a.power_end.value_or(log.end()));
    man.inputs.push_back(a.power_log);
  }
  std::mt19937_64 rng(a.seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> window(kSegmentLength);
  for (auto& v : window) v = u(rng);

  std::vector<BenchReport> rows;
  for (const auto& m : models) {
    auto r = time_inference(m, window_tensor<float>(window, m.input_shape()), a.warmup, a.iters);
    r.power_mah_per_h = power;
    rows.push_back(std::move(r));
  }
  std::string csv = bench_csv(rows);
  std::cout << csv;
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"model", r.model},
                 {"dimensionality", r.dimensionality},
                 {"n_warmup", r.n_warmup},
                 {"n_iters", r.n_iters},
                 {"mean_ms", r.mean_ms},
                 {"median_ms", r.median_ms},
                 {"std_ms", r.std_ms},
                 {"p95_ms", r.p95_ms},
                 {"power_mah_per_h", r.power_mah_per_h ? json(*r.power_mah_per_h) : json(nullptr)}});
  }
  json report = {{"rows", j}};
  if (rows.size() == 2) {
    const double ratio = rows[1].mean_ms / rows[0].mean_ms;
    report["latency_ratio_2d_over_1d"] = ratio;
    std::cout << "latency_ratio_2d_over_1d," << std::fixed << std::setprecision(4) << ratio << "\n";
  }
  if (!a.weights.empty()) man.inputs.push_back(a.weights);
  if (!a.weights_2d.empty()) man.inputs.push_back(a.weights_2d);
  if (!a.out.empty()) {
    const std::string js = with_suffix(a.out, ".json");
    write_text(a.out, csv);
    write_text(js, report.dump(2) + "\n");
    man.outputs = {a.out, js};
  }
  return 0;
}

struct PlotArgs {
  std::string spec, weights, data, out;
  std::size_t segment = 0;
};

std::string svg_plot(const std::vector<std::vector<double>>& traces, const std::vector<std::string>& labels,
                     const std::string& title) {
  const double w = 960, h = 360, ml = 60, mr = 20, mt = 40, mb = 40;
  double lo = traces[0][0], hi = lo;
  for (const auto& t : traces) {
    for (double v : t) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) hi = lo + 1.0;
  const char* colors[] = {"#d62728", "#2ca02c", "#1f77b4"};
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int s = 0; s <= 4; ++s) {
    const double x = ml + (w - ml - mr) * s / 4.0;
    os << "<text x=\"" << x << "\" y=\"" << h - mb + 16 << "\" font-family=\"sans-serif\" font-size=\"11\" "
       << "text-anchor=\"middle\">" << s << " s</text>\n";
  }
  for (std::size_t t = 0; t < traces.size(); ++t) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[t % 3] << "\" stroke-width=\"1\" data-label=\"" << labels[t]
       << "\" points=\"";
    const auto& tr = traces[t];
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const double x = ml + (w - ml - mr) * static_cast<double>(i) / static_cast<double>(tr.size() - 1);
      const double y = h - mb - (h - mt - mb) * (tr[i] - lo) / (hi - lo);
      os << (i ? " " : "") << x << ',' << y;
    }
    os << "\"/>\n";
    os << "<text x=\"" << w - mr - 150 << "\" y=\"" << mt + 14 * t << "\" font-family=\"sans-serif\" font-size=\"11\" "
       << "fill=\"" << colors[t % 3] << "\">" << labels[t] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int run_plot(const PlotArgs& a, RunManifest& man) {
  const auto model = resolve_model<float>(a.spec, a.weights, 7);
  const auto data = load_dataset(a.data);
  if (a.segment >= data.size()) {
    throw InputError("segment index " + std::to_string(a.segment) + " out of range (dataset has " +
                     std::to_string(data.size()) + " pairs)");
  }
  const auto& p = data[a.segment];
  const auto y = model.forward(window_tensor<float>(p.contaminated, model.input_shape()));
  std::vector<std::vector<double>> traces(3, std::vector<double>(kSegmentLength));
  for (std::size_t i = 0; i < kSegmentLength; ++i) {
    traces[0][i] = p.contaminated[i];
    traces[1][i] = p.clean[i];
    traces[2][i] = y[i];
  }
  const std::vector<std::string> labels = {"contaminated", "clean (ground truth)", "model output"};
  write_text(a.out, svg_plot(traces, labels,
                             model.spec().name + ": " + p.origin_id + " @ " + std::to_string(p.start)));
  const std::string csv = with_suffix(a.out, ".csv");
  std::ostringstream os;
  os << std::setprecision(9);
  os << "time_s,contaminated,clean,output\n";
  for (std::size_t i = 0; i < kSegmentLength; ++i) {
    os << static_cast<double>(i) / kTargetFs << ',' << traces[0][i] << ',' << traces[1][i] << ',' << traces[2][i]
       << '\n';
  }
  write_text(csv, os.str());
  std::cout << "wrote " << a.out << " and " << csv << "\n";
  man.inputs = {a.weights, a.data};
  man.outputs = {a.out, csv};
  return 0;
}

json collect_flags(const CLI::App* sub) {
  json j = json::object();
  for (const auto* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    const auto& res = opt->results();
    if (opt->get_expected_max() == 0) {
      j[opt->get_name()] = opt->count() > 0;
    } else if (!res.empty()) {
      j[opt->get_name()] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      j[opt->get_name()] = opt->get_default_str();
    }
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG artifact-removal toolkit: synthetic data, training, evaluation, 1-D to 2-D conversion, benchmarks"};
  app.set_version_flag("--version", std::string(EEGDN_VERSION));
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "synthesize recordings and run them through the preprocessing pipeline");
  synth->add_option("--kind", sa.kind, "artifact kind")->check(CLI::IsMember({"eog", "emg", "motion", "clean"}))->required();
  synth->add_option("--snr-db", sa.snr_db, "signal-to-artifact ratio in dB")->capture_default_str();
  synth->add_option("--duration-s", sa.duration_s, "recording length in seconds (>= 14)")->capture_default_str();
  synth->add_option("--seed", sa.seed, "random seed")->capture_default_str();
  synth->add_option("--recordings", sa.recordings, "number of recordings")->check(CLI::Range(std::size_t{1}, std::size_t{100000}))->capture_default_str();
  synth->add_option("--native-fs", sa.native_fs, "sampling rate before resampling to 200 Hz")->capture_default_str();
  synth->add_option("--trim-s", sa.trim_s, "seconds trimmed from each edge")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--out", sa.out, "output dataset (.e2cd)")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train a model on a dataset");
  trn->add_option("--spec", ta.spec, "reference name or spec JSON")->required();
  trn->add_option("--data", ta.data, "training dataset")->required()->check(CLI::ExistingFile);
  trn->add_option("--epochs", ta.epochs, "maximum epochs (>= 1)")->check(CLI::Range(std::size_t{1}, std::size_t{100000}))->capture_default_str();
  trn->add_option("--seed", ta.seed, "init and shuffle seed")->capture_default_str();
  trn->add_option("--lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--batch", ta.batch, "minibatch size")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20))->capture_default_str();
  trn->add_option("--patience", ta.patience, "early-stopping patience (epochs)")->capture_default_str();
  trn->add_option("--val-frac", ta.val_frac, "validation fraction")->capture_default_str();
  trn->add_flag("--double", ta.use_double, "train in float64");
  trn->add_option("--out", ta.out, "output weights (.e2cw)")->required();

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "score a model on a dataset");
  evl->add_option("--spec", ea.spec, "reference name or spec JSON")->required();
  evl->add_option("--weights", ea.weights, "weights file")->required()->check(CLI::ExistingFile);
  evl->add_option("--data", ea.data, "dataset")->required()->check(CLI::ExistingFile);
  evl->add_flag("--denormalized", ea.denormalized, "score in the original amplitude scale");
  evl->add_flag("--baseline", ea.baseline, "also score the unprocessed contaminated input");
  evl->add_option("--task", ea.task, "task label for the report");
  evl->add_option("--out", ea.out, "report prefix (writes .segments.csv and .summary.csv)");

  ConvertArgs ca;
  auto* cnv = app.add_subcommand("convert2d", "expand a 1-D model to 2-D and verify equivalence");
  cnv->add_option("--spec", ca.spec, "reference name or spec JSON")->required();
  cnv->add_option("--weights", ca.weights, "1-D weights (random init from --seed when omitted)")->check(CLI::ExistingFile);
  cnv->add_option("--out", ca.out, "output 2-D weights");
  cnv->add_option("--verify", ca.verify, "number of random test inputs")->capture_default_str();
  cnv->add_option("--tol", ca.tol, "max abs difference (default 1e-5, 1e-12 with --double)");
  cnv->add_flag("--double", ca.use_double, "run the check in float64");
  cnv->add_option("--seed", ca.seed, "seed for init and test inputs")->capture_default_str();

  BenchArgs ba;
  auto* bch = app.add_subcommand("bench", "forward-pass latency");
  bch->add_option("--spec", ba.spec, "reference name or spec JSON")->required();
  bch->add_option("--weights", ba.weights, "weights (random init when omitted)")->check(CLI::ExistingFile);
  bch->add_option("--weights-2d", ba.weights_2d, "2-D weights for a paired run")->check(CLI::ExistingFile);
  bch->add_flag("--paired", ba.paired, "also time the expanded 2-D model");
  bch->add_option("--iters", ba.iters, "timed iterations (>= 1)")->check(CLI::Range(std::size_t{1}, std::size_t{10000000}))->capture_default_str();
  bch->add_option("--warmup", ba.warmup, "untimed warmup iterations")->capture_default_str();
  bch->add_option("--power-log", ba.power_log, "CSV of timestamp_hours,charge_mAh")->check(CLI::ExistingFile);
  bch->add_option("--power-start", ba.power_start, "window start (hours; default first sample)");
  bch->add_option("--power-end", ba.power_end, "window end (hours; default last sample)");
  bch->add_option("--seed", ba.seed, "seed for the input window and random weights")->capture_default_str();
  bch->add_option("--out", ba.out, "CSV report (a .json copy is written next to it)");

  PlotArgs pa;
  auto* plt = app.add_subcommand("plot", "overlay contaminated, clean and model output for one segment");
  plt->add_option("--spec", pa.spec, "reference name or spec JSON")->required();
  plt->add_option("--weights", pa.weights, "weights file")->required()->check(CLI::ExistingFile);
  plt->add_option("--data", pa.data, "dataset")->required()->check(CLI::ExistingFile);
  plt->add_option("--segment", pa.segment, "pair index")->capture_default_str();
  plt->add_option("--out", pa.out, "output SVG (a .csv is written next to it)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunManifest man;
  man.command = sub->get_name();
  man.flags = collect_flags(sub);
  try {
    int rc = 0;
    if (sub == synth) rc = run_synth(sa, man);
    else if (sub == trn) rc = ta.use_double ? run_train_t<double>(ta, man) : run_train_t<float>(ta, man);
    else if (sub == evl) rc = run_eval(ea, man);
    else if (sub == cnv) rc = ca.use_double ? run_convert_t<double>(ca, man) : run_convert_t<float>(ca, man);
    else if (sub == bch) rc = run_bench(ba, man);
    else if (sub == plt) rc = run_plot(pa, man);
    man.write_all();
    return rc;
  } catch (const VerificationFailure& e) {
    man.write_all();
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerify;
  } catch (const eegdn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
