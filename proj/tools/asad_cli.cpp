// Command-line front end: preprocess, synth, train, inflate, eval, gradcheck.

#include <malloc.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "asad/dsp/preprocess.hpp"
#include "asad/error.hpp"
#include "asad/harness/container.hpp"
#include "asad/harness/protocol.hpp"
#include "asad/harness/synth.hpp"
#include "asad/harness/trainer.hpp"
#include "asad/models/checkpoint.hpp"
#include "asad/models/gradient_suite.hpp"
#include "asad/models/inflate.hpp"
#include "asad/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace asad;

namespace {

constexpr const char* kToolVersion = "1.0.0";

const std::set<std::string> kConfigKeys = {
    "seed", "jobs", "topology", "model", "duration", "mode", "epochs", "patience", "batch_size",
    "learning_rate", "growth_rate", "slices_per_window", "pretrain_epochs", "group_by_trial",
    "bootstrap", "folds", "subjects", "trials", "trial_length", "fs", "asymmetry",
    "noise_exponent", "noise_amplitude", "beta_amplitude", "filter_order", "band_low_hz",
    "band_high_hz", "self_test"};

/// Resolves each setting as flag > config file > built-in default and keeps
/// the resolved value for the manifest.
class Settings {
 public:
  Settings(const CLI::App& app, const std::string& config_path) : app_(app) {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path);
    try {
      config_ = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError("config " + config_path + ": " + e.what());
    }
    if (!config_.is_object()) throw FormatError("config " + config_path + " must be a JSON object");
    for (const auto& [key, value] : config_.items()) {
      if (!kConfigKeys.count(key)) throw FormatError("config " + config_path + ": unknown key '" + key + "'");
    }
    resolved_["config"] = config_path;
  }

  template <typename T>
  T get(const std::string& key, const std::string& flag, const T& flag_value, const T& fallback) {
    T value = fallback;
    if (!flag.empty() && app_.count(flag) > 0) {
      value = flag_value;
    } else if (config_.contains(key)) {
      try {
        value = config_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw FormatError("config key '" + key + "': " + e.what());
      }
    }
    resolved_[key] = value;
    return value;
  }

  json& resolved() { return resolved_; }

 private:
  const CLI::App& app_;
  json config_ = json::object();
  json resolved_ = json::object();
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_manifest(const fs::path& path, const std::string& command, Settings& settings,
                    const json& extra) {
  json manifest;
  manifest["command"] = command;
  manifest["tool_version"] = kToolVersion;
  manifest["created_utc"] = utc_timestamp();
  manifest["resolved"] = settings.resolved();
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest.dump(2) << '\n';
}

/// Relative paths that do not exist locally are looked up under ASAD_DATA_DIR.
fs::path data_path(const std::string& given) {
  const char* root = std::getenv("ASAD_DATA_DIR");
  if (given.empty()) {
    if (!root) throw ValidationError("no --data given and ASAD_DATA_DIR is not set");
    return root;
  }
  fs::path p(given);
  if (p.is_relative() && !fs::exists(p) && root) return fs::path(root) / p;
  return p;
}

std::vector<fs::path> container_files(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.path().extension() == ".asadeeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .asadeeg files in " + path.string());
  return files;
}

std::vector<harness::EegRecording> load_all(const fs::path& path) {
  std::vector<harness::EegRecording> out;
  for (const auto& f : container_files(path)) out.push_back(harness::ingest(f));
  return out;
}

topo::TopologyMap resolve_topology(Settings& settings, const std::string& flag_value) {
  const std::string path = settings.get<std::string>("topology", "--topology", flag_value, "");
  if (path.empty()) {
    settings.resolved()["topology"] = "builtin:biosemi64_10x11";
    return topo::default_topology();
  }
  return topo::load_topology(fs::path(path));
}

std::string format_accuracy(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << value;
  return out.str();
}

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string topology;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config, "JSON config file (flags take precedence)");
  sub->add_option("--seed", flags.seed, "master seed");
  sub->add_option("--jobs", flags.jobs, "maximum worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--topology", flags.topology, "electrode grid table (label row col)");
}

// ------------------------------------------------------------------ preprocess

struct PreprocessFlags {
  std::string input, output, labels;
};

harness::EegRecording load_input(const fs::path& input, const std::string& labels) {
  if (input.extension() == ".csv") {
    if (labels.empty()) throw ValidationError("CSV input needs --labels <sidecar>");
    return harness::import_csv(input, labels);
  }
  return harness::ingest(input);
}

int cmd_preprocess(const CLI::App& app, const CommonFlags& common, const PreprocessFlags& flags) {
  Settings settings(app, common.config);
  settings.get<std::uint64_t>("seed", "--seed", common.seed, 0);
  dsp::PreprocessConfig config;
  config.filter_order = settings.get<int>("filter_order", "", 0, config.filter_order);
  config.band_low_hz = settings.get<double>("band_low_hz", "", 0, config.band_low_hz);
  config.band_high_hz = settings.get<double>("band_high_hz", "", 0, config.band_high_hz);

  const fs::path input = data_path(flags.input);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(input)) {
    fs::create_directories(flags.output);
    for (const auto& f : container_files(input)) jobs.emplace_back(f, fs::path(flags.output) / f.filename());
  } else {
    fs::path out = flags.output;
    if (fs::is_directory(out)) out /= input.stem().string() + ".asadeeg";
    jobs.emplace_back(input, out);
  }
  json outputs = json::array();
  for (const auto& [src, dst] : jobs) {
    harness::EegRecording rec = load_input(src, flags.labels);
    const double fs_in = rec.fs();
    for (auto& trial : rec.trials) trial.buffer = dsp::preprocess(trial.buffer, config);
    harness::write_recording(rec, dst);
    std::cout << src.string() << " -> " << dst.string() << " (" << fs_in << " Hz -> 128 Hz, "
              << rec.trials.size() << " trials)\n";
    outputs.push_back({{"input", src.string()}, {"output", dst.string()}, {"input_fs", fs_in}});
  }
  const fs::path manifest = fs::is_directory(flags.output)
                                ? fs::path(flags.output) / "preprocess.manifest.json"
                                : fs::path(flags.output + ".manifest.json");
  write_manifest(manifest, "preprocess", settings,
                 {{"chain", "resample to 128 Hz (Kaiser windowed sinc), Butterworth band-pass, "
                            "per-channel z-score"},
                  {"files", outputs}});
  return 0;
}

// ------------------------------------------------------------------ synth

struct SynthFlags {
  std::string output;
  std::size_t subjects = 0, trials = 0;
  double trial_length = 0, fs = 0, asymmetry = 0;
  bool no_self_test = false;
};

int cmd_synth(const CLI::App& app, const CommonFlags& common, const SynthFlags& flags) {
  Settings settings(app, common.config);
  harness::SyntheticSpec spec;
  spec.seed = settings.get<std::uint64_t>("seed", "--seed", common.seed, spec.seed);
  spec.n_subjects = settings.get<std::size_t>("subjects", "--subjects", flags.subjects, spec.n_subjects);
  spec.trials_per_subject = settings.get<std::size_t>("trials", "--trials", flags.trials, spec.trials_per_subject);
  spec.trial_length_s = settings.get<double>("trial_length", "--trial-length", flags.trial_length, spec.trial_length_s);
  spec.fs = settings.get<double>("fs", "--fs", flags.fs, spec.fs);
  spec.asymmetry_ratio = settings.get<double>("asymmetry", "--asymmetry", flags.asymmetry, spec.asymmetry_ratio);
  spec.noise_exponent = settings.get<double>("noise_exponent", "", 0.0, spec.noise_exponent);
  spec.noise_amplitude = settings.get<double>("noise_amplitude", "", 0.0, spec.noise_amplitude);
  spec.beta_amplitude = settings.get<double>("beta_amplitude", "", 0.0, spec.beta_amplitude);
  const bool self_test = settings.get<bool>("self_test", "--no-self-test", !flags.no_self_test, true);
  const auto topology = resolve_topology(settings, common.topology);

  const auto recordings = harness::synthesize(spec, topology);
  fs::create_directories(flags.output);
  json files = json::array();
  for (const auto& rec : recordings) {
    const fs::path path = fs::path(flags.output) / (rec.subject_id + ".asadeeg");
    harness::write_recording(rec, path);
    files.push_back(path.string());
    std::cout << "wrote " << path.string() << '\n';
  }
  json extra = {{"files", files}};
  if (self_test) {
    const auto oracle = harness::band_power_oracle(recordings, topology, 1.0, spec.seed,
                                                   harness::PowerFeature::kChannelPower);
    std::cout << "self-test: band-power logistic oracle accuracy " << format_accuracy(oracle.accuracy)
              << " on " << oracle.test_windows << " held-out 1 s windows\n";
    extra["self_test"] = {{"oracle", "hemispheric beta band-power difference + logistic regression"},
                          {"accuracy", oracle.accuracy},
                          {"test_windows", oracle.test_windows}};
  }
  write_manifest(fs::path(flags.output) / "synth.manifest.json", "synth", settings, extra);
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainFlags {
  std::string data, output, model, mode;
  double duration = 1.0;
  std::size_t epochs = 0, patience = 0, batch_size = 0, growth_rate = 0, slices = 0, pretrain_epochs = 0;
  double learning_rate = 0.0;
  std::vector<std::size_t> folds;
  bool group_by_trial = false, no_bootstrap = false;
  std::string pretrained_dir;
};

int cmd_train(const CLI::App& app, const CommonFlags& common, const TrainFlags& flags) {
  Settings settings(app, common.config);
  harness::ProtocolConfig config;
  config.seed = settings.get<std::uint64_t>("seed", "--seed", common.seed, 0);
  config.jobs = settings.get<std::size_t>("jobs", "--jobs", common.jobs, 1);
  config.model.kind = models::parse_model_kind(
      settings.get<std::string>("model", "--model", flags.model, "densenet3d"));
  config.duration_s = settings.get<double>("duration", "--duration", flags.duration, 1.0);
  config.mode = harness::parse_protocol_mode(
      settings.get<std::string>("mode", "--mode", flags.mode, "dependent"));
  config.train.max_epochs = settings.get<std::size_t>("epochs", "--epochs", flags.epochs, 50);
  config.train.patience = settings.get<std::size_t>("patience", "--patience", flags.patience, 5);
  config.train.batch_size = settings.get<std::size_t>("batch_size", "--batch-size", flags.batch_size, 32);
  config.train.learning_rate = settings.get<double>("learning_rate", "--learning-rate", flags.learning_rate, 1e-3);
  config.train.slices_per_window = settings.get<std::size_t>("slices_per_window", "--slices-per-window", flags.slices, 8);
  config.train.pretrain_epochs = settings.get<std::size_t>("pretrain_epochs", "--pretrain-epochs", flags.pretrain_epochs, 0);
  config.model.densenet.growth_rate = settings.get<std::size_t>("growth_rate", "--growth-rate", flags.growth_rate, 16);
  config.group_by_trial = settings.get<bool>("group_by_trial", "--group-by-trial", flags.group_by_trial, false);
  config.bootstrap = settings.get<bool>("bootstrap", "--no-bootstrap", !flags.no_bootstrap, true);
  config.folds = settings.get<std::vector<std::size_t>>("folds", "--folds", flags.folds, {});
  const auto topology = resolve_topology(settings, common.topology);
  // Structural defaults that are not flags still belong in the manifest.
  const auto& d = config.model.densenet;
  settings.resolved()["densenet"] = {{"bottleneck_factor", d.bottleneck_factor},
                                     {"stem_factor", d.stem_factor},
                                     {"compression", d.compression},
                                     {"num_blocks", d.num_blocks},
                                     {"layers_per_block", d.layers_per_block}};
  settings.resolved()["optimizer"] = "adam(beta1=0.9, beta2=0.999, eps=1e-8)";

  const fs::path data = data_path(flags.data);
  const auto recordings = load_all(data);
  const fs::path out_dir = flags.output;
  fs::create_directories(out_dir / "checkpoints");
  config.checkpoint_dir = out_dir / "checkpoints";
  config.pretrained_dir = flags.pretrained_dir;
  if (!flags.pretrained_dir.empty()) settings.resolved()["pretrained_dir"] = flags.pretrained_dir;
  config.train.dump_dir = out_dir;
  config.progress = [](const std::string& m) { std::cerr << m << '\n'; };

  const auto report = harness::run_protocol(recordings, topology, config);
  {
    std::ofstream csv(out_dir / "report.csv");
    report.write_csv(csv);
    std::ofstream log(out_dir / "training_log.csv");
    report.write_log_csv(log);
  }
  std::cout << "model " << models::to_string(config.model.kind) << ", " << config.duration_s
            << " s windows, " << harness::to_string(config.mode) << " mode\n";
  json subjects = json::array();
  for (const auto& s : report.per_subject()) {
    std::cout << "  " << s.subject << ": " << format_accuracy(s.accuracy) << '\n';
    subjects.push_back({{"subject", s.subject}, {"accuracy", s.accuracy}});
  }
  const auto summary = report.subject_summary();
  std::cout << "mean accuracy over folds: " << format_accuracy(report.mean_accuracy()) << '\n'
            << "per-subject mean " << format_accuracy(summary.mean) << " (SD "
            << format_accuracy(summary.sd) << ", n=" << summary.count << ")\n";
  write_manifest(out_dir / "train.manifest.json", "train", settings,
                 {{"data", data.string()},
                  {"report", (out_dir / "report.csv").string()},
                  {"per_subject", subjects},
                  {"mean_accuracy", report.mean_accuracy()},
                  {"subject_mean", summary.mean},
                  {"subject_sd", summary.sd},
                  {"divergence_sources",
                   json::array({"electrode grid table: shipped 10x11 BioSemi-64 layout is a local "
                                "reconstruction, not a published table",
                                "DenseNet channel widths (growth rate, bottleneck, stem width) are "
                                "not published; values used are listed under resolved",
                                "epoch count, batch size and early stopping are local choices"})}});
  return 0;
}

// ------------------------------------------------------------------ inflate

struct InflateFlags {
  std::string input, output;
  double duration = 1.0;
};

int cmd_inflate(const CLI::App& app, const CommonFlags& common, const InflateFlags& flags) {
  Settings settings(app, common.config);
  settings.get<std::uint64_t>("seed", "--seed", common.seed, 0);
  const double duration = settings.get<double>("duration", "--duration", flags.duration, 1.0);
  const auto source = models::load_checkpoint(flags.input);
  models::ModelSpec spec = source.model_spec();
  spec.kind = models::ModelKind::kDenseNet3d;
  spec.samples = harness::window_samples(duration);
  const auto inflated = models::inflate_2d_to_3d(source, spec);
  models::save_checkpoint(inflated, flags.output);
  std::cout << "inflated " << flags.input << " -> " << flags.output << " (T=" << spec.samples
            << ", " << inflated.records.size() << " records)\n";
  write_manifest(flags.output + ".manifest.json", "inflate", settings,
                 {{"input", flags.input}, {"output", flags.output}, {"samples", spec.samples}});
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalFlags {
  std::string checkpoint, data, output, boring_reference;
  std::size_t boring_trials = 8;
  double tolerance = 1e-5;
  double duration = 0.0;
};

/// Max |logit_3d - logit_2d| over random temporally constant inputs.
double boring_input_deviation(const models::Checkpoint& ckpt3d, const models::Checkpoint& ckpt2d,
                              std::size_t trials, std::uint64_t seed) {
  auto net3d = models::instantiate<float>(ckpt3d);
  auto net2d = models::instantiate<float>(ckpt2d);
  net3d.set_training(false);
  net2d.set_training(false);
  const std::size_t h = net2d.spec().grid_height, w = net2d.spec().grid_width;
  const std::size_t t = net3d.spec().samples;
  Rng rng(seed);
  Tensor<float> frame({trials, 1, h, w});
  for (auto& v : frame.data()) v = static_cast<float>(rng.normal());
  Tensor<float> volume({trials, 1, h, w, t});
  for (std::size_t i = 0; i < frame.size(); ++i) {
    std::fill_n(volume.data().begin() + static_cast<std::ptrdiff_t>(i * t), t, frame[i]);
  }
  const auto a = net2d.forward(frame);
  const auto b = net3d.forward(volume);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  return worst;
}

int cmd_eval(const CLI::App& app, const CommonFlags& common, const EvalFlags& flags) {
  Settings settings(app, common.config);
  const auto seed = settings.get<std::uint64_t>("seed", "--seed", common.seed, 0);
  const auto checkpoint = models::load_checkpoint(flags.checkpoint);
  if (!flags.boring_reference.empty()) {
    const auto reference = models::load_checkpoint(flags.boring_reference);
    const double deviation = boring_input_deviation(checkpoint, reference, flags.boring_trials, seed);
    std::cout << "boring-input check: max logit deviation " << std::scientific << deviation
              << " (tolerance " << flags.tolerance << ")\n";
    if (!(deviation <= flags.tolerance)) {
      throw NumericError("inflated network deviates from its 2D source by " + std::to_string(deviation));
    }
    return 0;
  }
  const auto topology = resolve_topology(settings, common.topology);
  const models::ModelSpec spec = checkpoint.model_spec();
  const double default_duration =
      spec.kind == models::ModelKind::kDenseNet2d ? 1.0 : static_cast<double>(spec.samples) / 128.0;
  const double duration = settings.get<double>("duration", "--duration", flags.duration, default_duration);
  const fs::path data = data_path(flags.data);
  const auto recordings = load_all(data);
  auto model = models::instantiate<float>(checkpoint);

  harness::ProtocolReport report;
  for (const auto& rec : recordings) {
    auto sliced = harness::slice_windows(rec, duration, topology);
    for (const auto& w : sliced.warnings) std::cerr << "warning: " << w << '\n';
    std::vector<std::size_t> idx(sliced.windows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    harness::RunOutcome run;
    run.subject = rec.subject_id;
    run.model = checkpoint.model_id;
    run.duration_s = duration;
    run.metrics = harness::evaluate(model, sliced.windows, idx, topology);
    run.subject_accuracy = {{rec.subject_id, run.metrics.accuracy}};
    std::cout << rec.subject_id << ": accuracy " << format_accuracy(run.metrics.accuracy) << " ("
              << run.metrics.correct << "/" << run.metrics.decisions << "; left "
              << format_accuracy(run.metrics.class_accuracy[0]) << ", right "
              << format_accuracy(run.metrics.class_accuracy[1]) << ")\n";
    report.runs.push_back(std::move(run));
  }
  const auto summary = report.subject_summary();
  std::cout << "per-subject mean " << format_accuracy(summary.mean) << " (SD "
            << format_accuracy(summary.sd) << ", n=" << summary.count << ")\n";
  if (!flags.output.empty()) {
    std::ofstream csv(flags.output);
    if (!csv) throw IoError("cannot write " + flags.output);
    report.write_csv(csv);
    write_manifest(flags.output + ".manifest.json", "eval", settings,
                   {{"checkpoint", flags.checkpoint}, {"data", data.string()}});
  }
  return 0;
}

// ------------------------------------------------------------------ gradcheck

int cmd_gradcheck(double tolerance, std::uint64_t seed) {
  nn::GradcheckOptions options;
  options.seed = seed == 0 ? options.seed : seed;
  bool ok = true;
  for (const auto& c : models::run_gradient_suite(options)) {
    const double err = c.report.max_rel_error();
    const bool pass = err <= tolerance;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << std::left << std::setw(34) << c.name
              << " max rel err " << std::scientific << std::setprecision(2) << err << '\n';
  }
  if (!ok) throw NumericError("gradient check exceeded tolerance " + std::to_string(tolerance));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Large activations are reused between steps instead of being mapped and
  // faulted in afresh each time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Auditory spatial attention detection toolkit"};
  app.require_subcommand(1);
  CommonFlags common;

  auto* pre = app.add_subcommand("preprocess", "resample to 128 Hz, band-pass 14-31 Hz, z-score");
  PreprocessFlags pre_flags;
  add_common(pre, common);
  pre->add_option("--input", pre_flags.input, "container, CSV, or directory of containers")->required();
  pre->add_option("--output", pre_flags.output, "output container or directory")->required();
  pre->add_option("--labels", pre_flags.labels, "label sidecar for CSV input");

  auto* synth = app.add_subcommand("synth", "generate a synthetic lateralized dataset");
  SynthFlags synth_flags;
  add_common(synth, common);
  synth->add_option("--output", synth_flags.output, "output directory")->required();
  synth->add_option("--subjects", synth_flags.subjects);
  synth->add_option("--trials", synth_flags.trials, "trials per subject");
  synth->add_option("--trial-length", synth_flags.trial_length, "seconds per trial");
  synth->add_option("--fs", synth_flags.fs, "sampling rate of the raw data");
  synth->add_option("--asymmetry", synth_flags.asymmetry, "beta amplitude ratio (>= 1)");
  synth->add_flag("--no-self-test", synth_flags.no_self_test, "skip the band-power oracle");

  auto* train = app.add_subcommand("train", "cross-validated training and testing");
  TrainFlags train_flags;
  add_common(train, common);
  train->add_option("--data", train_flags.data, "preprocessed container or directory (default $ASAD_DATA_DIR)");
  train->add_option("--output", train_flags.output, "output directory")->required();
  train->add_option("--model", train_flags.model)
      ->check(CLI::IsMember({"cnn-baseline", "cnn3d", "densenet2d", "densenet3d"}));
  train->add_option("--duration", train_flags.duration, "decision window (s)")
      ->check(CLI::IsMember({1.0, 2.0, 5.0, 10.0}));
  train->add_option("--mode", train_flags.mode)->check(CLI::IsMember({"dependent", "independent"}));
  train->add_option("--epochs", train_flags.epochs, "maximum epochs");
  train->add_option("--patience", train_flags.patience, "early-stopping patience");
  train->add_option("--batch-size", train_flags.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", train_flags.learning_rate);
  train->add_option("--growth-rate", train_flags.growth_rate, "DenseNet growth rate k")->check(CLI::PositiveNumber);
  train->add_option("--slices-per-window", train_flags.slices, "DenseNet-2D slices per window per epoch");
  train->add_option("--pretrain-epochs", train_flags.pretrain_epochs, "DenseNet-2D stage epoch cap");
  train->add_option("--folds", train_flags.folds, "run only these fold indices")->delimiter(',');
  train->add_flag("--group-by-trial", train_flags.group_by_trial, "keep each trial inside one fold");
  train->add_option("--pretrained-dir", train_flags.pretrained_dir,
                    "DenseNet-2D checkpoints (<subject>_densenet2d_fold<k>.ckpt) to bootstrap from");
  train->add_flag("--no-bootstrap", train_flags.no_bootstrap, "train DenseNet-3D from scratch");

  auto* inflate = app.add_subcommand("inflate", "inflate a DenseNet-2D checkpoint to DenseNet-3D");
  InflateFlags inflate_flags;
  add_common(inflate, common);
  inflate->add_option("--input", inflate_flags.input, "DenseNet-2D checkpoint")->required();
  inflate->add_option("--output", inflate_flags.output, "DenseNet-3D checkpoint")->required();
  inflate->add_option("--duration", inflate_flags.duration, "decision window (s)")
      ->check(CLI::IsMember({1.0, 2.0, 5.0, 10.0}));

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on windows, or run the boring-input check");
  EvalFlags eval_flags;
  add_common(eval, common);
  eval->add_option("--checkpoint", eval_flags.checkpoint)->required();
  eval->add_option("--data", eval_flags.data, "preprocessed container or directory (default $ASAD_DATA_DIR)");
  eval->add_option("--duration", eval_flags.duration, "decision window (s); defaults to the checkpoint's");
  eval->add_option("--output", eval_flags.output, "CSV report");
  eval->add_option("--boring-reference", eval_flags.boring_reference,
                   "DenseNet-2D checkpoint the 3D checkpoint was inflated from");
  eval->add_option("--boring-trials", eval_flags.boring_trials);
  eval->add_option("--tolerance", eval_flags.tolerance, "boring-input tolerance");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite (64-bit)");
  double grad_tolerance = 1e-4;
  add_common(grad, common);
  grad->add_option("--tolerance", grad_tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[usage]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::kUsage);
  }

  try {
    if (*pre) return cmd_preprocess(*pre, common, pre_flags);
    if (*synth) return cmd_synth(*synth, common, synth_flags);
    if (*train) return cmd_train(*train, common, train_flags);
    if (*inflate) return cmd_inflate(*inflate, common, inflate_flags);
    if (*eval) return cmd_eval(*eval, common, eval_flags);
    if (*grad) return cmd_gradcheck(grad_tolerance, common.seed);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
