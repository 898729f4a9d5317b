#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "asad/dsp/preprocess.hpp"
#include "asad/error.hpp"
#include "asad/harness/container.hpp"
#include "asad/harness/folds.hpp"
#include "asad/harness/metrics.hpp"
#include "asad/harness/protocol.hpp"
#include "asad/harness/synth.hpp"
#include "asad/harness/trainer.hpp"
#include "asad/harness/windows.hpp"

using namespace asad;
using namespace asad::harness;
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(b, bits);
}
void put_label(std::vector<std::uint8_t>& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

/// Two channels, one trial of four samples, authored byte by byte.
std::vector<std::uint8_t> fixture_bytes() {
  std::vector<std::uint8_t> b{'A', 'S', 'A', 'D', 'E', 'E', 'G', '1'};
  put_u32(b, 1);    // version
  put_u32(b, 128);  // fs
  put_u32(b, 2);    // channels
  put_u32(b, 1);    // trials
  put_label(b, "C3");
  put_label(b, "C4");
  put_u32(b, 7);  // trial id
  b.push_back(1); // right
  put_u64(b, 4);
  for (float v : {0.5f, -1.25f, 3.0f, 1e-3f, 2.0f, -0.0f, 7.5f, -8.0f}) put_f32(b, v);
  return b;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("asad_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EegRecording constant_recording(const std::string& subject, const std::vector<double>& trial_seconds,
                                const topo::TopologyMap& map, std::uint64_t seed = 1) {
  EegRecording rec;
  rec.subject_id = subject;
  Rng rng(seed);
  for (std::size_t t = 0; t < trial_seconds.size(); ++t) {
    Trial trial;
    trial.trial_id = static_cast<std::uint32_t>(t);
    trial.label = static_cast<int>(t % 2);
    trial.buffer = dsp::RecordingBuffer(128.0, map.labels(), std::size_t(trial_seconds[t] * 128));
    for (double& v : trial.buffer.samples) v = rng.normal();
    rec.trials.push_back(std::move(trial));
  }
  return rec;
}

const topo::TopologyMap& one_channel_map() {
  static const topo::TopologyMap map = [] {
    std::istringstream in("Cz 4 5\n");
    return topo::load_topology(in);
  }();
  return map;
}

/// Windows whose label is carried by which of two grid cells is raised.
std::vector<DecisionWindow> blob_windows(std::size_t n, std::size_t samples, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DecisionWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    DecisionWindow w;
    w.grid = Tensor<float>({10, 11, samples});
    w.label = static_cast<int>(i % 2);
    w.subject_id = "toy";
    w.trial_id = static_cast<std::uint32_t>(i);
    const std::size_t hot = w.label == kLeft ? (2 * 11 + 2) : (2 * 11 + 8);
    const std::size_t cold = w.label == kLeft ? (2 * 11 + 8) : (2 * 11 + 2);
    const double level = 1.0 + 0.3 * rng.normal();
    for (std::size_t t = 0; t < samples; ++t) {
      w.grid[hot * samples + t] = static_cast<float>(level + 0.5 * rng.normal());
      w.grid[cold * samples + t] = static_cast<float>(0.5 * rng.normal());
    }
    out.push_back(std::move(w));
  }
  return out;
}

double cell_mean(const DecisionWindow& w, std::size_t cell) {
  const std::size_t t = w.grid.dim(2);
  double s = 0.0;
  for (std::size_t i = 0; i < t; ++i) s += w.grid[cell * t + i];
  return s / double(t);
}

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  std::iota(v.begin(), v.end(), begin);
  return v;
}

}  // namespace

TEST_CASE("byte-authored container decodes to the exact values") {
  const auto rec = deserialize_recording(fixture_bytes(), "fixture");
  REQUIRE(rec.trials.size() == 1);
  CHECK(rec.fs() == 128.0);
  CHECK(rec.channel_labels() == std::vector<std::string>{"C3", "C4"});
  const auto& t = rec.trials[0];
  CHECK(t.trial_id == 7);
  CHECK(t.label == kRight);
  CHECK(t.buffer.samples == std::vector<double>{0.5, -1.25, 3.0, double(1e-3f), 2.0, -0.0, 7.5, -8.0});
  CHECK(serialize_recording(rec) == fixture_bytes());
}

TEST_CASE("container round trip through a file is bitwise") {
  const auto dir = scratch_dir("container");
  const auto rec = deserialize_recording(fixture_bytes(), "S07");
  write_recording(rec, dir / "S07.asadeeg");
  const auto back = ingest(dir / "S07.asadeeg");
  CHECK(back.subject_id == "S07");
  CHECK(serialize_recording(back) == fixture_bytes());
}

TEST_CASE("container errors") {
  auto bytes = fixture_bytes();
  SUBCASE("truncation reports expected and actual sizes") {
    bytes.resize(bytes.size() - 5);
    try {
      deserialize_recording(bytes, "x");
      FAIL("expected a FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
      CHECK(msg.find(std::to_string(bytes.size() + 5)) != std::string::npos);
    }
  }
  SUBCASE("bad magic") {
    bytes[3] = 'X';
    CHECK_THROWS_AS(deserialize_recording(bytes, "x"), FormatError);
  }
  SUBCASE("bad version") {
    bytes[8] = 9;
    CHECK_THROWS_AS(deserialize_recording(bytes, "x"), FormatError);
  }
  SUBCASE("label outside left/right") {
    bytes[8 + 16 + 6 + 6 + 4] = 2;
    CHECK_THROWS_AS(deserialize_recording(bytes, "x"), FormatError);
  }
  SUBCASE("NaN samples") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
    CHECK_THROWS_AS(deserialize_recording(bytes, "x"), ValidationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(ingest("/nonexistent/S01.asadeeg"), IoError);
  }
}

TEST_CASE("CSV fixture import") {
  const auto dir = scratch_dir("csv");
  {
    std::ofstream csv(dir / "trial.csv");
    csv << "time,Fz,Cz\n0,1.5,-2\n0.00390625,2.5,-3\n0.0078125,3.5,-4\n";
    std::ofstream side(dir / "trial.labels");
    side << "# attended side\nlabel left\ntrial_id 3\n";
  }
  const auto rec = import_csv(dir / "trial.csv", dir / "trial.labels");
  CHECK(rec.fs() == 256.0);
  CHECK(rec.channel_labels() == std::vector<std::string>{"Fz", "Cz"});
  CHECK(rec.trials[0].trial_id == 3);
  CHECK(rec.trials[0].label == kLeft);
  CHECK(rec.trials[0].buffer.samples == std::vector<double>{1.5, 2.5, 3.5, -2, -3, -4});
}

TEST_CASE("window slicing arithmetic") {
  const auto& map = one_channel_map();
  SUBCASE("48 minutes of 1 s windows") {
    const auto rec = constant_recording("S", {720, 720, 720, 720}, map);
    const auto sliced = slice_windows(rec, 1.0, map);
    CHECK(sliced.windows.size() == 2880);
    CHECK(sliced.discarded_samples == 0);
    CHECK(sliced.windows[5].grid.shape() == Shape{10, 11, 128});
  }
  SUBCASE("exact and remainder cases") {
    const auto rec = constant_recording("S", {130}, map);
    const auto ten = slice_windows(rec, 10.0, map);
    CHECK(ten.windows.size() == 13);
    CHECK(ten.discarded_samples == 0);
    const auto sixty = slice_windows(rec, 60.0, map);
    CHECK(sixty.windows.size() == 2);
    CHECK(sixty.discarded_samples == 10 * 128);
  }
  SUBCASE("short trials warn and contribute nothing") {
    const auto rec = constant_recording("S", {0.5, 3.0}, map);
    const auto sliced = slice_windows(rec, 1.0, map);
    CHECK(sliced.windows.size() == 3);
    CHECK(sliced.warnings.size() == 1);
  }
  SUBCASE("windows are contiguous and carry their trial label") {
    const auto rec = constant_recording("S", {3, 2}, map);
    const auto sliced = slice_windows(rec, 1.0, map);
    REQUIRE(sliced.windows.size() == 5);
    const std::size_t cell = 4 * 11 + 5;
    for (std::size_t w = 0; w < 3; ++w) {
      CHECK(sliced.windows[w].label == rec.trials[0].label);
      CHECK(sliced.windows[w].window_index == w);
      for (std::size_t t = 0; t < 128; ++t)
        CHECK(sliced.windows[w].grid[cell * 128 + t] == float(rec.trials[0].buffer.samples[w * 128 + t]));
    }
    CHECK(sliced.windows[4].trial_id == 1);
  }
  CHECK_THROWS_AS(window_samples(0.001), ValidationError);
  CHECK(window_samples(10.0) == 1280);
}

TEST_CASE("fold sizes for the documented cases") {
  CHECK(make_folds(2880, 1).fold_sizes() == std::vector<std::size_t>(5, 576));
  CHECK(make_folds(5760, 1).fold_sizes() == std::vector<std::size_t>(5, 1152));
  CHECK(make_folds(7, 1).fold_sizes() == std::vector<std::size_t>{2, 2, 1, 1, 1});
  CHECK_THROWS_AS(make_folds(4, 1), ValidationError);
  const auto a = make_folds(100, 42), b = make_folds(100, 42);
  CHECK(a.fold_of == b.fold_of);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(a.rounds[f].train == b.rounds[f].train);
    CHECK(a.rounds[f].val == b.rounds[f].val);
  }
}

TEST_CASE("fold plans are partitions without leakage over many seeds") {
  Rng sizes(77);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::size_t n = 5 + sizes.below(400);
    const auto plan = make_folds(n, seed);
    CHECK_NOTHROW(plan.validate());
    std::vector<int> seen(n, 0);
    for (std::size_t f = 0; f < 5; ++f)
      for (auto i : plan.fold_members(f)) ++seen[i];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    for (const auto& round : plan.rounds) {
      std::set<std::size_t> test(round.test.begin(), round.test.end());
      std::set<std::size_t> train(round.train.begin(), round.train.end());
      for (auto i : round.val) CHECK_FALSE(train.count(i));
      for (auto i : round.train) CHECK_FALSE(test.count(i));
      for (auto i : round.val) CHECK_FALSE(test.count(i));
      CHECK(round.train.size() + round.val.size() + round.test.size() == n);
      CHECK(round.val.size() == validation_size(round.train.size() + round.val.size()));
    }
  }
}

TEST_CASE("group-by-trial folds keep trials whole") {
  const auto& map = one_channel_map();
  std::vector<DecisionWindow> windows;
  for (const char* s : {"S1", "S2"}) {
    auto sliced = slice_windows(constant_recording(s, {7, 5, 9, 6, 8, 4, 7, 5}, map), 1.0, map);
    for (auto& w : sliced.windows) windows.push_back(std::move(w));
  }
  const auto plan = make_folds(windows, 3, true);
  CHECK(plan.grouped_by_trial);
  CHECK_NOTHROW(plan.validate());
  std::map<std::pair<std::string, std::uint32_t>, std::set<std::size_t>> folds_of_trial;
  for (std::size_t i = 0; i < windows.size(); ++i)
    folds_of_trial[{windows[i].subject_id, windows[i].trial_id}].insert(plan.fold_of[i]);
  for (const auto& [trial, f] : folds_of_trial) CHECK(f.size() == 1);
}

TEST_CASE("metrics bookkeeping") {
  const std::vector<int> labels{0, 1, 1, 0, 1};
  const auto perfect = score_decisions(labels, labels);
  CHECK(perfect.accuracy == 1.0);
  const std::vector<int> pred{0, 0, 1, 1, 1};
  const auto m = score_decisions(pred, labels);
  CHECK(m.correct == 3);
  CHECK(m.accuracy == 3.0 / 5.0);
  CHECK(m.class_accuracy[0] == 0.5);
  CHECK(m.class_accuracy[1] == 2.0 / 3.0);
  CHECK_THROWS_AS(score_decisions(std::vector<int>{}, std::vector<int>{}), ValidationError);

  Rng rng(5);
  const std::size_t n = 4000;
  std::vector<int> coin(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    coin[i] = static_cast<int>(rng.below(2));
    truth[i] = static_cast<int>(i % 2);
  }
  const double acc = score_decisions(coin, truth).accuracy;
  CHECK(std::abs(acc - 0.5) <= 3 * 0.5 / std::sqrt(double(n)));

  const std::vector<double> vals{0.9, 0.8, 1.0};
  const auto s = summarize(vals);
  CHECK(s.mean == doctest::Approx(0.9));
  CHECK(s.sd == doctest::Approx(0.1));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto windows = blob_windows(40, 16, 1);
  models::ModelSpec spec;
  spec.kind = models::ModelKind::kCnn3d;
  spec.samples = 16;
  auto model = models::build_model<float>(spec, 3);
  const auto before = models::serialize_checkpoint(models::capture_checkpoint(model));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 3;
  cfg.patience = 10;
  const auto result = train(model, windows, range(0, 32), range(32, 40), cfg, topo::default_topology());
  CHECK(result.log.size() == 3);
  // Batch-norm-free model: the only state is parameters, so the bytes must match.
  const auto after = models::capture_checkpoint(model);
  const auto original = models::deserialize_checkpoint(before);
  for (std::size_t r = 0; r < original.records.size(); ++r)
    CHECK(after.records[r].values == original.records[r].values);
}

TEST_CASE("zero epochs return the initialization") {
  const auto windows = blob_windows(20, 16, 1);
  models::ModelSpec spec;
  spec.kind = models::ModelKind::kDenseNet2d;
  spec.densenet.growth_rate = 4;
  auto model = models::build_model<float>(spec, 6);
  const auto init = models::capture_checkpoint(model);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto result = train(model, windows, range(0, 16), range(16, 20), cfg, topo::default_topology());
  CHECK(result.log.empty());
  CHECK(result.checkpoint.records == init.records);
}

TEST_CASE("separable toy windows are learned") {
  const auto windows = blob_windows(300, 16, 2);
  const auto train_idx = range(0, 240), val_idx = range(240, 300);

  // Logistic oracle on the two cell means confirms separability first.
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (auto i : train_idx) {
    feats.push_back({cell_mean(windows[i], 2 * 11 + 2), cell_mean(windows[i], 2 * 11 + 8)});
    labels.push_back(windows[i].label);
  }
  const auto logistic = fit_logistic(feats, labels);
  std::size_t ok = 0;
  for (auto i : val_idx) {
    const std::vector<double> f{cell_mean(windows[i], 2 * 11 + 2), cell_mean(windows[i], 2 * 11 + 8)};
    ok += logistic.predict(f) == windows[i].label;
  }
  REQUIRE(double(ok) / double(val_idx.size()) >= 0.99);

  models::ModelSpec spec;
  spec.kind = models::ModelKind::kCnn3d;
  spec.samples = 16;
  auto model = models::build_model<float>(spec, 4);
  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.seed = 9;
  const auto result = train(model, windows, train_idx, val_idx, cfg, topo::default_topology());
  double best = 0.0;
  for (const auto& e : result.log) best = std::max(best, e.val_accuracy);
  CHECK(best >= 0.99);
  CHECK(evaluate(model, windows, val_idx, topo::default_topology()).accuracy >= 0.99);
}

TEST_CASE("training is deterministic and guards against divergence") {
  const auto windows = blob_windows(60, 16, 3);
  models::ModelSpec spec;
  spec.kind = models::ModelKind::kDenseNet2d;
  spec.densenet.growth_rate = 4;
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 11;
  cfg.slices_per_window = 2;
  auto run = [&] {
    auto m = models::build_model<float>(spec, 5);
    const auto r = train(m, windows, range(0, 48), range(48, 60), cfg, topo::default_topology());
    return std::make_pair(models::serialize_checkpoint(r.checkpoint), r.log.back().val_loss);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  auto poisoned = windows;
  std::fill_n(poisoned[3].grid.data().begin(), 16 * 110, std::numeric_limits<float>::infinity());
  const auto dir = scratch_dir("diverge");
  cfg.dump_dir = dir;
  auto m = models::build_model<float>(spec, 5);
  CHECK_THROWS_AS(train(m, poisoned, range(0, 48), range(48, 60), cfg, topo::default_topology()), NumericError);
  CHECK(fs::exists(dir / "train-diverged.ckpt"));
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.trial_length_s = 30.0;
  spec.trials_per_subject = 4;
  const auto a = synthesize(spec);
  const auto b = synthesize(spec);
  REQUIRE(a.size() == 2);
  CHECK(a[0].subject_id == "S01");
  CHECK(serialize_recording(a[0]) == serialize_recording(b[0]));
  CHECK(serialize_recording(a[1]) == serialize_recording(b[1]));
  for (const auto& rec : a) {
    int left = 0;
    for (const auto& t : rec.trials) left += t.label == kLeft;
    CHECK(left == 2);
  }
  spec.asymmetry_ratio = 0.5;
  CHECK_THROWS_AS(synthesize(spec), ValidationError);
}

TEST_CASE("synthetic label balance over many windows") {
  SyntheticSpec spec;
  spec.n_subjects = 3;
  spec.trials_per_subject = 6;
  spec.trial_length_s = 60.0;
  spec.fs = 128.0;
  std::size_t left = 0, total = 0;
  for (const auto& rec : synthesize(spec)) {
    for (const auto& t : rec.trials) {
      const std::size_t n = t.buffer.n_samples / 128;
      total += n;
      if (t.label == kLeft) left += n;
    }
  }
  CHECK(total >= 1000);
  CHECK(std::abs(double(left) / double(total) - 0.5) <= 0.02);
}

TEST_CASE("band-power oracle sees the lateralization only when it exists") {
  SyntheticSpec spec;
  spec.trial_length_s = 120.0;
  const auto lateral = synthesize(spec);
  const auto raw = band_power_oracle(lateral, topo::default_topology(), 1.0, 3, PowerFeature::kChannelPower);
  CHECK(raw.accuracy >= 0.95);

  auto processed = lateral;
  for (auto& rec : processed)
    for (auto& t : rec.trials) t.buffer = dsp::preprocess(t.buffer);
  const auto pooled = band_power_oracle(processed, topo::default_topology(), 1.0, 3, PowerFeature::kPooledPower);
  CHECK(pooled.accuracy >= 0.95);

  spec.asymmetry_ratio = 1.0;
  const auto flat = band_power_oracle(synthesize(spec), topo::default_topology(), 1.0, 3,
                                      PowerFeature::kChannelPower);
  const double sigma = 0.5 / std::sqrt(double(flat.test_windows));
  CHECK(std::abs(flat.accuracy - 0.5) <= 3 * sigma);
}

TEST_CASE("pipeline output is invariant to channel order") {
  SyntheticSpec spec;
  spec.n_subjects = 1;
  spec.trials_per_subject = 2;
  spec.trial_length_s = 8.0;
  const auto rec = synthesize(spec)[0];
  const auto& map = topo::default_topology();

  std::vector<std::size_t> perm(rec.channel_labels().size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(12);
  rng.shuffle(std::span<std::size_t>(perm));
  EegRecording shuffled = rec;
  for (auto& t : shuffled.trials) {
    dsp::RecordingBuffer buf(t.buffer.fs, {}, t.buffer.n_samples);
    buf.samples.clear();
    for (auto c : perm) {
      buf.channel_labels.push_back(t.buffer.channel_labels[c]);
      const auto ch = t.buffer.channel(c);
      buf.samples.insert(buf.samples.end(), ch.begin(), ch.end());
    }
    t.buffer = std::move(buf);
  }
  // Topology entries permuted the same way.
  std::vector<topo::TopologyEntry> entries;
  for (auto c : perm) entries.push_back(map.entries()[c]);
  const topo::TopologyMap permuted_map(entries, "permuted");

  auto prep = [](EegRecording r) {
    for (auto& t : r.trials) t.buffer = dsp::preprocess(t.buffer);
    return r;
  };
  const auto a = slice_windows(prep(rec), 1.0, map);
  const auto b = slice_windows(prep(shuffled), 1.0, permuted_map);
  REQUIRE(a.windows.size() == b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) CHECK(a.windows[i].grid == b.windows[i].grid);
}

TEST_CASE("dependent protocol trains one model per subject and fold") {
  SyntheticSpec spec;
  spec.trial_length_s = 20.0;
  auto recs = synthesize(spec);
  for (auto& rec : recs)
    for (auto& t : rec.trials) t.buffer = dsp::preprocess(t.buffer);
  ProtocolConfig cfg;
  cfg.model.kind = models::ModelKind::kCnnBaseline;
  cfg.train.max_epochs = 1;
  cfg.seed = 4;
  const auto report = run_protocol(recs, topo::default_topology(), cfg);
  CHECK(report.runs.size() == 10);
  double sum = 0.0;
  for (const auto& r : report.runs) {
    sum += r.metrics.accuracy;
    CHECK(r.metrics.accuracy >= 0.0);
    CHECK(r.metrics.accuracy <= 1.0);
    CHECK(r.metrics.accuracy == double(r.metrics.correct) / double(r.metrics.decisions));
  }
  CHECK(std::abs(report.mean_accuracy() - sum / 10.0) <= 1e-12);
  std::ostringstream csv;
  report.write_csv(csv);
  const std::string text = csv.str();
  CHECK(text.rfind(std::string(kReportHeader) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);

  cfg.mode = ProtocolMode::kIndependent;
  cfg.folds = {0, 3};
  const auto pooled = run_protocol(recs, topo::default_topology(), cfg);
  CHECK(pooled.runs.size() == 2);
  CHECK(pooled.runs[0].subject == "pooled");
  CHECK(pooled.per_subject().size() == 2);
}
