#include "asad/harness/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "asad/error.hpp"
#include "asad/rng.hpp"

namespace asad::harness {

namespace {

constexpr std::uint64_t kFoldStream = 0xF07D;
constexpr std::uint64_t kRunStream = 0x7247;

struct Job {
  std::size_t group;
  std::string subject;
  const std::vector<DecisionWindow>* windows;
  const FoldPlan* plan;
  std::size_t fold;
};

std::vector<SubjectAccuracy> split_by_subject(const std::vector<DecisionWindow>& windows,
                                              const std::vector<std::size_t>& test,
                                              models::ModelGraph<float>& model,
                                              const topo::TopologyMap& topology) {
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i : test) by_subject[windows[i].subject_id].push_back(i);
  std::vector<SubjectAccuracy> out;
  for (const auto& [subject, idx] : by_subject) {
    out.push_back({subject, evaluate(model, windows, idx, topology).accuracy});
  }
  return out;
}

}  // namespace

std::string to_string(ProtocolMode mode) {
  return mode == ProtocolMode::kDependent ? "dependent" : "independent";
}

ProtocolMode parse_protocol_mode(const std::string& text) {
  if (text == "dependent") return ProtocolMode::kDependent;
  if (text == "independent") return ProtocolMode::kIndependent;
  throw ValidationError("mode must be 'dependent' or 'independent', got '" + text + "'");
}

double ProtocolReport::mean_accuracy() const {
  if (runs.empty()) throw ValidationError("report has no runs");
  double sum = 0.0;
  for (const auto& r : runs) sum += r.metrics.accuracy;
  return sum / static_cast<double>(runs.size());
}

std::vector<SubjectAccuracy> ProtocolReport::per_subject() const {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& run : runs) {
    for (const auto& s : run.subject_accuracy) {
      acc[s.subject].first += s.accuracy;
      acc[s.subject].second += 1;
    }
  }
  std::vector<SubjectAccuracy> out;
  for (const auto& [subject, v] : acc) {
    out.push_back({subject, v.first / static_cast<double>(v.second)});
  }
  return out;
}

Summary ProtocolReport::subject_summary() const {
  std::vector<double> values;
  for (const auto& s : per_subject()) values.push_back(s.accuracy);
  return summarize(values);
}

void ProtocolReport::write_csv(std::ostream& out) const {
  out << kReportHeader << '\n' << std::setprecision(17);
  for (const auto& r : runs) {
    out << r.subject << ',' << r.fold << ',' << r.model << ',' << r.duration_s << ','
        << r.metrics.accuracy << '\n';
  }
}

void ProtocolReport::write_log_csv(std::ostream& out) const {
  out << "subject,fold,stage,epoch,train_loss,val_loss,val_accuracy\n" << std::setprecision(17);
  for (const auto& r : runs) {
    const auto emit = [&](const char* stage, const std::vector<EpochLog>& log) {
      for (const auto& e : log) {
        out << r.subject << ',' << r.fold << ',' << stage << ',' << e.epoch << ','
            << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy << '\n';
      }
    };
    emit("pretrain2d", r.pretrain_log);
    emit("train", r.log);
  }
}

FoldPlan protocol_folds(const std::vector<DecisionWindow>& windows, std::uint64_t seed,
                        std::size_t group, bool group_by_trial) {
  return make_folds(windows, derive_seed(seed, kFoldStream, group), group_by_trial);
}

ProtocolReport run_protocol(const std::vector<EegRecording>& recordings,
                            const topo::TopologyMap& topology, const ProtocolConfig& config) {
  if (recordings.empty()) throw ValidationError("protocol needs at least one recording");
  models::ModelSpec spec = config.model;
  spec.samples = window_samples(config.duration_s);
  spec.grid_height = topology.height();
  spec.grid_width = topology.width();
  spec.channels = topology.size();
  models::build_model<float>(spec, 0);  // fail fast on an impossible shape trace

  std::vector<std::string> subjects;
  std::vector<std::vector<DecisionWindow>> pools;
  const auto log = [&](const std::string& m) {
    if (config.progress) config.progress(m);
  };
  for (const auto& rec : recordings) {
    auto sliced = slice_windows(rec, config.duration_s, topology);
    for (const auto& w : sliced.warnings) log("warning: " + w);
    if (config.mode == ProtocolMode::kDependent || pools.empty()) {
      pools.emplace_back();
      subjects.push_back(config.mode == ProtocolMode::kDependent ? rec.subject_id : "pooled");
    }
    auto& pool = pools.back();
    for (auto& w : sliced.windows) pool.push_back(std::move(w));
  }

  std::vector<FoldPlan> plans;
  for (std::size_t g = 0; g < pools.size(); ++g) {
    plans.push_back(protocol_folds(pools[g], config.seed, g, config.group_by_trial));
    plans.back().validate();
  }
  std::vector<std::size_t> folds = config.folds;
  if (folds.empty()) {
    for (std::size_t f = 0; f < kFoldCount; ++f) folds.push_back(f);
  }
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < pools.size(); ++g) {
    for (std::size_t f : folds) {
      if (f >= plans[g].rounds.size()) throw ValidationError("fold index " + std::to_string(f) + " out of range");
      jobs.push_back({g, subjects[g], &pools[g], &plans[g], f});
    }
  }

  ProtocolReport report;
  report.mode = config.mode;
  report.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const Job& job = jobs[j];
        const CvRound& round = job.plan->rounds[job.fold];
        TrainConfig train = config.train;
        train.seed = derive_seed(config.seed, kRunStream, job.group, job.fold);
        const std::string tag = job.subject + "/fold" + std::to_string(job.fold);
        if (config.progress) {
          train.on_epoch = [&, tag](const std::string& stage, const EpochLog& e) {
            std::ostringstream m;
            m << tag << ' ' << stage << " epoch " << e.epoch << " train_loss " << e.train_loss
              << " val_loss " << e.val_loss << " val_acc " << e.val_accuracy;
            log(m.str());
          };
        }
        std::optional<models::Checkpoint> pretrained;
        if (!config.pretrained_dir.empty() && spec.kind == models::ModelKind::kDenseNet3d) {
          pretrained = models::load_checkpoint(config.pretrained_dir /
                                               (job.subject + "_densenet2d_fold" + std::to_string(job.fold) + ".ckpt"));
        }
        auto trained = train_pipeline(spec, *job.windows, round.train, round.val, train, topology,
                                      config.bootstrap, pretrained ? &*pretrained : nullptr);
        auto model = models::instantiate<float>(trained.result.checkpoint);
        RunOutcome run;
        run.subject = job.subject;
        run.fold = job.fold;
        run.model = models::to_string(spec.kind);
        run.duration_s = config.duration_s;
        run.metrics = evaluate(model, *job.windows, round.test, topology);
        run.subject_accuracy = split_by_subject(*job.windows, round.test, model, topology);
        if (trained.pretrain) run.pretrain_log = trained.pretrain->log;
        run.log = trained.result.log;
        run.best_epoch = trained.result.best_epoch;
        run.checkpoint_bytes = models::serialize_checkpoint(trained.result.checkpoint);
        if (!config.checkpoint_dir.empty()) {
          models::save_checkpoint(trained.result.checkpoint,
                                  config.checkpoint_dir / (job.subject + "_" + run.model + "_fold" +
                                                           std::to_string(job.fold) + ".ckpt"));
        }
        log(tag + " test accuracy " + std::to_string(run.metrics.accuracy));
        report.runs[j] = std::move(run);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(config.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return report;
}

}  // namespace asad::harness
